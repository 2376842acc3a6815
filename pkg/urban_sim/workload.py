"""Constant-bit-rate datagram sources."""

import math
from typing import List

from .engine import SimTime
from .packets import DataHeader, Packet, PacketKind
from .scenario import FlowSpec


def creation_times(start: SimTime, stop: SimTime, rate: float, packet_size: int) -> List[SimTime]:
    """One creation instant every packet_size/rate seconds in [start, stop)."""
    if stop <= start:
        return []
    interval = packet_size / rate
    count = math.ceil((stop - start) / interval - 1e-9)
    return [start + k * interval for k in range(count)]


def generate_traffic(flow: FlowSpec) -> List[SimTime]:
    return creation_times(flow.start, flow.stop, flow.rate, flow.packet_size)


def make_data_packet(flow: FlowSpec, packet_id: int, created_at: SimTime, ttl: int, priority: int) -> Packet:
    header = DataHeader(
        flow=flow,
        path_id=-1,
        created_at=created_at,
        deadline=created_at + flow.qos.max_delay,
        priority=priority,
    )
    return Packet(PacketKind.DATA, packet_id, flow.src, flow.dst, ttl, header)
