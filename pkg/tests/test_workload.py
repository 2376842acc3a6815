import pytest

from urban_sim.packets import PacketKind
from urban_sim.scenario import FlowSpec, QosRequirement
from urban_sim.workload import creation_times, generate_traffic, make_data_packet


def test_cbr_flow_packet_count():
    flow = FlowSpec(src=0, dst=1, rate=80_000, packet_size=8000, start=0.0, stop=10.0)
    times = generate_traffic(flow)
    assert len(times) == 100
    assert times[0] == 0.0
    assert times[1] == pytest.approx(0.1)
    assert times[-1] < 10.0


def test_empty_interval_generates_nothing():
    assert creation_times(5.0, 5.0, 8000, 1000) == []
    assert creation_times(6.0, 5.0, 8000, 1000) == []


def test_partial_interval_rounds_up():
    times = creation_times(0.0, 1.05, 80_000, 8000)
    assert len(times) == 11
    assert times[-1] == pytest.approx(1.0)


def test_offset_start():
    times = creation_times(2.0, 3.0, 16_000, 8000)
    assert times == pytest.approx([2.0, 2.5])


def test_data_packet_deadline_and_header():
    flow = FlowSpec(flow_id=4, src=2, dst=7, rate=1000, qos=QosRequirement(max_delay=0.25))
    packet = make_data_packet(flow, packet_id=11, created_at=3.0, ttl=12, priority=1)
    assert packet.kind is PacketKind.DATA
    assert (packet.id, packet.src, packet.dst, packet.ttl) == (11, 2, 7, 12)
    assert packet.flow_id == 4
    assert packet.body.deadline == pytest.approx(3.25)
    assert packet.body.priority == 1
    assert packet.payload_bits() == flow.packet_size
