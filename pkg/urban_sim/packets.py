"""Packet model shared by routing, QoS and the radio.

One `Packet` type carries every control and data unit; the kind-specific
fields live in a body dataclass. Sizes are modeled in bits so the radio can
compute serialization time.
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional, Tuple, Union

from .scenario import FlowSpec, QosRequirement

BROADCAST = -1
SELF = -2

# Per-kind payload sizes in bits, on top of the radio frame overhead
HELLO_BITS = 64
RREQ_BASE_BITS = 192
RREP_BASE_BITS = 192
RERR_BASE_BITS = 64
ADDRESS_BITS = 32
RERR_ENTRY_BITS = 64


class PacketKind(str, Enum):
    HELLO = "hello"
    HELLO_REPLY = "hello_reply"
    RREQ = "rreq"
    RREP = "rrep"
    RERR = "rerr"
    DATA = "data"


RreqId = Tuple[int, int]
PathKey = Tuple[int, int]  # (flow_dst, path_id)


@dataclass
class PathRecord:
    nodes: Tuple[int, ...]
    est_delay: float
    bottleneck_bw: float
    hop_delays: Tuple[float, ...] = ()
    path_id: int = -1
    established_at: float = 0.0

    @property
    def hops(self) -> int:
        return len(self.nodes) - 1

    @property
    def intermediates(self) -> Tuple[int, ...]:
        return self.nodes[1:-1]

    def satisfies(self, qos: QosRequirement) -> bool:
        return (
            self.est_delay <= qos.max_delay
            and self.hops <= qos.max_hops
            and self.bottleneck_bw >= qos.min_bw
        )


@dataclass
class RreqBody:
    rreq_id: RreqId
    traversed: List[int]
    qos_threshold: QosRequirement
    acc_delay: float
    bottleneck_bw: float
    hop_delays: List[float]
    flow: Optional[FlowSpec] = None
    max_paths: int = 1
    # Local repair: scoped search for `target` avoiding `exclude`
    repair: bool = False
    target: Optional[int] = None
    exclude: Tuple[int, ...] = ()
    repair_key: Optional[PathKey] = None

    @property
    def acc_hops(self) -> int:
        return len(self.traversed)


@dataclass
class RrepBody:
    rreq_id: RreqId
    path: PathRecord
    flow_dst: int
    flow: Optional[FlowSpec] = None
    qos: Optional[QosRequirement] = None
    # Local repair: `path` is the detour (repairer .. target), `remainder` continues after target
    repair: bool = False
    remainder: Tuple[int, ...] = ()
    # Rreps the destination sent for this rreq_id
    selected: int = 1
    # Carries a spliced path to the nodes already on it
    path_update: bool = False


@dataclass
class RerrBody:
    broken: List[PathKey]
    reporter: int


@dataclass
class DataHeader:
    flow: FlowSpec
    path_id: int
    created_at: float
    deadline: float
    remaining_hops: int = 0
    priority: int = 0
    visited: List[int] = field(default_factory=list)


Body = Union[None, RreqBody, RrepBody, RerrBody, DataHeader]


@dataclass
class Packet:
    kind: PacketKind
    id: int
    src: int
    dst: int
    ttl: int
    body: Body = None

    @property
    def is_control(self) -> bool:
        return self.kind is not PacketKind.DATA

    @property
    def flow_id(self) -> Optional[int]:
        body = self.body
        if isinstance(body, DataHeader):
            return body.flow.flow_id
        if isinstance(body, (RreqBody, RrepBody)) and body.flow is not None:
            return body.flow.flow_id
        return None

    def payload_bits(self) -> int:
        body = self.body
        if self.kind in (PacketKind.HELLO, PacketKind.HELLO_REPLY):
            return HELLO_BITS
        if isinstance(body, RreqBody):
            return RREQ_BASE_BITS + ADDRESS_BITS * len(body.traversed)
        if isinstance(body, RrepBody):
            return RREP_BASE_BITS + ADDRESS_BITS * (len(body.path.nodes) + len(body.remainder))
        if isinstance(body, RerrBody):
            return RERR_BASE_BITS + RERR_ENTRY_BITS * len(body.broken)
        if isinstance(body, DataHeader):
            return body.flow.packet_size
        return 0
