"""Reactive multipath QoS routing.

Each node runs one RoutingAgent:

- Hello / HelloReply exchange keeps the NeighborTable; only replies create
  or refresh entries and Hellos are never forwarded.
- A source with no usable cached path floods an Rreq carrying the traversed
  hop list and the accumulated QoS cost. Intermediate nodes prune copies that
  can no longer meet the requirement.
- The destination collects copies for `reply_window`, picks a node-disjoint
  set of QoS-satisfying paths and unicasts one Rrep per path back along it.
  Each Rrep installs ForwardingEntries keyed by (flow_dst, path_id).
- A broken next hop triggers a scoped local repair toward the next node on
  the downstream remainder; the detour is spliced in only if the whole path
  still meets the QoS requirement, and the spliced path is then announced to
  both ends. Otherwise an Rerr travels upstream and the source fails over to
  a surviving path or rediscovers.
"""

import logging
from collections import deque
from dataclasses import dataclass, field, replace
from typing import TYPE_CHECKING, Deque, Dict, Iterable, List, Optional, Sequence, Set, Tuple

from .engine import EventKind, EventHandle, SimTime
from .packets import (
    BROADCAST,
    SELF,
    DataHeader,
    Packet,
    PacketKind,
    PathKey,
    PathRecord,
    RerrBody,
    RreqBody,
    RreqId,
    RrepBody,
)
from .scenario import FlowSpec, QosRequirement

if TYPE_CHECKING:
    import numpy as np
    from .node import Node

logger = logging.getLogger(__name__)


# --- Tables ---

class NeighborTable:
    """Neighbor id -> time the last HelloReply from it was heard."""

    def __init__(self) -> None:
        self.entries: Dict[int, SimTime] = {}

    def __contains__(self, node_id: int) -> bool:
        return node_id in self.entries

    def __len__(self) -> int:
        return len(self.entries)

    def ids(self) -> List[int]:
        return sorted(self.entries)

    def refresh(self, node_id: int, now: SimTime) -> bool:
        """Returns True when the neighbor is new."""
        is_new = node_id not in self.entries
        self.entries[node_id] = now
        return is_new

    def remove(self, node_id: int) -> bool:
        return self.entries.pop(node_id, None) is not None

    def purge(self, now: SimTime, timeout: float) -> List[int]:
        lost = sorted(n for n, last in self.entries.items() if now - last > timeout)
        for node_id in lost:
            del self.entries[node_id]
        return lost


@dataclass
class ForwardingEntry:
    flow_dst: int
    path_id: int
    previous_hop: int
    next_hop: int
    downstream_remainder: Tuple[int, ...]
    qos: QosRequirement
    # Full source..destination path; None on detour nodes installed by a repair
    path: Optional[PathRecord] = None
    interface_id: int = 0
    flows: Set[int] = field(default_factory=set)

    @property
    def key(self) -> PathKey:
        return (self.flow_dst, self.path_id)


@dataclass
class _CopyState:
    seen_at: SimTime
    forwarded: int = 0
    first_hops: Set[int] = field(default_factory=set)


@dataclass
class _Collection:
    qos: QosRequirement
    max_paths: int
    flow: Optional[FlowSpec]
    opened_at: SimTime
    candidates: List[PathRecord] = field(default_factory=list)
    closed: bool = False


@dataclass
class _Discovery:
    flow: FlowSpec
    rreq_id: RreqId
    attempts: int = 0
    replies: int = 0
    handle: Optional[EventHandle] = None


@dataclass
class _Repair:
    rreq_id: RreqId
    target: int
    lost: int
    handle: Optional[EventHandle] = None
    buffer: Deque[Packet] = field(default_factory=deque)


# --- Path selection ---

def select_disjoint_paths(candidates: Iterable[PathRecord], qos: QosRequirement, max_paths: int) -> List[PathRecord]:
    """Greedy node-disjoint selection: lowest est_delay first, stable on ties.

    A path is accepted iff it meets `qos`, has no repeated node and shares no
    intermediate node with a path accepted before it.
    """
    chosen: List[PathRecord] = []
    used: Set[int] = set()
    seen: Set[Tuple[int, ...]] = set()
    for path in sorted(candidates, key=lambda p: p.est_delay):
        if len(chosen) >= max_paths:
            break
        if path.nodes in seen or len(set(path.nodes)) != len(path.nodes) or not path.satisfies(qos):
            continue
        intermediates = set(path.intermediates)
        if intermediates & used:
            continue
        chosen.append(path)
        used |= intermediates
        seen.add(path.nodes)
    return chosen


class RoutingAgent:
    def __init__(self, node: "Node", rng: "np.random.Generator"):
        self.node = node
        self.id = node.id
        self.engine = node.engine
        self.cfg = node.cfg.routing
        self.rng = rng

        self.neighbors = NeighborTable()
        self.table: Dict[PathKey, ForwardingEntry] = {}
        self.route_cache: Dict[int, List[PathRecord]] = {}

        self._seq = 0
        self._next_path_id = 0
        self._seen_rreq: Dict[RreqId, _CopyState] = {}
        self._collections: Dict[RreqId, _Collection] = {}
        self._answered_repairs: Dict[RreqId, SimTime] = {}
        self._discoveries: Dict[int, _Discovery] = {}
        self._pending: Dict[int, Deque[Packet]] = {}
        self._unroutable_until: Dict[int, SimTime] = {}
        self._rr_counter: Dict[int, int] = {}
        self._repairs: Dict[PathKey, _Repair] = {}
        # Rreq bookkeeping outlives any copy still in flight, then is forgotten
        self._history_retention = 2.0 * (
            max(self.cfg.discovery_timeout, self.cfg.repair_timeout) + self.cfg.reply_window
        )

    # --- Helpers ---

    def _now(self) -> SimTime:
        return self.engine.now()

    def _hop_estimate(self) -> float:
        qos = self.node.qos
        return qos.queue_delay_estimate() + qos.nominal_serialization

    def _send(self, packet: Packet, next_hop: int) -> None:
        self.node.link.send_control(packet, next_hop)

    def _new_packet(self, kind: PacketKind, dst: int, ttl: int, body=None) -> Packet:
        return Packet(kind, self.node.next_packet_id(), self.id, dst, ttl, body)

    # --- Hello protocol ---

    def start(self) -> None:
        phase = float(self.rng.uniform(0.0, self.cfg.hello_interval))
        self.engine.schedule(self._now() + phase, self.id, EventKind.HELLO_TIMER, None)

    def on_hello_timer(self) -> None:
        self.purge_neighbors(self._now())
        self.forget_history(self._now())
        self.emit_hello()
        self.engine.schedule(self._now() + self.cfg.hello_interval, self.id, EventKind.HELLO_TIMER, None)

    def emit_hello(self) -> None:
        self._send(self._new_packet(PacketKind.HELLO, BROADCAST, 1), BROADCAST)

    def handle_hello(self, hello: Packet) -> None:
        self._send(self._new_packet(PacketKind.HELLO_REPLY, hello.src, 1), hello.src)

    def handle_hello_reply(self, reply: Packet) -> None:
        if self.neighbors.refresh(reply.src, self._now()):
            self.node.trace("neighbor_add", neighbor=reply.src)

    def purge_neighbors(self, now: SimTime) -> List[int]:
        lost = self.neighbors.purge(now, self.cfg.neighbor_timeout)
        for neighbor in lost:
            self.node.trace("neighbor_lost", neighbor=neighbor, reason="timeout")
            self.on_link_failure(neighbor)
        return lost

    def forget_history(self, now: SimTime) -> int:
        """Drops Rreq copy state, closed collections and answered repairs older than the retention."""
        horizon = now - self._history_retention
        stale = [r for r, s in self._seen_rreq.items() if s.seen_at < horizon]
        for rreq_id in stale:
            del self._seen_rreq[rreq_id]
        closed = [r for r, c in self._collections.items() if c.closed and c.opened_at < horizon]
        for rreq_id in closed:
            del self._collections[rreq_id]
        answered = [r for r, at in self._answered_repairs.items() if at < horizon]
        for rreq_id in answered:
            del self._answered_repairs[rreq_id]
        return len(stale) + len(closed) + len(answered)

    def on_motion(self, moving: bool) -> None:
        if not moving and self.cfg.hello_on_motion_stop and self.node.alive:
            self.emit_hello()

    # --- Dispatch ---

    def receive(self, packet: Packet, sender: int) -> None:
        kind = packet.kind
        if kind is PacketKind.HELLO:
            self.handle_hello(packet)
        elif kind is PacketKind.HELLO_REPLY:
            self.handle_hello_reply(packet)
        elif kind is PacketKind.RREQ:
            self.handle_rreq(packet)
        elif kind is PacketKind.RREP:
            self.handle_rrep(packet)
        elif kind is PacketKind.RERR:
            self.handle_rerr(packet, sender)
        else:
            self.receive_data(packet)

    # --- Route discovery ---

    def usable_paths(self, dst: int, qos: QosRequirement) -> List[PathRecord]:
        return [
            path for path in self.route_cache.get(dst, [])
            if path.satisfies(qos) and (dst, path.path_id) in self.table
        ]

    def initiate_discovery(self, dst: int, flow: FlowSpec) -> RreqId:
        self._seq += 1
        rreq_id = (self.id, self._seq)
        discovery = self._discoveries.get(dst)
        if discovery is None:
            discovery = self._discoveries[dst] = _Discovery(flow, rreq_id)
        else:
            discovery.rreq_id = rreq_id
            discovery.replies = 0
        discovery.handle = self.engine.schedule(
            self._now() + self.cfg.discovery_timeout, self.id, EventKind.DISCOVERY_TIMEOUT, (dst, rreq_id)
        )
        hop = self._hop_estimate()
        body = RreqBody(
            rreq_id=rreq_id,
            traversed=[self.id],
            qos_threshold=flow.qos,
            acc_delay=hop,
            bottleneck_bw=self.node.qos.ledger.residual,
            hop_delays=[hop],
            flow=flow,
            max_paths=self.cfg.max_paths if flow.multipath else 1,
        )
        packet = self._new_packet(PacketKind.RREQ, dst, self.cfg.net_diameter_ttl, body)
        self.node.trace("rreq_init", packet.id, flow.flow_id, dst=dst, rreq=self._seq, attempt=discovery.attempts)
        self._send(packet, BROADCAST)
        return rreq_id

    def on_discovery_timeout(self, dst: int, rreq_id: RreqId) -> None:
        discovery = self._discoveries.get(dst)
        if discovery is None or discovery.rreq_id != rreq_id:
            return
        if self.usable_paths(dst, discovery.flow.qos):
            # Part of a multipath answer never arrived; carry on with the paths at hand
            self._finish_discovery(dst)
            return
        if discovery.attempts < self.cfg.max_discovery_retries:
            discovery.attempts += 1
            self.node.trace("discovery_retry", flow_id=discovery.flow.flow_id, dst=dst, attempt=discovery.attempts)
            self.initiate_discovery(dst, discovery.flow)
            return
        del self._discoveries[dst]
        self._unroutable_until[dst] = self._now() + self.cfg.unroutable_holdoff
        self.node.trace("unroutable", flow_id=discovery.flow.flow_id, dst=dst, until=self._unroutable_until[dst])
        for packet in self._pending.pop(dst, ()):
            self.node.finish(packet, "unroutable")

    def handle_rreq(self, packet: Packet) -> None:
        body: RreqBody = packet.body
        if self.id in body.traversed:
            return
        if body.repair:
            if self.id in body.exclude:
                return
            if self.id == body.target:
                self._answer_repair(packet)
                return
        elif self.id == packet.dst:
            self._collect(packet)
            return

        first_hop = body.traversed[1] if len(body.traversed) > 1 else self.id
        state = self._seen_rreq.get(body.rreq_id)
        if state is not None and (state.forwarded >= self.cfg.max_copies_per_rreq or first_hop in state.first_hops):
            return

        hop = self._hop_estimate()
        acc_delay = body.acc_delay + hop
        qos = body.qos_threshold
        ttl = packet.ttl - 1
        if ttl <= 0 or body.acc_hops + 1 > qos.max_hops or acc_delay > qos.max_delay:
            self.node.trace("rreq_prune", packet.id, packet.flow_id,
                            rreq=body.rreq_id[1], origin=body.rreq_id[0], ttl=ttl, hops=body.acc_hops)
            return

        if state is None:
            state = self._seen_rreq[body.rreq_id] = _CopyState(self._now())
        state.forwarded += 1
        state.first_hops.add(first_hop)
        forwarded = replace(
            body,
            traversed=body.traversed + [self.id],
            acc_delay=acc_delay,
            bottleneck_bw=min(body.bottleneck_bw, self.node.qos.ledger.residual),
            hop_delays=body.hop_delays + [hop],
        )
        self._send(Packet(PacketKind.RREQ, packet.id, packet.src, packet.dst, ttl, forwarded), BROADCAST)

    def _candidate(self, body: RreqBody) -> PathRecord:
        return PathRecord(
            nodes=tuple(body.traversed) + (self.id,),
            est_delay=body.acc_delay,
            bottleneck_bw=body.bottleneck_bw,
            hop_delays=tuple(body.hop_delays),
        )

    def _collect(self, packet: Packet) -> None:
        body: RreqBody = packet.body
        collection = self._collections.get(body.rreq_id)
        if collection is None:
            collection = self._collections[body.rreq_id] = _Collection(
                body.qos_threshold, body.max_paths, body.flow, self._now()
            )
            self.engine.schedule(self._now() + self.cfg.reply_window, self.id, EventKind.REPLY_WINDOW, body.rreq_id)
        if collection.closed:
            return
        candidate = self._candidate(body)
        if candidate.satisfies(collection.qos):
            collection.candidates.append(candidate)

    def on_reply_window(self, rreq_id: RreqId) -> List[PathRecord]:
        """Closes the collection for `rreq_id` and answers each selected path with one Rrep."""
        collection = self._collections.get(rreq_id)
        if collection is None or collection.closed:
            return []
        collection.closed = True
        selected = select_disjoint_paths(collection.candidates, collection.qos, collection.max_paths)
        flow_id = collection.flow.flow_id if collection.flow is not None else None
        self.node.trace("paths_selected", flow_id=flow_id, origin=rreq_id[0], rreq=rreq_id[1],
                        candidates=len(collection.candidates), count=len(selected),
                        paths="|".join("-".join(map(str, p.nodes)) for p in selected))
        now = self._now()
        for path in selected:
            path.path_id = self._next_path_id
            path.established_at = now
            self._next_path_id += 1
            rrep = RrepBody(rreq_id, path, self.id, collection.flow, collection.qos, selected=len(selected))
            packet = self._new_packet(PacketKind.RREP, path.nodes[0], len(path.nodes), rrep)
            self._send(packet, path.nodes[-2])
        return selected

    def handle_rrep(self, packet: Packet) -> None:
        body: RrepBody = packet.body
        nodes = body.path.nodes
        if self.id not in nodes:
            return
        i = nodes.index(self.id)
        if body.path_update:
            self._handle_path_update(packet, i)
            return
        if body.repair:
            self._handle_repair_rrep(packet, i)
            return
        if i == len(nodes) - 1:
            return

        flow = body.flow
        if self.node.cfg.qos.reservation_mode == "apriori" and flow is not None:
            if not self._reserve(flow, packet.id):
                self.node.trace("rrep_discard", packet.id, flow.flow_id, path_id=body.path.path_id)
                return
        entry = ForwardingEntry(
            flow_dst=body.flow_dst,
            path_id=body.path.path_id,
            previous_hop=nodes[i - 1] if i > 0 else SELF,
            next_hop=nodes[i + 1],
            downstream_remainder=tuple(nodes[i + 1:]),
            qos=body.qos,
            path=body.path,
        )
        if flow is not None and flow.flow_id in self.node.qos.ledger:
            entry.flows.add(flow.flow_id)
        self.table[entry.key] = entry
        self.node.trace("route_installed", packet.id, packet.flow_id,
                        dst=body.flow_dst, path_id=entry.path_id, next_hop=entry.next_hop)

        if i > 0:
            self._send(Packet(PacketKind.RREP, packet.id, packet.src, packet.dst, packet.ttl - 1, body), nodes[i - 1])
            return

        dst = body.flow_dst
        cached = self.route_cache.setdefault(dst, [])
        cached.append(body.path)
        cached.sort(key=lambda p: (p.est_delay, p.path_id))
        self._unroutable_until.pop(dst, None)
        discovery = self._discoveries.get(dst)
        if discovery is None:
            self._flush_pending(dst)
            return
        if discovery.rreq_id == body.rreq_id:
            discovery.replies += 1
            if discovery.replies < body.selected:
                if discovery.replies == 1:
                    # Sibling replies of a multipath answer left the destination together
                    self.engine.cancel(discovery.handle)
                    discovery.handle = self.engine.schedule(
                        self._now() + self.cfg.reply_window, self.id, EventKind.DISCOVERY_TIMEOUT,
                        (dst, discovery.rreq_id),
                    )
                return
        self._finish_discovery(dst)

    def _finish_discovery(self, dst: int) -> None:
        discovery = self._discoveries.pop(dst)
        self.engine.cancel(discovery.handle)
        self.node.trace("discovery_done", flow_id=discovery.flow.flow_id, dst=dst,
                        attempts=discovery.attempts + 1, paths=len(self.route_cache.get(dst, [])))
        self._flush_pending(dst)

    def _flush_pending(self, dst: int) -> None:
        for pending in self._pending.pop(dst, ()):
            self.route_from_source(pending)

    def _handle_path_update(self, packet: Packet, i: int) -> None:
        body: RrepBody = packet.body
        path = body.path
        nodes = path.nodes
        key = (body.flow_dst, path.path_id)
        entry = self.table.get(key)
        if entry is not None and i + 1 < len(nodes) and entry.next_hop == nodes[i + 1]:
            entry.path = path
            entry.downstream_remainder = tuple(nodes[i + 1:])
            if entry.previous_hop == SELF:
                cached = [path if p.path_id == path.path_id else p for p in self.route_cache.get(body.flow_dst, [])]
                self.route_cache[body.flow_dst] = sorted(cached, key=lambda p: (p.est_delay, p.path_id))
            self.node.trace("path_update", packet.id, dst=body.flow_dst, path_id=path.path_id,
                            path="-".join(map(str, nodes)))
        if self.id == packet.dst:
            return
        step = -1 if packet.dst == nodes[0] else 1
        self._send(Packet(PacketKind.RREP, packet.id, packet.src, packet.dst, packet.ttl - 1, body), nodes[i + step])

    # --- Data forwarding ---

    def _reserve(self, flow: FlowSpec, packet_id: Optional[int] = None) -> bool:
        """Reservation check on this hop; traces each fresh admission decision, not each packet."""
        qos = self.node.qos
        admitted, rejected = qos.admitted, qos.rejected
        ok = qos.ensure_reservation(flow)
        if qos.admitted > admitted:
            self.node.trace("admit", packet_id, flow.flow_id, rate=flow.rate, reserved=qos.ledger.reserved_total)
        elif qos.rejected > rejected:
            self.node.trace("reject", packet_id, flow.flow_id, rate=flow.rate, reserved=qos.ledger.reserved_total)
        return ok

    def _pick_path(self, flow: FlowSpec, paths: Sequence[PathRecord]) -> PathRecord:
        if not flow.multipath or self.cfg.multipath_policy == "primary_backup" or len(paths) == 1:
            return paths[0]
        turn = self._rr_counter.get(flow.flow_id, 0)
        self._rr_counter[flow.flow_id] = turn + 1
        return paths[turn % len(paths)]

    def route_from_source(self, packet: Packet) -> None:
        """Entry point for packets originated here (fresh or re-routed after a path loss)."""
        header: DataHeader = packet.body
        flow = header.flow
        dst = packet.dst
        if self._now() < self._unroutable_until.get(dst, -1.0):
            self.node.finish(packet, "unroutable")
            return
        paths = self.usable_paths(dst, flow.qos)
        # While a discovery is open, packets queue behind the older pending ones
        if paths and dst not in self._discoveries:
            header.visited = []
            header.path_id = self._pick_path(flow, paths).path_id
            self.forward_data(packet)
            return
        pending = self._pending.setdefault(dst, deque())
        if len(pending) >= self.node.cfg.qos.queue_capacity:
            self.node.finish(packet, "queue_drop", reason="pending_full")
            return
        pending.append(packet)
        if dst not in self._discoveries:
            self.initiate_discovery(dst, flow)

    def forward_data(self, packet: Packet) -> None:
        header: DataHeader = packet.body
        key = (packet.dst, header.path_id)
        repair = self._repairs.get(key)
        if repair is not None:
            self._buffer_for_repair(repair, packet)
            return
        entry = self.table.get(key)
        if entry is None:
            self.node.finish(packet, "routing_drop", reason="no_entry")
            return
        if not (header.visited and header.visited[-1] == self.id):
            if self.id in header.visited:
                self.node.finish(packet, "routing_drop", reason="loop")
                return
            header.visited.append(self.id)
        if not self._reserve(header.flow, packet.id):
            self.node.finish(packet, "admission_reject")
            return
        entry.flows.add(header.flow.flow_id)
        header.remaining_hops = len(entry.downstream_remainder)
        self.node.qos.assign_priority(header)
        if not self.node.qos.enqueue(packet):
            self.node.finish(packet, "queue_drop", reason="level_full", level=header.priority)
            return
        self.node.link.kick()

    def next_hop_for(self, packet: Packet) -> Optional[int]:
        key = (packet.dst, packet.body.path_id)
        if key in self._repairs:
            return None
        entry = self.table.get(key)
        return entry.next_hop if entry is not None else None

    def on_dequeued_without_route(self, packet: Packet) -> None:
        """A queued data packet lost its entry while waiting for the radio."""
        header: DataHeader = packet.body
        key = (packet.dst, header.path_id)
        if key in self._repairs:
            self._buffer_for_repair(self._repairs[key], packet)
        elif packet.src == self.id:
            self.route_from_source(packet)
        else:
            self.node.finish(packet, "routing_drop", reason="no_entry")

    def receive_data(self, packet: Packet) -> None:
        header: DataHeader = packet.body
        now = self._now()
        if packet.dst == self.id:
            delay = now - header.created_at
            status = "deadline_miss" if now > header.deadline else "delivered"
            self.node.finish(packet, status, delay=delay, hops=len(header.visited), path_id=header.path_id)
            return
        packet.ttl -= 1
        if packet.ttl <= 0:
            self.node.finish(packet, "routing_drop", reason="ttl")
            return
        self.forward_data(packet)

    # --- Route maintenance ---

    def on_mac_failure(self, packet: Packet, lost: int) -> None:
        if self.neighbors.remove(lost):
            self.node.trace("neighbor_lost", packet.id, packet.flow_id, neighbor=lost, reason="mac")
        if packet.kind is not PacketKind.DATA:
            self.node.trace("control_lost", packet.id, packet.flow_id, kind=packet.kind.value, next_hop=lost)
            return
        self.on_link_failure(lost)
        self.on_dequeued_without_route(packet)

    def on_link_failure(self, lost: int) -> None:
        for key in sorted(self.table):
            entry = self.table.get(key)
            if entry is None or entry.next_hop != lost or key in self._repairs:
                continue
            if entry.previous_hop == SELF:
                self.node.trace("link_failure", dst=key[0], path_id=key[1], next_hop=lost)
                self._source_path_lost(key)
            elif self.cfg.local_repair and entry.path is not None and self._start_repair(entry, lost):
                continue
            else:
                self._fail_entry(key, "no_repair")

    def _start_repair(self, entry: ForwardingEntry, lost: int) -> bool:
        path = entry.path
        nodes = path.nodes
        i = nodes.index(self.id)
        if lost not in nodes or nodes.index(lost) + 1 >= len(nodes):
            return False
        t = nodes.index(lost) + 1
        target = nodes[t]
        hops_left = entry.qos.max_hops - i - (len(nodes) - 1 - t)
        delay_left = entry.qos.max_delay - sum(path.hop_delays[:i]) - sum(path.hop_delays[t:])
        if hops_left < 1 or delay_left <= 0:
            return False
        budget = QosRequirement(max_delay=delay_left, max_hops=hops_left, min_bw=entry.qos.min_bw)

        self._seq += 1
        rreq_id = (self.id, self._seq)
        hop = self._hop_estimate()
        body = RreqBody(
            rreq_id=rreq_id,
            traversed=[self.id],
            qos_threshold=budget,
            acc_delay=hop,
            bottleneck_bw=self.node.qos.ledger.residual,
            hop_delays=[hop],
            max_paths=1,
            repair=True,
            target=target,
            exclude=tuple(n for n in nodes if n not in (self.id, target)),
            repair_key=entry.key,
        )
        repair = _Repair(rreq_id, target, lost)
        repair.handle = self.engine.schedule(
            self._now() + self.cfg.repair_timeout, self.id, EventKind.REPAIR_TIMEOUT, entry.key
        )
        self._repairs[entry.key] = repair
        packet = self._new_packet(PacketKind.RREQ, target, self.cfg.repair_ttl, body)
        self.node.trace("repair_start", packet.id, dst=entry.flow_dst, path_id=entry.path_id,
                        lost=lost, target=target, hops_left=hops_left, delay_left=delay_left)
        self._send(packet, BROADCAST)
        return True

    def _answer_repair(self, packet: Packet) -> None:
        body: RreqBody = packet.body
        if body.rreq_id in self._answered_repairs:
            return
        detour = self._candidate(body)
        if not detour.satisfies(body.qos_threshold):
            return
        flow_dst, path_id = body.repair_key
        if flow_dst == self.id:
            remainder: Tuple[int, ...] = ()
        else:
            entry = self.table.get(body.repair_key)
            if entry is None:
                return
            remainder = entry.downstream_remainder
            entry.previous_hop = body.traversed[-1]
        self._answered_repairs[body.rreq_id] = self._now()
        detour.path_id = path_id
        detour.established_at = self._now()
        rrep = RrepBody(body.rreq_id, detour, flow_dst, body.flow, body.qos_threshold, repair=True, remainder=remainder)
        self._send(self._new_packet(PacketKind.RREP, body.rreq_id[0], len(detour.nodes), rrep), detour.nodes[-2])

    def _handle_repair_rrep(self, packet: Packet, i: int) -> None:
        body: RrepBody = packet.body
        detour = body.path
        key = (body.flow_dst, detour.path_id)
        if i == 0:
            self._complete_repair(key, body)
            return
        if i == len(detour.nodes) - 1:
            return
        flow = body.flow
        if self.node.cfg.qos.reservation_mode == "apriori" and flow is not None and not self._reserve(flow, packet.id):
            self.node.trace("rrep_discard", packet.id, flow.flow_id, path_id=detour.path_id)
            return
        remainder = tuple(detour.nodes[i + 1:]) + tuple(body.remainder)
        # Detour nodes learn the full path from the splice announcement; until then they answer breaks with an Rerr
        entry = ForwardingEntry(
            flow_dst=body.flow_dst,
            path_id=detour.path_id,
            previous_hop=detour.nodes[i - 1],
            next_hop=detour.nodes[i + 1],
            downstream_remainder=remainder,
            qos=body.qos,
        )
        self.table[key] = entry
        self.node.trace("route_installed", packet.id, packet.flow_id,
                        dst=body.flow_dst, path_id=entry.path_id, next_hop=entry.next_hop, repair=1)
        self._send(Packet(PacketKind.RREP, packet.id, packet.src, packet.dst, packet.ttl - 1, body), detour.nodes[i - 1])

    def _complete_repair(self, key: PathKey, body: RrepBody) -> None:
        repair = self._repairs.get(key)
        entry = self.table.get(key)
        if repair is None or repair.rreq_id != body.rreq_id or entry is None:
            return
        detour = body.path
        path = entry.path
        i = path.nodes.index(self.id)
        t = path.nodes.index(repair.target)
        nodes = path.nodes[:i] + detour.nodes + path.nodes[t + 1:]
        hop_delays = path.hop_delays[:i] + detour.hop_delays + path.hop_delays[t:]
        spliced = PathRecord(
            nodes=nodes,
            est_delay=sum(hop_delays),
            bottleneck_bw=min(path.bottleneck_bw, detour.bottleneck_bw),
            hop_delays=hop_delays,
            path_id=path.path_id,
            established_at=path.established_at,
        )
        if len(set(nodes)) != len(nodes) or not spliced.satisfies(entry.qos):
            self.node.trace("repair_fail", dst=key[0], path_id=key[1], reason="qos",
                            est_delay=spliced.est_delay, hops=spliced.hops)
            self._fail_entry(key, "repair_qos")
            return
        del self._repairs[key]
        self.engine.cancel(repair.handle)
        entry.next_hop = detour.nodes[1]
        entry.downstream_remainder = tuple(nodes[i + 1:])
        entry.path = spliced
        self.node.trace("repair_ok", dst=key[0], path_id=key[1], path="-".join(map(str, nodes)),
                        est_delay=spliced.est_delay)
        self._announce_path(key, spliced, repair.rreq_id)
        while repair.buffer:
            self.forward_data(repair.buffer.popleft())

    def _announce_path(self, key: PathKey, path: PathRecord, rreq_id: RreqId) -> None:
        """Sends the spliced path toward both ends so every entry on it describes the new route."""
        nodes = path.nodes
        i = nodes.index(self.id)
        for end, step in ((nodes[0], -1), (nodes[-1], 1)):
            if end == self.id:
                continue
            body = RrepBody(rreq_id, path, key[0], path_update=True)
            self._send(self._new_packet(PacketKind.RREP, end, len(nodes), body), nodes[i + step])


    def on_repair_timeout(self, key: PathKey) -> None:
        if key not in self._repairs:
            return
        self.node.trace("repair_fail", dst=key[0], path_id=key[1], reason="timeout")
        self._fail_entry(key, "repair_timeout")

    def _buffer_for_repair(self, repair: _Repair, packet: Packet) -> None:
        if len(repair.buffer) >= self.node.cfg.qos.queue_capacity:
            self.node.finish(packet, "queue_drop", reason="repair_buffer_full")
            return
        repair.buffer.append(packet)

    def _fail_entry(self, key: PathKey, reason: str) -> None:
        """Gives up on an intermediate entry: Rerr upstream, drop buffered data, release reservations."""
        repair = self._repairs.pop(key, None)
        if repair is not None:
            self.engine.cancel(repair.handle)
            for packet in repair.buffer:
                self.node.finish(packet, "routing_drop", reason=reason)
        entry = self.table.pop(key, None)
        if entry is None:
            return
        if entry.previous_hop == SELF:
            self._source_path_lost(key, entry)
            return
        rerr = self._new_packet(PacketKind.RERR, BROADCAST, self.cfg.net_diameter_ttl, RerrBody([key], self.id))
        self.node.trace("rerr_tx", rerr.id, dst=key[0], path_id=key[1], to=entry.previous_hop, reason=reason)
        self._send(rerr, entry.previous_hop)
        self._release_unused(entry.flows)

    def handle_rerr(self, packet: Packet, sender: int) -> None:
        body: RerrBody = packet.body
        relay: List[Tuple[PathKey, int]] = []
        for key in body.broken:
            entry = self.table.get(key)
            if entry is None or entry.next_hop != sender:
                logger.warning("t=%.6f node %d: ignoring Rerr for %s from %d (no matching entry)",
                               self._now(), self.id, key, sender)
                continue
            self.node.trace("rerr_rx", packet.id, dst=key[0], path_id=key[1], reporter=body.reporter)
            repair = self._repairs.pop(key, None)
            if repair is not None:
                self.engine.cancel(repair.handle)
                for buffered in repair.buffer:
                    self.node.finish(buffered, "routing_drop", reason="rerr")
            if entry.previous_hop == SELF:
                self._source_path_lost(key)
                continue
            del self.table[key]
            relay.append((key, entry.previous_hop))
            self._release_unused(entry.flows)
        for key, previous_hop in relay:
            forwarded = Packet(PacketKind.RERR, packet.id, packet.src, packet.dst, packet.ttl - 1,
                               RerrBody([key], body.reporter))
            self._send(forwarded, previous_hop)

    def _source_path_lost(self, key: PathKey, entry: Optional[ForwardingEntry] = None) -> None:
        dst, path_id = key
        entry = self.table.pop(key, None) or entry
        cached = self.route_cache.get(dst, [])
        self.route_cache[dst] = [p for p in cached if p.path_id != path_id]
        survivors = [p for p in self.route_cache[dst] if (dst, p.path_id) in self.table]
        if survivors:
            self.node.trace("failover", dst=dst, path_id=path_id, survivors=len(survivors))
        else:
            self.node.trace("path_lost", dst=dst, path_id=path_id)
            if self._pending.get(dst) and dst not in self._discoveries:
                self.initiate_discovery(dst, self._pending[dst][0].body.flow)
        if entry is not None:
            self._release_unused(entry.flows)

    def _release_unused(self, flows: Iterable[int]) -> None:
        for flow_id in sorted(flows):
            if any(flow_id in e.flows for e in self.table.values()):
                continue
            if self.node.qos.release(flow_id):
                self.node.trace("release", flow_id=flow_id, reason="route_deleted")

    # --- Node death ---

    def on_death(self) -> None:
        for dst in sorted(self._pending):
            for packet in self._pending[dst]:
                self.node.finish(packet, "routing_drop", reason="node_dead")
        self._pending.clear()
        for key in sorted(self._repairs):
            for packet in self._repairs[key].buffer:
                self.node.finish(packet, "routing_drop", reason="node_dead")
        self._repairs.clear()
        self._discoveries.clear()
