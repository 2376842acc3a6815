import pytest

from urban_sim.packets import BROADCAST, Packet, PacketKind, PathRecord, RreqBody
from urban_sim.routing import NeighborTable, select_disjoint_paths
from urban_sim.scenario import FlowSpec, QosRequirement


def _path(*nodes, delay=None, bw=1e6):
    hops = len(nodes) - 1
    return PathRecord(tuple(nodes), delay if delay is not None else 0.01 * hops, bw)


@pytest.fixture
def qos():
    return QosRequirement(max_delay=0.1, max_hops=5, min_bw=1000)


def test_picks_lowest_delay_then_skips_overlap(qos):
    candidates = [_path(0, 1, 2, 9), _path(0, 3, 9), _path(0, 3, 4, 9), _path(0, 5, 6, 9)]
    chosen = select_disjoint_paths(candidates, qos, max_paths=3)
    assert [p.nodes for p in chosen] == [(0, 3, 9), (0, 1, 2, 9), (0, 5, 6, 9)]


def test_ties_keep_arrival_order(qos):
    candidates = [_path(0, 2, 9, delay=0.02), _path(0, 1, 9, delay=0.02)]
    chosen = select_disjoint_paths(candidates, qos, max_paths=1)
    assert chosen[0].nodes == (0, 2, 9)


def test_rejects_paths_that_miss_qos(qos):
    candidates = [
        _path(0, 1, 9, delay=0.5),
        _path(0, 1, 2, 3, 4, 5, 9),
        _path(0, 2, 9, bw=10),
        _path(0, 3, 9),
    ]
    assert [p.nodes for p in select_disjoint_paths(candidates, qos, 3)] == [(0, 3, 9)]


def test_rejects_duplicates_and_loops(qos):
    candidates = [_path(0, 1, 9), _path(0, 1, 9), _path(0, 2, 1, 2, 9)]
    assert [p.nodes for p in select_disjoint_paths(candidates, qos, 3)] == [(0, 1, 9)]


def test_direct_path_shares_nothing(qos):
    candidates = [_path(0, 9), _path(0, 1, 9), _path(0, 1, 2, 9)]
    assert [p.nodes for p in select_disjoint_paths(candidates, qos, 3)] == [(0, 9), (0, 1, 9)]


def test_respects_max_paths(qos):
    candidates = [_path(0, n, 9) for n in range(1, 6)]
    assert len(select_disjoint_paths(candidates, qos, 2)) == 2


def test_no_candidates_gives_empty(qos):
    assert select_disjoint_paths([], qos, 3) == []


def test_selected_paths_are_pairwise_disjoint(qos):
    candidates = [
        _path(0, 1, 2, 9, delay=0.03),
        _path(0, 2, 3, 9, delay=0.01),
        _path(0, 4, 9, delay=0.05),
        _path(0, 1, 4, 9, delay=0.02),
        _path(0, 5, 6, 9, delay=0.04),
    ]
    chosen = select_disjoint_paths(candidates, qos, 5)
    for i, a in enumerate(chosen):
        for b in chosen[i + 1:]:
            assert not set(a.intermediates) & set(b.intermediates)
    assert [p.nodes for p in chosen] == [(0, 2, 3, 9), (0, 1, 4, 9), (0, 5, 6, 9)]


def test_neighbor_table_refresh_and_purge():
    table = NeighborTable()
    assert table.refresh(3, 0.0) is True
    assert table.refresh(3, 1.0) is False
    table.refresh(1, 0.5)
    assert table.ids() == [1, 3]
    assert table.purge(now=4.0, timeout=3.0) == [1]
    assert 3 in table and 1 not in table
    assert table.remove(3) and not table.remove(3)
    assert len(table) == 0


# --- Rreq handling on a relay ---

@pytest.fixture
def relay(load_scenario, build_traced, mocker):
    """Node 2 of the five-node line with its outgoing control frames captured."""
    def _make(**updates):
        simulation, sink = build_traced(load_scenario("line5", **updates))
        node = simulation.nodes[2]
        send = mocker.patch.object(node.link, "send_control")
        return node.routing, send, sink
    return _make


def _rreq(*traversed, ttl=10, acc_delay=0.002, qos=None, rreq_id=(0, 1)):
    qos = qos or QosRequirement(max_delay=0.5, max_hops=4, min_bw=1000)
    hop_delays = [acc_delay / len(traversed)] * len(traversed)
    body = RreqBody(rreq_id, list(traversed), qos, acc_delay, 1e6, hop_delays)
    return Packet(PacketKind.RREQ, 100, traversed[0], 4, ttl, body)


def _forwarded(send):
    return [c.args[0].body.traversed for c in send.call_args_list]


def test_forwarded_rreq_carries_this_hop(relay):
    agent, send, _ = relay()
    agent.handle_rreq(_rreq(0, 1))

    packet, next_hop = send.call_args.args
    assert next_hop == BROADCAST
    assert (packet.id, packet.src, packet.dst, packet.ttl) == (100, 0, 4, 9)
    assert packet.body.traversed == [0, 1, 2]
    assert packet.body.acc_delay > 0.002
    assert len(packet.body.hop_delays) == 3


def test_rreq_that_already_crossed_this_node_is_dropped(relay):
    agent, send, sink = relay()
    agent.handle_rreq(_rreq(0, 2, 1))
    send.assert_not_called()
    assert sink.of("rreq_prune") == []
    assert agent._seen_rreq == {}


@pytest.mark.parametrize("overrides", [
    {"qos": QosRequirement(max_delay=0.5, max_hops=2, min_bw=1000)},
    {"acc_delay": 0.5},
    {"ttl": 1},
], ids=["max_hops", "max_delay", "ttl"])
def test_rreq_past_its_bounds_is_pruned(relay, overrides):
    agent, send, sink = relay()
    agent.handle_rreq(_rreq(0, 1, **overrides))

    send.assert_not_called()
    (pruned,) = sink.of("rreq_prune", node=2)
    assert pruned.packet_id == 100
    # A pruned copy does not use up the forwarding budget
    assert agent._seen_rreq == {}


def test_rreq_exactly_at_the_hop_bound_travels_on(relay):
    agent, send, _ = relay()
    agent.handle_rreq(_rreq(0, 1, qos=QosRequirement(max_delay=0.5, max_hops=3, min_bw=1000)))
    assert _forwarded(send) == [[0, 1, 2]]


def test_rreq_copies_need_a_new_first_hop_and_respect_the_cap(relay):
    agent, send, _ = relay(routing={"max_copies_per_rreq": 2})
    agent.handle_rreq(_rreq(0, 1))
    agent.handle_rreq(_rreq(0, 1, 3))
    agent.handle_rreq(_rreq(0, 3))
    agent.handle_rreq(_rreq(0))
    agent.handle_rreq(_rreq(0, 1, rreq_id=(0, 2)))

    assert _forwarded(send) == [[0, 1, 2], [0, 3, 2], [0, 1, 2]]
    state = agent._seen_rreq[(0, 1)]
    assert (state.forwarded, state.first_hops) == (2, {1, 3})


def test_hello_is_answered_by_unicast_and_never_relayed(relay):
    agent, send, _ = relay()
    agent.receive(Packet(PacketKind.HELLO, 100, 1, BROADCAST, 1), 1)

    ((reply, next_hop),) = [c.args for c in send.call_args_list]
    assert reply.kind is PacketKind.HELLO_REPLY
    assert (reply.src, reply.dst, reply.ttl, next_hop) == (2, 1, 1, 1)


def test_rreq_history_is_forgotten_after_the_retention(relay):
    agent, _, _ = relay()
    agent.handle_rreq(_rreq(0, 1))
    retention = agent._history_retention

    assert agent.forget_history(retention / 2) == 0
    assert (0, 1) in agent._seen_rreq
    assert agent.forget_history(retention + 1.0) == 1
    assert agent._seen_rreq == {}


def test_round_robin_turns_only_over_several_paths(relay):
    agent, _, _ = relay()
    flow = FlowSpec(flow_id=0, src=2, dst=4, rate=1000)
    a, b = _path(2, 3, 4), _path(2, 9, 4, delay=0.03)

    assert [agent._pick_path(flow, [a]) for _ in range(3)] == [a, a, a]
    assert agent._rr_counter == {}
    assert [agent._pick_path(flow, [a, b]) for _ in range(4)] == [a, b, a, b]
