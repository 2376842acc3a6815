import pytest

from urban_sim.metrics import TERMINAL_STATUSES, MetricsCollector, summarize
from urban_sim.trace import TraceRecord


def _rec(event_type, node=0, packet_id=None, flow_id=None, t=0.0, **fields):
    return TraceRecord(t, node, event_type, packet_id, flow_id, tuple(fields.items()))


def _flow_records(generated, delivered, missed):
    records = [_rec("pkt_create", packet_id=i, flow_id=0) for i in range(generated)]
    for i in range(delivered):
        records.append(_rec("pkt_end", node=4, packet_id=i, flow_id=0, status="delivered",
                            delay=0.01 * (i + 1), hops=4, path_id=0))
    for i in range(delivered, delivered + missed):
        records.append(_rec("pkt_end", node=2, packet_id=i, flow_id=0, status="deadline_miss"))
    return records


def test_delivery_and_miss_ratios():
    summary = summarize(_flow_records(100, 90, 10))
    assert summary.generated == 100
    assert summary.delivery_ratio == pytest.approx(0.9)
    assert summary.deadline_miss_ratio == pytest.approx(0.1)
    assert summary.status_counts["delivered"] == 90
    assert summary.mean_delay_s == pytest.approx(0.455)
    assert 0.8 < summary.p95_delay_s <= 0.9
    assert summary.nodes[0].node == 2 and summary.nodes[0].deadline_misses == 10


def test_status_counts_cover_every_terminal_status():
    summary = summarize(_flow_records(3, 3, 0))
    assert set(summary.status_counts) == set(TERMINAL_STATUSES)
    assert sum(summary.status_counts.values()) == summary.generated


def test_zero_denominators_give_none():
    summary = summarize([])
    assert summary.generated == 0
    assert summary.delivery_ratio is None
    assert summary.deadline_miss_ratio is None
    assert summary.mean_delay_s is None
    assert summary.control_overhead is None
    assert summary.mean_disjoint_paths is None


def test_control_overhead_counts_non_data_frames():
    records = _flow_records(10, 10, 0)
    records += [_rec("tx", node=1, kind="hello", to=-1, bits=336) for _ in range(15)]
    records += [_rec("tx", node=1, kind="data", to=2, bits=8272) for _ in range(10)]
    summary = summarize(records)
    assert summary.control_frames == 15
    assert summary.control_overhead == pytest.approx(1.5)
    assert summary.nodes[0].node == 1 and summary.nodes[0].frames_sent == 25


def test_routing_counters():
    records = [
        _rec("rreq_init", dst=3, rreq=1, attempt=0),
        _rec("rreq_init", dst=3, rreq=2, attempt=1),
        _rec("paths_selected", node=3, candidates=4, count=2, paths="0-1-3|0-2-3"),
        _rec("paths_selected", node=3, candidates=1, count=1, paths="0-1-3"),
        _rec("paths_selected", node=3, candidates=0, count=0, paths=""),
        _rec("repair_start"),
        _rec("repair_start"),
        _rec("repair_ok"),
        _rec("failover"),
        _rec("admit", node=1),
        _rec("reject", node=2),
    ]
    summary = summarize(records)
    assert (summary.discoveries, summary.discovery_retries) == (1, 1)
    assert summary.mean_disjoint_paths == pytest.approx(1.5)
    assert (summary.repair_attempts, summary.repair_successes, summary.failovers) == (2, 1, 1)
    assert (summary.admitted, summary.rejected) == (1, 1)


def test_second_termination_is_ignored():
    collector = MetricsCollector()
    collector.record(_rec("pkt_create", packet_id=1, flow_id=0))
    collector.record(_rec("pkt_end", packet_id=1, flow_id=0, status="delivered", delay=0.1))
    collector.record(_rec("pkt_end", packet_id=1, flow_id=0, status="queue_drop"))
    summary = collector.summarize()
    assert summary.status_counts["delivered"] == 1
    assert summary.status_counts["queue_drop"] == 0
    assert collector.open_packets == {}


def test_node_energy_record_is_parsed():
    rec = _rec("node_energy", node=3, joules=12.5, battery=987.5, discarded=0.0, death_time=None,
               j_sleep=0.5, j_receive=12.0, s_sleep=50.0, s_receive=12.0)
    summary = summarize([rec])
    (energy,) = summary.energy
    assert energy.node == 3 and energy.joules == 12.5
    assert energy.joules_per_state == {"sleep": 0.5, "receive": 12.0}
    assert energy.seconds_per_state == {"sleep": 50.0, "receive": 12.0}
    assert energy.death_time is None
