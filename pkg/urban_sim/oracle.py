"""Brute-force references for the path selection rule on small graphs.

Used by the tests to check the greedy disjoint selection against the true
maximum node-disjoint QoS-satisfying set and the source/destination vertex
min-cut.
"""

import itertools
from functools import lru_cache
from typing import List, Optional

import networkx as nx

from .packets import PathRecord
from .scenario import QosRequirement


def qos_paths(graph: nx.Graph, src: int, dst: int, qos: QosRequirement, hop_delay: float,
              residual: Optional[dict] = None) -> List[PathRecord]:
    """Every simple src..dst path meeting `qos`, ordered by hop count.

    Each hop costs `hop_delay`; `residual` optionally maps node -> free bandwidth
    so the bottleneck test can fail.
    """
    paths = []
    for nodes in nx.all_simple_paths(graph, src, dst, cutoff=qos.max_hops):
        hops = len(nodes) - 1
        if residual:
            bottleneck = min(residual.get(n, float("inf")) for n in nodes[:-1])
        else:
            bottleneck = float("inf")
        record = PathRecord(tuple(nodes), hops * hop_delay, bottleneck, (hop_delay,) * hops)
        if record.satisfies(qos):
            paths.append(record)
    paths.sort(key=lambda p: p.hops)
    return paths


def max_disjoint_count(paths: List[PathRecord]) -> int:
    """Size of the largest set of paths sharing no intermediate node."""
    index = {}
    masks = set()
    direct = False
    for path in paths:
        if not path.intermediates:
            direct = True
            continue
        mask = 0
        for node in path.intermediates:
            mask |= 1 << index.setdefault(node, len(index))
        masks.add(mask)
    ordered = sorted(masks)

    @lru_cache(maxsize=None)
    def best(used: int) -> int:
        result = 0
        for mask in ordered:
            if not mask & used:
                result = max(result, 1 + best(used | mask))
        return result

    return best(0) + (1 if direct else 0)


def vertex_min_cut(graph: nx.Graph, src: int, dst: int) -> int:
    """Fewest intermediate nodes whose removal disconnects src from dst, plus one for a direct link."""
    direct = graph.has_edge(src, dst)
    reduced = graph.copy()
    if direct:
        reduced.remove_edge(src, dst)
    others = [n for n in reduced.nodes if n not in (src, dst)]
    for k in range(len(others) + 1):
        for removed in itertools.combinations(others, k):
            remaining = reduced.subgraph(n for n in reduced.nodes if n not in removed)
            if not nx.has_path(remaining, src, dst):
                return k + (1 if direct else 0)
    return len(others) + (1 if direct else 0)
