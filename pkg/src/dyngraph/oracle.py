"""Brute-force reference model used to check the engine on small instances.

Each live vertex maps to a ``Counter`` of destinations.  Inserts add copies,
deletes drop every copy of each listed destination, deleted vertex ids are
retired for good.  Nothing here shares code with the engine's batch paths.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .errors import MalformedBatch


@dataclass
class OracleGraph:
    num_vertices: int = 0
    adjacency: dict[int, Counter] = field(default_factory=dict)
    retired: set[int] = field(default_factory=set)

    def has_edge(self, u: int, v: int) -> bool:
        return self.adjacency.get(u, Counter())[v] > 0

    def edge_count(self) -> int:
        return sum(sum(c.values()) for c in self.adjacency.values())

    def add_vertices(self, count: int) -> None:
        self.num_vertices += max(count, 0)

    def retire(self, ids) -> None:
        for v in ids:
            v = int(v)
            if 0 <= v < self.num_vertices and v not in self.retired:
                self.retired.add(v)
                self.adjacency.pop(v, None)


def _rows(batch, num_vertices: int):
    offsets = [int(x) for x in batch.offsets]
    dests = [int(x) for x in batch.destinations]
    if not offsets or offsets[0] != 0 or offsets[-1] != len(dests):
        raise MalformedBatch("bad offsets")
    if len(offsets) - 1 > num_vertices:
        raise MalformedBatch("batch spans too many vertices")
    for a, b in zip(offsets, offsets[1:]):
        if b < a:
            raise MalformedBatch("offsets decrease")
    if any(d < 0 or d >= num_vertices for d in dests):
        raise MalformedBatch("destination out of range")
    for u in range(len(offsets) - 1):
        if offsets[u + 1] > offsets[u]:
            yield u, dests[offsets[u] : offsets[u + 1]]


def oracle_apply(oracle: OracleGraph, batch) -> OracleGraph:
    rows = list(_rows(batch, oracle.num_vertices))
    if batch.kind == "insert":
        for u, dests in rows:
            if u in oracle.retired:
                raise MalformedBatch(f"insert from deleted vertex {u}")
        for u, dests in rows:
            oracle.adjacency.setdefault(u, Counter()).update(dests)
    else:
        for u, dests in rows:
            adj = oracle.adjacency.get(u)
            if adj is None:
                continue
            for d in set(dests):
                adj.pop(d, None)
            if not adj:
                del oracle.adjacency[u]
    return oracle


@dataclass(frozen=True)
class Mismatch:
    vertex: int
    kind: str
    detail: str


def oracle_compare(oracle: OracleGraph, graph, negatives: int = 200, seed: int = 0) -> list[Mismatch]:
    """One ``Mismatch`` per disagreeing vertex; empty iff the graph matches the oracle.

    Compares every live vertex's multiset of active destinations, then asks the
    graph about every oracle edge plus ``negatives`` random non-edges.
    """
    report: dict[int, Mismatch] = {}
    n = oracle.num_vertices
    if graph.num_vertices != n:
        report[-1] = Mismatch(-1, "vertex-count", f"graph has {graph.num_vertices}, oracle {n}")
    for v in range(min(n, graph.num_vertices)):
        expected = oracle.adjacency.get(v, Counter())
        got = Counter(graph.adjacency(v))
        if got != expected:
            extra = got - expected
            missing = expected - got
            report[v] = Mismatch(v, "adjacency", f"extra {dict(extra)}, missing {dict(missing)}")

    src, dst, want = [], [], []
    for u, adj in oracle.adjacency.items():
        for d in adj:
            src.append(u)
            dst.append(d)
            want.append(True)
    if n:
        rng = np.random.default_rng(seed)
        for u, d in rng.integers(0, n, size=(negatives, 2)).tolist():
            src.append(u)
            dst.append(d)
            want.append(oracle.has_edge(u, d))
    if src:
        got = graph.query_edges(src, dst)
        for u, d, w, g in zip(src, dst, want, got.tolist()):
            if w != g and u not in report:
                report[u] = Mismatch(u, "query", f"query({u}, {d}) = {g}, expected {w}")
    return sorted(report.values(), key=lambda m: m.vertex)
