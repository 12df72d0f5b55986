"""Randomized oracle-equivalence workloads.

Each workload starts from a random vertex count, then applies a random
sequence of edge insert/delete batches and vertex insert/delete batches to
both the engine and the oracle.  Structural invariants are checked after
every batch and the two models are compared at the end (and after every batch
for small workloads).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .core import SENTINEL_BYTES, SLOT_BYTES, bytes_per_block, closest_pow2
from .engine import DELETE, INSERT, CsrBatch, DynamicGraph, GraphConfig, compute_block_size
from .errors import InsufficientCapacity, PoolUnderflow
from .oracle import Mismatch, OracleGraph, oracle_apply, oracle_compare

logger = logging.getLogger(__name__)


@dataclass
class WorkloadResult:
    seed: int
    vertices: int
    edges_inserted: int
    batches: int
    block_size: int = 0
    aborted: int = 0
    growths: int = 0
    mismatches: list[Mismatch] = field(default_factory=list)
    violations: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.mismatches and not self.violations


def _log_uniform(rng, lo: int, hi: int) -> int:
    return int(round(np.exp(rng.uniform(np.log(lo), np.log(hi)))))


def _insert_batch(rng, oracle: OracleGraph, size: int) -> CsrBatch:
    n = oracle.num_vertices
    live = np.array([v for v in range(n) if v not in oracle.retired], dtype=np.int64)
    # a skewed source pick gives some vertices deep CBTs
    weights = rng.pareto(1.2, live.size) + 1e-3
    src = rng.choice(live, size, p=weights / weights.sum())
    hot = rng.integers(0, n, max(1, size // 20))
    dst = np.where(rng.random(size) < 0.3, rng.choice(hot, size), rng.integers(0, n, size))
    return CsrBatch.from_edges(src, dst, n, INSERT)


def _delete_batch(rng, oracle: OracleGraph, size: int) -> CsrBatch:
    n = oracle.num_vertices
    edges = [(u, d) for u, adj in oracle.adjacency.items() for d in adj]
    src, dst = [], []
    if edges:
        pick = rng.integers(0, len(edges), size)
        src = [edges[i][0] for i in pick]
        dst = [edges[i][1] for i in pick]
    absent = max(1, size // 10)
    src = np.concatenate([np.asarray(src, dtype=np.int64), rng.integers(0, n, absent)])
    dst = np.concatenate([np.asarray(dst, dtype=np.int64), rng.integers(0, n, absent)])
    return CsrBatch.from_edges(src, dst, n, DELETE)


def run_equivalence(
    seed: int,
    max_vertices: int = 4096,
    max_edges: int = 100_000,
    compare_every_batch: bool | None = None,
    workers: int = 0,
) -> WorkloadResult:
    rng = np.random.default_rng(seed)
    n = _log_uniform(rng, 2, max_vertices // 2)
    budget = _log_uniform(rng, 10, max_edges)
    steps = int(rng.integers(3, 13))
    if compare_every_batch is None:
        compare_every_batch = budget <= 5_000

    oracle = OracleGraph(n)
    first = _insert_batch(rng, oracle, max(1, budget // steps))
    B = compute_block_size(first)
    reclaim = bool(rng.random() < 0.7)
    fixed = closest_pow2(n) * (SLOT_BYTES + SENTINEL_BYTES)
    if rng.random() < 0.3:
        # tight arena: the pool starts well short of the budget, forcing growth
        blocks = max(2, int(budget / B * rng.uniform(0.2, 1.5)))
        arena = 2 * (fixed + blocks * bytes_per_block(B))
    else:
        arena = 64 << 20
    graph = DynamicGraph(n, B, GraphConfig(arena_bytes=arena, reclaim_on_delete=reclaim, workers=workers))
    result = WorkloadResult(seed, n, 0, 0, B)

    def check(label: str) -> bool:
        problems = graph.check()
        result.violations += [f"seed {seed} after {label}: {p}" for p in problems]
        if compare_every_batch:
            result.mismatches += oracle_compare(oracle, graph, seed=seed)
        return not problems

    inserted = 0
    batch = first
    for step in range(steps):
        if step == 0:
            op = "insert"
        else:
            op = rng.choice(["insert", "delete", "add-vertices", "delete-vertices"], p=[0.5, 0.3, 0.1, 0.1])
        label = f"step {step} ({op})"
        try:
            if op == "insert":
                if step:
                    size = int(rng.integers(1, max(2, 2 * budget // steps)))
                    size = min(size, budget - inserted)
                    if size <= 0:
                        continue
                    batch = _insert_batch(rng, oracle, size)
                before = graph.state_digest()
                try:
                    graph.insert_batch(batch)
                except PoolUnderflow:
                    result.aborted += 1
                    if graph.state_digest() != before:
                        result.violations.append(f"seed {seed} {label}: aborted batch modified the graph")
                    continue
                oracle_apply(oracle, batch)
                inserted += batch.num_edges
            elif op == "delete":
                batch = _delete_batch(rng, oracle, int(rng.integers(1, max(2, budget // steps))))
                graph.delete_batch(batch)
                oracle_apply(oracle, batch)
            elif op == "add-vertices":
                count = int(rng.integers(0, max(1, min(n, max_vertices - oracle.num_vertices)) + 1))
                try:
                    graph.insert_vertices(count)
                except InsufficientCapacity:
                    result.aborted += 1
                    continue
                oracle.add_vertices(count)
            else:
                live = [v for v in range(oracle.num_vertices) if v not in oracle.retired]
                if len(live) <= 1:
                    continue
                ids = rng.choice(live, int(rng.integers(1, max(2, len(live) // 8))), replace=False)
                graph.delete_vertices(ids)
                oracle.retire(ids)
        finally:
            result.batches += 1
        if not check(label):
            break

    if not compare_every_batch:
        result.mismatches += oracle_compare(oracle, graph, seed=seed)
    result.edges_inserted = inserted
    result.vertices = oracle.num_vertices
    result.growths = len(graph.pool.growth_events)
    return result


def run_suite(count: int, seed: int = 0, **kwargs) -> list[WorkloadResult]:
    seeds = np.random.SeedSequence(seed).generate_state(count).tolist()
    return [run_equivalence(int(s), **kwargs) for s in seeds]
