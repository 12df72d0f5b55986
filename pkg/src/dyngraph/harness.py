"""Benchmark workloads: init, batched inserts, queries, batched deletes.

Wall time covers only work on the data structure; loading the file and
building the CSR batches happen before the clock starts.  After every phase
the report records a memory snapshot taken from the arena accounting.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .engine import DELETE, INSERT, DynamicGraph, GraphConfig, MemorySnapshot, compute_block_size
from .loaders import BULK, Csr, load_graph, make_batches, synthetic_graph

CSV_COLUMNS = ("graph", "batch_size", "phase", "ms", "bytes_dict", "bytes_sentinel", "bytes_pool", "bytes_total")

OPS = ("insert", "delete", "insert-then-delete", "query-sample", "mixed")


@dataclass
class WorkloadSpec:
    input_path: str | None = None
    fmt: str | None = None
    batch_size: int | str = BULK
    ops: str = "insert"
    seed: int = 0
    order: str = "prefix"
    block_size: int | None = None
    config: GraphConfig = field(default_factory=GraphConfig)
    symmetrize: bool | None = None
    queries: int = 1000
    name: str | None = None
    # used when input_path is None
    synthetic: str = "uniform"
    vertices: int = 1 << 12
    edges: int = 1 << 16

    def __post_init__(self):
        if self.batch_size != BULK and int(self.batch_size) < 1:
            raise ValueError("batch size must be >= 1 or 'bulk'")
        if self.ops not in OPS:
            raise ValueError(f"unknown operation mix {self.ops!r}")

    @property
    def graph_name(self) -> str:
        if self.name:
            return self.name
        if self.input_path:
            return Path(self.input_path).stem
        return f"{self.synthetic}-{self.vertices}-{self.edges}"


@dataclass
class PhaseRecord:
    phase: str
    ms: float
    memory: MemorySnapshot
    edges: int


@dataclass
class RunReport:
    graph: str
    batch_size: int | str
    phases: list[PhaseRecord] = field(default_factory=list)
    stats: dict = field(default_factory=dict)
    query_hits: int = 0
    queries: int = 0

    @property
    def final_edges(self) -> int:
        return self.phases[-1].edges if self.phases else 0

    def phase(self, name: str) -> PhaseRecord:
        return next(p for p in self.phases if p.phase == name)

    def total_ms(self, prefix: str) -> float:
        return sum(p.ms for p in self.phases if p.phase.split(":")[0] == prefix)

    def rows(self):
        for p in self.phases:
            m = p.memory
            yield (self.graph, self.batch_size, p.phase, f"{p.ms:.3f}", m.dictionary, m.sentinels, m.pool, m.total)

    def write_csv(self, path_or_file) -> None:
        if hasattr(path_or_file, "write"):
            self._write(path_or_file)
        else:
            with open(path_or_file, "w", newline="") as fh:
                self._write(fh)

    def _write(self, fh) -> None:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        w.writerows(self.rows())


def load_input(spec: WorkloadSpec) -> Csr:
    if spec.input_path:
        return load_graph(spec.input_path, spec.fmt, spec.symmetrize)
    return synthetic_graph(spec.synthetic, spec.vertices, spec.edges, spec.seed)


def _query_sample(csr: Csr, count: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    rng = np.random.default_rng(seed)
    n, m = csr.num_vertices, csr.num_edges
    if n == 0 or count <= 0:
        return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64)
    half = count // 2 if m else 0
    pick = rng.integers(0, m, half) if half else np.empty(0, dtype=np.int64)
    src = np.concatenate([csr.sources()[pick], rng.integers(0, n, count - half)])
    dst = np.concatenate([csr.destinations[pick], rng.integers(0, n, count - half)])
    return src, dst


def run_workload(
    spec: WorkloadSpec, csr: Csr | None = None, clock: Callable[[], float] = time.perf_counter
) -> RunReport:
    if csr is None:
        csr = load_input(spec)
    report = RunReport(spec.graph_name, spec.batch_size)
    inserts = make_batches(csr, spec.batch_size, INSERT, spec.order, spec.seed)
    do_delete = spec.ops in ("delete", "insert-then-delete", "mixed")
    do_query = spec.ops in ("query-sample", "mixed")
    deletes = make_batches(csr, spec.batch_size, DELETE, spec.order, spec.seed) if do_delete else []
    qsrc, qdst = _query_sample(csr, spec.queries, spec.seed) if do_query else (None, None)

    def record(phase: str, started: float) -> None:
        ms = (clock() - started) * 1e3
        report.phases.append(PhaseRecord(phase, ms, graph.memory(), graph.stats()["edges"]))

    t = clock()
    block_size = spec.block_size
    if block_size is None:
        # an edgeless input has nothing to average over; fall back to 1-entry blocks
        block_size = compute_block_size(inserts[0]) if inserts[0].num_edges else 1
    graph = DynamicGraph.from_first_batch(inserts[0], spec.config, block_size)
    record("init", t)

    for i, batch in enumerate(inserts):
        t = clock()
        graph.insert_batch(batch)
        record(f"insert:{i}", t)
    if do_query:
        t = clock()
        hits = graph.query_edges(qsrc, qdst)
        record("query", t)
        report.queries = int(hits.size)
        report.query_hits = int(hits.sum())
    for i, batch in enumerate(deletes):
        t = clock()
        graph.delete_batch(batch)
        record(f"delete:{i}", t)
    report.stats = graph.stats()
    return report
