from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from brute import ceil_div
from dyngraph.core import NIL, locate_block
from dyngraph.engine import CsrBatch, DynamicGraph, GraphConfig, compute_block_size
from dyngraph.errors import InsufficientCapacity, MalformedBatch, PoolUnderflow
from dyngraph.loaders import make_batches, powerlaw_graph
from dyngraph.oracle import OracleGraph, oracle_apply, oracle_compare

SMALL = GraphConfig(arena_bytes=1 << 20)


def batch(pairs, n, kind="insert"):
    src = [u for u, _ in pairs]
    dst = [v for _, v in pairs]
    return CsrBatch.from_edges(src, dst, n, kind)


def degrees_batch(degrees):
    offsets = np.concatenate([[0], np.cumsum(degrees)])
    return CsrBatch(offsets, np.zeros(offsets[-1], dtype=np.int64))


def graph(n=8, block_size=4, **cfg):
    return DynamicGraph(n, block_size, GraphConfig(**{"arena_bytes": 1 << 20, **cfg}))


# ---------------------------------------------------------------- block size


def test_block_size_examples():
    assert compute_block_size(degrees_batch([3, 0, 5, 4])) == 4
    assert compute_block_size(degrees_batch([7])) == 7
    assert compute_block_size(degrees_batch([1, 0, 0, 1, 2])) == 1  # round(4/3)


def test_block_size_rejects_empty_first_batch():
    with pytest.raises(MalformedBatch):
        compute_block_size(degrees_batch([0, 0]))


def test_block_size_matches_independent_scan():
    csr = powerlaw_graph(3000, 40_000, seed=3)
    first = make_batches(csr, 10_000)[0]
    per_source = Counter(first.sources().tolist())
    expected = round(sum(per_source.values()) / len(per_source))
    assert compute_block_size(first) == expected


# ---------------------------------------------------------------- planning


def test_plan_examples():
    g = graph(n=3, block_size=4)
    plan = g.plan_batch(degrees_batch([10, 0, 3]))
    assert plan.blocks_required.tolist() == [3, 0, 1]
    assert plan.prefix_sum.tolist() == [3, 3, 4]
    assert plan.space_remaining.tolist() == [0, 0, 0]
    g.insert_batch(batch([(0, 1)] * 2, 3))  # leaves 2 free slots for vertex 0
    plan = g.plan_batch(degrees_batch([10, 0, 0]))
    assert plan.space_remaining[0] == 2
    assert plan.blocks_required[0] == 2  # ceil(8 / 4)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(0, 40), min_size=1, max_size=12), st.integers(1, 9))
def test_plan_formula(degrees, B):
    g = graph(n=len(degrees), block_size=B)
    plan = g.plan_batch(degrees_batch(degrees))
    expected = [ceil_div(d, B) for d in degrees]
    assert plan.blocks_required.tolist() == expected
    assert plan.prefix_sum.tolist() == np.cumsum(expected).tolist()


def test_malformed_batches():
    g = graph(n=4)
    with pytest.raises(MalformedBatch):
        g.insert_batch(CsrBatch([0, 2, 1, 1, 1], [0]))
    with pytest.raises(MalformedBatch):
        g.insert_batch(CsrBatch([1, 1], [0]))
    with pytest.raises(MalformedBatch):
        g.insert_batch(batch([(0, 4)], 4))
    with pytest.raises(MalformedBatch):
        g.insert_batch(CsrBatch(np.zeros(7, dtype=np.int64), []))
    with pytest.raises(MalformedBatch):
        g.insert_batch(CsrBatch([0, 1], [0], "delete"))
    assert g.stats()["edges"] == 0 and g.pool.queue.front == 0


# ---------------------------------------------------------------- inserts


def test_empty_batch_changes_nothing():
    g = graph()
    before = g.state_digest()
    g.insert_batch(CsrBatch.empty(8))
    assert g.state_digest() == before and g.pool.queue.front == 0


def test_fresh_vertex_six_edges():
    g = graph(block_size=4)
    g.insert_batch(batch([(1, d) for d in range(6)], 8))
    s = g.sentinel(1)
    assert s.block_count == 2 and s.active_edge_count == 6
    assert s.last_insert_offset == 2
    root = s.cbt_root
    assert g.store.left[root] == s.last_insert_block
    assert g.adjacency(1) == [4, 5, 0, 1, 2, 3]  # in-order: left child, then root


def test_ninth_block_placed_by_bit_string():
    g = graph(block_size=4)
    g.insert_batch(batch([(0, 1)] * 32, 8))  # 8 full blocks
    assert g.sentinel(0).block_count == 8 and g.sentinel(0).last_insert_offset == 4
    plan = g.insert_batch(batch([(0, 2)] * 3, 8))
    assert plan.blocks_required[0] == 1
    s = g.sentinel(0)
    assert s.block_count == 9
    left_left = g.store.left[g.store.left[s.cbt_root]]
    assert g.store.right[left_left] == s.last_insert_block
    assert locate_block(g.store, s.cbt_root, 9) == s.last_insert_block


def test_second_batch_fills_last_block_first():
    g = graph(block_size=4)
    g.insert_batch(batch([(0, 1)] * 5, 8))
    first_tail = g.sentinel(0).last_insert_block
    g.insert_batch(batch([(0, 2)] * 6, 8))
    s = g.sentinel(0)
    assert s.block_count == 3 and s.active_edge_count == 11
    assert g.store.dest[first_tail].tolist() == [1, 2, 2, 2]
    assert s.last_insert_offset == 3


def test_insert_pops_exactly_the_planned_blocks():
    g = graph(n=16, block_size=3)
    rng = np.random.default_rng(0)
    for _ in range(10):
        b = batch(list(zip(rng.integers(0, 16, 50).tolist(), rng.integers(0, 16, 50).tolist())), 16)
        front, queued = g.pool.queue.front, g.pool.queued
        plan = g.insert_batch(b)
        assert g.pool.queue.front - front == plan.total_blocks
        assert g.stats()["blocks"] == g.pool.in_use
        assert g.check() == []


def test_underflow_is_atomic():
    g = DynamicGraph(4, 1, GraphConfig(arena_bytes=4 * 56 * 2 + 2 * 32 * 8))
    queued = g.pool.queued
    before = g.state_digest()
    with pytest.raises(PoolUnderflow):
        g.insert_batch(batch([(0, 1)] * 100, 4))
    assert g.state_digest() == before
    assert g.pool.queue.front == 0 and g.pool.queued >= queued


def test_insert_from_deleted_vertex_rejected():
    g = graph()
    g.delete_vertices([2])
    with pytest.raises(MalformedBatch):
        g.insert_batch(batch([(2, 1)], 8))


# ---------------------------------------------------------------- deletes


def test_delete_absent_edge_is_noop():
    g = graph()
    g.insert_batch(batch([(1, 2)], 8))
    assert g.delete_batch(batch([(1, 3), (4, 4)], 8, "delete")) == 0
    assert g.sentinel(1).active_edge_count == 1


def test_delete_single_match():
    g = graph()
    g.insert_batch(batch([(1, 2), (1, 3)], 8))
    assert g.delete_batch(batch([(1, 2)], 8, "delete")) == 1
    s = g.sentinel(1)
    assert s.active_edge_count == 1
    block = g.store.block(s.cbt_root)
    assert [(e.destination, e.tombstone) for e in block.entries] == [(2, True), (3, False)]


def test_delete_removes_all_duplicate_copies():
    g = graph()
    g.insert_batch(batch([(1, 2), (1, 2), (1, 3)], 8))
    assert g.delete_batch(batch([(1, 2)], 8, "delete")) == 2
    assert g.adjacency(1) == [3]


def test_holes_persist_without_reclaim():
    g = graph(block_size=2, reclaim_on_delete=False)
    g.insert_batch(batch([(0, d) for d in range(6)], 8))
    g.delete_batch(batch([(0, d) for d in range(6)], 8, "delete"))
    s = g.sentinel(0)
    assert s.block_count == 3 and s.active_edge_count == 0
    g.insert_batch(batch([(0, 7)], 8))
    assert g.sentinel(0).block_count == 4  # holes are never refilled
    assert g.check() == []


def test_reclaim_trims_empty_tail_blocks():
    g = graph(block_size=2)
    g.insert_batch(batch([(0, d) for d in range(6)], 8))  # blocks at positions 1..3
    queued = g.pool.queued
    g.delete_batch(batch([(0, 4), (0, 5), (0, 0)], 8, "delete"))
    s = g.sentinel(0)
    # the emptied tail (4, 5) goes back to the queue; the root keeps entry 1
    assert s.block_count == 2 and g.pool.queued == queued + 1
    assert s.last_insert_offset == 2
    assert g.check() == []
    g.delete_batch(batch([(0, 1), (0, 2), (0, 3)], 8, "delete"))
    assert g.sentinel(0).block_count == 0 and g.sentinel(0).cbt_root is None
    g.insert_batch(batch([(0, 7)], 8))
    assert g.adjacency(0) == [7] and g.check() == []


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_delete_count_decrements(seed):
    rng = np.random.default_rng(seed)
    g = graph(n=12, block_size=int(rng.integers(1, 5)))
    g.insert_batch(batch(list(zip(rng.integers(0, 12, 80).tolist(), rng.integers(0, 6, 80).tolist())), 12))
    pairs = list(zip(rng.integers(0, 12, 30).tolist(), rng.integers(0, 8, 30).tolist()))
    expected = 0
    for u in range(12):
        targets = {d for s, d in pairs if s == u}
        expected += sum(1 for d in g.adjacency(u) if d in targets)
    total = g.stats()["edges"]
    assert g.delete_batch(batch(pairs, 12, "delete")) == expected
    assert g.stats()["edges"] == total - expected


# ---------------------------------------------------------------- queries


def test_query_examples():
    g = graph()
    assert not g.query_edge(1, 2)
    g.insert_batch(batch([(1, 2)], 8))
    assert g.query_edge(1, 2)
    assert not g.query_edge(1, 3)
    assert not g.query_edge(99, 2)  # unknown source
    g.delete_batch(batch([(1, 2)], 8, "delete"))
    assert not g.query_edge(1, 2)


def test_random_queries_match_oracle():
    rng = np.random.default_rng(11)
    n = 200
    g, o = graph(n=n, block_size=3), OracleGraph(n)
    for kind in ["insert", "insert", "delete", "insert", "delete"]:
        b = batch(list(zip(rng.integers(0, n, 3000).tolist(), rng.integers(0, n, 3000).tolist())), n, kind)
        g.insert_batch(b) if kind == "insert" else g.delete_batch(b)
        oracle_apply(o, b)
    src, dst = rng.integers(0, n, 10_000), rng.integers(0, n, 10_000)
    expected = [o.has_edge(u, v) for u, v in zip(src.tolist(), dst.tolist())]
    assert g.query_edges(src, dst).tolist() == expected
    assert [g.query_edge(u, v) for u, v in zip(src[:500].tolist(), dst[:500].tolist())] == expected[:500]


# ---------------------------------------------------------------- vertices


def test_insert_vertices_at_boundary():
    g = DynamicGraph(453, 2, SMALL)
    assert g.vertices.capacity == 512
    g.insert_vertices(59)
    assert g.num_vertices == 512 and g.vertices.capacity == 512
    assert g.arena.reservation_count == 3
    g.insert_vertices(1)
    assert g.vertices.capacity == 1024 and g.num_vertices == 513
    assert g.dict_bytes == 1024 * 16
    g.insert_vertices(0)
    assert g.num_vertices == 513


def test_insert_vertices_doubles_repeatedly():
    g = DynamicGraph(3, 2, SMALL)
    g.insert_batch(batch([(0, 1), (2, 2)], 3))
    new = g.insert_vertices(30)
    assert list(new) == list(range(3, 33))
    assert g.vertices.capacity == 64
    assert g.adjacency(0) == [1] and g.adjacency(2) == [2]
    g.insert_batch(batch([(32, 0)], 33))
    assert g.adjacency(32) == [0] and g.check() == []


def test_insert_vertices_arena_exhausted():
    g = DynamicGraph(4, 1, GraphConfig(arena_bytes=4 * 56 * 2 + 64))
    with pytest.raises(InsufficientCapacity):
        g.insert_vertices(1000)
    assert g.num_vertices == 4 and g.vertices.capacity == 4


def test_delete_vertices():
    g = graph(n=4)
    g.insert_batch(batch([(0, 1), (1, 0)], 4))
    queued = g.pool.queued
    g.delete_vertices([0])
    assert not g.query_edge(0, 1) and g.adjacency(0) == []
    assert g.pool.queued == queued + 1  # reclaimed
    g.delete_vertices([0, 9])  # already dead / unknown: ignored
    g.delete_vertices([1, 2, 3])
    assert g.vertices.capacity == 4 and g.stats()["vertices"] == 0
    new = g.insert_vertices(1)
    assert g.sentinel(new[0]).block_count == 0 and g.adjacency(new[0]) == []
    assert g.check() == []


def test_delete_vertices_without_reclaim_keeps_blocks():
    g = graph(n=4, reclaim_on_delete=False)
    g.insert_batch(batch([(0, 1)], 4))
    queued = g.pool.queued
    g.delete_vertices([0])
    assert g.pool.queued == queued and not g.query_edge(0, 1)
    assert g.check() == []


# ---------------------------------------------------------------- determinism


def _run(ops, n, B, workers, reclaim):
    g = DynamicGraph(n, B, GraphConfig(arena_bytes=1 << 20, workers=workers, reclaim_on_delete=reclaim))
    for kind, pairs in ops:
        b = batch(pairs, n, kind)
        g.insert_batch(b) if kind == "insert" else g.delete_batch(b)
    assert g.check() == []
    return g.state_digest()


@settings(max_examples=40, deadline=None)
@given(
    st.lists(
        st.tuples(
            st.sampled_from(["insert", "insert", "delete"]),
            st.lists(st.tuples(st.integers(0, 9), st.integers(0, 9)), max_size=60),
        ),
        min_size=1,
        max_size=8,
    ),
    st.integers(1, 5),
    st.booleans(),
)
def test_state_independent_of_worker_count(ops, B, reclaim):
    digests = {_run(ops, 10, B, w, reclaim) for w in (0, 1, 4)}
    assert len(digests) == 1


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.booleans())
def test_oracle_equivalence_small(seed, workers):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 30))
    g = DynamicGraph(n, int(rng.integers(1, 6)), GraphConfig(arena_bytes=1 << 20, workers=2 * workers))
    o = OracleGraph(n)
    for _ in range(6):
        m = int(rng.integers(0, 60))
        kind = "insert" if rng.random() < 0.6 else "delete"
        b = CsrBatch.from_edges(rng.integers(0, n, m), rng.integers(0, n, m), n, kind)
        g.insert_batch(b) if kind == "insert" else g.delete_batch(b)
        oracle_apply(o, b)
        assert g.check() == []
        assert oracle_compare(o, g) == []


def test_stats_and_memory():
    g = graph(n=8, block_size=2)
    g.insert_batch(batch([(0, d) for d in range(5)] + [(1, 1)], 8))
    g.delete_batch(batch([(0, 0)], 8, "delete"))
    s = g.stats()
    assert s["edges"] == 5 and s["blocks"] == 4
    assert s["cbt_heights"] == {1: 1, 2: 1}
    assert s["hole_ratio"] == pytest.approx(1 / 6)
    m = g.memory()
    assert m.blocks == 4 * (2 * 8 + 24)
    assert m.total == m.dictionary + m.sentinels + m.pool
    assert g.sentinel(5).cbt_root is None and g.sentinels.root[5] == NIL
