import numpy as np
import pytest
from hypothesis import given, strategies as st

from brute import heap_in_order, heap_path
from dyngraph.core import (
    NIL,
    BlockStore,
    SentinelTable,
    VertexDictionary,
    cbt_attach,
    cbt_height,
    cbt_position_bits,
    check_invariants,
    closest_pow2,
    in_order_blocks,
    locate_block,
    locate_many,
)
from dyngraph.errors import DyngraphError, StructuralError


@pytest.mark.parametrize("n, expected", [(453, 512), (512, 512), (1, 1), (2, 2), (3, 4), (513, 1024)])
def test_closest_pow2(n, expected):
    assert closest_pow2(n) == expected


def test_closest_pow2_rejects_zero():
    with pytest.raises(DyngraphError):
        closest_pow2(0)


@given(st.integers(1, 1 << 40))
def test_closest_pow2_properties(n):
    p = closest_pow2(n)
    assert p >= n and p & (p - 1) == 0
    assert p == 1 or p // 2 < n
    assert closest_pow2(p) == p


def test_bit_string_examples():
    assert cbt_position_bits(9) == "001"
    assert cbt_position_bits(1) == ""
    # brute-force heap layout: node 12 is reached by R, L, L
    assert heap_path(12) == ["R", "L", "L"]
    assert cbt_position_bits(12) == "100"


def test_bit_string_matches_heap_layout_up_to_4096():
    for k in range(1, 4097):
        expected = "".join("1" if m == "R" else "0" for m in heap_path(k))
        assert cbt_position_bits(k) == expected


def _tree(n, block_size=2):
    store = BlockStore(block_size, rows=n)
    sentinels = SentinelTable(1)
    for h in range(n):
        cbt_attach(store, sentinels, 0, h, h + 1)
    return store, sentinels


def test_attach_first_block_becomes_root():
    store, sn = _tree(1)
    assert sn.root[0] == 0 and sn.block_count[0] == 1
    assert store.left[0] == NIL and store.right[0] == NIL


def test_attach_ninth_block_goes_right_of_left_left():
    store, sn = _tree(9)
    left_left = store.left[store.left[sn.root[0]]]
    assert store.right[left_left] == 8
    assert store.left[left_left] == 7


def test_attach_fourth_block_is_left_child_of_position_two():
    store, sn = _tree(4)
    # handle h sits at level-order position h + 1
    assert store.left[1] == 3


def test_attach_out_of_order_is_structural_error():
    store, sn = _tree(3)
    store.ensure(10)
    with pytest.raises(StructuralError):
        cbt_attach(store, sn, 0, 5, 5)
    with pytest.raises(StructuralError):
        cbt_attach(store, sn, 0, 5, 3)


def test_attach_agrees_with_heap_layout_up_to_4096():
    n = 4096
    store, sn = _tree(n)
    # parent of position k is k // 2 in the heap layout
    for k in range(2, n + 1):
        parent = k // 2 - 1
        side = store.right if k % 2 else store.left
        assert side[parent] == k - 1
    positions = np.arange(1, n + 1)
    located = locate_many(store, np.full(n, sn.root[0]), positions)
    assert (located == positions - 1).all()
    for k in (1, 9, 12, 4096):
        assert locate_block(store, int(sn.root[0]), k) == k - 1


def test_in_order_examples():
    store = BlockStore(2)
    assert in_order_blocks(store, NIL) == []
    store, sn = _tree(1)
    assert in_order_blocks(store, sn.root[0]) == [0]
    store, sn = _tree(3)
    assert in_order_blocks(store, sn.root[0]) == [1, 0, 2]


@given(st.integers(1, 300))
def test_in_order_matches_brute_force(n):
    store, sn = _tree(n)
    assert in_order_blocks(store, sn.root[0]) == [k - 1 for k in heap_in_order(n)]


def test_cbt_height():
    assert [cbt_height(n) for n in (0, 1, 2, 3, 4, 7, 8, 9)] == [0, 1, 2, 2, 3, 3, 4, 4]


def test_vertex_dictionary():
    vd = VertexDictionary(453)
    assert vd.capacity == 512 and vd.logical_size == 453
    assert vd.slot(3).alive and vd.slot(3).sentinel == 3
    assert not vd.is_live(453)
    vd.migrate(1024)
    assert vd.capacity == 1024 and vd.alive[:453].all() and not vd.alive[453:].any()


def test_block_snapshot():
    store = BlockStore(4, rows=1)
    store.dest[0, :2] = [7, 9]
    store.tomb[0, 1] = True
    store.occupied[0] = 2
    store.active[0] = 1
    b = store.block(0)
    assert [e.destination for e in b.entries] == [7, 9]
    assert [e.tombstone for e in b.entries] == [False, True]
    assert b.left_child is None and b.active_count == 1


def test_check_invariants_detects_broken_link():
    store, sn = _tree(5, block_size=1)
    vd = VertexDictionary(1)
    store.occupied[:5] = 1
    store.active[:5] = 1
    sn.active[0] = 5
    sn.last_block[0] = 4
    sn.last_offset[0] = 1
    assert check_invariants(store, sn, vd) == []
    store.right[1] = NIL  # drop position 5
    assert any("not complete" in p or "disagree" in p for p in check_invariants(store, sn, vd))
