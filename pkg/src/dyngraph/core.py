"""Persistent layout of the dynamic graph.

Three pieces make up the structure:

* ``VertexDictionary``: a power-of-two array of vertex slots.
* ``SentinelTable``: one edge sentinel per vertex slot holding the adjacency
  metadata (active edge count, block count, CBT root, last insert position).
* ``BlockStore``: fixed-capacity edge blocks.  The blocks of one adjacency are
  linked as a complete binary tree (CBT) whose level-order positions are
  exactly ``1..block_count``.

Everything is stored as struct-of-arrays in numpy so the batch kernels can work
on whole batches at once.  Handles are row indices into ``BlockStore``; ``-1``
means "no block".  ``EdgeBlock``/``EdgeSentinel``/``VertexSlot`` are read-only
snapshots for inspection and tests.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DyngraphError, StructuralError

NIL = -1

# Byte sizes used for arena accounting.
ENTRY_BYTES = 8  # 4-byte destination + 4-byte flag word
BLOCK_HEADER_BYTES = 24  # two 8-byte child handles, 4-byte active, 4-byte occupied
SLOT_BYTES = 16  # vertex id + sentinel pointer
SENTINEL_BYTES = 40  # active count, block count, root, last block, last offset
HANDLE_BYTES = 8


def bytes_per_block(block_size: int) -> int:
    return block_size * ENTRY_BYTES + BLOCK_HEADER_BYTES


def closest_pow2(n: int) -> int:
    """Smallest power of two >= ``n``."""
    n = int(n)
    if n < 1:
        raise DyngraphError(f"closest_pow2 needs n >= 1, got {n}")
    return 1 << (n - 1).bit_length()


def cbt_position_bits(k: int) -> str:
    """Root-to-node path of level-order position ``k`` ('0' left, '1' right).

    >>> cbt_position_bits(9)
    '001'
    """
    if k < 1:
        raise DyngraphError(f"CBT positions start at 1, got {k}")
    return bin(k)[3:]


@dataclass(frozen=True)
class EdgeEntry:
    destination: int
    tombstone: bool


@dataclass(frozen=True)
class EdgeBlock:
    handle: int
    entries: tuple[EdgeEntry, ...]  # occupied slots only
    active_count: int
    occupied_count: int
    left_child: int | None
    right_child: int | None


@dataclass(frozen=True)
class EdgeSentinel:
    active_edge_count: int
    block_count: int
    cbt_root: int | None
    last_insert_block: int | None
    last_insert_offset: int


@dataclass(frozen=True)
class VertexSlot:
    vertex_id: int
    alive: bool
    sentinel: int


def _opt(h) -> int | None:
    h = int(h)
    return None if h == NIL else h


def _grown(arr: np.ndarray, n: int, fill) -> np.ndarray:
    out = np.full((n,) + arr.shape[1:], fill, dtype=arr.dtype)
    out[: len(arr)] = arr
    return out


class BlockStore:
    """Row storage for edge blocks, indexed by handle."""

    def __init__(self, block_size: int, rows: int = 0):
        if block_size < 1:
            raise DyngraphError(f"block size must be >= 1, got {block_size}")
        self.block_size = int(block_size)
        B = self.block_size
        self.dest = np.zeros((rows, B), dtype=np.int64)
        self.tomb = np.zeros((rows, B), dtype=bool)
        self.active = np.zeros(rows, dtype=np.int64)
        self.occupied = np.zeros(rows, dtype=np.int64)
        self.left = np.full(rows, NIL, dtype=np.int64)
        self.right = np.full(rows, NIL, dtype=np.int64)
        self.owner = np.full(rows, NIL, dtype=np.int64)

    def __len__(self) -> int:
        return len(self.active)

    def ensure(self, rows: int) -> None:
        """Make handles ``0..rows-1`` addressable."""
        if rows <= len(self):
            return
        n = max(rows, 2 * len(self), 16)
        self.dest = _grown(self.dest, n, 0)
        self.tomb = _grown(self.tomb, n, False)
        self.active = _grown(self.active, n, 0)
        self.occupied = _grown(self.occupied, n, 0)
        self.left = _grown(self.left, n, NIL)
        self.right = _grown(self.right, n, NIL)
        self.owner = _grown(self.owner, n, NIL)

    def clear(self, handles) -> None:
        handles = np.asarray(handles, dtype=np.int64)
        if handles.size == 0:
            return
        self.dest[handles] = 0
        self.tomb[handles] = False
        self.active[handles] = 0
        self.occupied[handles] = 0
        self.left[handles] = NIL
        self.right[handles] = NIL
        self.owner[handles] = NIL

    def block(self, h: int) -> EdgeBlock:
        occ = int(self.occupied[h])
        entries = tuple(
            EdgeEntry(int(d), bool(t)) for d, t in zip(self.dest[h, :occ], self.tomb[h, :occ])
        )
        return EdgeBlock(
            handle=int(h),
            entries=entries,
            active_count=int(self.active[h]),
            occupied_count=occ,
            left_child=_opt(self.left[h]),
            right_child=_opt(self.right[h]),
        )


class SentinelTable:
    """Edge sentinels, one per vertex id (the sentinel handle equals the vertex id)."""

    def __init__(self, capacity: int):
        self.active = np.zeros(capacity, dtype=np.int64)
        self.block_count = np.zeros(capacity, dtype=np.int64)
        self.root = np.full(capacity, NIL, dtype=np.int64)
        self.last_block = np.full(capacity, NIL, dtype=np.int64)
        self.last_offset = np.zeros(capacity, dtype=np.int64)

    def __len__(self) -> int:
        return len(self.active)

    def grow(self, capacity: int) -> None:
        if capacity <= len(self):
            return
        self.active = _grown(self.active, capacity, 0)
        self.block_count = _grown(self.block_count, capacity, 0)
        self.root = _grown(self.root, capacity, NIL)
        self.last_block = _grown(self.last_block, capacity, NIL)
        self.last_offset = _grown(self.last_offset, capacity, 0)

    def reset(self, v) -> None:
        self.active[v] = 0
        self.block_count[v] = 0
        self.root[v] = NIL
        self.last_block[v] = NIL
        self.last_offset[v] = 0

    def sentinel(self, v: int) -> EdgeSentinel:
        return EdgeSentinel(
            active_edge_count=int(self.active[v]),
            block_count=int(self.block_count[v]),
            cbt_root=_opt(self.root[v]),
            last_insert_block=_opt(self.last_block[v]),
            last_insert_offset=int(self.last_offset[v]),
        )


class VertexDictionary:
    """Contiguous power-of-two array of vertex slots.

    Slots are never reused: deleted vertices stay in place with ``alive`` off
    and new vertices always take the next id.
    """

    def __init__(self, size: int):
        self.logical_size = int(size)
        self.capacity = closest_pow2(max(size, 1))
        self.alive = np.zeros(self.capacity, dtype=bool)
        self.alive[:size] = True

    def migrate(self, capacity: int) -> None:
        """Copy slots into a new array of ``capacity`` slots."""
        alive = np.zeros(capacity, dtype=bool)
        alive[: self.capacity] = self.alive
        self.alive = alive
        self.capacity = capacity

    def is_live(self, v: int) -> bool:
        return 0 <= v < self.logical_size and bool(self.alive[v])

    def slot(self, v: int) -> VertexSlot:
        if not 0 <= v < self.logical_size:
            raise IndexError(v)
        return VertexSlot(vertex_id=v, alive=bool(self.alive[v]), sentinel=v)


def locate_block(store: BlockStore, root: int, position: int) -> int:
    """Follow the bit path of ``position`` from ``root``; NIL if absent."""
    cur = root
    for bit in cbt_position_bits(position):
        if cur == NIL:
            return NIL
        cur = int(store.right[cur] if bit == "1" else store.left[cur])
    return cur


def cbt_attach(store: BlockStore, sentinels: SentinelTable, v: int, handle: int, position: int) -> None:
    """Link ``handle`` into the CBT of vertex ``v`` at level-order ``position``."""
    count = int(sentinels.block_count[v])
    if position != count + 1:
        raise StructuralError(
            f"vertex {v}: attach at position {position} with {count} blocks breaks completeness"
        )
    if position == 1:
        sentinels.root[v] = handle
    else:
        bits = cbt_position_bits(position)
        parent = locate_block(store, int(sentinels.root[v]), position >> 1)
        side = store.right if bits[-1] == "1" else store.left
        if parent == NIL or side[parent] != NIL:
            raise StructuralError(f"vertex {v}: no free slot for position {position}")
        side[parent] = handle
    store.owner[handle] = v
    sentinels.block_count[v] = count + 1


def in_order_blocks(store: BlockStore, root: int) -> list[int]:
    out: list[int] = []
    stack: list[int] = []
    cur = int(root)
    left, right = store.left, store.right
    while stack or cur != NIL:
        while cur != NIL:
            stack.append(cur)
            cur = int(left[cur])
        cur = stack.pop()
        out.append(cur)
        cur = int(right[cur])
    return out


def locate_many(store: BlockStore, roots: np.ndarray, positions: np.ndarray) -> np.ndarray:
    """Vectorized ``locate_block`` over parallel arrays of roots and positions."""
    positions = np.asarray(positions, dtype=np.int64)
    cur = np.asarray(roots, dtype=np.int64).copy()
    if cur.size == 0:
        return cur
    depth = _depth(positions)
    for b in range(int(depth.max()) - 1, -1, -1):
        step = depth > b
        bit = (positions >> b) & 1
        nxt = np.where(bit == 1, store.right[cur], store.left[cur])
        cur = np.where(step, nxt, cur)
    return cur


def _depth(positions: np.ndarray) -> np.ndarray:
    # floor(log2(p)) for p >= 1, exact on integers
    d = np.zeros(positions.shape, dtype=np.int64)
    p = positions.copy()
    while True:
        p >>= 1
        live = p > 0
        if not live.any():
            return d
        d += live


def cbt_height(block_count: int) -> int:
    return int(block_count).bit_length()


def check_invariants(store: BlockStore, sentinels: SentinelTable, vertices: VertexDictionary) -> list[str]:
    """Return a description of every broken structural invariant (empty if sound)."""
    problems: list[str] = []
    B = store.block_size
    n = vertices.logical_size
    bc = sentinels.block_count[:n]
    root = sentinels.root[:n]

    has = np.flatnonzero(bc > 0)
    if (root[bc == 0] != NIL).any():
        problems.append("empty adjacency with a root block")
    if (root[has] == NIL).any():
        problems.append("non-empty adjacency without a root block")
        return problems

    # Every in-use block must be referenced exactly once (as a root or a child).
    rows = len(store)
    refs = np.concatenate([root[has], store.left[store.left != NIL], store.right[store.right != NIL]])
    if refs.size and (refs.min() < 0 or refs.max() >= rows):
        problems.append("dangling block handle")
        return problems
    ref_count = np.bincount(refs, minlength=rows)
    if (ref_count > 1).any():
        problems.append(f"blocks shared or cyclic: {np.flatnonzero(ref_count > 1)[:5].tolist()}")
        return problems
    in_use = store.owner != NIL
    if (in_use != (ref_count == 1)).any():
        problems.append("owned blocks and linked blocks disagree")

    # Level-order positions by breadth-first propagation from every root.
    pos = np.zeros(rows, dtype=np.int64)
    frontier = root[has]
    pos[frontier] = 1
    if (store.owner[frontier] != has).any():
        problems.append("root block owned by another vertex")
    while frontier.size:
        nxt = []
        for side, offs in ((store.left, 0), (store.right, 1)):
            child = side[frontier]
            ok = child != NIL
            c, p = child[ok], frontier[ok]
            pos[c] = 2 * pos[p] + offs
            if (store.owner[c] != store.owner[p]).any():
                problems.append("child block owned by another vertex")
            nxt.append(c)
        frontier = np.concatenate(nxt)

    owners = store.owner[in_use]
    if owners.size and owners.max() >= n:
        problems.append("block owned by unknown vertex")
        return problems
    reached = np.bincount(owners, minlength=n)
    max_pos = np.zeros(n, dtype=np.int64)
    np.maximum.at(max_pos, owners, pos[in_use])
    bad = np.flatnonzero((reached != bc) | (max_pos != bc))
    if bad.size:
        problems.append(f"CBT not complete for vertices {bad[:5].tolist()}")

    act = store.active[in_use]
    occ = store.occupied[in_use]
    if ((act < 0) | (act > occ) | (occ > B)).any():
        problems.append("block counts out of range")
    slot_live = (np.arange(B) < occ[:, None]) & ~store.tomb[in_use]
    if (slot_live.sum(axis=1) != act).any():
        problems.append("block active count disagrees with tombstones")
    sums = np.bincount(owners, weights=act, minlength=n).astype(np.int64)
    bad = np.flatnonzero(sums != sentinels.active[:n])
    if bad.size:
        problems.append(f"adjacency active count mismatch for vertices {bad[:5].tolist()}")

    # Insertion resumes at the tail: the tail is the last insert block and all
    # earlier blocks are fully occupied.
    tails = locate_many(store, root[has], bc[has])
    if (tails != sentinels.last_block[has]).any():
        problems.append("last insert block is not the CBT tail")
    elif (store.occupied[tails] != sentinels.last_offset[has]).any():
        problems.append("last insert offset disagrees with tail occupancy")
    non_tail = in_use.copy()
    non_tail[tails] = False
    if (store.occupied[non_tail] != B).any():
        problems.append("occupied slots are not a prefix of the adjacency")
    return problems
