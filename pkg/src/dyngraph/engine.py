"""Batched edge and vertex updates on the dynamic graph.

Every batch runs in three phases:

1. sequential planning: validation, per-vertex block requirements, prefix
   sum over the requirements, free space left in each last-insert block;
2. the per-vertex phase: each source vertex is one logical worker that owns
   its sentinel, its blocks and a disjoint slice of the edge queue;
3. sequential commit: the queue front moves once, the pool may grow, and
   emptied tail blocks are reclaimed after deletes.

Phase 2 has two interchangeable kernels.  With ``workers=0`` (the default)
the per-vertex work of the whole batch is expressed as numpy array operations.
With ``workers>=1`` the literal per-vertex loops run on a thread pool.  Both
produce bit-identical state.
"""

from __future__ import annotations

import hashlib
import logging
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .core import (
    HANDLE_BYTES,
    NIL,
    SENTINEL_BYTES,
    SLOT_BYTES,
    SentinelTable,
    VertexDictionary,
    _depth,
    cbt_attach,
    cbt_height,
    check_invariants,
    in_order_blocks,
    locate_many,
)
from .errors import InsufficientCapacity, MalformedBatch
from .pool import DEFAULT_ARENA_BYTES, Arena, BlockPool, GrowthPolicy

logger = logging.getLogger(__name__)

INSERT = "insert"
DELETE = "delete"


@dataclass
class CsrBatch:
    """One update batch: edges of source ``i`` are ``destinations[offsets[i]:offsets[i+1]]``."""

    offsets: np.ndarray
    destinations: np.ndarray
    kind: str = INSERT

    def __post_init__(self):
        self.offsets = np.asarray(self.offsets, dtype=np.int64)
        self.destinations = np.asarray(self.destinations, dtype=np.int64)
        if self.kind not in (INSERT, DELETE):
            raise MalformedBatch(f"unknown batch kind {self.kind!r}")

    @classmethod
    def from_edges(cls, sources, destinations, num_vertices: int, kind: str = INSERT) -> "CsrBatch":
        """Build a batch from parallel edge arrays; edge order within a source is kept."""
        src = np.asarray(sources, dtype=np.int64)
        dst = np.asarray(destinations, dtype=np.int64)
        if src.shape != dst.shape:
            raise MalformedBatch("sources and destinations differ in length")
        if src.size and (src.min() < 0 or src.max() >= num_vertices):
            raise MalformedBatch("source vertex out of range")
        order = np.argsort(src, kind="stable")
        counts = np.bincount(src, minlength=num_vertices)
        offsets = np.zeros(num_vertices + 1, dtype=np.int64)
        np.cumsum(counts, out=offsets[1:])
        return cls(offsets, dst[order], kind)

    @classmethod
    def empty(cls, num_vertices: int, kind: str = INSERT) -> "CsrBatch":
        return cls(np.zeros(num_vertices + 1, dtype=np.int64), np.empty(0, dtype=np.int64), kind)

    @property
    def vertex_count(self) -> int:
        return len(self.offsets) - 1

    @property
    def num_edges(self) -> int:
        return int(self.destinations.size)

    def degrees(self) -> np.ndarray:
        return np.diff(self.offsets)

    def sources(self) -> np.ndarray:
        return np.repeat(np.arange(self.vertex_count, dtype=np.int64), self.degrees())

    def validate(self, num_vertices: int) -> None:
        off, dst = self.offsets, self.destinations
        if off.ndim != 1 or off.size < 1:
            raise MalformedBatch("offsets must be a non-empty 1-D array")
        if off[0] != 0:
            raise MalformedBatch(f"offsets must start at 0, got {off[0]}")
        if (np.diff(off) < 0).any():
            raise MalformedBatch("offsets are not non-decreasing")
        if off[-1] != dst.size:
            raise MalformedBatch(f"last offset {off[-1]} != {dst.size} destinations")
        if self.vertex_count > num_vertices:
            raise MalformedBatch(f"batch spans {self.vertex_count} vertices, graph has {num_vertices}")
        if dst.size and (dst.min() < 0 or dst.max() >= num_vertices):
            raise MalformedBatch("destination vertex out of range")

    def padded(self, num_vertices: int) -> np.ndarray:
        """Offsets extended with empty rows up to ``num_vertices``."""
        if self.vertex_count == num_vertices:
            return self.offsets
        pad = np.full(num_vertices - self.vertex_count, self.offsets[-1], dtype=np.int64)
        return np.concatenate([self.offsets, pad])


@dataclass
class BatchPlan:
    blocks_required: np.ndarray
    prefix_sum: np.ndarray
    space_remaining: np.ndarray

    @property
    def total_blocks(self) -> int:
        return int(self.prefix_sum[-1]) if self.prefix_sum.size else 0

    def queue_range(self, v: int) -> tuple[int, int]:
        """(offset from front, count) of the queue slice assigned to vertex ``v``."""
        count = int(self.blocks_required[v])
        return int(self.prefix_sum[v]) - count, count


@dataclass
class GraphConfig:
    arena_bytes: int = DEFAULT_ARENA_BYTES
    initial_fraction: float = 0.5
    trigger_fraction: float = 0.8
    growth_fraction: float = 0.25
    reclaim_on_delete: bool = True
    workers: int = 0

    @property
    def policy(self) -> GrowthPolicy:
        return GrowthPolicy(self.initial_fraction, self.trigger_fraction, self.growth_fraction)


@dataclass(frozen=True)
class MemorySnapshot:
    dictionary: int
    sentinels: int
    blocks: int
    queue: int
    reserved: int = field(default=0, compare=False)

    @property
    def pool(self) -> int:
        return self.blocks + self.queue

    @property
    def total(self) -> int:
        return self.dictionary + self.sentinels + self.blocks + self.queue


def compute_block_size(first_batch: CsrBatch) -> int:
    """Average degree over the vertices with at least one edge, rounded, at least 1."""
    deg = first_batch.degrees()
    nonzero = int(np.count_nonzero(deg))
    if nonzero == 0:
        raise MalformedBatch("the first batch has no edges; cannot size edge blocks")
    return max(1, round(first_batch.num_edges / nonzero))


class DynamicGraph:
    def __init__(self, num_vertices: int, block_size: int, config: GraphConfig | None = None):
        self.config = config or GraphConfig()
        self.arena = Arena(self.config.arena_bytes)
        self.vertices = VertexDictionary(num_vertices)
        cap = self.vertices.capacity
        self.dict_bytes = self.arena.reserve(cap * SLOT_BYTES, "vertex dictionary")
        self.sentinels = SentinelTable(cap)
        self.sentinel_bytes = self.arena.reserve(cap * SENTINEL_BYTES, "edge sentinels")
        self.pool = BlockPool(self.arena, self.config.policy, block_size)

    @classmethod
    def from_first_batch(
        cls, batch: CsrBatch, config: GraphConfig | None = None, block_size: int | None = None
    ) -> "DynamicGraph":
        """Initialize from the first batch's vertex count, sizing blocks from it if needed."""
        if block_size is None:
            block_size = compute_block_size(batch)
        return cls(batch.vertex_count, block_size, config)

    @property
    def store(self):
        return self.pool.store

    @property
    def block_size(self) -> int:
        return self.pool.block_size

    @property
    def num_vertices(self) -> int:
        return self.vertices.logical_size

    def sentinel(self, v: int):
        return self.sentinels.sentinel(v)

    def blocks_of(self, v: int) -> list[int]:
        return in_order_blocks(self.store, int(self.sentinels.root[v]))

    # ------------------------------------------------------------------ planning

    def plan_batch(self, batch: CsrBatch) -> BatchPlan:
        if batch.kind != INSERT:
            raise MalformedBatch("only insert batches are planned")
        n = self.num_vertices
        batch.validate(n)
        offsets = batch.padded(n)
        deg = np.diff(offsets)
        dead = ~self.vertices.alive[:n]
        if (deg[dead] > 0).any():
            raise MalformedBatch(f"insert from deleted vertex {int(np.flatnonzero(dead & (deg > 0))[0])}")
        B = self.block_size
        sn = self.sentinels
        space = np.where(sn.block_count[:n] > 0, B - sn.last_offset[:n], 0)
        need = np.maximum(deg - space, 0)
        req = -(-need // B)
        return BatchPlan(req, np.cumsum(req), space)

    # ------------------------------------------------------------------ inserts

    def insert_batch(self, batch: CsrBatch) -> BatchPlan:
        plan = self.plan_batch(batch)
        n = self.num_vertices
        if batch.num_edges == 0:
            return plan
        total = plan.total_blocks
        self.pool.ensure_available(total)
        front = self.pool.queue.front
        # sizes the block store for the whole batch before any worker runs
        handles = self.pool.pop_range(front, total)
        offsets = batch.padded(n)
        if self.config.workers:
            self._run_workers(
                np.flatnonzero(np.diff(offsets)),
                lambda v: self._insert_worker(int(v), offsets, batch.destinations, plan, front),
            )
        else:
            self._insert_vectorized(offsets, batch.destinations, plan, handles)
        self.pool.commit_front(total)
        return plan

    def _run_workers(self, vertices: np.ndarray, fn) -> None:
        workers = self.config.workers
        if workers == 1 or vertices.size < 2:
            for v in vertices:
                fn(v)
            return

        def run(chunk):
            for v in chunk:
                fn(v)

        with ThreadPoolExecutor(max_workers=workers) as ex:
            list(ex.map(run, np.array_split(vertices, workers)))

    def _insert_worker(self, v: int, offsets, destinations, plan: BatchPlan, front: int) -> None:
        st, sn, B = self.store, self.sentinels, self.block_size
        offset, count = plan.queue_range(v)
        new = [int(h) for h in self.pool.pop_range(front + offset, count)]
        fresh_adjacency = sn.block_count[v] == 0
        for h in new:
            cbt_attach(st, sn, v, h, int(sn.block_count[v]) + 1)
        if not fresh_adjacency and B - sn.last_offset[v] > 0:
            block, slot, nxt = int(sn.last_block[v]), int(sn.last_offset[v]), 0
        else:
            block, slot, nxt = new[0], 0, 1
        start, end = int(offsets[v]), int(offsets[v + 1])
        for e in destinations[start:end]:
            if slot >= B:
                block, slot = new[nxt], 0
                nxt += 1
            st.dest[block, slot] = e
            st.tomb[block, slot] = False
            st.active[block] += 1
            slot += 1
            if slot > st.occupied[block]:
                st.occupied[block] = slot
        sn.active[v] += end - start
        sn.last_block[v] = block
        sn.last_offset[v] = slot

    def _insert_vectorized(self, offsets, destinations, plan: BatchPlan, handles: np.ndarray) -> None:
        st, sn, B = self.store, self.sentinels, self.block_size
        n = self.num_vertices
        req = plan.blocks_required
        first = plan.prefix_sum - req

        if handles.size:
            vs = np.flatnonzero(req)
            owner = np.repeat(vs, req[vs])
            k = np.arange(handles.size) - np.repeat(first[vs], req[vs])
            pos = sn.block_count[owner] + 1 + k
            self._attach_many(owner, handles, pos)
            sn.block_count[vs] += req[vs]

        deg = np.diff(offsets)
        E = destinations.size
        src = np.repeat(np.arange(n, dtype=np.int64), deg)
        j = np.arange(E, dtype=np.int64) - np.repeat(offsets[:-1], deg)
        space = plan.space_remaining[src]
        old = j < space
        h = np.empty(E, dtype=np.int64)
        slot = np.empty(E, dtype=np.int64)
        h[old] = sn.last_block[src[old]]
        slot[old] = sn.last_offset[src[old]] + j[old]
        fresh = ~old
        kk = j[fresh] - space[fresh]
        h[fresh] = handles[first[src[fresh]] + kk // B]
        slot[fresh] = kk % B

        st.dest[h, slot] = destinations
        st.tomb[h, slot] = False
        touched, per_block = np.unique(h, return_counts=True)
        st.active[touched] += per_block
        np.maximum.at(st.occupied, h, slot + 1)

        sn.active[:n] += deg
        vd = np.flatnonzero(deg)
        last = offsets[vd + 1] - 1
        sn.last_block[vd] = h[last]
        sn.last_offset[vd] = slot[last] + 1

    def _attach_many(self, owner: np.ndarray, handles: np.ndarray, pos: np.ndarray) -> None:
        """Link new blocks at level-order ``pos``, shallowest first so parents exist."""
        st, sn = self.store, self.sentinels
        depth = _depth(pos)
        for d in range(int(depth.max()) + 1):
            m = depth == d
            v, h, p = owner[m], handles[m], pos[m]
            if d == 0:
                sn.root[v] = h
                continue
            parent = locate_many(st, sn.root[v], p >> 1)
            right = (p & 1) == 1
            for side, sel in ((st.right, right), (st.left, ~right)):
                par = parent[sel]
                if (par == NIL).any() or (side[par] != NIL).any():
                    raise AssertionError("CBT attach target is missing or occupied")
                side[par] = h[sel]
        st.owner[handles] = owner

    # ------------------------------------------------------------------ deletes

    def delete_batch(self, batch: CsrBatch) -> int:
        """Tombstone every live entry listed in ``batch``; returns the number removed."""
        if batch.kind != DELETE:
            raise MalformedBatch("delete_batch needs a delete batch")
        n = self.num_vertices
        batch.validate(n)
        if batch.num_edges == 0:
            return 0
        offsets = batch.padded(n)
        deg = np.diff(offsets)
        sn = self.sentinels
        touched = np.flatnonzero((deg > 0) & self.vertices.alive[:n] & (sn.block_count[:n] > 0))
        before = int(sn.active[touched].sum())
        if self.config.workers:
            self._run_workers(touched, lambda v: self._delete_worker(int(v), offsets, batch.destinations))
        else:
            self._delete_vectorized(touched, offsets, batch.destinations)
        removed = before - int(sn.active[touched].sum())
        if self.config.reclaim_on_delete:
            self._trim_tails(touched)
        return removed

    def _delete_worker(self, v: int, offsets, destinations) -> None:
        st, sn = self.store, self.sentinels
        targets = set(destinations[offsets[v] : offsets[v + 1]].tolist())
        for h in in_order_blocks(st, int(sn.root[v])):
            for slot in range(int(st.occupied[h])):
                if not st.tomb[h, slot] and int(st.dest[h, slot]) in targets:
                    st.tomb[h, slot] = True
                    st.active[h] -= 1
                    sn.active[v] -= 1

    def _delete_vectorized(self, touched: np.ndarray, offsets, destinations) -> None:
        if touched.size == 0:
            return
        st, sn, B = self.store, self.sentinels, self.block_size
        n = self.num_vertices
        keys = np.repeat(np.arange(n, dtype=np.int64), np.diff(offsets)) * n + destinations
        cand = np.flatnonzero(np.isin(st.owner, touched))
        owners = st.owner[cand]
        entry_keys = owners[:, None] * n + st.dest[cand]
        live = (np.arange(B) < st.occupied[cand][:, None]) & ~st.tomb[cand]
        hit = live & np.isin(entry_keys, keys)
        st.tomb[cand] |= hit
        per_block = hit.sum(axis=1)
        st.active[cand] -= per_block
        sn.active[:n] -= np.bincount(owners, weights=per_block, minlength=n).astype(np.int64)

    def _trim_tails(self, vertices: np.ndarray) -> None:
        """Detach and reclaim empty blocks from the end of each CBT.

        Only tail blocks can leave without breaking completeness; empty blocks
        further inside the tree stay attached as holes.
        """
        st, sn = self.store, self.sentinels
        freed = []
        changed = []
        vs = vertices
        while vs.size:
            vs = vs[sn.block_count[vs] > 0]
            tails = locate_many(st, sn.root[vs], sn.block_count[vs])
            empty = st.active[tails] == 0
            vs, tails = vs[empty], tails[empty]
            if vs.size == 0:
                break
            p = sn.block_count[vs]
            inner = p > 1
            parent = locate_many(st, sn.root[vs[inner]], p[inner] >> 1)
            right = (p[inner] & 1) == 1
            st.right[parent[right]] = NIL
            st.left[parent[~right]] = NIL
            sn.root[vs[~inner]] = NIL
            sn.block_count[vs] -= 1
            st.owner[tails] = NIL
            freed.append(tails)
            changed.append(vs)
        if not freed:
            return
        self.pool.reclaim(np.concatenate(freed))
        vs = np.unique(np.concatenate(changed))
        bc = sn.block_count[vs]
        gone = vs[bc == 0]
        sn.last_block[gone] = NIL
        sn.last_offset[gone] = 0
        keep = vs[bc > 0]
        tails = locate_many(st, sn.root[keep], sn.block_count[keep])
        sn.last_block[keep] = tails
        sn.last_offset[keep] = st.occupied[tails]

    # ------------------------------------------------------------------ queries

    def query_edge(self, source: int, destination: int) -> bool:
        if not self.vertices.is_live(source):
            return False
        blocks = in_order_blocks(self.store, int(self.sentinels.root[source]))
        if not blocks:
            return False
        search = np.asarray(blocks, dtype=np.int64)
        return bool(self._fan_out(search, np.asarray([destination]))[0])

    def _fan_out(self, search: np.ndarray, destinations: np.ndarray) -> np.ndarray:
        # one logical worker per (block, slot): block = i // B, slot = i % B
        st, B = self.store, self.block_size
        i = np.arange(search.size * B)
        h, slot = search[i // B], i % B
        values = st.dest[h, slot]
        live = (slot < st.occupied[h]) & ~st.tomb[h, slot]
        return np.isin(destinations, values[live])

    def query_edges(self, sources, destinations) -> np.ndarray:
        """Answer many queries, traversing each distinct source once."""
        sources = np.asarray(sources, dtype=np.int64)
        destinations = np.asarray(destinations, dtype=np.int64)
        out = np.zeros(sources.size, dtype=bool)
        order = np.argsort(sources, kind="stable")
        uniq, starts = np.unique(sources[order], return_index=True)
        ends = np.append(starts[1:], order.size)
        for s, a, b in zip(uniq.tolist(), starts, ends):
            if not self.vertices.is_live(s):
                continue
            blocks = in_order_blocks(self.store, int(self.sentinels.root[s]))
            if blocks:
                idx = order[a:b]
                out[idx] = self._fan_out(np.asarray(blocks, dtype=np.int64), destinations[idx])
        return out

    def adjacency(self, v: int) -> list[int]:
        """Live destinations of ``v`` in in-order block order."""
        if not self.vertices.is_live(v):
            return []
        st = self.store
        out: list[int] = []
        for h in in_order_blocks(st, int(self.sentinels.root[v])):
            occ = int(st.occupied[h])
            out.extend(st.dest[h, :occ][~st.tomb[h, :occ]].tolist())
        return out

    def edge_counter(self) -> dict[int, Counter]:
        return {
            v: Counter(adj)
            for v in np.flatnonzero(self.vertices.alive[: self.num_vertices]).tolist()
            if (adj := self.adjacency(v))
        }

    # ------------------------------------------------------------------ vertices

    def insert_vertices(self, count: int) -> range:
        """Append ``count`` fresh vertices, doubling the dictionary as needed."""
        if count <= 0:
            return range(self.num_vertices, self.num_vertices)
        vd = self.vertices
        old_size = vd.logical_size
        new_size = old_size + count
        if new_size > vd.capacity:
            cap = vd.capacity
            while cap < new_size:
                cap *= 2
            dict_bytes = cap * SLOT_BYTES
            extra_sentinels = (cap - vd.capacity) * SENTINEL_BYTES
            if dict_bytes + extra_sentinels > self.arena.available_bytes:
                raise InsufficientCapacity(f"arena cannot host a dictionary of {cap} slots")
            self.arena.reserve(dict_bytes, "vertex dictionary")
            self.arena.reserve(extra_sentinels, "edge sentinels")
            vd.migrate(cap)
            self.arena.release(self.dict_bytes)
            self.dict_bytes = dict_bytes
            self.sentinel_bytes += extra_sentinels
            self.sentinels.grow(cap)
        vd.alive[old_size:new_size] = True
        vd.logical_size = new_size
        self.sentinels.reset(slice(old_size, new_size))
        return range(old_size, new_size)

    def delete_vertices(self, ids) -> None:
        st, sn = self.store, self.sentinels
        for v in ids:
            v = int(v)
            if not self.vertices.is_live(v):
                logger.warning("delete of unknown or already deleted vertex %d ignored", v)
                continue
            self.vertices.alive[v] = False
            if self.config.reclaim_on_delete and sn.block_count[v] > 0:
                blocks = np.asarray(in_order_blocks(st, int(sn.root[v])), dtype=np.int64)
                st.left[blocks] = NIL
                st.right[blocks] = NIL
                st.active[blocks] = 0
                self.pool.reclaim(blocks)
                sn.reset(v)

    # ------------------------------------------------------------------ reporting

    def memory(self) -> MemorySnapshot:
        return MemorySnapshot(
            dictionary=self.dict_bytes,
            sentinels=self.sentinel_bytes,
            blocks=self.pool.in_use * self.pool.block_bytes,
            queue=self.pool.queue.total_capacity * HANDLE_BYTES,
            reserved=self.arena.reserved_bytes,
        )

    def stats(self) -> dict:
        n = self.num_vertices
        alive = self.vertices.alive[:n]
        bc = self.sentinels.block_count[:n]
        st = self.store
        in_use = st.owner != NIL
        occupied = int(st.occupied[in_use].sum())
        holes = occupied - int(st.active[in_use].sum())
        heights = Counter(cbt_height(c) for c in bc[alive & (bc > 0)].tolist())
        return {
            "vertices": int(alive.sum()),
            "logical_size": n,
            "capacity": self.vertices.capacity,
            "edges": int(self.sentinels.active[:n][alive].sum()),
            "blocks": int(in_use.sum()),
            "block_size": self.block_size,
            "cbt_heights": dict(sorted(heights.items())),
            "hole_ratio": holes / occupied if occupied else 0.0,
            "queued_blocks": self.pool.queued,
            "reservations": self.arena.reservation_count,
        }

    def check(self) -> list[str]:
        """All structural invariants of the graph and its pool; empty when sound."""
        n = self.num_vertices
        sn = self.sentinels
        problems = check_invariants(self.store, sn, self.vertices)
        empty = sn.block_count[:n] == 0
        if (sn.last_block[:n][empty] != NIL).any() or (sn.active[:n][empty] != 0).any():
            problems.append("empty adjacency with stale sentinel fields")
        problems += self.pool.check(np.flatnonzero(self.store.owner != NIL))
        return problems

    def state_digest(self) -> str:
        """Hash of the full structural state, for determinism checks."""
        h = hashlib.sha256()
        st, sn, n = self.store, self.sentinels, self.num_vertices
        rows = self.pool.handles_created
        for arr in (st.dest, st.tomb, st.active, st.occupied, st.left, st.right, st.owner):
            part = arr[: min(rows, len(arr))]
            h.update(np.ascontiguousarray(part).tobytes())
        for arr in (sn.active, sn.block_count, sn.root, sn.last_block, sn.last_offset, self.vertices.alive):
            h.update(np.ascontiguousarray(arr[:n]).tobytes())
        h.update(self.pool.queue.handles_below(len(st)).tobytes())
        return h.hexdigest()
