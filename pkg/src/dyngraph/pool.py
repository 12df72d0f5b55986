"""Simulated memory arena and the edge queue of pre-allocated edge blocks.

The arena only does accounting: it tracks how many bytes are reserved and how
many reservation calls were made.  The pool reserves a large share of it at
launch, turns that into edge-block handles and serves them through a queue.
Workers read disjoint slices of the queue (computed from a prefix sum of their
block requirements) and the shared front pointer moves once per batch.
"""

from __future__ import annotations

import bisect
import logging
from dataclasses import dataclass

import numpy as np

from .core import HANDLE_BYTES, BlockStore, NIL, bytes_per_block
from .errors import InsufficientCapacity, PoolUnderflow, RangeExceedsQueue, StructuralError

logger = logging.getLogger(__name__)

DEFAULT_ARENA_BYTES = 8 << 30


class Arena:
    def __init__(self, capacity_bytes: int = DEFAULT_ARENA_BYTES):
        if capacity_bytes < 0:
            raise ValueError("arena capacity must be non-negative")
        self.capacity_bytes = int(capacity_bytes)
        self.reserved_bytes = 0
        self.reservation_count = 0
        self.log: list[tuple[str, int]] = []

    @property
    def available_bytes(self) -> int:
        return self.capacity_bytes - self.reserved_bytes

    def reserve(self, nbytes: int, tag: str = "") -> int:
        nbytes = int(nbytes)
        if nbytes > self.available_bytes:
            raise InsufficientCapacity(
                f"cannot reserve {nbytes} bytes for {tag or 'reservation'}: "
                f"{self.available_bytes} of {self.capacity_bytes} available"
            )
        self.reserved_bytes += nbytes
        self.reservation_count += 1
        self.log.append((tag, nbytes))
        return nbytes

    def release(self, nbytes: int) -> None:
        if nbytes > self.reserved_bytes:
            raise StructuralError("releasing more than was reserved")
        self.reserved_bytes -= int(nbytes)


@dataclass(frozen=True)
class GrowthPolicy:
    initial_fraction: float = 0.5
    trigger_fraction: float = 0.8
    growth_fraction: float = 0.25

    def __post_init__(self):
        for name in ("initial_fraction", "trigger_fraction", "growth_fraction"):
            value = getattr(self, name)
            if not 0 < value <= 1:
                raise ValueError(f"{name} must be in (0, 1], got {value}")


class EdgeQueue:
    """FIFO of free block handles addressed by unwrapped positions.

    Positions ``front..rear-1`` hold queued handles.  Storage is a list of
    segments, each either a run of fresh consecutive handles (kept lazily, so a
    multi-gigabyte initial reservation costs nothing) or an array of
    reclaimed handles.
    """

    def __init__(self):
        self.front = 0
        self.rear = 0
        self.total_capacity = 0
        self._starts: list[int] = []
        self._segments: list[tuple[int, int] | np.ndarray] = []

    def __len__(self) -> int:
        return self.rear - self.front

    def push_fresh(self, first_handle: int, count: int) -> None:
        if count <= 0:
            return
        self._starts.append(self.rear)
        self._segments.append((int(first_handle), int(count)))
        self.rear += count
        self.total_capacity += count

    def push(self, handles: np.ndarray) -> None:
        handles = np.asarray(handles, dtype=np.int64)
        if handles.size == 0:
            return
        self._starts.append(self.rear)
        self._segments.append(handles.copy())
        self.rear += handles.size

    def read(self, start: int, count: int) -> np.ndarray:
        if count < 0 or start < self.front or start + count > self.rear:
            raise RangeExceedsQueue(
                f"range [{start}, {start + count}) outside queue [{self.front}, {self.rear})"
            )
        out = np.empty(count, dtype=np.int64)
        filled = 0
        i = bisect.bisect_right(self._starts, start) - 1
        while filled < count:
            seg_start, seg = self._starts[i], self._segments[i]
            lo = start + filled - seg_start
            if isinstance(seg, tuple):
                first, seg_len = seg
                take = min(seg_len - lo, count - filled)
                out[filled : filled + take] = np.arange(first + lo, first + lo + take)
            else:
                take = min(seg.size - lo, count - filled)
                out[filled : filled + take] = seg[lo : lo + take]
            filled += take
            i += 1
        return out

    def handles_below(self, limit: int) -> np.ndarray:
        """Queued handles smaller than ``limit`` (fresh runs are clipped, not expanded)."""
        parts = []
        for i, seg in enumerate(self._segments):
            lo = max(self.front - self._starts[i], 0)
            if isinstance(seg, tuple):
                first, seg_len = seg
                hi = min(seg_len, max(limit - first, 0))
                if hi > lo:
                    parts.append(np.arange(first + lo, first + hi))
            else:
                part = seg[lo:]
                parts.append(part[part < limit])
        return np.concatenate(parts) if parts else np.empty(0, dtype=np.int64)

    def advance(self, n: int) -> None:
        if n < 0 or self.front + n > self.rear:
            raise StructuralError(f"cannot advance front by {n}: only {len(self)} queued")
        self.front += n
        # drop segments that are entirely consumed
        k = 0
        while k < len(self._segments) and self._segment_end(k) <= self.front:
            k += 1
        if k:
            del self._starts[:k]
            del self._segments[:k]

    def _segment_end(self, i: int) -> int:
        seg = self._segments[i]
        return self._starts[i] + (seg[1] if isinstance(seg, tuple) else seg.size)


class BlockPool:
    """Edge blocks carved out of the arena, served through an ``EdgeQueue``."""

    def __init__(self, arena: Arena, policy: GrowthPolicy, block_size: int):
        self.arena = arena
        self.policy = policy
        self.block_size = int(block_size)
        self.block_bytes = bytes_per_block(self.block_size)
        self.store = BlockStore(self.block_size)
        self.queue = EdgeQueue()
        self.handles_created = 0
        self.growth_events: list[int] = []

        nbytes = int(policy.initial_fraction * arena.capacity_bytes)
        count = nbytes // self.block_bytes
        if count < 1:
            raise InsufficientCapacity(
                f"arena of {arena.capacity_bytes} bytes cannot hold one {self.block_bytes}-byte block"
            )
        arena.reserve(nbytes, "edge blocks")
        self.pool_bytes = nbytes
        self._push_fresh(count)

    def _push_fresh(self, count: int) -> None:
        self.queue.push_fresh(self.handles_created, count)
        self.handles_created += count

    @property
    def queued(self) -> int:
        return len(self.queue)

    @property
    def in_use(self) -> int:
        return self.handles_created - self.queued

    @property
    def occupancy(self) -> float:
        return self.in_use / self.queue.total_capacity

    def pop_range(self, start: int, count: int) -> np.ndarray:
        """Handles at queue positions ``[start, start+count)``; the front does not move."""
        handles = self.queue.read(start, count)
        if count:
            self.store.ensure(int(handles.max()) + 1)
        return handles

    def commit_front(self, total_popped: int) -> None:
        self.queue.advance(total_popped)
        if total_popped and self.occupancy >= self.policy.trigger_fraction:
            self.grow()

    def grow(self) -> int:
        """Push ``growth_fraction`` more handles, or as many as the arena allows.

        Returns the number of handles pushed; 0 means the arena is exhausted.
        """
        want = max(1, int(self.policy.growth_fraction * self.queue.total_capacity))
        count = min(want, self.arena.available_bytes // self.block_bytes)
        if count <= 0:
            logger.info("edge queue growth requested but the arena is exhausted")
            return 0
        self.pool_bytes += self.arena.reserve(count * self.block_bytes, "edge block growth")
        self._push_fresh(count)
        self.growth_events.append(count)
        return count

    def ensure_available(self, needed: int) -> None:
        while self.queued < needed:
            if self.grow() == 0:
                raise PoolUnderflow(f"batch needs {needed} blocks, only {self.queued} can be supplied")

    def reclaim(self, handles) -> None:
        handles = np.asarray(handles, dtype=np.int64)
        if handles.size == 0:
            return
        st = self.store
        if (st.active[handles] != 0).any():
            raise StructuralError("cannot reclaim a block with active entries")
        if (st.left[handles] != NIL).any() or (st.right[handles] != NIL).any():
            raise StructuralError("cannot reclaim a block that still has children")
        if np.unique(handles).size != handles.size:
            raise StructuralError("duplicate handle in reclaim")
        st.clear(handles)
        self.queue.push(handles)

    def queued_handles(self) -> np.ndarray:
        return self.queue.read(self.queue.front, self.queued)

    def check(self, attached: np.ndarray | None = None) -> list[str]:
        """Conservation checks.  ``attached`` lists the handles held by adjacencies;
        when given, attached + queued must account for every created handle."""
        problems = []
        rows = len(self.store)
        # handles >= rows were never served, so they can only sit in fresh runs
        low = self.queue.handles_below(rows)
        if np.unique(low).size != low.size:
            problems.append("handle queued twice")
        st = self.store
        if (st.active[low] != 0).any() or (st.left[low] != NIL).any() or (st.right[low] != NIL).any():
            problems.append("queued block is not empty")
        if attached is not None:
            attached = np.asarray(attached, dtype=np.int64)
            if np.intersect1d(attached, low).size:
                problems.append("handle both in use and queued")
            if attached.size + self.queued != self.handles_created:
                problems.append(
                    f"conservation broken: {attached.size} attached + {self.queued} queued "
                    f"!= {self.handles_created} created"
                )
        return problems
