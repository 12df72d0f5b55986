"""Graph input: Matrix Market and edge-list readers, synthetic generators, batching."""

from __future__ import annotations

import io
import os
from dataclasses import dataclass

import numpy as np

from .engine import DELETE, INSERT, CsrBatch
from .errors import ParseError

BULK = "bulk"


@dataclass
class Csr:
    offsets: np.ndarray
    destinations: np.ndarray

    @property
    def num_vertices(self) -> int:
        return len(self.offsets) - 1

    @property
    def num_edges(self) -> int:
        return int(self.destinations.size)

    def sources(self) -> np.ndarray:
        return np.repeat(np.arange(self.num_vertices, dtype=np.int64), np.diff(self.offsets))

    @classmethod
    def from_edges(cls, src, dst, num_vertices: int, symmetrize: bool = False) -> "Csr":
        src = np.asarray(src, dtype=np.int64)
        dst = np.asarray(dst, dtype=np.int64)
        if symmetrize:
            # every (u, v) gains (v, u) right behind it; self-loops are not doubled
            loop = src == dst
            pair_src = np.stack([src, dst], axis=1)
            pair_dst = np.stack([dst, src], axis=1)
            keep = np.stack([np.ones_like(loop), ~loop], axis=1)
            src, dst = pair_src[keep], pair_dst[keep]
        b = CsrBatch.from_edges(src, dst, num_vertices)
        return cls(b.offsets, b.destinations)


def _int_token(tok: str, lineno: int) -> int:
    try:
        return int(tok)
    except ValueError:
        raise ParseError(f"vertex id {tok!r} is not an integer", lineno) from None


def read_matrix_market(stream, symmetrize: bool | None = None) -> Csr:
    """Coordinate Matrix Market; 1-based ids become 0-based vertex ids.

    ``symmetrize=None`` follows the header (anything but ``general`` is
    symmetrized).  Values in real/integer files are ignored.
    """
    lineno = 0
    header = stream.readline()
    lineno += 1
    parts = header.split()
    if len(parts) < 5 or parts[0].lower() != "%%matrixmarket":
        raise ParseError("missing %%MatrixMarket header", lineno)
    obj, fmt, field, symmetry = (p.lower() for p in parts[1:5])
    if obj != "matrix" or fmt != "coordinate":
        raise ParseError(f"unsupported Matrix Market type {obj} {fmt}", lineno)
    if symmetrize is None:
        symmetrize = symmetry != "general"

    size = None
    for line in stream:
        lineno += 1
        s = line.strip()
        if s and not s.startswith("%"):
            size = s.split()
            break
    if size is None or len(size) != 3:
        raise ParseError("missing size line", lineno)
    rows, cols, nnz = (_int_token(t, lineno) for t in size)

    src = np.empty(nnz, dtype=np.int64)
    dst = np.empty(nnz, dtype=np.int64)
    k = 0
    for line in stream:
        lineno += 1
        s = line.split()
        if not s or s[0].startswith("%"):
            continue
        if k >= nnz:
            raise ParseError(f"more than the declared {nnz} entries", lineno)
        if len(s) < 2:
            raise ParseError("entry needs a row and a column", lineno)
        r, c = _int_token(s[0], lineno), _int_token(s[1], lineno)
        if not (1 <= r <= rows and 1 <= c <= cols):
            raise ParseError(f"entry ({r}, {c}) outside {rows}x{cols}", lineno)
        src[k], dst[k] = r - 1, c - 1
        k += 1
    if k != nnz:
        raise ParseError(f"expected {nnz} entries, found {k}", lineno)
    return Csr.from_edges(src, dst, max(rows, cols), symmetrize)


def read_edge_list(stream, symmetrize: bool = False) -> Csr:
    """Whitespace-separated ``u v [...]`` lines; ``#``/``%`` start comments.

    Ids may be any integers; they are renumbered densely in increasing order.
    """
    src, dst = [], []
    for lineno, line in enumerate(stream, start=1):
        s = line.split()
        if not s or s[0][0] in "#%":
            continue
        if len(s) < 2:
            raise ParseError("edge needs two vertex ids", lineno)
        src.append(_int_token(s[0], lineno))
        dst.append(_int_token(s[1], lineno))
    ids, dense = np.unique(np.array(src + dst, dtype=np.int64), return_inverse=True)
    m = len(src)
    return Csr.from_edges(dense[:m], dense[m:], ids.size, symmetrize)


def detect_format(path) -> str:
    return "mtx" if os.fspath(path).endswith(".mtx") else "el"


def load_graph(path, fmt: str | None = None, symmetrize: bool | None = None) -> Csr:
    fmt = fmt or detect_format(path)
    with open(path, "r") as fh:
        if fmt == "mtx":
            return read_matrix_market(fh, symmetrize)
        if fmt == "el":
            return read_edge_list(fh, bool(symmetrize))
    raise ValueError(f"unknown graph format {fmt!r}")


def loads_matrix_market(text: str, symmetrize: bool | None = None) -> Csr:
    return read_matrix_market(io.StringIO(text), symmetrize)


def uniform_graph(num_vertices: int, num_edges: int, seed: int = 0) -> Csr:
    rng = np.random.default_rng(seed)
    src = rng.integers(0, num_vertices, num_edges)
    dst = rng.integers(0, num_vertices, num_edges)
    return Csr.from_edges(src, dst, num_vertices)


def powerlaw_graph(num_vertices: int, num_edges: int, exponent: float = 2.1, seed: int = 0) -> Csr:
    """Chung-Lu style: endpoints drawn with weight ``rank ** (-1/(exponent-1))``."""
    rng = np.random.default_rng(seed)
    w = np.arange(1, num_vertices + 1, dtype=float) ** (-1.0 / (exponent - 1.0))
    w /= w.sum()
    perm = rng.permutation(num_vertices)
    src = perm[rng.choice(num_vertices, num_edges, p=w)]
    dst = perm[rng.choice(num_vertices, num_edges, p=w)]
    return Csr.from_edges(src, dst, num_vertices)


def synthetic_graph(kind: str, num_vertices: int, num_edges: int, seed: int = 0) -> Csr:
    if kind == "uniform":
        return uniform_graph(num_vertices, num_edges, seed)
    if kind == "powerlaw":
        return powerlaw_graph(num_vertices, num_edges, seed=seed)
    raise ValueError(f"unknown synthetic graph kind {kind!r}")


def make_batches(
    csr: Csr, batch_size: int | str, kind: str = INSERT, order: str = "prefix", seed: int = 0
) -> list[CsrBatch]:
    """Split the edges of ``csr`` into batches spanning all vertices.

    ``order="prefix"`` takes edges in CSR order; ``"shuffled"`` permutes them
    first.  ``batch_size="bulk"`` yields the whole graph as one batch.
    """
    if kind not in (INSERT, DELETE):
        raise ValueError(kind)
    n = csr.num_vertices
    if batch_size == BULK and order == "prefix":
        return [CsrBatch(csr.offsets.copy(), csr.destinations.copy(), kind)]
    src, dst = csr.sources(), csr.destinations
    if order == "shuffled":
        perm = np.random.default_rng(seed).permutation(src.size)
        src, dst = src[perm], dst[perm]
    elif order != "prefix":
        raise ValueError(f"unknown edge order {order!r}")
    if batch_size == BULK:
        batch_size = max(src.size, 1)
    batch_size = int(batch_size)
    if batch_size < 1:
        raise ValueError("batch size must be >= 1 or 'bulk'")
    if src.size == 0:
        return [CsrBatch.empty(n, kind)]
    return [
        CsrBatch.from_edges(src[i : i + batch_size], dst[i : i + batch_size], n, kind)
        for i in range(0, src.size, batch_size)
    ]
