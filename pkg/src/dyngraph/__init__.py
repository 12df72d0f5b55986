"""Dynamic graph with CBT-of-edge-block adjacencies and a pre-allocated edge-block queue."""

from .core import cbt_position_bits, closest_pow2
from .engine import BatchPlan, CsrBatch, DynamicGraph, GraphConfig, compute_block_size
from .errors import (
    DyngraphError,
    InsufficientCapacity,
    MalformedBatch,
    ParseError,
    PoolUnderflow,
    StructuralError,
)
from .oracle import OracleGraph, oracle_apply, oracle_compare
from .pool import Arena, BlockPool, GrowthPolicy

__all__ = [
    "Arena",
    "BatchPlan",
    "BlockPool",
    "CsrBatch",
    "DynamicGraph",
    "DyngraphError",
    "GraphConfig",
    "GrowthPolicy",
    "InsufficientCapacity",
    "MalformedBatch",
    "OracleGraph",
    "ParseError",
    "PoolUnderflow",
    "StructuralError",
    "cbt_position_bits",
    "closest_pow2",
    "compute_block_size",
    "oracle_apply",
    "oracle_compare",
]
