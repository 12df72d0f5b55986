"""Command line entry point: ``dyngraph bench`` and ``dyngraph verify``.

Exit codes: 0 ok, 1 usage error, 2 bad input data, 3 engine error or failed
verification.
"""

from __future__ import annotations

import argparse
import logging
import sys
import time

from .engine import GraphConfig
from .errors import DyngraphError, MalformedBatch, ParseError
from .harness import OPS, WorkloadSpec, run_workload
from .loaders import BULK
from .pool import DEFAULT_ARENA_BYTES

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_ENGINE = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _batch_size(text: str):
    if text == BULK:
        return BULK
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("batch size must be >= 1 or 'bulk'")
    return value


def _block_size(text: str):
    if text == "auto":
        return None
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("block size must be >= 1 or 'auto'")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="dyngraph", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    bench = sub.add_parser("bench", help="time batched updates on a graph")
    src = bench.add_mutually_exclusive_group()
    src.add_argument("--input", help="Matrix Market (.mtx) or edge-list file")
    src.add_argument("--synthetic", choices=["uniform", "powerlaw"], help="generate the input instead")
    bench.add_argument("--vertices", type=int, default=1 << 12)
    bench.add_argument("--edges", type=int, default=1 << 16)
    bench.add_argument("--format", choices=["mtx", "el"], dest="fmt")
    bench.add_argument("--symmetrize", action=argparse.BooleanOptionalAction, default=None)
    bench.add_argument("--batch-size", type=_batch_size, default=BULK)
    bench.add_argument("--ops", choices=OPS, default="insert")
    bench.add_argument("--order", choices=["prefix", "shuffled"], default="prefix")
    bench.add_argument("--block-size", type=_block_size, default=None)
    bench.add_argument("--arena-bytes", type=int, default=DEFAULT_ARENA_BYTES)
    bench.add_argument("--no-reclaim", action="store_true", help="keep emptied blocks attached")
    bench.add_argument("--workers", type=int, default=0, help="0 = vectorized kernel")
    bench.add_argument("--queries", type=int, default=1000)
    bench.add_argument("--seed", type=int, default=0)
    bench.add_argument("--csv", help="write the per-phase report here")

    verify = sub.add_parser("verify", help="randomized oracle-equivalence suite")
    verify.add_argument("--workloads", type=int, default=1000)
    verify.add_argument("--seed", type=int, default=0)
    verify.add_argument("--max-vertices", type=int, default=4096)
    verify.add_argument("--max-edges", type=int, default=100_000)
    verify.add_argument("--workers", type=int, default=0)
    return parser


def _bench(args) -> int:
    if not args.input and not args.synthetic:
        args.synthetic = "uniform"
    spec = WorkloadSpec(
        input_path=args.input,
        fmt=args.fmt,
        batch_size=args.batch_size,
        ops=args.ops,
        seed=args.seed,
        order=args.order,
        block_size=args.block_size,
        config=GraphConfig(
            arena_bytes=args.arena_bytes, reclaim_on_delete=not args.no_reclaim, workers=args.workers
        ),
        symmetrize=args.symmetrize,
        queries=args.queries,
        synthetic=args.synthetic or "uniform",
        vertices=args.vertices,
        edges=args.edges,
    )
    report = run_workload(spec)
    s = report.stats
    print(
        f"{report.graph}: {s['vertices']} vertices, {s['edges']} edges, block size {s['block_size']}, "
        f"{s['blocks']} blocks, hole ratio {s['hole_ratio']:.3f}"
    )
    for phase in ("init", "insert", "query", "delete"):
        ms = report.total_ms(phase)
        if ms or phase == "init":
            print(f"  {phase:<7} {ms:10.3f} ms")
    if report.queries:
        print(f"  queries: {report.query_hits}/{report.queries} hits")
    print(f"  memory: {report.phases[-1].memory.total} bytes")
    if args.csv:
        report.write_csv(args.csv)
    return EXIT_OK


def _verify(args) -> int:
    from .verify import run_suite

    t = time.perf_counter()
    results = run_suite(
        args.workloads,
        args.seed,
        max_vertices=args.max_vertices,
        max_edges=args.max_edges,
        workers=args.workers,
    )
    failed = [r for r in results if not r.ok]
    for r in failed:
        print(f"FAIL seed={r.seed}: {(r.violations + [str(m) for m in r.mismatches])[:3]}")
    edges = sum(r.edges_inserted for r in results)
    print(
        f"{len(results) - len(failed)}/{len(results)} workloads match the oracle "
        f"({edges} edges inserted, {time.perf_counter() - t:.1f}s)"
    )
    return EXIT_ENGINE if failed else EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.command == "bench":
            return _bench(args)
        return _verify(args)
    except (ParseError, MalformedBatch, OSError) as exc:
        print(f"dyngraph: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (DyngraphError, ValueError) as exc:
        print(f"dyngraph: error: {exc}", file=sys.stderr)
        return EXIT_ENGINE


if __name__ == "__main__":
    sys.exit(main())
