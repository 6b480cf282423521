"""Command-line entry point: dataset generation, the scaling benchmark, the
correctness check, and the HTTP server."""

from __future__ import annotations

import argparse
import sys
from contextlib import nullcontext
from pathlib import Path

from . import bench as bench_mod
from .bench import (
    DEFAULT_SIZES,
    DHAKA_BBOX,
    DatasetBox,
    REFERENCE_RUNTIMES_MS,
    generate_dataset,
    run_benchmark,
    run_correctness,
    write_benchmark_csv,
    write_correctness_csv,
    write_points_csv,
)


def _parse_bbox(text: str) -> DatasetBox:
    parts = [float(x) for x in text.split(",")]
    if len(parts) != 4:
        raise argparse.ArgumentTypeError("bbox must be south,west,north,east")
    return DatasetBox(south=parts[0], west=parts[1], north=parts[2], east=parts[3])


def _parse_sizes(text: str) -> tuple[int, ...]:
    return tuple(int(x) for x in text.split(","))


def _open_out(path: str | None):
    if path is None or path == "-":
        return nullcontext(sys.stdout)
    return open(path, "w", encoding="utf-8", newline="")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="geosafe",
        description="Contact-tracing zone server and its experiment harness.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_gen = sub.add_parser("gen", help="generate a synthetic coordinate dataset")
    p_gen.add_argument("--n", type=int, default=10000)
    p_gen.add_argument("--bbox", type=_parse_bbox, default=DHAKA_BBOX,
                       help="south,west,north,east (default: Dhaka region)")
    p_gen.add_argument("--seed", type=int, default=0)
    p_gen.add_argument("--out", default=None, help="CSV path (default stdout)")

    p_bench = sub.add_parser("bench", help="time zone construction across data sizes")
    p_bench.add_argument("--sizes", type=_parse_sizes, default=DEFAULT_SIZES,
                         help="comma-separated sizes (default 1000..10000 step 1000)")
    p_bench.add_argument("--seed", type=int, default=0)
    p_bench.add_argument("--out", default=None, help="CSV path (default stdout)")

    p_check = sub.add_parser("check", help="compare indexed verdicts to a full scan")
    p_check.add_argument("--zones", type=int, default=10000)
    p_check.add_argument("--probes", type=int, default=1000)
    p_check.add_argument("--seed", type=int, default=0)
    p_check.add_argument("--out", default=None, help="CSV path (default none)")
    p_check.add_argument("--quiet", action="store_true",
                         help="suppress the per-probe sentences")

    p_serve = sub.add_parser("serve", help="run the HTTP tracing service")
    p_serve.add_argument("--config", default=None, help="key=value config file")

    return parser


def cmd_gen(args) -> int:
    points = generate_dataset(args.n, args.bbox, args.seed)
    with _open_out(args.out) as out:
        write_points_csv(points, out)
    return 0


def cmd_bench(args) -> int:
    result = run_benchmark(args.sizes, args.seed)
    with _open_out(args.out) as out:
        write_benchmark_csv(result.rows, out)
    for row in result.rows:
        ref = REFERENCE_RUNTIMES_MS.get(row.data_size)
        ref_text = f"  (reference C++ run: {ref} ms)" if ref is not None else ""
        print(f"{row.data_size:>7} points: {row.runtime_ms:9.3f} ms{ref_text}",
              file=sys.stderr)
    if result.fit is not None:
        print(f"linear fit: slope {result.fit.slope_ms_per_point * 1000:.4f} ms per 1000 "
              f"points, intercept {result.fit.intercept_ms:.3f} ms, "
              f"R^2 {result.fit.r_squared:.5f}", file=sys.stderr)
    return 0


def cmd_check(args) -> int:
    report = run_correctness(args.zones, args.probes, args.seed)
    if not args.quiet:
        for line in report.lines():
            print(line)
    if args.out:
        with _open_out(args.out) as out:
            write_correctness_csv(report, out)
    n_dis = len(report.disagreements)
    print(f"{report.probes} probes, {report.agreements} agreements, "
          f"{n_dis} disagreements", file=sys.stderr)
    return 0 if n_dis == 0 else 1


def cmd_serve(args) -> int:
    # imported lazily so the experiment subcommands stay dependency-light
    import uvicorn

    from .api import create_app
    from .config import load_config
    from .service import TracingService
    from .store import RegistryStore

    config = load_config(args.config)
    store = RegistryStore(Path(config.db_path), fsync=True)
    service = TracingService(
        store,
        config.zone_parameters(),
        cell_size_deg=config.cell_size_deg,
        zone_ttl=config.zone_ttl(),
    )
    tokens = service.ensure_provider_credentials()
    for role, token in tokens.items():
        print(f"{role.value} token: {token}", file=sys.stderr)
    app = create_app(service)
    uvicorn.run(app, host=config.host, port=config.port, log_level="info")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handlers = {"gen": cmd_gen, "bench": cmd_bench, "check": cmd_check, "serve": cmd_serve}
    return handlers[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
