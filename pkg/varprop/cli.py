"""Command-line entry point: `varprop bench-evolution|graphene|hubbard|plot`."""

from __future__ import annotations

import argparse
import logging
import math
import sys
from pathlib import Path
from typing import Any, Dict, Optional, Sequence, Tuple

import numpy as np

from .bench import BENCH_METHODS, BenchSettings, bench_evolution
from .errors import ConfigError, NumericalError, SchemaError
from .graphene import LadderConvention, PmConvention, convention_verdict, graphene_sweep
from .hubbard import Boundary, check_sweep_size, hubbard_sweep
from .plotting import plot_csv
from .propagator_approx import OdeSolverConfig
from .records import (
    CsvKind,
    load_config,
    sweep_rows,
    validate_output_path,
    write_csv,
    write_sidecar,
)
from .spectral_core import Method
from .sweeps import CoefficientSource, default_threads

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NUMERICAL = 2

BENCH_HEADER = ["method", "dim", "t_norm", "l2_mean", "l2_std", "n"]


class UsageError(Exception):
    pass


class _ArgumentParser(argparse.ArgumentParser):
    """argparse with usage errors mapped to exit code 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _add_common(sub: argparse.ArgumentParser):
    sub.add_argument("--config", type=str, help="JSON file with defaults for any flag.")
    sub.add_argument("--out", type=str, help="Output CSV path.")
    sub.add_argument("--svg", type=str, help="Optional SVG plot of the results.")
    sub.add_argument(
        "--threads",
        type=int,
        default=default_threads(),
        help="Worker threads (default: $VARPROP_THREADS or 1).",
    )
    sub.add_argument("--rel-tol", type=float, default=1e-10, help="ODE relative tolerance.")
    sub.add_argument("--abs-tol", type=float, default=1e-12, help="ODE absolute tolerance.")
    sub.add_argument("-v", "--verbose", action="store_true", help="Debug logging.")
    sub.add_argument("-q", "--quiet", action="store_true", help="No progress bars or status lines.")


def build_parser() -> Tuple[argparse.ArgumentParser, Dict[str, argparse.ArgumentParser]]:
    parser = _ArgumentParser(
        prog="varprop",
        description="Variational polynomial time evolution and non-perturbative downfolding.",
    )
    commands = parser.add_subparsers(dest="command", required=True, parser_class=_ArgumentParser)
    subs: Dict[str, argparse.ArgumentParser] = {}

    bench = commands.add_parser(
        "bench-evolution", help="l2 error of approximants over a seeded GUE ensemble."
    )
    _add_common(bench)
    bench.add_argument("--dims", type=int, nargs="+", default=[5], help="Matrix dimensions.")
    bench.add_argument("--samples", type=int, default=100, help="Hamiltonians per dimension.")
    bench.add_argument("--seed", type=int, help="Ensemble seed (required).")
    bench.add_argument("--t-max", type=float, default=2.0, help="Largest t*||H||.")
    bench.add_argument("--points", type=int, default=100, help="Normalized time points.")
    bench.add_argument(
        "--methods",
        nargs="+",
        default=[str(m) for m in BENCH_METHODS],
        choices=[str(m) for m in BENCH_METHODS],
        help="Approximants to compare.",
    )
    bench.add_argument("--taylor-order", type=int, default=2, help="Taylor truncation order.")
    bench.add_argument("--n-star", type=int, default=2, help="Variational polynomial order.")
    bench.set_defaults(handler=cmd_bench_evolution)
    subs["bench-evolution"] = bench

    graphene = commands.add_parser(
        "graphene", help="Bilayer graphene mid-level mismatch along a momentum line."
    )
    _add_common(graphene)
    graphene.add_argument("--gamma", type=float, default=1.0, help="Interlayer coupling.")
    graphene.add_argument("--p-min", type=float, default=0.01, help="Smallest |p|.")
    graphene.add_argument("--p-max", type=float, default=1.0, help="Largest |p|.")
    graphene.add_argument("--points", type=int, default=100, help="Momentum points.")
    graphene.add_argument(
        "--convention",
        choices=[str(c) for c in PmConvention],
        default=str(PmConvention.REAL),
        help="p+- = p1 +- p2 (real) or p1 +- i p2 (complex).",
    )
    graphene.add_argument(
        "--ladder",
        choices=[str(c) for c in LadderConvention],
        default=str(LadderConvention.HALF),
        help="Ladder operator normalization.",
    )
    graphene.add_argument(
        "--angle", type=float, default=math.pi / 2, help="Momentum direction (rad)."
    )
    graphene.add_argument(
        "--coeffs",
        choices=[str(c) for c in CoefficientSource],
        default=str(CoefficientSource.SINC),
        help="Closed sinc formulas or the generic superoperator path.",
    )
    graphene.set_defaults(handler=cmd_graphene)
    subs["graphene"] = graphene

    hubbard = commands.add_parser(
        "hubbard", help="Hubbard chain levels against standard and improved Heisenberg models."
    )
    _add_common(hubbard)
    hubbard.add_argument("--sites", type=int, default=5, help="Chain length N.")
    hubbard.add_argument("--u", type=float, default=1.0, help="On-site interaction U.")
    hubbard.add_argument("--t-min", type=float, default=0.01, help="Smallest t/U.")
    hubbard.add_argument("--t-max", type=float, default=0.5, help="Largest t/U.")
    hubbard.add_argument("--points", type=int, default=50, help="Log-spaced t/U points.")
    hubbard.add_argument(
        "--boundary",
        choices=[str(b) for b in Boundary],
        default=str(Boundary.PERIODIC),
        help="Chain boundary conditions.",
    )
    hubbard.add_argument(
        "--coeffs",
        choices=[str(c) for c in CoefficientSource],
        default=str(CoefficientSource.SINC),
        help="Closed sinc formulas or coefficients from the generator moments.",
    )
    hubbard.add_argument(
        "--aggregate-out",
        type=str,
        help="Aggregate CSV path (default: <out>_aggregate.csv).",
    )
    hubbard.add_argument(
        "--allow-large", action="store_true", help="Permit N = 7 (several GB of memory)."
    )
    hubbard.set_defaults(handler=cmd_hubbard)
    subs["hubbard"] = hubbard

    plot = commands.add_parser("plot", help="Render a varprop CSV as a static SVG.")
    plot.add_argument("csv", type=str, help="Input CSV written by another command.")
    plot.add_argument("--config", type=str, help="JSON file with defaults for any flag.")
    plot.add_argument("--out", type=str, help="Output SVG path.")
    plot.add_argument("--log-y", action="store_true", help="Logarithmic y axis.")
    plot.add_argument("--title", type=str, help="Plot title.")
    plot.add_argument("-v", "--verbose", action="store_true", help="Debug logging.")
    plot.add_argument("-q", "--quiet", action="store_true", help="No status lines.")
    plot.set_defaults(handler=cmd_plot)
    subs["plot"] = plot

    return parser, subs


def _apply_config(sub: argparse.ArgumentParser, path: str):
    config = load_config(Path(path))
    known = {action.dest for action in sub._actions} - {"help", "config", "handler"}
    unknown = sorted(set(config) - known)
    if unknown:
        raise UsageError(f"Unknown config key(s) for {sub.prog}: {', '.join(unknown)}")
    sub.set_defaults(**config)


def _config_snapshot(args: argparse.Namespace) -> Dict[str, Any]:
    return {k: v for k, v in vars(args).items() if k not in ("handler", "quiet", "verbose")}


def _status(args: argparse.Namespace, message: str):
    if not args.quiet:
        print(message)


def _solver_config(args: argparse.Namespace) -> OdeSolverConfig:
    return OdeSolverConfig(rel_tol=args.rel_tol, abs_tol=args.abs_tol)


def _require_out(args: argparse.Namespace) -> Path:
    if not args.out:
        raise UsageError("--out is required (flag or config key 'out')")
    return Path(args.out).expanduser()


def _maybe_plot(args: argparse.Namespace, csv_path: Path, svg: Optional[Path], log_y: bool):
    if svg is None:
        return
    plot_csv(csv_path, svg, log_y=log_y)
    _status(args, f"✓ Wrote plot to {svg}")


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_bench_evolution(args: argparse.Namespace) -> int:
    if args.seed is None:
        raise UsageError("bench-evolution needs --seed")
    out = validate_output_path(_require_out(args))
    svg = validate_output_path(Path(args.svg).expanduser()) if args.svg else None
    try:
        settings = BenchSettings(
            dims=tuple(args.dims),
            samples=args.samples,
            seed=args.seed,
            t_max=args.t_max,
            points=args.points,
            methods=tuple(Method(m) for m in args.methods),
            taylor_order=args.taylor_order,
            n_star=args.n_star,
        )
    except ValueError as e:
        raise UsageError(str(e)) from e

    records = bench_evolution(
        settings, threads=args.threads, progress=not args.quiet, cfg=_solver_config(args)
    )
    write_csv(
        out,
        CsvKind.BENCH,
        BENCH_HEADER,
        [[str(r.method), r.dim, r.t_norm, r.l2_mean, r.l2_std, r.n] for r in records],
    )
    final = {f"{r.method}@{r.dim}": r.l2_mean for r in records if r.t_norm == settings.t_max}
    write_sidecar(out, _config_snapshot(args), {"records": len(records), "l2_mean_at_t_max": final})
    _status(args, f"✓ Wrote {len(records)} benchmark records to {out}")
    _maybe_plot(args, out, svg, log_y=False)
    return EXIT_OK


def cmd_graphene(args: argparse.Namespace) -> int:
    out = validate_output_path(_require_out(args))
    svg = validate_output_path(Path(args.svg).expanduser()) if args.svg else None
    if args.gamma <= 0 or args.points < 1 or not 0 <= args.p_min <= args.p_max:
        raise UsageError("graphene needs gamma > 0, points >= 1 and 0 <= p-min <= p-max")

    convention = PmConvention(args.convention)
    sweep_args = dict(
        ladder=LadderConvention(args.ladder),
        angle=args.angle,
        source=CoefficientSource(args.coeffs),
        cfg=_solver_config(args),
        threads=args.threads,
    )
    p_grid = np.linspace(args.p_min, args.p_max, args.points)
    sweeps = {
        c: graphene_sweep(
            args.gamma,
            p_grid,
            convention=c,
            progress=not args.quiet and c == convention,
            **sweep_args,
        )
        for c in PmConvention
    }
    result = sweeps[convention]
    header, rows = sweep_rows(result, {"convention": str(convention)})
    write_csv(out, CsvKind.GRAPHENE, header, rows)

    std, var = result.columns["delta_std"], result.columns["delta_var"]
    improved = var < std
    summary = {
        "points": len(result.abscissa),
        "skipped": result.metadata["skipped"],
        "fraction_improved": float(np.mean(improved)) if len(std) else None,
        "min_ratio": float(np.min(var / std)) if len(std) and np.all(std > 0) else None,
        "conventions": convention_verdict(sweeps),
    }
    write_sidecar(out, _config_snapshot(args), summary)
    _status(args, f"✓ Wrote {len(rows)} momentum points to {out}")
    _maybe_plot(args, out, svg, log_y=True)
    return EXIT_OK


def cmd_hubbard(args: argparse.Namespace) -> int:
    out = validate_output_path(_require_out(args))
    aggregate_out = Path(
        args.aggregate_out or out.with_name(f"{out.stem}_aggregate{out.suffix or '.csv'}")
    ).expanduser()
    validate_output_path(aggregate_out)
    svg = validate_output_path(Path(args.svg).expanduser()) if args.svg else None

    source = CoefficientSource(args.coeffs)
    if args.sites < 2:
        raise UsageError("hubbard needs at least 2 sites")
    if source == CoefficientSource.SINC and args.sites < 3:
        raise UsageError("sinc coefficients are defined for 3 or more sites; use --coeffs ode")
    if args.u <= 0 or not 0 < args.t_min <= args.t_max or args.points < 1:
        raise UsageError("hubbard needs u > 0, 0 < t-min <= t-max and points >= 1")
    check_sweep_size(args.sites, args.allow_large)

    sweep = hubbard_sweep(
        args.sites,
        np.geomspace(args.t_min, args.t_max, args.points),
        interaction=args.u,
        boundary=Boundary(args.boundary),
        source=source,
        allow_large=args.allow_large,
        threads=args.threads,
        progress=not args.quiet,
        cfg=_solver_config(args),
    )
    header, rows = sweep_rows(sweep.levels)
    write_csv(out, CsvKind.HUBBARD_LEVELS, header, rows)
    agg_header, agg_rows = sweep_rows(sweep.aggregate)
    write_csv(aggregate_out, CsvKind.HUBBARD_AGGREGATE, agg_header, agg_rows)

    columns = sweep.aggregate.columns
    summary = {
        "non_zero_levels": sorted({int(n) for n in columns["n_levels"]}),
        "flagged": sweep.metadata["flagged"],
        "first_half_var_below_std": int(
            np.sum(columns["err_var_first_half"] < columns["err_std_first_half"])
        ),
        "first_half_crossover": sweep.metadata["first_half_crossover"],
        "points": len(sweep.aggregate.abscissa),
    }
    write_sidecar(out, _config_snapshot(args), summary)
    _status(args, f"✓ Wrote {len(rows)} level rows to {out}")
    _status(args, f"✓ Wrote aggregate errors to {aggregate_out}")
    if sweep.metadata["flagged"]:
        _status(args, f"  {len(sweep.metadata['flagged'])} point(s) flagged by the weight filter")
    if sweep.metadata["first_half_crossover"]:
        _status(
            args,
            f"  first-half ordering reversed at {len(sweep.metadata['first_half_crossover'])} point(s),"
            f" from t/U = {sweep.metadata['first_half_crossover'][0]:.4g}",
        )
    _maybe_plot(args, aggregate_out, svg, log_y=True)
    return EXIT_OK


def cmd_plot(args: argparse.Namespace) -> int:
    in_csv = Path(args.csv).expanduser()
    out = validate_output_path(_require_out(args), inputs=[in_csv])
    plot_csv(in_csv, out, log_y=args.log_y, title=args.title)
    _status(args, f"✓ Wrote plot to {out}")
    return EXIT_OK


def _configure_logging(args: argparse.Namespace):
    level = logging.DEBUG if args.verbose else logging.ERROR if args.quiet else logging.WARNING
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser, subs = build_parser()
    args = parser.parse_args(argv)

    try:
        if args.config:
            _apply_config(subs[args.command], args.config)
            args = parser.parse_args(argv)
        _configure_logging(args)
        return args.handler(args)
    except (UsageError, ConfigError, SchemaError) as e:
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalError as e:
        print(f"Error: numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as e:
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    raise SystemExit(main())
