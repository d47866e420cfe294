"""Command-line front end: one subcommand per experiment kind.

Usage:
    omnisurf <kind> --config <scenario.cfg> [--seeds 0 1 2] [--out file.csv]

Kinds: hybrid, train, multicell, estimate, pattern, compare, coverage.
Exit codes: 0 success, 1 configuration error, 2 numerical failure,
3 infeasible instance.  The OMNISURF_WORKERS environment variable sizes the
seed worker pool.
"""

from __future__ import annotations

import argparse
import sys
from typing import Optional, Sequence

import numpy as np

from .chanest import GroupingError
from .channel import ScenarioError
from .beamform import RankDeficiencyError
from .element import CircuitError
from .errors import InfeasibleError
from .harness import (
    ConfigError,
    ExperimentSpec,
    SURFACE_VARIANTS,
    coverage_csv,
    parse_scenario,
    run,
)
from .pattern import PatternError

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NUMERICAL = 2
EXIT_INFEASIBLE = 3

_CONFIG_ERRORS = (
    ConfigError,
    ScenarioError,
    GroupingError,
    PatternError,
    CircuitError,
    OSError,
)
_NUMERICAL_ERRORS = (
    RankDeficiencyError,
    np.linalg.LinAlgError,
    ArithmeticError,
)


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", required=True, help="scenario config file")
    parser.add_argument(
        "--seeds",
        "--seed",
        dest="seeds",
        type=int,
        nargs="+",
        default=[0],
        help="seed list (default: 0)",
    )
    parser.add_argument("--out", default=None, help="output CSV path (default: stdout)")
    parser.add_argument(
        "--quiet", action="store_true", help="suppress stdout echo when --out is given"
    )


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="omnisurf", description="dual-sided-surface link simulator"
    )
    sub = parser.add_subparsers(dest="kind", required=True)

    p = sub.add_parser("hybrid", help="per-seed alternating optimization sum rate")
    _add_common(p)
    p.add_argument("--surface", default="ios", choices=SURFACE_VARIANTS)
    p.add_argument("--restarts", type=int, default=4)
    p.add_argument("--max-sweeps", type=int, default=20)
    p.add_argument("--precoder", default="zf", choices=("zf", "mmse"))

    p = sub.add_parser("train", help="codebook beam-training pipeline")
    _add_common(p)
    p.add_argument("--sections", type=int, default=8)
    p.add_argument("--lobes", type=int, default=16)

    p = sub.add_parser("multicell", help="two-AP shared-panel negotiation")
    _add_common(p)
    p.add_argument("--rho", type=float, default=1.0)
    p.add_argument("--max-iter", type=int, default=50)

    p = sub.add_parser("estimate", help="grouped cascaded-channel estimation")
    _add_common(p)
    p.add_argument("--tile-rows", type=int, default=1)
    p.add_argument("--tile-cols", type=int, default=None)
    p.add_argument("--sigma", type=float, default=0.0)
    p.add_argument("--repeats", type=int, default=1)

    p = sub.add_parser("pattern", help="steered far-field pattern scan")
    _add_common(p)
    p.add_argument("--target-psi", type=float, default=141.0)
    p.add_argument("--target-phi", type=float, default=0.0)
    p.add_argument("--step", type=float, default=1.0)

    p = sub.add_parser("compare", help="ios/irs/rrs/none sum-rate comparison")
    _add_common(p)
    p.add_argument("--restarts", type=int, default=4)

    p = sub.add_parser("coverage", help="probe-user rate map over positions")
    _add_common(p)
    p.add_argument("--surface", default="ios", choices=SURFACE_VARIANTS)
    p.add_argument(
        "--grid",
        required=True,
        help="x0,x1,nx,y0,y1,ny,z rectangular probe grid (z fixed)",
    )
    return parser


def _spec_options(args: argparse.Namespace) -> dict:
    options = {}
    mapping = {
        "surface": "surface",
        "restarts": "restarts",
        "max_sweeps": "max_sweeps",
        "precoder": "precoder",
        "sections": "sections",
        "lobes": "lobes",
        "rho": "rho",
        "max_iter": "max_iter",
        "tile_rows": "tile_rows",
        "tile_cols": "tile_cols",
        "sigma": "sigma",
        "repeats": "repeats",
        "target_psi": "target_psi",
        "target_phi": "target_phi",
        "step": "step",
    }
    for attr, key in mapping.items():
        if hasattr(args, attr) and getattr(args, attr) is not None:
            options[key] = getattr(args, attr)
    return options


def _parse_grid(text: str) -> np.ndarray:
    parts = text.split(",")
    if len(parts) != 7:
        raise ConfigError(f"--grid needs x0,x1,nx,y0,y1,ny,z; got {len(parts)} fields")
    try:
        x0, x1 = float(parts[0]), float(parts[1])
        nx = int(parts[2])
        y0, y1 = float(parts[3]), float(parts[4])
        ny = int(parts[5])
        z = float(parts[6])
    except ValueError as exc:
        raise ConfigError(f"--grid: {exc}") from None
    if nx < 1 or ny < 1:
        raise ConfigError("--grid point counts must be >= 1")
    xs = np.linspace(x0, x1, nx)
    ys = np.linspace(y0, y1, ny)
    pts = [(x, y, z) for x in xs for y in ys]
    return np.array(pts)


def _emit(text: str, out: Optional[str], quiet: bool) -> None:
    if out is not None:
        with open(out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        if not quiet:
            sys.stdout.write(f"wrote {out}\n")
    else:
        sys.stdout.write(text)


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.kind == "coverage":
            scenario = parse_scenario(args.config)
            positions = _parse_grid(args.grid)
            text = coverage_csv(scenario, positions, args.seeds, surface=args.surface)
            _emit(text, args.out, args.quiet)
        else:
            spec = ExperimentSpec(
                kind=args.kind,
                scenario_path=args.config,
                seeds=tuple(args.seeds),
                out_path=None,
                options=_spec_options(args),
            )
            _emit(run(spec), args.out, args.quiet)
    except _CONFIG_ERRORS as exc:
        sys.stderr.write(f"config error: {exc}\n")
        return EXIT_CONFIG
    except InfeasibleError as exc:
        sys.stderr.write(f"infeasible: {exc}\n")
        return EXIT_INFEASIBLE
    except _NUMERICAL_ERRORS as exc:
        sys.stderr.write(f"numerical failure: {exc}\n")
        return EXIT_NUMERICAL
    except Exception as exc:  # anything unexpected counts as a numerical failure
        sys.stderr.write(f"numerical failure: {type(exc).__name__}: {exc}\n")
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
