"""Command-line entry point: ``python -m fembem --experiment jn --levels 8``."""
from __future__ import annotations

import argparse
import sys
from typing import Optional, Sequence

import numpy as np

from .experiments import EXPERIMENTS, CsvSink, ExperimentConfig, NumericalFailure, run_metadata, run_experiment
from .gmres import GmresFailure
from .mesh import MeshError, read_mesh
from .operators import ConfigurationError
from .spectral import SpectralError

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("true", "1", "yes"):
        return True
    if t in ("false", "0", "no"):
        return False
    raise argparse.ArgumentTypeError(f"expected true or false, got {text!r}")


class _ArgumentError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _ArgumentError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="fembem", description="Adaptive FEM-BEM coupling experiments.")
    p.add_argument("--experiment", choices=EXPERIMENTS, default="jn")
    p.add_argument("--levels", type=int, default=8, help="number of refinement steps (levels 0..L)")
    p.add_argument("--theta", type=float, default=0.5, help="Doerfler parameter")
    p.add_argument("--tol", type=float, default=None, help="GMRES relative tolerance (default 1e-6, 1e-3 for sym_vs_jn)")
    p.add_argument("--precond", choices=("mlas", "hb", "diag", "none"), default="mlas")
    p.add_argument("--coupling", choices=("jn", "sym", "bmc"), default="jn")
    p.add_argument("--stabilized", type=_bool, default=True)
    p.add_argument("--out", default="-", help="CSV path, '-' for stdout")
    p.add_argument("--mesh", default=None, help="external initial mesh")
    p.add_argument("--max-dofs", type=int, default=5000, help="skip dense spectral work above this size")
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        mesh = read_mesh(args.mesh)[0] if args.mesh else None
        cfg = ExperimentConfig(
            experiment=args.experiment, levels=args.levels, theta=args.theta, tol=args.tol,
            precond=args.precond, coupling=args.coupling, stabilized=args.stabilized,
            max_dofs=args.max_dofs, mesh=mesh,
        )
    except (_ArgumentError, ConfigurationError, MeshError, OSError, ValueError) as exc:
        print(f"fembem: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = sys.stdout if args.out == "-" else open(args.out, "w")
    try:
        sink = CsvSink(out, run_metadata(cfg))
        run_experiment(cfg, sink)
    except ConfigurationError as exc:
        print(f"fembem: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalFailure, GmresFailure, SpectralError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"fembem: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    finally:
        out.flush()
        if out is not sys.stdout:
            out.close()
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
