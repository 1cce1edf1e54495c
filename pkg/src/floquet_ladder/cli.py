"""Command-line entry point.

Exit codes: 0 on success, 2 on invalid input, 3 on numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys

from numpy.linalg import LinAlgError

from .experiments import ValidationError, emit_results, load_spec, parse_lambda_grid, report_json, run_experiment
from .ladder import ConfigError, SymmetryError
from .observables import NonHermitianError
from .pauli import DenseSizeError
from .propagator import KrylovConvergenceError
from .vanvleck import CutoffError

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL = 0, 2, 3


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="floquet-ladder", description="Floquet spin-ladder experiments")
    sub = p.add_subparsers(dest="command", required=True)
    ev = sub.add_parser("evolve", help="time-evolve and write a trajectory CSV")
    ev.add_argument("--config", required=True)
    ev.add_argument("--out", required=True)
    sc = sub.add_parser("symmetry-check", help="verify symmetry relations")
    sc.add_argument("--config", required=True)
    sc.add_argument("--out")
    vv = sub.add_parser("vanvleck-verify", help="check the high-frequency expansion")
    vv.add_argument("--config", required=True)
    vv.add_argument("--order", type=int, choices=(0, 1, 2), required=True)
    vv.add_argument("--out")
    sw = sub.add_parser("sweep", help="evolve over a grid of center couplings")
    sw.add_argument("--config", required=True)
    sw.add_argument("--lambda-grid", required=True, help="e.g. '1:1,0.8:1.2,0.5:1'")
    sw.add_argument("--out")
    return p


def _summary_line(bundle) -> str:
    rep = bundle.report
    if "all_passed" in rep:
        return f"symmetry-check: {'all relations passed' if rep['all_passed'] else 'some relations failed'}"
    if "rows" in rep:
        return "\n".join(f"{r['quantity']}: {r['value']:.3e}" for r in rep["rows"])
    if "sweep" in rep:
        return json.dumps(rep["sweep"], sort_keys=True)
    return json.dumps(rep.get("summary", {}), sort_keys=True)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        spec = load_spec(args.config, args.command)
        grid = parse_lambda_grid(args.lambda_grid) if args.command == "sweep" else None
        if args.command == "vanvleck-verify":
            from dataclasses import replace

            spec = replace(spec, vv_order=args.order)
        bundle = run_experiment(spec, grid)
    except (ValidationError, ConfigError, DenseSizeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (KrylovConvergenceError, CutoffError, SymmetryError, NonHermitianError, LinAlgError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    out = getattr(args, "out", None) or spec.output_path
    if out:
        for path in emit_results(bundle, out):
            print(path)
    else:
        sys.stdout.write(report_json(bundle))
    print(_summary_line(bundle), file=sys.stderr)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
