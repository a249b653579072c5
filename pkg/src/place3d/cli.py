"""Command line driver.

    place3d --input case.txt --out sol.txt --seed 1
    place3d --input case.txt --out sol.txt --check

Exit codes: 0 success, 2 parse error, 3 infeasible input or failed check,
4 completed via the divergence fallback.  PLACER3D_LOG controls verbosity.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from . import flow as flow_mod
from . import gp as gpm
from .legalize import LegalizationError
from .model import DesignError, ParseError, parse_design
from .synth import InfeasibleSpec


def build_parser():
    p = argparse.ArgumentParser(
        prog="place3d",
        description="Die-to-die 3D mixed-size analytical placer",
    )
    p.add_argument("--input", required=True, help="design file")
    p.add_argument("--out", help="solution file (required unless --check)")
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--threads", type=int, default=1,
                   help="stage-internal parallelism hint (results identical)")
    p.add_argument("--nz", type=int, default=8, help="depth bins")
    p.add_argument("--stop-overflow", type=float, default=0.10)
    p.add_argument("--skip-rotation", action="store_true")
    p.add_argument("--flow", choices=("auto", "3d", "2d"), default="auto")
    p.add_argument("--dump-fields", action="store_true",
                   help="dump final density/potential/field maps")
    p.add_argument("--check", action="store_true",
                   help="validate --out against --input instead of placing")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = os.environ.get("PLACER3D_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING))

    try:
        with open(args.input) as fh:
            design = parse_design(fh)
    except OSError as exc:
        print(f"place3d: cannot read input: {exc}", file=sys.stderr)
        return 2
    except (ParseError, DesignError) as exc:
        print(f"place3d: parse error: {exc}", file=sys.stderr)
        return 2

    if args.check:
        if not args.out:
            print("place3d: --check needs --out (the solution file)", file=sys.stderr)
            return 2
        try:
            with open(args.out) as fh:
                rep = flow_mod.check_files(design, fh)
        except (OSError, ParseError) as exc:
            print(f"place3d: cannot check solution: {exc}", file=sys.stderr)
            return 2
        print(json.dumps(rep.as_dict(), indent=2))
        return 0 if rep.passed else 3

    if not args.out:
        print("place3d: --out is required", file=sys.stderr)
        return 2
    cfg = gpm.GpConfig(
        seed=args.seed, nz=args.nz, stop_overflow=args.stop_overflow,
        flow=args.flow, threads=args.threads,
    )
    try:
        sol, report, rows, fields = flow_mod.run_flow(
            design, cfg, skip_rotation=args.skip_rotation,
            collect_fields=args.dump_fields,
        )
    except (LegalizationError, InfeasibleSpec, DesignError) as exc:
        print(f"place3d: infeasible: {exc}", file=sys.stderr)
        return 3
    flow_mod.write_outputs(design, sol, report, rows, args.out, fields)
    print(json.dumps(report.as_dict(), indent=2))
    return 4 if report.diverged else 0


if __name__ == "__main__":
    raise SystemExit(main())
