"""``cartan`` command line entry point.

Exit codes: 0 all checks pass, 1 some check failed, 2 usage or config error.
"""
from __future__ import annotations

import argparse
import sys

from .cli_io import SUBCOMMANDS, ConfigError, EmitError, ScenarioConfig, emit, run
from .lie_core import LieError


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cartan", description="Cartan development of flat "
                                "Lie-algebra valued 1-forms on matrix groups.")
    p.add_argument("subcommand", choices=SUBCOMMANDS)
    p.add_argument("--config", required=True, help="scenario JSON file")
    p.add_argument("--out", help="output directory (overrides output.dir)")
    p.add_argument("--steps", type=int, help="integration steps per unit time")
    p.add_argument("--integrator", choices=("rkmk4", "rk4"))
    p.add_argument("--seed", type=int)
    p.add_argument("--quiet", action="store_true", help="print nothing on success")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 2
    try:
        cfg = ScenarioConfig.load(args.config).replace(
            out_dir=args.out, steps=args.steps, integrator=args.integrator, seed=args.seed)
        report, artifacts = run(args.subcommand, cfg)
        written = emit(artifacts, cfg.out_dir, cfg.formats)
    except ConfigError as exc:
        print(f"cartan: config error: {exc}", file=sys.stderr)
        return 2
    except EmitError as exc:
        print(f"cartan: cannot write output: {exc}", file=sys.stderr)
        return 2
    except LieError as exc:
        print(f"cartan: {args.subcommand} failed: {exc}", file=sys.stderr)
        return 1
    failed = [k for k, r in report.checks.items() if not r["pass"]]
    if not args.quiet or failed:
        for name, r in report.checks.items():
            mark = "PASS" if r["pass"] else "FAIL"
            print(f"{mark}  {name}  value={r['value']:.3e}  tol={r['tolerance']:.1e}")
        if not args.quiet:
            for name, sec in report.timings.items():
                print(f"time  {name}  {sec:.2f}s", file=sys.stderr)
            for path in written:
                print(f"wrote {path}", file=sys.stderr)
    return 1 if failed else 0


if __name__ == "__main__":
    sys.exit(main())
