"""Command line entry point: ``kjblab {functionals,flow,geodesic,verify} --config FILE --out DIR``.

Exit status: 0 when every check passes, 2 when a check fails, 1 on error.
Errors are printed to stderr as a single JSON object and also written to
``summary.json`` when the output directory is known.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .errors import ConfigError, LabError
from .report import to_json, write_text
from .scenario import TASKS, load, run_scenario, shipped, shipped_names

SHIPPED_PREFIX = "shipped:"


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="kjblab", description="Numerical lab for J_beta metrics on flat tori.")
    p.add_argument("-v", "--verbose", action="count", default=0, help="more logging (repeatable)")
    sub = p.add_subparsers(dest="verb", required=True)
    helps = {
        "functionals": "evaluate the functional family and its identities on random states",
        "flow": "run the negative gradient flow with its diagnostics",
        "geodesic": "compute a geodesic segment between random endpoints",
        "verify": "run the verification battery",
    }
    for verb in TASKS:
        s = sub.add_parser(verb, help=helps[verb])
        s.add_argument("--config", required=True,
                       help=f"JSON config file, or {SHIPPED_PREFIX}NAME for a bundled scenario "
                            f"({', '.join(shipped_names())})")
        s.add_argument("--out", help="output directory (default: the config's output entry)")
    return p


def _error(payload: dict) -> None:
    print(json.dumps(payload), file=sys.stderr)


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = args.config
        path = shipped(cfg[len(SHIPPED_PREFIX):]) if cfg.startswith(SHIPPED_PREFIX) else Path(cfg)
        sc = load(path, args.verb)
    except ConfigError as exc:
        _error(exc.to_dict())
        if args.out:
            write_text(Path(args.out) / "summary.json",
                       to_json({"task": args.verb, "status": "error", "all_pass": False, "error": exc.to_dict()}))
        return 1
    try:
        status, summary = run_scenario(sc, args.out)
    except LabError as exc:  # raised outside a task, e.g. while writing reports
        _error(exc.to_dict())
        return 1
    if status == 1:
        _error(summary["error"])
    else:
        for c in summary["checks"]:
            mark = "PASS" if c["pass"] else "FAIL"
            print(f"{mark} {c['name']}: lhs={c['lhs']} rhs={c['rhs']} tol={c['tolerance']}")
        print(f"{summary['n_checks'] - summary['n_failed']}/{summary['n_checks']} checks passed")
    return status


if __name__ == "__main__":
    sys.exit(main())
