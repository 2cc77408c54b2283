"""Command-line entry point: ``temperlab {gap,bounds,sweep,verify,sample}``.

Exit codes: 0 success, 1 partial sweep failure, 2 configuration or input
error, 3 state-space cap exceeded, 4 violated bound or property.
Every flag can also be given as an environment variable ``TEMPERLAB_<FLAG>``
(for example ``TEMPERLAB_CAP=50000``); command-line flags win.
"""

from __future__ import annotations

import argparse
import json
import sys
import time

from ..errors import (
    BoundViolationError,
    ConfigError,
    DomainError,
    KernelValidationError,
    ShapeError,
    SizeCapError,
)
from ..simulate import dump_trajectory
from . import verify as vf
from .config import apply_overrides, env_default, load_config, validate_config
from .experiments import run_command
from .io import make_record, result_dir, write_result

EXIT_OK, EXIT_PARTIAL, EXIT_CONFIG, EXIT_CAP, EXIT_ASSERT = 0, 1, 2, 3, 4


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", default=env_default("out", "results"),
                        help="results root directory (default: results)")
    common.add_argument("--seed", type=int, default=env_default("seed"),
                        help="random seed (overrides run.seed)")
    common.add_argument("--workers", type=int, default=env_default("workers"),
                        help="worker processes for sweeps")
    common.add_argument("--cap", type=int, default=env_default("cap"),
                        help="largest state space built as an exact matrix")

    parser = argparse.ArgumentParser(prog="temperlab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_ in [("gap", "exact spectral gaps"),
                        ("bounds", "bound ingredients and lower bounds"),
                        ("sweep", "exact quantities over a list of sizes"),
                        ("sample", "Monte Carlo runs and mixing diagnostics")]:
        p = sub.add_parser(name, parents=[common], help=help_)
        p.add_argument("--config", default=env_default("config"), required=env_default("config") is None,
                       help="JSON experiment configuration")
    p = sub.add_parser("verify", parents=[common], help="randomized property battery")
    p.add_argument("--cases", type=int, default=int(env_default("cases", 100)),
                   help="cases per property (default 100)")
    p.add_argument("--property", action="append", dest="properties",
                   choices=[q.name for q in vf.PROPERTIES], help="restrict to these properties")
    p.add_argument("--replay", help="re-check a serialized failing instance")
    return parser


def _say(msg: str) -> None:
    print(msg, file=sys.stderr)


def _run_experiment(args) -> int:
    raw = apply_overrides(load_config(args.config), seed=args.seed, cap=args.cap,
                          workers=args.workers)
    cfg = validate_config(raw)
    results, checks, columns, rows, extras, wall = run_command(args.command, cfg)
    record = make_record(args.command, cfg, results, wall, checks)
    path = write_result(args.out, record, columns, rows)
    for fname, traj in extras.items():
        dump_trajectory(traj, path / fname)
    print(str(path))
    failed = [k for k, ok in checks.items() if not ok]
    if args.command == "sweep" and results["failed_cells"]:
        _say(f"sweep cells failed: {results['failed_cells']}")
        return EXIT_PARTIAL
    if failed:
        _say("violated: " + ", ".join(failed))
        return EXIT_ASSERT
    return EXIT_OK


def _run_verify(args) -> int:
    seed = 0 if args.seed is None else int(args.seed)
    if args.replay:
        doc = vf.load_replay(args.replay)
        res = vf.replay(doc)
        print(f"{res.name}: replay {'PASS' if res.passed else 'FAIL'} "
              f"(slack {res.worst_slack:.3e})")
        return EXIT_OK if res.passed else EXIT_ASSERT
    t0 = time.perf_counter()
    report = vf.run_battery(seed, args.cases, args.properties)
    for r in report.results:
        print(f"{r.name:34s} cases={r.cases:4d} failures={r.failures:3d} "
              f"worst_slack={r.worst_slack: .3e} {'PASS' if r.passed else 'FAIL'}")
    if report.passed:
        return EXIT_OK
    out = result_dir(args.out, "verify")
    for r in report.results:
        if r.first_failure is not None:
            target = out / f"replay_{r.name}.json"
            target.write_text(json.dumps(r.first_failure), encoding="utf-8")
            _say(f"{r.name}: failing instance written to {target}")
    _say(f"verify finished in {time.perf_counter() - t0:.1f} s with failures")
    return EXIT_ASSERT


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "verify":
            return _run_verify(args)
        return _run_experiment(args)
    except (ConfigError, KernelValidationError, DomainError, ShapeError) as exc:
        _say(f"error: {exc}")
        return EXIT_CONFIG
    except SizeCapError as exc:
        _say(f"size cap: {exc}")
        return EXIT_CAP
    except BoundViolationError as exc:
        _say(f"bound violated: {exc}")
        return EXIT_ASSERT


if __name__ == "__main__":
    sys.exit(main())
