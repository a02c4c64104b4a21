"""Command-line interface.

Commands
--------
``otlab run <scenario> --out <dir> [--resolution N] [--seed N]``
    Execute a scenario config (a file path, or a packaged preset name like
    ``theorem/annulus``), write CSV/SVG artifacts and a plain-text report
    into ``--out``, and print the verdict lines.  Exit code 0 iff every
    verdict is PASS (2 on configuration errors).

``otlab verify-cost <id> [--samples N] [--seed N]``
    Run the structural checks and the maximum-principle sweep for one
    built-in cost function; print one PASS/FAIL line per check.  Exit code
    0 iff all checks pass.

``otlab presets``
    List the packaged scenario presets.

The environment variable ``OTLAB_THREADS`` caps internal parallelism: it is
applied to the numeric backend's thread pools (OpenMP/BLAS) before any
numerical module loads, so it must be set when the process starts.
"""

from __future__ import annotations

import argparse
import os
import sys


def _apply_thread_cap():
    cap = os.environ.get("OTLAB_THREADS")
    if not cap:
        return
    try:
        n = max(1, int(cap))
    except ValueError:
        print(f"otlab: ignoring non-integer OTLAB_THREADS={cap!r}",
              file=sys.stderr)
        return
    for var in (
        "OMP_NUM_THREADS",
        "OPENBLAS_NUM_THREADS",
        "MKL_NUM_THREADS",
        "NUMEXPR_NUM_THREADS",
        "VECLIB_MAXIMUM_THREADS",
    ):
        os.environ.setdefault(var, str(n))


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="otlab",
        description="2-D numerical laboratory for semi-discrete optimal "
                    "transport",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser(
        "run", help="execute a scenario config and write its artifacts"
    )
    run.add_argument("scenario",
                     help="config file path, or preset name (family/name)")
    run.add_argument("--out", required=True, help="output directory")
    run.add_argument("--resolution", type=int, default=None,
                     help="override mesh.resolution")
    run.add_argument("--seed", type=int, default=None,
                     help="override the scenario seed")

    vc = sub.add_parser(
        "verify-cost", help="structural and maximum-principle checks for a "
                            "built-in cost"
    )
    vc.add_argument("cost_id", help="quadratic | bilinear | log | sqrt_plus")
    vc.add_argument("--samples", type=int, default=20000,
                    help="tuples for the maximum-principle sweep")
    vc.add_argument("--seed", type=int, default=0)

    sub.add_parser("presets", help="list packaged scenario presets")
    return parser


def _cmd_run(args) -> int:
    from pathlib import Path

    from .errors import ConfigError
    from .runner import run_scenario
    from .scenario import load_scenario, preset_path

    try:
        candidate = Path(args.scenario)
        if candidate.is_file():
            scn = load_scenario(candidate)
        else:
            scn = load_scenario(preset_path(args.scenario))
        report = run_scenario(
            scn, out_dir=args.out, resolution=args.resolution,
            seed=args.seed,
        )
    except ConfigError as exc:
        print(f"otlab: config error: {exc}", file=sys.stderr)
        return 2
    for line in report.verdict_lines():
        print(line)
    print(f"overall: {'PASS' if report.all_pass else 'FAIL'}")
    print(f"artifacts written to {args.out}: "
          f"{', '.join(report.artifacts)}")
    return 0 if report.all_pass else 1


def _cmd_verify_cost(args) -> int:
    import numpy as np

    from .costs import COST_IDS, make_cost, verify_structural
    from .estimates import loeper_check, loeper_preset_samples
    from .runner import LOEPER_TOLERANCES

    if args.cost_id not in COST_IDS:
        print(f"otlab: unknown cost {args.cost_id!r} "
              f"(known: {', '.join(COST_IDS)})", file=sys.stderr)
        return 2
    cost = make_cost(args.cost_id)
    rep = verify_structural(cost, seed=args.seed)
    print(str(rep))

    rng = np.random.default_rng(args.seed)
    tol = LOEPER_TOLERANCES[args.cost_id]
    viol = loeper_check(cost, *loeper_preset_samples(cost, args.samples, rng))
    ok = viol <= tol
    print(f"  maximum principle       {'PASS' if ok else 'FAIL'}  "
          f"max violation {viol:.3e} (tol {tol:.0e}, "
          f"{args.samples} samples)")
    return 0 if (rep.all_pass and ok) else 1


def _cmd_presets() -> int:
    from .scenario import available_presets

    for name in available_presets():
        print(name)
    return 0


def main(argv=None) -> int:
    _apply_thread_cap()
    args = _build_parser().parse_args(argv)
    if args.command == "run":
        code = _cmd_run(args)
    elif args.command == "verify-cost":
        code = _cmd_verify_cost(args)
    else:
        code = _cmd_presets()
    if argv is None:
        sys.exit(code)
    return code


if __name__ == "__main__":
    main()
