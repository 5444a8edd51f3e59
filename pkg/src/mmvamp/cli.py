"""Command-line front end.

Subcommands: ``run`` (execute an experiment config), ``shrinkage`` (emit the
shrinkage-curve grid), ``se`` (print the scalar state-evolution trace), and
``dump-instance`` (write one generated problem instance to disk).

Exit codes: 0 success, 1 config error, 2 runtime failure, 3 completed with
failed trials.
"""

import argparse
import csv
import sys
from dataclasses import replace
from pathlib import Path

from .harness import (
    ConfigError,
    ShrinkageSpec,
    derive_trial_seed,
    load_config,
    run_experiment,
    write_shrinkage_csv,
)
from .model import dump_instance
from .se import se_predict_trace


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mmvamp",
        description="Joint sparse recovery benchmarks: message-passing solvers "
        "and state evolution for multiple measurement vectors.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run an experiment config (path or bundled name)")
    run_p.add_argument("config", help="TOML config path, or bundled name (fig1, fig2, phase)")
    run_p.add_argument("--out", help="output directory (overrides config)")
    run_p.add_argument("--seed", type=int, help="base seed (overrides config)")
    run_p.add_argument("--trials", type=int, help="trial count (overrides config)")
    run_p.add_argument(
        "--solver",
        action="append",
        help="solver to run (repeatable; overrides config solver list)",
    )
    run_p.add_argument("--workers", type=int, help="parallel trial workers")

    shr_p = sub.add_parser("shrinkage", help="emit the shrinkage weight curve")
    shr_p.add_argument("--c", type=float, default=0.1, help="channel noise level")
    shr_p.add_argument("--eps", type=float, default=0.1, help="sparsity rate")
    shr_p.add_argument("--j", default="1,3,10,100", help="comma-separated snapshot counts")
    shr_p.add_argument("--grid", default="0.0:0.6:0.005", help="energy grid LO:HI:STEP")
    shr_p.add_argument("--out", default="shrinkage_curve.csv", help="output CSV path")

    se_p = sub.add_parser("se", help="print the scalar state-evolution trace")
    se_p.add_argument("--eps", type=float, required=True)
    se_p.add_argument("--delta", type=float, required=True)
    se_p.add_argument("--sigma2", type=float, default=0.0)
    se_p.add_argument("--iters", type=int, default=30)
    se_p.add_argument("--out", help="optional CSV path (default: stdout)")

    dump_p = sub.add_parser("dump-instance", help="write one generated instance to disk")
    dump_p.add_argument("config", help="TOML config path or bundled name")
    dump_p.add_argument("--out", default="instance", help="output directory")
    dump_p.add_argument("--trial", type=int, default=0, help="trial index to materialize")

    return parser


def _cmd_run(args) -> int:
    cfg = load_config(args.config)
    if args.out is not None:
        cfg = replace(cfg, outputs=Path(args.out))
    if args.seed is not None:
        cfg = replace(cfg, base_seed=args.seed)
    if args.trials is not None:
        cfg = replace(cfg, trials=args.trials)
    if args.solver:
        known = {sid: cfg.solver_cfgs.get(sid) for sid in args.solver}
        cfg = replace(
            cfg,
            solvers=tuple(args.solver),
            solver_cfgs={k: v for k, v in known.items() if v is not None},
        )
    if args.workers is not None:
        cfg = replace(cfg, workers=args.workers)
    report = run_experiment(cfg)
    for kind, path in report["outputs"].items():
        print(f"{kind}: {path}")
    for entry in report.get("summary", ()):
        print(
            f"{entry['solver']}: median terminal NSE "
            f"{entry['median_terminal_nse_db']:.2f} dB over {entry['trials']} trials "
            f"({entry['failed_trials']} failed)"
        )
    return 3 if report["failed_trials"] else 0


def _cmd_shrinkage(args) -> int:
    lo, hi, step = (float(tok) for tok in args.grid.split(":"))
    spec = ShrinkageSpec(
        c=args.c,
        epsilon=args.eps,
        snapshots=tuple(int(tok) for tok in args.j.split(",")),
        grid_lo=lo,
        grid_hi=hi,
        grid_step=step,
    )
    write_shrinkage_csv(spec, args.out)
    print(f"shrinkage_curve: {args.out}")
    return 0


def _cmd_se(args) -> int:
    trace = se_predict_trace(args.eps, args.delta, args.sigma2, args.iters)
    if args.out:
        with open(args.out, "w", newline="\n") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(("iteration", "c"))
            for i, c in enumerate(trace, start=1):
                writer.writerow((i, repr(c)))
        print(f"se_trace: {args.out}")
    else:
        print("iteration,c")
        for i, c in enumerate(trace, start=1):
            print(f"{i},{c!r}")
    return 0


def _cmd_dump_instance(args) -> int:
    cfg = load_config(args.config)
    if cfg.model is None:
        raise ConfigError("config has no [model] table to dump")
    model_cfg = replace(cfg.model, seed=derive_trial_seed(cfg.base_seed, args.trial))
    paths = dump_instance(model_cfg, args.out)
    for kind, path in paths.items():
        print(f"{kind}: {path}")
    return 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    handlers = {
        "run": _cmd_run,
        "shrinkage": _cmd_shrinkage,
        "se": _cmd_se,
        "dump-instance": _cmd_dump_instance,
    }
    try:
        return handlers[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
