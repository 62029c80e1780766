"""Command-line interface.

Subcommands: ``run`` (single experiment), ``sweep`` (config x seed grid),
``compare`` (steps-to-threshold report across result directories), ``verify``
(identity/bound checks), ``gamma-scan`` (correction-scale sensitivity).

Exit codes: 0 success, 1 divergence, 2 verification failure, 3 config error.
Seed precedence: --seed flag, then the MARS_OPT_SEED environment variable,
then the config file.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .config import ConfigError, RunConfig, load_config
from .harness import DivergenceError, RunLog, compare_runs, gamma_scan, run_experiment, sweep
from .verify import verify_suite

EXIT_OK, EXIT_DIVERGED, EXIT_VERIFY_FAILED, EXIT_CONFIG = 0, 1, 2, 3


def _apply_overrides(cfg: RunConfig, args) -> RunConfig:
    seed = None
    env_seed = os.environ.get("MARS_OPT_SEED")
    if env_seed is not None:
        try:
            seed = int(env_seed)
        except ValueError as exc:
            raise ConfigError(f"MARS_OPT_SEED must be an integer, got {env_seed!r}") from exc
    if getattr(args, "seed", None) is not None:
        seed = args.seed
    return cfg.with_overrides(seed=seed, steps=getattr(args, "steps", None), out_dir=getattr(args, "out", None))


def _parse_seeds(text: str) -> list[int]:
    if ".." in text:
        lo, hi = text.split("..", 1)
        return list(range(int(lo), int(hi) + 1))
    return [int(tok) for tok in text.split(",") if tok]


def cmd_run(args) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    try:
        log = run_experiment(cfg)
    except DivergenceError as exc:
        print(f"DIVERGED: {exc}", file=sys.stderr)
        if exc.log is not None:
            print(json.dumps(exc.log.summary, indent=2, sort_keys=True))
        return EXIT_DIVERGED
    print(json.dumps(log.summary, indent=2, sort_keys=True))
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    seeds = _parse_seeds(args.seeds)
    try:
        logs = sweep(cfg, seeds, workers=args.workers)
    except DivergenceError as exc:
        print(f"DIVERGED: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    for log in logs:
        s = log.summary
        print(f"seed {s['seed']:>4d}  final_loss={s['final_loss']:.6g}  "
              f"min_grad_norm={s['min_grad_norm']:.6g}  steps_to_threshold={s['steps_to_threshold']}")
    return EXIT_OK


def _load_group(directory: Path) -> list[RunLog]:
    logs = []
    for csv_path in sorted(directory.glob("*.csv")):
        summary_path = csv_path.with_suffix(".json")
        summary = json.loads(summary_path.read_text()) if summary_path.exists() else {}
        rows = []
        with open(csv_path) as fh:
            header = fh.readline()
            for line in fh:
                t, loss, gn, te, lr, gamma, clipped = line.rstrip("\n").split(",")
                rows.append((int(t), float(loss), float(gn), float(te), float(lr), float(gamma), int(clipped)))
        logs.append(RunLog(name=csv_path.stem, seed=int(summary.get("seed", -1)), rows=rows, summary=summary))
    if not logs:
        raise ConfigError(f"no run logs found in {directory}")
    return logs


def cmd_compare(args) -> int:
    groups = {}
    for directory in args.dirs:
        path = Path(directory)
        groups[path.name or str(path)] = _load_group(path)
    try:
        report = compare_runs(groups, threshold=args.threshold)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    print(report.to_text())
    if args.json:
        Path(args.json).write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n")
    return EXIT_OK


def cmd_verify(args) -> int:
    sizes = {"steps": 200, "horizon": 20_000} if args.quick else None
    results = verify_suite(seed=args.seed, sizes=sizes)
    failed = [r for r in results if not r.passed]
    for r in results:
        print(r.line())
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    return EXIT_VERIFY_FAILED if failed else EXIT_OK


def cmd_gamma_scan(args) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    values = [float(tok) for tok in args.values.split(",") if tok]
    rows = gamma_scan(cfg, values)
    print("gamma,final_loss,best_loss,min_grad_norm,steps_to_threshold,mean_tracking_err,diverged")
    for row in rows:
        print(
            f"{row['gamma']:g},{row['final_loss']},{row['best_loss']},{row['min_grad_norm']},"
            f"{row['steps_to_threshold']},{row['mean_tracking_err']},{int(row['diverged'])}"
        )
    return EXIT_DIVERGED if any(r["diverged"] for r in rows) else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="marsopt", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--out", help="output directory override")
        p.add_argument("--steps", type=int, help="total_steps override")
        p.add_argument("--seed", type=int, help="seed override")

    p_run = sub.add_parser("run", help="run a single experiment from a config file")
    p_run.add_argument("config")
    add_common(p_run)
    p_run.set_defaults(func=cmd_run)

    p_sweep = sub.add_parser("sweep", help="run a config across a seed range")
    p_sweep.add_argument("config")
    p_sweep.add_argument("--seeds", required=True, help="range a..b or list a,b,c")
    p_sweep.add_argument("--workers", type=int, default=1)
    add_common(p_sweep)
    p_sweep.set_defaults(func=cmd_sweep)

    p_cmp = sub.add_parser("compare", help="compare result directories")
    p_cmp.add_argument("dirs", nargs="+")
    p_cmp.add_argument("--threshold", type=float, default=1e-2)
    p_cmp.add_argument("--json", help="also write the report as JSON to this path")
    p_cmp.set_defaults(func=cmd_compare)

    p_ver = sub.add_parser("verify", help="run the identity/bound verification suite")
    p_ver.add_argument("--seed", type=int, default=0)
    p_ver.add_argument("--quick", action="store_true", help="shrink check horizons")
    p_ver.set_defaults(func=cmd_verify)

    p_scan = sub.add_parser("gamma-scan", help="rerun a config over a list of correction scales")
    p_scan.add_argument("config")
    p_scan.add_argument("--values", required=True, help="comma-separated gamma values")
    add_common(p_scan)
    p_scan.set_defaults(func=cmd_gamma_scan)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
