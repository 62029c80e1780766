"""Experiment execution, logging, and run comparison.

A run is fully determined by its config plus seed: the problem, the starting
point, and every batch draw are derived from the seed's substreams, so two
executions of the same config produce byte-identical CSV logs. The log records
per step the full-gradient norm and the momentum tracking error
||m_t - grad F(x_t)||^2, the quantity the convergence analysis bounds.
"""

from __future__ import annotations

import json
import math
import time
from collections import deque
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import RunConfig, build_optimizer, build_problem
from .numkit import l2_norm
from .schedules import GammaSchedule

__all__ = [
    "RunLog",
    "Report",
    "DivergenceError",
    "run_experiment",
    "sweep",
    "gamma_scan",
    "tracking_error_stats",
    "compare_runs",
    "steps_to_threshold",
    "CSV_HEADER",
]

CSV_HEADER = "step,loss,grad_norm,tracking_err,lr,gamma,clipped"
DIVERGENCE_NORM = 1e12


class DivergenceError(RuntimeError):
    """Raised when a run produces a non-finite loss or runaway iterates."""

    def __init__(self, message, log=None):
        super().__init__(message)
        self.log = log


@dataclass
class RunLog:
    """Per-step time series plus a summary block."""

    name: str
    seed: int
    rows: list = field(default_factory=list)  # (t, loss, grad_norm, tracking_err, lr, gamma, clipped)
    summary: dict = field(default_factory=dict)

    def column(self, name: str) -> np.ndarray:
        idx = CSV_HEADER.split(",").index(name)
        return np.array([row[idx] for row in self.rows], dtype=np.float64)

    def to_csv(self) -> str:
        lines = [CSV_HEADER]
        for t, loss, gn, te, lr, gamma, clipped in self.rows:
            lines.append(f"{t},{loss!r},{gn!r},{te!r},{lr!r},{gamma!r},{int(clipped)}")
        return "\n".join(lines) + "\n"

    def write(self, out_dir) -> Path:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        csv_path = out_dir / f"{self.name}.csv"
        csv_path.write_text(self.to_csv())
        (out_dir / f"{self.name}.json").write_text(json.dumps(self.summary, indent=2, sort_keys=True) + "\n")
        return csv_path


def steps_to_threshold(grad_norms: np.ndarray, threshold: float):
    """First 1-based step with full-gradient norm <= threshold, else None."""
    hits = np.nonzero(grad_norms <= threshold)[0]
    return int(hits[0] + 1) if hits.size else None


def run_experiment(cfg: RunConfig) -> RunLog:
    """Execute one optimizer run and return its log.

    Each step samples one batch, evaluates the stochastic gradient at the
    current iterate (and, in exact mode, at the previous iterate under the
    same batch), applies the optimizer step, and records the pre-update loss,
    full-gradient norm, post-update momentum tracking error, and the applied
    learning rate / correction scale. Raises :class:`DivergenceError` (with
    the truncated log attached) on non-finite losses or ||x|| > 1e12.
    """
    t_start = time.perf_counter()
    oracle = build_problem(cfg)
    state, hp, step_fn, need, kind = build_optimizer(cfg, oracle)
    total = cfg.total_steps
    record_tracking = bool(cfg.run.get("record_tracking_error", True))
    name = cfg.run.get("name") or f"{cfg.problem['kind']}_{kind}_seed{cfg.seed}"
    log = RunLog(name=name, seed=cfg.seed)

    adaptive_gamma = isinstance(hp.gamma, GammaSchedule) and hp.gamma.kind == "optimal_estimate"
    gamma_window = deque(maxlen=hp.gamma.window) if adaptive_gamma else None
    prev_full = None
    grad_evals = 0

    def finalize(diverged, reason=None, step=None):
        grad_norms = log.column("grad_norm") if log.rows else np.array([])
        losses = log.column("loss") if log.rows else np.array([])
        threshold = float(cfg.run.get("grad_threshold", 1e-2))
        log.summary = {
            "name": name,
            "seed": cfg.seed,
            "problem": cfg.problem["kind"],
            "optimizer": kind,
            "correction_mode": hp.correction_mode if need in ("exact", "approx") else None,
            "total_steps": total,
            "steps_completed": len(log.rows),
            "grad_evals": grad_evals,
            "grad_threshold": threshold,
            "steps_to_threshold": steps_to_threshold(grad_norms, threshold) if len(grad_norms) else None,
            "final_loss": float(losses[-1]) if len(losses) else None,
            "best_loss": float(np.min(losses)) if len(losses) else None,
            "min_grad_norm": float(np.min(grad_norms)) if len(grad_norms) else None,
            "wall_time_s": time.perf_counter() - t_start,
            "diverged": diverged,
        }
        if diverged:
            log.summary["divergence"] = {"step": step, "reason": reason}
        out_dir = cfg.run.get("out_dir")
        if out_dir:
            log.write(out_dir)

    for t in range(1, total + 1):
        loss = oracle.loss(state.x)
        if not math.isfinite(loss):
            finalize(True, reason="non-finite loss", step=t)
            raise DivergenceError(f"non-finite loss at step {t}", log=log)
        full = oracle.full_grad(state.x)
        grad_norm = l2_norm(full)

        batch = oracle.sample_batch(t)
        g = oracle.stochastic_grad(state.x, batch)
        grad_evals += 1
        g_ref = None
        if need == "exact":
            g_ref = oracle.stochastic_grad(state.prev_x, batch)
            grad_evals += 1
        elif need == "approx":
            g_ref = state.prev_g

        if adaptive_gamma:
            # control-variates sample: U pairs the fresh-noise term with the
            # previous momentum error, Y is the correction variable
            u_var = (1.0 - hp.beta1) * (g - full) + (state.m - (prev_full if prev_full is not None else full))
            y_var = hp.beta1 * (g - g_ref)
            gamma_window.append((u_var, y_var))

        try:
            if need is None:
                report = step_fn(state, g, hp)
            elif need == "exact" and kind == "storm":
                report = step_fn(state, g, g_ref, hp)
            else:
                report = step_fn(state, g, g_ref, hp, gamma_samples=gamma_window)
        except FloatingPointError as exc:
            finalize(True, reason=str(exc), step=t)
            raise DivergenceError(f"optimizer produced non-finite values at step {t}: {exc}", log=log) from exc

        tracking = float(l2_norm(state.m - full) ** 2) if record_tracking else float("nan")
        log.rows.append((t, loss, grad_norm, tracking, report.lr, report.gamma, report.clipped))
        prev_full = full

        if l2_norm(state.x) > DIVERGENCE_NORM:
            finalize(True, reason="iterate norm exceeded 1e12", step=t)
            raise DivergenceError(f"iterate norm exceeded {DIVERGENCE_NORM:g} at step {t}", log=log)

    finalize(False)
    return log


def _run_for_seed(args):
    cfg, seed = args
    return run_experiment(cfg.with_overrides(seed=seed))


def sweep(cfg: RunConfig, seeds, workers: int = 1) -> list[RunLog]:
    """Run the config once per seed (optionally across processes)."""
    seeds = list(seeds)
    base_name = cfg.run.get("name") or f"{cfg.problem['kind']}_{cfg.optimizer['kind']}"
    jobs = []
    for s in seeds:
        job = cfg.with_overrides(seed=s)
        job.run["name"] = f"{base_name}_seed{s}"
        jobs.append((job, s))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_run_for_seed, jobs))
    return [run_experiment(job[0]) for job in jobs]


def gamma_scan(cfg: RunConfig, values) -> list[dict]:
    """Re-run the config with a constant correction scale per value.

    Returns one summary row per gamma; a diverging run is recorded rather than
    raised so the scan always completes.
    """
    rows = []
    for value in values:
        run_cfg = cfg.with_overrides(gamma=float(value))
        run_cfg.schedule.pop("gamma", None)
        run_cfg.run["name"] = f"{cfg.run.get('name', 'scan')}_gamma{value:g}"
        try:
            log = run_experiment(run_cfg)
        except DivergenceError as exc:
            log = exc.log
        summary = log.summary
        tracking = None
        if summary["steps_completed"]:
            te = log.column("tracking_err")
            te = te[np.isfinite(te)]
            if te.size:
                tracking = float(np.mean(te[len(te) // 5:]))
        rows.append(
            {
                "gamma": float(value),
                "final_loss": summary["final_loss"],
                "best_loss": summary["best_loss"],
                "min_grad_norm": summary["min_grad_norm"],
                "steps_to_threshold": summary["steps_to_threshold"],
                "mean_tracking_err": tracking,
                "diverged": summary["diverged"],
            }
        )
    return rows


def tracking_error_stats(log: RunLog, burn_in: int) -> dict:
    """Mean/median tracking error past the burn-in step."""
    if burn_in >= len(log.rows):
        raise ValueError("burn_in must be smaller than the number of recorded steps")
    te = log.column("tracking_err")[burn_in:]
    if not np.all(np.isfinite(te)):
        raise ValueError("tracking error was not recorded for this run")
    return {"mean": float(np.mean(te)), "median": float(np.median(te)), "steps": int(te.size)}


@dataclass
class Report:
    """Comparison of labeled run groups over an identical (problem, seed) grid."""

    threshold: float
    per_run: dict  # label -> {seed: steps_to_threshold (or None)}
    medians: dict  # label -> median steps (inf when never reached)
    aggregates: dict  # label -> {median/min/max of final loss}
    ratios: dict  # (label_a, label_b) -> median-steps ratio

    def to_dict(self):
        return {
            "threshold": self.threshold,
            "per_run": {k: {str(s): v for s, v in d.items()} for k, d in self.per_run.items()},
            "medians": self.medians,
            "final_loss": self.aggregates,
            "ratios": {f"{a}/{b}": r for (a, b), r in self.ratios.items()},
        }

    def to_text(self):
        lines = [f"steps to grad-norm threshold {self.threshold:g}"]
        for label, med in sorted(self.medians.items()):
            seeds = self.per_run[label]
            per_seed = ", ".join(f"{s}:{v if v is not None else 'never'}" for s, v in sorted(seeds.items()))
            lines.append(f"  {label:24s} median={med if med != float('inf') else 'never'}  ({per_seed})")
        for (a, b), r in sorted(self.ratios.items()):
            lines.append(f"  ratio {a} / {b} = {r if r is not None else 'undefined'}")
        return "\n".join(lines)


def _median_steps(values):
    if any(v is None for v in values):
        return float("inf")
    return float(np.median(values))


def compare_runs(groups: dict[str, list[RunLog]], threshold: float) -> Report:
    """Compare run groups; every group must cover the same seed set."""
    if len(groups) < 2:
        raise ValueError("need at least two run groups to compare")
    seed_sets = {label: tuple(sorted(log.seed for log in logs)) for label, logs in groups.items()}
    grids = set(seed_sets.values())
    if len(grids) != 1:
        raise ValueError(f"run groups cover different seed grids: {seed_sets}")
    problems = {log.summary.get("problem") for logs in groups.values() for log in logs}
    if len(problems - {None}) > 1:
        raise ValueError(f"run groups cover different problems: {sorted(problems - {None})}")
    per_run, medians, aggregates = {}, {}, {}
    for label, logs in groups.items():
        steps = {}
        finals = []
        for log in sorted(logs, key=lambda lg: lg.seed):
            steps[log.seed] = steps_to_threshold(log.column("grad_norm"), threshold)
            finals.append(log.summary.get("final_loss", log.column("loss")[-1]))
        per_run[label] = steps
        medians[label] = _median_steps(list(steps.values()))
        aggregates[label] = {
            "median": float(np.median(finals)),
            "min": float(np.min(finals)),
            "max": float(np.max(finals)),
        }
    ratios = {}
    labels = sorted(groups)
    for a in labels:
        for b in labels:
            if a == b:
                continue
            ma, mb = medians[a], medians[b]
            ratios[(a, b)] = None if not math.isfinite(ma) or not math.isfinite(mb) or mb == 0 else ma / mb
    return Report(threshold=threshold, per_run=per_run, medians=medians, aggregates=aggregates, ratios=ratios)
