"""Run configuration: a structured document with [problem], [optimizer],
[schedule], and [run] sections, parsed from JSON or TOML.

The builders here turn a validated config into a problem oracle, a hyperparameter
record, and a step function; everything downstream (single runs, sweeps, scans)
goes through :func:`load_config` + the builders so that a fixed seed pins the
entire experiment.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

try:
    import tomllib  # py311+
except ModuleNotFoundError:  # pragma: no cover - py310 fallback
    import tomli as tomllib

from . import problems
from .optimizers import REFERENCE_NEEDS, STEP_FUNCTIONS, Hyperparams, init_state
from .schedules import GammaSchedule, LrSchedule

__all__ = ["ConfigError", "RunConfig", "load_config", "build_problem", "build_optimizer"]

# gradient clipping defaults per optimizer kind: the sign/diagonal family
# clips at 1.0 (mirroring standard training practice), the polar family and
# the raw baselines do not
_CLIP_DEFAULTS = {
    "mars_adamw": 1.0,
    "mars_lion": 1.0,
    "mars_identity": 1.0,
    "adamw": 1.0,
    "lion": 1.0,
    "mars_shampoo": None,
    "muon": None,
    "storm": None,
    "sgd": None,
}

_POLAR_DEFAULTS = {"mars_shampoo": "svd", "muon": "newton_schulz"}


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    problem: dict
    optimizer: dict
    schedule: dict
    run: dict
    source: str | None = None

    @property
    def seed(self) -> int:
        return int(self.run.get("seed", 0))

    @property
    def total_steps(self) -> int:
        return int(self.run["total_steps"])

    def with_overrides(self, seed=None, steps=None, out_dir=None, **optimizer_overrides) -> "RunConfig":
        cfg = RunConfig(
            problem=copy.deepcopy(self.problem),
            optimizer=copy.deepcopy(self.optimizer),
            schedule=copy.deepcopy(self.schedule),
            run=copy.deepcopy(self.run),
            source=self.source,
        )
        if seed is not None:
            cfg.run["seed"] = int(seed)
        if steps is not None:
            cfg.run["total_steps"] = int(steps)
        if out_dir is not None:
            cfg.run["out_dir"] = str(out_dir)
        cfg.optimizer.update(optimizer_overrides)
        return cfg


def load_config(path) -> RunConfig:
    """Parse and validate a JSON or TOML run config."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    text = path.read_bytes()
    if path.suffix.lower() == ".toml":
        try:
            raw = tomllib.loads(text.decode("utf-8"))
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"invalid TOML in {path}: {exc}") from exc
    else:
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON in {path}: {exc}") from exc
    return config_from_dict(raw, source=str(path))


def config_from_dict(raw: dict, source=None) -> RunConfig:
    for section in ("problem", "optimizer", "run"):
        if section not in raw:
            raise ConfigError(f"missing [{section}] section")
    run = dict(raw["run"])
    if "total_steps" not in run:
        raise ConfigError("run.total_steps is required")
    run.setdefault("seed", 0)
    run.setdefault("record_tracking_error", True)
    run.setdefault("grad_threshold", 1e-2)
    cfg = RunConfig(
        problem=dict(raw["problem"]),
        optimizer=dict(raw["optimizer"]),
        schedule=dict(raw.get("schedule", {})),
        run=run,
        source=source,
    )
    # fail fast on unknown kinds
    if cfg.optimizer.get("kind") not in STEP_FUNCTIONS:
        raise ConfigError(f"unknown optimizer kind: {cfg.optimizer.get('kind')!r}")
    if cfg.problem.get("kind") not in ("quadratic", "logistic", "rosenbrock", "mlp"):
        raise ConfigError(f"unknown problem kind: {cfg.problem.get('kind')!r}")
    return cfg


def _spectrum_from(problem: dict, dim: int) -> np.ndarray:
    spec = problem.get("spectrum")
    if spec is None:
        return np.linspace(0.1, 1.0, dim)
    if isinstance(spec, dict):
        lo, hi = float(spec["min"]), float(spec["max"])
        if spec.get("scale", "linear") == "log":
            return np.geomspace(lo, hi, dim)
        return np.linspace(lo, hi, dim)
    spec = np.asarray(spec, dtype=np.float64)
    if spec.size != dim:
        raise ConfigError("spectrum length must equal dim")
    return spec


def build_problem(cfg: RunConfig) -> problems.GradientOracle:
    p = cfg.problem
    kind = p["kind"]
    seed = cfg.seed
    try:
        if kind == "quadratic":
            dim = int(p.get("dim", 10))
            block_shapes = p.get("block_shapes")
            if block_shapes is not None:
                block_shapes = [tuple(int(v) for v in s) for s in block_shapes]
            return problems.make_noisy_quadratic(
                dim,
                _spectrum_from(p, dim),
                sigma=float(p.get("sigma", 1.0)),
                seed=seed,
                rotate=bool(p.get("rotate", True)),
                batch_size=int(p.get("batch_size", 1)),
                block_shapes=block_shapes,
                start_radius=float(p.get("start_radius", 3.0)),
            )
        if kind == "logistic":
            return problems.make_logistic(
                n=int(p.get("n", 256)),
                dim=int(p.get("dim", 20)),
                batch_size=int(p.get("batch_size", 16)),
                seed=seed,
                l2=float(p.get("l2", 1e-3)),
            )
        if kind == "rosenbrock":
            return problems.make_noisy_rosenbrock(
                dim=int(p.get("dim", 2)), sigma=float(p.get("sigma", 0.0)), seed=seed
            )
        if kind == "mlp":
            return problems.make_mlp(
                layers=[int(w) for w in p.get("layers", [4, 16, 2])],
                n=int(p.get("n", 64)),
                batch_size=int(p.get("batch_size", 8)),
                seed=seed,
            )
    except ValueError as exc:
        raise ConfigError(f"bad problem parameters: {exc}") from exc
    raise ConfigError(f"unknown problem kind: {kind!r}")


def _lr_schedule_from(cfg: RunConfig) -> LrSchedule | float:
    sched = cfg.schedule.get("lr")
    if sched is None:
        return float(cfg.optimizer.get("lr", 1e-2))
    if isinstance(sched, (int, float)):
        return float(sched)
    kw = dict(sched)
    kind = kw.pop("kind", "constant")
    kw.setdefault("total_steps", cfg.total_steps)
    if kind == "constant":
        kw.pop("total_steps", None)
    try:
        return LrSchedule(kind=kind, **kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad lr schedule: {exc}") from exc


def _gamma_schedule_from(cfg: RunConfig) -> GammaSchedule | float:
    sched = cfg.schedule.get("gamma")
    if sched is None:
        return float(cfg.optimizer.get("gamma", 0.025))
    if isinstance(sched, (int, float)):
        return float(sched)
    kw = dict(sched)
    kind = kw.pop("kind", "constant")
    if kind == "linear":
        kw.setdefault("total_steps", cfg.total_steps)
    try:
        return GammaSchedule(kind=kind, **kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad gamma schedule: {exc}") from exc


def build_optimizer(cfg: RunConfig, oracle: problems.GradientOracle):
    """Returns (state, hyperparams, step_fn, reference_need, kind)."""
    o = cfg.optimizer
    kind = o["kind"]
    clip = o.get("clip_threshold", _CLIP_DEFAULTS[kind])
    if isinstance(clip, str):
        if clip != "off":
            raise ConfigError("clip_threshold must be a number, null, or 'off'")
        clip = None
    decay_exclude = None
    if cfg.problem["kind"] == "mlp" and o.get("decay_biases", False) is False:
        decay_exclude = lambda i, shape: len(shape) < 2  # noqa: E731
    try:
        hp = Hyperparams(
            beta1=float(o.get("beta1", 0.95)),
            beta2=float(o.get("beta2", 0.99)),
            weight_decay=float(o.get("weight_decay", 0.0)),
            eps=float(o.get("eps", 1e-8)),
            clip_threshold=clip,
            correction_mode=o.get("correction_mode", "exact" if kind == "storm" else "approx"),
            bias_correction=bool(o.get("bias_correction", True)),
            lr=_lr_schedule_from(cfg),
            gamma=_gamma_schedule_from(cfg),
            polar_method=o.get("polar_method", _POLAR_DEFAULTS.get(kind, "svd")),
            ns_tol=float(o.get("ns_tol", 1e-7)),
            ns_max_iter=int(o.get("ns_max_iter", 30)),
            decay_exclude=decay_exclude,
        )
    except ValueError as exc:
        raise ConfigError(f"bad optimizer parameters: {exc}") from exc
    need = REFERENCE_NEEDS[kind]
    if need == "mode":
        need = hp.correction_mode
    if kind == "storm" and hp.correction_mode != "exact":
        raise ConfigError("storm requires correction_mode = 'exact'")
    if isinstance(hp.gamma, GammaSchedule) and hp.gamma.kind == "optimal_estimate":
        if hp.correction_mode != "exact":
            raise ConfigError("gamma kind 'optimal_estimate' requires correction_mode = 'exact'")
        if not cfg.run.get("record_tracking_error", True):
            raise ConfigError("gamma kind 'optimal_estimate' requires record_tracking_error")
    state = init_state(oracle.initial_point(), oracle.block_shapes)
    return state, hp, STEP_FUNCTIONS[kind], need, kind
