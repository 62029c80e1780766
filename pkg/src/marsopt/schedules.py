"""Learning-rate, correction-scale, and momentum-coefficient schedules.

Empirical kinds (constant / cosine with warmup / warmup-stable-decay) mirror
common language-model training practice; the ``theory`` kind implements the
polynomially decaying step size eta_t = (s + t)^(-1/3) together with the
coupled beta schedules beta1 = 1 - c*eta^2, beta2 = 1 - eta^6 used by the
convergence analysis.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

__all__ = ["LrSchedule", "GammaSchedule", "TheoryParams", "lr_at", "gamma_at", "theory_betas"]


@dataclass
class LrSchedule:
    """Step-indexed learning rate.

    kinds:
      constant        -- max_lr everywhere
      cosine_warmup   -- linear 0 -> max_lr over warmup_steps, then cosine
                         max_lr -> min_lr over the remaining steps
      wsd             -- warmup, hold at max_lr, linear decay to min_lr from
                         decay_start (default: final 10% of steps)
      theory          -- (s + t)^(-1/3)
    """

    kind: str = "constant"
    max_lr: float = 1e-2
    min_lr: float = 0.0
    warmup_steps: int = 0
    total_steps: int = 0
    decay_start: int | None = None
    s: float = 1.0

    def __post_init__(self):
        if self.kind not in ("constant", "cosine_warmup", "wsd", "theory"):
            raise ValueError(f"unknown lr schedule kind: {self.kind!r}")
        if self.min_lr > self.max_lr:
            raise ValueError("min_lr must not exceed max_lr")
        if self.kind in ("cosine_warmup", "wsd"):
            if self.total_steps <= self.warmup_steps:
                raise ValueError("warmup_steps must be smaller than total_steps")
        if self.kind == "theory" and self.s < 1:
            raise ValueError("theory schedule requires offset s >= 1")


def lr_at(sched: LrSchedule, t: int) -> float:
    """Learning rate at step ``t`` (t >= 0; steps are 1-indexed in runs)."""
    if t < 0:
        raise ValueError("t must be non-negative")
    if sched.kind == "constant":
        return sched.max_lr
    if sched.kind == "theory":
        return (sched.s + t) ** (-1.0 / 3.0)
    if t < sched.warmup_steps:
        return sched.max_lr * t / sched.warmup_steps
    if sched.kind == "cosine_warmup":
        # endpoints returned exactly, not through the cosine expression
        if t == sched.warmup_steps:
            return sched.max_lr
        if t >= sched.total_steps:
            return sched.min_lr
        progress = (t - sched.warmup_steps) / (sched.total_steps - sched.warmup_steps)
        return sched.min_lr + 0.5 * (sched.max_lr - sched.min_lr) * (1.0 + math.cos(math.pi * progress))
    # wsd: hold, then linear decay over the tail
    decay_start = sched.decay_start
    if decay_start is None:
        decay_start = sched.total_steps - max(1, sched.total_steps // 10)
    if t < decay_start:
        return sched.max_lr
    if t >= sched.total_steps:
        return sched.min_lr
    frac = (t - decay_start) / (sched.total_steps - decay_start)
    return sched.max_lr + (sched.min_lr - sched.max_lr) * frac


@dataclass
class GammaSchedule:
    """Scale of the gradient-correction term, always reported in [0, 1].

    kinds:
      constant         -- fixed value (0.025 is the tuned default)
      linear           -- start -> end over total_steps
      optimal_estimate -- plug-in control-variates estimate over a trailing
                          window of (U, Y) samples collected by the run loop;
                          falls back to ``fallback`` until two samples exist
    """

    kind: str = "constant"
    value: float = 0.025
    start: float = 0.0
    end: float = 1.0
    total_steps: int = 0
    window: int = 50
    fallback: float = 0.0

    def __post_init__(self):
        if self.kind not in ("constant", "linear", "optimal_estimate"):
            raise ValueError(f"unknown gamma schedule kind: {self.kind!r}")
        if self.kind == "constant" and not 0.0 <= self.value <= 1.0:
            raise ValueError("constant gamma must lie in [0, 1]")
        if self.kind == "linear":
            for v in (self.start, self.end):
                if not 0.0 <= v <= 1.0:
                    raise ValueError("linear gamma endpoints must lie in [0, 1]")
            if self.total_steps <= 0:
                raise ValueError("linear gamma needs total_steps > 0")


def gamma_at(sched: GammaSchedule, t: int, samples=None) -> float:
    """Correction scale at step ``t``, clamped to [0, 1].

    For the ``optimal_estimate`` kind the caller passes the trailing window of
    (U, Y) pairs; estimation is delegated to
    :func:`marsopt.optimizers.estimate_optimal_gamma`.
    """
    if sched.kind == "constant":
        return sched.value
    if sched.kind == "linear":
        frac = min(max(t / sched.total_steps, 0.0), 1.0)
        return sched.start + (sched.end - sched.start) * frac
    if samples is None or len(samples) < 2:
        return sched.fallback
    from .optimizers import estimate_optimal_gamma

    return min(max(estimate_optimal_gamma(samples), 0.0), 1.0)


@dataclass
class TheoryParams:
    """Constants of the convergence analysis: smoothness L, preconditioner
    floor rho, noise bound sigma, momentum constant c, offset s, decay lambda.
    """

    L: float = 1.0
    rho: float = 1.0
    sigma: float = 1.0
    c: float | None = None
    s: float | None = None
    weight_decay: float = 0.0

    def __post_init__(self):
        if self.c is None:
            self.c = 32.0 * self.L**2 / self.rho**2 + 1.0
        if self.s is None:
            self.s = max(8.0 * self.L**3 / self.rho**3, 64.0 * self.weight_decay**3, 1.0)
        min_c = 32.0 * self.L**2 / self.rho**2 + 1.0
        if self.c < min_c:
            raise ValueError(f"momentum constant c must be >= {min_c}")
        min_s = 8.0 * self.L**3 / self.rho**3
        if self.weight_decay > 0:
            min_s = max(min_s, 64.0 * self.weight_decay**3)
        if self.s < min_s:
            raise ValueError(f"offset s must be >= {min_s}")


def theory_betas(p: TheoryParams, t: int) -> tuple[float, float]:
    """(beta1, beta2) at step ``t`` for the theoretical schedule.

    beta1 = 1 - c*eta_t^2 and beta2 = 1 - eta_t^6 with eta_t = (s + t)^(-1/3).
    Raises if c*eta_t^2 >= 1, i.e. the offset s is too small for c.
    """
    eta = (p.s + t) ** (-1.0 / 3.0)
    c_eta2 = p.c * eta * eta
    if c_eta2 >= 1.0:
        raise ValueError("offset s too small for c")
    beta1 = 1.0 - c_eta2
    beta2 = 1.0 - eta**6
    return min(max(beta1, 0.0), 1.0 - 1e-16), min(max(beta2, 0.0), 1.0 - 1e-16)
