"""Variance-reduced preconditioned optimizers and the baselines they generalize.

The shared mechanism is a scaled gradient correction: the raw stochastic
gradient g_t is augmented with gamma * beta1/(1-beta1) * (g_t - g_ref), where
g_ref re-evaluates the previous iterate. ``exact`` mode re-evaluates under the
current batch (two oracle calls per step); ``approx`` mode reuses the stored
previous gradient. The corrected estimate is clipped by norm, smoothed by an
EMA, and fed through one of three preconditioners: diagonal second-moment
(AdamW-style), sign (Lion-style), or the polar factor of matrix-shaped
momentum (Shampoo/Muon-style). gamma = 0 recovers the plain preconditioned
method; gamma = 1 with an identity preconditioner recovers recursive-momentum
variance reduction (STORM).

State convention: m_0 = v_0 = u_0 = 0 and x_1 = x_0, so the first update
happens at t = 1. In approx mode the reference gradient before any step exists
is the zero vector; this matches the implicit zero initialization of the
two-buffer baselines and makes the folding identities below exact from t = 1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numkit import l2_norm
from .schedules import GammaSchedule, LrSchedule, gamma_at, lr_at
from .spectral import newton_schulz_orthogonalize, polar_factor

__all__ = [
    "Hyperparams",
    "OptimizerState",
    "StepReport",
    "init_state",
    "correction_gradient",
    "clip_unit_norm",
    "mars_adamw_step",
    "mars_lion_step",
    "mars_shampoo_step",
    "mars_identity_step",
    "adamw_step",
    "lion_step",
    "sgd_step",
    "muon_step",
    "storm_step",
    "fold_two_buffer",
    "estimate_optimal_gamma",
    "STEP_FUNCTIONS",
    "REFERENCE_NEEDS",
]


@dataclass
class Hyperparams:
    """Optimizer hyperparameters.

    ``lr`` and ``gamma`` accept either plain floats or schedule objects; step
    functions resolve them at the current step unless explicit per-step values
    are passed in. ``clip_threshold=None`` disables clipping. ``decay_exclude``
    is a predicate (block_index, shape) -> bool marking blocks that skip
    weight decay.
    """

    beta1: float = 0.95
    beta2: float = 0.99
    weight_decay: float = 0.0
    eps: float = 1e-8
    clip_threshold: float | None = 1.0
    correction_mode: str = "approx"
    bias_correction: bool = True
    lr: float | LrSchedule = 1e-3
    gamma: float | GammaSchedule = 0.025
    polar_method: str = "svd"
    ns_tol: float = 1e-7
    ns_max_iter: int = 30
    decay_exclude: object = None

    def __post_init__(self):
        if not 0.0 <= self.beta1 < 1.0:
            raise ValueError("beta1 must lie in [0, 1)")
        if not 0.0 <= self.beta2 < 1.0:
            raise ValueError("beta2 must lie in [0, 1)")
        if self.weight_decay < 0.0:
            raise ValueError("weight_decay must be non-negative")
        if self.eps <= 0.0:
            raise ValueError("eps must be positive")
        if self.clip_threshold is not None and self.clip_threshold <= 0.0:
            raise ValueError("clip_threshold must be positive or None")
        if self.correction_mode not in ("exact", "approx"):
            raise ValueError("correction_mode must be 'exact' or 'approx'")


@dataclass
class OptimizerState:
    """Mutable per-run record: parameters, momenta, references, step counter."""

    x: np.ndarray
    block_shapes: list
    m: np.ndarray
    v: np.ndarray | None = None
    u: np.ndarray | None = None
    fallback_m: np.ndarray | None = None
    prev_x: np.ndarray | None = None
    prev_g: np.ndarray | None = None
    t: int = 0


@dataclass
class StepReport:
    c: np.ndarray
    c_tilde: np.ndarray
    lr: float
    gamma: float
    direction: np.ndarray
    clipped: bool


def init_state(x0: np.ndarray, block_shapes=None) -> OptimizerState:
    """Fresh state with zero buffers, prev_x = x0, prev_g = 0."""
    x0 = np.array(x0, dtype=np.float64)
    if block_shapes is None:
        block_shapes = [x0.shape]
    n = sum(int(np.prod(s)) for s in block_shapes)
    if n != x0.size:
        raise ValueError("block_shapes do not cover the parameter vector")
    zeros = np.zeros_like(x0)
    return OptimizerState(
        x=x0,
        block_shapes=[tuple(s) for s in block_shapes],
        m=zeros.copy(),
        v=zeros.copy(),
        u=zeros.copy(),
        fallback_m=zeros.copy(),
        prev_x=x0.copy(),
        prev_g=zeros.copy(),
    )


def _blocks(shapes):
    pos = 0
    for i, shape in enumerate(shapes):
        size = int(np.prod(shape))
        yield i, slice(pos, pos + size), shape
        pos += size


def _resolve_lr(hp: Hyperparams, t: int, lr):
    if lr is not None:
        return float(lr)
    if isinstance(hp.lr, LrSchedule):
        return lr_at(hp.lr, t)
    return float(hp.lr)


def _resolve_gamma(hp: Hyperparams, t: int, gamma, gamma_samples=None):
    if gamma is not None:
        return float(gamma)
    if isinstance(hp.gamma, GammaSchedule):
        return gamma_at(hp.gamma, t, samples=gamma_samples)
    return float(hp.gamma)


def _check_finite(arr: np.ndarray, what: str):
    finite = np.isfinite(arr)
    if not finite.all():
        idx = int(np.argmin(finite))
        raise FloatingPointError(f"non-finite {what} at coordinate {idx}")


def _decay_term(state: OptimizerState, hp: Hyperparams) -> np.ndarray:
    """lambda * x with excluded blocks zeroed."""
    if hp.weight_decay == 0.0:
        return np.zeros_like(state.x)
    term = hp.weight_decay * state.x
    if hp.decay_exclude is not None:
        for i, sl, shape in _blocks(state.block_shapes):
            if hp.decay_exclude(i, shape):
                term[sl] = 0.0
    return term


def correction_gradient(g: np.ndarray, g_ref: np.ndarray, gamma: float, beta1: float, mode: str = "exact") -> np.ndarray:
    """g + gamma * beta1/(1-beta1) * (g - g_ref).

    ``mode`` only documents which reference the caller supplied (exact:
    current batch at the previous iterate; approx: the stored previous
    gradient); the formula is the same.
    """
    if mode not in ("exact", "approx"):
        raise ValueError("mode must be 'exact' or 'approx'")
    if beta1 >= 1.0:
        raise ValueError("infinite correction scale")
    scale = gamma * beta1 / (1.0 - beta1)
    return g + scale * (g - g_ref)


def clip_unit_norm(c: np.ndarray, threshold: float | None) -> np.ndarray:
    """Rescale c to norm ``threshold`` when it is longer; None disables."""
    if threshold is None:
        return c
    if threshold <= 0:
        raise ValueError("clip threshold must be positive")
    n = l2_norm(c)
    if n > threshold:
        return c * (threshold / n)
    return c


def _begin_step(state: OptimizerState, g: np.ndarray):
    """Advance the counter and roll the reference buffers.

    prev_x keeps the pre-update iterate (next step's exact reference point);
    prev_g keeps this step's raw gradient (next step's approx reference).
    """
    _check_finite(g, "gradient")
    state.t += 1
    state.prev_x = state.x.copy()
    state.prev_g = np.asarray(g, dtype=np.float64).copy()


def _corrected(state, g, g_ref, hp, gamma):
    c = correction_gradient(g, g_ref, gamma, hp.beta1, hp.correction_mode)
    c_tilde = clip_unit_norm(c, hp.clip_threshold)
    clipped = c_tilde is not c
    return c, c_tilde, clipped


def _adamw_direction(state: OptimizerState, c_tilde: np.ndarray, hp: Hyperparams, sl=slice(None)):
    """Shared AdamW core: EMA updates on [sl] and the preconditioned direction."""
    state.m[sl] = hp.beta1 * state.m[sl] + (1.0 - hp.beta1) * c_tilde[sl]
    state.v[sl] = hp.beta2 * state.v[sl] + (1.0 - hp.beta2) * c_tilde[sl] ** 2
    if hp.bias_correction:
        m_hat = state.m[sl] / (1.0 - hp.beta1 ** state.t)
        v_hat = state.v[sl] / (1.0 - hp.beta2 ** state.t)
    else:
        m_hat, v_hat = state.m[sl], state.v[sl]
    return m_hat / (np.sqrt(v_hat) + hp.eps)


def _apply(state: OptimizerState, direction: np.ndarray, hp: Hyperparams, lr: float):
    state.x = state.x - lr * (direction + _decay_term(state, hp))
    _check_finite(state.x, "update")


def mars_adamw_step(state, g, g_ref, hp, lr=None, gamma=None, gamma_samples=None) -> StepReport:
    """One step of the AdamW-preconditioned variance-reduced update.

    Corrected gradient -> norm clip -> first/second moment EMAs -> bias
    correction -> x <- x - lr * (m_hat / (sqrt(v_hat) + eps) + lambda x).
    """
    _begin_step(state, g)
    lr = _resolve_lr(hp, state.t, lr)
    gamma = _resolve_gamma(hp, state.t, gamma, gamma_samples)
    c, c_tilde, clipped = _corrected(state, g, g_ref, hp, gamma)
    direction = _adamw_direction(state, c_tilde, hp)
    _apply(state, direction, hp, lr)
    return StepReport(c=c, c_tilde=c_tilde, lr=lr, gamma=gamma, direction=direction, clipped=clipped)


def mars_lion_step(state, g, g_ref, hp, lr=None, gamma=None, gamma_samples=None) -> StepReport:
    """Sign-preconditioned variant: x <- x - lr * (sign(m) + lambda x).

    No second moment and no bias correction; sign(0) = 0.
    """
    _begin_step(state, g)
    lr = _resolve_lr(hp, state.t, lr)
    gamma = _resolve_gamma(hp, state.t, gamma, gamma_samples)
    c, c_tilde, clipped = _corrected(state, g, g_ref, hp, gamma)
    state.m = hp.beta1 * state.m + (1.0 - hp.beta1) * c_tilde
    direction = np.sign(state.m)
    _apply(state, direction, hp, lr)
    return StepReport(c=c, c_tilde=c_tilde, lr=lr, gamma=gamma, direction=direction, clipped=clipped)


def _block_polar(block: np.ndarray, hp: Hyperparams) -> np.ndarray:
    """Polar factor of one momentum block under the configured method.

    The Newton-Schulz path accepts a stabilized partial isometry: momentum
    blocks can be structurally rank-deficient (a softmax output layer with C
    classes yields gradients of rank at most C-1), in which case the full
    orthogonality residual never drops below sqrt(codimension) but the
    projection defect does.
    """
    if hp.polar_method == "svd":
        return polar_factor(block, method="svd")
    report = newton_schulz_orthogonalize(block, tol=hp.ns_tol, max_iter=hp.ns_max_iter)
    if not (report.converged or report.projection_defect <= hp.ns_tol):
        raise RuntimeError(
            f"orthogonalization did not converge: residual {report.residual:.3e}, "
            f"projection defect {report.projection_defect:.3e} after {report.iterations} iterations"
        )
    return report.o


def mars_shampoo_step(state, g, g_ref, hp, lr=None, gamma=None, gamma_samples=None) -> StepReport:
    """Eigenspace-preconditioned variant for matrix-shaped blocks.

    The momentum EMA of the corrected gradient is orthogonalized blockwise
    (polar factor via SVD or Newton-Schulz) and used as the update direction;
    a zero momentum block contributes a zero direction (weight decay only).
    Clipping is off unless explicitly enabled, and vector-shaped blocks fall
    back to the AdamW-style coordinate update on the same momentum.
    """
    _begin_step(state, g)
    lr = _resolve_lr(hp, state.t, lr)
    gamma = _resolve_gamma(hp, state.t, gamma, gamma_samples)
    c, c_tilde, clipped = _corrected(state, g, g_ref, hp, gamma)
    direction = np.zeros_like(state.x)
    for i, sl, shape in _blocks(state.block_shapes):
        if len(shape) == 2:
            state.m[sl] = hp.beta1 * state.m[sl] + (1.0 - hp.beta1) * c_tilde[sl]
            block = state.m[sl].reshape(shape)
            if np.linalg.norm(block) == 0.0:
                continue
            direction[sl] = _block_polar(block, hp).ravel()
        else:
            direction[sl] = _adamw_direction(state, c_tilde, hp, sl=sl)
    _apply(state, direction, hp, lr)
    return StepReport(c=c, c_tilde=c_tilde, lr=lr, gamma=gamma, direction=direction, clipped=clipped)


def mars_identity_step(state, g, g_ref, hp, lr=None, gamma=None, gamma_samples=None) -> StepReport:
    """Identity-preconditioned instance: x <- x - lr * (m + lambda x).

    With gamma = 1 and clipping off this is exactly recursive-momentum
    variance reduction; with gamma = 0 it is clipped SGD with momentum.
    """
    _begin_step(state, g)
    lr = _resolve_lr(hp, state.t, lr)
    gamma = _resolve_gamma(hp, state.t, gamma, gamma_samples)
    c, c_tilde, clipped = _corrected(state, g, g_ref, hp, gamma)
    state.m = hp.beta1 * state.m + (1.0 - hp.beta1) * c_tilde
    direction = state.m
    _apply(state, direction, hp, lr)
    return StepReport(c=c, c_tilde=c_tilde, lr=lr, gamma=gamma, direction=direction, clipped=clipped)


def adamw_step(state, g, hp, lr=None) -> StepReport:
    """Textbook AdamW with decoupled decay and optional raw-gradient clipping."""
    _begin_step(state, g)
    lr = _resolve_lr(hp, state.t, lr)
    g_tilde = clip_unit_norm(g, hp.clip_threshold)
    direction = _adamw_direction(state, g_tilde, hp)
    _apply(state, direction, hp, lr)
    return StepReport(c=g, c_tilde=g_tilde, lr=lr, gamma=0.0, direction=direction,
                      clipped=g_tilde is not g)


def lion_step(state, g, hp, lr=None) -> StepReport:
    """Two-buffer sign method exactly as printed:

    m_t = beta1 * u_t + (1-beta1) * g_t, then u_{t+1} = beta2 * u_t + (1-beta2) * g_t,
    update sign(m_t) with decoupled decay.
    """
    _begin_step(state, g)
    lr = _resolve_lr(hp, state.t, lr)
    g_tilde = clip_unit_norm(g, hp.clip_threshold)
    state.m = hp.beta1 * state.u + (1.0 - hp.beta1) * g_tilde
    state.u = hp.beta2 * state.u + (1.0 - hp.beta2) * g_tilde
    direction = np.sign(state.m)
    _apply(state, direction, hp, lr)
    return StepReport(c=g, c_tilde=g_tilde, lr=lr, gamma=0.0, direction=direction,
                      clipped=g_tilde is not g)


def sgd_step(state, g, hp, lr=None) -> StepReport:
    """Plain stochastic gradient step (optional clip and decoupled decay)."""
    _begin_step(state, g)
    lr = _resolve_lr(hp, state.t, lr)
    g_tilde = clip_unit_norm(g, hp.clip_threshold)
    _apply(state, g_tilde, hp, lr)
    return StepReport(c=g, c_tilde=g_tilde, lr=lr, gamma=0.0, direction=g_tilde,
                      clipped=g_tilde is not g)


def muon_step(state, g, hp, lr=None) -> StepReport:
    """Orthogonalized-momentum baseline with mu = beta1:

    u_t = mu * u_{t-1} + g_t;  m_t = mu * u_t + g_t;  direction = polar(m_t)
    per matrix block (Newton-Schulz by default). Vector blocks fall back to a
    textbook AdamW update on the raw gradient with its own moment buffers.
    """
    _begin_step(state, g)
    lr = _resolve_lr(hp, state.t, lr)
    mu = hp.beta1
    direction = np.zeros_like(state.x)
    for i, sl, shape in _blocks(state.block_shapes):
        if len(shape) == 2:
            state.u[sl] = mu * state.u[sl] + g[sl]
            state.m[sl] = mu * state.u[sl] + g[sl]
            block = state.m[sl].reshape(shape)
            if np.linalg.norm(block) == 0.0:
                continue
            direction[sl] = _block_polar(block, hp).ravel()
        else:
            state.fallback_m[sl] = hp.beta1 * state.fallback_m[sl] + (1.0 - hp.beta1) * g[sl]
            state.v[sl] = hp.beta2 * state.v[sl] + (1.0 - hp.beta2) * g[sl] ** 2
            m_hat = state.fallback_m[sl] / (1.0 - hp.beta1 ** state.t)
            v_hat = state.v[sl] / (1.0 - hp.beta2 ** state.t)
            direction[sl] = m_hat / (np.sqrt(v_hat) + hp.eps)
    _apply(state, direction, hp, lr)
    return StepReport(c=g, c_tilde=g, lr=lr, gamma=0.0, direction=direction, clipped=False)


def storm_step(state, g, g_ref_exact, hp, lr=None) -> StepReport:
    """Recursive-momentum variance reduction with an identity preconditioner:

    m_t = beta1 * m_{t-1} + (1-beta1) * g_t + beta1 * (g_t - g_ref),
    x <- x - lr * m_t. The reference must be the exact one (current batch at
    the previous iterate); no clipping, no decay.
    """
    _begin_step(state, g)
    lr = _resolve_lr(hp, state.t, lr)
    state.m = hp.beta1 * state.m + (1.0 - hp.beta1) * g + hp.beta1 * (g - g_ref_exact)
    state.x = state.x - lr * state.m
    _check_finite(state.x, "update")
    return StepReport(c=g, c_tilde=g, lr=lr, gamma=1.0, direction=state.m, clipped=False)


def fold_two_buffer(a1, a2, b1, b2, g_seq, ordering="read_then_update") -> np.ndarray:
    """Single-recursion form of a two-buffer momentum scheme.

    For the pair m_t = b1*u + b2*g_t with u-update u <- a1*u + a2*g_t, the
    folded recursion is

        m_t = a1*m_{t-1} + (b1*a2 - a1*b2 + b2)*g_t + K*(g_t - g_{t-1})

    where K depends on whether m reads u before the u-update
    (``read_then_update``: K = a1*b2 - b1*a2) or after it
    (``update_then_read``: K = a1*b2). Conventions m_0 = 0 and g_0 = 0 match
    zero-initialized buffers.
    """
    g_seq = np.asarray(g_seq, dtype=np.float64)
    if g_seq.ndim == 1:
        g_seq = g_seq[:, None]
    if g_seq.shape[0] < 2:
        raise ValueError("need a gradient sequence of length >= 2")
    if ordering == "read_then_update":
        k = a1 * b2 - b1 * a2
    elif ordering == "update_then_read":
        k = a1 * b2
    else:
        raise ValueError(f"unknown ordering: {ordering!r}")
    coeff = b1 * a2 - a1 * b2 + b2
    out = np.zeros_like(g_seq)
    m = np.zeros(g_seq.shape[1])
    g_prev = np.zeros(g_seq.shape[1])
    for t in range(g_seq.shape[0]):
        g = g_seq[t]
        m = a1 * m + coeff * g + k * (g - g_prev)
        out[t] = m
        g_prev = g
    return out


def estimate_optimal_gamma(samples) -> float:
    """Plug-in control-variates estimate of the best correction scale.

    Each sample is a pair (U, Y): U is the momentum-error-plus-fresh-noise
    variable and Y the correction variable. Returns

        gamma* = 1 - (mean<U, Y> + Var(Y)) / mean ||Y||^2

    with inner products in place of scalar products and Var(Y) the trace
    variance mean||Y||^2 - ||mean Y||^2. The caller clamps to [0, 1].
    """
    samples = list(samples)
    if len(samples) < 2:
        raise ValueError("need at least 2 samples")
    u_arr = np.stack([np.asarray(u, dtype=np.float64).ravel() for u, _ in samples])
    y_arr = np.stack([np.asarray(y, dtype=np.float64).ravel() for _, y in samples])
    mean_y2 = float(np.mean(np.sum(y_arr * y_arr, axis=1)))
    if mean_y2 == 0.0:
        raise ValueError("degenerate correction variable")
    mean_dot = float(np.mean(np.sum(u_arr * y_arr, axis=1)))
    y_bar = y_arr.mean(axis=0)
    var_y = mean_y2 - float(y_bar @ y_bar)
    return 1.0 - (mean_dot + var_y) / mean_y2


STEP_FUNCTIONS = {
    "mars_adamw": mars_adamw_step,
    "mars_lion": mars_lion_step,
    "mars_shampoo": mars_shampoo_step,
    "mars_identity": mars_identity_step,
    "adamw": adamw_step,
    "lion": lion_step,
    "sgd": sgd_step,
    "muon": muon_step,
    "storm": storm_step,
}

# what kind of reference gradient each optimizer consumes
REFERENCE_NEEDS = {
    "mars_adamw": "mode",
    "mars_lion": "mode",
    "mars_shampoo": "mode",
    "mars_identity": "mode",
    "storm": "exact",
    "adamw": None,
    "lion": None,
    "sgd": None,
    "muon": None,
}
