"""Numerical verification suite.

Each check exercises one algebraic identity, bound, or special-case reduction
of the optimizer family and reports a measured residual against a fixed
tolerance: momentum folding identities, the clipped-moment bounds, the step
size schedule inequality, the gamma = 0 / gamma = 1 reductions, the sign- and
polar-family special cases, polar-factor scale invariance, and the gradient
correctness of every synthetic oracle.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import optimizers as opt
from . import problems, spectral
from .numkit import RngStream, l2_norm

__all__ = ["CheckResult", "verify_suite", "ALL_CHECKS"]


@dataclass
class CheckResult:
    name: str
    passed: bool
    residual: float
    tolerance: float
    detail: str = ""

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status}  {self.name:34s} residual={self.residual: .3e}  tol={self.tolerance:.1e}  {self.detail}"


def _two_buffer_read_then_update(a1, a2, b1, b2, g_seq):
    """Literal two-buffer loop where m reads u before the u-update."""
    u = np.zeros(g_seq.shape[1])
    out = np.zeros_like(g_seq)
    for t in range(g_seq.shape[0]):
        g = g_seq[t]
        out[t] = b1 * u + b2 * g
        u = a1 * u + a2 * g
    return out


def _two_buffer_update_then_read(a1, a2, b1, b2, g_seq):
    """Literal two-buffer loop where u updates first."""
    u = np.zeros(g_seq.shape[1])
    out = np.zeros_like(g_seq)
    for t in range(g_seq.shape[0]):
        g = g_seq[t]
        u = a1 * u + a2 * g
        out[t] = b1 * u + b2 * g
    return out


def check_fold_lion(seed=0, steps=500, dim=6) -> CheckResult:
    rng = RngStream(seed).substream(10)
    worst = 0.0
    for _ in range(5):
        g_seq = rng.gauss(steps * dim).reshape(steps, dim)
        beta1, beta2 = 0.9, 0.99
        ref = _two_buffer_read_then_update(beta2, 1 - beta2, beta1, 1 - beta1, g_seq)
        fold = opt.fold_two_buffer(beta2, 1 - beta2, beta1, 1 - beta1, g_seq, ordering="read_then_update")
        worst = max(worst, float(np.max(np.abs(ref - fold))))
    return CheckResult("fold_two_buffer_sign_constants", worst <= 1e-12, worst, 1e-12)


def check_fold_muon(seed=0, steps=500, dim=6) -> CheckResult:
    rng = RngStream(seed).substream(11)
    worst = 0.0
    for _ in range(5):
        g_seq = rng.gauss(steps * dim).reshape(steps, dim)
        mu = 0.95
        ref = _two_buffer_update_then_read(mu, 1.0, mu, 1.0, g_seq)
        fold = opt.fold_two_buffer(mu, 1.0, mu, 1.0, g_seq, ordering="update_then_read")
        worst = max(worst, float(np.max(np.abs(ref - fold))))
    return CheckResult("fold_two_buffer_polar_constants", worst <= 1e-12, worst, 1e-12)


def check_second_moment_sqrt_bound(seed=0, steps=500, dim=8) -> CheckResult:
    """||sqrt(v_t) - sqrt(v_{t+1})||_inf <= sqrt(2(1-beta2)) on clipped streams."""
    rng = RngStream(seed).substream(12)
    worst = -np.inf
    for beta2 in (0.5, 0.9, 0.99, 0.999, 1.0):
        bound = np.sqrt(2.0 * (1.0 - beta2))
        for _ in range(4):
            v = np.zeros(dim)
            sqrt_prev = np.sqrt(v)
            for _ in range(steps):
                c = opt.clip_unit_norm(rng.gauss(dim) * 2.0, 1.0)
                v = beta2 * v + (1.0 - beta2) * c**2
                sqrt_v = np.sqrt(v)
                worst = max(worst, float(np.max(np.abs(sqrt_v - sqrt_prev)) - bound))
                sqrt_prev = sqrt_v
    return CheckResult("second_moment_sqrt_bound", worst <= 1e-12, worst, 1e-12,
                       detail="max violation over beta2 grid incl. 1.0")


def check_stepsize_inequality(s_values=(1, 8, 1000), horizon=100_000) -> CheckResult:
    """1/eta_t - 1/eta_{t-1} <= eta_t for eta_t = (s+t)^(-1/3)."""
    worst = -np.inf
    for s in s_values:
        t = np.arange(1, horizon + 1, dtype=np.float64)
        lhs = (s + t) ** (1.0 / 3.0) - (s + t - 1.0) ** (1.0 / 3.0)
        rhs = (s + t) ** (-1.0 / 3.0)
        worst = max(worst, float(np.max(lhs - rhs)))
    return CheckResult("stepsize_inverse_difference", worst <= 1e-12, worst, 1e-12)


def check_momentum_norm_bounds(seed=0, steps=10_000, dim=8) -> CheckResult:
    """With clip threshold 1 and zero init, ||m_t|| <= 1 and ||v_t|| <= 1."""
    rng = RngStream(seed).substream(13)
    m = np.zeros(dim)
    v = np.zeros(dim)
    worst = -np.inf
    betas1 = rng.uniform(steps)
    betas2 = rng.uniform(steps)
    for k in range(steps):
        c = opt.clip_unit_norm(rng.gauss(dim) * 3.0, 1.0)
        m = betas1[k] * m + (1.0 - betas1[k]) * c
        v = betas2[k] * v + (1.0 - betas2[k]) * c**2
        worst = max(worst, l2_norm(m) - 1.0, l2_norm(v) - 1.0)
    return CheckResult("clipped_momentum_norm_bounds", worst <= 0.0, worst, 0.0,
                       detail="max(||m||, ||v||) - 1 over random beta schedules")


def check_reduction_gamma0_adamw(seed=0, steps=300) -> CheckResult:
    """gamma = 0 reproduces the plain diagonal baseline trajectory exactly."""
    hp = opt.Hyperparams(beta1=0.9, beta2=0.99, clip_threshold=1.0, correction_mode="exact")
    oracle = problems.make_noisy_quadratic(6, np.linspace(0.05, 0.5, 6), sigma=0.5, seed=seed)
    x0 = oracle.initial_point()
    state_a = opt.init_state(x0, oracle.block_shapes)
    state_b = opt.init_state(x0, oracle.block_shapes)
    worst = 0.0
    for t in range(1, steps + 1):
        batch = oracle.sample_batch(t)
        g_a = oracle.stochastic_grad(state_a.x, batch)
        ref_a = oracle.stochastic_grad(state_a.prev_x, batch)
        g_b = oracle.stochastic_grad(state_b.x, batch)
        opt.mars_adamw_step(state_a, g_a, ref_a, hp, lr=0.05, gamma=0.0)
        opt.adamw_step(state_b, g_b, hp, lr=0.05)
        worst = max(worst, float(np.max(np.abs(state_a.x - state_b.x))))
    return CheckResult("reduction_gamma0_matches_adamw", worst <= 1e-12, worst, 1e-12)


def check_reduction_gamma1_storm(seed=0, steps=300) -> CheckResult:
    """gamma = 1, identity preconditioner, clipping off: recursive momentum."""
    hp = opt.Hyperparams(beta1=0.9, clip_threshold=None, correction_mode="exact")
    oracle = problems.make_noisy_quadratic(6, np.linspace(0.05, 0.5, 6), sigma=0.5, seed=seed)
    x0 = oracle.initial_point()
    state_a = opt.init_state(x0, oracle.block_shapes)
    state_b = opt.init_state(x0, oracle.block_shapes)
    worst = 0.0
    for t in range(1, steps + 1):
        batch = oracle.sample_batch(t)
        g_a = oracle.stochastic_grad(state_a.x, batch)
        ref_a = oracle.stochastic_grad(state_a.prev_x, batch)
        g_b = oracle.stochastic_grad(state_b.x, batch)
        ref_b = oracle.stochastic_grad(state_b.prev_x, batch)
        opt.mars_identity_step(state_a, g_a, ref_a, hp, lr=0.05, gamma=1.0)
        opt.storm_step(state_b, g_b, ref_b, hp, lr=0.05)
        worst = max(worst, float(np.max(np.abs(state_a.m - state_b.m))),
                    float(np.max(np.abs(state_a.x - state_b.x))))
    return CheckResult("reduction_gamma1_matches_storm", worst <= 1e-12, worst, 1e-12)


def check_sign_family_special_case(seed=0, steps=1000) -> CheckResult:
    """The corrected sign method with relabeled constants reproduces the
    literal two-buffer sign baseline trajectory (clipping off on both sides).
    """
    beta1, beta2 = 0.9, 0.99
    oracle = problems.make_noisy_quadratic(6, np.linspace(0.05, 0.5, 6), sigma=0.5, seed=seed)
    x0 = oracle.initial_point()
    hp_lion = opt.Hyperparams(beta1=beta1, beta2=beta2, clip_threshold=None)
    # relabeling: the EMA coefficient becomes beta2, the correction scale (beta2-beta1)/beta2
    hp_mars = opt.Hyperparams(beta1=beta2, beta2=beta2, clip_threshold=None, correction_mode="approx")
    gamma = (beta2 - beta1) / beta2
    state_lion = opt.init_state(x0, oracle.block_shapes)
    state_mars = opt.init_state(x0, oracle.block_shapes)
    worst = 0.0
    for t in range(1, steps + 1):
        batch = oracle.sample_batch(t)
        g_l = oracle.stochastic_grad(state_lion.x, batch)
        g_m = oracle.stochastic_grad(state_mars.x, batch)
        ref_m = state_mars.prev_g
        opt.lion_step(state_lion, g_l, hp_lion, lr=0.01)
        opt.mars_lion_step(state_mars, g_m, ref_m, hp_mars, lr=0.01, gamma=gamma)
        worst = max(worst, float(np.max(np.abs(state_lion.x - state_mars.x))),
                    float(np.max(np.abs(state_lion.m - state_mars.m))))
    return CheckResult("sign_family_special_case", worst <= 1e-10, worst, 1e-10)


def check_polar_family_rescaling(seed=0, steps=200) -> CheckResult:
    """With beta1 = mu and gamma = 1 - mu (clipping off, svd polar path) the
    corrected polar method's momentum is (1-mu) times the orthogonalized-
    momentum baseline's, and the parameter trajectories coincide.
    """
    mu = 0.95
    oracle = problems.make_noisy_quadratic(16, np.linspace(0.05, 0.5, 16), sigma=0.3,
                                           seed=seed, block_shapes=[(4, 4)])
    x0 = oracle.initial_point()
    hp_muon = opt.Hyperparams(beta1=mu, clip_threshold=None, polar_method="svd")
    hp_mars = opt.Hyperparams(beta1=mu, clip_threshold=None, polar_method="svd", correction_mode="approx")
    state_muon = opt.init_state(x0, oracle.block_shapes)
    state_mars = opt.init_state(x0, oracle.block_shapes)
    worst = 0.0
    for t in range(1, steps + 1):
        batch = oracle.sample_batch(t)
        g_mu = oracle.stochastic_grad(state_muon.x, batch)
        g_ma = oracle.stochastic_grad(state_mars.x, batch)
        ref_ma = state_mars.prev_g
        opt.muon_step(state_muon, g_mu, hp_muon, lr=0.02)
        opt.mars_shampoo_step(state_mars, g_ma, ref_ma, hp_mars, lr=0.02, gamma=1.0 - mu)
        worst = max(worst, float(np.max(np.abs(state_muon.x - state_mars.x))),
                    float(np.max(np.abs((1.0 - mu) * state_muon.m - state_mars.m))))
    return CheckResult("polar_family_rescaling", worst <= 1e-10, worst, 1e-10)


def check_double_ema_special_case(seed=0, steps=1000, dim=6) -> CheckResult:
    """A double-EMA momentum (EMA of gradients plus beta-weighted EMA of
    gradient differences) with equal coefficients collapses to the approx
    corrected momentum with gamma = 1 - beta1.
    """
    beta1 = 0.9
    rng = RngStream(seed).substream(14)
    g_seq = rng.gauss(steps * dim).reshape(steps, dim)
    y = np.zeros(dim)
    z = np.zeros(dim)
    g_prev = np.zeros(dim)
    m = np.zeros(dim)
    worst = 0.0
    for t in range(steps):
        g = g_seq[t]
        y = beta1 * y + (1.0 - beta1) * g
        z = beta1 * z + (1.0 - beta1) * (g - g_prev)
        ref = y + beta1 * z
        c = opt.correction_gradient(g, g_prev, 1.0 - beta1, beta1, mode="approx")
        m = beta1 * m + (1.0 - beta1) * c
        worst = max(worst, float(np.max(np.abs(ref - m))))
        g_prev = g
    return CheckResult("double_ema_special_case", worst <= 1e-12, worst, 1e-12)


def check_polar_scale_invariance(seed=0) -> CheckResult:
    """polar_factor(c*M) = polar_factor(M) for c > 0, both svd and NS paths,
    and the two paths agree on well-conditioned input."""
    rng = RngStream(seed).substream(15)
    worst = 0.0
    agreement = 0.0
    for n in (3, 5, 8):
        m = rng.gauss_matrix(n, n) + 2.0 * np.eye(n)
        base = spectral.polar_factor(m, method="svd")
        for c in (1e-3, 1.0, 1e3):
            worst = max(worst, float(np.max(np.abs(spectral.polar_factor(c * m, method="svd") - base))))
        ns = spectral.polar_factor(m, method="newton_schulz", tol=1e-9, max_iter=60)
        agreement = max(agreement, float(np.max(np.abs(ns - base))))
    passed = worst <= 1e-10 and agreement <= 1e-6
    return CheckResult("polar_scale_invariance", passed, max(worst, agreement), 1e-6,
                       detail=f"scale residual {worst:.2e}, svd-vs-ns {agreement:.2e}")


def check_gradient_correctness(seed=0) -> CheckResult:
    """Central differences against the analytic/backprop gradients."""
    worst = 0.0
    quad = problems.make_noisy_quadratic(5, np.linspace(0.5, 2.0, 5), sigma=0.0, seed=seed)
    logi = problems.make_logistic(n=40, dim=6, batch_size=8, seed=seed)
    mlp = problems.make_mlp([3, 5, 2], n=24, batch_size=6, seed=seed)
    rng = RngStream(seed).substream(16)
    for oracle in (quad, logi, mlp):
        for _ in range(3):
            x = rng.gauss(oracle.dim) * 0.5
            g = oracle.full_grad(x)
            fd = problems.finite_diff_grad(oracle, x, h=1e-6)
            worst = max(worst, float(l2_norm(fd - g) / max(l2_norm(g), 1e-12)))
    return CheckResult("gradient_finite_difference", worst <= 1e-5, worst, 1e-5)


def check_clip_contract(seed=0) -> CheckResult:
    """||clip(c, 1)|| = min(||c||, 1) within 1e-14."""
    rng = RngStream(seed).substream(17)
    worst = 0.0
    for _ in range(200):
        c = rng.gauss(8) * float(rng.uniform(1)[0] * 4.0)
        clipped = opt.clip_unit_norm(c, 1.0)
        worst = max(worst, abs(l2_norm(clipped) - min(l2_norm(c), 1.0)))
    return CheckResult("clip_norm_contract", worst <= 1e-14, worst, 1e-14)


def check_exact_noise_cancellation(seed=0) -> CheckResult:
    """On the quadratic, the exact correction term depends only on the iterate
    difference: two different noise draws give identical corrections."""
    oracle = problems.make_noisy_quadratic(6, np.linspace(0.1, 1.0, 6), sigma=1.0, seed=seed)
    rng = RngStream(seed).substream(18)
    x_prev = rng.gauss(6)
    x_cur = x_prev + 0.1 * rng.gauss(6)
    worst = 0.0
    batches = [oracle.sample_batch(t) for t in (1, 2)]
    for gamma in (0.025, 1.0):
        corrections = []
        for batch in batches:
            g = oracle.stochastic_grad(x_cur, batch)
            ref = oracle.stochastic_grad(x_prev, batch)
            corrections.append(opt.correction_gradient(g, ref, gamma, 0.95) - g)
        worst = max(worst, float(np.max(np.abs(corrections[0] - corrections[1]))))
    return CheckResult("exact_noise_cancellation", worst <= 1e-14, worst, 1e-14)


ALL_CHECKS = [
    check_fold_lion,
    check_fold_muon,
    check_second_moment_sqrt_bound,
    check_stepsize_inequality,
    check_momentum_norm_bounds,
    check_reduction_gamma0_adamw,
    check_reduction_gamma1_storm,
    check_sign_family_special_case,
    check_polar_family_rescaling,
    check_double_ema_special_case,
    check_polar_scale_invariance,
    check_gradient_correctness,
    check_clip_contract,
    check_exact_noise_cancellation,
]


def verify_suite(seed: int = 0, sizes: dict | None = None) -> list[CheckResult]:
    """Run every identity/bound check; ``sizes`` can shrink horizons for quick runs."""
    sizes = sizes or {}
    results = []
    for check in ALL_CHECKS:
        kwargs = {}
        if "seed" in check.__code__.co_varnames[: check.__code__.co_argcount]:
            kwargs["seed"] = seed
        if "steps" in sizes and "steps" in check.__code__.co_varnames[: check.__code__.co_argcount]:
            kwargs["steps"] = sizes["steps"]
        if "horizon" in sizes and "horizon" in check.__code__.co_varnames[: check.__code__.co_argcount]:
            kwargs["horizon"] = sizes["horizon"]
        results.append(check(**kwargs))
    return results
