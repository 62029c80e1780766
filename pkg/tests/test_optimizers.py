import numpy as np
import pytest

from marsopt.numkit import RngStream, l2_norm
from marsopt.optimizers import (
    Hyperparams,
    adamw_step,
    clip_unit_norm,
    correction_gradient,
    estimate_optimal_gamma,
    fold_two_buffer,
    init_state,
    lion_step,
    mars_adamw_step,
    mars_identity_step,
    mars_lion_step,
    mars_shampoo_step,
    muon_step,
    sgd_step,
    storm_step,
)
from marsopt.spectral import polar_factor


def hp(**kw):
    return Hyperparams(**kw)


# ---------------------------------------------------------------- correction

def test_correction_gamma_zero_is_identity():
    g = np.array([1.0, -2.0, 0.5])
    ref = np.array([9.0, 9.0, 9.0])
    np.testing.assert_array_equal(correction_gradient(g, ref, 0.0, 0.95), g)


def test_correction_equal_gradients_unchanged():
    g = np.array([1.0, 2.0])
    np.testing.assert_array_equal(correction_gradient(g, g.copy(), 0.7, 0.9), g)


def test_correction_hand_value():
    out = correction_gradient(np.array([1.0]), np.array([0.0]), 0.025, 0.95)
    assert out[0] == pytest.approx(1.475, abs=1e-12)  # 1 + 0.025 * 19


def test_correction_beta_one_rejected():
    with pytest.raises(ValueError, match="infinite correction scale"):
        correction_gradient(np.ones(2), np.zeros(2), 0.5, 1.0)


# ---------------------------------------------------------------------- clip

def test_clip_examples():
    np.testing.assert_array_equal(clip_unit_norm(np.array([0.3, 0.4]), 1.0), [0.3, 0.4])
    np.testing.assert_allclose(clip_unit_norm(np.array([3.0, 4.0]), 1.0), [0.6, 0.8], atol=1e-15)
    np.testing.assert_array_equal(clip_unit_norm(np.zeros(3), 1.0), np.zeros(3))
    big = np.array([5.0, -12.0])
    np.testing.assert_array_equal(clip_unit_norm(big, None), big)


def test_clip_norm_contract():
    rng = RngStream(1)
    for _ in range(100):
        c = rng.gauss(6) * float(rng.uniform(1)[0] * 5.0)
        out = clip_unit_norm(c, 1.0)
        assert abs(l2_norm(out) - min(l2_norm(c), 1.0)) <= 1e-14


def test_clip_rejects_bad_threshold():
    with pytest.raises(ValueError):
        clip_unit_norm(np.ones(2), 0.0)


# ------------------------------------------------------------ adamw variants

def test_mars_adamw_single_step_hand_arithmetic():
    # d=1, g=0.5, ref=0.5, beta=(0.95, 0.99), gamma=0.025, eps=1e-8, lr=0.1:
    # c=0.5 (no correction, no clip), m=0.025, v=0.0025, m_hat=0.5, v_hat=0.25,
    # dx = -0.1 * 0.5 / (0.5 + 1e-8)
    state = init_state(np.zeros(1))
    h = hp(beta1=0.95, beta2=0.99, eps=1e-8, weight_decay=0.0, correction_mode="exact")
    report = mars_adamw_step(state, np.array([0.5]), np.array([0.5]), h, lr=0.1, gamma=0.025)
    assert state.t == 1
    assert report.c[0] == 0.5 and not report.clipped
    assert state.m[0] == pytest.approx(0.025, abs=1e-15)
    assert state.v[0] == pytest.approx(0.0025, abs=1e-15)
    expected_dx = -0.1 * 0.5 / (0.5 + 1e-8)
    assert state.x[0] == pytest.approx(expected_dx, abs=1e-15)
    assert state.x[0] == pytest.approx(-0.099999998, abs=1e-9)


def test_mars_adamw_zero_gradient_keeps_x_fixed():
    state = init_state(np.zeros(3))
    h = hp(weight_decay=0.0)
    for _ in range(10):
        mars_adamw_step(state, np.zeros(3), np.zeros(3), h, lr=0.1, gamma=0.025)
    np.testing.assert_array_equal(state.x, np.zeros(3))


def test_adamw_single_step_hand_arithmetic():
    state = init_state(np.zeros(1))
    h = hp(beta1=0.9, beta2=0.999, eps=1e-8, weight_decay=0.0, clip_threshold=1.0)
    adamw_step(state, np.array([1.0]), h, lr=1e-3)
    # m_hat = v_hat = 1 at t=1, so dx = -lr / (1 + eps)
    assert state.x[0] == pytest.approx(-1e-3 / (1.0 + 1e-8), abs=1e-18)


def test_adamw_weight_decay_decoupled():
    state = init_state(np.full(2, 10.0))
    h = hp(weight_decay=0.1, clip_threshold=None)
    adamw_step(state, np.zeros(2), h, lr=0.5)
    # zero gradient leaves the moments at zero; only decay acts: x -= lr*wd*x
    np.testing.assert_allclose(state.x, np.full(2, 10.0 * (1 - 0.05)), atol=1e-12)


def test_decay_exclusion_predicate():
    state = init_state(np.full(6, 2.0), block_shapes=[(2, 2), (2,)])
    h = hp(weight_decay=0.5, clip_threshold=None,
           decay_exclude=lambda i, shape: len(shape) < 2)
    adamw_step(state, np.zeros(6), h, lr=0.1)
    np.testing.assert_allclose(state.x[:4], np.full(4, 2.0 * (1 - 0.05)), atol=1e-12)
    np.testing.assert_array_equal(state.x[4:], np.full(2, 2.0))  # bias block untouched


def test_non_finite_update_raises_with_coordinate():
    state = init_state(np.zeros(3))
    g = np.array([0.1, np.inf, 0.2])
    with pytest.raises((FloatingPointError, ValueError)) as err:
        adamw_step(state, g, hp(clip_threshold=None), lr=0.1)
    assert "non-finite" in str(err.value)


# ------------------------------------------------------------- sign variants

def test_mars_lion_sign_saturation_and_range():
    state = init_state(np.zeros(4))
    h = hp(clip_threshold=None)
    report = mars_lion_step(state, np.array([0.5, 0.5, 0.5, 0.5]), np.zeros(4), h, lr=0.1, gamma=0.0)
    np.testing.assert_array_equal(report.direction, np.ones(4))
    report = mars_lion_step(state, np.array([-9.0, 0.0, 3.0, -1.0]), np.zeros(4), h, lr=0.1, gamma=0.9)
    assert set(np.unique(report.direction)).issubset({-1.0, 0.0, 1.0})


def test_mars_lion_sign_of_zero_is_zero():
    state = init_state(np.zeros(2))
    report = mars_lion_step(state, np.zeros(2), np.zeros(2), hp(clip_threshold=None), lr=0.1, gamma=0.5)
    np.testing.assert_array_equal(report.direction, np.zeros(2))
    np.testing.assert_array_equal(state.x, np.zeros(2))


def test_lion_buffer_collapse_when_betas_equal():
    # with beta1 = beta2 the two-buffer form is a plain EMA read before update
    beta = 0.9
    rng = RngStream(2)
    state = init_state(np.zeros(3))
    h = hp(beta1=beta, beta2=beta, clip_threshold=None, weight_decay=0.0)
    u = np.zeros(3)
    for _ in range(50):
        g = rng.gauss(3)
        lion_step(state, g, h, lr=0.01)
        expected_m = beta * u + (1 - beta) * g
        u = beta * u + (1 - beta) * g
        np.testing.assert_allclose(state.m, expected_m, atol=1e-15)


def test_sgd_definitional():
    state = init_state(np.zeros(2))
    sgd_step(state, np.array([1.0, -2.0]), hp(clip_threshold=None), lr=0.1)
    np.testing.assert_allclose(state.x, [-0.1, 0.2], atol=1e-16)


# ------------------------------------------------------------ polar variants

def test_muon_zero_gradient_stream():
    state = init_state(np.zeros(4), block_shapes=[(2, 2)])
    h = hp(beta1=0.9, weight_decay=0.0, clip_threshold=None)
    for _ in range(5):
        muon_step(state, np.zeros(4), h, lr=0.1)
    np.testing.assert_array_equal(state.x, np.zeros(4))
    np.testing.assert_array_equal(state.m, np.zeros(4))


def test_muon_mu_zero_uses_raw_gradient_polar():
    g = np.array([[1.0, 2.0], [3.0, 4.0]]) + 2.0 * np.eye(2)
    state = init_state(np.zeros(4), block_shapes=[(2, 2)])
    h = hp(beta1=0.0, weight_decay=0.0, polar_method="svd")
    report = muon_step(state, g.ravel(), h, lr=0.1)
    np.testing.assert_allclose(report.direction.reshape(2, 2), polar_factor(g), atol=1e-12)


def test_muon_constant_gradient_limit():
    # constant g: u -> g/(1-mu), m -> g/(1-mu), direction -> polar(g)
    mu = 0.9
    g = (np.array([[2.0, 1.0], [0.5, 3.0]])).ravel()
    state = init_state(np.zeros(4), block_shapes=[(2, 2)])
    h = hp(beta1=mu, weight_decay=0.0, polar_method="svd")
    for _ in range(400):
        report = muon_step(state, g, h, lr=0.0)
    np.testing.assert_allclose(state.u, g / (1 - mu), rtol=1e-12)
    np.testing.assert_allclose(state.m, g / (1 - mu), rtol=1e-10)
    np.testing.assert_allclose(report.direction.reshape(2, 2),
                               polar_factor(g.reshape(2, 2)), atol=1e-10)


def test_mars_shampoo_orthogonal_momentum_fixed_point():
    q, r = np.linalg.qr(RngStream(3).gauss_matrix(3, 3))
    q *= np.sign(np.diag(r))
    state = init_state(np.zeros(9), block_shapes=[(3, 3)])
    h = hp(beta1=0.9, clip_threshold=None, weight_decay=0.0, polar_method="svd")
    # gamma=0, g = q: momentum after one step is 0.1*q, whose polar factor is q
    report = mars_shampoo_step(state, q.ravel(), np.zeros(9), h, lr=0.1, gamma=0.0)
    np.testing.assert_allclose(report.direction.reshape(3, 3), q, atol=1e-12)
    sv = np.linalg.svd(report.direction.reshape(3, 3), compute_uv=False)
    np.testing.assert_allclose(sv, np.ones(3), atol=1e-12)


def test_mars_shampoo_positive_diagonal_momentum():
    state = init_state(np.zeros(4), block_shapes=[(2, 2)])
    h = hp(beta1=0.5, clip_threshold=None, weight_decay=0.0)
    g = np.diag([5.0, 1.0]).ravel()
    report = mars_shampoo_step(state, g, np.zeros(4), h, lr=0.1, gamma=0.0)
    np.testing.assert_allclose(report.direction.reshape(2, 2), np.eye(2), atol=1e-12)


def test_mars_shampoo_momentum_scale_invariance():
    rng = RngStream(4)
    g = rng.gauss_matrix(3, 3).ravel()
    h = hp(beta1=0.9, clip_threshold=None, weight_decay=0.0)
    state_a = init_state(np.zeros(9), block_shapes=[(3, 3)])
    state_b = init_state(np.zeros(9), block_shapes=[(3, 3)])
    mars_shampoo_step(state_a, g, np.zeros(9), h, lr=0.1, gamma=0.0)
    mars_shampoo_step(state_b, 2.0 * g, np.zeros(9), h, lr=0.1, gamma=0.0)
    # momentum doubled, polar factor (and hence the iterate) unchanged
    np.testing.assert_allclose(2.0 * state_a.m, state_b.m, atol=1e-14)
    np.testing.assert_allclose(state_a.x, state_b.x, atol=1e-10)


def test_mars_shampoo_zero_momentum_applies_decay_only():
    state = init_state(np.full(4, 3.0), block_shapes=[(2, 2)])
    h = hp(beta1=0.9, clip_threshold=None, weight_decay=0.1)
    mars_shampoo_step(state, np.zeros(4), np.zeros(4), h, lr=0.5, gamma=0.0)
    np.testing.assert_allclose(state.x, np.full(4, 3.0 * (1 - 0.05)), atol=1e-14)


def test_mars_shampoo_vector_block_fallback():
    # matrix block gets a polar direction, bias block the diagonal update
    state = init_state(np.zeros(6), block_shapes=[(2, 2), (2,)])
    h = hp(beta1=0.9, beta2=0.99, clip_threshold=None, weight_decay=0.0)
    g = np.array([1.0, 0.0, 0.0, 1.0, 0.5, -0.5])
    report = mars_shampoo_step(state, g, np.zeros(6), h, lr=0.1, gamma=0.0)
    np.testing.assert_allclose(report.direction[:4].reshape(2, 2), np.eye(2), atol=1e-12)
    assert report.direction[4] > 0 and report.direction[5] < 0


# --------------------------------------------------------------------- storm

def test_storm_first_step_reduces_to_ema_under_shared_batch():
    # x_1 = x_0, so the exact reference equals the fresh gradient
    state = init_state(np.zeros(3))
    g = np.array([1.0, -1.0, 2.0])
    storm_step(state, g, g.copy(), hp(beta1=0.9), lr=0.1)
    np.testing.assert_allclose(state.m, 0.1 * g, atol=1e-16)


def test_storm_beta_zero_is_sgd():
    state_a = init_state(np.zeros(3))
    state_b = init_state(np.zeros(3))
    rng = RngStream(5)
    for _ in range(10):
        g = rng.gauss(3)
        storm_step(state_a, g, rng.gauss(3), hp(beta1=0.0), lr=0.05)
        sgd_step(state_b, g, hp(beta1=0.0, clip_threshold=None), lr=0.05)
    np.testing.assert_allclose(state_a.x, state_b.x, atol=1e-15)


# ---------------------------------------------------------------------- fold

def test_fold_plain_ema_constants():
    # b2=0, b1=1, a2=1-a1 under the update-then-read ordering has K=0 and is
    # exactly the plain EMA recursion
    rng = RngStream(6)
    a1 = 0.9
    g_seq = rng.gauss(100 * 3).reshape(100, 3)
    fold = fold_two_buffer(a1, 1 - a1, 1.0, 0.0, g_seq, ordering="update_then_read")
    m = np.zeros(3)
    for t in range(100):
        m = a1 * m + (1 - a1) * g_seq[t]
        np.testing.assert_allclose(fold[t], m, atol=1e-15)
    # under the read-then-update ordering the same constants give the lagged
    # EMA; on a constant sequence both orderings agree in the limit
    const = np.tile([[2.0, -1.0]], (400, 1))
    lag = fold_two_buffer(a1, 1 - a1, 1.0, 0.0, const, ordering="read_then_update")
    plain = fold_two_buffer(a1, 1 - a1, 1.0, 0.0, const, ordering="update_then_read")
    np.testing.assert_allclose(lag[-1], plain[-1], atol=1e-12)


def test_fold_lion_constants_match_two_buffer():
    rng = RngStream(7)
    beta1, beta2 = 0.9, 0.99
    for _ in range(5):
        g_seq = rng.gauss(1000 * 4).reshape(1000, 4)
        fold = fold_two_buffer(beta2, 1 - beta2, beta1, 1 - beta1, g_seq,
                               ordering="read_then_update")
        u = np.zeros(4)
        for t in range(1000):
            m_ref = beta1 * u + (1 - beta1) * g_seq[t]
            u = beta2 * u + (1 - beta2) * g_seq[t]
            assert np.max(np.abs(fold[t] - m_ref)) <= 1e-12


def test_fold_muon_constants_match_two_buffer():
    rng = RngStream(8)
    mu = 0.95
    for _ in range(5):
        g_seq = rng.gauss(1000 * 4).reshape(1000, 4)
        fold = fold_two_buffer(mu, 1.0, mu, 1.0, g_seq, ordering="update_then_read")
        u = np.zeros(4)
        for t in range(1000):
            u = mu * u + g_seq[t]
            m_ref = mu * u + g_seq[t]
            assert np.max(np.abs(fold[t] - m_ref)) <= 1e-12


def test_fold_requires_two_steps_and_known_ordering():
    with pytest.raises(ValueError):
        fold_two_buffer(0.9, 0.1, 0.9, 0.1, np.ones((1, 2)))
    with pytest.raises(ValueError):
        fold_two_buffer(0.9, 0.1, 0.9, 0.1, np.ones((5, 2)), ordering="sideways")


# ----------------------------------------------------------- gamma estimator

def test_gamma_estimator_orthogonal_deterministic_correction():
    e1, e2 = np.array([1.0, 0.0]), np.array([0.0, 1.0])
    samples = [(e2, e1), (-e2, e1)]  # U orthogonal to Y, Y constant
    assert estimate_optimal_gamma(samples) == pytest.approx(1.0, abs=1e-15)


def test_gamma_estimator_pure_noise_correction():
    e1, e2 = np.array([1.0, 0.0]), np.array([0.0, 1.0])
    samples = [(e2, e1), (e2, -e1)]  # E[Y]=0 and U _|_ Y
    assert estimate_optimal_gamma(samples) == pytest.approx(0.0, abs=1e-15)


def test_gamma_estimator_plug_in_arithmetic():
    # scalar stream engineered to the moments <U,Y>=0.5, Var(Y)=0.25, E[Y^2]=1
    r = np.sqrt(0.75)
    y1, y2 = r + 0.5, r - 0.5
    samples = [(np.array([1.0 / y1]), np.array([y1])), (np.array([0.0]), np.array([y2]))]
    assert estimate_optimal_gamma(samples) == pytest.approx(0.25, abs=1e-12)


def test_gamma_estimator_errors():
    with pytest.raises(ValueError, match="at least 2"):
        estimate_optimal_gamma([(np.ones(2), np.ones(2))])
    with pytest.raises(ValueError, match="degenerate correction variable"):
        estimate_optimal_gamma([(np.ones(2), np.zeros(2)), (np.ones(2), np.zeros(2))])


# ------------------------------------------------------------- norm bounds

def test_momentum_and_second_moment_bounds_under_clipping():
    rng = RngStream(9)
    m = np.zeros(6)
    v = np.zeros(6)
    betas1 = rng.uniform(10_000)
    betas2 = rng.uniform(10_000)
    for k in range(10_000):
        c = clip_unit_norm(rng.gauss(6) * 2.5, 1.0)
        m = betas1[k] * m + (1 - betas1[k]) * c
        v = betas2[k] * v + (1 - betas2[k]) * c**2
        assert l2_norm(m) <= 1.0
        assert l2_norm(v) <= 1.0
        assert np.all(v >= 0.0)


def test_hyperparams_validation():
    with pytest.raises(ValueError):
        hp(beta1=1.0)
    with pytest.raises(ValueError):
        hp(beta2=-0.1)
    with pytest.raises(ValueError):
        hp(eps=0.0)
    with pytest.raises(ValueError):
        hp(clip_threshold=-1.0)
    with pytest.raises(ValueError):
        hp(correction_mode="middle")


def test_state_invariants_at_init():
    state = init_state(np.array([1.0, 2.0]))
    assert state.t == 0
    np.testing.assert_array_equal(state.m, np.zeros(2))
    np.testing.assert_array_equal(state.v, np.zeros(2))
    np.testing.assert_array_equal(state.prev_x, state.x)
    np.testing.assert_array_equal(state.prev_g, np.zeros(2))


def test_muon_vector_block_fallback_uses_adamw_update():
    # bias block follows a textbook diagonal update with its own buffers
    state = init_state(np.zeros(6), block_shapes=[(2, 2), (2,)])
    h = hp(beta1=0.9, beta2=0.99, weight_decay=0.0, polar_method="svd")
    g = np.array([1.0, 0.0, 0.0, 1.0, 0.5, -0.25])
    report = muon_step(state, g, h, lr=0.1)
    np.testing.assert_allclose(report.direction[:4].reshape(2, 2), np.eye(2), atol=1e-12)
    assert report.direction[4] > 0 and report.direction[5] < 0
    np.testing.assert_allclose(state.fallback_m[4:], 0.1 * g[4:], atol=1e-15)
    np.testing.assert_allclose(state.v[4:], 0.01 * g[4:] ** 2, atol=1e-15)
    # matrix-block buffers untouched by the fallback and vice versa
    np.testing.assert_array_equal(state.fallback_m[:4], np.zeros(4))


def test_polar_optimizers_handle_rank_deficient_momentum():
    # a 2-class softmax output layer produces gradients of rank <= 1, so the
    # Newton-Schulz path must accept the stabilized partial isometry
    from marsopt.problems import make_mlp

    oracle = make_mlp([3, 6, 2], n=32, batch_size=8, seed=0)
    for step_kind in ("muon", "shampoo"):
        state = init_state(oracle.initial_point(), oracle.block_shapes)
        h = hp(beta1=0.95, clip_threshold=None, polar_method="newton_schulz",
               correction_mode="approx")
        for t in range(1, 11):
            batch = oracle.sample_batch(t)
            g = oracle.stochastic_grad(state.x, batch)
            if step_kind == "muon":
                muon_step(state, g, h, lr=1e-3)
            else:
                mars_shampoo_step(state, g, state.prev_g, h, lr=1e-3, gamma=0.025)
        assert np.all(np.isfinite(state.x))


def test_hyperparams_defaults_match_tuned_values():
    h = hp()
    assert (h.beta1, h.beta2) == (0.95, 0.99)
    assert h.gamma == 0.025
    assert h.eps == 1e-8
    assert h.clip_threshold == 1.0
    assert h.correction_mode == "approx"
