"""marsopt: variance-reduced preconditioned optimizers, synthetic problems
with exact gradients, and a verification/benchmark harness.
"""

from .numkit import RngStream, gauss_draw, l2_norm, substream
from .optimizers import (
    Hyperparams,
    OptimizerState,
    StepReport,
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
from .problems import (
    Batch,
    GradientOracle,
    finite_diff_grad,
    make_logistic,
    make_mlp,
    make_noisy_quadratic,
    make_noisy_rosenbrock,
)
from .schedules import GammaSchedule, LrSchedule, TheoryParams, gamma_at, lr_at, theory_betas
from .spectral import OrthogonalizeReport, SpectralResult, newton_schulz_orthogonalize, polar_factor, svd
from .config import ConfigError, RunConfig, config_from_dict, load_config
from .harness import (
    DivergenceError,
    Report,
    RunLog,
    compare_runs,
    gamma_scan,
    run_experiment,
    sweep,
    tracking_error_stats,
)
from .verify import CheckResult, verify_suite

__version__ = "0.1.0"
