"""Adaptive multiscale increment-ratio estimation of the memory parameter."""

from .asymcov import (
    ClampWarning,
    GammaTable,
    QuadratureSettings,
    build_gamma_table,
    gamma_empirical,
    gamma_interp,
    gamma_matrix,
    load_default_table,
    sigma_hat,
    sigma_ij,
    sigma_p,
    z_cov,
)
from .estimator import (
    EstimationReport,
    IRProfileTransformer,
    MIREstimator,
    adaptive_estimate,
    dhat_profile,
    gls_estimate,
    qn,
    select_alpha,
    select_p,
)
from .ir import IrProfile, ir_profile, ir_single, ir_single_naive
from .lambdas import lam, lambda0, lambda0_inverse, lambda0_prime, rho
from .sim import ARFIMA, FGN, PowerLawPlus, SeriesSample, autocovariance, parse_model, simulate
from .stationarity import (
    MemoryTest,
    TestDecision,
    nonstationarity_test,
    normal_quantile,
    stationarity_test,
    threshold_test,
)

__version__ = "0.1.0"
