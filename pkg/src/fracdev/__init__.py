"""fracdev: small-noise deviation asymptotics for mean-field SDEs driven
by fractional Brownian motion with Hurst parameter H in (1/2, 1).

The package simulates distribution-dependent dynamics with noise
amplitude eps^H, evaluates the variational rate functions of their large
and moderate deviation regimes, couples them to their Gaussian limit
process, and checks the predicted scaling laws by Monte Carlo.
"""

from .asymptotics import (
    CltEnsemble,
    MdpConfig,
    SkeletonSolution,
    clt_limit,
    make_kappa,
    mdp_paths,
    rate_endpoint,
    rate_ldp_path,
    skeleton_ldp,
    skeleton_mdp,
)
from .errors import (
    DivergenceError,
    NumericalError,
    SingularOperatorError,
    UnsupportedModelError,
)
from .fbm import (
    FbmBundle,
    FbmEnsemble,
    c_h,
    check_hurst,
    cov,
    covariance_matrix,
    kernel_K,
    kernel_K_ds,
    kernel_exact,
    sample_cholesky,
    sample_volterra,
    volterra_map,
    volterra_weights,
)
from .grids import SamplePath, TimeGrid, constant_path, indicator_path
from .mc import (
    ScalingReport,
    TailReport,
    clt_error_curve,
    ldp_consistency,
    mdp_consistency,
    moment_sup,
    scaling_exponent,
)
from .mckean import (
    CoefficientModel,
    EmpiricalMeasure,
    EnsembleResult,
    MODEL_FACTORIES,
    empirical_wasserstein,
    ex_clt_model,
    girsanov_log_weights,
    girsanov_weight,
    limit_ode,
    linear_meanfield_model,
    make_model,
    pure_noise_model,
    shift_ensemble,
    solve_controlled,
    solve_mckean,
    wiener_integral,
)
from .rkhs import (
    CameronMartinPath,
    ControlL2,
    apply_k_star,
    h_inner_weighted,
    h_norm_sq,
    rh_density,
    rh_invert,
)

__version__ = "0.1.0"
