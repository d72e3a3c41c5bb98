"""Maximum likelihood with explicit, computable concentration bounds.

Modules:

* :mod:`robustmle.families` - model families with loss derivatives and Lipschitz envelopes
* :mod:`robustmle.norms` - theta1 / theta2 moment-ratio norms
* :mod:`robustmle.concentration` - sub-Gaussian and sub-Gamma tail bounds for functions of independent data
* :mod:`robustmle.mle` - classical MLE, bias and oracle bounds
* :mod:`robustmle.truncated` - log-truncated score estimator with tuned truncation level
* :mod:`robustmle.simulate` - deterministic Monte Carlo experiments
* :mod:`robustmle.cli` - command-line front end
"""

__version__ = "0.1.0"

from .concentration import (
    DeviationNormSet,
    TailBound,
    TailClass,
    remark1_constants,
    subg_params_prop2,
    subg_tail_prob,
    subgamma_params_cor3,
    subgamma_quantile,
    subgamma_tail_prob,
    sum_deviation_norms,
    tail_bound,
)
from .errors import (
    ConfigurationError,
    DomainError,
    InfeasibleError,
    MomentNonexistenceError,
    NoRootError,
    NumericError,
    RobustMLEError,
    UsageError,
)
from .families import (
    ExponentialFamily,
    ExponentialRate,
    GaussianMean,
    GaussianVariance,
    ModelFamily,
    ParameterSpace,
    ParetoShape,
    WeibullScale,
    c_moments,
    fisher_information,
    get_family,
    lipschitz_envelope,
    sample,
    score_derivatives,
)
from .mle import (
    LipschitzProfile,
    bias_estimate,
    certify_profile,
    fit_mle,
    kappa,
    mle_concentration,
    oracle_bound,
    perturbation_bound,
)
from .norms import MomentOracle, NormResult, norm, theta1_norm, theta2_norm
from .simulate import ExperimentConfig, SimulationReport, run_experiment
from .truncated import (
    RobustEstimate,
    TheoryConstants,
    TruncatedScoreConfig,
    deviation_bound,
    fit_robust,
    half_width,
    min_sample_size,
    psi,
    solve,
    tune_beta,
    z_hat,
)
