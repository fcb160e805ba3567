"""Conditional Kaplan-Meier estimation for contamination-prone event data.

Recorded events in censored time-to-event data are not always genuine;
this package estimates covariate-conditional survival when a binary
adjudication of each recorded event is available (or modeled), including
the bias induced by imperfect adjudication, plug-in confidence
intervals, cross-validated bandwidth selection, and a reproducible
Monte Carlo harness.
"""

from .asymptotics import (
    CiCurve,
    VarianceCurve,
    biased_center,
    distribution_variance,
    hazard_variance,
    pointwise_ci,
    variance_curve,
)
from .bandwidth import (
    CoordinateDescent,
    CvConfig,
    SelectionReport,
    cv_score_at_t,
    cv_scores,
    direct_loo_score,
    functional_cv,
    select_bandwidth,
)
from .curves import StepCurve, integrate_value, merge_jump_curves, stieltjes_integral
from .data import Dataset, Observation
from .errors import (
    AllCandidatesDegenerateError,
    BothDensitiesZeroError,
    DenominatorUnderflowError,
    ExpertKMError,
    JumpOutOfRangeError,
    MissingJudgmentsError,
    NumericalError,
    SaturatedJumpError,
    ValidationError,
    ZeroDensityError,
)
from .estimator import (
    ConditionalFit,
    ConditionalKaplanMeier,
    as_survival_target,
    conditional_cdf,
    conditional_event_cdf,
    cumulative_hazard,
    density_estimate,
    fit_conditional_km,
    product_integral,
)
from .experts import (
    ExpertModel,
    JudgmentBias,
    NaiveExpert,
    PartialExpert,
    PerfectExpert,
    ThresholdCensorExpert,
    UniformCensorExpert,
    bias_functional,
    biased_limit,
    judgment_rng,
    p_from_densities,
)
from .kernels import (
    Bandwidth,
    KernelSpec,
    WeightCache,
    adaptive_simpson,
    as_bandwidth,
    default_kernel,
    raw_weights,
    scaled_weight,
    univariate_truncated_gaussian,
)
from .simulation import (
    DisabilityScenario,
    McExpertSpec,
    McStudyResult,
    Portfolio,
    SurvivalGrid,
    heatmap_difference,
    judgment_bias_integral,
    run_mc_study,
    simulate_portfolio,
    synthetic_loan_portfolio,
    true_biased_center,
    true_sigma_z,
    true_survival_disability,
    true_survival_grid,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
