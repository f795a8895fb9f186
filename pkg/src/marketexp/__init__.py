"""Two-sided marketplace experiment engines.

Deterministic mean-field solvers, a finite-market event simulator, the
classical interference-prone estimators, their demand/supply limit forms,
and a replication harness that reproduces estimator-bias tables.
"""

from .market_model import (
    Cell,
    Classification,
    Cluster,
    CR,
    CustomerType,
    DesignSpec,
    ExpandedMarket,
    GlobalControl,
    GlobalTreatment,
    Intervention,
    LR,
    ListingType,
    MarketConfig,
    MarketValidationError,
    NonPositiveParameter,
    ShareSumMismatch,
    StateOutOfBounds,
    TSR,
    choice_matrix,
    choice_probabilities,
    classify_intervention,
    condition_totals,
    expand_for_design,
    outside_option_probability,
    validate_market,
)
from .mean_field import (
    NoConvergence,
    SolverError,
    StateVector,
    SteadyState,
    StepSizeUnderflow,
    Trajectory,
    booking_rates_mf,
    clip_balance,
    flow_residual,
    integrate,
    lyapunov_value,
    ode_rhs,
    steady_state,
)
from .finite_sim import (
    AllAvailable,
    AvailabilityTrace,
    BookingLedger,
    FiniteState,
    FixedK,
    MeanFieldGC,
    NTooSmall,
    PerListingBernoulli,
    SimConfig,
    apportion_listings,
    mnl_draw,
    simulate,
)
from .designs import (
    ClusterScenario,
    TsrSchedule,
    beta_weight,
    cluster_market,
    swap_clusters,
    tsr_schedule,
)
from .estimators import (
    ClusterLR,
    DegenerateArm,
    EstimatorId,
    GteReport,
    NaiveCR,
    NaiveLR,
    TSRI,
    TSRN,
    est_cluster,
    est_cr,
    est_lr,
    est_tsri,
    est_tsrn,
    gte_true,
    parse_estimator,
)
from .asymptotics import (
    GFactor,
    LimitTable,
    Regime,
    g_factor,
    homogeneous_limits,
    q_limit_demand,
    q_limit_supply,
    supply_state_approx,
    two_listing_booking_shares,
    two_listing_forms,
)
from .analysis_harness import (
    ClusterPreferenceRatio,
    PointFailure,
    ReplicationError,
    StatRow,
    SweepResult,
    SweepSpec,
    TooFewReplications,
    VaryAvgUtility,
    VaryBalance,
    VaryCustomerHet,
    VaryHTE,
    VaryListingHet,
    effective_window,
    kurtz_check,
    rows_to_csv,
    rows_to_json,
    run_replications,
    summarize,
    sweep,
)
from . import presets

__version__ = "0.1.0"
