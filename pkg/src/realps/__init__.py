"""Reweighted tilted tempering with mode teleportation, a HAT baseline, and
oracle-backed diagnostics."""

from .targets import (
    GaussianMixtureSpec,
    QuadratureGrid,
    StudentTMixtureSpec,
    TargetModel,
    make_gaussian_mixture,
    make_student_t_mixture,
    quadrature_log_partition,
)
from .tilting import (
    LadderSpec,
    TemperatureLadder,
    TemperingScheme,
    WarmStartSet,
    build_ladder,
    init_coldest_weights,
    log_tempered_density,
    log_tilt,
)
from .kernels import (
    ChainState,
    EventRecord,
    KernelConfig,
    Recorder,
    SampleBatch,
    level_swap,
    rwm_step,
    simulate,
    teleport,
)
from .weight_learning import (
    LearningConfig,
    WeightTrace,
    apply_first_level_upscale,
    estimate_component_weights,
    estimate_level_weight,
    rebalance_levels,
    train,
)
from .alps_hat import (
    HATModel,
    coldest_independence_step,
    hat_log_density,
    hat_model_from_gaussian_spec,
    hat_model_from_student_t_spec,
    modal_allocation,
    run_hat_alps,
)
from .diagnostics import (
    BalanceReport,
    MixingReport,
    ProjectedChain,
    TVEstimate,
    adjacency_chi_square,
    balance_report,
    mode_occupancy,
    projected_spectral_gap,
    tv_estimate,
)

__version__ = "0.1.0"
