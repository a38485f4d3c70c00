"""metadob: meta-learned disturbance models with feedback-calibrated
online adaptation, and a simulated quadrotor benchmark around them."""

from .control import ControllerGains, Reference, feedback_law, make_reference
from .disturbances import (
    FourierProfile,
    RandomizationRanges,
    Scenario,
    dataset_stats,
    sample_profile,
)
from .errors import (
    BadParams,
    DimensionMismatch,
    DivergenceDetected,
    EmptyData,
    InsufficientHistory,
    IoFailure,
    MetadobError,
    MissingWeights,
    NonFiniteState,
    NumericalFailure,
    SingularActuation,
    TooShort,
)
from .estimators import (
    AdaptiveState,
    EstimatorConfig,
    FcObserverState,
    adapt_step,
    buffer_admit,
    fc_step,
    make_estimator,
)
from .harness import (
    ExperimentConfig,
    MetricsReport,
    config_hash,
    export,
    run_ablation,
    run_benchmark,
)
from .metalearn import (
    MetaConfig,
    TrajectorySegment,
    meta_gradient,
    outer_loss,
    ridge_solve,
    slice_dataset,
    train,
)
from .plant import (
    NoiseConfig,
    PlantConfig,
    collect_dataset,
    disturbance_measurement,
    dynamics,
    rk4_step,
    rollout,
)
from .representation import (
    RepresentationParams,
    block_diag,
    embed,
    featurize,
    init_params,
    load_weights,
    predict,
    save_weights,
)

__version__ = "0.1.0"
