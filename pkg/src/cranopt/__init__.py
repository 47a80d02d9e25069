"""Learned downlink beamforming with fronthaul-aware feasibility recovery.

The package covers the full experiment loop: one-ring channel generation,
the structured solution recovery (directions + powers + quantization noise),
a from-scratch MLP with hand-derived gradients through that recovery, the
training/evaluation harness, search baselines, and a CLI.

Hot numeric kernels are numba-compiled by default; set CRANOPT_DISABLE_NUMBA=1
before import to run the pure-numpy twins instead (same results, slower).
"""

from ._accel import NUMBA_ENABLED
from .baselines import (
    LocalSearchConfig,
    OracleResult,
    SearchResult,
    brute_force_oracle,
    local_search,
    mrt_uniform,
)
from .channel import (
    ChannelSample,
    ConstraintBounds,
    Geometry,
    OneRingParams,
    generate_dataset,
    load_dataset,
    one_ring_channel,
    sample_geometry,
    save_dataset,
)
from .cranmodel import (
    FeasibilityReport,
    IntermediateParams,
    SystemInstance,
    assemble_beamformer,
    beta_from_capacity,
    check_feasibility,
    recover_direction,
    recover_quant_noise,
    recover_solution,
    scale_to_feasible,
    sum_rate,
    user_rate,
)
from .errors import (
    ChecksumError,
    ConfigurationError,
    ContractViolationError,
    CranoptError,
    DatasetFormatError,
    DegenerateInputError,
    OracleSizeError,
    TrainingDivergedError,
)
from .linalg import DefinitenessError, hermitian_pd_solve
from .neuralnet import (
    AdamState,
    MlpConfig,
    MlpModel,
    adam_step,
    backward,
    batch_features,
    build_input_features,
    forward,
    init_model,
    load_checkpoint,
    pipeline_gradient,
    recalibrate_stats,
    save_checkpoint,
)
from .trainer import (
    EvalReport,
    FixedSampleSource,
    OnlineSampleSource,
    TrainConfig,
    TrainReport,
    evaluate,
    loss_on_batch,
    train,
)

__version__ = "0.1.0"

__all__ = [
    "NUMBA_ENABLED",
    "LocalSearchConfig",
    "OracleResult",
    "SearchResult",
    "brute_force_oracle",
    "local_search",
    "mrt_uniform",
    "ChannelSample",
    "ConstraintBounds",
    "Geometry",
    "OneRingParams",
    "generate_dataset",
    "load_dataset",
    "one_ring_channel",
    "sample_geometry",
    "save_dataset",
    "FeasibilityReport",
    "IntermediateParams",
    "SystemInstance",
    "assemble_beamformer",
    "beta_from_capacity",
    "check_feasibility",
    "recover_direction",
    "recover_quant_noise",
    "recover_solution",
    "scale_to_feasible",
    "sum_rate",
    "user_rate",
    "ChecksumError",
    "ConfigurationError",
    "ContractViolationError",
    "CranoptError",
    "DatasetFormatError",
    "DegenerateInputError",
    "OracleSizeError",
    "TrainingDivergedError",
    "DefinitenessError",
    "hermitian_pd_solve",
    "AdamState",
    "MlpConfig",
    "MlpModel",
    "adam_step",
    "backward",
    "batch_features",
    "build_input_features",
    "forward",
    "init_model",
    "load_checkpoint",
    "pipeline_gradient",
    "recalibrate_stats",
    "save_checkpoint",
    "EvalReport",
    "FixedSampleSource",
    "OnlineSampleSource",
    "TrainConfig",
    "TrainReport",
    "evaluate",
    "loss_on_batch",
    "train",
    "__version__",
]
