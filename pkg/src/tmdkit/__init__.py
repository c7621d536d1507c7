"""Time-multiplexed click-detector modeling and loss-tolerant photon statistics.

The package covers the full path from a twin-beam source to published
numbers: forward click models, shot-by-shot simulation, efficiency
calibration, least-squares reconstruction with error propagation, and
figures of merit (correlation, number squeezing, family fits).
"""

from .detector import (
    MAX_BINS,
    DetectorMatrix,
    TMDConfig,
    collective_forward,
    convolution_matrix,
    detector_response,
    forward,
    joint_forward,
    loss_matrix,
)
from .errors import (
    ConditioningError,
    ConfigError,
    DataFormatError,
    DegenerateConditionError,
    DomainError,
    NumericalError,
    TmdkitError,
    TruncationError,
)
from .io import (
    FORMAT_VERSION,
    RunManifest,
    config_from_doc,
    ingest_shots,
    parse_config,
    read_json_doc,
    serialize_config,
    write_json_doc,
    write_manifest,
    write_shots,
)
from .montecarlo import (
    CHUNK_SIZE,
    SETUPS,
    CollectiveResult,
    ExperimentConfig,
    ExperimentResult,
    ShotRecord,
    iter_shot_chunks,
    run_collective_experiment,
    run_experiment,
    sample_shot,
    simulate_klyshko,
)
from .pipelines import default_config, run_replicate
from .reconstruct import (
    CalibrationRecord,
    ReconstructionResult,
    invert_joint,
    invert_single,
    klyshko_efficiency,
    propagate_errors,
)
from .sources import (
    SourceModel,
    convolve,
    fock_dist,
    multimode_pair_dist,
    poisson_dist,
    thermal_dist,
    twin_beam_joint,
)
from .stats import (
    ClickStatistics,
    FitResult,
    JointPhotonDistribution,
    PhotonDistribution,
    combine_collective,
    conditional,
    correlation,
    default_n_max,
    fit_poisson,
    fit_thermal,
    marginals,
    moment,
    number_squeezing_db,
)

__version__ = "0.1.0"

__all__ = [
    "CHUNK_SIZE",
    "FORMAT_VERSION",
    "MAX_BINS",
    "SETUPS",
    "CalibrationRecord",
    "ClickStatistics",
    "CollectiveResult",
    "ConditioningError",
    "ConfigError",
    "DataFormatError",
    "DegenerateConditionError",
    "DetectorMatrix",
    "DomainError",
    "ExperimentConfig",
    "ExperimentResult",
    "FitResult",
    "JointPhotonDistribution",
    "NumericalError",
    "PhotonDistribution",
    "ReconstructionResult",
    "RunManifest",
    "ShotRecord",
    "SourceModel",
    "TMDConfig",
    "TmdkitError",
    "TruncationError",
    "collective_forward",
    "combine_collective",
    "conditional",
    "config_from_doc",
    "convolution_matrix",
    "convolve",
    "correlation",
    "default_config",
    "default_n_max",
    "detector_response",
    "fit_poisson",
    "fit_thermal",
    "fock_dist",
    "forward",
    "ingest_shots",
    "invert_joint",
    "invert_single",
    "iter_shot_chunks",
    "joint_forward",
    "klyshko_efficiency",
    "loss_matrix",
    "marginals",
    "moment",
    "multimode_pair_dist",
    "number_squeezing_db",
    "parse_config",
    "poisson_dist",
    "propagate_errors",
    "read_json_doc",
    "run_collective_experiment",
    "run_experiment",
    "run_replicate",
    "sample_shot",
    "serialize_config",
    "simulate_klyshko",
    "thermal_dist",
    "twin_beam_joint",
    "write_json_doc",
    "write_manifest",
    "write_shots",
]
