"""Head-motion kinematics, segmentation, and severity regression.

A batch pipeline that turns head-pose time series into scalar severity
predictions: rotation-matrix kinematics, two-state motion segmentation
via a 1-D Gaussian mixture, a fixed named feature schema, redundancy
filtering plus sequential feature selection under nested cross-validation,
and linear models trained by coordinate descent. A synthetic-trace
generator with a planted feature-target relation supports end-to-end
validation without clinical recordings.
"""

from .errors import (
    ChainMismatchError,
    ConvergenceWarning,
    DegenerateDataError,
    HeadMotionError,
    InvalidConfigError,
    InvalidInputError,
    SchemaMismatchError,
    TooShortError,
)
from .evaluation import (
    AblationCell,
    AblationGrid,
    CVConfig,
    CVReport,
    FoldRecord,
    confusion,
    mae,
    r2,
    run_ablation,
    run_cv,
    to_class,
    to_classes,
)
from .features import (
    FEATURE_NAMES,
    FLAG_NAMES,
    RAW_FEATURE_NAMES,
    FeatureVector,
    feature_schema,
    feature_vector,
    unsegmented_features,
)
from .folds import make_folds, make_stratified_folds
from .kinematics import (
    KinematicSeries,
    PoseSeries,
    angular_acceleration,
    angular_velocity,
    compute_kinematics,
    euler_to_rotation,
    rodrigues,
    rotation_matrices,
    rotation_to_euler,
)
from .matrix import FeatureMatrix
from .models import FittedModel, ModelSpec, fit, predict
from .pipeline import (
    RecordingResult,
    dataset_matrices,
    feature_matrix,
    process_recording,
    raw_feature_matrix,
)
from .segmentation import (
    MOVING,
    STEADY,
    GmmModel,
    Segment,
    Segmentation,
    extract_segments,
    fit_gmm,
    label_frames,
    segment_recording,
    smooth_labels,
    speed_magnitude,
)
from .selection import (
    ConsensusResult,
    SelectionPath,
    SelectionStep,
    consensus_select,
    correlation_filter,
    sfs_backward,
    sfs_floating,
)
from .synth import (
    PLANTED_KNOBS,
    Driver,
    PlantedDataset,
    PlantedRelation,
    PlantedSubject,
    StateMotion,
    TraceParams,
    default_relation,
    generate_dataset,
    generate_trace,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "ChainMismatchError",
    "ConvergenceWarning",
    "DegenerateDataError",
    "HeadMotionError",
    "InvalidConfigError",
    "InvalidInputError",
    "SchemaMismatchError",
    "TooShortError",
    "AblationCell",
    "AblationGrid",
    "CVConfig",
    "CVReport",
    "FoldRecord",
    "confusion",
    "mae",
    "r2",
    "run_ablation",
    "run_cv",
    "to_class",
    "to_classes",
    "FEATURE_NAMES",
    "FLAG_NAMES",
    "RAW_FEATURE_NAMES",
    "FeatureVector",
    "feature_schema",
    "feature_vector",
    "unsegmented_features",
    "make_folds",
    "make_stratified_folds",
    "KinematicSeries",
    "PoseSeries",
    "angular_acceleration",
    "angular_velocity",
    "compute_kinematics",
    "euler_to_rotation",
    "rodrigues",
    "rotation_matrices",
    "rotation_to_euler",
    "FeatureMatrix",
    "FittedModel",
    "ModelSpec",
    "fit",
    "predict",
    "RecordingResult",
    "dataset_matrices",
    "feature_matrix",
    "process_recording",
    "raw_feature_matrix",
    "MOVING",
    "STEADY",
    "GmmModel",
    "Segment",
    "Segmentation",
    "extract_segments",
    "fit_gmm",
    "label_frames",
    "segment_recording",
    "smooth_labels",
    "speed_magnitude",
    "ConsensusResult",
    "SelectionPath",
    "SelectionStep",
    "consensus_select",
    "correlation_filter",
    "sfs_backward",
    "sfs_floating",
    "PLANTED_KNOBS",
    "Driver",
    "PlantedDataset",
    "PlantedRelation",
    "PlantedSubject",
    "StateMotion",
    "TraceParams",
    "default_relation",
    "generate_dataset",
    "generate_trace",
]
