"""Sensor signal conditioning and few-shot online spiking classification."""

from .conditioning import (
    ConditioningCascade,
    HeterogeneousDuplicator,
    IntensityNormalizer,
    SensorScaler,
    STAGES,
    condition,
    goodness_of_preprocessing,
)
from .datasets import (
    DatasetError,
    GroupedDataset,
    ParseError,
    RejectedRecordError,
    Sample,
    SchemaError,
    ShotPlan,
    draw_shots,
    feature_matrix,
    load_anuran,
    load_forest,
    load_gas_drift,
    split_validation,
)
from .harness import (
    Calibration,
    DEFAULT_CALIBRATION,
    ProtocolConfig,
    ProtocolReport,
    StageResult,
    calibrate,
    emit_report,
    load_dataset,
    load_report,
    run_ablation_suite,
    run_gp_table,
    run_protocol,
)
from .network import (
    Classification,
    EplNetwork,
    GcEnsemble,
    NONE_OF_THE_ABOVE,
    NetworkConfig,
    StdpParams,
)

__version__ = "0.1.0"

__all__ = [
    "ConditioningCascade",
    "HeterogeneousDuplicator",
    "IntensityNormalizer",
    "SensorScaler",
    "STAGES",
    "condition",
    "goodness_of_preprocessing",
    "DatasetError",
    "GroupedDataset",
    "ParseError",
    "RejectedRecordError",
    "Sample",
    "SchemaError",
    "ShotPlan",
    "draw_shots",
    "feature_matrix",
    "load_anuran",
    "load_forest",
    "load_gas_drift",
    "split_validation",
    "Calibration",
    "DEFAULT_CALIBRATION",
    "ProtocolConfig",
    "ProtocolReport",
    "StageResult",
    "calibrate",
    "emit_report",
    "load_dataset",
    "load_report",
    "run_ablation_suite",
    "run_gp_table",
    "run_protocol",
    "Classification",
    "EplNetwork",
    "GcEnsemble",
    "NONE_OF_THE_ABOVE",
    "NetworkConfig",
    "StdpParams",
    "__version__",
]
