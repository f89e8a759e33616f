"""EEG data augmentation for seizure prediction.

Diffusion-based preictal oversampling plus the reference balancing methods,
segment classifiers, and alarm-level evaluation needed to compare them.
"""

from .balance import BalancePlan, apply_plan
from .classifiers import (
    ARCHITECTURES,
    DilatedCnnClassifier,
    MlpClassifier,
    TransformerClassifier,
    make_classifier,
)
from .dataset import (
    INTERICTAL,
    PREICTAL,
    DatasetSpec,
    Fold,
    Segment,
    admit_patient,
    assign_seizures,
    label_segments,
    make_folds,
    merge_seizures,
)
from .errors import ConfigError, DataFormatError, ProtocolError
from .evaluation import (
    AlarmPolicy,
    CvReport,
    FoldReport,
    PredictionTimeline,
    auc,
    raise_alarms,
    run_cv,
    score_fold,
    timeline_from_segments,
)
from .generator import DiffusionGenerator
from .schedule import linear_schedule

__version__ = "0.1.0"

__all__ = [
    "ARCHITECTURES",
    "AlarmPolicy",
    "BalancePlan",
    "ConfigError",
    "CvReport",
    "DataFormatError",
    "DatasetSpec",
    "DiffusionGenerator",
    "DilatedCnnClassifier",
    "Fold",
    "FoldReport",
    "INTERICTAL",
    "MlpClassifier",
    "PREICTAL",
    "PredictionTimeline",
    "ProtocolError",
    "Segment",
    "TransformerClassifier",
    "admit_patient",
    "apply_plan",
    "assign_seizures",
    "auc",
    "label_segments",
    "linear_schedule",
    "make_classifier",
    "make_folds",
    "merge_seizures",
    "raise_alarms",
    "run_cv",
    "score_fold",
    "timeline_from_segments",
]
