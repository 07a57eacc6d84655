"""Face-image compliance vector: 25 automated quality tests with
per-test calibrated thresholds.

Every test emits a raw score in [0, 1] where higher means more
compliant; thresholding each score yields a 25-component pass/fail
vector plus an overall verdict.
"""

from .calibration import (
    CalibrationResult,
    LabeledScoreSet,
    PerformanceClass,
    RocCurve,
    RocPoint,
    TestThreshold,
    ThresholdConfig,
    calibrate_scores,
    classify_performance,
    compute_roc,
    select_threshold,
)
from .errors import (
    FacequalError,
    LandmarkFailure,
    NoFaceDetected,
    SchemaMismatch,
)
from .evaluation import (
    PerformanceReport,
    balance_report,
    collect_score_sets,
    evaluate,
    read_labels,
    score_corpus,
    write_labels,
)
from .imagery import ImageBuffer
from .imgio import decode_image, encode_png
from .preprocess import FaceContext, PreprocessConfig, preprocess
from .scoring import (
    QualityVector,
    RawScore,
    ScoringConfig,
    TEST_IDS,
    TEST_NAMES,
    compute_raw_scores,
    run_all,
)
from .synthesis import DegradationSpec, SynthSample, apply, build_corpus, make_face

__version__ = "1.0.0"

__all__ = [
    "CalibrationResult",
    "DegradationSpec",
    "FaceContext",
    "FacequalError",
    "ImageBuffer",
    "LabeledScoreSet",
    "LandmarkFailure",
    "NoFaceDetected",
    "PerformanceClass",
    "PerformanceReport",
    "PreprocessConfig",
    "QualityVector",
    "RawScore",
    "RocCurve",
    "RocPoint",
    "SchemaMismatch",
    "ScoringConfig",
    "SynthSample",
    "TEST_IDS",
    "TEST_NAMES",
    "TestThreshold",
    "ThresholdConfig",
    "apply",
    "balance_report",
    "build_corpus",
    "calibrate_scores",
    "classify_performance",
    "collect_score_sets",
    "compute_raw_scores",
    "compute_roc",
    "decode_image",
    "encode_png",
    "evaluate",
    "make_face",
    "preprocess",
    "read_labels",
    "run_all",
    "score_corpus",
    "select_threshold",
    "write_labels",
]
