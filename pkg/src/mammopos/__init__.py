"""Positioning-quality assessment for MLO mammograms.

Landmark regression (nipple + pectoral line endpoints) with a geometric
verdict: the posterior nipple line must meet the image bounds for the
positioning to count as adequate.
"""

from .errors import (
    ConfigMismatch,
    DegenerateLine,
    EmptyClass,
    EmptyForeground,
    EmptyInput,
    InvalidAnnotation,
    IoError,
    LandmarkOutsideCrop,
    MammoposError,
    NoIntersection,
    NonFinite,
    SchemaError,
    ShapeMismatch,
)
from .geometry import (
    ImageShape,
    LandmarkSet,
    Laterality,
    PixelSpacing,
    Point2,
    QualityLabel,
    QualityVerdict,
    angle_from_vertical,
    angular_error,
    classify_positioning,
    in_bounds,
    mm_distance,
    perpendicular_foot,
)
from .imaging import (
    PreprocessConfig,
    RawAnnotation,
    TransformLog,
    crop_breast_region,
    extract_landmarks,
    pad_square,
    preprocess_image,
    preprocess_image_and_landmarks,
    resize_with_landmarks,
    standardize_pectoral_line,
)
from .losses import LawWeights, WingParams, law_loss, law_loss_torch, wing
from .models import (
    AttentionForm,
    ModelConfig,
    ModelVariant,
    build_model,
    init_params,
    load_params,
    model_from_params,
    save_params,
)
from .training import TrainConfig, cyclic_lr, train
from .evaluation import (
    EvalReport,
    confusion_metrics,
    evaluate_model,
    evaluate_predictions,
    predict_image,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
