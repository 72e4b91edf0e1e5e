"""Face verification with boosted cross-image rectangle features."""

__version__ = "0.1.0"

from .boosting import (
    BankMismatchError,
    DiscreteAdaBoost,
    ModelFormatError,
    StrongClassifier,
    WeakClassifier,
    adaboost_train,
    load_model,
    save_model,
    score,
    train_stump,
)
from .config import RunConfig
from .evaluation import PairManifest, RocCurve, build_pairs, read_manifest, roc
from .features import (
    CrossImageFeatures,
    FeatureBank,
    FeatureDescriptor,
    FeatureKind,
    PairIntegrals,
    Quantization,
    extract_all,
    extract_batch,
    generate_bank,
    haar_value,
    make_pair_integrals,
    ncc_value,
)
from .image import GrayImage, ImageFormatError, IntegralImage, Rect, box_sum, integral, load_image, resize_bilinear

__all__ = [
    "BankMismatchError",
    "CrossImageFeatures",
    "DiscreteAdaBoost",
    "FeatureBank",
    "FeatureDescriptor",
    "FeatureKind",
    "GrayImage",
    "ImageFormatError",
    "IntegralImage",
    "ModelFormatError",
    "PairIntegrals",
    "PairManifest",
    "Quantization",
    "Rect",
    "RocCurve",
    "RunConfig",
    "StrongClassifier",
    "WeakClassifier",
    "adaboost_train",
    "box_sum",
    "build_pairs",
    "extract_all",
    "extract_batch",
    "generate_bank",
    "haar_value",
    "integral",
    "load_image",
    "load_model",
    "make_pair_integrals",
    "ncc_value",
    "read_manifest",
    "resize_bilinear",
    "roc",
    "save_model",
    "score",
    "train_stump",
]
