from app.services.svm.kernels import KernelKindEnum, KernelSpec, kernel_matrix
from app.services.svm.dataset import (
    LabeledDataset,
    Standardizer,
    ZeroVarianceFeatureError,
    standardize_apply,
    standardize_fit,
)
from app.services.svm.smo import (
    FeatureMismatchError,
    SingleClassError,
    SvmModel,
    decision_function,
    predict,
    predict_many,
    train_svm,
)
from app.services.svm.validation import (
    CvReport,
    GridSearchFailedError,
    KTooLargeError,
    ParameterGrid,
    cross_validate,
    grid_search_cv,
    kfold_split,
    log2_grid,
)

__all__ = [
    "KernelKindEnum",
    "KernelSpec",
    "kernel_matrix",
    "LabeledDataset",
    "Standardizer",
    "ZeroVarianceFeatureError",
    "standardize_apply",
    "standardize_fit",
    "FeatureMismatchError",
    "SingleClassError",
    "SvmModel",
    "decision_function",
    "predict",
    "predict_many",
    "train_svm",
    "CvReport",
    "GridSearchFailedError",
    "KTooLargeError",
    "ParameterGrid",
    "cross_validate",
    "grid_search_cv",
    "kfold_split",
    "log2_grid",
]
