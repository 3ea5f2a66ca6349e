"""Linear AUC classifiers with Wasserstein distributionally robust variants."""

from .data import LabeledDataset, Scaler, load_csv
from .estimators import DAUCClassifier, DRAUCFixedClassifier, DRAUCVariableClassifier, SVMClassifier
from .experiments import GridSpec, cross_validate, relative_difference, run_benchmark, worst_k_mean
from .metrics import TiePolicy, auc_wmw, roc_curve
from .models import HyperParams, LinearModel, ModelKind, train, worst_case_distribution

__all__ = [
    "DAUCClassifier",
    "DRAUCFixedClassifier",
    "DRAUCVariableClassifier",
    "GridSpec",
    "HyperParams",
    "LabeledDataset",
    "LinearModel",
    "ModelKind",
    "SVMClassifier",
    "Scaler",
    "TiePolicy",
    "auc_wmw",
    "cross_validate",
    "load_csv",
    "relative_difference",
    "roc_curve",
    "run_benchmark",
    "train",
    "worst_case_distribution",
    "worst_k_mean",
]
