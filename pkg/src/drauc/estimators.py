"""scikit-learn compatible wrappers around the four trainers.

The estimators accept any binary labels; the larger of the two sorted
classes is treated as positive, as in scikit-learn's binary classifiers.
``score`` returns AUC rather than accuracy, since that is what the models
optimize.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.multiclass import type_of_target, unique_labels
from sklearn.utils.validation import check_is_fitted, validate_data

from .data import LabeledDataset, Scaler, apply_standardizer, fit_standardizer
from .metrics import TiePolicy, auc_from_labels
from .models import HyperParams, ModelKind, train
from .solvers import SubgradientConfig


class _LinearAUCBase(ClassifierMixin, BaseEstimator):
    _kind: ModelKind

    def __sklearn_tags__(self):
        tags = super().__sklearn_tags__()
        tags.classifier_tags.multi_class = False
        return tags

    def _hyper(self) -> HyperParams:
        return HyperParams(float(self.C), float(getattr(self, "epsilon", 0.0)))

    def _config(self) -> SubgradientConfig:
        return SubgradientConfig(
            max_iterations=int(self.max_iter),
            initial_step=float(self.initial_step),
            relative_tolerance=float(self.tol),
            patience=int(self.patience),
        )

    def fit(self, X, y):
        """Train on ``X`` (n_samples, n_features) with binary labels ``y``."""
        X, y = validate_data(self, X, y, dtype=np.float64, ensure_min_samples=2)
        y_type = type_of_target(y, input_name="y", raise_unknown=True)
        if y_type != "binary":
            raise ValueError(f"Only binary classification is supported. The type of the target is {y_type}.")
        self.classes_ = unique_labels(y)
        if self.classes_.size != 2:
            raise ValueError(f"{type(self).__name__} needs exactly 2 classes, got {self.classes_.size}")
        hyper = self._hyper()
        hyper.check(self._kind)
        labels = np.where(y == self.classes_[1], 1, -1)
        ds = LabeledDataset(X, labels)
        scaler = fit_standardizer(ds) if self.standardize else None
        if scaler is not None:
            ds = apply_standardizer(scaler, ds)
        self.model_ = train(self._kind, ds, hyper, self._config()).with_scaler(scaler)
        self.n_iter_ = self.model_.training_meta["iterations"]
        self.objective_ = self.model_.training_meta["objective"]
        # fold the scaler into raw-feature coefficients
        sc = scaler or Scaler.identity(X.shape[1])
        w = self.model_.weights / sc.scale
        self.coef_ = w[None, :]
        self.intercept_ = np.array([self.model_.intercept - w @ sc.shift])
        return self

    def decision_function(self, X):
        check_is_fitted(self)
        X = validate_data(self, X, dtype=np.float64, reset=False)
        return self.model_.decision_function(X)

    def predict(self, X):
        check_is_fitted(self)
        return self.classes_[(self.decision_function(X) > 0).astype(int)]

    def score(self, X, y, sample_weight=None):
        """AUC of the decision function on (X, y), ties given half credit.

        Half credit keeps a constant scorer (w = 0) at 0.5 instead of 1.
        """
        if sample_weight is not None:
            raise ValueError("sample weights are not supported")
        y = np.asarray(y)
        labels = np.where(y == self.classes_[1], 1, -1)
        return auc_from_labels(self.decision_function(X), labels, TiePolicy.HALF_CREDIT)


class SVMClassifier(_LinearAUCBase):
    """Soft-margin linear SVM with hinge loss averaged over the samples.

    Parameters
    ----------
    C : float
        Loss weight.
    standardize : bool
        Z-score features using training statistics before fitting.
    max_iter, initial_step, tol, patience
        Subgradient solver settings.
    """

    _kind = ModelKind.SVM

    def __init__(self, C=1.0, standardize=True, max_iter=20_000, initial_step=0.1, tol=1e-6, patience=200):
        self.C = C
        self.standardize = standardize
        self.max_iter = max_iter
        self.initial_step = initial_step
        self.tol = tol
        self.patience = patience


class DAUCClassifier(_LinearAUCBase):
    """Pairwise hinge AUC maximizer (ranking SVM without intercept)."""

    _kind = ModelKind.D_AUC

    def __init__(self, C=1.0, standardize=True, max_iter=20_000, initial_step=0.1, tol=1e-6, patience=200):
        self.C = C
        self.standardize = standardize
        self.max_iter = max_iter
        self.initial_step = initial_step
        self.tol = tol
        self.patience = patience


class _RobustBase(_LinearAUCBase):
    def __init__(
        self, C=1.0, epsilon=0.1, standardize=True, max_iter=20_000, initial_step=0.1, tol=1e-6, patience=200
    ):
        self.C = C
        self.epsilon = epsilon
        self.standardize = standardize
        self.max_iter = max_iter
        self.initial_step = initial_step
        self.tol = tol
        self.patience = patience


class DRAUCFixedClassifier(_RobustBase):
    """Robust AUC maximizer over a transport ball that keeps the training pairs as support.

    Parameters
    ----------
    C : float
        Loss weight.
    epsilon : float
        Radius of the ambiguity ball, in units of the pair ground distance
        (L1 on the positive parts plus L1 on the negative parts, measured
        after standardization when ``standardize`` is on).

    Attributes
    ----------
    model_ : LinearModel
    coef_, intercept_ : ndarray
        Weights expressed on the raw features.
    """

    _kind = ModelKind.DR_AUC_F


class DRAUCVariableClassifier(_RobustBase):
    """Robust AUC maximizer over a transport ball with free support.

    Equivalent to the pairwise hinge objective plus ``C * epsilon * max|w_k|``.
    """

    _kind = ModelKind.DR_AUC_V


ESTIMATORS = {
    ModelKind.SVM: SVMClassifier,
    ModelKind.D_AUC: DAUCClassifier,
    ModelKind.DR_AUC_F: DRAUCFixedClassifier,
    ModelKind.DR_AUC_V: DRAUCVariableClassifier,
}
