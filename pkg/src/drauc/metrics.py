"""AUC (Wilcoxon-Mann-Whitney form), ROC curves and pairwise hinge risks."""

from __future__ import annotations

import enum
import io
from dataclasses import dataclass

import numpy as np

from .pairing import AtomSet


class TiePolicy(str, enum.Enum):
    """Credit given to a (positive, negative) pair with equal scores.

    ``COUNT_AS_SUCCESS`` counts ``f(x+) >= f(x-)`` as a success (the default);
    ``HALF_CREDIT`` is the usual Mann-Whitney convention.
    """

    COUNT_AS_SUCCESS = "count_as_success"
    HALF_CREDIT = "half_credit"

    @property
    def tie_weight(self) -> float:
        return 1.0 if self is TiePolicy.COUNT_AS_SUCCESS else 0.5


def _scores(v, what):
    v = np.asarray(v, dtype=float).ravel()
    if v.size == 0:
        raise ValueError(f"{what} scores are empty")
    if not np.all(np.isfinite(v)):
        raise ValueError(f"{what} scores contain non-finite values")
    return v


def auc_wmw(pos_scores, neg_scores, policy: TiePolicy | str = TiePolicy.COUNT_AS_SUCCESS) -> float:
    """Fraction of (positive, negative) pairs ranked correctly.

    O((n+ + n-) log n-) via binary search into the sorted negative scores.
    """
    policy = TiePolicy(policy)
    pos = _scores(pos_scores, "positive")
    neg = np.sort(_scores(neg_scores, "negative"))
    below = np.searchsorted(neg, pos, side="left")
    at_or_below = np.searchsorted(neg, pos, side="right")
    n_gt = int(below.sum())
    n_eq = int((at_or_below - below).sum())
    return (n_gt + policy.tie_weight * n_eq) / (pos.size * neg.size)


def auc_from_labels(scores, labels, policy: TiePolicy | str = TiePolicy.COUNT_AS_SUCCESS) -> float:
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels)
    return auc_wmw(scores[labels == 1], scores[labels == -1], policy)


@dataclass(frozen=True)
class RocCurve:
    fpr: np.ndarray
    tpr: np.ndarray
    thresholds: np.ndarray

    @property
    def points(self) -> list[tuple[float, float]]:
        return list(zip(self.fpr.tolist(), self.tpr.tolist()))

    def area(self) -> float:
        """Trapezoidal area under the curve."""
        return float(np.sum(np.diff(self.fpr) * (self.tpr[1:] + self.tpr[:-1]) / 2.0))

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("fpr,tpr\n")
        for f, t in zip(self.fpr, self.tpr):
            buf.write(f"{float(f)!r},{float(t)!r}\n")
        return buf.getvalue()


def roc_curve(scores, labels) -> RocCurve:
    """ROC points, one per distinct score threshold, from (0, 0) to (1, 1).

    Tied scores form a single step. ``thresholds[0]`` is +inf (nothing
    predicted positive).
    """
    scores = np.asarray(scores, dtype=float).ravel()
    labels = np.asarray(labels).ravel()
    if scores.shape != labels.shape:
        raise ValueError("scores and labels differ in length")
    if not np.all(np.isfinite(scores)):
        raise ValueError("scores contain non-finite values")
    is_pos = labels == 1
    n_pos = int(is_pos.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("ROC curve needs both classes present")
    order = np.argsort(-scores, kind="stable")
    s = scores[order]
    p = is_pos[order]
    tp = np.cumsum(p)
    fp = np.cumsum(~p)
    # last index of each run of equal scores
    ends = np.flatnonzero(np.r_[s[1:] != s[:-1], True])
    fpr = np.r_[0.0, fp[ends] / n_neg]
    tpr = np.r_[0.0, tp[ends] / n_pos]
    thresholds = np.r_[np.inf, s[ends]]
    return RocCurve(fpr, tpr, thresholds)


def hinge_pair_loss(w, atom) -> float:
    """max(0, 1 - (w.x+ - w.x-)) for a single atom ``(x+, x-)``."""
    w = np.asarray(w, dtype=float)
    xp, xm = (np.asarray(v, dtype=float) for v in atom)
    if not (w.shape == xp.shape == xm.shape):
        raise ValueError("dimension mismatch between weights and atom")
    return max(0.0, 1.0 - float(w @ xp - w @ xm))


def pair_hinge_losses(w, atoms: AtomSet) -> np.ndarray:
    """Hinge loss of every atom, row-major, as a flat length-M array."""
    w = np.asarray(w, dtype=float)
    if w.shape != (atoms.dim,):
        raise ValueError(f"weights have shape {w.shape}, atoms have dimension {atoms.dim}")
    margin = (atoms.pos @ w)[:, None] - (atoms.neg @ w)[None, :]
    return np.maximum(0.0, 1.0 - margin).ravel()


def empirical_pair_risk(w, atoms: AtomSet) -> float:
    return float(pair_hinge_losses(w, atoms).mean())
