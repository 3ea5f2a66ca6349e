"""Training of the four linear classifiers and worst-case distribution analysis.

Objectives minimized (C = loss weight, M = number of pair atoms, h = pair hinge):

* ``svm``       1/2|w|^2 + C/N sum_j max(0, 1 - y_j (w.x_j + b))
* ``d_auc``     1/2|w|^2 + C/M sum_atoms h
* ``dr_auc_f``  1/2|w|^2 + C min_{lam >= 0} (1/M sum_i t_i + lam*eps),
  t_i = max_j max(h_j - lam d(i, j), 0)
* ``dr_auc_v``  1/2|w|^2 + C eps |w|_inf + C/M sum_atoms h

All four are solved with the projected subgradient method. At kinks the
first attaining index in row-major scan order is used, which keeps training
deterministic.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .data import DataError, LabeledDataset, Scaler
from .metrics import pair_hinge_losses
from .pairing import DEFAULT_ATOM_CAP, AtomSet, build_atoms, class_distances
from .solvers import LpProblem, SubgradientConfig, minimize_subgradient, solve_lp
from .solvers.subgradient import SolverError, linf_prox

MODEL_SCHEMA = "drauc.model/1"
WORST_CASE_ATOM_CAP = 200


class ModelKind(str, enum.Enum):
    SVM = "svm"
    D_AUC = "d_auc"
    DR_AUC_F = "dr_auc_f"
    DR_AUC_V = "dr_auc_v"

    @classmethod
    def parse(cls, s) -> "ModelKind":
        if isinstance(s, cls):
            return s
        key = str(s).strip().lower().replace("-", "_")
        try:
            return cls(key)
        except ValueError:
            allowed = ", ".join(k.cli_name for k in cls)
            raise ValueError(f"unknown model kind {s!r}; allowed: {allowed}") from None

    @property
    def cli_name(self) -> str:
        return self.value.replace("_", "-")

    @property
    def robust(self) -> bool:
        return self in (ModelKind.DR_AUC_F, ModelKind.DR_AUC_V)


@dataclass(frozen=True)
class HyperParams:
    c: float
    epsilon: float = 0.0

    def __post_init__(self):
        if not (np.isfinite(self.c) and self.c > 0):
            raise ValueError(f"C must be positive, got {self.c}")
        if not (np.isfinite(self.epsilon) and self.epsilon >= 0):
            raise ValueError(f"epsilon must be non-negative, got {self.epsilon}")

    def check(self, kind: ModelKind) -> None:
        if not kind.robust and self.epsilon != 0:
            raise ValueError(f"epsilon is meaningless for {kind.cli_name}; it must be 0")

    def to_dict(self) -> dict:
        return {"c": float(self.c), "epsilon": float(self.epsilon)}

    @classmethod
    def from_dict(cls, d: dict) -> "HyperParams":
        return cls(float(d["c"]), float(d.get("epsilon", 0.0)))


@dataclass(frozen=True)
class DualCertificate:
    """Feasible point (lam, t) of the dual of the worst-case transport LP."""

    lam: float
    t: np.ndarray

    def value(self, epsilon: float) -> float:
        return float(np.mean(self.t) + self.lam * epsilon)


@dataclass(frozen=True)
class TransportPlan:
    k: np.ndarray
    p: np.ndarray

    def cost(self, dist) -> float:
        return float(np.sum(np.asarray(dist) * self.k))


@dataclass(frozen=True)
class LinearModel:
    kind: ModelKind
    weights: np.ndarray
    intercept: float
    hyper: HyperParams
    training_meta: dict = field(default_factory=dict)
    scaler: Optional[Scaler] = None

    def __post_init__(self):
        w = np.array(self.weights, dtype=float).ravel()
        if not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite")
        if self.kind is not ModelKind.SVM and self.intercept != 0:
            raise ValueError("only svm models carry an intercept")
        if self.scaler is not None and self.scaler.n_features != w.size:
            raise ValueError("scaler and weights disagree on dimension")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "intercept", float(self.intercept))

    @property
    def n_features(self) -> int:
        return self.weights.size

    def decision_function(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.shape[-1] != self.n_features:
            raise DataError(f"model expects {self.n_features} features, got {X.shape[-1]}")
        if self.scaler is not None:
            X = self.scaler.transform(X)
        return X @ self.weights + self.intercept

    def with_scaler(self, scaler: Optional[Scaler]) -> "LinearModel":
        return LinearModel(self.kind, self.weights, self.intercept, self.hyper, self.training_meta, scaler)

    def to_dict(self) -> dict:
        return {
            "schema": MODEL_SCHEMA,
            "kind": self.kind.value,
            "weights": self.weights.tolist(),
            "intercept": self.intercept,
            "hyper": self.hyper.to_dict(),
            "standardizer": None if self.scaler is None else self.scaler.to_dict(),
            "training_meta": self.training_meta,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "LinearModel":
        if d.get("schema") != MODEL_SCHEMA:
            raise ValueError(f"unsupported model schema {d.get('schema')!r}")
        std = d.get("standardizer")
        return cls(
            ModelKind.parse(d["kind"]),
            np.array(d["weights"], dtype=float),
            float(d["intercept"]),
            HyperParams.from_dict(d["hyper"]),
            dict(d.get("training_meta", {})),
            None if std is None else Scaler.from_dict(std),
        )

    @classmethod
    def from_json(cls, s: str) -> "LinearModel":
        return cls.from_dict(json.loads(s))


def score(model: LinearModel, x) -> float:
    """w.x + b for one point (standardized first if the model carries a scaler)."""
    x = np.asarray(x, dtype=float)
    if x.shape != (model.n_features,):
        raise DataError(f"model expects {model.n_features} features, got shape {x.shape}")
    return float(model.decision_function(x[None, :])[0])


# objectives ---------------------------------------------------------------


def _require_both_classes(ds: LabeledDataset) -> None:
    n_pos, n_neg = ds.class_counts()
    if n_pos == 0 or n_neg == 0:
        raise DataError("training needs at least one point of each label")


def svm_objective(X, y, c):
    """Value/subgradient of the soft-margin SVM objective in x = [w, b]."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, d = X.shape

    def fun(x):
        w, b = x[:d], x[d]
        slack = 1.0 - y * (X @ w + b)
        act = slack > 0
        value = 0.5 * w @ w + c / n * slack[act].sum()
        coef = -(c / n) * y * act
        g = np.empty(d + 1)
        g[:d] = w + coef @ X
        g[d] = coef.sum()
        return value, g

    return fun


def _pair_loss_and_grad(w, pos, neg):
    """Mean pair hinge and its subgradient, O((n+ + n-) d + M)."""
    margin = 1.0 - (pos @ w)[:, None] + (neg @ w)[None, :]
    act = margin > 0
    m = margin.size
    loss = margin[act].sum() / m
    grad = -(act.sum(axis=1) @ pos - act.sum(axis=0) @ neg) / m
    return loss, grad


def d_auc_objective(atoms: AtomSet, c):
    pos, neg = atoms.pos, atoms.neg

    def fun(w):
        loss, grad = _pair_loss_and_grad(w, pos, neg)
        return 0.5 * w @ w + c * loss, w + c * grad

    return fun


def dr_auc_v_objective(atoms: AtomSet, c, epsilon):
    pos, neg = atoms.pos, atoms.neg

    def fun(w):
        loss, grad = _pair_loss_and_grad(w, pos, neg)
        g = w + c * grad
        k = int(np.argmax(np.abs(w)))
        linf = abs(w[k])
        if epsilon > 0 and linf > 0:
            g[k] += c * epsilon * np.sign(w[k])
        return 0.5 * w @ w + c * (epsilon * linf + loss), g

    return fun


def robust_pair_terms(H, lam, dpos, dneg):
    """t_i = max_j (h_j - lam d(i, j)) for every atom i, with its maximizer.

    The ground distance splits as ``dpos[a, a'] + dneg[b, b']``, so the max
    over j = (a', b') is done in two passes: over b' for every (a', b), then
    over a'. Returns ``(t, a_star, b_star)`` as (n_pos, n_neg) arrays; ties go
    to the smallest row-major j.
    """
    n_pos, n_neg = H.shape
    inner = H[:, None, :] - lam * dneg[None, :, :]  # [a', b, b']
    b_arg = inner.argmax(axis=2)  # [a', b]
    G = np.take_along_axis(inner, b_arg[:, :, None], axis=2)[:, :, 0]
    outer = G[None, :, :] - lam * dpos[:, :, None]  # [a, a', b]
    a_star = outer.argmax(axis=1)  # [a, b]
    t = np.take_along_axis(outer, a_star[:, None, :], axis=1)[:, 0, :]
    b_star = b_arg[a_star, np.arange(n_neg)[None, :]]
    return t, a_star, b_star


class FixedSupportRisk:
    """Worst-case expected pair hinge over the fixed-support ambiguity ball.

    For fixed w the dual in the multiplier,

        phi(lam) = 1/M sum_i max_j (h_j - lam d_ij) + lam eps,   lam >= 0,

    is convex and piecewise linear. Because the hinge is 1-Lipschitz in the
    atom under the ground distance, no cross-atom term can win once
    lam >= |w|_inf, so the minimizer lies in [0, |w|_inf]. It is located with
    a one-dimensional cutting-plane search, which terminates at a kink. The
    optimal transport plan (each atom's mass sent to its maximizer at the two
    ends of the final bracket, mixed to spend exactly the budget) gives the
    subgradient in w.
    """

    def __init__(self, atoms: AtomSet, epsilon: float, dists=None, tol: float = 1e-12, max_steps: int = 100):
        self.atoms = atoms
        self.epsilon = float(epsilon)
        self.dpos, self.dneg = class_distances(atoms) if dists is None else dists
        self.tol = tol
        self.max_steps = max_steps
        self.warm_width = 0.05
        self._last_lambda = None
        self._cols = np.arange(atoms.n_neg)[None, :]
        self._rows = np.arange(atoms.n_pos)[:, None]

    def hinge(self, w) -> np.ndarray:
        a = self.atoms
        return np.maximum(0.0, 1.0 - (a.pos @ w)[:, None] + (a.neg @ w)[None, :])

    def phi(self, H, lam):
        """(value, slope, a_star, b_star, moved) of phi at lam."""
        t, a_star, b_star = robust_pair_terms(H, lam, self.dpos, self.dneg)
        moved = self.dpos[self._rows, a_star] + self.dneg[self._cols, b_star]
        mean_moved = float(moved.mean())
        value = float(t.mean()) + lam * self.epsilon
        return value, self.epsilon - mean_moved, a_star, b_star, mean_moved

    def solve(self, H, w_inf: float, guess: Optional[float] = None):
        """Minimize phi over lam >= 0; returns (lam, value, plan).

        ``plan`` is a list of ``(weight, a_star, b_star)``: every atom i sends
        ``weight / M`` of mass to atom ``(a_star[i], b_star[i])``.
        """
        eps = self.epsilon
        lo = hi = None
        if guess is not None and 0 < guess < w_inf:
            # bracket around the previous minimizer first; it moves little between iterates
            a = (guess * (1 - self.warm_width),) + self.phi(H, guess * (1 - self.warm_width))
            b_lam = min(guess * (1 + self.warm_width), w_inf)
            b = (b_lam,) + self.phi(H, b_lam)
            if a[2] >= 0:
                hi = a
            else:
                lo = a
                if b[2] >= 0:
                    hi = b
                else:
                    lo = b
        if lo is None:
            lo = (0.0,) + self.phi(H, 0.0)
            if lo[2] >= 0 or w_inf == 0:
                return 0.0, lo[1], [(1.0, lo[3], lo[4])]
        if hi is None:
            hi = (w_inf,) + self.phi(H, w_inf)
            if hi[2] < 0:
                # only possible through ties at lam = |w|_inf; the right slope there is eps
                hi = (w_inf, hi[1], eps, *robust_pair_terms(H, 2.0 * w_inf + 1.0, self.dpos, self.dneg)[1:], 0.0)
        best = lo if lo[1] <= hi[1] else hi
        for _ in range(self.max_steps):
            la, fa, sa = lo[:3]
            lb, fb, sb = hi[:3]
            if sb - sa <= 0:
                break
            lam = (fb - sb * lb - fa + sa * la) / (sa - sb)
            lam = min(max(lam, la), lb)
            lower = fa + sa * (lam - la)
            if best[1] - lower <= self.tol * (1.0 + abs(best[1])):
                break
            cur = (lam,) + self.phi(H, lam)
            if cur[1] < best[1]:
                best = cur
            if cur[2] < 0:
                lo = cur
            else:
                hi = cur
            if lb - la <= 1e-15 * (1.0 + lb):
                break
        lam_star, value = best[0], best[1]
        # mix the far (lo end) and near (hi end) maximizers so the budget is met
        far, near = lo[5], hi[5]
        if far - near > 0:
            theta = min(max((eps - near) / (far - near), 0.0), 1.0)
        else:
            theta = 0.0
        plan = [(theta, lo[3], lo[4]), (1.0 - theta, hi[3], hi[4])]
        return lam_star, value, plan

    def value_and_grad(self, w):
        """Worst-case expected hinge at w, a subgradient, and the optimal lam."""
        a = self.atoms
        H = self.hinge(w)
        lam, value, plan = self.solve(H, float(np.abs(w).max(initial=0.0)), self._last_lambda)
        self._last_lambda = lam
        weight = np.zeros((a.n_pos, a.n_neg))
        for share, a_star, b_star in plan:
            if share == 0:
                continue
            live = H[a_star, b_star] > 0
            np.add.at(weight, (a_star[live], b_star[live]), share)
        grad = -(weight.sum(axis=1) @ a.pos - weight.sum(axis=0) @ a.neg) / a.m
        return value, grad, lam


def dr_auc_f_reduced(atoms: AtomSet, c, epsilon, dists=None):
    """Value/subgradient in w of 1/2|w|^2 + C * worst-case risk (lam and t eliminated)."""
    risk = FixedSupportRisk(atoms, epsilon, dists)

    def fun(w):
        value, grad, lam = risk.value_and_grad(w)
        fun.last_lambda = lam
        return 0.5 * w @ w + c * value, w + c * grad

    fun.risk = risk
    return fun


def dr_auc_f_objective(w, lam, atoms: AtomSet, dist, hyper: HyperParams):
    """Robust objective at (w, lam) using the dense distance matrix.

    Returns ``(value, DualCertificate)`` with t_i = max_j max(h_j - lam d_ij, 0).
    """
    if lam < 0:
        raise ValueError(f"lambda must be non-negative, got {lam}")
    w = np.asarray(w, dtype=float)
    h = pair_hinge_losses(w, atoms)
    D = np.asarray(dist, dtype=float)
    if D.shape != (atoms.m, atoms.m):
        raise ValueError(f"distance matrix shape {D.shape} does not match {atoms.m} atoms")
    t = np.maximum((h[None, :] - lam * D).max(axis=1), 0.0)
    cert = DualCertificate(float(lam), t)
    value = 0.5 * w @ w + hyper.c * cert.value(hyper.epsilon)
    return float(value), cert


# training -----------------------------------------------------------------


def _meta(res, cfg: SubgradientConfig, **extra) -> dict:
    meta = {
        "iterations": int(res.n_iter),
        "objective": float(res.fun),
        "stop_reason": res.stop_reason,
        "solver": cfg.to_dict(),
    }
    meta.update(extra)
    return meta


def train_svm(ds: LabeledDataset, hyper: HyperParams, cfg: SubgradientConfig = SubgradientConfig()) -> LinearModel:
    hyper.check(ModelKind.SVM)
    _require_both_classes(ds)
    d = ds.n_features
    res = minimize_subgradient(svm_objective(ds.features, ds.labels, hyper.c), d + 1, config=cfg)
    return LinearModel(ModelKind.SVM, res.x[:d], res.x[d], hyper, _meta(res, cfg))


def train_d_auc(ds: LabeledDataset, hyper: HyperParams, cfg: SubgradientConfig = SubgradientConfig()) -> LinearModel:
    hyper.check(ModelKind.D_AUC)
    _require_both_classes(ds)
    atoms = build_atoms(ds)
    res = minimize_subgradient(d_auc_objective(atoms, hyper.c), atoms.dim, config=cfg)
    return LinearModel(ModelKind.D_AUC, res.x, 0.0, hyper, _meta(res, cfg))


def train_dr_auc_f(
    ds: LabeledDataset,
    hyper: HyperParams,
    cfg: SubgradientConfig = SubgradientConfig(),
    atom_cap: int = DEFAULT_ATOM_CAP,
) -> LinearModel:
    _require_both_classes(ds)
    atoms = build_atoms(ds, cap=atom_cap)
    fun = dr_auc_f_reduced(atoms, hyper.c, hyper.epsilon)
    res = minimize_subgradient(fun, atoms.dim, config=cfg)
    w = res.x
    risk, _, lam = fun.risk.value_and_grad(w)
    return LinearModel(
        ModelKind.DR_AUC_F, w, 0.0, hyper,
        _meta(res, cfg, **{"lambda": float(lam), "certificate_value": float(risk)}),
    )


def train_dr_auc_v(ds: LabeledDataset, hyper: HyperParams, cfg: SubgradientConfig = SubgradientConfig()) -> LinearModel:
    _require_both_classes(ds)
    atoms = build_atoms(ds)
    # the max|w| term goes through its exact prox; a single-coordinate
    # subgradient for it oscillates and stalls near w = 0
    weight = hyper.c * hyper.epsilon
    smooth = d_auc_objective(atoms, hyper.c)

    def fun(w):
        v, g = smooth(w)
        return v + weight * float(np.abs(w).max()), g

    res = minimize_subgradient(fun, atoms.dim, config=cfg, prox=linf_prox(weight))
    lam = float(np.abs(res.x).max())
    return LinearModel(ModelKind.DR_AUC_V, res.x, 0.0, hyper, _meta(res, cfg, **{"lambda": lam}))


TRAINERS = {
    ModelKind.SVM: train_svm,
    ModelKind.D_AUC: train_d_auc,
    ModelKind.DR_AUC_F: train_dr_auc_f,
    ModelKind.DR_AUC_V: train_dr_auc_v,
}


def train(kind, ds: LabeledDataset, hyper: HyperParams, cfg: SubgradientConfig = SubgradientConfig()) -> LinearModel:
    kind = ModelKind.parse(kind)
    hyper.check(kind)
    return TRAINERS[kind](ds, hyper, cfg)


def training_objective(kind, w, b, ds: LabeledDataset, hyper: HyperParams) -> float:
    """Objective of ``kind`` at a given point (lam minimized out for dr_auc_f)."""
    kind = ModelKind.parse(kind)
    w = np.asarray(w, dtype=float)
    if kind is ModelKind.SVM:
        return float(svm_objective(ds.features, ds.labels, hyper.c)(np.append(w, b))[0])
    atoms = build_atoms(ds)
    if kind is ModelKind.D_AUC:
        fun = d_auc_objective(atoms, hyper.c)
    elif kind is ModelKind.DR_AUC_V:
        fun = dr_auc_v_objective(atoms, hyper.c, hyper.epsilon)
    else:
        fun = dr_auc_f_reduced(atoms, hyper.c, hyper.epsilon)
    return float(fun(w)[0])


# worst-case distribution ---------------------------------------------------


def transport_lp(h, dist, epsilon) -> LpProblem:
    """max sum_ij h_j K_ij s.t. sum_j K_ij = 1/M, sum_ij d_ij K_ij <= eps, K >= 0."""
    h = np.asarray(h, dtype=float)
    D = np.asarray(dist, dtype=float)
    m = h.size
    c = np.tile(h, m)  # K flattened row-major: index i*M + j
    A = np.zeros((m + 1, m * m))
    for i in range(m):
        A[i, i * m:(i + 1) * m] = 1.0
    A[m] = D.ravel()
    b = np.r_[np.full(m, 1.0 / m), epsilon]
    return LpProblem(c, A, b, ["="] * m + ["<="], maximize=True)


def transport_dual_lp(h, dist, epsilon) -> LpProblem:
    """min (1/M) sum t_i + lam eps s.t. t_i + lam d_ij >= h_j, lam >= 0, t free.

    Variables ordered [t_1..t_M, lam].
    """
    h = np.asarray(h, dtype=float)
    D = np.asarray(dist, dtype=float)
    m = h.size
    c = np.r_[np.full(m, 1.0 / m), epsilon]
    A = np.zeros((m * m, m + 1))
    for i in range(m):
        A[i * m:(i + 1) * m, i] = -1.0
        A[i * m:(i + 1) * m, m] = -D[i]
    b = -np.tile(h, m)
    lower = np.r_[np.full(m, -np.inf), 0.0]
    return LpProblem(c, A, b, ["<="] * (m * m), lower=lower)


def worst_case_distribution(w, atoms: AtomSet, dist, epsilon: float, cap: int = WORST_CASE_ATOM_CAP):
    """Solve the inner transport LP exactly; returns ``(TransportPlan, value)``."""
    if epsilon < 0:
        raise ValueError("epsilon must be non-negative")
    if atoms.m > cap:
        raise DataError(f"{atoms.m} atoms exceeds the worst-case analysis cap of {cap}")
    h = pair_hinge_losses(w, atoms)
    sol = solve_lp(transport_lp(h, dist, epsilon))
    if sol.status != "optimal":
        raise SolverError(f"transport LP failed: {sol.status} {sol.residuals}")
    m = atoms.m
    K = np.maximum(sol.x.reshape(m, m), 0.0)
    p = K.sum(axis=0)
    return TransportPlan(K, p), float(h @ p)


def worst_case_dual(w, atoms: AtomSet, dist, epsilon: float):
    """Solve the dual transport LP; returns ``(DualCertificate, value)``."""
    h = pair_hinge_losses(w, atoms)
    sol = solve_lp(transport_dual_lp(h, dist, epsilon))
    if sol.status != "optimal":
        raise SolverError(f"dual transport LP failed: {sol.status} {sol.residuals}")
    m = atoms.m
    return DualCertificate(float(sol.x[m]), sol.x[:m].copy()), float(sol.value)
