"""Exact constrained formulations of the four training problems.

These are solved with the dense QP solver and serve as reference values for
the subgradient-trained models on small instances. Each function returns
``(objective, w, extra)``.
"""

from __future__ import annotations

import numpy as np

from .data import LabeledDataset
from .models import HyperParams
from .pairing import AtomSet, build_atoms, distance_matrix
from .solvers import solve_qp


def _quad(d, n_total):
    Q = np.zeros((n_total, n_total))
    Q[:d, :d] = np.eye(d)
    return Q


def svm_qp(ds: LabeledDataset, hyper: HyperParams):
    """Variables [w (d), b, xi (N)]; xi_j >= 1 - y_j (w.x_j + b), xi >= 0."""
    X, y = ds.features, ds.labels.astype(float)
    n, d = X.shape
    nv = d + 1 + n
    c = np.zeros(nv)
    c[d + 1:] = hyper.c / n
    A = np.zeros((2 * n, nv))
    A[:n, :d] = -y[:, None] * X
    A[:n, d] = -y
    A[:n, d + 1:] = -np.eye(n)
    A[n:, d + 1:] = -np.eye(n)
    b = np.r_[-np.ones(n), np.zeros(n)]
    sol = solve_qp(_quad(d, nv), c, A, b)
    return sol.value, sol.x[:d], {"intercept": float(sol.x[d])}


def d_auc_qp(atoms: AtomSet, hyper: HyperParams):
    """Variables [w, xi (M)]; xi_ij >= 1 - w.(x+_i - x-_j), xi >= 0."""
    d, m = atoms.dim, atoms.m
    diff = atoms.differences()
    nv = d + m
    c = np.r_[np.zeros(d), np.full(m, hyper.c / m)]
    A = np.zeros((2 * m, nv))
    A[:m, :d] = -diff
    A[:m, d:] = -np.eye(m)
    A[m:, d:] = -np.eye(m)
    b = np.r_[-np.ones(m), np.zeros(m)]
    sol = solve_qp(_quad(d, nv), c, A, b)
    return sol.value, sol.x[:d], {}


def dr_auc_f_qp(atoms: AtomSet, hyper: HyperParams, dist=None):
    """Variables [w, lam, t (M)] with all 2 M^2 + 1 constraints written out:

    t_i + lam d_ij >= 1 - w.(x+_j - x-_j),  t_i + lam d_ij >= 0,  lam >= 0.
    """
    d, m = atoms.dim, atoms.m
    D = distance_matrix(atoms) if dist is None else np.asarray(dist)
    diff = atoms.differences()
    nv = d + 1 + m
    c = np.zeros(nv)
    c[d] = hyper.c * hyper.epsilon
    c[d + 1:] = hyper.c / m
    rows = m * m
    A = np.zeros((2 * rows + 1, nv))
    b = np.zeros(2 * rows + 1)
    for i in range(m):
        blk = slice(i * m, (i + 1) * m)
        # -t_i - lam d_ij - w.(x+_j - x-_j) <= -1
        A[blk, :d] = -diff
        A[blk, d] = -D[i]
        A[blk, d + 1 + i] = -1.0
        b[blk] = -1.0
        blk2 = slice(rows + i * m, rows + (i + 1) * m)
        A[blk2, d] = -D[i]
        A[blk2, d + 1 + i] = -1.0
    A[-1, d] = -1.0
    sol = solve_qp(_quad(d, nv), c, A, b)
    return sol.value, sol.x[:d], {"lambda": float(sol.x[d]), "t": sol.x[d + 1:].copy()}


def dr_auc_v_qp(atoms: AtomSet, hyper: HyperParams):
    """Variables [w, lam, t (M)]; t_i >= 1 - w.(x+_i - x-_i), t >= 0, |w|_inf <= lam."""
    d, m = atoms.dim, atoms.m
    diff = atoms.differences()
    nv = d + 1 + m
    c = np.zeros(nv)
    c[d] = hyper.c * hyper.epsilon
    c[d + 1:] = hyper.c / m
    A = np.zeros((2 * m + 2 * d + 1, nv))
    b = np.zeros(2 * m + 2 * d + 1)
    A[:m, :d] = -diff
    A[:m, d + 1:] = -np.eye(m)
    b[:m] = -1.0
    A[m:2 * m, d + 1:] = -np.eye(m)
    r = 2 * m
    A[r:r + d, :d] = np.eye(d)
    A[r:r + d, d] = -1.0
    A[r + d:r + 2 * d, :d] = -np.eye(d)
    A[r + d:r + 2 * d, d] = -1.0
    A[-1, d] = -1.0
    sol = solve_qp(_quad(d, nv), c, A, b)
    return sol.value, sol.x[:d], {"lambda": float(sol.x[d])}


def reference_objective(kind, ds: LabeledDataset, hyper: HyperParams):
    from .models import ModelKind

    kind = ModelKind.parse(kind)
    if kind is ModelKind.SVM:
        return svm_qp(ds, hyper)
    atoms = build_atoms(ds)
    if kind is ModelKind.D_AUC:
        return d_auc_qp(atoms, hyper)
    if kind is ModelKind.DR_AUC_F:
        return dr_auc_f_qp(atoms, hyper)
    return dr_auc_v_qp(atoms, hyper)
