"""Pair atoms z = (x+, x-) over opposite-label points and their ground distance.

The ground distance between atoms (a+, a-) and (b+, b-) is
``|a+ - b+|_1 + |a- - b-|_1``. Atoms are enumerated row-major: positive
index outer, negative index inner, so atom ``m`` is ``(m // n_neg, m % n_neg)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import DataError, LabeledDataset

DEFAULT_ATOM_CAP = 10_000


class AtomCapExceeded(DataError):
    pass


def _ro(a) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class AtomSet:
    """All (positive, negative) pairs of a dataset.

    Stores the two class blocks once; ``x_plus``/``x_minus`` expand them per atom.
    """

    pos: np.ndarray
    neg: np.ndarray

    def __post_init__(self):
        pos, neg = _ro(self.pos), _ro(self.neg)
        if pos.ndim != 2 or neg.ndim != 2 or pos.shape[1] != neg.shape[1]:
            raise DataError("positive and negative blocks must be 2-d with equal width")
        if len(pos) == 0 or len(neg) == 0:
            raise DataError("atoms need at least one point of each label")
        object.__setattr__(self, "pos", pos)
        object.__setattr__(self, "neg", neg)

    @property
    def n_pos(self) -> int:
        return self.pos.shape[0]

    @property
    def n_neg(self) -> int:
        return self.neg.shape[0]

    @property
    def m(self) -> int:
        return self.n_pos * self.n_neg

    @property
    def dim(self) -> int:
        return self.pos.shape[1]

    @property
    def i_index(self) -> np.ndarray:
        return np.repeat(np.arange(self.n_pos), self.n_neg)

    @property
    def j_index(self) -> np.ndarray:
        return np.tile(np.arange(self.n_neg), self.n_pos)

    @property
    def x_plus(self) -> np.ndarray:
        return self.pos[self.i_index]

    @property
    def x_minus(self) -> np.ndarray:
        return self.neg[self.j_index]

    def differences(self) -> np.ndarray:
        """(M, d) array of x+ - x- per atom."""
        return (self.pos[:, None, :] - self.neg[None, :, :]).reshape(self.m, self.dim)

    def atom(self, k: int) -> tuple[np.ndarray, np.ndarray]:
        return self.pos[k // self.n_neg], self.neg[k % self.n_neg]

    def __len__(self) -> int:
        return self.m


def build_atoms(ds: LabeledDataset, cap: int | None = None) -> AtomSet:
    n_pos, n_neg = ds.class_counts()
    if n_pos == 0 or n_neg == 0:
        raise DataError("building atoms needs at least one point of each label")
    if cap is not None and n_pos * n_neg > cap:
        raise AtomCapExceeded(f"{n_pos}*{n_neg} = {n_pos * n_neg} atoms exceeds the cap of {cap}")
    return AtomSet(ds.positives, ds.negatives)


def atom_distance(a, b) -> float:
    """L1 distance of positive parts plus L1 distance of negative parts."""
    ap, am = (np.asarray(v, dtype=float) for v in a)
    bp, bm = (np.asarray(v, dtype=float) for v in b)
    if not (ap.shape == am.shape == bp.shape == bm.shape):
        raise DataError("atom dimensions differ")
    return float(np.abs(ap - bp).sum() + np.abs(am - bm).sum())


def class_distances(atoms: AtomSet) -> tuple[np.ndarray, np.ndarray]:
    """Within-class L1 distance matrices (n_pos x n_pos, n_neg x n_neg).

    The atom distance splits as ``Dpos[i, i'] + Dneg[j, j']``; training code
    works with these two blocks instead of the dense M x M matrix.
    """
    dp = np.abs(atoms.pos[:, None, :] - atoms.pos[None, :, :]).sum(axis=2)
    dn = np.abs(atoms.neg[:, None, :] - atoms.neg[None, :, :]).sum(axis=2)
    return dp, dn


def distance_matrix(atoms: AtomSet, cap: int = DEFAULT_ATOM_CAP) -> np.ndarray:
    """Dense M x M ground-distance matrix (read-only)."""
    if atoms.m > cap:
        raise AtomCapExceeded(f"{atoms.m} atoms exceeds the dense distance cap of {cap}")
    dp, dn = class_distances(atoms)
    D = (dp[:, None, :, None] + dn[None, :, None, :]).reshape(atoms.m, atoms.m)
    D.setflags(write=False)
    return D
