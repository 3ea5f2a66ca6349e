"""Projected (or proximal) subgradient method with diminishing steps and best-iterate tracking."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Callable, Optional

import numpy as np


class SolverError(RuntimeError):
    pass


@dataclass(frozen=True)
class SubgradientConfig:
    """Step size at iteration k (1-based) is ``initial_step / sqrt(k)``.

    Stops once the best objective value has improved by less than
    ``relative_tolerance`` (relative) over the last ``patience`` iterations,
    or after ``max_iterations``.
    """

    max_iterations: int = 20_000
    initial_step: float = 0.1
    step_rule: str = "inverse_sqrt"
    relative_tolerance: float = 1e-6
    patience: int = 200

    def __post_init__(self):
        if self.step_rule != "inverse_sqrt":
            raise ValueError(f"unknown step rule {self.step_rule!r}")
        for name in ("max_iterations", "initial_step", "relative_tolerance", "patience"):
            v = getattr(self, name)
            if not v > 0:
                raise ValueError(f"{name} must be positive, got {v}")
        if int(self.max_iterations) != self.max_iterations or int(self.patience) != self.patience:
            raise ValueError("max_iterations and patience must be integers")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "SubgradientConfig":
        return cls(**d)


@dataclass
class SubgradientResult:
    x: np.ndarray
    fun: float
    n_iter: int
    stop_reason: str
    best_values: np.ndarray = field(repr=False)

    def __iter__(self):
        yield self.x
        yield self.fun


ObjectiveFn = Callable[[np.ndarray], tuple[float, np.ndarray]]
ProjectionFn = Callable[[np.ndarray], np.ndarray]
ProxFn = Callable[[np.ndarray, float], np.ndarray]


def minimize_subgradient(
    fun: ObjectiveFn,
    dim: int,
    projection: Optional[ProjectionFn] = None,
    config: SubgradientConfig = SubgradientConfig(),
    x0=None,
    prox: Optional[ProxFn] = None,
) -> SubgradientResult:
    """Minimize a convex function given ``fun(x) -> (value, subgradient)``.

    Iterates ``x <- P(x - eta_k g)``; returns the best point visited, not the
    last one. With ``prox``, the objective is split as ``f + r``: ``fun``
    returns the full value and a subgradient of ``f`` only, and the step is
    ``x <- prox(x - eta_k g, eta_k)``, the proximal map of ``eta_k * r``.
    """
    if projection is not None and prox is not None:
        raise ValueError("give either projection or prox, not both")
    x = np.zeros(dim) if x0 is None else np.array(x0, dtype=float)
    if x.shape != (dim,):
        raise ValueError(f"x0 has shape {x.shape}, expected ({dim},)")
    if projection is not None:
        x = projection(x)

    n_max = int(config.max_iterations)
    patience = int(config.patience)
    rtol = config.relative_tolerance
    eta0 = config.initial_step

    best_x = x.copy()
    best_f = np.inf
    best_values = np.empty(n_max)
    stop = "max_iterations"
    k = 0
    for k in range(1, n_max + 1):
        f, g = fun(x)
        f = float(f)
        if not np.isfinite(f) or not np.all(np.isfinite(g)):
            raise SolverError(f"non-finite objective or subgradient at iteration {k}")
        if f < best_f:
            best_f = f
            best_x = x.copy()
        best_values[k - 1] = best_f
        if k > patience:
            prev = best_values[k - 1 - patience]
            if prev - best_f <= rtol * max(abs(prev), np.finfo(float).tiny):
                stop = "tolerance"
                break
        eta = eta0 / np.sqrt(k)
        x = x - eta * np.asarray(g, dtype=float)
        if projection is not None:
            x = projection(x)
        elif prox is not None:
            x = prox(x, eta)
    return SubgradientResult(best_x, best_f, k, stop, best_values[:k].copy())


def nonnegative_tail(n_free: int) -> ProjectionFn:
    """Projection clamping coordinates ``n_free:`` at zero from below."""

    def project(x):
        x = x.copy()
        np.maximum(x[n_free:], 0.0, out=x[n_free:])
        return x

    return project


def project_l1_ball(v: np.ndarray, radius: float) -> np.ndarray:
    """Euclidean projection of ``v`` onto ``{u : |u|_1 <= radius}`` (sort-based)."""
    a = np.abs(v)
    if a.sum() <= radius:
        return v.copy()
    mu = np.sort(a)[::-1]
    css = np.cumsum(mu)
    j = np.arange(1, a.size + 1)
    rho = np.flatnonzero(mu - (css - radius) / j > 0)[-1]
    theta = (css[rho] - radius) / (rho + 1)
    return np.sign(v) * np.maximum(a - theta, 0.0)


def linf_prox(weight: float) -> ProxFn:
    """Proximal map of ``weight * |x|_inf``; by Moreau, ``v - P_{tB1}(v)`` with ``t = step * weight``."""

    def prox(v, step):
        t = step * weight
        if t <= 0:
            return v.copy()
        return v - project_l1_ball(v, t)

    return prox
