import itertools

import numpy as np
import pytest

from drauc.models import transport_dual_lp, transport_lp
from drauc.solvers import (
    LpProblem,
    NotPositiveSemidefinite,
    SolverError,
    SubgradientConfig,
    minimize_subgradient,
    solve_lp,
    solve_qp,
)
from drauc.solvers.qp import QpInfeasible
from drauc.solvers.subgradient import linf_prox, nonnegative_tail, project_l1_ball

# subgradient -----------------------------------------------------------------------


def test_subgradient_abs():
    res = minimize_subgradient(lambda x: (abs(x[0]), np.sign(x)), 1, x0=[5.0])
    assert abs(res.x[0]) < 1e-3


def test_subgradient_quadratic():
    res = minimize_subgradient(lambda x: (0.5 * x @ x, x.copy()), 3, x0=[1.0, -2.0, 3.0])
    assert np.abs(res.x).max() < 1e-4


def test_subgradient_hinge_plus_ridge():
    def f(x):
        w = x[0]
        return 0.5 * w * w + max(0.0, 1 - w), np.array([w - (1.0 if w < 1 else 0.0)])

    res = minimize_subgradient(f, 1)
    assert abs(res.x[0] - 1.0) < 1e-3
    assert abs(res.fun - 0.5) < 1e-4


def test_best_values_non_increasing_and_best_iterate_returned():
    calls = []

    def f(x):
        v = abs(x[0] - 0.3) + abs(x[1])
        calls.append(v)
        return v, np.array([np.sign(x[0] - 0.3), np.sign(x[1])])

    res = minimize_subgradient(f, 2, x0=[2.0, -1.0], config=SubgradientConfig(max_iterations=300))
    assert np.all(np.diff(res.best_values) <= 0)
    assert res.fun == min(calls)
    assert f(res.x)[0] == res.fun


def test_subgradient_projection():
    res = minimize_subgradient(lambda x: (0.5 * (x[0] + 1) ** 2, np.array([x[0] + 1])), 1, projection=nonnegative_tail(0))
    assert res.x[0] == 0.0


def test_l1_projection_examples():
    assert project_l1_ball(np.array([0.2, -0.3]), 1.0).tolist() == [0.2, -0.3]
    np.testing.assert_allclose(project_l1_ball(np.array([3.0, -1.0]), 1.0), [1.0, 0.0])
    np.testing.assert_allclose(project_l1_ball(np.array([2.0, -2.0, 0.5]), 2.0), [1.0, -1.0, 0.0])


@pytest.mark.parametrize("seed", range(5))
def test_l1_projection_is_closest_point(seed):
    rng = np.random.default_rng(seed)
    v = rng.normal(size=6) * 3
    p = project_l1_ball(v, 1.5)
    assert np.abs(p).sum() <= 1.5 + 1e-12
    # variational inequality: (v - p).(u - p) <= 0 for every u in the ball
    for _ in range(200):
        u = rng.normal(size=6)
        u *= rng.uniform(0, 1.5) / np.abs(u).sum()
        assert (v - p) @ (u - p) <= 1e-10


@pytest.mark.parametrize("seed", range(5))
def test_linf_prox_minimizes_its_model(seed):
    rng = np.random.default_rng(seed)
    v = rng.normal(size=4)
    x = linf_prox(2.0)(v, 0.3)
    model = lambda z: 0.5 * (z - v) @ (z - v) + 0.6 * np.abs(z).max()
    for _ in range(300):
        assert model(x) <= model(x + rng.normal(size=4) * rng.uniform(0, 0.5)) + 1e-12


def test_prox_step_reaches_kinked_optimum():
    # min 0.5|x|^2 - g.x + 2|x|_inf: both coordinates tie at 2.75, value -7.5625
    g = np.array([4.0, 3.5])
    f = lambda x: (0.5 * x @ x - g @ x + 2 * np.abs(x).max(), x - g)
    res = minimize_subgradient(f, 2, prox=linf_prox(2.0))
    np.testing.assert_allclose(res.x, [2.75, 2.75], atol=5e-3)
    assert res.fun == pytest.approx(-7.5625, abs=1e-5)
    with pytest.raises(ValueError):
        minimize_subgradient(f, 2, projection=lambda x: x, prox=linf_prox(1.0))


def test_subgradient_rejects_non_finite():
    with pytest.raises(SolverError):
        minimize_subgradient(lambda x: (np.nan, x), 1)
    with pytest.raises(SolverError):
        minimize_subgradient(lambda x: (1.0, np.array([np.inf])), 1)


def test_subgradient_deterministic():
    f = lambda x: (np.abs(x).sum() + 0.1 * x @ x, np.sign(x) + 0.2 * x)
    a = minimize_subgradient(f, 4, x0=[1, 2, 3, 4])
    b = minimize_subgradient(f, 4, x0=[1, 2, 3, 4])
    assert a.x.tobytes() == b.x.tobytes() and a.n_iter == b.n_iter


def test_config_validation():
    with pytest.raises(ValueError):
        SubgradientConfig(initial_step=0)
    with pytest.raises(ValueError):
        SubgradientConfig(step_rule="constant")
    with pytest.raises(ValueError):
        SubgradientConfig(patience=1.5)
    cfg = SubgradientConfig(max_iterations=10)
    assert SubgradientConfig.from_dict(cfg.to_dict()) == cfg


def test_max_iterations_stop():
    res = minimize_subgradient(lambda x: (abs(x[0]), np.sign(x)), 1, x0=[100.0], config=SubgradientConfig(max_iterations=5))
    assert res.n_iter == 5 and res.stop_reason == "max_iterations"


# LP --------------------------------------------------------------------------------


def test_lp_max_bounded():
    sol = solve_lp(LpProblem([1.0], [[1.0]], [1.0], ["<="], maximize=True))
    assert sol.status == "optimal"
    assert sol.x[0] == pytest.approx(1.0) and sol.value == pytest.approx(1.0)


def test_lp_unbounded():
    sol = solve_lp(LpProblem([1.0], np.zeros((0, 1)), [], [], maximize=True))
    assert sol.status == "unbounded"


def test_lp_infeasible():
    sol = solve_lp(LpProblem([1.0], [[1.0], [-1.0]], [1.0, -2.0], ["<=", "<="]))
    assert sol.status == "infeasible"


def test_lp_free_variable_and_equalities():
    # min x + y s.t. x - y = 1, y >= -3 (x free)
    sol = solve_lp(LpProblem([1.0, 1.0], [[1.0, -1.0]], [1.0], ["="], lower=[-np.inf, -3.0]))
    assert sol.status == "optimal"
    assert sol.x == pytest.approx([-2.0, -3.0]) and sol.value == pytest.approx(-5.0)


def test_lp_validation():
    with pytest.raises(ValueError):
        LpProblem([1.0, 2.0], [[1.0]], [1.0], ["<="])
    with pytest.raises(ValueError):
        LpProblem([1.0], [[1.0]], [1.0], [">="])
    with pytest.raises(ValueError):
        LpProblem([np.nan], [[1.0]], [1.0], ["<="])


def _vertex_enumeration(c, A_eq, b_eq, a_ub, b_ub):
    """max c.x over {A_eq x = b_eq, a_ub.x + s = b_ub, x, s >= 0} by trying every basis."""
    m_eq, n = A_eq.shape
    A = np.zeros((m_eq + 1, n + 1))
    A[:m_eq, :n] = A_eq
    A[m_eq, :n] = a_ub
    A[m_eq, n] = 1.0
    b = np.r_[b_eq, b_ub]
    cc = np.r_[c, 0.0]
    best = -np.inf
    for cols in itertools.combinations(range(n + 1), m_eq + 1):
        B = A[:, cols]
        if abs(np.linalg.det(B)) < 1e-12:
            continue
        xb = np.linalg.solve(B, b)
        if np.all(xb >= -1e-10):
            best = max(best, cc[list(cols)] @ xb)
    return best


@pytest.mark.parametrize("seed", range(10))
def test_transport_lp_matches_vertex_enumeration(seed):
    rng = np.random.default_rng(seed)
    m = 3
    pts = rng.normal(size=(m, 2))
    D = np.abs(pts[:, None, :] - pts[None, :, :]).sum(axis=2)
    h = rng.uniform(0, 2, m)
    eps = rng.uniform(0, D.max())
    prob = transport_lp(h, D, eps)
    sol = solve_lp(prob)
    assert sol.status == "optimal"
    oracle = _vertex_enumeration(prob.c, prob.A[:m], prob.b[:m], prob.A[m], prob.b[m])
    assert sol.value == pytest.approx(oracle, abs=1e-9)


@pytest.mark.parametrize("seed", range(20))
def test_lp_weak_duality_and_kkt(seed):
    rng = np.random.default_rng(100 + seed)
    m = int(rng.integers(2, 5))
    pts = rng.normal(size=(m, 3))
    D = np.abs(pts[:, None, :] - pts[None, :, :]).sum(axis=2)
    h = np.maximum(rng.normal(1, 1, m), 0)
    eps = rng.uniform(0, 2 * D.max())
    primal = solve_lp(transport_lp(h, D, eps))
    dual = solve_lp(transport_dual_lp(h, D, eps))
    assert primal.status == dual.status == "optimal"
    assert primal.value <= dual.value + 1e-8
    for sol in (primal, dual):
        assert max(sol.residuals.values()) <= 1e-8 * (1 + np.abs(D).max())
        assert sol.value == pytest.approx(sol.dual_value, abs=1e-8)


# QP --------------------------------------------------------------------------------


def test_qp_unconstrained():
    x, value = solve_qp([[1.0]], [-1.0])
    assert x[0] == pytest.approx(1.0) and value == pytest.approx(-0.5)


def test_qp_active_constraint():
    sol = solve_qp([[1.0]], [0.0], [[-1.0]], [-2.0])
    assert sol.x[0] == pytest.approx(2.0, abs=1e-7) and sol.value == pytest.approx(2.0, abs=1e-6)
    assert max(sol.residuals.values()) <= 1e-6


def test_qp_rejects_non_psd():
    with pytest.raises(NotPositiveSemidefinite):
        solve_qp([[1.0, 0.0], [0.0, -1.0]], [0.0, 0.0])
    with pytest.raises(NotPositiveSemidefinite):
        solve_qp([[1.0, 2.0], [0.0, 1.0]], [0.0, 0.0])


def test_qp_infeasible():
    with pytest.raises(QpInfeasible):
        solve_qp([[1.0]], [0.0], [[1.0], [-1.0]], [-1.0, -1.0])


@pytest.mark.parametrize("seed", range(3))
def test_qp_agrees_with_subgradient(seed):
    rng = np.random.default_rng(seed)
    L = rng.normal(size=(5, 5))
    Q = L @ L.T + 0.5 * np.eye(5)
    c = rng.normal(size=5)
    A = rng.normal(size=(3, 5))
    b = rng.uniform(0.1, 1.0, 3)
    qp = solve_qp(Q, c, A, b)
    # exact penalty form: any weight above the largest KKT multiplier recovers the QP optimum
    mu = 2 * qp.duals.max() + 1

    def f(x):
        viol = A @ x - b
        act = viol > 0
        return 0.5 * x @ Q @ x + c @ x + mu * viol[act].sum(), Q @ x + c + mu * A[act].sum(axis=0)

    res = minimize_subgradient(f, 5, config=SubgradientConfig(initial_step=0.1, patience=1000))
    assert res.fun == pytest.approx(qp.value, rel=1e-3, abs=1e-3)
