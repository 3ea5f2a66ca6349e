import json

import numpy as np
import pytest

from drauc.data import DataError, LabeledDataset, Scaler
from drauc.metrics import empirical_pair_risk, pair_hinge_losses
from drauc.models import (
    DualCertificate,
    FixedSupportRisk,
    HyperParams,
    LinearModel,
    ModelKind,
    d_auc_objective,
    dr_auc_f_objective,
    dr_auc_f_reduced,
    dr_auc_v_objective,
    robust_pair_terms,
    score,
    svm_objective,
    train,
    train_d_auc,
    train_dr_auc_f,
    train_dr_auc_v,
    train_svm,
    training_objective,
    worst_case_distribution,
    worst_case_dual,
)
from drauc.pairing import AtomCapExceeded, build_atoms, class_distances, distance_matrix
from drauc.reference import d_auc_qp, dr_auc_f_qp, dr_auc_v_qp, svm_qp

from conftest import gaussian_ds

ONE_ATOM = LabeledDataset([[1.0], [0.0]], [1, -1])


# types ----------------------------------------------------------------------------


def test_kind_parsing():
    assert ModelKind.parse("dr-auc-f") is ModelKind.DR_AUC_F
    assert ModelKind.parse("D_AUC") is ModelKind.D_AUC
    with pytest.raises(ValueError, match="svm, d-auc, dr-auc-f, dr-auc-v"):
        ModelKind.parse("rf")


def test_hyper_validation():
    with pytest.raises(ValueError):
        HyperParams(0.0)
    with pytest.raises(ValueError):
        HyperParams(1.0, -0.1)
    with pytest.raises(ValueError, match="meaningless"):
        HyperParams(1.0, 0.1).check(ModelKind.SVM)
    HyperParams(1.0, 0.1).check(ModelKind.DR_AUC_V)


def test_linear_model_invariants():
    with pytest.raises(ValueError):
        LinearModel(ModelKind.D_AUC, [1.0], 0.5, HyperParams(1.0))
    with pytest.raises(ValueError):
        LinearModel(ModelKind.SVM, [np.nan], 0.0, HyperParams(1.0))


def test_model_json_round_trip_is_bit_exact():
    m = LinearModel(
        ModelKind.SVM, [0.1, 1 / 3, -2e-17], 0.7 / 3, HyperParams(0.3),
        {"iterations": 5, "objective": 1 / 7}, Scaler([1 / 3, 2.0, 0.0], [0.1, 1.0, 7.0]),
    )
    back = LinearModel.from_json(m.to_json())
    assert back.weights.tobytes() == m.weights.tobytes()
    assert back.intercept == m.intercept and back.hyper == m.hyper
    assert back.scaler.shift.tobytes() == m.scaler.shift.tobytes()
    assert back.training_meta == m.training_meta
    doc = json.loads(m.to_json())
    assert set(doc) == {"schema", "kind", "weights", "intercept", "hyper", "standardizer", "training_meta"}


def test_model_json_rejects_unknown_schema():
    d = LinearModel(ModelKind.D_AUC, [1.0], 0.0, HyperParams(1.0)).to_dict()
    d["schema"] = "other/9"
    with pytest.raises(ValueError, match="schema"):
        LinearModel.from_dict(d)


def test_score_examples():
    assert score(LinearModel(ModelKind.D_AUC, [0.0, 0.0], 0.0, HyperParams(1)), [3.0, 4.0]) == 0.0
    assert score(LinearModel(ModelKind.D_AUC, [1.0, 2.0], 0.0, HyperParams(1)), [3.0, 4.0]) == 11.0
    with pytest.raises(DataError):
        score(LinearModel(ModelKind.D_AUC, [1.0, 2.0], 0.0, HyperParams(1)), [3.0])


def test_scores_invariant_to_atom_order():
    ds = gaussian_ds(0, 4, 4, 2)
    m = train_d_auc(ds, HyperParams(1.0))
    perm = np.random.default_rng(0).permutation(8)
    np.testing.assert_array_equal(m.decision_function(ds.features)[perm], m.decision_function(ds.features[perm]))


# finite-difference subgradient checks -------------------------------------------------


def _objectives(ds):
    atoms = build_atoms(ds)
    d = ds.n_features
    return {
        "svm": (svm_objective(ds.features, ds.labels, 1.3), d + 1),
        "d_auc": (d_auc_objective(atoms, 1.3), d),
        "dr_auc_v": (dr_auc_v_objective(atoms, 1.3, 0.2), d),
        "dr_auc_f": (dr_auc_f_reduced(atoms, 1.3, 0.4), d),
    }


@pytest.mark.parametrize("name", ["svm", "d_auc", "dr_auc_v", "dr_auc_f"])
def test_subgradients_match_finite_differences(name):
    ds = gaussian_ds(3, 4, 5, 3)
    fun, dim = _objectives(ds)[name]
    rng = np.random.default_rng(7)
    h = 1e-6
    checked = 0
    while checked < 20:
        x = rng.normal(size=dim)
        u = rng.normal(size=dim)
        u /= np.linalg.norm(u)
        f0, g = fun(x)
        fp, fm = fun(x + h * u)[0], fun(x - h * u)[0]
        fwd, bwd = (fp - f0) / h, (f0 - fm) / h
        if abs(fwd - bwd) > 1e-5:  # near a kink
            continue
        assert abs(fwd - g @ u) <= 1e-4 * (1 + abs(f0))
        checked += 1


def test_robust_terms_match_dense_maximum():
    ds = gaussian_ds(5, 3, 4, 2)
    atoms = build_atoms(ds)
    dp, dn = class_distances(atoms)
    D = distance_matrix(atoms)
    w = np.array([0.7, -0.2])
    h = pair_hinge_losses(w, atoms)
    for lam in (0.0, 0.1, 0.5, 3.0):
        t, a_star, b_star = robust_pair_terms(h.reshape(3, 4), lam, dp, dn)
        dense = h[None, :] - lam * D
        np.testing.assert_allclose(t.ravel(), dense.max(axis=1), atol=1e-14)
        # first maximizer in row-major order
        assert np.array_equal((a_star * 4 + b_star).ravel(), dense.argmax(axis=1))


# fixed-support objective with explicit lambda ---------------------------------------------


def test_dr_f_objective_large_lambda_is_d_auc_plus_penalty():
    ds = gaussian_ds(1, 3, 3, 2)
    atoms = build_atoms(ds)
    D = distance_matrix(atoms)
    w = np.array([0.5, 0.4])
    hyper = HyperParams(2.0, 0.3)
    h = pair_hinge_losses(w, atoms)
    lam = 2 * h.max() / D[D > 0].min()
    value, cert = dr_auc_f_objective(w, lam, atoms, D, hyper)
    np.testing.assert_allclose(cert.t, h, atol=1e-15)
    expected = d_auc_objective(atoms, hyper.c)(w)[0] + hyper.c * lam * hyper.epsilon
    assert value == pytest.approx(expected, rel=1e-14)


def test_dr_f_objective_zero_lambda_is_worst_atom():
    ds = gaussian_ds(2, 3, 3, 2)
    atoms = build_atoms(ds)
    w = np.array([1.0, -0.3])
    value, cert = dr_auc_f_objective(w, 0.0, atoms, distance_matrix(atoms), HyperParams(1.5, 0.2))
    h = pair_hinge_losses(w, atoms)
    assert np.all(cert.t == h.max())
    assert value == pytest.approx(0.5 * w @ w + 1.5 * h.max(), rel=1e-14)


def test_dr_f_objective_rejects_negative_lambda():
    atoms = build_atoms(ONE_ATOM)
    with pytest.raises(ValueError):
        dr_auc_f_objective([1.0], -0.1, atoms, distance_matrix(atoms), HyperParams(1.0, 0.1))


@pytest.mark.parametrize("seed", range(5))
def test_dr_f_objective_bounds_lp_value_with_equality_at_optimum(seed):
    rng = np.random.default_rng(seed)
    atoms = build_atoms(gaussian_ds(seed, 1, 3, 2))
    D = distance_matrix(atoms)
    w = rng.normal(size=2)
    hyper = HyperParams(1.0, float(rng.uniform(0, D.max())))
    _, lp_value = worst_case_distribution(w, atoms, D, hyper.epsilon)
    base = 0.5 * w @ w
    for lam in rng.uniform(0, 3, 5):
        value, cert = dr_auc_f_objective(w, lam, atoms, D, hyper)
        assert value >= base + hyper.c * lp_value - 1e-12
        assert np.all(cert.t >= 0)
    cert, dual_value = worst_case_dual(w, atoms, D, hyper.epsilon)
    value, _ = dr_auc_f_objective(w, cert.lam, atoms, D, hyper)
    assert value == pytest.approx(base + hyper.c * lp_value, abs=1e-9)


@pytest.mark.parametrize("seed", range(10))
def test_eliminated_lambda_risk_equals_lp(seed):
    rng = np.random.default_rng(seed)
    ds = gaussian_ds(seed, 3, 4, 2)
    atoms = build_atoms(ds)
    D = distance_matrix(atoms)
    w = rng.normal(size=2) * 2
    eps = float(rng.uniform(0, 0.5 * D.max()))
    risk = FixedSupportRisk(atoms, eps)
    value, _, lam = risk.value_and_grad(w)
    _, lp_value = worst_case_distribution(w, atoms, D, eps)
    assert value == pytest.approx(lp_value, abs=1e-10)
    assert 0 <= lam <= np.abs(w).max() + 1e-12
    # the reported lambda certifies the value
    _, cert = dr_auc_f_objective(w, lam, atoms, D, HyperParams(1.0, eps))
    assert cert.value(eps) == pytest.approx(lp_value, abs=1e-10)


def test_certificate_value():
    cert = DualCertificate(0.5, np.array([1.0, 3.0]))
    assert cert.value(0.2) == pytest.approx(2.1)


# training: hand-derived optima ----------------------------------------------------------


def test_svm_two_points():
    ds = LabeledDataset([[1.0], [-1.0]], [1, -1])
    m = train_svm(ds, HyperParams(100.0))
    assert m.weights[0] == pytest.approx(1.0, abs=1e-2)
    assert m.intercept == pytest.approx(0.0, abs=1e-2)


def test_svm_small_c_shrinks_weights():
    m = train_svm(gaussian_ds(0), HyperParams(1e-4))
    assert np.abs(m.weights).max() < 1e-3


def test_d_auc_single_atom():
    m = train_d_auc(ONE_ATOM, HyperParams(1.0))
    assert m.weights[0] == pytest.approx(1.0, abs=1e-3)
    assert m.training_meta["objective"] == pytest.approx(0.5, abs=1e-3)
    assert m.intercept == 0.0


def test_d_auc_separated_small_c_bounded_by_feasible_point():
    ds = LabeledDataset([[2.0], [1.5], [0.0], [-0.5]], [1, 1, -1, -1])
    w0 = np.array([1.0])  # pairwise margins >= 1.5
    m = train_d_auc(ds, HyperParams(0.01))
    assert m.training_meta["objective"] <= 0.5 * w0 @ w0


def test_dr_v_single_atom():
    m = train_dr_auc_v(ONE_ATOM, HyperParams(1.0, 0.1))
    assert m.weights[0] == pytest.approx(0.9, abs=1e-3)
    assert m.training_meta["objective"] == pytest.approx(0.595, abs=1e-3)


@pytest.mark.parametrize("eps", [0.1, 1.0, 10.0])
def test_dr_v_objective_at_most_c(eps):
    m = train_dr_auc_v(gaussian_ds(1), HyperParams(2.0, eps))
    assert m.training_meta["objective"] <= 2.0 + 1e-12


@pytest.mark.parametrize("eps", [0.0, 0.3, 5.0])
def test_dr_f_single_atom_is_d_auc(eps):
    m = train_dr_auc_f(ONE_ATOM, HyperParams(1.0, eps))
    d = train_d_auc(ONE_ATOM, HyperParams(1.0))
    assert m.training_meta["objective"] == pytest.approx(d.training_meta["objective"], rel=1e-4)
    assert m.training_meta["lambda"] == 0.0


@pytest.mark.parametrize("kind", ["dr_auc_f", "dr_auc_v"])
def test_zero_radius_collapses_to_d_auc(kind):
    ds = gaussian_ds(2, 4, 5, 3)
    d = train_d_auc(ds, HyperParams(1.0)).training_meta["objective"]
    r = train(kind, ds, HyperParams(1.0, 0.0)).training_meta["objective"]
    assert r == pytest.approx(d, rel=1e-4)


# training vs exact QP -------------------------------------------------------------------


def test_svm_matches_qp():
    ds = gaussian_ds(4, 3, 3, 2)
    m = train_svm(ds, HyperParams(1.0))
    ref, _, _ = svm_qp(ds, HyperParams(1.0))
    assert m.training_meta["objective"] == pytest.approx(ref, rel=1e-3)


def test_d_auc_matches_qp():
    ds = gaussian_ds(5, 5, 5, 3)
    m = train_d_auc(ds, HyperParams(1.0))
    ref, _, _ = d_auc_qp(build_atoms(ds), HyperParams(1.0))
    assert m.training_meta["objective"] == pytest.approx(ref, rel=1e-3)


def test_dr_f_matches_full_qp_on_four_atoms():
    ds = gaussian_ds(6, 2, 2, 2)
    hyper = HyperParams(1.0, 0.2)
    m = train_dr_auc_f(ds, hyper)
    ref, _, extra = dr_auc_f_qp(build_atoms(ds), hyper)
    assert m.training_meta["objective"] == pytest.approx(ref, rel=1e-3)
    assert m.training_meta["certificate_value"] >= 0


def test_dr_v_matches_constrained_form():
    ds = gaussian_ds(7, 4, 4, 3)
    hyper = HyperParams(1.0, 0.1)
    m = train_dr_auc_v(ds, hyper)
    ref, _, extra = dr_auc_v_qp(build_atoms(ds), hyper)
    assert m.training_meta["objective"] == pytest.approx(ref, rel=1e-3)
    assert m.training_meta["lambda"] == pytest.approx(np.abs(m.weights).max())


def test_training_errors():
    one_class = LabeledDataset([[1.0], [2.0]], [1, 1])
    for kind in ModelKind:
        with pytest.raises(DataError):
            train(kind, one_class, HyperParams(1.0))
    with pytest.raises(ValueError, match="meaningless"):
        train("svm", gaussian_ds(0), HyperParams(1.0, 0.1))
    with pytest.raises(AtomCapExceeded):
        train_dr_auc_f(gaussian_ds(0, 5, 5), HyperParams(1.0, 0.1), atom_cap=10)


def test_training_is_deterministic():
    ds = gaussian_ds(8, 5, 6, 3)
    for kind in ModelKind:
        eps = 0.2 if kind.robust else 0.0
        a, b = train(kind, ds, HyperParams(1.0, eps)), train(kind, ds, HyperParams(1.0, eps))
        assert a.to_json() == b.to_json()


# structural properties ---------------------------------------------------------------------


@pytest.mark.parametrize("kind", ["d_auc", "dr_auc_f", "dr_auc_v"])
def test_pairwise_objectives_ignore_a_common_shift(kind):
    ds = gaussian_ds(9, 3, 4, 2)
    shift = np.array([3.0, -1.5])
    moved = LabeledDataset(ds.features + shift, ds.labels)
    w = np.array([0.4, 0.9])
    hyper = HyperParams(1.0, 0.3 if kind != "d_auc" else 0.0)
    a = training_objective(kind, w, 0.0, ds, hyper)
    b = training_objective(kind, w, 0.0, moved, hyper)
    assert a == pytest.approx(b, rel=1e-12)


def test_hinge_ignores_score_offset():
    ds = gaussian_ds(10, 3, 3, 2)
    atoms = build_atoms(ds)
    w = np.array([0.3, 0.8])
    # an intercept adds the same constant to both scores of a pair
    s_pos, s_neg = atoms.pos @ w + 5.0, atoms.neg @ w + 5.0
    direct = np.maximum(0, 1 - (s_pos[:, None] - s_neg[None, :])).ravel()
    np.testing.assert_allclose(direct, pair_hinge_losses(w, atoms), atol=1e-14)


@pytest.mark.parametrize("seed", range(3))
def test_conservatism_ordering(seed):
    rng = np.random.default_rng(seed)
    atoms = build_atoms(gaussian_ds(seed, 2, 3, 2))
    D = distance_matrix(atoms)
    w = rng.normal(size=2)
    eps = 0.5
    emp = empirical_pair_risk(w, atoms)
    _, worst = worst_case_distribution(w, atoms, D, eps)
    assert emp <= worst + 1e-12
    for lam in (0.0, 0.3, 2.0):
        _, cert = dr_auc_f_objective(w, lam, atoms, D, HyperParams(1.0, eps))
        assert worst <= cert.value(eps) + 1e-12
    vpen = dr_auc_v_objective(atoms, 1.0, eps)(w)[0] - 0.5 * w @ w
    assert vpen >= emp


# worst-case distribution ----------------------------------------------------------------------


def _check_plan(plan, D, eps, m):
    assert np.all(plan.k >= 0)
    np.testing.assert_allclose(plan.k.sum(axis=1), 1.0 / m, atol=1e-8)
    np.testing.assert_allclose(plan.k.sum(axis=0), plan.p, atol=1e-12)
    assert plan.p.sum() == pytest.approx(1.0, abs=1e-8)
    assert plan.cost(D) <= eps + 1e-8


def test_worst_case_zero_radius_is_uniform():
    atoms = build_atoms(gaussian_ds(11, 2, 3, 2))
    D = distance_matrix(atoms)
    w = np.array([0.5, 0.5])
    plan, value = worst_case_distribution(w, atoms, D, 0.0)
    np.testing.assert_allclose(plan.p, 1 / 6, atol=1e-10)
    assert value == pytest.approx(empirical_pair_risk(w, atoms), abs=1e-10)
    _check_plan(plan, D, 0.0, 6)


def test_worst_case_full_budget_is_point_mass():
    atoms = build_atoms(gaussian_ds(12, 2, 3, 2))
    D = distance_matrix(atoms)
    w = np.array([0.5, -0.2])
    h = pair_hinge_losses(w, atoms)
    j = int(h.argmax())
    plan, value = worst_case_distribution(w, atoms, D, float(D[:, j].max()))
    assert plan.p[j] == pytest.approx(1.0, abs=1e-9)
    assert value == pytest.approx(h.max(), abs=1e-10)


@pytest.mark.parametrize("seed", range(5))
def test_worst_case_plan_feasible(seed):
    rng = np.random.default_rng(seed)
    atoms = build_atoms(gaussian_ds(seed, 2, 2, 3))
    D = distance_matrix(atoms)
    eps = float(rng.uniform(0, D.max()))
    plan, value = worst_case_distribution(rng.normal(size=3), atoms, D, eps)
    _check_plan(plan, D, eps, 4)


def test_worst_case_cap_and_radius_errors():
    atoms = build_atoms(gaussian_ds(0, 5, 5))
    D = distance_matrix(atoms)
    with pytest.raises(DataError, match="cap"):
        worst_case_distribution(np.zeros(3), atoms, D, 0.1, cap=10)
    with pytest.raises(ValueError):
        worst_case_distribution(np.zeros(3), atoms, D, -1.0)


@pytest.mark.parametrize("seed", range(5))
def test_worst_case_monotone_in_radius(seed):
    rng = np.random.default_rng(seed)
    atoms = build_atoms(gaussian_ds(seed, 2, 3, 2))
    D = distance_matrix(atoms)
    w = rng.normal(size=2)
    values = [worst_case_distribution(w, atoms, D, e)[1] for e in (0, 0.1, 0.5, 1, 5)]
    assert all(b >= a - 1e-9 for a, b in zip(values, values[1:]))
