import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ftsterrain.errors import ConfigError, ConvergenceWarning, DegenerateDataError, ShapeError, DataError
from ftsterrain.preprocessing import Scaler, stratified_split
from ftsterrain.serialize import load_model, model_from_json, model_to_json, save_model
from ftsterrain.svm import (
    PAPER_GRID,
    BinaryMachine,
    KernelConfig,
    KernelKind,
    Reduction,
    SvmConfig,
    SvmModel,
    confusion_matrix,
    dual_objective,
    grid_configs,
    grid_search,
    kernel_eval,
    kernel_matrix,
    predict,
    solve_dual,
    train_binary,
    train_multiclass,
)

from oracles import best_linear_accuracy, dual_grid_search_xor, dual_qp_projected_gradient, gram

XOR_X = np.array([[0.0, 0.0], [1.0, 1.0], [0.0, 1.0], [1.0, 0.0]])
XOR_Y = np.array([1.0, 1.0, -1.0, -1.0])


def kkt_violation(alpha, y, K, b, C):
    """Largest violation of the soft-margin KKT conditions on margins y f(x)."""
    m = y * (K @ (alpha * y) + b)
    worst = abs(float(alpha @ y))
    for a, mi in zip(alpha, m):
        if a <= 0:
            worst = max(worst, 1 - mi)
        elif a >= C:
            worst = max(worst, mi - 1)
        else:
            worst = max(worst, abs(mi - 1))
    return worst


def blobs(n_per, centers, scale=0.3, seed=0):
    rng = np.random.default_rng(seed)
    X = np.concatenate([rng.normal(c, scale, size=(n_per, len(c))) for c in centers])
    y = np.repeat(np.array([str(i) for i in range(len(centers))], dtype=object), n_per)
    return X, y


def test_kernel_examples():
    assert kernel_eval(KernelConfig("rbf", 0.5), [1, 2], [1, 2]) == 1.0
    assert kernel_eval(KernelConfig("linear"), [1, 0], [0, 3]) == 0.0
    # (1 * 3 + 0)^2 with u.v = 3
    assert kernel_eval(KernelConfig("poly", 1.0, degree=2), [1, 1], [1, 2]) == 9.0
    assert kernel_eval(KernelConfig("sigmoid", 0.5), [1, 1], [1, 1]) == pytest.approx(np.tanh(1.0), abs=1e-15)
    with pytest.raises(ShapeError):
        kernel_eval(KernelConfig("linear"), [1, 2], [1, 2, 3])


def test_kernel_config_validation():
    with pytest.raises(ConfigError):
        KernelConfig("rbf", 0.0)
    with pytest.raises(ConfigError):
        SvmConfig(C=0)
    with pytest.raises(ValueError):
        KernelConfig("cubic")


@pytest.mark.parametrize("kind", ["linear", "rbf", "poly", "sigmoid"])
def test_kernel_matrix_matches_loops(kind):
    rng = np.random.default_rng(1)
    A, B = rng.normal(size=(5, 3)), rng.normal(size=(4, 3))
    np.testing.assert_allclose(kernel_matrix(KernelConfig(kind, 0.3), A, B), gram(kind, A, B, 0.3), rtol=1e-12, atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from(["linear", "rbf"]), st.sampled_from([1.0, 0.1, 0.01]))
def test_linear_rbf_psd(seed, kind, gamma):
    X = np.random.default_rng(seed).normal(size=(8, 3))
    K = kernel_matrix(KernelConfig(kind, gamma), X, X)
    np.testing.assert_allclose(K, K.T, atol=1e-12)
    assert np.linalg.eigvalsh(K).min() >= -1e-8


def test_separable_clusters():
    X, y = blobs(20, [(-2, -2), (2, 2)])
    yy = np.where(y == "0", 1.0, -1.0)
    m = train_binary(X, yy, SvmConfig(C=1.0, kernel=KernelConfig("linear")))
    assert np.all(np.sign(m.decision_function(X)) == yy)


def test_xor_linear_at_most_75():
    # exhaustive enumeration over lines in the plane gives 0.75 for XOR
    assert best_linear_accuracy(XOR_X, XOR_Y) == 0.75
    m = train_binary(XOR_X, XOR_Y, SvmConfig(C=1.0, kernel=KernelConfig("linear")))
    acc = np.mean(np.where(m.decision_function(XOR_X) > 0, 1.0, -1.0) == XOR_Y)
    assert acc <= 0.75


def test_xor_rbf_matches_grid_oracle():
    cfg = SvmConfig(C=100.0, kernel=KernelConfig("rbf", 1.0), tol=1e-8)
    K = kernel_matrix(cfg.kernel, XOR_X, XOR_X)
    sol = solve_dual(K, XOR_Y, cfg.C, cfg.tol)
    _, best = dual_grid_search_xor(K, XOR_Y, cfg.C, upper=5.0, steps=201)
    # grid spacing 0.025 bounds the oracle from below
    assert dual_objective(sol.alpha, XOR_Y, K) >= best - 1e-9
    assert dual_objective(sol.alpha, XOR_Y, K) == pytest.approx(best, rel=1e-3)
    m = train_binary(XOR_X, XOR_Y, cfg)
    assert np.all(np.sign(m.decision_function(XOR_X)) == XOR_Y)


def test_xor_multiclass_predicts_training_points():
    y = np.where(XOR_Y > 0, "loose", "rock").astype(object)
    model = train_multiclass(XOR_X, y, SvmConfig(C=100.0, kernel=KernelConfig("rbf", 1.0), reduction="ovo"))
    assert list(predict(model, XOR_X)) == list(y)


@pytest.mark.parametrize("kind", ["linear", "rbf", "poly"])
def test_solver_against_qp_oracle(kind):
    rng = np.random.default_rng(11)
    for _ in range(10):
        n = int(rng.integers(4, 13))
        X = rng.normal(size=(n, 3))
        y = np.where(rng.random(n) < 0.5, 1.0, -1.0)
        y[:2] = (1.0, -1.0)
        C = float(rng.choice([0.1, 1.0, 10.0]))
        K = kernel_matrix(KernelConfig(kind, 0.1), X, X)
        sol = solve_dual(K, y, C, tol=1e-6)
        assert sol.converged
        _, ref = dual_qp_projected_gradient(K, y, C)
        assert abs(dual_objective(sol.alpha, y, K) - ref) <= 1e-4 * max(abs(ref), 1e-12)
        assert np.all(sol.alpha >= 0) and np.all(sol.alpha <= C)
        assert kkt_violation(sol.alpha, y, K, sol.bias, C) <= 1e-6 + 1e-12


def test_feasibility_after_training():
    X, y = blobs(15, [(0, 0), (1, 1)], scale=0.8, seed=4)
    yy = np.where(y == "0", 1.0, -1.0)
    cfg = SvmConfig(C=10.0, kernel=KernelConfig("rbf", 0.5))
    m = train_binary(X, yy, cfg)
    alpha = np.abs(m.dual_coef)
    assert np.all(alpha > 0) and np.all(alpha <= cfg.C + 1e-12)
    assert abs(m.dual_coef.sum()) <= cfg.tol


def test_single_class_is_degenerate():
    with pytest.raises(DegenerateDataError):
        train_binary(np.zeros((3, 2)), np.ones(3), SvmConfig())
    with pytest.raises(DegenerateDataError):
        train_multiclass(np.zeros((3, 2)), np.array(["rock"] * 3, dtype=object), SvmConfig())


def test_iteration_cap_warns():
    X, y = blobs(30, [(0, 0), (0.5, 0.5)], scale=1.0, seed=2)
    yy = np.where(y == "0", 1.0, -1.0)
    with pytest.warns(ConvergenceWarning):
        m = train_binary(X, yy, SvmConfig(C=100.0, kernel=KernelConfig("rbf", 1.0), max_passes=1))
    assert not m.converged


def test_machine_counts():
    X, y = blobs(10, [(0, 0), (3, 0), (0, 3), (3, 3)])
    y = np.array(["loose", "compressed", "pebbles", "rock"], dtype=object)[y.astype(int)]
    ovo = train_multiclass(X, y, SvmConfig(reduction=Reduction.ONE_VS_ONE))
    ovr = train_multiclass(X, y, SvmConfig(reduction=Reduction.ONE_VS_REST))
    assert len(ovo.machines) == 6 and len(ovr.machines) == 4
    assert ovo.classes == ("loose", "compressed", "pebbles", "rock")


@pytest.mark.parametrize("reduction", ["ovr", "ovo"])
def test_support_vector_predicts_own_class(reduction):
    X, y = blobs(10, [(-3, 0), (3, 0), (0, 4)])
    model = train_multiclass(X, y, SvmConfig(kernel=KernelConfig("linear"), reduction=reduction))
    pred = predict(model, X)
    assert np.all(pred == y)
    m = model.machines[0]
    sv = model.scaler.mean + m.support_vectors[0] * model.scaler.std
    row = int(np.argmin(np.abs(X - sv).sum(axis=1)))
    assert predict(model, sv) == y[row]


def test_ovr_tie_goes_to_first_class():
    machines = tuple(BinaryMachine(c, "rest", KernelConfig("linear"), np.zeros((0, 2)), np.zeros(0), 0.0, 1.0)
                     for c in ("loose", "rock"))
    model = SvmModel(("loose", "rock"), machines, Scaler(np.zeros(2), np.ones(2)), SvmConfig())
    assert predict(model, np.array([0.3, -0.2])) == "loose"


def test_ovo_vote_tie_uses_scores():
    # three classes, each winning one duel: scores decide
    k = KernelConfig("linear")
    mk = lambda a, b, bias: BinaryMachine(a, b, k, np.zeros((0, 1)), np.zeros(0), bias, 1.0)
    machines = (mk("loose", "compressed", 1.0), mk("loose", "pebbles", -2.0), mk("compressed", "pebbles", 0.5))
    model = SvmModel(("loose", "compressed", "pebbles"), machines, Scaler(np.zeros(1), np.ones(1)),
                     SvmConfig(reduction="ovo"))
    # votes 1/1/1; scores loose -1, compressed -0.5, pebbles 1.5
    assert predict(model, np.array([0.0])) == "pebbles"


def test_scaling_invariance():
    X, y = blobs(15, [(0, 0, 0), (2, 1, 0), (0, 2, 2)], scale=0.7, seed=9)
    cfg = SvmConfig(C=1.0, kernel=KernelConfig("rbf", 0.1))
    base = predict(train_multiclass(X, y, cfg), X)
    X2 = X * np.array([1000.0, 1.0, 0.01]) + np.array([5.0, -3.0, 100.0])
    assert np.all(predict(train_multiclass(X2, y, cfg), X2) == base)


def test_predict_deterministic_and_shape_checked():
    X, y = blobs(10, [(0, 0), (2, 2)])
    model = train_multiclass(X, y, SvmConfig())
    assert np.all(predict(model, X) == predict(model, X))
    with pytest.raises(ShapeError):
        predict(model, np.zeros((2, 3)))


@pytest.mark.parametrize("reduction", ["ovr", "ovo"])
def test_serialization_round_trip(tmp_path, reduction):
    X, y = blobs(12, [(0, 0), (2, 0), (1, 2)], scale=0.6, seed=5)
    model = train_multiclass(X, y, SvmConfig(C=10.0, kernel=KernelConfig("poly", 0.1), reduction=reduction))
    save_model(model, tmp_path / "m.json", {"features": ["a", "b"]})
    back, meta = load_model(tmp_path / "m.json", with_meta=True)
    assert meta == {"features": ["a", "b"]}
    probe = np.random.default_rng(0).normal(size=(20, 2))
    assert np.max(np.abs(back.decision_values(probe) - model.decision_values(probe))) < 1e-12
    assert model_to_json(back) == model_to_json(model)


def test_bad_model_file():
    with pytest.raises(DataError):
        model_from_json('{"format": "other"}')
    with pytest.raises(DataError):
        model_from_json("{not json")


def test_confusion_examples():
    c = confusion_matrix(["A", "B", "B"], ["A", "A", "B"])
    np.testing.assert_array_equal(c.percent, [[50, 50], [0, 100]])
    assert c.accuracy == pytest.approx(2 / 3)
    ident = confusion_matrix(["loose", "rock", "pebbles", "compressed"], ["loose", "rock", "pebbles", "compressed"])
    np.testing.assert_array_equal(ident.percent, 100 * np.eye(4))
    with pytest.raises(DataError):
        confusion_matrix([], [])


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.sampled_from("abcd"), st.sampled_from("abcd")), min_size=1, max_size=40))
def test_confusion_rows_sum_to_100(pairs):
    truth, pred = zip(*pairs)
    c = confusion_matrix(list(pred), list(truth))
    sums = c.percent.sum(axis=1)
    for cls, s in zip(c.classes, sums):
        assert abs(s - 100) <= 1e-9 if cls in truth else s == 0
    assert c.accuracy == pytest.approx(np.mean(np.array(pred) == np.array(truth)))


def test_grid_has_64_configs():
    configs = grid_configs(PAPER_GRID)
    assert len(configs) == 64
    assert len({(c.kernel.kind, c.C, c.kernel.gamma) for c in configs}) == 64


def test_grid_search_separable_and_tie_break():
    X, y = blobs(16, [(-3, 0), (3, 0), (0, 5)], scale=0.3)
    res = grid_search(X, y)
    assert len(res.rows) == 64
    assert res.best_row.test_accuracy == 1.0
    # every linear config ties at 100 %, so the smallest C with the first gamma wins
    assert res.best.kernel.kind is KernelKind.LINEAR and res.best.C == 0.1 and res.best.kernel.gamma == 1.0


def test_grid_search_parallel_matches_serial():
    X, y = blobs(10, [(0, 0), (1.5, 1.5)], scale=0.8, seed=3)
    grid = {"C": (0.1, 1.0), "gamma": (1.0, 0.1), "kernel": ("linear", "rbf")}
    a = grid_search(X, y, grid=grid)
    b = grid_search(X, y, grid=grid, jobs=2)
    strip = lambda rows: [(r.kernel, r.C, r.gamma, r.train_accuracy, r.test_accuracy) for r in rows]
    assert strip(a.rows) == strip(b.rows) and a.best == b.best


def test_stratified_split():
    y = np.array(["loose"] * 33 + ["rock"] * 159 + ["pebbles"] * 67, dtype=object)
    tr, te = stratified_split(y, 0.25, 42)
    assert set(tr).isdisjoint(te) and len(tr) + len(te) == y.size
    counts = {c: int(np.sum(y[te] == c)) for c in ("loose", "pebbles", "rock")}
    # round(0.25 * n) per class
    assert counts == {"loose": 8, "pebbles": 17, "rock": 40}
    tr2, te2 = stratified_split(y, 0.25, 42)
    assert np.array_equal(te, te2)
