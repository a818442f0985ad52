import json
import warnings

import numpy as np
import pytest

from slim.baseline import baseline_linear_fit, baseline_problem
from slim.checks import random_lp
from slim.cpav import BackfitConfig
from slim.dantzig import KdsProblem, lp_oracle, solve_kds
from slim.pipeline import (
    KnotTable,
    SlimModel,
    default_gamma_grid,
    fit,
    gamma_grid,
    holdout_split,
    interpolate,
    predict,
    sample_std,
    tune_gamma,
)
from slim.rank_corr import rank_correlation
from slim.synth import GeneratorConfig, gen_dataset


@pytest.fixture(scope="module")
def data():
    return gen_dataset(GeneratorConfig(n=300, p=12, s=3, rng_seed=21))


@pytest.fixture(scope="module")
def model(data):
    X, y, _ = data
    return fit(X, y, 0.05)


def test_sample_std():
    assert sample_std([1.0, 3.0]) == pytest.approx(np.sqrt(2))
    v = np.random.default_rng(0).standard_normal(100)
    ref = np.sqrt(np.sum((v - v.mean()) ** 2) / 99)
    assert sample_std(v) == pytest.approx(ref, abs=1e-12)
    with pytest.raises(ValueError):
        sample_std([2.0, 2.0, 2.0])


def test_fit_scale_and_support(model):
    c = model.coefficients
    assert np.array_equal(c.theta_hat, c.sigma_y_hat * c.theta_check)
    assert np.allclose(c.theta_hat / c.sigma_y_hat, c.theta_check, rtol=1e-15, atol=0)
    expected = np.flatnonzero(np.abs(c.theta_hat) > c.support_eps)
    assert np.array_equal(c.support, expected)
    assert c.support_eps == pytest.approx(1e-6 * max(1.0, np.max(np.abs(c.theta_hat))))


def test_knot_tables_monotone(model):
    for t in model.transforms.values():
        assert np.all(np.diff(t.x) > 0)
        assert np.all(np.diff(t.f) >= -1e-8)


def test_training_prediction_identity(data, model):
    X, _, _ = data
    ref = model.X_hat @ model.coefficients.theta_hat
    assert np.max(np.abs(predict(model, X) - ref)) <= 1e-12


def test_sign_recovery():
    X, y, t = gen_dataset(GeneratorConfig(n=2000, p=10, s=3, noise_variance=0.0, transforms=8, rng_seed=4))
    m = fit(X, y, 0.02)
    truth = np.flatnonzero(t.theta_tilde)
    assert np.array_equal(np.sign(m.coefficients.theta_hat[truth]), t.theta_tilde[truth])


def test_zero_shortcut_empty_support(data):
    X, y, _ = data
    top = float(np.max(np.abs(rank_correlation(X, y).beta_hat)))
    with pytest.warns(RuntimeWarning, match="empty support"):
        m = fit(X, y, top)
    assert m.support.size == 0 and m.transforms == {}
    assert np.array_equal(m.predict(X), np.zeros(X.shape[0]))


def test_p1_toy():
    X = np.array([[1.0], [2.0], [3.0], [4.0]])
    m = fit(X, np.array([0.1, 0.5, 0.7, 2.0]), 0.0)
    assert m.support.tolist() == [0]
    t = m.transforms[0]
    assert np.all(np.diff(t.f) >= 0)
    assert abs(t.f.sum()) < 1e-10 and np.linalg.norm(t.f) <= 2.0 + 1e-10


def test_interpolate_rule():
    t = KnotTable(np.array([0.0, 1.0, 2.0]), np.array([5.0, 6.0, 7.0]))
    assert t(0.4) == 5.0
    assert t(10.0) == 7.0
    assert t(0.5) == 5.0
    assert t(-3.0) == 5.0
    assert t(1.5) == 6.0
    assert t(np.array([0.6, 1.6])).tolist() == [6.0, 7.0]


def test_interpolate_model_and_predict_example(model):
    j = int(model.support[0])
    t = model.transforms[j]
    assert interpolate(model, j, t.x[3]) == t.f[3]
    missing = next(k for k in range(model.p) if k not in model.transforms)
    with pytest.raises(KeyError):
        interpolate(model, missing, 0.0)


def test_predict_single_feature():
    from slim.pipeline import SparseCoefficients

    coef = SparseCoefficients(np.array([0.0, 1.0]), np.array([0.0, 2.0]), np.array([1]), 2.0, 2e-6)
    m = SlimModel(coef, {1: KnotTable(np.array([0.0, 1.0]), np.array([-3.0, 3.0]))}, 2)
    assert m.predict(np.array([[9.0, 1.0]])).tolist() == [6.0]
    with pytest.raises(ValueError):
        m.predict(np.ones((1, 3)))


def test_fit_deterministic(data):
    X, y, _ = data
    a, b = fit(X, y, 0.05), fit(X, y, 0.05)
    assert np.array_equal(a.X_hat, b.X_hat)
    assert json.dumps(a.to_dict()) == json.dumps(b.to_dict())


def test_fit_rank_invariance(data):
    X, y, _ = data
    Xg = X.copy()
    Xg[:, 0] = np.exp(X[:, 0] / 10)
    Xg[:, 1] = X[:, 1] ** 3
    a, b = fit(X, y, 0.05), fit(Xg, y, 0.05)
    assert np.array_equal(a.coefficients.theta_check, b.coefficients.theta_check)


def test_fit_validation(data):
    X, y, _ = data
    with pytest.raises(ValueError):
        fit(X, y, -1.0)
    with pytest.raises(ValueError):
        fit(X, y[:-1], 0.1)


def test_model_round_trip(tmp_path, data, model):
    X, _, _ = data
    path = tmp_path / "m.json"
    model.save(path)
    back = SlimModel.load(path)
    assert np.array_equal(back.predict(X), model.predict(X))
    d = json.loads(path.read_text())
    assert d["format"] == "slim-model" and d["version"] == 1
    assert {"theta_hat", "sigma_y_hat", "support", "transforms", "metadata"} <= d.keys()
    d["version"] = 99
    with pytest.raises(ValueError):
        SlimModel.from_dict(d)


def test_gamma_grid():
    g = gamma_grid(1.0)
    assert g.size == 10 and g[-1] == pytest.approx(1.0) and g[0] == pytest.approx(2.0**-9)
    assert np.all(np.diff(g) > 0)
    assert gamma_grid(0.3, 1).tolist() == [0.3]
    with pytest.raises(ValueError):
        gamma_grid(1.0, 0)


def test_holdout_split():
    tr, va = holdout_split(100, 0.2, 0)
    assert va.size == 20 and tr.size == 80
    assert np.array_equal(np.sort(np.concatenate([tr, va])), np.arange(100))


def test_tune_gamma(data):
    X, y, _ = data
    grid = gamma_grid(0.2, 4)
    g, mse = tune_gamma(X, y, grid, backfit_cfg=BackfitConfig(rounds=20), rng_seed=0)
    assert g in grid and mse.shape == (4,) and mse[list(grid).index(g)] == mse.min()


def test_baseline_matches_oracle_p2():
    rng = np.random.default_rng(5)
    X = rng.standard_normal((30, 2))
    y = X @ np.array([1.0, -0.5]) + 0.1 * rng.standard_normal(30)
    Q, r, _, _ = baseline_problem(X, y)
    b = baseline_linear_fit(X, y, 0.05)
    ref = lp_oracle(KdsProblem(Q, r, 0.05))
    assert b.coefficients.theta_hat == pytest.approx(ref.theta_check, abs=1e-6)


def test_baseline_zero_model_and_constant_column():
    rng = np.random.default_rng(6)
    X = rng.standard_normal((40, 3))
    X[:, 2] = 1.5
    y = X[:, 0] + 1.0
    with pytest.warns(RuntimeWarning, match="constant"):
        Q, r, _, _ = baseline_problem(X, y)
    with pytest.warns(RuntimeWarning):
        b = baseline_linear_fit(X, y, float(np.max(np.abs(r))))
    assert np.array_equal(b.coefficients.theta_hat, np.zeros(3))
    assert np.allclose(b.predict(X), y.mean())


def _tuned_baseline(X, y, grid):
    tr, va = holdout_split(len(y), 0.2, 0)
    errs = [np.mean((y[va] - baseline_linear_fit(X[tr], y[tr], g).predict(X[va])) ** 2) for g in grid]
    return baseline_linear_fit(X, y, grid[int(np.argmin(errs))])


def test_baseline_vs_slim_on_linear_data():
    n = 1000
    X, y, _ = gen_dataset(GeneratorConfig(n=n + 200, p=10, s=3, transforms=8, rng_seed=12))
    Xt, yt, X, y = X[n:], y[n:], X[:n], y[:n]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        g, _ = tune_gamma(X, y, default_gamma_grid(rank_correlation(X, y).beta_hat), rng_seed=0)
        m = fit(X, y, g)
        b = _tuned_baseline(X, y, default_gamma_grid(baseline_problem(X, y)[1]))
    e_s = np.mean((yt - m.predict(Xt)) ** 2)
    e_b = np.mean((yt - b.predict(Xt)) ** 2)
    assert 1 / 1.2 <= e_s / e_b <= 1.2


def test_random_lp_helper_feasible():
    prob = random_lp(np.random.default_rng(0), 3)
    assert solve_kds(prob).residual_inf <= prob.gamma + 1e-6
