import numpy as np
import pytest

from slim.cpav import (
    BackfitConfig,
    block_orders,
    block_update,
    estimate_hidden_design,
    residue,
)
from slim.isotonic import monotone_order, standardized_isotonic


def test_residue_examples():
    y = np.array([3.0, 3.0])
    cur = np.array([[1.0, 0.0], [1.0, 0.0]])
    prev = np.array([[0.0, 0.0], [0.0, 2.0]])
    # second block: first column from the current sweep only
    assert residue(y, np.array([1.0, 1.0]), cur, prev, 1) == pytest.approx([2.0, 3.0 - 1.0])
    prev2 = np.array([[0.0, 0.0], [0.0, 2.0]])
    assert residue(y, np.array([1.0, 1.0]), np.zeros((2, 2)), prev2, 0) == pytest.approx([3.0, 1.0])
    assert residue(y, np.array([2.0]), np.ones((2, 1)), np.ones((2, 1)), 0) == pytest.approx(y)


def test_residue_errors():
    with pytest.raises(ValueError):
        residue(np.ones(2), np.array([0.0, 1.0]), np.zeros((2, 2)), np.zeros((2, 2)), 0)
    with pytest.raises(ValueError):
        residue(np.ones(3), np.array([1.0, 1.0]), np.zeros((2, 2)), np.zeros((2, 2)), 0)


def test_block_update_examples():
    o = monotone_order([1, 2, 3])
    v = np.array([-1.0, 0.0, 1.0])
    assert block_update(2.5 * v, 2.5, o).value == pytest.approx(v)
    assert block_update(np.array([3.0, 1.0, 2.0]) * 4, 4.0, o).value == pytest.approx([0, 0, 0], abs=1e-14)
    assert block_update(np.array([-1.0, 0.0, 1.0]), -1.0, o).value == pytest.approx([0, 0, 0], abs=1e-14)
    with pytest.raises(ValueError):
        block_update(v, 0.0, o)


def test_block_update_bitwise_equals_projection(rng):
    r = rng.standard_normal(30)
    o = monotone_order(rng.standard_normal(30))
    assert np.array_equal(block_update(r, -1.7, o).value, standardized_isotonic(r / -1.7, o).value)


def test_single_block_exact_in_one_round():
    x = np.array([[1.0], [2.0], [3.0]])
    y = np.array([-1.0, 0.0, 1.0])
    st = estimate_hidden_design(y, x, np.array([1.0]), BackfitConfig(rounds=5))
    assert st.X_hat[:, 0] == pytest.approx(y)
    assert st.objective_history[0] == pytest.approx(0.0, abs=1e-28)


def test_inactive_columns_stay_zero(rng):
    X = rng.standard_normal((20, 2))
    st = estimate_hidden_design(X[:, 0], X, np.array([1.0, 0.0]), BackfitConfig(rounds=10, rel_tol=0))
    assert np.array_equal(st.X_hat[:, 1], np.zeros(20))
    assert st.active_set.tolist() == [0]


def test_errors(rng):
    X = rng.standard_normal((5, 2))
    with pytest.raises(ValueError):
        estimate_hidden_design(np.ones(5), X, np.zeros(2))
    with pytest.raises(ValueError):
        estimate_hidden_design(np.ones(5), X, np.ones(3))
    X[0, 0] = np.inf
    with pytest.raises(ValueError):
        estimate_hidden_design(np.ones(5), X, np.ones(2))
    with pytest.raises(ValueError):
        BackfitConfig(rounds=0)
    with pytest.raises(ValueError):
        BackfitConfig(rel_tol=-1)


def _synthetic(rng, n=20):
    Z = rng.standard_normal((n, 3))
    X = np.column_stack([Z[:, 0] ** 3, np.exp(Z[:, 1]), Z[:, 2]])
    theta = np.array([1.0, -0.7, 0.4])
    y = Z @ theta + 0.3 * rng.standard_normal(n)
    return X, y, theta


def test_monotone_objective_over_50_rounds(rng):
    X, y, theta = _synthetic(rng)
    st = estimate_hidden_design(y, X, theta, BackfitConfig(rounds=50, rel_tol=0))
    h = np.array(st.objective_history)
    assert h.size == 50
    assert np.all(np.diff(h) <= 1e-12 * h[:-1])
    assert st.worst_feasibility <= 1e-8


def test_blockwise_fixed_point_at_exit(rng):
    # cyclic descent converges linearly; run until a sweep moves nothing
    X, y, theta = _synthetic(rng)
    st = estimate_hidden_design(y, X, theta, BackfitConfig(rounds=20000, rel_tol=0, change_tol=1e-11))
    assert st.max_change[-1] <= 1e-11
    orders = block_orders(X, range(3))
    for j in range(3):
        r_j = y - st.X_hat @ theta + theta[j] * st.X_hat[:, j]
        again = block_update(r_j, theta[j], orders[j]).value
        assert np.max(np.abs(again - st.X_hat[:, j])) <= 1e-8


def test_rel_tol_early_stop(rng):
    X, y, theta = _synthetic(rng, 60)
    st = estimate_hidden_design(y, X, theta, BackfitConfig(rounds=500, rel_tol=1e-8))
    assert st.rounds_run < 500
    assert len(st.max_change) == st.rounds_run


def test_change_tol_stop(rng):
    X, y, theta = _synthetic(rng, 60)
    st = estimate_hidden_design(y, X, theta, BackfitConfig(rounds=500, rel_tol=0, change_tol=1e-10))
    assert st.max_change[-1] <= 1e-10 or st.rounds_run == 500
