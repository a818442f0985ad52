"""Sparse linear baseline: Dantzig selector on standardized observed predictors."""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .dantzig import KdsProblem, SolverConfig, solve_kds
from .pipeline import SparseCoefficients, support_threshold
from .rank_corr import as_design, as_response

__all__ = ["LinearBaseline", "baseline_problem", "baseline_linear_fit"]


@dataclass(frozen=True)
class LinearBaseline:
    coefficients: SparseCoefficients
    center: np.ndarray
    scale: np.ndarray
    intercept: float
    metadata: dict

    def predict(self, X_new) -> np.ndarray:
        X_new = np.asarray(X_new, dtype=np.float64)
        if X_new.ndim != 2 or X_new.shape[1] != self.center.shape[0]:
            raise ValueError(f"expected {self.center.shape[0]} columns, got shape {X_new.shape}")
        Z = (X_new - self.center) / self.scale
        return self.intercept + Z @ self.coefficients.theta_hat


def baseline_problem(X, y):
    """Standardize ``X`` and return ``(Q, r, center, scale)``.

    Constant columns get scale 1 and a zeroed column, which keeps their
    coefficient at zero.
    """
    X = as_design(X)
    n = X.shape[0]
    y = as_response(y, n)
    center = X.mean(axis=0)
    scale = X.std(axis=0)
    const = scale == 0
    if const.any():
        warnings.warn(
            f"dropping constant columns {np.flatnonzero(const).tolist()}", RuntimeWarning, stacklevel=3
        )
        scale = np.where(const, 1.0, scale)
    Z = (X - center) / scale
    Z[:, const] = 0.0
    Q = Z.T @ Z / n
    Q = 0.5 * (Q + Q.T)
    r = Z.T @ y / n
    return Q, r, center, scale


def baseline_linear_fit(X, y, gamma: float, solver_cfg: SolverConfig | None = None, problem=None) -> LinearBaseline:
    """Dantzig selector on column-standardized ``X``; predictions add back mean(y)."""
    X = as_design(X)
    y = as_response(y, X.shape[0])
    Q, r, center, scale = problem if problem is not None else baseline_problem(X, y)
    sol = solve_kds(KdsProblem(Q, r, gamma), solver_cfg)
    theta = sol.theta_check
    eps = support_threshold(theta)
    coef = SparseCoefficients(theta, theta.copy(), np.flatnonzero(np.abs(theta) > eps), 1.0, eps)
    meta = {"gamma": float(gamma), "solver_status": sol.status, "solver_converged": bool(sol.converged)}
    return LinearBaseline(coef, center, scale, float(np.mean(y)), meta)
