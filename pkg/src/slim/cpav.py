"""Cyclic backfitting of the hidden design given fitted coefficients.

Solves

    min_Z  1/2 ||Z theta - y||^2
    s.t.   z_j in M(x_j),  1'z_j = 0,  ||z_j||_2 <= sqrt(n)   for every j

by exact block-coordinate descent over the columns with nonzero
coefficient.  Each block solve is a standardized isotonic regression of the
partial residual divided by the block's coefficient.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .isotonic import MonotoneOrder, monotone_order, standardized_isotonic

__all__ = [
    "BackfitConfig",
    "BackfitState",
    "residue",
    "block_update",
    "block_orders",
    "estimate_hidden_design",
]


@dataclass(frozen=True)
class BackfitConfig:
    """Stopping rules for the backfitting loop.

    Runs at most ``rounds`` sweeps.  A sweep that lowers the objective by a
    relative amount below ``rel_tol`` ends the loop, and so does a sweep in
    which no entry moves by more than ``change_tol``.  Setting both to 0
    gives the fixed-round behaviour.
    """

    rounds: int = 100
    rel_tol: float = 1e-8
    change_tol: float = 0.0
    track_objective: bool = True

    def __post_init__(self):
        if self.rounds < 1:
            raise ValueError("rounds must be >= 1")
        if self.rel_tol < 0 or self.change_tol < 0:
            raise ValueError("tolerances must be >= 0")


@dataclass
class BackfitState:
    X_hat: np.ndarray
    objective_history: list[float] = field(default_factory=list)
    active_set: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    rounds_run: int = 0
    max_change: list[float] = field(default_factory=list)
    worst_kkt_gap: float = 0.0
    worst_feasibility: float = 0.0


def _objective(resid: np.ndarray) -> float:
    return 0.5 * float(resid @ resid)


def residue(y, theta_hat, X_hat_current, X_hat_previous, j: int) -> np.ndarray:
    """Partial residual for block ``j``.

    Blocks before ``j`` come from the current sweep, blocks after ``j`` from
    the previous one.
    """
    y = np.asarray(y, dtype=np.float64)
    theta_hat = np.asarray(theta_hat, dtype=np.float64)
    Xc = np.asarray(X_hat_current, dtype=np.float64)
    Xp = np.asarray(X_hat_previous, dtype=np.float64)
    n, p = Xc.shape
    if Xp.shape != (n, p) or y.shape != (n,) or theta_hat.shape != (p,):
        raise ValueError("dimension mismatch in residue")
    if theta_hat[j] == 0:
        raise ValueError(f"block {j} is inactive (zero coefficient)")
    before = np.arange(p) < j
    after = np.arange(p) > j
    return y - Xc[:, before] @ theta_hat[before] - Xp[:, after] @ theta_hat[after]


def block_update(r_j, theta_j: float, order_j: MonotoneOrder):
    """Standardized isotonic fit of ``r_j / theta_j``; returns a ProjectionResult.

    A negative ``theta_j`` flips the residual, so the increasing cone ends
    up fitting a decreasing trend in the raw residual.
    """
    if theta_j == 0:
        raise ValueError("block_update needs a nonzero coefficient")
    return standardized_isotonic(np.asarray(r_j, dtype=np.float64) / theta_j, order_j)


def block_orders(X, columns) -> dict[int, MonotoneOrder]:
    return {int(j): monotone_order(X[:, j]) for j in columns}


def estimate_hidden_design(y, X, theta_hat, cfg: BackfitConfig | None = None, orders=None) -> BackfitState:
    """Run cyclic backfitting from ``X_hat = 0``.

    The full residual ``y - X_hat theta`` is kept up to date in O(n) per
    block and refreshed from scratch at the end of every sweep.
    """
    cfg = cfg or BackfitConfig()
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    theta_hat = np.asarray(theta_hat, dtype=np.float64).reshape(-1)
    n, p = X.shape
    if y.shape[0] != n or theta_hat.shape[0] != p:
        raise ValueError(f"dimension mismatch: X {X.shape}, y {y.shape}, theta {theta_hat.shape}")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y)) and np.all(np.isfinite(theta_hat))):
        raise ValueError("non-finite data passed to backfitting")
    active = np.flatnonzero(theta_hat)
    if active.size == 0:
        raise ValueError("all coefficients are zero; nothing to backfit")
    if orders is None:
        orders = block_orders(X, active)

    X_hat = np.zeros((n, p))
    resid = y.copy()
    state = BackfitState(X_hat=X_hat, active_set=active)
    prev_obj = _objective(resid)
    for k in range(1, cfg.rounds + 1):
        change = 0.0
        for j in active:
            t = theta_hat[j]
            r_j = resid + t * X_hat[:, j]
            proj = block_update(r_j, t, orders[int(j)])
            change = max(change, float(np.max(np.abs(proj.value - X_hat[:, j]))))
            state.worst_kkt_gap = max(state.worst_kkt_gap, proj.kkt_gap)
            state.worst_feasibility = max(state.worst_feasibility, proj.feasibility)
            X_hat[:, j] = proj.value
            resid = r_j - t * proj.value
        resid = y - X_hat[:, active] @ theta_hat[active]
        obj = _objective(resid)
        state.rounds_run = k
        state.max_change.append(change)
        if cfg.track_objective:
            state.objective_history.append(obj)
        decrease = prev_obj - obj
        if cfg.rel_tol > 0 and (obj == 0.0 or decrease <= cfg.rel_tol * prev_obj):
            break
        if change <= cfg.change_tol:
            break
        prev_obj = obj
    return state
