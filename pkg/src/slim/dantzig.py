"""Dantzig selector:  min ||theta||_1  s.t.  ||Q theta - r||_inf <= gamma.

With ``Q = Sigma-hat`` and ``r = beta-hat`` this is the Kendall's tau Dantzig
selector; with the Gram matrix and correlation vector of an observed design
it is the ordinary Dantzig selector used by the linear baseline.

The solver is ADMM on the splitting ``x = theta``, ``z = Q theta - r``:

    theta <- (I + Q^2)^{-1} (x - u + Q (z + r - v))
    x     <- soft(theta + u, 1 / rho)
    z     <- clip(Q theta - r + v, -gamma, gamma)
    u, v  <- u + theta - x, v + Q theta - r - z

The operator (I + Q^2)^{-1} does not depend on rho, so it is formed once
from an eigendecomposition of Q and penalty adaptation stays free.

Because first-order iterates only approach the LP vertex slowly, every few
iterations the current support and active constraints are used to solve
for the vertex exactly; the candidate is accepted once a dual certificate
closes the duality gap.  The dual of the program is

    max  w'r - gamma ||w||_1   s.t.  ||Q w||_inf <= 1,

so any feasible ``w`` gives a lower bound on the optimal l1 norm.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
from numba import njit

__all__ = [
    "InfeasibleProblemError",
    "SolverError",
    "KdsProblem",
    "KdsSolution",
    "SolverConfig",
    "residual_inf_norm",
    "solve_kds",
    "lp_oracle",
    "dual_bound",
]


class SolverError(RuntimeError):
    """Raised when the iteration produces NaN or inf."""


class InfeasibleProblemError(ValueError):
    """Raised when no theta satisfies the l-infinity constraint."""


@dataclass(frozen=True)
class KdsProblem:
    Q: np.ndarray
    r: np.ndarray
    gamma: float

    def __post_init__(self):
        Q = np.asarray(self.Q, dtype=np.float64)
        r = np.asarray(self.r, dtype=np.float64).reshape(-1)
        if Q.ndim != 2 or Q.shape[0] != Q.shape[1]:
            raise ValueError(f"Q must be square, got shape {Q.shape}")
        if Q.shape[0] != r.shape[0]:
            raise ValueError(f"Q is {Q.shape[0]}x{Q.shape[0]} but r has length {r.shape[0]}")
        if not (np.all(np.isfinite(Q)) and np.all(np.isfinite(r))):
            raise ValueError("Q and r must be finite")
        if np.max(np.abs(Q - Q.T), initial=0.0) > 1e-10:
            raise ValueError("Q must be symmetric")
        if not np.isfinite(self.gamma) or self.gamma < 0:
            raise ValueError(f"gamma must be a non-negative real, got {self.gamma}")
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "gamma", float(self.gamma))

    @property
    def p(self) -> int:
        return self.r.shape[0]


@dataclass(frozen=True)
class KdsSolution:
    theta_check: np.ndarray
    objective: float
    residual_inf: float
    iterations: int
    converged: bool
    status: str = "optimal"
    gap: float = 0.0


@dataclass(frozen=True)
class SolverConfig:
    max_iterations: int = 5000
    abs_tol: float = 1e-7
    feas_tol: float = 1e-6
    penalty: float = 1.0
    rng_seed: int | None = None
    polish_every: int = 25
    gap_tol: float = 1e-9

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        for name in ("abs_tol", "feas_tol", "penalty", "gap_tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")


PENALTY_BOUNDS = (1e-4, 1e4)
DUAL_DIVERGENCE = 1e8
STAGNATION_WINDOW = 500
RELAX = 1.6
POLISH_MAX_INTERVAL = 200


def residual_inf_norm(Q, theta, r) -> float:
    """``||Q theta - r||_inf``."""
    Q = np.asarray(Q, dtype=np.float64)
    theta = np.asarray(theta, dtype=np.float64).reshape(-1)
    r = np.asarray(r, dtype=np.float64).reshape(-1)
    if Q.ndim != 2 or Q.shape[1] != theta.shape[0] or Q.shape[0] != r.shape[0]:
        raise ValueError(
            f"dimension mismatch: Q {Q.shape}, theta {theta.shape}, r {r.shape}"
        )
    if r.size == 0:
        return 0.0
    return float(np.max(np.abs(Q @ theta - r)))


def dual_bound(prob: KdsProblem, w: np.ndarray) -> float:
    """Lower bound on the optimal objective from a dual vector ``w``.

    ``w`` is rescaled into the dual feasible set ``||Q w||_inf <= 1`` first,
    so the bound is valid for any input.
    """
    scale = np.max(np.abs(prob.Q @ w), initial=0.0)
    if scale > 1.0:
        w = w / scale
    return float(w @ prob.r - prob.gamma * np.sum(np.abs(w)))


def _soft(x, t):
    return np.sign(x) * np.maximum(np.abs(x) - t, 0.0)


def _vertex(prob: KdsProblem, support, active, side, feas_tol):
    """Solve the square system for one (support, active set) guess and certify it."""
    Q, r, gamma = prob.Q, prob.r, prob.gamma
    try:
        theta_s = np.linalg.solve(Q[np.ix_(active, support)], r[active] + gamma * side)
        signs = np.sign(theta_s)
        if np.any(signs == 0):
            return None
        w_a = np.linalg.solve(Q[np.ix_(support, active)], signs)
    except np.linalg.LinAlgError:
        return None
    cand = np.zeros(prob.p)
    cand[support] = theta_s
    if not np.all(np.isfinite(cand)) or not np.all(np.isfinite(w_a)):
        return None
    if residual_inf_norm(Q, cand, r) > gamma + feas_tol:
        return None
    w = np.zeros(prob.p)
    w[active] = w_a
    obj = float(np.sum(np.abs(cand)))
    return cand, obj - dual_bound(prob, w)


def _certified(out, gap_tol):
    return out is not None and out[1] <= gap_tol * max(1.0, float(np.sum(np.abs(out[0]))))


def _polish(prob: KdsProblem, theta, v, feas_tol, gap_tol):
    """Solve for the LP vertex suggested by the ADMM iterate.

    ``v`` is the scaled dual of the residual constraint; its nonzeros mark
    the active constraints and its sign says which side is tight.  Guesses
    tried in turn: the primal support with the strongest duals; the dual
    active set with the coordinates where ``|Q v|`` is largest (where the
    l1 subgradient saturates); and, when support and active set differ in
    size by one, every single-element completion.  Returns ``(theta, gap)``
    for the first candidate whose duality gap is within ``gap_tol``.
    """
    scale = max(1.0, np.max(np.abs(theta), initial=0.0))
    support = np.flatnonzero(np.abs(theta) > 1e-12 * scale)
    strength = np.abs(v)
    candidates = np.flatnonzero(strength > 0)
    if candidates.size == 0:
        return None
    active = np.sort(candidates)
    ranked = candidates[np.argsort(-strength[candidates], kind="stable")]
    k = support.size
    slope = np.abs(prob.Q @ v)
    guesses = []
    if 0 < k <= ranked.size:
        guesses.append((support, np.sort(ranked[:k])))
    guesses.append((np.sort(np.argsort(-slope, kind="stable")[: ranked.size]), active))
    for sup, act in guesses:
        out = _vertex(prob, sup, act, np.sign(v[act]), feas_tol)
        if _certified(out, gap_tol):
            return out
    if k == 0:
        return None
    if active.size == k + 1:
        pool = np.setdiff1d(np.arange(prob.p), support)
        for j in pool[np.argsort(-slope[pool], kind="stable")]:
            out = _vertex(prob, np.sort(np.append(support, j)), active, np.sign(v[active]), feas_tol)
            if _certified(out, gap_tol):
                return out
    elif active.size == k - 1:
        pool = np.setdiff1d(np.arange(prob.p), active)
        for i in pool:
            act = np.sort(np.append(active, i))
            for sgn in (1.0, -1.0):
                side = np.sign(v[act])
                side[act == i] = sgn
                out = _vertex(prob, support, act, side, feas_tol)
                if _certified(out, gap_tol):
                    return out
    return None


@njit(cache=True)
def _admm_run(M, Q, r, gamma, x, z, u, v, rho, it, stop, tol, best_primal, since_best, stag_floor):
    """Advance ADMM from iteration ``it`` up to ``stop`` in place.

    Returns ``(it, code, rho, best_primal, since_best)`` with code 0 for
    reaching ``stop``, 1 for the residual tolerance, 2 for the
    infeasibility signal and 3 for a non-finite iterate.
    """
    p = x.shape[0]
    while it < stop:
        it += 1
        theta = M @ (x - u + Q @ (z + r - v))
        Qtheta = Q @ theta
        x_old = x.copy()
        z_old = z.copy()
        primal2 = 0.0
        for i in range(p):
            # over-relaxed copies of the two linear constraints
            th_r = RELAX * theta[i] + (1.0 - RELAX) * x_old[i]
            w_r = RELAX * (Qtheta[i] - r[i]) + (1.0 - RELAX) * z_old[i]
            a = th_r + u[i]
            mag = abs(a) - 1.0 / rho
            x[i] = np.sign(a) * mag if mag > 0.0 else 0.0
            b = w_r + v[i]
            z[i] = min(max(b, -gamma), gamma)
            u[i] += th_r - x[i]
            v[i] += w_r - z[i]
            ex = theta[i] - x[i]
            ez = Qtheta[i] - r[i] - z[i]
            primal2 += ex * ex + ez * ez
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(v))):
            return it, 3, rho, best_primal, since_best
        primal = np.sqrt(primal2)
        dvec = (x - x_old) + Q @ (z - z_old)
        dual = rho * np.sqrt(dvec @ dvec)
        if primal <= tol and dual <= tol:
            return it, 1, rho, best_primal, since_best
        if rho * max(np.max(np.abs(u)), np.max(np.abs(v))) > DUAL_DIVERGENCE:
            return it, 2, rho, best_primal, since_best
        if primal < 0.99 * best_primal:
            best_primal = primal
            since_best = 0
        else:
            since_best += 1
            if since_best >= STAGNATION_WINDOW and primal > stag_floor:
                return it, 2, rho, best_primal, since_best
        if it % 10 == 0:
            if primal > 10.0 * dual and rho < PENALTY_BOUNDS[1]:
                rho *= 2.0
                u /= 2.0
                v /= 2.0
            elif dual > 10.0 * primal and rho > PENALTY_BOUNDS[0]:
                rho /= 2.0
                u *= 2.0
                v *= 2.0
    return it, 0, rho, best_primal, since_best


def solve_kds(prob: KdsProblem, cfg: SolverConfig | None = None) -> KdsSolution:
    """Solve the Dantzig selector LP with ADMM plus vertex polishing.

    Returns the best feasible iterate found.  ``converged`` is True only
    when the returned point satisfies the constraint within ``feas_tol``
    and either a dual certificate or the ADMM residual test succeeded.
    Infeasibility (diverging duals or a primal residual that stops improving
    for 500 iterations) is reported through ``status="infeasible"``.
    Polishing starts every ``polish_every`` iterations and backs off
    geometrically after failures, up to ``POLISH_MAX_INTERVAL``.
    """
    cfg = cfg or SolverConfig()
    Q, r, gamma = prob.Q, prob.r, prob.gamma
    p = prob.p
    if p == 0 or np.max(np.abs(r), initial=0.0) <= gamma:
        return KdsSolution(np.zeros(p), 0.0, residual_inf_norm(Q, np.zeros(p), r), 0, True)

    # theta-step operator (I + Q^2)^{-1}; independent of rho
    lam, V = np.linalg.eigh(Q)
    M = np.ascontiguousarray((V / (1.0 + lam**2)) @ V.T)
    Qc = np.ascontiguousarray(Q)

    rho = float(cfg.penalty)
    x = np.zeros(p)
    z = -r.copy()
    u = np.zeros(p)
    v = np.zeros(p)
    best_primal = np.inf
    since_best = 0
    stag_floor = 1e-3 * max(1.0, float(np.max(np.abs(r))))
    tol = cfg.abs_tol * np.sqrt(2 * p)
    interval = cfg.polish_every
    next_polish = interval
    it = 0
    code = 0
    while it < cfg.max_iterations:
        stop = min(cfg.max_iterations, next_polish)
        it, code, rho, best_primal, since_best = _admm_run(
            M, Qc, r, gamma, x, z, u, v, rho, it, stop, tol, best_primal, since_best, stag_floor
        )
        if code == 3:
            raise SolverError(f"non-finite iterate at iteration {it}")
        if it == next_polish or code != 0 or it == cfg.max_iterations:
            polished = _polish(prob, x, v, cfg.feas_tol * 1e-3, cfg.gap_tol)
            if polished is not None:
                cand, gap = polished
                obj = float(np.sum(np.abs(cand)))
                return KdsSolution(cand, obj, residual_inf_norm(Q, cand, r), it, True, "optimal", gap)
            if it == next_polish:
                interval = min(2 * interval, max(POLISH_MAX_INTERVAL, cfg.polish_every))
                next_polish += interval
        if code != 0:
            break

    status = {0: "max_iter", 1: "tolerance", 2: "infeasible"}[code]
    res = residual_inf_norm(Q, x, r)
    obj = float(np.sum(np.abs(x)))
    converged = status == "tolerance" and res <= gamma + cfg.feas_tol
    if status == "tolerance" and not converged:
        status = "infeasible_iterate"
    return KdsSolution(x.copy(), obj, res, it, converged, status, np.nan)


def lp_oracle(prob: KdsProblem, max_p: int = 6) -> KdsSolution:
    """Exact optimum by exhaustive vertex enumeration (tiny problems only).

    Within each orthant the objective is linear and the feasible region is
    a pointed polyhedron, so an optimum sits where p of the hyperplanes
    ``theta_j = 0`` and ``(Q theta)_i = r_i +/- gamma`` meet.  All
    C(3p, p) such intersections are solved, and the feasible one with the
    smallest l1 norm wins.  Equivalent to scanning basic feasible solutions
    of the split LP ``theta = u - v``.
    """
    Q, r, gamma = prob.Q, prob.r, prob.gamma
    p = prob.p
    if p > max_p:
        raise ValueError(f"lp_oracle is limited to p <= {max_p}, got p={p}")
    if p == 0:
        return KdsSolution(np.zeros(0), 0.0, 0.0, 0, True)
    eye = np.eye(p)
    A = np.vstack([eye, Q, Q])
    b = np.concatenate([np.zeros(p), r + gamma, r - gamma])
    tol = 1e-9 * max(1.0, np.max(np.abs(r)), gamma)
    best = None
    best_obj = np.inf
    count = 0
    for rows in itertools.combinations(range(3 * p), p):
        rows = list(rows)
        M = A[rows]
        if abs(np.linalg.det(M)) < 1e-12:
            continue
        count += 1
        theta = np.linalg.solve(M, b[rows])
        if np.max(np.abs(Q @ theta - r)) > gamma + tol:
            continue
        obj = float(np.sum(np.abs(theta)))
        if obj < best_obj - 1e-13:
            best_obj = obj
            best = theta
    if best is None:
        raise InfeasibleProblemError("no vertex satisfies the l-infinity constraint")
    best = np.where(np.abs(best) < 1e-14, 0.0, best)
    return KdsSolution(best, best_obj, residual_inf_norm(Q, best, r), count, True)
