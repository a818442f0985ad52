"""Seeded oracle suites: projection identity, Kendall kernel, LP solver.

Each suite returns a ``CheckResult``; the ``check`` subcommand prints them
and the test suite asserts on them.
"""
from __future__ import annotations

import time
import warnings
from dataclasses import dataclass

import numpy as np

from .dantzig import KdsProblem, lp_oracle, solve_kds
from .isotonic import dykstra_oracle, monotone_order, standardized_isotonic
from .rank_corr import kendall_matrix, kendall_tau_naive, kendall_tau_pair

__all__ = ["CheckResult", "projection_suite", "kendall_suite", "lp_suite", "run_all"]


@dataclass(frozen=True)
class CheckResult:
    name: str
    cases: int
    failures: int
    worst: float
    tolerance: float
    seconds: float

    @property
    def passed(self) -> bool:
        return self.cases > 0 and self.failures == 0

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        return (
            f"{tag} {self.name}: {self.cases - self.failures}/{self.cases} within {self.tolerance:g}"
            f" (worst {self.worst:.3g}, {self.seconds:.2f}s)"
        )


def _projection_case(rng, tied: bool):
    n = int(rng.integers(2, 51))
    if tied:
        x = rng.integers(0, max(2, n // 3), size=n).astype(np.float64)
    else:
        x = rng.standard_normal(n)
    z = rng.standard_normal(n)
    # radius sqrt(n) scaled by a factor in [0.1, 10]: both sides of the ball
    z *= np.sqrt(n) * np.exp(rng.uniform(np.log(0.1), np.log(10.0))) / max(np.linalg.norm(z), 1e-300)
    return z, x


def projection_suite(cases: int = 1000, seed: int = 0, tol: float = 1e-6, tie_frac: float = 0.2) -> CheckResult:
    """Composed closed form against Dykstra on random (z, x) with n in 2..50."""
    rng = np.random.default_rng(seed)
    t0 = time.perf_counter()
    n_tied = int(round(tie_frac * cases))
    worst, failures = 0.0, 0
    for k in range(cases):
        z, x = _projection_case(rng, k < n_tied)
        order = monotone_order(x)
        got = standardized_isotonic(z, order).value
        ref = dykstra_oracle(z, order, tol=1e-10)
        err = float(np.max(np.abs(got - ref.value)))
        worst = max(worst, err)
        failures += int(err > tol or not ref.converged)
    return CheckResult("projection identity", cases, failures, worst, tol, time.perf_counter() - t0)


def _tied_column(rng, n):
    if rng.random() < 0.5:
        return rng.integers(0, max(2, n // 4), size=n).astype(np.float64)
    return np.round(rng.standard_normal(n), 1)


def _quiet_matrix(X):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return kendall_matrix(X)


def kendall_suite(cases: int = 500, seed: int = 0, tol: float = 1e-12) -> CheckResult:
    """Fast tau against the quadratic count, plus bitwise rank invariance.

    Every case carries ties in at least one of its two columns.  Invariance
    compares whole Kendall matrices of a 5-column design before and after
    x^3, exp and a positive affine map.
    """
    rng = np.random.default_rng(seed)
    t0 = time.perf_counter()
    worst, failures = 0.0, 0
    for _ in range(cases):
        n = int(rng.integers(2, 80))
        u = _tied_column(rng, n)
        v = _tied_column(rng, n) if rng.random() < 0.5 else rng.standard_normal(n)
        err = abs(kendall_tau_pair(u, v) - kendall_tau_naive(u, v))
        worst = max(worst, err)
        failures += int(err > tol)
        X = np.column_stack([u, v, rng.standard_normal((n, 3))])
        base = _quiet_matrix(X)
        for g in (lambda a: a**3, np.exp, lambda a: 2.5 * a + 3.0):
            if not np.array_equal(_quiet_matrix(g(X)), base):
                failures += 1
                worst = max(worst, float("inf"))
                break
    return CheckResult("kendall fast vs naive", cases, failures, worst, tol, time.perf_counter() - t0)


def random_lp(rng, p: int) -> KdsProblem:
    if rng.random() < 0.5:
        A = rng.standard_normal((p, p))
        Q = A @ A.T / p + 0.1 * np.eye(p)
    else:
        B = rng.uniform(-1.0, 1.0, (p, p))
        Q = 0.5 * (B + B.T)
    r = rng.uniform(-1.0, 1.0, p)
    return KdsProblem(Q, r, float(rng.uniform(0.0, 0.5)))


def lp_suite(cases: int = 200, seed: int = 0, tol: float = 1e-5, slack: float = 1e-6) -> CheckResult:
    """Solver objective against exhaustive vertex enumeration, p in 1..4.

    Failure means an objective off by more than ``tol * max(1, obj)`` or a
    constraint violated by more than ``slack``.
    """
    rng = np.random.default_rng(seed)
    t0 = time.perf_counter()
    worst, failures = 0.0, 0
    for _ in range(cases):
        prob = random_lp(rng, int(rng.integers(1, 5)))
        ref = lp_oracle(prob)
        sol = solve_kds(prob)
        rel = abs(sol.objective - ref.objective) / max(1.0, ref.objective)
        worst = max(worst, rel)
        failures += int(rel > tol or sol.residual_inf > prob.gamma + slack)
    return CheckResult("LP vs oracle", cases, failures, worst, tol, time.perf_counter() - t0)


def run_all(seed: int = 0) -> list[CheckResult]:
    return [projection_suite(seed=seed), kendall_suite(seed=seed), lp_suite(seed=seed)]
