"""Projections onto the monotone cone, the centering hyperplane and the ball.

``M(x)`` is the set of vectors ordered like ``x``: non-decreasing along
ascending ``x`` and exactly equal wherever ``x`` has ties.  The
standardized isotonic regression projects onto ``M(x) ∩ L ∩ B`` with
``L = {z : 1'z = 0}`` and ``B = {z : ||z||_2 <= sqrt(n)}``; it is computed as
``P_B(P_L(P_M(z)))`` and cross-checked against Dykstra's algorithm.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

__all__ = [
    "MonotoneOrder",
    "ProjectionResult",
    "DykstraResult",
    "monotone_order",
    "pava",
    "pava_naive",
    "project_centering",
    "project_ball",
    "standardized_isotonic",
    "pava_kkt_gap",
    "dykstra_oracle",
]


@dataclass(frozen=True)
class MonotoneOrder:
    """Stable ascending sort of an inducing vector plus its exact-tie runs.

    ``starts`` holds the sorted position where each tie group begins, with a
    trailing sentinel ``n``.
    """

    perm: np.ndarray
    starts: np.ndarray

    @property
    def n(self) -> int:
        return self.perm.shape[0]

    @property
    def groups(self) -> list[np.ndarray]:
        return [self.perm[a:b] for a, b in zip(self.starts[:-1], self.starts[1:])]


@dataclass(frozen=True)
class ProjectionResult:
    """Projected vector with post-hoc diagnostics.

    ``feasibility`` is the largest violation of order, zero sum and radius
    by ``value``; ``kkt_gap`` additionally covers the optimality conditions.
    """

    value: np.ndarray
    kkt_gap: float
    feasibility: float = 0.0


@dataclass(frozen=True)
class DykstraResult:
    value: np.ndarray
    cycles: int
    converged: bool


def monotone_order(x) -> MonotoneOrder:
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    if not np.all(np.isfinite(x)):
        raise ValueError("inducing vector contains non-finite entries")
    perm = np.argsort(x, kind="stable")
    xs = x[perm]
    if xs.size == 0:
        return MonotoneOrder(perm, np.zeros(1, dtype=np.int64))
    breaks = np.flatnonzero(xs[1:] != xs[:-1]) + 1
    starts = np.concatenate(([0], breaks, [xs.size])).astype(np.int64)
    return MonotoneOrder(perm, starts)


@njit(cache=True)
def _pava_sorted(zs, starts):
    # tie groups enter as pre-pooled weighted blocks
    m = starts.shape[0] - 1
    sums = np.empty(m)
    counts = np.empty(m, dtype=np.int64)
    first = np.empty(m, dtype=np.int64)
    top = -1
    for g in range(m):
        s = 0.0
        for k in range(starts[g], starts[g + 1]):
            s += zs[k]
        top += 1
        sums[top] = s
        counts[top] = starts[g + 1] - starts[g]
        first[top] = starts[g]
        while top > 0 and sums[top - 1] * counts[top] > sums[top] * counts[top - 1]:
            sums[top - 1] += sums[top]
            counts[top - 1] += counts[top]
            top -= 1
    out = np.empty_like(zs)
    for b in range(top + 1):
        mean = sums[b] / counts[b]
        for k in range(first[b], first[b] + counts[b]):
            out[k] = mean
    return out


def _check_len(z, order: MonotoneOrder) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64).reshape(-1)
    if z.shape[0] != order.n:
        raise ValueError(f"vector has length {z.shape[0]}, order has length {order.n}")
    return z


def pava(z, order: MonotoneOrder) -> np.ndarray:
    """Euclidean projection of ``z`` onto ``M(x)`` by pool-adjacent-violators."""
    z = _check_len(z, order)
    if z.size == 0:
        return z.copy()
    out = np.empty_like(z)
    out[order.perm] = _pava_sorted(np.ascontiguousarray(z[order.perm]), order.starts)
    return out


def pava_naive(z, order: MonotoneOrder) -> np.ndarray:
    """Quadratic-time reference: merge the first violating block pair, rescan."""
    z = _check_len(z, order)
    zs = z[order.perm]
    blocks = [list(range(a, b)) for a, b in zip(order.starts[:-1], order.starts[1:])]
    while True:
        means = [np.mean(zs[b]) for b in blocks]
        for i in range(len(blocks) - 1):
            if means[i] > means[i + 1]:
                blocks[i] = blocks[i] + blocks.pop(i + 1)
                break
        else:
            break
    out_sorted = np.empty_like(zs)
    for b in blocks:
        out_sorted[b] = np.mean(zs[b])
    out = np.empty_like(z)
    out[order.perm] = out_sorted
    return out


def project_centering(z) -> np.ndarray:
    """Projection onto ``{v : sum(v) = 0}``."""
    z = np.asarray(z, dtype=np.float64)
    if not np.all(np.isfinite(z)):
        raise ValueError("non-finite input")
    return z - z.mean()


def project_ball(z) -> np.ndarray:
    """Projection onto the l2 ball of radius ``sqrt(len(z))``."""
    z = np.asarray(z, dtype=np.float64)
    norm = np.linalg.norm(z)
    radius = np.sqrt(z.size)
    if norm <= radius:
        return z.copy()
    return z * (radius / norm)


def pava_kkt_gap(z, v, order: MonotoneOrder) -> float:
    """Largest violation of the optimality conditions of ``v = P_M(z)``.

    Along the sorted order, the partial sums ``c_k`` of ``z - v`` are the
    multipliers of the constraints ``v_k <= v_{k+1}``: they must be
    non-negative, vanish where the constraint is slack, and sum to zero
    overall.  Inside a tie group the constraint is an equality, so only the
    equality itself is checked there.
    """
    z = _check_len(z, order)
    v = _check_len(v, order)
    if z.size == 0:
        return 0.0
    zs, vs = z[order.perm], v[order.perm]
    c = np.cumsum(zs - vs)
    step = np.diff(vs)
    tied = np.ones(zs.size - 1, dtype=bool)
    tied[order.starts[1:-1] - 1] = False
    free = ~tied
    gaps = [abs(c[-1]), 0.0]
    if free.any():
        gaps.append(np.max(np.maximum(-c[:-1][free], 0.0)))
        gaps.append(np.max(np.maximum(-step[free], 0.0)))
        gaps.append(np.max(np.abs(c[:-1][free] * step[free])))
    if tied.any():
        gaps.append(np.max(np.abs(step[tied])))
    return float(max(gaps))


@njit(cache=True)
def _neumaier_sum(a):
    s = 0.0
    comp = 0.0
    for v in a:
        t = s + v
        if abs(s) >= abs(v):
            comp += (s - t) + v
        else:
            comp += (v - t) + s
        s = t
    return s + comp


@njit(cache=True)
def _standardized_kernel(z, perm, starts):
    # P_B(P_L(P_M(z))) plus the PAVA optimality gap and feasibility residuals
    n = z.shape[0]
    zs = np.empty(n)
    for k in range(n):
        zs[k] = z[perm[k]]
    iso = _pava_sorted(zs, starts)
    gap = 0.0
    c = 0.0
    g = 1
    for k in range(n - 1):
        c += zs[k] - iso[k]
        step = iso[k + 1] - iso[k]
        if k + 1 == starts[g]:
            g += 1
            gap = max(gap, -c, -step, abs(c * step))
        else:
            gap = max(gap, abs(step))
    c += zs[n - 1] - iso[n - 1]
    gap = max(gap, abs(c))
    # two centering passes with compensated sums; a naive mean leaves a
    # residual of order n * eps * max|iso| when z is large
    for _ in range(2):
        mean = _neumaier_sum(iso) / n
        for k in range(n):
            iso[k] -= mean
    norm2 = 0.0
    for k in range(n):
        norm2 += iso[k] * iso[k]
    norm = np.sqrt(norm2)
    radius = np.sqrt(n)
    if norm > radius:
        scale = radius / norm
        for k in range(n):
            iso[k] *= scale
    total = 0.0
    norm2 = 0.0
    feas = 0.0
    g = 1
    for k in range(n):
        total += iso[k]
        norm2 += iso[k] * iso[k]
        if k > 0:
            if k == starts[g]:
                g += 1
                feas = max(feas, iso[k - 1] - iso[k])
            else:
                feas = max(feas, abs(iso[k] - iso[k - 1]))
    feas = max(feas, abs(total), np.sqrt(norm2) - radius)
    out = np.empty(n)
    for k in range(n):
        out[perm[k]] = iso[k]
    return out, max(gap, feas), feas


def standardized_isotonic(z, order: MonotoneOrder) -> ProjectionResult:
    """Project onto ``M(x) ∩ L ∩ B`` as ``P_B(P_L(P_M(z)))``.

    ``kkt_gap`` combines the PAVA optimality gap of the first stage with the
    feasibility residuals (order, zero sum, radius) of the returned vector.
    The three stages run fused in one compiled pass; ``pava``,
    ``project_centering`` and ``project_ball`` compute the same stages
    separately.
    """
    z = _check_len(z, order)
    if not np.all(np.isfinite(z)):
        raise ValueError("non-finite input")
    if z.size == 0:
        return ProjectionResult(z.copy(), 0.0, 0.0)
    value, gap, feas = _standardized_kernel(z, order.perm, order.starts)
    return ProjectionResult(value, float(gap), float(feas))


def dykstra_oracle(z, order: MonotoneOrder, tol: float = 1e-10, max_cycles: int = 100_000) -> DykstraResult:
    """Dykstra's alternating projections over ``M(x)``, ``L`` and ``B``.

    Converges to the projection onto the intersection without using any
    structure linking the three sets.  The sets are visited in the order
    B, L, M.  Stops when one full cycle moves the iterate by less than
    ``tol`` in the max norm.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    x = _check_len(z, order).copy()
    # ball first: with the cone first, cycle one would reproduce the
    # composed closed form verbatim
    projections = (
        project_ball,
        project_centering,
        lambda w: pava(w, order),
    )
    increments = [np.zeros_like(x) for _ in projections]
    for cycle in range(1, max_cycles + 1):
        start = x
        for i, proj in enumerate(projections):
            y = proj(x + increments[i])
            increments[i] = x + increments[i] - y
            x = y
        if np.max(np.abs(x - start), initial=0.0) < tol:
            return DykstraResult(x, cycle, True)
    return DykstraResult(x, max_cycles, False)
