"""Sample Kendall's tau statistics and their sine transforms.

The tau kernel follows the plain pairwise definition

    t(u, v) = 1 / (n (n - 1)) * sum_{k != k'} sign((u_k - u_k') (v_k - v_k'))

with sign(0) = 0 and no tie correction (tau-a).  It is evaluated in
O(n log n) by sorting on (u, v) and counting inversions with a merge sort,
so the counts are integers and the result matches the O(n^2) double loop
to the last bit.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from numba import njit, prange

__all__ = [
    "RankCorrelation",
    "as_design",
    "as_response",
    "kendall_tau_pair",
    "kendall_tau_naive",
    "kendall_matrix",
    "kendall_vector",
    "sine_transform",
    "rank_correlation",
    "re_diagnostic",
]

CLAMP_TOL = 1e-12


@dataclass(frozen=True)
class RankCorrelation:
    """Plug-in statistics for the Kendall's tau Dantzig selector.

    Attributes
    ----------
    tau_matrix : (p, p) ndarray
        Sample Kendall's tau matrix between the columns of X.
    sigma_hat : (p, p) ndarray
        ``sin(pi/2 * tau_matrix)``, the latent correlation estimate.
    b_hat : (p,) ndarray
        Kendall's tau between each column of X and y.
    beta_hat : (p,) ndarray
        ``sin(pi/2 * b_hat)``.
    """

    tau_matrix: np.ndarray
    sigma_hat: np.ndarray
    b_hat: np.ndarray
    beta_hat: np.ndarray


def as_design(X) -> np.ndarray:
    """Validate a design matrix (n >= 2 rows, finite) and return it as float64."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2:
        raise ValueError(f"design matrix must be 2-d, got shape {X.shape}")
    if X.shape[0] < 2:
        raise ValueError("design matrix needs at least 2 rows")
    if not np.all(np.isfinite(X)):
        raise ValueError("design matrix contains non-finite entries")
    return X


def as_response(y, n: int | None = None) -> np.ndarray:
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if n is not None and y.shape[0] != n:
        raise ValueError(f"response has length {y.shape[0]}, expected {n}")
    if not np.all(np.isfinite(y)):
        raise ValueError("response contains non-finite entries")
    return y


# ----------------------------------------------------------------------
# numba kernels
# ----------------------------------------------------------------------

@njit(cache=True)
def _dense_rank(x):
    n = x.shape[0]
    order = np.argsort(x, kind="mergesort")
    ranks = np.empty(n, dtype=np.int64)
    r = 0
    ranks[order[0]] = 0
    for k in range(1, n):
        if x[order[k]] != x[order[k - 1]]:
            r += 1
        ranks[order[k]] = r
    return ranks


@njit(cache=True)
def _tied_pairs(ranks):
    # number of unordered pairs sharing a rank
    counts = np.zeros(ranks.max() + 1, dtype=np.int64)
    for k in range(ranks.shape[0]):
        counts[ranks[k]] += 1
    total = 0
    for c in counts:
        total += c * (c - 1) // 2
    return total


@njit(cache=True)
def _count_inversions(a):
    """Number of pairs i < j with a[i] > a[j]; sorts ``a`` in place."""
    n = a.shape[0]
    buf = np.empty_like(a)
    inv = 0
    width = 1
    while width < n:
        lo = 0
        while lo < n - width:
            mid = lo + width
            hi = min(lo + 2 * width, n)
            i, j, k = lo, mid, lo
            while i < mid and j < hi:
                if a[j] < a[i]:
                    buf[k] = a[j]
                    inv += mid - i
                    j += 1
                else:
                    buf[k] = a[i]
                    i += 1
                k += 1
            while i < mid:
                buf[k] = a[i]
                i += 1
                k += 1
            while j < hi:
                buf[k] = a[j]
                j += 1
                k += 1
            for t in range(lo, hi):
                a[t] = buf[t]
            lo += 2 * width
        width *= 2
    return inv


@njit(cache=True)
def _tau_from_ranks(ru, rv, ties_u, ties_v):
    n = ru.shape[0]
    key = ru * n + rv
    order = np.argsort(key, kind="mergesort")
    skey = key[order]
    # pairs tied in both coordinates
    ties_uv = 0
    run = 1
    for k in range(1, n):
        if skey[k] == skey[k - 1]:
            run += 1
        else:
            ties_uv += run * (run - 1) // 2
            run = 1
    ties_uv += run * (run - 1) // 2
    v_sorted = rv[order].copy()
    discordant = _count_inversions(v_sorted)
    n0 = n * (n - 1) // 2
    untied = n0 - ties_u - ties_v + ties_uv
    return (untied - 2 * discordant) / n0


@njit(cache=True, parallel=True)
def _kendall_matrix_kernel(ranks, ties):
    p = ranks.shape[1]
    n_pairs = p * (p + 1) // 2
    rows = np.empty(n_pairs, dtype=np.int64)
    cols = np.empty(n_pairs, dtype=np.int64)
    m = 0
    for i in range(p):
        for j in range(i, p):
            rows[m] = i
            cols[m] = j
            m += 1
    out = np.empty((p, p))
    for m in prange(n_pairs):
        i = rows[m]
        j = cols[m]
        t = _tau_from_ranks(ranks[:, i], ranks[:, j], ties[i], ties[j])
        out[i, j] = t
        out[j, i] = t
    return out


def _ranks_and_ties(X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    n, p = X.shape
    ranks = np.empty((n, p), dtype=np.int64)
    ties = np.empty(p, dtype=np.int64)
    for j in range(p):
        ranks[:, j] = _dense_rank(np.ascontiguousarray(X[:, j]))
        ties[j] = _tied_pairs(ranks[:, j])
    return ranks, ties


# ----------------------------------------------------------------------
# public API
# ----------------------------------------------------------------------

def _check_pair(u, v) -> tuple[np.ndarray, np.ndarray]:
    u = np.asarray(u, dtype=np.float64).reshape(-1)
    v = np.asarray(v, dtype=np.float64).reshape(-1)
    if u.shape != v.shape:
        raise ValueError(f"length mismatch: {u.shape[0]} vs {v.shape[0]}")
    if u.shape[0] < 2:
        raise ValueError("Kendall's tau needs at least 2 observations")
    if not (np.all(np.isfinite(u)) and np.all(np.isfinite(v))):
        raise ValueError("non-finite input to Kendall's tau")
    return u, v


def kendall_tau_pair(u, v) -> float:
    """Sample Kendall's tau (tau-a, ties contribute zero) in O(n log n)."""
    u, v = _check_pair(u, v)
    ru = _dense_rank(u)
    rv = _dense_rank(v)
    return float(_tau_from_ranks(ru, rv, _tied_pairs(ru), _tied_pairs(rv)))


def kendall_tau_naive(u, v) -> float:
    """O(n^2) reference evaluation of the pairwise-sign definition."""
    u, v = _check_pair(u, v)
    n = u.shape[0]
    total = 0
    for k in range(n):
        total += int(np.sum(np.sign((u[k] - u) * (v[k] - v))))
    return total / (n * (n - 1))


def kendall_matrix(X) -> np.ndarray:
    """Sample Kendall's tau matrix between all column pairs of ``X``.

    Columns with no variation get a zero diagonal entry, since every pair
    is tied.  A warning is emitted in that case.
    """
    X = as_design(X)
    ranks, ties = _ranks_and_ties(X)
    n = X.shape[0]
    constant = np.flatnonzero(ties == n * (n - 1) // 2)
    if constant.size:
        warnings.warn(
            f"constant columns {constant.tolist()} give a zero Kendall diagonal",
            RuntimeWarning,
            stacklevel=2,
        )
    return _kendall_matrix_kernel(ranks, ties)


def kendall_vector(X, y) -> np.ndarray:
    """Kendall's tau between every column of ``X`` and the response ``y``."""
    X = as_design(X)
    y = as_response(y, X.shape[0])
    ranks, ties = _ranks_and_ties(X)
    ry = _dense_rank(y)
    ty = _tied_pairs(ry)
    return np.array(
        [_tau_from_ranks(ranks[:, j], ry, ties[j], ty) for j in range(X.shape[1])]
    )


def sine_transform(t):
    """Map Kendall's tau to a latent Pearson correlation, ``sin(pi t / 2)``.

    Works on scalars and arrays.  Inputs overshooting [-1, 1] by at most
    1e-12 are clamped; anything further out raises ``ValueError``.
    """
    arr = np.asarray(t, dtype=np.float64)
    if np.any(np.abs(arr) > 1.0 + CLAMP_TOL) or not np.all(np.isfinite(arr)):
        raise ValueError("sine_transform expects values in [-1, 1]")
    out = np.sin(0.5 * np.pi * np.clip(arr, -1.0, 1.0))
    if np.ndim(t) == 0:
        return float(out)
    return out


def rank_correlation(X, y) -> RankCorrelation:
    """Compute T-hat, Sigma-hat, b-hat and beta-hat in one pass over X."""
    X = as_design(X)
    y = as_response(y, X.shape[0])
    tau = kendall_matrix(X)
    b = kendall_vector(X, y)
    sigma = sine_transform(tau)
    np.fill_diagonal(sigma, sine_transform(np.diag(tau)))
    return RankCorrelation(
        tau_matrix=tau, sigma_hat=sigma, b_hat=b, beta_hat=sine_transform(b)
    )


def re_diagnostic(sigma, s: int, trials: int, rng_seed=None) -> float:
    """Smallest quadratic form ``v' Sigma v`` over random s-sparse unit vectors.

    This is a sampled proxy for the restricted eigenvalue.  Because it only
    inspects finitely many directions, the value is an *upper* bound on the
    true restricted minimum, never a certified lower bound.
    """
    sigma = np.asarray(sigma, dtype=np.float64)
    p = sigma.shape[0]
    if sigma.shape != (p, p) or not np.allclose(sigma, sigma.T, atol=1e-10):
        raise ValueError("sigma must be a symmetric square matrix")
    if not 1 <= s <= p:
        raise ValueError(f"sparsity s={s} outside [1, {p}]")
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = np.random.default_rng(rng_seed)
    best = np.inf
    for _ in range(trials):
        idx = rng.choice(p, size=s, replace=False)
        w = rng.standard_normal(s)
        w /= np.linalg.norm(w)
        best = min(best, float(w @ sigma[np.ix_(idx, idx)] @ w))
    return best
