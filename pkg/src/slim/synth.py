"""Nonparanormal synthetic data with known latent structure.

Latent rows are drawn from N(0, Sigma) with ``Sigma = A A'`` for a Gaussian
``A`` with unit-norm rows, the response is ``y = X_latent theta + noise``, and
each observed column is a strictly increasing transform of its latent
column (the inverse link ``f_j^{-1}``).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np
from scipy.special import ndtr

__all__ = [
    "TransformKind",
    "GeneratorConfig",
    "GroundTruth",
    "apply_transform",
    "make_covariance",
    "sample_latent",
    "draw_theta",
    "gen_dataset",
    "derive_seed",
]

JITTER_MAX = 1e-10


class TransformKind(IntEnum):
    """The ten inverse links, numbered as in the usual table (1-based)."""

    CUBE = 1
    SIGNED_SQRT = 2
    EXP = 3
    NORMAL_CDF = 4
    X_EXP_SQRT = 5
    X_LOG = 6
    SIGMOID = 7
    SHIFT = 8
    SIGNED_LOG = 9
    SOFTPLUS = 10


def _softplus(v):
    # log(exp(v) + 1) without overflow
    return np.maximum(v, 0.0) + np.log1p(np.exp(-np.abs(v)))


def _sigmoid(v):
    e = np.exp(-np.abs(v))
    return np.where(v >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


_TRANSFORMS = {
    TransformKind.CUBE: lambda v: v**3,
    TransformKind.SIGNED_SQRT: lambda v: np.sign(v) * np.sqrt(np.abs(v)),
    TransformKind.EXP: lambda v: np.exp(np.minimum(v, 700.0)),
    TransformKind.NORMAL_CDF: ndtr,
    TransformKind.X_EXP_SQRT: lambda v: v * np.exp(np.sqrt(np.abs(v))),
    TransformKind.X_LOG: lambda v: v * np.log1p(np.abs(v)),
    TransformKind.SIGMOID: _sigmoid,
    TransformKind.SHIFT: lambda v: v - 1.0,
    TransformKind.SIGNED_LOG: lambda v: np.sign(v) * np.log1p(np.abs(v)),
    TransformKind.SOFTPLUS: _softplus,
}


def apply_transform(kind, v):
    """Evaluate the inverse link ``kind`` at ``v`` (scalar or array)."""
    kind = TransformKind(kind)
    arr = np.asarray(v, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise ValueError("apply_transform expects finite input")
    out = _TRANSFORMS[kind](arr)
    if np.ndim(v) == 0:
        return float(out)
    return out


def derive_seed(*keys: int) -> int:
    """Deterministic 63-bit seed for a (base, trial, ...) key."""
    ss = np.random.SeedSequence([int(k) for k in keys])
    return int(ss.generate_state(2, dtype=np.uint32).astype(np.uint64) @ np.array([1 << 31, 1], dtype=np.uint64))


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def make_covariance(p: int, rng_seed=None) -> np.ndarray:
    """``A A'`` for a p x p standard Gaussian ``A`` with rows scaled to unit norm."""
    if p < 1:
        raise ValueError("p must be >= 1")
    rng = _rng(rng_seed)
    A = rng.standard_normal((p, p))
    A /= np.linalg.norm(A, axis=1, keepdims=True)
    sigma = A @ A.T
    sigma = 0.5 * (sigma + sigma.T)
    np.fill_diagonal(sigma, 1.0)
    return sigma


def sample_latent(sigma, n: int, rng_seed=None) -> np.ndarray:
    """Draw ``n`` rows from N(0, sigma) through a (jittered) Cholesky factor."""
    sigma = np.asarray(sigma, dtype=np.float64)
    p = sigma.shape[0]
    if n < 0:
        raise ValueError("n must be >= 0")
    rng = _rng(rng_seed)
    jitter = 0.0
    while True:
        try:
            chol = np.linalg.cholesky(sigma + jitter * np.eye(p))
            break
        except np.linalg.LinAlgError:
            jitter = 1e-14 if jitter == 0.0 else jitter * 10.0
            if jitter > JITTER_MAX:
                raise ValueError("covariance is not positive semidefinite") from None
    return rng.standard_normal((n, p)) @ chol.T


def draw_theta(p: int, s: int, rng_seed=None) -> np.ndarray:
    """``s`` random coordinates set to +/-1 with equal probability."""
    rng = _rng(rng_seed)
    theta = np.zeros(p)
    idx = np.sort(rng.choice(p, size=s, replace=False))
    theta[idx] = rng.choice([-1.0, 1.0], size=s)
    return theta


@dataclass(frozen=True)
class GeneratorConfig:
    """Synthetic study settings.

    ``transforms`` overrides the inverse link of every feature when given
    (one kind for all, or a length-p sequence).  By default the i-th active
    feature gets kind ``i`` (cycling after ten) and inactive features get
    kinds drawn uniformly from a separate random stream.
    """

    n: int
    p: int = 500
    s: int = 10
    noise_variance: float = 0.25
    rng_seed: int = 0
    transforms: object = None
    theta: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        if not 1 <= self.s <= self.p:
            raise ValueError(f"need 1 <= s <= p, got s={self.s}, p={self.p}")
        if self.noise_variance < 0:
            raise ValueError("noise_variance must be >= 0")
        if self.n < 0:
            raise ValueError("n must be >= 0")


@dataclass(frozen=True)
class GroundTruth:
    Sigma_tilde: np.ndarray
    theta_tilde: np.ndarray
    X_tilde: np.ndarray
    transform_ids: np.ndarray
    seed: int
    noise_variance: float

    @property
    def sigma_y(self) -> float:
        """Population standard deviation of the response."""
        t = self.theta_tilde
        return float(np.sqrt(t @ self.Sigma_tilde @ t + self.noise_variance))

    @property
    def beta(self) -> np.ndarray:
        """Population value of the sine-transformed Kendall vector."""
        return self.Sigma_tilde @ self.theta_tilde / self.sigma_y

    @property
    def lambda_min(self) -> float:
        return float(np.linalg.eigvalsh(self.Sigma_tilde)[0])


def _assign_transforms(cfg: GeneratorConfig, theta: np.ndarray, rng) -> np.ndarray:
    p = cfg.p
    if cfg.transforms is not None:
        kinds = np.broadcast_to(np.asarray(cfg.transforms, dtype=np.int64), (p,)).copy()
        for k in np.unique(kinds):
            TransformKind(int(k))
        return kinds
    kinds = rng.integers(1, 11, size=p)
    active = np.flatnonzero(theta)
    kinds[active] = np.arange(active.size) % 10 + 1
    return kinds


def gen_dataset(cfg: GeneratorConfig):
    """Return ``(X, y, truth)`` for one synthetic draw.

    Independent streams are spawned for the covariance, theta, transform
    assignment, latent rows and noise, so e.g. changing ``n`` does not
    perturb the covariance or theta.
    """
    streams = np.random.SeedSequence(cfg.rng_seed).spawn(5)
    cov_rng, theta_rng, kind_rng, latent_rng, noise_rng = (
        np.random.default_rng(s) for s in streams
    )
    sigma = make_covariance(cfg.p, cov_rng)
    if cfg.theta is not None:
        theta = np.asarray(cfg.theta, dtype=np.float64).copy()
        if theta.shape != (cfg.p,):
            raise ValueError("theta override must have length p")
    else:
        theta = draw_theta(cfg.p, cfg.s, theta_rng)
    kinds = _assign_transforms(cfg, theta, kind_rng)
    X_tilde = sample_latent(sigma, cfg.n, latent_rng)
    y = X_tilde @ theta
    if cfg.noise_variance > 0:
        y = y + np.sqrt(cfg.noise_variance) * noise_rng.standard_normal(cfg.n)
    X = np.empty_like(X_tilde)
    for kind in np.unique(kinds):
        cols = np.flatnonzero(kinds == kind)
        X[:, cols] = apply_transform(int(kind), X_tilde[:, cols])
    truth = GroundTruth(
        Sigma_tilde=sigma,
        theta_tilde=theta,
        X_tilde=X_tilde,
        transform_ids=kinds,
        seed=cfg.rng_seed,
        noise_variance=cfg.noise_variance,
    )
    return X, y, truth
