"""Two-step SLIM estimator: rank statistics -> Dantzig selector -> backfitting."""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from .cpav import BackfitConfig, block_orders, estimate_hidden_design
from .dantzig import KdsProblem, KdsSolution, SolverConfig, solve_kds
from .rank_corr import RankCorrelation, as_design, as_response, rank_correlation

__all__ = [
    "SparseCoefficients",
    "KnotTable",
    "SlimModel",
    "sample_std",
    "support_threshold",
    "fit",
    "interpolate",
    "predict",
    "gamma_grid",
    "default_gamma_grid",
    "GAMMA_TOP_FRAC",
    "holdout_split",
    "tune_gamma",
    "MODEL_FORMAT",
]

MODEL_FORMAT = "slim-model"
MODEL_VERSION = 1
# grid top relative to ||r||_inf, where the all-zero fit becomes feasible
GAMMA_TOP_FRAC = 0.5


@dataclass(frozen=True)
class SparseCoefficients:
    theta_check: np.ndarray
    theta_hat: np.ndarray
    support: np.ndarray
    sigma_y_hat: float
    support_eps: float


@dataclass(frozen=True)
class KnotTable:
    """Fitted transform of one feature at its distinct observed values."""

    x: np.ndarray
    f: np.ndarray

    def __call__(self, q):
        return _nearest(self.x, self.f, q)


@dataclass
class SlimModel:
    coefficients: SparseCoefficients
    transforms: dict[int, KnotTable]
    p: int
    metadata: dict = field(default_factory=dict)
    X_hat: np.ndarray | None = None

    @property
    def support(self) -> np.ndarray:
        return self.coefficients.support

    def predict(self, X_new) -> np.ndarray:
        return predict(self, X_new)

    def to_dict(self) -> dict:
        c = self.coefficients
        return {
            "format": MODEL_FORMAT,
            "version": MODEL_VERSION,
            "p": self.p,
            "theta_hat": c.theta_hat.tolist(),
            "theta_check": c.theta_check.tolist(),
            "sigma_y_hat": c.sigma_y_hat,
            "support": c.support.tolist(),
            "support_eps": c.support_eps,
            "transforms": [
                {"feature": j, "knots_x": t.x.tolist(), "knots_f": t.f.tolist()}
                for j, t in sorted(self.transforms.items())
            ],
            "metadata": self.metadata,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SlimModel":
        if d.get("format") != MODEL_FORMAT:
            raise ValueError(f"not a {MODEL_FORMAT} document")
        if d.get("version") != MODEL_VERSION:
            raise ValueError(f"unsupported model version {d.get('version')}")
        coef = SparseCoefficients(
            theta_check=np.asarray(d["theta_check"], dtype=np.float64),
            theta_hat=np.asarray(d["theta_hat"], dtype=np.float64),
            support=np.asarray(d["support"], dtype=np.int64),
            sigma_y_hat=float(d["sigma_y_hat"]),
            support_eps=float(d["support_eps"]),
        )
        transforms = {
            int(t["feature"]): KnotTable(
                np.asarray(t["knots_x"], dtype=np.float64),
                np.asarray(t["knots_f"], dtype=np.float64),
            )
            for t in d["transforms"]
        }
        if set(transforms) != set(coef.support.tolist()):
            raise ValueError("transform tables do not match the support")
        return cls(coef, transforms, int(d["p"]), dict(d.get("metadata", {})))

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=1)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "SlimModel":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def sample_std(y) -> float:
    """Sample standard deviation with the n - 1 divisor.

    This is the scale attached to the Dantzig output; a constant response
    has no usable scale and is rejected.
    """
    y = as_response(y)
    if y.size < 2:
        raise ValueError("need at least 2 responses")
    sd = float(np.std(y, ddof=1))
    if sd == 0.0:
        raise ValueError("response is constant; its standard deviation is zero")
    return sd


def support_threshold(theta_hat) -> float:
    return 1e-6 * max(1.0, float(np.max(np.abs(theta_hat), initial=0.0)))


def _knot_table(x_col: np.ndarray, xhat_col: np.ndarray) -> KnotTable:
    order = np.argsort(x_col, kind="stable")
    xs = x_col[order]
    keep = np.concatenate(([True], xs[1:] != xs[:-1]))
    # tie groups carry one common fitted value, so the first suffices
    return KnotTable(xs[keep].copy(), xhat_col[order][keep].copy())


def _nearest(knots_x: np.ndarray, knots_f: np.ndarray, q):
    q_arr = np.asarray(q, dtype=np.float64)
    hi = np.clip(np.searchsorted(knots_x, q_arr, side="left"), 0, knots_x.size - 1)
    lo = np.clip(hi - 1, 0, knots_x.size - 1)
    # strict '<' sends exact midpoints to the smaller knot
    pick = np.where(knots_x[hi] - q_arr < q_arr - knots_x[lo], hi, lo)
    out = knots_f[pick]
    if np.ndim(q) == 0:
        return float(out)
    return out


def fit(
    X,
    y,
    gamma: float,
    solver_cfg: SolverConfig | None = None,
    backfit_cfg: BackfitConfig | None = None,
    stats: RankCorrelation | None = None,
) -> SlimModel:
    """Fit a sparse linear isotonic model.

    Parameters
    ----------
    X : (n, p) array
        Observed predictors.
    y : (n,) array
        Response.
    gamma : float
        Constraint level of the Kendall's tau Dantzig selector.
    solver_cfg, backfit_cfg :
        Settings for the LP solver and the backfitting loop.
    stats : RankCorrelation, optional
        Precomputed rank statistics for ``(X, y)``; pass them when fitting a
        grid of ``gamma`` values on the same data.

    Returns
    -------
    SlimModel
    """
    X = as_design(X)
    n, p = X.shape
    y = as_response(y, n)
    if not np.isfinite(gamma) or gamma < 0:
        raise ValueError(f"gamma must be a non-negative real, got {gamma}")
    if stats is None:
        stats = rank_correlation(X, y)
    sol: KdsSolution = solve_kds(KdsProblem(stats.sigma_hat, stats.beta_hat, gamma), solver_cfg)
    sigma_y = sample_std(y)
    theta_hat = sigma_y * sol.theta_check
    eps = support_threshold(theta_hat)
    support = np.flatnonzero(np.abs(theta_hat) > eps)
    coef = SparseCoefficients(sol.theta_check, theta_hat, support, sigma_y, eps)
    metadata = {
        "gamma": float(gamma),
        "n": n,
        "solver_status": sol.status,
        "solver_iterations": sol.iterations,
        "solver_converged": bool(sol.converged),
        "residual_inf": sol.residual_inf,
    }
    X_hat = np.zeros((n, p))
    transforms: dict[int, KnotTable] = {}
    if support.size == 0:
        warnings.warn("empty support: the model predicts zero everywhere", RuntimeWarning, stacklevel=2)
        metadata.update(rounds=0, objective_trace=[])
    else:
        theta_active = np.zeros(p)
        theta_active[support] = theta_hat[support]
        backfit_cfg = backfit_cfg or BackfitConfig()
        state = estimate_hidden_design(y, X, theta_active, backfit_cfg, block_orders(X, support))
        X_hat = state.X_hat
        transforms = {int(j): _knot_table(X[:, j], X_hat[:, j]) for j in support}
        metadata.update(
            rounds=state.rounds_run,
            rounds_max=backfit_cfg.rounds,
            objective_trace=state.objective_history,
            worst_feasibility=state.worst_feasibility,
        )
    return SlimModel(coef, transforms, p, metadata, X_hat)


def interpolate(model: SlimModel, j: int, x_query):
    """Fitted transform of feature ``j`` at ``x_query`` by nearest observed knot.

    Exact midpoints between two knots resolve to the smaller knot.
    """
    if int(j) not in model.transforms:
        raise KeyError(f"feature {j} is not in the model support")
    return model.transforms[int(j)](x_query)


def predict(model: SlimModel, X_new) -> np.ndarray:
    X_new = np.asarray(X_new, dtype=np.float64)
    if X_new.ndim == 1:
        X_new = X_new[None, :]
    if X_new.ndim != 2 or X_new.shape[1] != model.p:
        raise ValueError(f"expected {model.p} columns, got shape {X_new.shape}")
    out = np.zeros(X_new.shape[0])
    theta = model.coefficients.theta_hat
    for j in model.support:
        out += theta[j] * model.transforms[int(j)](X_new[:, j])
    return out


def gamma_grid(top: float, count: int = 10, span: float = 2.0**9) -> np.ndarray:
    """Log-spaced grid, ascending, from ``top / span`` to ``top``."""
    if count < 1:
        raise ValueError("count must be >= 1")
    if count == 1:
        return np.array([float(top)])
    return float(top) * span ** (np.linspace(-1.0, 0.0, count))


def default_gamma_grid(r, count: int = 10, span: float = 2.0**9, top_frac: float = GAMMA_TOP_FRAC) -> np.ndarray:
    """Grid whose top is ``top_frac * ||r||_inf`` for the right-hand side ``r``."""
    return gamma_grid(top_frac * float(np.max(np.abs(r), initial=0.0)), count, span)


def holdout_split(n: int, frac: float = 0.2, rng_seed=None):
    """Random (train, validation) index split with ``frac`` held out."""
    rng = np.random.default_rng(rng_seed)
    perm = rng.permutation(n)
    n_val = max(1, int(round(frac * n)))
    return np.sort(perm[n_val:]), np.sort(perm[:n_val])


def tune_gamma(X, y, grid, solver_cfg=None, backfit_cfg=None, frac=0.2, rng_seed=None):
    """Pick ``gamma`` from ``grid`` by validation MSE on a held-out split.

    Returns ``(best_gamma, validation_mse)`` with one MSE per grid value.
    """
    X = as_design(X)
    y = as_response(y, X.shape[0])
    train, val = holdout_split(X.shape[0], frac, rng_seed)
    stats = rank_correlation(X[train], y[train])
    mse = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        for g in grid:
            m = fit(X[train], y[train], g, solver_cfg, backfit_cfg, stats=stats)
            mse.append(float(np.mean((y[val] - m.predict(X[val])) ** 2)))
    mse = np.asarray(mse)
    return float(np.asarray(grid)[int(np.argmin(mse))]), mse
