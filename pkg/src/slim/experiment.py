"""Monte Carlo sweep over sample sizes comparing SLIM with a sparse linear baseline.

Every (n, trial) cell generates one dataset, fits both methods along a
gamma grid, picks gamma on a held-out split and scores all grid points on
fresh test rows.  Rows are appended to ``metrics.csv`` as cells finish; the
final file is rewritten in key order so it does not depend on scheduling.
"""
from __future__ import annotations

import csv
import json
import logging
import multiprocessing as mp
import os
import time
import warnings
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .baseline import baseline_linear_fit, baseline_problem
from .cpav import BackfitConfig
from .dantzig import SolverConfig
from .pipeline import GAMMA_TOP_FRAC, default_gamma_grid, fit, holdout_split
from .rank_corr import rank_correlation
from .synth import GeneratorConfig, derive_seed, gen_dataset

__all__ = [
    "ExperimentConfig",
    "MetricsRow",
    "run_cell",
    "run_experiment",
    "read_metrics",
    "aggregate",
    "gamma_path",
    "METRICS_FILE",
    "AGG_FILE",
    "PATH_FILE",
]

log = logging.getLogger(__name__)

METRICS_FILE = "metrics.csv"
AGG_FILE = "metrics_agg.csv"
PATH_FILE = "gamma_path.csv"
CONFIG_FILE = "experiment.json"


@dataclass(frozen=True)
class ExperimentConfig:
    """Sweep settings.

    ``gamma_top_frac`` places the largest grid value at that fraction of
    ``||r||_inf``, the level at which the all-zero model becomes feasible.
    """

    n_grid: tuple[int, ...] = (100, 200, 300, 400, 500)
    trials: int = 20
    p: int = 100
    s: int = 5
    noise_variance: float = 0.25
    gamma_count: int = 10
    gamma_span: float = 2.0**9
    gamma_top_frac: float = GAMMA_TOP_FRAC
    n_test: int = 200
    holdout_frac: float = 0.2
    seed: int = 0
    out_dir: str = "results"
    workers: int = 1
    design_norm: str = "fro"
    record_runtime: bool = True
    max_iterations: int = 5000
    backfit_rounds: int = 100
    backfit_rel_tol: float = 1e-8

    def __post_init__(self):
        if not self.n_grid or any(n < 4 for n in self.n_grid):
            raise ValueError("n_grid must be non-empty with every n >= 4")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if self.gamma_count < 1 or self.gamma_span < 1:
            raise ValueError("gamma grid needs count >= 1 and span >= 1")
        if not 0 < self.gamma_top_frac <= 1:
            raise ValueError("gamma_top_frac must lie in (0, 1]")
        if self.n_test < 1:
            raise ValueError("n_test must be >= 1")
        if not 0 < self.holdout_frac < 1:
            raise ValueError("holdout_frac must lie in (0, 1)")
        if self.design_norm not in ("fro", "spectral"):
            raise ValueError("design_norm must be 'fro' or 'spectral'")
        if not 1 <= self.s <= self.p:
            raise ValueError("need 1 <= s <= p")

    @property
    def solver(self) -> SolverConfig:
        return SolverConfig(max_iterations=self.max_iterations)

    @property
    def backfit(self) -> BackfitConfig:
        return BackfitConfig(rounds=self.backfit_rounds, rel_tol=self.backfit_rel_tol)


@dataclass
class MetricsRow:
    n: int
    trial: int
    gamma_index: int
    gamma: float
    gamma_baseline: float
    theta_error: float
    design_error: float
    prediction_mse: float
    prediction_mse_baseline: float
    val_mse: float
    val_mse_baseline: float
    selected: int
    selected_baseline: int
    support_size: int
    support_precision: float
    support_recall: float
    solver_status: str
    backfit_rounds: int
    backfit_monotone: int
    backfit_feasibility: float
    runtime_seconds: float

    @classmethod
    def columns(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    def as_cells(self) -> list[str]:
        out = []
        for f in fields(self):
            v = getattr(self, f.name)
            out.append(repr(float(v)) if isinstance(v, float) else str(v))
        return out

    @classmethod
    def from_cells(cls, rec: dict) -> "MetricsRow":
        kw = {}
        for f in fields(cls):
            raw = rec[f.name]
            kw[f.name] = {"int": int, "float": float, "str": str}[f.type](raw)
        return cls(**kw)


def _relative(a: np.ndarray, b: np.ndarray, norm: str) -> float:
    ord_ = 2 if norm == "spectral" and a.ndim == 2 else None
    den = np.linalg.norm(a, ord=ord_)
    return float(np.linalg.norm(a - b, ord=ord_) / den) if den > 0 else float("nan")


def _precision_recall(found: np.ndarray, truth: np.ndarray) -> tuple[float, float]:
    hits = np.intersect1d(found, truth).size
    precision = hits / found.size if found.size else 0.0
    recall = hits / truth.size if truth.size else 1.0
    return float(precision), float(recall)


def _mse(a, b) -> float:
    return float(np.mean((np.asarray(a) - np.asarray(b)) ** 2))


def _monotone(trace) -> bool:
    return all(b <= a * (1 + 1e-12) + 1e-12 for a, b in zip(trace, trace[1:]))


def run_cell(cfg: ExperimentConfig, n: int, trial: int) -> list[MetricsRow]:
    """All grid rows for one (n, trial) cell.

    The dataset seed depends on the trial only, so for a given trial the
    training sets at different ``n`` are nested prefixes of one latent draw.
    """
    seed = derive_seed(cfg.seed, trial)
    X_all, y_all, truth = gen_dataset(
        GeneratorConfig(n=n + cfg.n_test, p=cfg.p, s=cfg.s, noise_variance=cfg.noise_variance, rng_seed=seed)
    )
    X, y, X_test, y_test = X_all[:n], y_all[:n], X_all[n:], y_all[n:]
    X_tilde = truth.X_tilde[:n]
    true_support = np.flatnonzero(truth.theta_tilde)
    tr, va = holdout_split(n, cfg.holdout_frac, derive_seed(cfg.seed, trial, n))

    stats = rank_correlation(X, y)
    stats_tr = rank_correlation(X[tr], y[tr])
    grid = default_gamma_grid(stats.beta_hat, cfg.gamma_count, cfg.gamma_span, cfg.gamma_top_frac)
    prob_b = baseline_problem(X, y)
    prob_b_tr = baseline_problem(X[tr], y[tr])
    grid_b = default_gamma_grid(prob_b[1], cfg.gamma_count, cfg.gamma_span, cfg.gamma_top_frac)

    rows = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        for k, (g, gb) in enumerate(zip(grid, grid_b)):
            t0 = time.perf_counter()
            m_tr = fit(X[tr], y[tr], g, cfg.solver, cfg.backfit, stats=stats_tr)
            m = fit(X, y, g, cfg.solver, cfg.backfit, stats=stats)
            b_tr = baseline_linear_fit(X[tr], y[tr], gb, cfg.solver, problem=prob_b_tr)
            b = baseline_linear_fit(X, y, gb, cfg.solver, problem=prob_b)
            elapsed = time.perf_counter() - t0
            prec, rec = _precision_recall(m.support, true_support)
            trace = m.metadata.get("objective_trace", [])
            rows.append(
                MetricsRow(
                    n=n,
                    trial=trial,
                    gamma_index=k,
                    gamma=float(g),
                    gamma_baseline=float(gb),
                    theta_error=_relative(truth.theta_tilde, m.coefficients.theta_hat, "fro"),
                    design_error=_relative(
                        X_tilde[:, true_support], m.X_hat[:, true_support], cfg.design_norm
                    ),
                    prediction_mse=_mse(y_test, m.predict(X_test)),
                    prediction_mse_baseline=_mse(y_test, b.predict(X_test)),
                    val_mse=_mse(y[va], m_tr.predict(X[va])),
                    val_mse_baseline=_mse(y[va], b_tr.predict(X[va])),
                    selected=0,
                    selected_baseline=0,
                    support_size=int(m.support.size),
                    support_precision=prec,
                    support_recall=rec,
                    solver_status=str(m.metadata["solver_status"]),
                    backfit_rounds=int(m.metadata.get("rounds", 0)),
                    backfit_monotone=int(_monotone(trace)),
                    backfit_feasibility=float(m.metadata.get("worst_feasibility", 0.0)),
                    runtime_seconds=float(elapsed) if cfg.record_runtime else 0.0,
                )
            )
    # first minimum wins, i.e. the smallest gamma among ties
    rows[int(np.argmin([r.val_mse for r in rows]))].selected = 1
    rows[int(np.argmin([r.val_mse_baseline for r in rows]))].selected_baseline = 1
    return rows


def read_metrics(path) -> list[MetricsRow]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != MetricsRow.columns():
            raise ValueError(f"{path}: unexpected header {reader.fieldnames}")
        return [MetricsRow.from_cells(rec) for rec in reader]


def _write_rows(path, rows, mode: str) -> None:
    with open(path, mode, newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if mode == "w":
            w.writerow(MetricsRow.columns())
        for r in rows:
            w.writerow(r.as_cells())
        fh.flush()


def _sort_key(r: MetricsRow):
    return (r.n, r.trial, r.gamma_index)


def _completed(rows: list[MetricsRow], count: int) -> dict[tuple[int, int], list[MetricsRow]]:
    cells: dict[tuple[int, int], list[MetricsRow]] = {}
    for r in rows:
        cells.setdefault((r.n, r.trial), []).append(r)
    return {
        k: v for k, v in cells.items() if sorted(r.gamma_index for r in v) == list(range(count))
    }


def _quantiles(v) -> tuple[float, float, float]:
    q25, med, q75 = np.percentile(np.asarray(v, dtype=np.float64), [25, 50, 75])
    return float(med), float(q25), float(q75)


AGG_METRICS = (
    ("theta_error", "selected"),
    ("design_error", "selected"),
    ("prediction_mse", "selected"),
    ("support_precision", "selected"),
    ("support_recall", "selected"),
    ("prediction_mse_baseline", "selected_baseline"),
)


def aggregate(rows: list[MetricsRow]) -> list[dict]:
    """Median and quartiles per n of the metrics at each method's tuned gamma."""
    out = []
    for n in sorted({r.n for r in rows}):
        rec: dict = {"n": n, "trials": len({r.trial for r in rows if r.n == n})}
        for metric, flag in AGG_METRICS:
            vals = [getattr(r, metric) for r in rows if r.n == n and getattr(r, flag) == 1]
            med, q25, q75 = _quantiles(vals)
            rec.update({f"{metric}_median": med, f"{metric}_q25": q25, f"{metric}_q75": q75})
        out.append(rec)
    return out


def gamma_path(rows: list[MetricsRow], n: int | None = None) -> list[dict]:
    """Per grid index test MSE of both methods at one n (default: largest)."""
    if n is None:
        n = max(r.n for r in rows)
    sel = [r for r in rows if r.n == n]
    out = []
    for k in sorted({r.gamma_index for r in sel}):
        at = [r for r in sel if r.gamma_index == k]
        rec = {"n": n, "gamma_index": k}
        for name in ("gamma", "gamma_baseline", "prediction_mse", "prediction_mse_baseline"):
            med, q25, q75 = _quantiles([getattr(r, name) for r in at])
            rec.update({f"{name}_median": med, f"{name}_q25": q25, f"{name}_q75": q75})
        out.append(rec)
    return out


def _write_dicts(path, recs: list[dict]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        if not recs:
            return
        w = csv.writer(fh, lineterminator="\n")
        cols = list(recs[0])
        w.writerow(cols)
        for rec in recs:
            w.writerow([repr(v) if isinstance(v, float) else str(v) for v in (rec[c] for c in cols)])


def _cell_job(args):
    cfg, n, trial = args
    return run_cell(cfg, n, trial)


def run_experiment(cfg: ExperimentConfig, progress=None) -> Path:
    """Run (or resume) the sweep and return the path of ``metrics.csv``.

    Cells already complete in an existing ``metrics.csv`` with the same
    header are kept and skipped.  Partial cells are discarded and rerun.
    """
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / METRICS_FILE
    done: dict[tuple[int, int], list[MetricsRow]] = {}
    if path.exists():
        try:
            done = _completed(read_metrics(path), cfg.gamma_count)
        except (ValueError, KeyError) as exc:
            log.warning("ignoring unreadable %s: %s", path, exc)
        wanted = {(n, t) for n in cfg.n_grid for t in range(cfg.trials)}
        done = {k: v for k, v in done.items() if k in wanted}
    _write_rows(path, sorted((r for v in done.values() for r in v), key=_sort_key), "w")
    with open(out / CONFIG_FILE, "w", encoding="utf-8") as fh:
        json.dump(asdict(cfg) | {"n_grid": list(cfg.n_grid)}, fh, indent=1)
        fh.write("\n")

    todo = [(n, t) for n in cfg.n_grid for t in range(cfg.trials) if (n, t) not in done]
    if done:
        log.info("resuming: %d cells done, %d to run", len(done), len(todo))

    def record(rows):
        _write_rows(path, rows, "a")
        if progress is not None:
            progress(rows[0].n, rows[0].trial)

    if cfg.workers <= 1 or len(todo) <= 1:
        for n, t in todo:
            record(run_cell(cfg, n, t))
    else:
        # spawn avoids forking a process that may hold numba worker threads
        ctx = mp.get_context("spawn")
        with ProcessPoolExecutor(max_workers=cfg.workers, mp_context=ctx) as pool:
            futures = [pool.submit(_cell_job, (cfg, n, t)) for n, t in todo]
            for fut in as_completed(futures):
                record(fut.result())

    rows = sorted(read_metrics(path), key=_sort_key)
    _write_rows(path, rows, "w")
    _write_dicts(out / AGG_FILE, aggregate(rows))
    _write_dicts(out / PATH_FILE, gamma_path(rows))
    return path


def resolve_workers(flag: int | None) -> int:
    env = os.environ.get("SLIM_WORKERS")
    if env:
        try:
            v = int(env)
        except ValueError:
            raise ValueError(f"SLIM_WORKERS must be an integer, got {env!r}") from None
        if v < 1:
            raise ValueError("SLIM_WORKERS must be >= 1")
        return v
    return max(1, flag or 1)
