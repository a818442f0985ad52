"""CSV and JSON files exchanged by the command-line tools.

Matrices are comma-separated with a header row, one sample per row and
'.' as decimal mark.  ``X.csv`` uses the header ``c0,...,c{p-1}`` and
``y.csv`` the single column ``y``.
"""
from __future__ import annotations

import csv
import json
import os
from pathlib import Path

import numpy as np

__all__ = [
    "DataError",
    "read_matrix",
    "write_matrix",
    "read_vector",
    "write_vector",
    "write_truth",
    "read_truth",
    "TRUTH_SIGMA_LIMIT",
]

TRUTH_SIGMA_LIMIT = 200


class DataError(ValueError):
    """Malformed or inconsistent input file."""


def _fmt(v: float) -> str:
    return repr(float(v))


def write_matrix(path, X, prefix: str = "c") -> None:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"{prefix}{j}" for j in range(X.shape[1])])
        for row in X:
            w.writerow([_fmt(v) for v in row])


def write_vector(path, y, name: str = "y") -> None:
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([name])
        for v in y:
            w.writerow([_fmt(v)])


def read_matrix(path) -> tuple[np.ndarray, list[str]]:
    """Read a numeric CSV with a header row.

    Raises ``DataError`` naming the offending line and column for ragged
    rows, unparsable or non-finite cells.
    """
    if not os.path.exists(path):
        raise DataError(f"{path}: file not found")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        width = len(header)
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != width:
                raise DataError(f"{path}: line {lineno} has {len(row)} fields, expected {width}")
            vals = []
            for col, cell in enumerate(row):
                try:
                    v = float(cell)
                except ValueError:
                    raise DataError(
                        f"{path}: line {lineno}, column {col} ({header[col]!r}): cannot parse {cell!r}"
                    ) from None
                if not np.isfinite(v):
                    raise DataError(f"{path}: line {lineno}, column {col} ({header[col]!r}): non-finite value")
                vals.append(v)
            rows.append(vals)
    if not rows:
        raise DataError(f"{path}: no data rows")
    return np.array(rows, dtype=np.float64), header


def read_vector(path) -> np.ndarray:
    M, header = read_matrix(path)
    if M.shape[1] != 1:
        raise DataError(f"{path}: expected a single column, found {M.shape[1]}")
    return M[:, 0]


def write_truth(path, truth, include_sigma: bool | None = None) -> None:
    """Ground-truth sidecar; Sigma is left out above p = 200 unless forced."""
    p = truth.theta_tilde.shape[0]
    if include_sigma is None:
        include_sigma = p <= TRUTH_SIGMA_LIMIT
    doc = {
        "p": p,
        "n": int(truth.X_tilde.shape[0]),
        "s": int(np.count_nonzero(truth.theta_tilde)),
        "seed": int(truth.seed),
        "noise_variance": truth.noise_variance,
        "theta_tilde": truth.theta_tilde.tolist(),
        "transform_ids": [int(k) for k in truth.transform_ids],
        "sigma_y": truth.sigma_y,
    }
    if include_sigma:
        doc["Sigma_tilde"] = truth.Sigma_tilde.tolist()
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def read_truth(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)
