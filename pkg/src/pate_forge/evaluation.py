"""Fréchet distance between fitted Gaussians, accuracy, trial statistics, reports."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .errors import NumericalError
from .seeding import derive_seed

SYMMETRY_TOL = 1e-12
EIGEN_CLIP = 1e-10


@dataclass(frozen=True)
class GaussianStats:
    mean: np.ndarray
    covariance: np.ndarray
    count: int

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float64)
        cov = np.atleast_2d(np.asarray(self.covariance, dtype=np.float64))
        if cov.shape != (mean.size, mean.size):
            raise ValueError("covariance shape does not match the mean")
        scale = max(1.0, float(np.abs(cov).max(initial=0.0)))
        if np.abs(cov - cov.T).max(initial=0.0) > SYMMETRY_TOL * scale:
            raise ValueError("covariance is not symmetric")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "covariance", cov)

    @property
    def dim(self) -> int:
        return self.mean.size


def fit_gaussian(samples) -> GaussianStats:
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if x.shape[0] < 2:
        raise ValueError("need at least 2 samples to fit a Gaussian")
    mean = x.mean(axis=0)
    centered = x - mean
    cov = centered.T @ centered / (x.shape[0] - 1)
    return GaussianStats(mean, 0.5 * (cov + cov.T), x.shape[0])


def matrix_sqrt_psd(a, tol: float = 1e-8) -> np.ndarray:
    """Symmetric square root via ``eigh``; eigenvalues below ``1e-10 * max`` become 0."""
    a = np.atleast_2d(np.asarray(a, dtype=np.float64))
    if a.shape[0] != a.shape[1]:
        raise ValueError("matrix must be square")
    scale = max(1.0, float(np.abs(a).max(initial=0.0)))
    if np.abs(a - a.T).max(initial=0.0) > tol * scale:
        raise ValueError("matrix is not symmetric")
    vals, vecs = np.linalg.eigh(0.5 * (a + a.T))
    top = max(float(vals.max(initial=0.0)), 0.0)
    vals = np.where(vals < EIGEN_CLIP * top, 0.0, vals)
    root = (vecs * np.sqrt(vals)) @ vecs.T
    return 0.5 * (root + root.T)


@dataclass(frozen=True)
class FidReport:
    fid: float
    mean_term: float
    trace_term: float
    counts: tuple

    def to_dict(self) -> dict:
        return {
            "fid": self.fid,
            "mean_term": self.mean_term,
            "trace_term": self.trace_term,
            "counts": list(self.counts),
        }


def frechet_distance(s1: GaussianStats, s2: GaussianStats) -> FidReport:
    """``||mu1 - mu2||^2 + Tr(S1 + S2 - 2 (S1^1/2 S2 S1^1/2)^1/2)``."""
    if s1.dim != s2.dim:
        raise ValueError(f"dimension mismatch: {s1.dim} vs {s2.dim}")
    diff = s1.mean - s2.mean
    mean_term = float(diff @ diff)
    root1 = matrix_sqrt_psd(s1.covariance)
    middle = root1 @ s2.covariance @ root1
    cross = matrix_sqrt_psd(0.5 * (middle + middle.T))
    trace_term = float(np.trace(s1.covariance) + np.trace(s2.covariance) - 2.0 * np.trace(cross))
    if trace_term < 0:
        if trace_term < -1e-8 * max(1.0, np.trace(s1.covariance) + np.trace(s2.covariance)):
            raise NumericalError(f"negative Fréchet trace term {trace_term}")
        trace_term = 0.0
    if not math.isfinite(mean_term + trace_term):
        raise NumericalError("non-finite Fréchet distance")
    return FidReport(mean_term + trace_term, mean_term, trace_term, (s1.count, s2.count))


def fid_between(samples_a, samples_b) -> FidReport:
    return frechet_distance(fit_gaussian(samples_a), fit_gaussian(samples_b))


def accuracy(model, dataset) -> float:
    """Fraction of correct predictions.

    ``model`` is anything with ``predict(features) -> labels``, a callable
    returning labels, or a network returning logits (argmax, lowest index on ties).
    """
    if len(dataset) == 0:
        raise ValueError("accuracy of an empty dataset is undefined")
    x = dataset.features
    if hasattr(model, "predict"):
        predicted = model.predict(x)
    else:
        predicted = np.asarray(model(x))
        if predicted.ndim == 2:
            predicted = np.argmax(predicted, axis=1)
    return float(np.mean(np.asarray(predicted) == dataset.labels))


def sample_std(values) -> float:
    values = np.asarray(values, dtype=np.float64)
    if values.size < 2:
        return 0.0
    return float(values.std(ddof=1))


@dataclass(frozen=True)
class AccuracyReport:
    """Per-trial accuracies with mean and sample standard deviation (ddof=1)."""

    accuracies: tuple
    mean: float
    std: float

    @property
    def trials(self) -> int:
        return len(self.accuracies)

    @classmethod
    def from_accuracies(cls, values) -> "AccuracyReport":
        values = tuple(float(v) for v in values)
        if not values:
            raise ValueError("need at least one trial")
        if any(not 0.0 <= v <= 1.0 for v in values):
            raise ValueError("accuracies must lie in [0, 1]")
        return cls(values, float(np.mean(values)), sample_std(values))

    def to_dict(self) -> dict:
        return {
            "accuracies": list(self.accuracies),
            "mean": self.mean,
            "std": self.std,
            "std_kind": "sample (ddof=1)",
            "trials": self.trials,
        }


def trial_seed(master_seed: int, trial: int) -> int:
    return derive_seed(master_seed, "trial", trial)


def run_trials(trial_fn: Callable[[int, int], float], trials: int = 20, master_seed: int = 0, order=None) -> AccuracyReport:
    """Call ``trial_fn(t, seed_t)`` for each trial and summarise the accuracies.

    Seeds depend only on ``(master_seed, t)``, so ``order`` (a permutation of
    trial indices) cannot change the report.
    """
    if trials < 1:
        raise ValueError("trials must be at least 1")
    order = range(trials) if order is None else order
    results = {}
    for t in order:
        results[t] = trial_fn(t, trial_seed(master_seed, t))
    if sorted(results) != list(range(trials)):
        raise ValueError("order must be a permutation of the trial indices")
    return AccuracyReport.from_accuracies(results[t] for t in range(trials))


# --- reports ---------------------------------------------------------------------------

CSV_COLUMNS = ("epsilon", "mean_accuracy", "std", "fid_mean", "fid_std")

# reference FID cells (mean, interval) by method and epsilon, a fixture for table formatting
REFERENCE_FID_TABLE = {
    "DP-GAN": {0.01: (35.2, 0.5), 0.1: (32.2, 0.6), 1: (28.8, 0.4), 10: (26.7, 0.3), 100: (24.9, 0.3)},
    "PATE-GAN": {0.01: (33.4, 0.5), 0.1: (30.1, 0.4), 1: (27.9, 0.3), 10: (26.0, 0.3), 100: (24.3, 0.1)},
}


def format_cell(mean: float, spread: float, digits: int = 1) -> str:
    return f"{mean:.{digits}f}±{spread:.{digits}f}"


def fid_table(table: dict = REFERENCE_FID_TABLE) -> dict[str, dict]:
    return {method: {eps: format_cell(*cell) for eps, cell in row.items()} for method, row in table.items()}


def _g17(value: float) -> str:
    return format(float(value), ".17g")


def summary_rows(results: dict) -> list[dict]:
    return list(results.get("summary", []))


def rows_to_csv(rows, metadata: dict | None = None) -> str:
    """Summary rows as CSV; ``metadata`` becomes leading ``# key=value`` lines."""
    buf = io.StringIO()
    for key, value in (metadata or {}).items():
        buf.write(f"# {key}={value}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for row in rows:
        writer.writerow([_g17(row[c]) for c in CSV_COLUMNS])
    return buf.getvalue()


def csv_to_rows(text: str) -> list[dict]:
    body = "".join(line for line in text.splitlines(keepends=True) if not line.startswith("#"))
    reader = csv.DictReader(io.StringIO(body))
    if tuple(reader.fieldnames or ()) != CSV_COLUMNS:
        raise ValueError(f"expected CSV columns {CSV_COLUMNS}")
    return [{c: float(r[c]) for c in CSV_COLUMNS} for r in reader]


def dumps_results(results: dict) -> str:
    return json.dumps(results, indent=2, sort_keys=True, allow_nan=False) + "\n"


def emit_report(results: dict, path) -> tuple[Path, Path]:
    """Write ``<path>.json`` (full results) and ``<path>.csv`` (one row per epsilon).

    ``path`` may name either file or the stem; both files are always written.
    """
    path = Path(path)
    stem = path.with_suffix("") if path.suffix in (".json", ".csv") else path
    json_path, csv_path = stem.with_suffix(".json"), stem.with_suffix(".csv")
    json_path.parent.mkdir(parents=True, exist_ok=True)
    with open(json_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps_results(results))
    with open(csv_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(rows_to_csv(summary_rows(results)))
    return json_path, csv_path
