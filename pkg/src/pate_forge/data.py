"""Labeled feature datasets, toy data, partitioning and CSV feature files."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, NamedTuple, Sequence

import numpy as np

from .errors import CsvFormatError
from .seeding import derive_seed


class LabeledSample(NamedTuple):
    features: np.ndarray
    label: int


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.array(array, copy=True)
    array.setflags(write=False)
    return array


class Dataset:
    """An immutable ordered collection of ``(features, label)`` pairs.

    Storage is columnar: ``features`` is an ``(n, d)`` float64 array and
    ``labels`` an ``(n,)`` int64 array, both read-only.
    """

    def __init__(self, features, labels, num_classes: int):
        features = np.asarray(features, dtype=np.float64)
        labels = np.asarray(labels)
        if features.ndim != 2:
            raise ValueError(f"features must be 2-D, got shape {features.shape}")
        if labels.shape != (features.shape[0],):
            raise ValueError("labels must be a vector with one entry per sample")
        if labels.size and not np.issubdtype(labels.dtype, np.integer):
            if not np.all(labels == np.round(labels)):
                raise ValueError("labels must be integers")
        labels = labels.astype(np.int64)
        if num_classes < 1:
            raise ValueError("num_classes must be positive")
        if labels.size and (labels.min() < 0 or labels.max() >= num_classes):
            raise ValueError(f"labels must lie in [0, {num_classes})")
        if not np.all(np.isfinite(features)):
            raise ValueError("features must be finite")
        self.features = _frozen(features)
        self.labels = _frozen(labels)
        self.num_classes = int(num_classes)

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    def __len__(self) -> int:
        return self.features.shape[0]

    def __getitem__(self, index: int) -> LabeledSample:
        return LabeledSample(self.features[index], int(self.labels[index]))

    def __iter__(self) -> Iterator[LabeledSample]:
        for i in range(len(self)):
            yield self[i]

    def __eq__(self, other) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.num_classes == other.num_classes
            and self.features.shape == other.features.shape
            and np.array_equal(self.features, other.features)
            and np.array_equal(self.labels, other.labels)
        )

    def __repr__(self) -> str:
        return f"Dataset(n={len(self)}, d={self.feature_dim}, m={self.num_classes})"

    @property
    def samples(self) -> list[LabeledSample]:
        return list(self)

    def subset(self, indices) -> "Dataset":
        indices = np.asarray(indices, dtype=np.int64)
        return Dataset(self.features[indices], self.labels[indices], self.num_classes)

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.num_classes)


@dataclass(frozen=True)
class ToyDatasetConfig:
    num_classes: int = 3
    samples_per_class: int = 800
    feature_dim: int = 64
    separation: float = 5.0
    noise_scale: float = 1.0
    seed: int = 0

    def validate(self) -> None:
        if self.num_classes < 2:
            raise ValueError("num_classes must be at least 2")
        if self.feature_dim < 1:
            raise ValueError("feature_dim must be at least 1")
        if self.samples_per_class < 1:
            raise ValueError("samples_per_class must be at least 1")
        if not self.separation > 0:
            raise ValueError("separation must be positive")
        if not self.noise_scale > 0:
            raise ValueError("noise_scale must be positive")


def toy_class_means(config: ToyDatasetConfig) -> np.ndarray:
    """Class centres with every pairwise distance equal to ``separation``.

    When ``m <= d`` the centres are scaled rows of a random orthonormal frame,
    so the pairwise Bayes error of two classes is ``Phi(-separation / (2 noise))``.
    Otherwise they fall back to random Gaussian directions scaled the same way.
    """
    config.validate()
    rng = np.random.default_rng(derive_seed(config.seed, "toy-means"))
    m, d = config.num_classes, config.feature_dim
    scale = config.separation / math.sqrt(2.0)
    if m <= d:
        q, r = np.linalg.qr(rng.standard_normal((d, m)))
        q = q * np.sign(np.diag(r))
        return scale * q.T
    directions = rng.standard_normal((m, d))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    return scale * directions


def generate_toy_dataset(config: ToyDatasetConfig) -> Dataset:
    config.validate()
    means = toy_class_means(config)
    features = []
    labels = []
    for c in range(config.num_classes):
        rng = np.random.default_rng(derive_seed(config.seed, "toy-class", c))
        noise = rng.standard_normal((config.samples_per_class, config.feature_dim))
        features.append(means[c] + config.noise_scale * noise)
        labels.append(np.full(config.samples_per_class, c))
    # class-interleaved order so prefixes of the corpus are balanced
    features = np.stack(features, axis=1).reshape(-1, config.feature_dim)
    labels = np.stack(labels, axis=1).reshape(-1)
    return Dataset(features, labels, config.num_classes)


@dataclass(frozen=True)
class Partition:
    subsets: tuple

    def __post_init__(self):
        object.__setattr__(
            self, "subsets", tuple(_frozen(np.asarray(s, dtype=np.int64)) for s in self.subsets)
        )

    def __len__(self) -> int:
        return len(self.subsets)

    def sizes(self) -> list[int]:
        return [len(s) for s in self.subsets]


def partition(dataset: Dataset | int, num_subsets: int, seed: int) -> Partition:
    """Shuffle the indices then deal them round-robin into ``num_subsets`` parts.

    Sizes differ by at most one; parts ``0 .. n % I - 1`` receive the extra item.
    """
    n = dataset if isinstance(dataset, int) else len(dataset)
    if num_subsets < 1 or num_subsets > n:
        raise ValueError(f"number of subsets must be in [1, {n}], got {num_subsets}")
    order = np.random.default_rng(derive_seed(seed, "partition")).permutation(n)
    return Partition(tuple(order[i::num_subsets] for i in range(num_subsets)))


def split_train_test(dataset: Dataset, test_fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Stratified split. Each class sends ``round(fraction * n_c)`` samples to test."""
    if not 0.0 < test_fraction < 1.0:
        raise ValueError("test_fraction must lie strictly between 0 and 1")
    rng = np.random.default_rng(derive_seed(seed, "split"))
    test_mask = np.zeros(len(dataset), dtype=bool)
    for c in range(dataset.num_classes):
        members = np.flatnonzero(dataset.labels == c)
        if members.size == 0:
            continue
        take = int(round(test_fraction * members.size))
        if members.size >= 2:
            take = min(max(take, 1), members.size - 1)
        test_mask[rng.permutation(members)[:take]] = True
    return dataset.subset(np.flatnonzero(~test_mask)), dataset.subset(np.flatnonzero(test_mask))


# --- CSV feature files -----------------------------------------------------


def save_features_csv(dataset: Dataset, path, metadata: dict | None = None) -> None:
    """Write ``label,f1,...,fd`` rows with 17 significant digits.

    ``metadata`` entries are written as leading ``# key=value`` comment lines.
    """
    meta = {"num_classes": dataset.num_classes}
    meta.update(metadata or {})
    lines = [f"# {key}={value}" for key, value in meta.items()]
    lines.append(",".join(["label"] + [f"f{i + 1}" for i in range(dataset.feature_dim)]))
    for row, label in zip(dataset.features, dataset.labels):
        lines.append(",".join([str(int(label))] + [format(float(v), ".17g") for v in row]))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def read_csv_metadata(path) -> dict:
    meta = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.startswith("#"):
                break
            key, _, value = line[1:].strip().partition("=")
            meta[key.strip()] = value.strip()
    return meta


def load_features_csv(path, num_classes: int | None = None) -> Dataset:
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    header = None
    meta = {}
    rows: list[list[float]] = []
    labels: list[int] = []
    for lineno, raw in enumerate(text.split("\n"), start=1):
        line = raw.rstrip("\r")
        if not line.strip():
            continue
        if line.startswith("#"):
            if header is None:
                key, _, value = line[1:].strip().partition("=")
                meta[key.strip()] = value.strip()
            continue
        fields = [f.strip() for f in line.split(",")]
        if header is None:
            if fields[0] != "label" or fields[1:] != [f"f{i + 1}" for i in range(len(fields) - 1)]:
                raise CsvFormatError("header must be 'label,f1,...,fd'", lineno)
            if len(fields) < 2:
                raise CsvFormatError("header declares no feature columns", lineno)
            header = fields
            continue
        if len(fields) != len(header):
            raise CsvFormatError(
                f"expected {len(header) - 1} features, found {len(fields) - 1}", lineno
            )
        try:
            label_value = float(fields[0])
            values = [float(f) for f in fields[1:]]
        except ValueError as exc:
            raise CsvFormatError(f"non-numeric field ({exc})", lineno) from None
        if label_value != int(label_value) or label_value < 0:
            raise CsvFormatError(f"label {fields[0]!r} is not a non-negative integer", lineno)
        if not all(math.isfinite(v) for v in values):
            raise CsvFormatError("non-finite feature value", lineno)
        if num_classes is None and "num_classes" in meta:
            num_classes = int(meta["num_classes"])
        if num_classes is not None and int(label_value) >= num_classes:
            raise CsvFormatError(f"label {int(label_value)} >= num_classes {num_classes}", lineno)
        labels.append(int(label_value))
        rows.append(values)
    if not rows:
        raise CsvFormatError(f"no samples in {path}")
    if num_classes is None:
        num_classes = max(labels) + 1
    return Dataset(np.array(rows), np.array(labels), num_classes)


def concat(datasets: Sequence[Dataset]) -> Dataset:
    m = max(d.num_classes for d in datasets)
    return Dataset(
        np.concatenate([d.features for d in datasets]),
        np.concatenate([d.labels for d in datasets]),
        m,
    )
