"""Teacher ensembles, vote histograms and Laplace noisy-argmax labeling.

``noisy_argmax`` / ``noisy_argmax_batch`` are the only callers of the Laplace
sampler, and every call is counted in a ``LabelingLog``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .data import Dataset, Partition
from .nn import (
    BCE_CLAMP,
    DenseNet,
    TrainConfig,
    fit_classifier,
    init_net,
    make_optimizer,
    minibatches,
    mlp_specs,
    net_from_dict,
    net_to_dict,
    optimizer_step,
    predict_labels,
)
from .seeding import derive_seed

OBJECTIVES = ("cross_entropy", "discriminator")


@dataclass
class TeacherEnsemble:
    teachers: list[DenseNet]
    num_classes: int
    feature_dim: int
    subset_ids: list[int]
    objective: str = "cross_entropy"

    def __post_init__(self):
        if not self.teachers:
            raise ValueError("an ensemble needs at least one teacher")
        for t in self.teachers:
            if t.input_dim != self.feature_dim:
                raise ValueError("teachers disagree on the feature dimension")
        if self.objective == "discriminator" and self.num_classes != 2:
            raise ValueError("discriminator teachers only vote on two classes")

    def __len__(self) -> int:
        return len(self.teachers)

    def predictions(self, x) -> np.ndarray:
        """``(I, n)`` matrix of each teacher's hard prediction."""
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if self.objective == "discriminator":
            # strict > keeps the tie at 0.5 on the lower class
            return np.stack([(t(x)[:, 0] > 0.5).astype(np.int64) for t in self.teachers])
        return np.stack([predict_labels(t, x) for t in self.teachers])

    def to_dict(self) -> dict:
        return {
            "num_classes": self.num_classes,
            "feature_dim": self.feature_dim,
            "subset_ids": list(self.subset_ids),
            "objective": self.objective,
            "teachers": [net_to_dict(t) for t in self.teachers],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "TeacherEnsemble":
        return cls(
            [net_from_dict(t) for t in doc["teachers"]],
            doc["num_classes"],
            doc["feature_dim"],
            list(doc["subset_ids"]),
            doc.get("objective", "cross_entropy"),
        )


@dataclass(frozen=True)
class VoteHistogram:
    counts: np.ndarray

    def __post_init__(self):
        counts = np.asarray(self.counts)
        if counts.ndim != 1 or np.any(counts < 0):
            raise ValueError("vote counts must be a non-negative vector")
        object.__setattr__(self, "counts", counts.astype(np.int64))

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def plurality(self) -> int:
        return int(np.argmax(self.counts))


@dataclass(frozen=True)
class NoisyLabel:
    label: int
    scores: np.ndarray = field(repr=False)


@dataclass
class LabelingLog:
    """Append-only record of noisy queries answered at one Laplace scale."""

    scale_b: float
    seed: int | None = None
    convention: str | None = None
    K: int = 0

    def record(self, queries: int = 1) -> None:
        if queries < 0:
            raise ValueError("query count cannot decrease")
        self.K += int(queries)

    def to_dict(self) -> dict:
        return {"K": self.K, "scale_b": self.scale_b, "seed": self.seed, "convention": self.convention}

    @classmethod
    def from_dict(cls, doc: dict) -> "LabelingLog":
        return cls(doc["scale_b"], doc.get("seed"), doc.get("convention"), doc["K"])


# --- teachers ---------------------------------------------------------------------


def teacher_discriminator_gradients(teacher: DenseNet, real_inputs, fake_inputs):
    """Summed real/fake BCE: ``-(sum log T(real) + sum log(1 - T(fake)))``.

    Returns ``(loss, parameter gradients)``. Probabilities are clamped to
    ``[1e-7, 1 - 1e-7]`` like every BCE in the package.
    """
    if teacher.output_dim != 1:
        raise ValueError(f"discriminator loss needs a 1-output teacher, got {teacher.output_dim}")
    loss = 0.0
    total = None
    for inputs, target in ((real_inputs, 1.0), (fake_inputs, 0.0)):
        inputs = np.atleast_2d(np.asarray(inputs, dtype=np.float64))
        if inputs.shape[0] == 0:
            continue
        acts = teacher.forward(inputs)
        p = np.clip(acts[-1], BCE_CLAMP, 1.0 - BCE_CLAMP)
        if target == 1.0:
            loss -= float(np.log(p).sum())
            grad = -1.0 / p
        else:
            loss -= float(np.log1p(-p).sum())
            grad = 1.0 / (1.0 - p)
        grads, _ = teacher.backward(acts, grad)
        total = grads if total is None else [a + b for a, b in zip(total, grads)]
    if total is None:
        total = [np.zeros_like(p) for p in teacher.parameters()]
    return loss, total


def teacher_discriminator_loss(teacher: DenseNet, real_inputs, fake_inputs) -> float:
    return teacher_discriminator_gradients(teacher, real_inputs, fake_inputs)[0]


def _fit_discriminator_teacher(x, y, hidden, config: TrainConfig, seed: int) -> DenseNet:
    rng = np.random.default_rng(seed)
    net = init_net(mlp_specs([x.shape[1], *hidden, 1], output="sigmoid"), rng)
    opt = make_optimizer(config.optimizer, config.learning_rate, net)
    for _ in range(config.epochs):
        for idx in minibatches(x.shape[0], config.batch_size, rng):
            xb, yb = x[idx], y[idx]
            _, grads = teacher_discriminator_gradients(net, xb[yb == 1], xb[yb == 0])
            optimizer_step(opt, net, [g / len(idx) for g in grads])
    return net


def train_teachers(
    part: Partition,
    dataset: Dataset,
    hidden: Sequence[int],
    config: TrainConfig,
    seed: int,
    objective: str = "cross_entropy",
) -> TeacherEnsemble:
    """Train teacher ``i`` on subset ``i`` only, seeded by ``(seed, "teacher", i)``.

    ``objective="discriminator"`` trains single-sigmoid teachers on the summed
    real/fake loss with class 1 as "real"; it requires two classes.
    """
    if objective not in OBJECTIVES:
        raise ValueError(f"unknown teacher objective {objective!r}")
    teachers = []
    for i, indices in enumerate(part.subsets):
        if len(indices) == 0:
            raise ValueError(f"teacher subset {i} is empty")
        if len(indices) and indices.max() >= len(dataset):
            raise ValueError("partition does not index this dataset")
        subset = dataset.subset(indices)
        teacher_seed = derive_seed(seed, "teacher", i)
        if objective == "discriminator":
            teachers.append(_fit_discriminator_teacher(subset.features, subset.labels, hidden, config, teacher_seed))
        else:
            teachers.append(
                fit_classifier(subset.features, subset.labels, dataset.num_classes, hidden, config, teacher_seed)
            )
    return TeacherEnsemble(teachers, dataset.num_classes, dataset.feature_dim, list(range(len(part))), objective)


# --- votes and noise -------------------------------------------------------------------


def vote_counts(ensemble: TeacherEnsemble, x) -> np.ndarray:
    """``(n, m)`` integer matrix of per-sample vote counts."""
    preds = ensemble.predictions(x)
    n = preds.shape[1]
    counts = np.zeros((n, ensemble.num_classes), dtype=np.int64)
    for row in preds:
        counts[np.arange(n), row] += 1
    return counts


def count_votes(ensemble: TeacherEnsemble, x) -> VoteHistogram:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("count_votes takes one sample; use vote_counts for batches")
    return VoteHistogram(vote_counts(ensemble, x)[0])


def sample_laplace(scale_b: float, rng: np.random.Generator, size=None):
    """Inverse-CDF Laplace(0, b) draws from ``u ~ Uniform(-1/2, 1/2)``."""
    if scale_b < 0:
        raise ValueError("Laplace scale must be non-negative")
    u = rng.uniform(-0.5, 0.5, size=size)
    # u = -0.5 is possible and would give log(0)
    tail = np.minimum(2.0 * np.abs(u), 1.0 - 2.0**-53)
    y = -scale_b * np.sign(u) * np.log1p(-tail)
    if scale_b == 0:
        y = np.zeros_like(y)
    return float(y) if size is None else y


def noisy_argmax_batch(counts, scale_b: float, rng: np.random.Generator, log: LabelingLog) -> np.ndarray:
    """One noisy query per row of ``counts``; returns the released labels.

    Noise is drawn row by row in order, so a batch of ``n`` consumes the same
    random stream as ``n`` calls to ``noisy_argmax``.
    """
    if scale_b < 0:
        raise ValueError("Laplace scale must be non-negative")
    counts = np.atleast_2d(np.asarray(counts, dtype=np.float64))
    if counts.shape[0] == 0:
        return np.zeros(0, dtype=np.int64)
    scores = counts + sample_laplace(scale_b, rng, size=counts.shape)
    log.record(counts.shape[0])
    return np.argmax(scores, axis=1)


def noisy_argmax(histogram: VoteHistogram, scale_b: float, rng: np.random.Generator, log: LabelingLog) -> NoisyLabel:
    if scale_b < 0:
        raise ValueError("Laplace scale must be non-negative")
    counts = histogram.counts if isinstance(histogram, VoteHistogram) else VoteHistogram(histogram).counts
    scores = counts + sample_laplace(scale_b, rng, size=counts.shape)
    log.record(1)
    return NoisyLabel(int(np.argmax(scores)), scores)


def label_synthetic_set(
    ensemble: TeacherEnsemble,
    synthetic_samples,
    scale_b: float,
    rng: np.random.Generator,
    seed: int | None = None,
    convention: str | None = None,
) -> tuple[Dataset, LabelingLog]:
    """Attach one noisy-argmax label to every synthetic sample."""
    x = np.asarray(synthetic_samples, dtype=np.float64).reshape(-1, ensemble.feature_dim)
    log = LabelingLog(scale_b, seed, convention)
    labels = noisy_argmax_batch(vote_counts(ensemble, x), scale_b, rng, log) if len(x) else np.zeros(0, np.int64)
    return Dataset(x, labels, ensemble.num_classes), log


# --- student -------------------------------------------------------------------------------


@dataclass
class StudentModel:
    net: DenseNet
    num_classes: int

    def predict(self, x) -> np.ndarray:
        return predict_labels(self.net, np.atleast_2d(x))

    def to_dict(self) -> dict:
        return {"num_classes": self.num_classes, "net": net_to_dict(self.net)}

    @classmethod
    def from_dict(cls, doc: dict) -> "StudentModel":
        return cls(net_from_dict(doc["net"]), doc["num_classes"])


def train_student(labeled_synthetic: Dataset, hidden: Sequence[int], config: TrainConfig, seed: int) -> StudentModel:
    """Fit the student on teacher-labeled synthetic data with multiclass cross-entropy.

    For two classes the softmax loss is the binary form
    ``-(r log S + (1 - r) log(1 - S))`` with ``S`` the class-1 probability.
    """
    if len(labeled_synthetic) == 0:
        raise ValueError("cannot train a student on an empty labeled set")
    net = fit_classifier(
        labeled_synthetic.features,
        labeled_synthetic.labels,
        labeled_synthetic.num_classes,
        hidden,
        config,
        derive_seed(seed, "student"),
    )
    return StudentModel(net, labeled_synthetic.num_classes)
