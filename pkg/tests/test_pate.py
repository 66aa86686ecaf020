import itertools
from pathlib import Path

import numpy as np
import pytest

from gradcheck import numeric_gradient, relative_error
from pate_forge import aae
from pate_forge.data import Dataset, ToyDatasetConfig, generate_toy_dataset, partition, split_train_test
from pate_forge.evaluation import accuracy
from pate_forge.nn import DenseNet, LayerSpec, TrainConfig, fit_classifier, init_net, mlp_specs
from pate_forge.seeding import derive_seed
from pate_forge.pate import (
    LabelingLog,
    TeacherEnsemble,
    VoteHistogram,
    count_votes,
    label_synthetic_set,
    noisy_argmax,
    noisy_argmax_batch,
    sample_laplace,
    teacher_discriminator_gradients,
    teacher_discriminator_loss,
    train_student,
    train_teachers,
    vote_counts,
)


def constant_teacher(label, d=2, m=3):
    """A linear net whose logits ignore the input and favour ``label``."""
    bias = np.zeros(m)
    bias[label] = 1.0
    return DenseNet([LayerSpec(d, m)], [np.zeros((d, m))], [bias])


def ensemble_of(labels, d=2, m=3):
    return TeacherEnsemble([constant_teacher(l, d, m) for l in labels], m, d, list(range(len(labels))))


@pytest.fixture(scope="module")
def separable():
    return generate_toy_dataset(ToyDatasetConfig(num_classes=3, samples_per_class=100, feature_dim=8, separation=6.0, seed=21))


def test_single_teacher_is_plain_classifier(separable):
    cfg = TrainConfig(epochs=10)
    ens = train_teachers(partition(separable, 1, 0), separable, [16], cfg, seed=3)
    assert len(ens) == 1
    preds = ens.predictions(separable.features)[0]
    assert accuracy(lambda x: ens.teachers[0](x), separable) == np.mean(preds == separable.labels)


def test_teachers_fit_their_own_subsets(separable):
    part = partition(separable, 10, 1)
    ens = train_teachers(part, separable, [16], TrainConfig(epochs=30), seed=4)
    for teacher, idx in zip(ens.teachers, part.subsets):
        subset = separable.subset(idx)
        assert accuracy(lambda x, t=teacher: t(x), subset) >= 0.95


def test_teachers_are_deterministic(separable):
    part = partition(separable, 3, 1)
    a = train_teachers(part, separable, [8], TrainConfig(epochs=3), seed=5)
    b = train_teachers(part, separable, [8], TrainConfig(epochs=3), seed=5)
    for x, y in zip(a.teachers, b.teachers):
        assert all(p.tobytes() == q.tobytes() for p, q in zip(x.parameters(), y.parameters()))


def test_teacher_sees_only_its_subset(separable):
    part = partition(separable, 4, 2)
    ens = train_teachers(part, separable, [8], TrainConfig(epochs=2), seed=6)
    direct = fit_classifier(separable.features[part.subsets[2]], separable.labels[part.subsets[2]], 3, [8], TrainConfig(epochs=2), derive_seed(6, "teacher", 2))
    assert all(p.tobytes() == q.tobytes() for p, q in zip(ens.teachers[2].parameters(), direct.parameters()))


def test_votes_unanimous_and_direct():
    assert count_votes(ensemble_of([2] * 5, m=4), np.zeros(2)).counts.tolist() == [0, 0, 5, 0]
    assert count_votes(ensemble_of([1, 1, 2]), np.zeros(2)).counts.tolist() == [0, 2, 1]


def test_votes_match_brute_force_recount(rng):
    teachers = [init_net(mlp_specs([4, 6, 3]), s) for s in range(7)]
    ens = TeacherEnsemble(teachers, 3, 4, list(range(7)))
    x = rng.standard_normal((25, 4))
    counts = vote_counts(ens, x)
    for i, row in enumerate(x):
        expected = [0, 0, 0]
        for t in teachers:
            expected[int(np.argmax(t(row)[0]))] += 1
        assert counts[i].tolist() == expected
        assert count_votes(ens, row).total == 7


def test_moving_one_vote_changes_two_entries_by_one():
    for num_teachers, m in [(1, 2), (2, 3), (3, 3), (4, 2)]:
        for preds in itertools.product(range(m), repeat=num_teachers):
            base = np.bincount(preds, minlength=m)
            for i in range(num_teachers):
                for new in range(m):
                    if new == preds[i]:
                        continue
                    moved = list(preds)
                    moved[i] = new
                    diff = np.bincount(moved, minlength=m) - base
                    assert sorted(diff[diff != 0].tolist()) == [-1, 1]


def test_laplace_zero_scale():
    assert sample_laplace(0.0, np.random.default_rng(0)) == 0.0
    assert np.all(sample_laplace(0.0, np.random.default_rng(0), size=10) == 0.0)
    with pytest.raises(ValueError):
        sample_laplace(-1.0, np.random.default_rng(0))


def test_laplace_moments_and_tail():
    y = sample_laplace(1.0, np.random.default_rng(7), size=1_000_000)
    assert abs(y.mean()) < 0.01
    assert abs(y.var() - 2.0) < 0.05
    p = np.exp(-1.0)
    tail = np.mean(np.abs(y) > 1.0)
    assert abs(tail - p) < 3 * np.sqrt(p * (1 - p) / y.size)


def test_noisy_argmax_zero_noise_is_plain_argmax():
    log = LabelingLog(0.0)
    assert noisy_argmax(VoteHistogram([1, 4, 2]), 0.0, np.random.default_rng(0), log).label == 1
    assert noisy_argmax(VoteHistogram([3, 3, 0]), 0.0, np.random.default_rng(0), log).label == 0
    assert log.K == 2


def test_noisy_argmax_clear_winner():
    log = LabelingLog(0.5)
    labels = noisy_argmax_batch(np.tile([10, 0, 0], (100_000, 1)), 0.5, np.random.default_rng(3), log)
    assert np.mean(labels == 0) > 0.999
    assert log.K == 100_000


def test_noisy_argmax_symmetric_tie():
    labels = noisy_argmax_batch(np.tile([5, 5], (100_000, 1)), 1.0, np.random.default_rng(4), LabelingLog(1.0))
    assert abs(np.mean(labels == 0) - 0.5) < 0.01


def test_noisy_argmax_rejects_negative_scale():
    with pytest.raises(ValueError):
        noisy_argmax(VoteHistogram([1, 0]), -0.1, np.random.default_rng(0), LabelingLog(0.0))


def test_batch_and_single_queries_share_the_stream():
    counts = np.array([[3, 2, 5], [0, 9, 1], [4, 4, 2]])
    batch = noisy_argmax_batch(counts, 2.0, np.random.default_rng(8), LabelingLog(2.0))
    rng = np.random.default_rng(8)
    log = LabelingLog(2.0)
    single = [noisy_argmax(VoteHistogram(c), 2.0, rng, log).label for c in counts]
    assert batch.tolist() == single and log.K == 3


def test_label_synthetic_set_bookkeeping():
    ens = ensemble_of([2, 2, 2])
    labeled, log = label_synthetic_set(ens, np.zeros((0, 2)), 1.0, np.random.default_rng(0))
    assert log.K == 0 and len(labeled) == 0
    labeled, log = label_synthetic_set(ens, np.random.default_rng(1).standard_normal((300, 2)), 4.0, np.random.default_rng(0))
    assert log.K == 300 and len(labeled) == 300
    labeled, _ = label_synthetic_set(ens, np.ones((20, 2)), 0.0, np.random.default_rng(0))
    assert np.all(labeled.labels == 2)


def test_labels_are_deterministic_without_noise(separable):
    ens = train_teachers(partition(separable, 3, 0), separable, [8], TrainConfig(epochs=3), seed=1)
    a, _ = label_synthetic_set(ens, separable.features, 0.0, np.random.default_rng(1))
    b, _ = label_synthetic_set(ens, separable.features, 0.0, np.random.default_rng(2))
    assert np.array_equal(a.labels, b.labels)


def test_discriminator_loss_at_half():
    teacher = DenseNet([LayerSpec(2, 1, "sigmoid")], [np.zeros((2, 1))], [np.zeros(1)])
    assert teacher_discriminator_loss(teacher, np.ones((1, 2)), np.zeros((1, 2))) == pytest.approx(2 * np.log(2))


def test_discriminator_loss_at_optimum():
    teacher = DenseNet([LayerSpec(1, 1, "sigmoid")], [np.array([[100.0]])], [np.zeros(1)])
    assert teacher_discriminator_loss(teacher, np.ones((3, 1)), -np.ones((3, 1))) <= 2e-6 * 3


def test_discriminator_loss_gradient(rng):
    teacher = init_net(mlp_specs([3, 5, 1], hidden="tanh", output="sigmoid"), 2)
    real, fake = rng.standard_normal((4, 3)), rng.standard_normal((5, 3))
    _, grads = teacher_discriminator_gradients(teacher, real, fake)
    for p, g in zip(teacher.parameters(), grads):
        numeric = numeric_gradient(lambda: teacher_discriminator_loss(teacher, real, fake), p)
        assert relative_error(g, numeric) < 1e-4


def test_discriminator_loss_needs_single_output():
    with pytest.raises(ValueError):
        teacher_discriminator_loss(init_net(mlp_specs([2, 3]), 0), np.ones((1, 2)), np.ones((1, 2)))


def test_discriminator_teachers_vote_on_two_classes():
    data = generate_toy_dataset(ToyDatasetConfig(num_classes=2, samples_per_class=60, feature_dim=4, separation=6.0, seed=2))
    ens = train_teachers(partition(data, 2, 0), data, [8], TrainConfig(epochs=20), seed=0, objective="discriminator")
    counts = vote_counts(ens, data.features)
    assert counts.sum(axis=1).tolist() == [2] * len(data)
    assert np.mean(np.argmax(counts, axis=1) == data.labels) > 0.95
    with pytest.raises(ValueError):
        train_teachers(partition(data, 2, 0), Dataset(data.features, data.labels, 3), [8], TrainConfig(epochs=1), 0, "discriminator")


def test_student_single_class():
    labeled = Dataset(np.random.default_rng(0).standard_normal((30, 3)), np.full(30, 1), 3)
    student = train_student(labeled, [8], TrainConfig(epochs=20), seed=0)
    assert np.all(student.predict(labeled.features) == 1)


def test_student_is_deterministic_and_rejects_empty():
    labeled = Dataset(np.random.default_rng(0).standard_normal((30, 3)), np.arange(30) % 2, 2)
    a = train_student(labeled, [8], TrainConfig(epochs=3), seed=4)
    b = train_student(labeled, [8], TrainConfig(epochs=3), seed=4)
    assert all(p.tobytes() == q.tobytes() for p, q in zip(a.net.parameters(), b.net.parameters()))
    with pytest.raises(ValueError):
        train_student(Dataset(np.zeros((0, 3)), np.zeros(0, int), 2), [8], TrainConfig(), 0)


def test_student_signature_has_no_sensitive_input():
    import inspect

    assert list(inspect.signature(train_student).parameters) == ["labeled_synthetic", "hidden", "config", "seed"]


def test_noise_free_student_is_close_to_non_private_classifier():
    data = generate_toy_dataset(ToyDatasetConfig(seed=7))
    train, test = split_train_test(data, 0.25, 7)
    cfg = TrainConfig()
    baseline = accuracy(fit_classifier(train.features, train.labels, 3, [32], cfg, 0), test)
    model, _ = aae.train(aae.build_aae(64, 16, seed=1), train, aae.AaeTrainConfig(seed=1))
    ens = train_teachers(partition(train, 10, 1), train, [32], cfg, seed=1)
    labeled, _ = label_synthetic_set(ens, aae.synthesize(model, 300, np.random.default_rng(1)), 0.0, np.random.default_rng(2))
    student = train_student(labeled, [32], cfg, seed=1)
    assert accuracy(student, test) >= baseline - 0.10


def test_laplace_sampler_is_only_used_by_noisy_argmax():
    src = Path(__import__("pate_forge").__file__).parent
    users = {p.name for p in src.glob("*.py") if "sample_laplace(" in p.read_text()}
    assert users == {"pate.py"}
    text = (src / "pate.py").read_text()
    callers = [block.split("(")[0] for block in text.split("\ndef ")[1:] if "sample_laplace(" in block.split("\ndef ")[0] and not block.startswith("sample_laplace")]
    assert sorted(callers) == ["noisy_argmax", "noisy_argmax_batch"]
