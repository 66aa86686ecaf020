"""
Teachers on disjoint shards, a student on noisy synthetic labels
================================================================

The sensitive set is split among I teachers. Only their noisy aggregate
votes on generated samples reach the student.
"""

import numpy as np

from pate_forge import aae
from pate_forge.accountant import PrivacyBudget
from pate_forge.data import ToyDatasetConfig, generate_toy_dataset, partition, split_train_test
from pate_forge.evaluation import accuracy
from pate_forge.nn import TrainConfig, fit_classifier
from pate_forge.pate import label_synthetic_set, train_student, train_teachers, vote_counts

data = generate_toy_dataset(ToyDatasetConfig(seed=3))
train, test = split_train_test(data, 0.25, 3)
cfg = TrainConfig()

baseline = fit_classifier(train.features, train.labels, 3, [32], cfg, seed=0)
print("non-private classifier accuracy:", accuracy(baseline, test))

shards = partition(train, 10, seed=3)
print("shard sizes:", shards.sizes())
teachers = train_teachers(shards, train, [32], cfg, seed=3)
votes = vote_counts(teachers, test.features)
print("clean majority vote accuracy:", np.mean(votes.argmax(axis=1) == test.labels))

generator, _ = aae.train(aae.build_aae(train.feature_dim, 16, seed=3), train, aae.AaeTrainConfig(seed=3))
synthetic = aae.synthesize(generator, 300, np.random.default_rng(3))

for eps in (0.01, 1.0, 100.0):
    budget = PrivacyBudget(eps, len(synthetic))
    labeled, log = label_synthetic_set(teachers, synthetic, budget.scale_b, np.random.default_rng(4))
    student = train_student(labeled, [32], cfg, seed=3)
    agree = np.mean(labeled.labels == vote_counts(teachers, synthetic).argmax(axis=1))
    print(f"eps={eps:<6} b={budget.scale_b:<8g} K={log.K} label agreement {agree:.3f} student accuracy {accuracy(student, test):.3f}")
