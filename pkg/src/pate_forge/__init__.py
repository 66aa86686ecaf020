"""Private aggregation of teacher ensembles with an adversarial-autoencoder generator."""

from .accountant import PrivacyBudget, assert_budget, per_query_epsilon, scale_for_budget, spent_epsilon
from .aae import AaeModel, AaeTrainConfig, build_aae, synthesize
from .config import ExperimentConfig
from .data import Dataset, ToyDatasetConfig, generate_toy_dataset, partition, split_train_test
from .evaluation import fit_gaussian, frechet_distance
from .pate import LabelingLog, TeacherEnsemble, count_votes, label_synthetic_set, noisy_argmax, train_student, train_teachers

__version__ = "0.1.0"

__all__ = [
    "AaeModel",
    "AaeTrainConfig",
    "Dataset",
    "ExperimentConfig",
    "LabelingLog",
    "PrivacyBudget",
    "TeacherEnsemble",
    "ToyDatasetConfig",
    "assert_budget",
    "build_aae",
    "count_votes",
    "fit_gaussian",
    "frechet_distance",
    "generate_toy_dataset",
    "label_synthetic_set",
    "noisy_argmax",
    "partition",
    "per_query_epsilon",
    "scale_for_budget",
    "spent_epsilon",
    "split_train_test",
    "synthesize",
    "train_student",
    "train_teachers",
]
