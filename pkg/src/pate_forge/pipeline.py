"""End-to-end teacher-ensemble pipeline, per stage on disk or as a full in-memory sweep.

Stage artifacts live under the output directory with fixed names (see
``ARTIFACTS``). Each stage may only read the artifacts it declares, which is
what keeps the student stage away from the sensitive data.
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import aae
from .accountant import BudgetReport, PrivacyBudget, assert_budget
from .config import ExperimentConfig
from .data import (
    Dataset,
    generate_toy_dataset,
    load_features_csv,
    partition,
    read_csv_metadata,
    save_features_csv,
    split_train_test,
)
from .errors import BudgetViolation, MissingArtifactError, PateForgeError, StaleArtifactError
from .evaluation import AccuracyReport, accuracy, dumps_results, fid_between, rows_to_csv, sample_std, trial_seed
from .features import extract_features, read_wav, summarize, waveform_directory_index
from .nn import fit_classifier
from .pate import LabelingLog, StudentModel, TeacherEnsemble, label_synthetic_set, train_student, train_teachers, vote_counts
from .seeding import derive_seed, rng_for

RESULTS_VERSION = 1

ARTIFACTS = {
    "dataset": "dataset.csv",
    "waveform_index": "waveforms.json",
    "train": "train.csv",
    "test": "test.csv",
    "aae": "aae.json",
    "teachers": "teachers.json",
    "synthetic": "synthetic.json",
    "labels": "labels/eps_{tag}.csv",
    "labeling_log": "labels/eps_{tag}.log.json",
    "budget": "budget.json",
    "student": "students/eps_{tag}.json",
    "results": "results.json",
    "results_csv": "results.csv",
}

# artifacts derived directly from the sensitive corpus
SENSITIVE = frozenset({"dataset", "waveform_index", "train", "test"})


@dataclass(frozen=True)
class Stage:
    name: str
    inputs: tuple
    outputs: tuple


STAGES = {
    s.name: s
    for s in (
        Stage("gen-data", (), ("dataset", "waveform_index")),
        Stage("features", ("dataset", "waveform_index"), ("train", "test")),
        Stage("train-aae", ("train",), ("aae",)),
        Stage("train-teachers", ("train",), ("teachers",)),
        Stage("synthesize", ("aae",), ("synthetic",)),
        Stage("label", ("teachers", "synthetic"), ("labels", "labeling_log", "budget")),
        Stage("train-student", ("labels",), ("student",)),
        Stage(
            "evaluate",
            ("train", "test", "aae", "teachers", "synthetic", "labels", "labeling_log", "budget", "student"),
            ("results", "results_csv"),
        ),
    )
}

# files written by every command, outside the per-stage contract
BOOKKEEPING = ("config.json", "MANIFEST", "timing.json")


def epsilon_tag(epsilon: float) -> str:
    return format(float(epsilon), "g")


class UndeclaredArtifactError(PateForgeError):
    """A stage tried to touch an artifact outside its declared inputs/outputs."""


class ArtifactStore:
    """Reads and writes stage artifacts, enforcing declarations and digests."""

    def __init__(self, cfg: ExperimentConfig, stage: str | None = None, root=None):
        self.cfg = cfg
        self.root = Path(root if root is not None else cfg.output_dir)
        self.stage = STAGES[stage] if stage else None
        self.reads: list[str] = []
        self.writes: list[str] = []

    def path(self, name: str, **fmt) -> Path:
        return self.root / ARTIFACTS[name].format(**fmt)

    def _check(self, name, allowed):
        if self.stage is not None and name not in allowed:
            raise UndeclaredArtifactError(f"stage {self.stage.name!r} may not access artifact {name!r}")

    def exists(self, name: str, **fmt) -> bool:
        self._check(name, self.stage.inputs + self.stage.outputs if self.stage else ())
        return self.path(name, **fmt).exists()

    def _locate(self, name, fmt) -> Path:
        self._check(name, self.stage.inputs if self.stage else ())
        path = self.path(name, **fmt)
        if not path.exists():
            raise MissingArtifactError(f"missing artifact: {name} ({path})")
        self.reads.append(name)
        return path

    def _verify(self, name, meta: dict):
        if meta.get("config_digest") != self.cfg.digest:
            raise StaleArtifactError(
                f"stale artifact: {name} was produced under config {meta.get('config_digest')!r}, "
                f"current config is {self.cfg.digest!r}"
            )

    def _meta(self) -> dict:
        return {"config_digest": self.cfg.digest, "seed": self.cfg.seed}

    def read_json(self, name: str, **fmt) -> dict:
        with open(self._locate(name, fmt), encoding="utf-8") as fh:
            doc = json.load(fh)
        self._verify(name, doc)
        return doc

    def read_csv(self, name: str, **fmt) -> Dataset:
        path = self._locate(name, fmt)
        self._verify(name, read_csv_metadata(path))
        return load_features_csv(path)

    def _target(self, name, fmt) -> Path:
        self._check(name, self.stage.outputs if self.stage else ())
        path = self.path(name, **fmt)
        path.parent.mkdir(parents=True, exist_ok=True)
        self.writes.append(name)
        return path

    def write_json(self, name: str, doc: dict, **fmt) -> Path:
        path = self._target(name, fmt)
        body = {**self._meta(), **doc}
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(json.dumps(body, sort_keys=True, allow_nan=False) + "\n")
        return path

    def write_csv(self, name: str, dataset: Dataset, **fmt) -> Path:
        path = self._target(name, fmt)
        save_features_csv(dataset, path, self._meta())
        return path

    def write_text(self, name: str, text: str, **fmt) -> Path:
        path = self._target(name, fmt)
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        return path


# --- pipeline pieces shared by stage commands and the sweep -------------------------------


def load_sensitive_dataset(cfg: ExperimentConfig) -> Dataset:
    source = cfg.source
    if source == "toy":
        return generate_toy_dataset(cfg.toy)
    if source == "csv":
        path = Path(cfg.raw["data"]["csv_path"])
        if not path.exists():
            raise MissingArtifactError(f"missing input: csv_path {path}")
        return load_features_csv(path)
    root = Path(cfg.raw["data"]["waveform_dir"])
    if not root.is_dir():
        raise MissingArtifactError(f"missing input: waveform_dir {root}")
    index, classes = waveform_directory_index(root)
    return waveform_features(cfg, cfg.raw["data"]["waveform_dir"], index, len(classes))


def waveform_features(cfg: ExperimentConfig, root, index, num_classes: int) -> Dataset:
    if not index:
        raise MissingArtifactError(f"no .wav files under {root}")
    spec = cfg.spectrogram
    rows = [summarize(extract_features(read_wav(Path(root) / rel), spec, cfg.raw["data"]["feature_kind"])) for rel, _ in index]
    return Dataset(np.array(rows), np.array([label for _, label in index]), num_classes)


def make_splits(cfg: ExperimentConfig, dataset: Dataset) -> tuple[Dataset, Dataset]:
    return split_train_test(dataset, cfg.raw["data"]["test_fraction"], derive_seed(cfg.seed, "split"))


def fit_generator(cfg: ExperimentConfig, train: Dataset, seed: int):
    a = cfg.raw["aae"]
    gen_seed = derive_seed(seed, "aae")
    model = aae.build_aae(
        train.feature_dim,
        a["latent_dim"],
        a["encoder_hidden"],
        a["decoder_hidden"],
        a["discriminator_hidden"],
        seed=gen_seed,
        log_sigma_clamp=tuple(a["log_sigma_clamp"]),
    )
    return aae.train(model, train, cfg.aae_train(gen_seed))


def fit_teachers(cfg: ExperimentConfig, train: Dataset, seed: int) -> TeacherEnsemble:
    part = partition(train, cfg.teacher_count, derive_seed(seed, "partition"))
    return train_teachers(
        part, train, cfg.raw["teachers"]["hidden"], cfg.teacher_train, derive_seed(seed, "teachers"), cfg.raw["teachers"]["objective"]
    )


def draw_synthetic(cfg: ExperimentConfig, model: aae.AaeModel, seed: int) -> tuple[np.ndarray, np.ndarray]:
    synthetic = aae.synthesize(model, cfg.synthetic_count, rng_for(seed, "synthesize"))
    fid_samples = aae.synthesize(model, cfg.raw["fid_sample_count"], rng_for(seed, "fid-samples"))
    return synthetic, fid_samples


def budgets(cfg: ExperimentConfig) -> list[PrivacyBudget]:
    return [PrivacyBudget(e, cfg.query_budget, cfg.convention, cfg.delta) for e in cfg.epsilon_targets]


def check_planned_queries(count: int, budget: PrivacyBudget) -> None:
    if count > budget.K:
        raise BudgetViolation(
            f"budget overage: labeling {count} samples exceeds K_budget={budget.K} by {count - budget.K}"
        )


def label_with_budget(
    ensemble: TeacherEnsemble, synthetic, budget: PrivacyBudget, seed: int
) -> tuple[Dataset, LabelingLog, BudgetReport]:
    """Noisy-label ``synthetic`` at the budget's scale and audit the log.

    The noise stream depends on ``seed`` only, so every epsilon in a trial
    sees the same underlying uniforms scaled by its own ``b``.
    """
    check_planned_queries(len(synthetic), budget)
    labeled, log = label_synthetic_set(
        ensemble, synthetic, budget.scale_b, rng_for(seed, "label"), seed=derive_seed(seed, "label"), convention=budget.convention
    )
    return labeled, log, assert_budget(log, budget)


def fit_student(cfg: ExperimentConfig, labeled: Dataset, seed: int) -> StudentModel:
    return train_student(labeled, cfg.raw["student"]["hidden"], cfg.student_train, seed)


def baseline_accuracy(cfg: ExperimentConfig, train: Dataset, test: Dataset, seed: int) -> float:
    net = fit_classifier(
        train.features, train.labels, train.num_classes, cfg.raw["student"]["hidden"], cfg.student_train, derive_seed(seed, "baseline")
    )
    return accuracy(net, test)


def _evaluate_trial(cfg, trial, seed, train, test, ensemble, model_metrics, fid_samples, per_epsilon) -> dict:
    """Assemble one trial record; ``per_epsilon`` holds ``(budget, labeled, log, report, student)``."""
    clean_votes = None
    records = []
    for budget, labeled, log, report, student in per_epsilon:
        if clean_votes is None:
            clean_votes = np.argmax(vote_counts(ensemble, labeled.features), axis=1)
        records.append(
            {
                "epsilon": budget.epsilon_target,
                "scale_b": budget.scale_b,
                "K_used": log.K,
                "label_agreement": float(np.mean(labeled.labels == clean_votes)),
                "student_accuracy": accuracy(student, test),
                "budget": report.to_dict(),
            }
        )
    vote_acc = float(np.mean(np.argmax(vote_counts(ensemble, test.features), axis=1) == test.labels))
    return {
        "trial": trial,
        "seed": seed,
        "aae_final_epoch": model_metrics,
        "fid": fid_between(fid_samples, test.features).to_dict(),
        "baseline_accuracy": baseline_accuracy(cfg, train, test, seed),
        "teacher_vote_accuracy": vote_acc,
        "epsilons": records,
    }


def run_trial(cfg: ExperimentConfig, train: Dataset, test: Dataset, trial: int) -> dict:
    seed = trial_seed(cfg.seed, trial)
    model, history = fit_generator(cfg, train, seed)
    ensemble = fit_teachers(cfg, train, seed)
    synthetic, fid_samples = draw_synthetic(cfg, model, seed)
    per_epsilon = []
    for budget in budgets(cfg):
        labeled, log, report = label_with_budget(ensemble, synthetic, budget, seed)
        per_epsilon.append((budget, labeled, log, report, fit_student(cfg, labeled, seed)))
    metrics = history[-1].to_dict() if history else None
    return _evaluate_trial(cfg, trial, seed, train, test, ensemble, metrics, fid_samples, per_epsilon)


def summarize_trials(cfg: ExperimentConfig, records: list[dict]) -> list[dict]:
    fids = [r["fid"]["fid"] for r in records]
    rows = []
    for i, eps in enumerate(cfg.epsilon_targets):
        accs = AccuracyReport.from_accuracies(r["epsilons"][i]["student_accuracy"] for r in records)
        agreement = [r["epsilons"][i]["label_agreement"] for r in records]
        rows.append(
            {
                "epsilon": eps,
                "mean_accuracy": accs.mean,
                "std": accs.std,
                "fid_mean": float(np.mean(fids)),
                "fid_std": sample_std(fids),
                "accuracy": accs.to_dict(),
                "label_agreement_mean": float(np.mean(agreement)),
                "label_agreement_std": sample_std(agreement),
                "verdicts": [r["epsilons"][i]["budget"]["verdict"] for r in records],
            }
        )
    return rows


def results_document(cfg: ExperimentConfig, records: list[dict]) -> dict:
    return {
        "format_version": RESULTS_VERSION,
        "config_digest": cfg.digest,
        "seed": cfg.seed,
        "config": cfg.materialized(),
        "trials": records,
        "summary": summarize_trials(cfg, records),
        "budget_reports": [dict(e["budget"], trial=r["trial"]) for r in records for e in r["epsilons"]],
        "fid_reports": [dict(r["fid"], trial=r["trial"]) for r in records],
        # timings are kept out of this file so that it is reproducible byte for byte
        "wall_clock": {"recorded_in": "timing.json"},
    }


def all_budgets_pass(results: dict) -> bool:
    return all(b["verdict"] == "pass" for b in results["budget_reports"])


# --- bookkeeping files -----------------------------------------------------------------------


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def write_bookkeeping(cfg: ExperimentConfig, root: Path, stage: str, seconds: float) -> None:
    root.mkdir(parents=True, exist_ok=True)
    (root / "config.json").write_text(json.dumps(cfg.materialized(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    timing_path = root / "timing.json"
    timing = json.loads(timing_path.read_text()) if timing_path.exists() else {}
    timing.update(config_digest=cfg.digest, seed=cfg.seed)
    timing.setdefault("seconds", {})[stage] = round(seconds, 3)
    timing_path.write_text(json.dumps(timing, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    lines = [
        "# pate-forge artifact manifest",
        f"# config_digest={cfg.digest}",
        f"# seed={cfg.seed}",
        "# path\tsha256",
    ]
    for path in sorted(p for p in root.rglob("*") if p.is_file()):
        rel = path.relative_to(root).as_posix()
        if rel in ("MANIFEST", "timing.json"):
            continue
        lines.append(f"{rel}\t{_sha256(path)}")
    (root / "MANIFEST").write_text("\n".join(lines) + "\n", encoding="utf-8")


# --- stage commands ---------------------------------------------------------------------------
# Stage commands reproduce trial 0 of ``run_all`` one step at a time.


def _stage_seed(cfg: ExperimentConfig) -> int:
    return trial_seed(cfg.seed, 0)


def stage_gen_data(cfg: ExperimentConfig, store: ArtifactStore) -> None:
    if cfg.source == "waveform":
        root = Path(cfg.raw["data"]["waveform_dir"])
        if not root.is_dir():
            raise MissingArtifactError(f"missing input: waveform_dir {root}")
        index, classes = waveform_directory_index(root)
        store.write_json("waveform_index", {"root": str(root), "classes": classes, "files": [list(e) for e in index]})
    else:
        store.write_csv("dataset", load_sensitive_dataset(cfg))


def stage_features(cfg: ExperimentConfig, store: ArtifactStore) -> None:
    if cfg.source == "waveform":
        doc = store.read_json("waveform_index")
        dataset = waveform_features(cfg, doc["root"], [tuple(e) for e in doc["files"]], len(doc["classes"]))
    else:
        dataset = store.read_csv("dataset")
    train, test = make_splits(cfg, dataset)
    store.write_csv("train", train)
    store.write_csv("test", test)


def stage_train_aae(cfg: ExperimentConfig, store: ArtifactStore) -> None:
    model, history = fit_generator(cfg, store.read_csv("train"), _stage_seed(cfg))
    store.write_json("aae", {"model": model.to_dict(), "metrics": [h.to_dict() for h in history]})


def stage_train_teachers(cfg: ExperimentConfig, store: ArtifactStore) -> None:
    ensemble = fit_teachers(cfg, store.read_csv("train"), _stage_seed(cfg))
    store.write_json("teachers", ensemble.to_dict())


def stage_synthesize(cfg: ExperimentConfig, store: ArtifactStore) -> None:
    model = aae.AaeModel.from_dict(store.read_json("aae")["model"])
    synthetic, fid_samples = draw_synthetic(cfg, model, _stage_seed(cfg))
    store.write_json("synthetic", {"samples": synthetic.tolist(), "fid_samples": fid_samples.tolist()})


def stage_label(cfg: ExperimentConfig, store: ArtifactStore) -> list[BudgetReport]:
    ensemble = TeacherEnsemble.from_dict(store.read_json("teachers"))
    synthetic = np.array(store.read_json("synthetic")["samples"], dtype=np.float64).reshape(-1, ensemble.feature_dim)
    plan = budgets(cfg)
    for budget in plan:
        check_planned_queries(len(synthetic), budget)
    reports = []
    for budget in plan:
        tag = epsilon_tag(budget.epsilon_target)
        labeled, log, report = label_with_budget(ensemble, synthetic, budget, _stage_seed(cfg))
        store.write_csv("labels", labeled, tag=tag)
        store.write_json("labeling_log", log.to_dict(), tag=tag)
        reports.append(report)
    store.write_json("budget", {"reports": [r.to_dict() for r in reports]})
    return reports


def stage_train_student(cfg: ExperimentConfig, store: ArtifactStore) -> None:
    for eps in cfg.epsilon_targets:
        tag = epsilon_tag(eps)
        student = fit_student(cfg, store.read_csv("labels", tag=tag), _stage_seed(cfg))
        store.write_json("student", student.to_dict(), tag=tag)


def stage_evaluate(cfg: ExperimentConfig, store: ArtifactStore) -> dict:
    train, test = store.read_csv("train"), store.read_csv("test")
    ensemble = TeacherEnsemble.from_dict(store.read_json("teachers"))
    synth = store.read_json("synthetic")
    fid_samples = np.array(synth["fid_samples"], dtype=np.float64).reshape(-1, ensemble.feature_dim)
    reports = {r["epsilon_target"]: r for r in store.read_json("budget")["reports"]}
    per_epsilon = []
    for budget in budgets(cfg):
        tag = epsilon_tag(budget.epsilon_target)
        labeled = store.read_csv("labels", tag=tag)
        log = LabelingLog.from_dict(store.read_json("labeling_log", tag=tag))
        student = StudentModel.from_dict(store.read_json("student", tag=tag))
        report = assert_budget(log, budget)
        if report.to_dict() != reports.get(budget.epsilon_target):
            raise StaleArtifactError(f"budget report for epsilon={tag} disagrees with the labeling log")
        per_epsilon.append((budget, labeled, log, report, student))
    metrics = store.read_json("aae")["metrics"]
    seed = _stage_seed(cfg)
    record = _evaluate_trial(cfg, 0, seed, train, test, ensemble, metrics[-1] if metrics else None, fid_samples, per_epsilon)
    results = results_document(cfg, [record])
    store.write_text("results", dumps_results(results))
    store.write_text("results_csv", rows_to_csv(results["summary"], store._meta()))
    return results


STAGE_FUNCTIONS = {
    "gen-data": stage_gen_data,
    "features": stage_features,
    "train-aae": stage_train_aae,
    "train-teachers": stage_train_teachers,
    "synthesize": stage_synthesize,
    "label": stage_label,
    "train-student": stage_train_student,
    "evaluate": stage_evaluate,
}


def run_stage(cfg: ExperimentConfig, stage: str, root=None):
    store = ArtifactStore(cfg, stage, root)
    start = time.perf_counter()
    out = STAGE_FUNCTIONS[stage](cfg, store)
    write_bookkeeping(cfg, store.root, stage, time.perf_counter() - start)
    return out


def run_all(cfg: ExperimentConfig, root=None, write: bool = True) -> dict:
    """Run the full epsilon-sweep x trials grid in memory and write the reports."""
    start = time.perf_counter()
    for budget in budgets(cfg):
        check_planned_queries(cfg.synthetic_count, budget)
    train, test = make_splits(cfg, load_sensitive_dataset(cfg))
    records = [run_trial(cfg, train, test, t) for t in range(cfg.trials)]
    results = results_document(cfg, records)
    if write:
        root = Path(root if root is not None else cfg.output_dir)
        root.mkdir(parents=True, exist_ok=True)
        (root / ARTIFACTS["results"]).write_text(dumps_results(results), encoding="utf-8")
        (root / ARTIFACTS["results_csv"]).write_text(
            rows_to_csv(results["summary"], {"config_digest": cfg.digest, "seed": cfg.seed}), encoding="utf-8"
        )
        (root / ARTIFACTS["budget"]).write_text(
            json.dumps({"config_digest": cfg.digest, "seed": cfg.seed, "reports": results["budget_reports"]}, indent=2, sort_keys=True) + "\n",
            encoding="utf-8",
        )
        write_bookkeeping(cfg, root, "run-all", time.perf_counter() - start)
    return results
