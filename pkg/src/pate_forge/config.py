"""Experiment configuration: profiles, JSON loading, validation and digests."""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

from .aae import AaeTrainConfig
from .data import ToyDatasetConfig
from .errors import ConfigError
from .features import SpectrogramConfig
from .nn import TrainConfig
from .pate import OBJECTIVES
from .accountant import CONVENTIONS, DEFAULT_DELTA
from .seeding import derive_seed

EPSILON_GRID = [0.01, 0.1, 1.0, 10.0, 100.0]

_TRAIN = {"optimizer": "adam", "learning_rate": 0.01, "epochs": 30, "batch_size": 32}

TOY_PROFILE = {
    "profile": "toy",
    "seed": 7,
    "data": {
        "source": "toy",
        "toy": {
            "num_classes": 3,
            "samples_per_class": 800,
            "feature_dim": 64,
            "separation": 5.0,
            "noise_scale": 1.0,
        },
        "csv_path": None,
        "waveform_dir": None,
        "spectrogram": {
            "dft_size": 1024,
            "hop_length": 160,
            "window": "hann",
            "mel_bands": 80,
            "mfcc_count": 13,
            "fmin": 0.0,
            "fmax": None,
        },
        "feature_kind": "mfcc",
        "test_fraction": 0.25,
    },
    "teachers": {"count": 10, "hidden": [32], "objective": "cross_entropy", "train": dict(_TRAIN)},
    "student": {"hidden": [32], "train": dict(_TRAIN)},
    "aae": {
        "latent_dim": 16,
        "encoder_hidden": [64],
        "decoder_hidden": [64],
        "discriminator_hidden": [32],
        "lr_reconstruction": 0.001,
        "lr_discriminator": 0.0005,
        "lr_adversarial": 0.0005,
        "batch_size": 64,
        "epochs": 30,
        "log_sigma_clamp": [-6.0, 2.0],
    },
    "synthetic_count": 300,
    "fid_sample_count": 1000,
    "privacy": {
        "epsilon_targets": list(EPSILON_GRID),
        "delta": DEFAULT_DELTA,
        "convention": "strict",
        "query_budget": None,
    },
    "trials": 20,
    "output_dir": "runs/toy",
}


def _full_scale_profile() -> dict:
    # full-scale settings: configuration-valid, far too slow for a desk run
    p = copy.deepcopy(TOY_PROFILE)
    p["profile"] = "paper"
    p["data"]["toy"].update(num_classes=35, samples_per_class=3024, feature_dim=80)
    p["teachers"].update(count=200, hidden=[256])
    p["student"].update(hidden=[256])
    p["aae"].update(latent_dim=128, encoder_hidden=[768, 768], decoder_hidden=[768], discriminator_hidden=[128])
    p["synthetic_count"] = 2000
    p["fid_sample_count"] = 10000
    p["output_dir"] = "runs/paper"
    return p


PROFILES = {"toy": TOY_PROFILE, "paper": _full_scale_profile()}


def _merge(base: dict, override: dict, where: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if key not in base:
            raise ConfigError(f"unknown config key {where}{key!r}")
        if isinstance(base[key], dict) and isinstance(value, dict):
            out[key] = _merge(base[key], value, f"{where}{key}.")
        else:
            out[key] = copy.deepcopy(value)
    return out


def digest_of(materialized: dict) -> str:
    body = {k: v for k, v in materialized.items() if k != "output_dir"}
    canonical = json.dumps(body, sort_keys=True, separators=(",", ":"), allow_nan=False)
    return hashlib.sha256(canonical.encode()).hexdigest()


@dataclass(frozen=True)
class ExperimentConfig:
    """Materialized configuration; ``raw`` holds every value, defaults included."""

    raw: dict

    # --- construction ---------------------------------------------------------

    @classmethod
    def from_dict(cls, doc: dict | None = None, profile: str | None = None, seed: int | None = None, output_dir=None) -> "ExperimentConfig":
        doc = dict(doc or {})
        # a materialized config.json carries its own digest; accept it only if it still matches
        claimed = doc.pop("config_digest", None)
        profile = profile or doc.get("profile") or "toy"
        if profile not in PROFILES:
            raise ConfigError(f"unknown profile {profile!r}")
        doc["profile"] = profile
        raw = _merge(PROFILES[profile], doc)
        if claimed is not None and claimed != digest_of(raw):
            raise ConfigError(f"config_digest {claimed!r} does not match the config contents")
        if seed is not None:
            raw["seed"] = seed
        if output_dir is not None:
            raw["output_dir"] = str(output_dir)
        cfg = cls(raw)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path, **overrides) -> "ExperimentConfig":
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        try:
            doc = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
        if not isinstance(doc, dict):
            raise ConfigError(f"{path}: top level must be a JSON object")
        csv_path = doc.get("data", {}).get("csv_path")
        if csv_path and not Path(csv_path).is_absolute():
            doc["data"]["csv_path"] = str((path.parent / csv_path).resolve())
        wav_dir = doc.get("data", {}).get("waveform_dir")
        if wav_dir and not Path(wav_dir).is_absolute():
            doc["data"]["waveform_dir"] = str((path.parent / wav_dir).resolve())
        return cls.from_dict(doc, **overrides)

    # --- views -----------------------------------------------------------------

    @property
    def seed(self) -> int:
        return int(self.raw["seed"])

    @property
    def digest(self) -> str:
        return digest_of(self.raw)

    @property
    def output_dir(self) -> Path:
        return Path(self.raw["output_dir"])

    @property
    def source(self) -> str:
        return self.raw["data"]["source"]

    @property
    def toy(self) -> ToyDatasetConfig:
        return ToyDatasetConfig(**self.raw["data"]["toy"], seed=derive_seed(self.seed, "toy-data"))

    @property
    def spectrogram(self) -> SpectrogramConfig:
        return SpectrogramConfig(**self.raw["data"]["spectrogram"])

    @property
    def teacher_count(self) -> int:
        return int(self.raw["teachers"]["count"])

    @property
    def teacher_train(self) -> TrainConfig:
        return TrainConfig(**self.raw["teachers"]["train"])

    @property
    def student_train(self) -> TrainConfig:
        return TrainConfig(**self.raw["student"]["train"])

    def aae_train(self, seed: int) -> AaeTrainConfig:
        a = dict(self.raw["aae"])
        for key in ("encoder_hidden", "decoder_hidden", "discriminator_hidden", "log_sigma_clamp"):
            a[key] = tuple(a[key])
        return AaeTrainConfig(**a, seed=seed)

    @property
    def epsilon_targets(self) -> list[float]:
        return [float(e) for e in self.raw["privacy"]["epsilon_targets"]]

    @property
    def convention(self) -> str:
        return self.raw["privacy"]["convention"]

    @property
    def delta(self) -> float:
        return float(self.raw["privacy"]["delta"])

    @property
    def query_budget(self) -> int:
        q = self.raw["privacy"]["query_budget"]
        return int(self.raw["synthetic_count"] if q is None else q)

    @property
    def synthetic_count(self) -> int:
        return int(self.raw["synthetic_count"])

    @property
    def trials(self) -> int:
        return int(self.raw["trials"])

    def materialized(self) -> dict:
        """Every setting plus the digest; the output location is left out so reports do not depend on it."""
        doc = copy.deepcopy(self.raw)
        del doc["output_dir"]
        doc["config_digest"] = self.digest
        return doc

    # --- validation ---------------------------------------------------------------

    def validate(self) -> None:
        r = self.raw
        try:
            if not isinstance(r["seed"], int) or not 0 <= r["seed"] < 2**64:
                raise ValueError("seed must be an unsigned 64-bit integer")
            data = r["data"]
            if data["source"] not in ("toy", "csv", "waveform"):
                raise ValueError(f"unknown data source {data['source']!r}")
            if data["source"] == "toy":
                self.toy.validate()
            if data["source"] == "csv" and not data["csv_path"]:
                raise ValueError("data.csv_path is required for the csv source")
            if data["source"] == "waveform":
                if not data["waveform_dir"]:
                    raise ValueError("data.waveform_dir is required for the waveform source")
                self.spectrogram.validate()
            if data["feature_kind"] not in ("mfcc", "log-mel"):
                raise ValueError("data.feature_kind must be 'mfcc' or 'log-mel'")
            if not 0 < data["test_fraction"] < 1:
                raise ValueError("data.test_fraction must lie in (0, 1)")
            if self.teacher_count < 1:
                raise ValueError("teachers.count must be at least 1")
            if r["teachers"]["objective"] not in OBJECTIVES:
                raise ValueError(f"teachers.objective must be one of {OBJECTIVES}")
            self.teacher_train.validate()
            self.student_train.validate()
            self.aae_train(0).validate()
            for key in ("teachers", "student"):
                if any(int(h) < 1 for h in r[key]["hidden"]):
                    raise ValueError(f"{key}.hidden sizes must be positive")
            if not r["aae"]["encoder_hidden"]:
                raise ValueError("aae.encoder_hidden needs at least one layer")
            if self.synthetic_count < 1:
                raise ValueError("synthetic_count must be at least 1")
            if r["fid_sample_count"] < 2:
                raise ValueError("fid_sample_count must be at least 2")
            eps = r["privacy"]["epsilon_targets"]
            if not eps or any(not (isinstance(e, (int, float)) and e > 0) for e in eps):
                raise ValueError("privacy.epsilon_targets must be a non-empty list of positive numbers")
            if self.convention not in CONVENTIONS:
                raise ValueError(f"privacy.convention must be one of {CONVENTIONS}")
            if self.query_budget < 1:
                raise ValueError("privacy.query_budget must be at least 1")
            if not 0 <= self.delta < 1:
                raise ValueError("privacy.delta must lie in [0, 1)")
            if self.trials < 1:
                raise ValueError("trials must be at least 1")
        except (TypeError, ValueError, KeyError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"invalid config: {exc}") from None
