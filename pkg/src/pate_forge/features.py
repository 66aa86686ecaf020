"""Spectral front end: framing, radix-2 FFT, mel filterbank, log-mel and MFCC."""

from __future__ import annotations

import wave
from dataclasses import dataclass
from pathlib import Path
from typing import Literal

import numpy as np


@dataclass(frozen=True)
class Waveform:
    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise ValueError("waveform must be one-dimensional")
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")
        if not np.all(np.isfinite(samples)):
            raise ValueError("waveform samples must be finite")
        object.__setattr__(self, "samples", samples)


@dataclass(frozen=True)
class SpectrogramConfig:
    dft_size: int = 1024
    hop_length: int | None = None  # None means dft_size // 2
    window: Literal["hann", "rectangular"] = "hann"
    mel_bands: int = 80
    mfcc_count: int = 13
    fmin: float = 0.0
    fmax: float | None = None  # None means Nyquist

    @classmethod
    def speech_profile(cls) -> "SpectrogramConfig":
        # 100 frames per second at 16 kHz
        return cls(dft_size=1024, hop_length=160, mel_bands=80, mfcc_count=13, fmax=8000.0)

    @property
    def hop(self) -> int:
        return self.dft_size // 2 if self.hop_length is None else self.hop_length

    def upper_frequency(self, sample_rate: float) -> float:
        return sample_rate / 2.0 if self.fmax is None else float(self.fmax)

    def validate(self, sample_rate: float | None = None) -> None:
        n = self.dft_size
        if n < 2 or n & (n - 1):
            raise ValueError(f"dft_size must be a power of two, got {n}")
        if not 0 < self.hop <= n:
            raise ValueError("hop_length must lie in (0, dft_size]")
        if self.window not in ("hann", "rectangular"):
            raise ValueError(f"unknown window {self.window!r}")
        if self.mel_bands < 1 or not 1 <= self.mfcc_count <= self.mel_bands:
            raise ValueError("need 1 <= mfcc_count <= mel_bands")
        if sample_rate is not None:
            top = self.upper_frequency(sample_rate)
            if not 0 <= self.fmin < top <= sample_rate / 2.0:
                raise ValueError("need 0 <= fmin < fmax <= sample_rate / 2")


@dataclass(frozen=True)
class MelFilterbank:
    weights: np.ndarray  # (mel_bands, dft_size // 2 + 1)
    center_frequencies: np.ndarray
    sample_rate: float
    dft_size: int


@dataclass(frozen=True)
class FeatureMatrix:
    values: np.ndarray  # (frames, coefficients)
    kind: Literal["log-mel", "mfcc"]

    @property
    def shape(self):
        return self.values.shape


def window_function(kind: str, length: int) -> np.ndarray:
    if kind == "rectangular":
        return np.ones(length)
    if kind == "hann":
        # symmetric Hann: both endpoints are exactly zero
        return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(length) / (length - 1))
    raise ValueError(f"unknown window {kind!r}")


def frame_and_window(waveform: Waveform, config: SpectrogramConfig) -> np.ndarray:
    """Return ``(frames, dft_size)`` windowed frames with no padding."""
    config.validate()
    x = waveform.samples
    n, hop = config.dft_size, config.hop
    if x.size < n:
        raise ValueError(f"waveform has {x.size} samples, shorter than one frame of {n}")
    count = (x.size - n) // hop + 1
    starts = hop * np.arange(count)
    frames = x[starts[:, None] + np.arange(n)]
    return frames * window_function(config.window, n)


def _bit_reverse(n: int) -> np.ndarray:
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.int64)
    for b in range(bits):
        rev |= ((idx >> b) & 1) << (bits - 1 - b)
    return rev


def fft(x) -> np.ndarray:
    """Iterative radix-2 decimation-in-time FFT along the last axis."""
    a = np.asarray(x, dtype=np.complex128)
    n = a.shape[-1]
    if n < 1 or n & (n - 1):
        raise ValueError(f"FFT length must be a power of two, got {n}")
    lead = a.shape[:-1]
    a = a[..., _bit_reverse(n)]
    size = 2
    while size <= n:
        half = size // 2
        twiddle = np.exp(-2j * np.pi * np.arange(half) / size)
        blocks = a.reshape(*lead, n // size, size)
        even = blocks[..., :half]
        odd = blocks[..., half:] * twiddle
        a = np.concatenate([even + odd, even - odd], axis=-1).reshape(*lead, n)
        size *= 2
    return a


def dft(frame) -> np.ndarray:
    return fft(frame)


def naive_dft(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.complex128)
    n = x.shape[-1]
    k = np.arange(n)
    basis = np.exp(-2j * np.pi * np.outer(k, k) / n)
    return x @ basis.T


def power_spectrum(frames: np.ndarray) -> np.ndarray:
    """``|X_k|^2`` for the non-negative frequency bins, ``dft_size // 2 + 1`` of them."""
    spectrum = fft(frames)
    n = spectrum.shape[-1]
    return np.abs(spectrum[..., : n // 2 + 1]) ** 2


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank_build(config: SpectrogramConfig, sample_rate: float) -> MelFilterbank:
    """Triangular filters with centres equally spaced in mel between fmin and fmax.

    Each triangle is evaluated at the bin frequencies and rescaled so its
    largest bin weight is exactly 1.
    """
    config.validate(sample_rate)
    fmax = config.upper_frequency(sample_rate)
    edges = mel_to_hz(np.linspace(hz_to_mel(config.fmin), hz_to_mel(fmax), config.mel_bands + 2))
    bins = np.arange(config.dft_size // 2 + 1) * sample_rate / config.dft_size
    weights = np.zeros((config.mel_bands, bins.size))
    for b in range(config.mel_bands):
        lo, center, hi = edges[b], edges[b + 1], edges[b + 2]
        rising = (bins - lo) / (center - lo)
        falling = (hi - bins) / (hi - center)
        tri = np.clip(np.minimum(rising, falling), 0.0, None)
        peak = tri.max()
        if peak <= 0.0:
            raise ValueError(
                f"{config.mel_bands} mel bands are too many for a {config.dft_size}-point DFT: "
                f"band {b} ({lo:.1f}-{hi:.1f} Hz) covers no frequency bin"
            )
        weights[b] = tri / peak
    return MelFilterbank(weights, edges[1:-1], float(sample_rate), config.dft_size)


def log_mel(power_frames, filterbank: MelFilterbank, floor_value: float = 1e-10) -> FeatureMatrix:
    power = np.atleast_2d(np.asarray(power_frames, dtype=np.float64))
    if power.shape[-1] != filterbank.weights.shape[1]:
        raise ValueError(
            f"spectrum has {power.shape[-1]} bins, filterbank expects {filterbank.weights.shape[1]}"
        )
    energies = power @ filterbank.weights.T
    return FeatureMatrix(np.log(np.maximum(energies, floor_value)), "log-mel")


def dct_matrix(n: int) -> np.ndarray:
    """Orthonormal DCT-II matrix; ``dct_matrix(n) @ v`` transforms a column vector."""
    k = np.arange(n)[:, None]
    i = np.arange(n)[None, :]
    m = np.sqrt(2.0 / n) * np.cos(np.pi * (2 * i + 1) * k / (2 * n))
    m[0] /= np.sqrt(2.0)
    return m


def mfcc(log_mel_features, mfcc_count: int) -> FeatureMatrix:
    values = log_mel_features.values if isinstance(log_mel_features, FeatureMatrix) else log_mel_features
    values = np.atleast_2d(np.asarray(values, dtype=np.float64))
    bands = values.shape[-1]
    if not 1 <= mfcc_count <= bands:
        raise ValueError(f"mfcc_count must be in [1, {bands}], got {mfcc_count}")
    return FeatureMatrix(values @ dct_matrix(bands)[:mfcc_count].T, "mfcc")


def inverse_mfcc(coefficients) -> np.ndarray:
    """Inverse of a full-length ``mfcc``; only exact when no coefficient was dropped."""
    values = coefficients.values if isinstance(coefficients, FeatureMatrix) else coefficients
    values = np.atleast_2d(values)
    return values @ dct_matrix(values.shape[-1])


def extract_features(
    waveform: Waveform, config: SpectrogramConfig, kind: str = "mfcc"
) -> FeatureMatrix:
    config.validate(waveform.sample_rate)
    frames = frame_and_window(waveform, config)
    bank = mel_filterbank_build(config, waveform.sample_rate)
    logmel = log_mel(power_spectrum(frames), bank)
    if kind == "log-mel":
        return logmel
    if kind == "mfcc":
        return mfcc(logmel, config.mfcc_count)
    raise ValueError(f"unknown feature kind {kind!r}")


def summarize(features: FeatureMatrix) -> np.ndarray:
    """Collapse a variable-length feature matrix to one vector (mean over frames)."""
    return features.values.mean(axis=0)


def read_wav(path) -> Waveform:
    """Read a mono PCM WAV file (8, 16 or 32 bit) into ``[-1, 1]`` floats."""
    with wave.open(str(path), "rb") as fh:
        width = fh.getsampwidth()
        channels = fh.getnchannels()
        rate = fh.getframerate()
        raw = fh.readframes(fh.getnframes())
    if width == 1:
        data = (np.frombuffer(raw, dtype=np.uint8).astype(np.float64) - 128.0) / 128.0
    elif width == 2:
        data = np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0
    elif width == 4:
        data = np.frombuffer(raw, dtype="<i4").astype(np.float64) / 2147483648.0
    else:
        raise ValueError(f"unsupported sample width {width} in {path}")
    if channels > 1:
        data = data.reshape(-1, channels).mean(axis=1)
    return Waveform(data, rate)


def write_wav(path, waveform: Waveform) -> None:
    pcm = np.clip(np.round(waveform.samples * 32767.0), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as fh:
        fh.setnchannels(1)
        fh.setsampwidth(2)
        fh.setframerate(int(waveform.sample_rate))
        fh.writeframes(pcm.tobytes())


def waveform_directory_index(root) -> tuple[list[tuple[str, int]], list[str]]:
    """List ``(relative path, label)`` for ``root/<class name>/*.wav``.

    Class indices follow the sorted class-directory names.
    """
    root = Path(root)
    classes = sorted(p.name for p in root.iterdir() if p.is_dir())
    if len(classes) < 2:
        raise ValueError(f"{root} must contain at least two class subdirectories")
    index = []
    for label, name in enumerate(classes):
        for wav in sorted((root / name).glob("*.wav")):
            index.append((wav.relative_to(root).as_posix(), label))
    return index, classes
