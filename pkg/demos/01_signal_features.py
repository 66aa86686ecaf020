"""
From waveform to MFCC vectors
=============================

Frame a signal, take power spectra with the radix-2 FFT, pool them through a
mel filterbank and decorrelate with an orthonormal DCT.
"""

import numpy as np

from pate_forge.features import (
    SpectrogramConfig,
    Waveform,
    extract_features,
    fft,
    mel_filterbank_build,
    naive_dft,
    summarize,
)

rate = 16000
t = np.arange(rate) / rate
# a one second chirp plus a little noise
signal = np.sin(2 * np.pi * (200 + 1800 * t) * t) + 0.05 * np.random.default_rng(0).standard_normal(t.size)
wave = Waveform(signal, rate)

# the FFT agrees with the O(N^2) DFT definition
x = signal[:256]
print("max |fft - dft| on 256 points:", np.abs(fft(x) - naive_dft(x)).max())

# 1024-point frames every 10 ms, 80 mel bands, 13 cepstral coefficients
cfg = SpectrogramConfig.speech_profile()
bank = mel_filterbank_build(cfg, rate)
print("filterbank:", bank.weights.shape, "first centres (Hz):", bank.center_frequencies[:4].round(1))

logmel = extract_features(wave, cfg, "log-mel")
coeffs = extract_features(wave, cfg, "mfcc")
print("log-mel frames x bands:", logmel.shape)
print("mfcc frames x coefficients:", coeffs.shape)

# the chirp sweeps upward, so the loudest band moves up over time
loudest = logmel.values.argmax(axis=1)
print("loudest band at 0.1 s, 0.5 s, 0.9 s:", loudest[[10, 50, 90]])

# one fixed-length vector per utterance, as used by the classifiers
print("summary vector (first 5):", summarize(coeffs)[:5].round(3))
