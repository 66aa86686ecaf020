import numpy as np
import pytest
import scipy.fft

from pate_forge.features import (
    SpectrogramConfig,
    Waveform,
    dct_matrix,
    dft,
    extract_features,
    fft,
    frame_and_window,
    hz_to_mel,
    inverse_mfcc,
    log_mel,
    mel_filterbank_build,
    mel_to_hz,
    mfcc,
    naive_dft,
    power_spectrum,
    read_wav,
    write_wav,
)


def wave_of(n, rate=16000, seed=0):
    return Waveform(np.random.default_rng(seed).uniform(-1, 1, n), rate)


@pytest.mark.parametrize("n, frames", [(1024, 1), (2048, 3)])
def test_frame_count(n, frames):
    cfg = SpectrogramConfig(dft_size=1024, hop_length=512)
    assert frame_and_window(wave_of(n), cfg).shape == (frames, 1024)


def test_hann_zeroes_frame_edges():
    frames = frame_and_window(Waveform(np.ones(2048), 16000), SpectrogramConfig(dft_size=1024, hop_length=512))
    assert np.all(frames[:, 0] == 0.0) and np.all(frames[:, -1] == 0.0)
    rect = frame_and_window(Waveform(np.ones(1024), 16000), SpectrogramConfig(dft_size=1024, window="rectangular"))
    assert np.all(rect == 1.0)


def test_short_waveform_rejected():
    with pytest.raises(ValueError, match="shorter than one frame"):
        frame_and_window(wave_of(1000), SpectrogramConfig(dft_size=1024))


def test_default_hop_is_half_frame():
    assert SpectrogramConfig(dft_size=256).hop == 128
    assert SpectrogramConfig.speech_profile().hop == 160


def test_fft_impulse_and_dc():
    impulse = np.zeros(16)
    impulse[0] = 1
    np.testing.assert_allclose(dft(impulse), np.ones(16), atol=1e-15)
    np.testing.assert_allclose(dft(np.ones(8)), [8, 0, 0, 0, 0, 0, 0, 0], atol=1e-14)


def test_fft_matches_naive_dft_for_all_sizes(rng):
    for k in range(1, 9):
        n = 2**k
        x = rng.standard_normal(n) + 1j * rng.standard_normal(n)
        assert np.max(np.abs(fft(x) - naive_dft(x))) < 1e-9


def test_fft_batched_rows_match(rng):
    x = rng.standard_normal((5, 64))
    np.testing.assert_allclose(fft(x), np.stack([naive_dft(r) for r in x]), atol=1e-10)


def test_parseval(rng):
    x = rng.standard_normal(64)
    X = naive_dft(x)
    assert np.sum(np.abs(fft(x)) ** 2) / 64 == pytest.approx(np.sum(x**2), rel=1e-10)
    assert np.sum(np.abs(X) ** 2) / 64 == pytest.approx(np.sum(x**2), rel=1e-10)


@pytest.mark.parametrize("n", [3, 6, 100])
def test_fft_rejects_non_power_of_two(n):
    with pytest.raises(ValueError, match="power of two"):
        fft(np.ones(n))


def test_mel_scale_formula():
    assert float(hz_to_mel(700.0)) == pytest.approx(2595.0 * np.log10(2.0))
    assert float(mel_to_hz(hz_to_mel(1234.5))) == pytest.approx(1234.5)


def test_two_band_centres_are_at_mel_thirds():
    bank = mel_filterbank_build(SpectrogramConfig(dft_size=256, mel_bands=2, mfcc_count=1), 16000)
    top = 2595.0 * np.log10(1.0 + 8000.0 / 700.0)
    expected = [700.0 * (10 ** (top * f / 2595.0) - 1.0) for f in (1 / 3, 2 / 3)]
    np.testing.assert_allclose(bank.center_frequencies, expected, rtol=1e-12)


def test_speech_filterbank_shape_and_invariants():
    cfg = SpectrogramConfig(dft_size=1024, mel_bands=80, mfcc_count=13)
    bank = mel_filterbank_build(cfg, 16000)
    w = bank.weights
    assert w.shape == (80, 513)
    assert w.min() >= 0.0 and w.max() <= 1.0
    assert np.all(w.max(axis=1) == 1.0)
    # each band rises to a single peak and falls again
    for row in w:
        support = row[row > 0]
        peak = np.argmax(support)
        assert np.all(np.diff(support[: peak + 1]) >= 0) and np.all(np.diff(support[peak:]) <= 0)
    freqs = np.arange(513) * 16000 / 1024
    interior = (freqs > 0) & (freqs < 8000)
    assert np.all(w[:, interior].sum(axis=0) > 0)


def test_filterbank_rejects_too_many_bands():
    with pytest.raises(ValueError, match="covers no frequency bin"):
        mel_filterbank_build(SpectrogramConfig(dft_size=64, mel_bands=60, mfcc_count=13), 16000)


def test_filterbank_respects_band_limits():
    bank = mel_filterbank_build(SpectrogramConfig(dft_size=512, mel_bands=20, fmin=300.0, fmax=4000.0), 16000)
    freqs = np.arange(257) * 16000 / 512
    outside = (freqs <= 300.0) | (freqs >= 4000.0)
    assert np.all(bank.weights[:, outside] == 0.0)


def test_log_mel_floor_and_scaling(rng):
    bank = mel_filterbank_build(SpectrogramConfig(dft_size=256, mel_bands=20), 16000)
    zero = log_mel(np.zeros((3, 129)), bank)
    assert np.all(zero.values == np.log(1e-10))
    power = rng.uniform(0.1, 2.0, size=(4, 129))
    shifted = log_mel(10 * power, bank).values - log_mel(power, bank).values
    np.testing.assert_allclose(shifted, np.log(10.0), atol=1e-12)


def test_log_mel_tone_at_band_peak(rng):
    bank = mel_filterbank_build(SpectrogramConfig(dft_size=512, mel_bands=20), 16000)
    band = 7
    peak_bin = int(np.argmax(bank.weights[band]))
    power = np.zeros((1, 257))
    power[0, peak_bin] = 1.0
    assert int(np.argmax(log_mel(power, bank).values[0])) == band


def test_log_mel_dimension_mismatch():
    bank = mel_filterbank_build(SpectrogramConfig(dft_size=256, mel_bands=20), 16000)
    with pytest.raises(ValueError):
        log_mel(np.zeros((1, 100)), bank)


def test_dct_orthonormal_and_matches_scipy(rng):
    m = dct_matrix(80)
    assert np.max(np.abs(m.T @ m - np.eye(80))) < 1e-10
    v = rng.standard_normal(80)
    np.testing.assert_allclose(m @ v, scipy.fft.dct(v, type=2, norm="ortho"), atol=1e-12)


def test_mfcc_of_constant_row():
    out = mfcc(np.full((1, 80), 2.5), 13).values[0]
    assert out[0] == pytest.approx(2.5 * np.sqrt(80), rel=1e-12)
    assert np.max(np.abs(out[1:])) < 1e-12


def test_mfcc_full_length_is_invertible(rng):
    x = rng.standard_normal((4, 80))
    np.testing.assert_allclose(inverse_mfcc(mfcc(x, 80)), x, atol=1e-10)


def test_mfcc_shape_and_errors(rng):
    assert mfcc(rng.standard_normal((5, 80)), 13).shape == (5, 13)
    with pytest.raises(ValueError):
        mfcc(rng.standard_normal((5, 80)), 81)


def test_pipeline_is_pure_and_shaped():
    w = wave_of(16000, seed=3)
    cfg = SpectrogramConfig.speech_profile()
    a, b = extract_features(w, cfg), extract_features(w, cfg)
    assert a.values.tobytes() == b.values.tobytes()
    # 1 s at 16 kHz, 1024-point frames every 160 samples
    assert a.shape == ((16000 - 1024) // 160 + 1, 13) and a.kind == "mfcc"
    assert extract_features(w, cfg, "log-mel").shape[1] == 80
    power = power_spectrum(frame_and_window(w, cfg))
    assert power.shape[1] == 513


def test_wav_round_trip(tmp_path):
    w = Waveform(0.5 * np.sin(np.linspace(0, 200, 4000)), 16000)
    write_wav(tmp_path / "x.wav", w)
    back = read_wav(tmp_path / "x.wav")
    assert back.sample_rate == 16000
    assert np.max(np.abs(back.samples - w.samples)) < 1e-4


def test_config_validation():
    with pytest.raises(ValueError):
        SpectrogramConfig(dft_size=1000).validate()
    with pytest.raises(ValueError):
        SpectrogramConfig(mel_bands=10, mfcc_count=13).validate()
    with pytest.raises(ValueError):
        SpectrogramConfig(fmax=9000.0).validate(16000)
