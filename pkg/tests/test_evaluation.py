import json

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings, strategies as st

from pate_forge.data import Dataset
from pate_forge.evaluation import (
    CSV_COLUMNS,
    AccuracyReport,
    GaussianStats,
    accuracy,
    csv_to_rows,
    emit_report,
    fid_between,
    fid_table,
    fit_gaussian,
    frechet_distance,
    matrix_sqrt_psd,
    rows_to_csv,
    run_trials,
    trial_seed,
)


def random_spd(rng, d, cond=None):
    q, _ = np.linalg.qr(rng.standard_normal((d, d)))
    vals = rng.uniform(0.5, 2.0, d) if cond is None else np.geomspace(1.0, 1.0 / cond, d)
    return (q * vals) @ q.T


def test_fit_gaussian_hand_example():
    s = fit_gaussian([[0, 0], [2, 2]])
    assert s.mean.tolist() == [1, 1]
    assert s.covariance.tolist() == [[2, 2], [2, 2]]
    assert s.count == 2


def test_fit_gaussian_identical_and_errors():
    s = fit_gaussian(np.ones((5, 3)))
    assert np.all(s.covariance == 0)
    with pytest.raises(ValueError):
        fit_gaussian(np.ones((1, 3)))


def test_fit_gaussian_monte_carlo(rng):
    d, n = 3, 200_000
    cov = random_spd(rng, d)
    mean = np.array([1.0, -2.0, 0.5])
    s = fit_gaussian(rng.multivariate_normal(mean, cov, size=n))
    assert np.all(np.abs(s.mean - mean) < 3 * np.sqrt(np.diag(cov) / n))
    se = np.sqrt((cov**2 + np.outer(np.diag(cov), np.diag(cov))) / n)
    assert np.all(np.abs(s.covariance - cov) < 3 * se)


def test_gaussian_stats_rejects_asymmetry():
    with pytest.raises(ValueError):
        GaussianStats(np.zeros(2), np.array([[1.0, 0.5], [0.0, 1.0]]), 5)


def test_sqrt_simple_cases():
    assert np.allclose(matrix_sqrt_psd(np.eye(4)), np.eye(4), atol=0)
    assert np.allclose(matrix_sqrt_psd(np.diag([4.0, 9.0])), np.diag([2.0, 3.0]), atol=1e-15)
    with pytest.raises(ValueError):
        matrix_sqrt_psd(np.array([[1.0, 1.0], [0.0, 1.0]]))


def test_sqrt_reconstruction(rng):
    for d in (1, 2, 5, 20):
        b = rng.standard_normal((d, d))
        a = b @ b.T
        s = matrix_sqrt_psd(a)
        assert np.abs(s @ s - a).max() < 1e-8


@pytest.mark.parametrize("cond", [1e2, 1e4, 1e6])
def test_sqrt_ill_conditioned(rng, cond):
    a = random_spd(rng, 8, cond)
    s = matrix_sqrt_psd(a)
    assert np.abs(s @ s - a).max() < 1e-8


def test_sqrt_clips_tiny_negative_eigenvalues():
    v = np.array([[1.0], [1.0]]) / np.sqrt(2)
    a = v @ v.T
    a[0, 0] -= 1e-14
    s = matrix_sqrt_psd(a)
    assert np.all(np.isfinite(s))


def test_fid_identical_is_zero(rng):
    s = fit_gaussian(rng.standard_normal((50, 6)))
    assert abs(frechet_distance(s, s).fid) < 1e-8


def test_fid_one_dimensional_closed_forms():
    a = GaussianStats(np.array([0.0]), np.array([[1.0]]), 10)
    b = GaussianStats(np.array([2.0]), np.array([[1.0]]), 10)
    c = GaussianStats(np.array([0.0]), np.array([[4.0]]), 10)
    assert abs(frechet_distance(a, b).fid - 4.0) < 1e-10
    assert abs(frechet_distance(a, c).fid - 1.0) < 1e-10


@settings(max_examples=50, deadline=None)
@given(st.floats(-5, 5), st.floats(-5, 5), st.floats(0.01, 10), st.floats(0.01, 10))
def test_fid_matches_scalar_closed_form(m1, m2, s1, s2):
    a = GaussianStats(np.array([m1]), np.array([[s1 * s1]]), 2)
    b = GaussianStats(np.array([m2]), np.array([[s2 * s2]]), 2)
    assert abs(frechet_distance(a, b).fid - ((m1 - m2) ** 2 + (s1 - s2) ** 2)) < 1e-10 * max(1.0, s1 * s1 + s2 * s2)


def test_fid_against_scipy_sqrtm(rng):
    for _ in range(10):
        d = int(rng.integers(2, 8))
        s1 = GaussianStats(rng.standard_normal(d), random_spd(rng, d), 5)
        s2 = GaussianStats(rng.standard_normal(d), random_spd(rng, d), 5)
        cross = scipy.linalg.sqrtm(s1.covariance @ s2.covariance).real
        oracle = np.sum((s1.mean - s2.mean) ** 2) + np.trace(s1.covariance + s2.covariance - 2 * cross)
        report = frechet_distance(s1, s2)
        assert report.fid == pytest.approx(oracle, rel=1e-9, abs=1e-9)
        assert abs(report.fid - frechet_distance(s2, s1).fid) < 1e-8
        assert abs(report.fid - (report.mean_term + report.trace_term)) < 1e-10
        assert report.fid >= 0


def test_fid_errors_and_counts(rng):
    with pytest.raises(ValueError):
        frechet_distance(fit_gaussian(rng.standard_normal((5, 2))), fit_gaussian(rng.standard_normal((5, 3))))
    report = fid_between(rng.standard_normal((7, 2)), rng.standard_normal((9, 2)))
    assert report.counts == (7, 9)


def balanced(m=3, n=30):
    labels = np.arange(n) % m
    return Dataset(np.eye(m)[labels], labels, m)


def test_accuracy_cases(rng):
    data = balanced()
    assert accuracy(lambda x: np.argmax(x, axis=1), data) == 1.0
    assert accuracy(lambda x: np.zeros(len(x), int), data) == pytest.approx(1 / 3)
    assert accuracy(lambda x: x, data) == 1.0
    noisy = rng.standard_normal((30, 3))
    recount = sum(int(np.argmax(noisy[i]) == data.labels[i]) for i in range(30)) / 30
    assert accuracy(lambda x: noisy, data) == recount
    with pytest.raises(ValueError):
        accuracy(lambda x: x, Dataset(np.zeros((0, 3)), np.zeros(0, int), 3))


def test_tied_logits_pick_lowest_index():
    data = Dataset(np.zeros((2, 2)), np.array([0, 0]), 2)
    assert accuracy(lambda x: np.ones((2, 2)), data) == 1.0


def test_run_trials_single_trial():
    report = run_trials(lambda t, s: 0.75, trials=1)
    assert report.mean == 0.75 and report.std == 0.0 and report.trials == 1


def trial_value(t, seed):
    return float(np.random.default_rng(seed).uniform())


def test_run_trials_order_insensitive():
    a = run_trials(trial_value, 6, master_seed=3)
    b = run_trials(trial_value, 6, master_seed=3, order=[5, 2, 0, 4, 1, 3])
    assert a == b
    assert a.accuracies[2] == trial_value(2, trial_seed(3, 2))
    with pytest.raises(ValueError):
        run_trials(trial_value, 3, order=[0, 1])


def test_run_trials_deterministic_model_has_zero_spread():
    assert run_trials(lambda t, s: 0.5, 20).std == 0.0


def test_accuracy_report_is_recomputable():
    values = [0.1, 0.4, 0.35, 0.9]
    report = AccuracyReport.from_accuracies(values)
    assert report.mean == np.mean(values)
    assert report.std == np.std(values, ddof=1)
    doc = report.to_dict()
    assert np.mean(doc["accuracies"]) == doc["mean"] and doc["trials"] == 4
    with pytest.raises(ValueError):
        AccuracyReport.from_accuracies([1.5])


def test_table_cell_formatting():
    assert fid_table()["DP-GAN"][0.01] == "35.2±0.5"
    assert fid_table()["PATE-GAN"][100] == "24.3±0.1"


def test_empty_csv_is_header_only(tmp_path):
    json_path, csv_path = emit_report({"summary": []}, tmp_path / "out")
    assert csv_path.read_text() == ",".join(CSV_COLUMNS) + "\n"
    assert json.loads(json_path.read_text()) == {"summary": []}


def test_json_csv_json_round_trip(tmp_path, rng):
    rows = [dict(zip(CSV_COLUMNS, map(float, rng.standard_normal(5) / 3))) for _ in range(5)]
    results = {"summary": rows}
    json_path, csv_path = emit_report(results, tmp_path / "results.json")
    loaded = json.loads(json_path.read_text())
    assert csv_to_rows(csv_path.read_text()) == loaded["summary"] == rows
    assert csv_to_rows(rows_to_csv(rows)) == rows
