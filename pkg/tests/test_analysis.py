import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.metrics import adjusted_rand_score

from aeminer.analysis import (
    EmptyCalibrationError,
    KTooLargeError,
    ThresholdPolicy,
    calibrate_threshold,
    detect_anomalies,
    kmeans,
    latent_features,
)
from aeminer.autoencoder import TrainConfig, build_model, train
from aeminer.evaluation import logreg_train, roc_auc
from aeminer.synthetic import anomaly_benchmark, gaussian_blobs


def test_threshold_constant_errors():
    assert calibrate_threshold(np.full(50, 0.3), ThresholdPolicy("quantile", 0.99)) == 0.3


def test_threshold_quantile_interpolation():
    assert calibrate_threshold(np.arange(101.0), ThresholdPolicy("quantile", 0.5)) == 50.0
    assert calibrate_threshold(np.arange(101.0), ThresholdPolicy("quantile", 0.255)) == pytest.approx(25.5)


def test_threshold_mean_plus_k_sigma():
    errors = np.r_[np.full(50, 0.9), np.full(50, 1.1)]  # mean 1, population std 0.1
    assert calibrate_threshold(errors, ThresholdPolicy("mean_plus_k_sigma", 3)) == pytest.approx(1.3)


def test_threshold_errors():
    with pytest.raises(EmptyCalibrationError):
        calibrate_threshold([])
    with pytest.raises(ValueError):
        ThresholdPolicy("median")
    with pytest.raises(ValueError):
        ThresholdPolicy("quantile", 1.5)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(0, 1e3), min_size=1, max_size=200), st.floats(0, 1))
def test_threshold_within_range(errors, p):
    t = calibrate_threshold(errors, ThresholdPolicy("quantile", p))
    assert min(errors) - 1e-9 <= t <= max(errors) + 1e-9


@pytest.fixture(scope="module")
def benchmark_model():
    x, labels = anomaly_benchmark(seed=0)
    mu, sd = x.mean(axis=0), x.std(axis=0)
    z = (x - mu) / sd
    model = build_model(10, (32, 16), 2, seed=0)
    train(model, z, config=TrainConfig(epochs=100, batch_size=32, seed=0))
    return model, z, labels


def test_calibration_set_flags_one_percent(benchmark_model):
    model, z, _ = benchmark_model
    policy = ThresholdPolicy("quantile", 0.99)
    threshold = calibrate_threshold(model.reconstruction_errors(z), policy)
    report = detect_anomalies(model, z, threshold, policy.describe())
    assert abs(report.n_flagged - 0.01 * len(z)) <= 1
    np.testing.assert_array_equal(report.flags, report.errors > threshold)


def test_outliers_rank_high(benchmark_model):
    model, z, labels = benchmark_model
    assert roc_auc(model.reconstruction_errors(z), labels) > 0.95


def test_constructed_outlier_flagged():
    rng = np.random.default_rng(0)
    # 2-D spread in the first two coordinates, constant offset in the others
    x = np.hstack([rng.normal(size=(400, 2)), np.full((400, 2), 5.0)]) + 0.05 * rng.normal(size=(400, 4))
    mu, sd = x.mean(axis=0), x.std(axis=0)
    model = build_model(4, (8,), 2, seed=1)
    train(model, (x - mu) / sd, config=TrainConfig(epochs=100, batch_size=32, lr=3e-3))
    threshold = calibrate_threshold(model.reconstruction_errors((x - mu) / sd))
    report = detect_anomalies(model, (np.zeros((1, 4)) - mu) / sd, threshold)
    assert report.flags[0] and report.errors[0] > 10 * threshold


def test_latent_features_shapes_and_duplicates():
    model = build_model(6, (5,), 1, seed=0)
    x = np.random.default_rng(0).normal(size=(4, 6))
    x = np.vstack([x, x[:1]])
    z = latent_features(model, x)
    assert z.shape == (5, 1)
    np.testing.assert_array_equal(z[0], z[4])


def test_latent_features_full_width_preserve_classifier():
    x, y = gaussian_blobs(150, [[0, 0, 0], [3, 3, 0]], 1.0, seed=3)
    model = build_model(3, (16,), 3, seed=0)
    train(model, x, config=TrainConfig(epochs=300, batch_size=32, lr=3e-3))
    acc_raw = np.mean(logreg_train(x, y).predict(x) == y)
    z = latent_features(model, x)
    acc_latent = np.mean(logreg_train(z, y).predict(z) == y)
    assert abs(acc_raw - acc_latent) <= 0.03


def test_kmeans_single_cluster(rng):
    z = rng.normal(size=(50, 3))
    c = kmeans(z, 1)
    np.testing.assert_allclose(c.centroids[0], z.mean(axis=0), atol=1e-12)
    assert c.inertia == pytest.approx(z.var(axis=0).sum() * 50, rel=1e-12)


def test_kmeans_k_equals_n(rng):
    z = rng.normal(size=(7, 2))
    c = kmeans(z, 7)
    assert c.inertia == 0.0
    assert len(set(c.labels.tolist())) == 7


def test_kmeans_separated_blobs():
    z, labels = gaussian_blobs(100, [[0, 0], [10, 0]], 1.0, seed=0)
    assert adjusted_rand_score(labels, kmeans(z, 2, seed=0).labels) == 1.0


def test_kmeans_inertia_non_increasing(rng):
    z = rng.normal(size=(300, 2))
    c = kmeans(z, 5, seed=2)
    assert np.all(np.diff(c.inertia_history) <= 1e-9)


def test_kmeans_deterministic(rng):
    z = rng.normal(size=(100, 3))
    np.testing.assert_array_equal(kmeans(z, 4, seed=5).labels, kmeans(z, 4, seed=5).labels)


def test_kmeans_k_too_large(rng):
    with pytest.raises(KTooLargeError):
        kmeans(rng.normal(size=(3, 2)), 4)


def test_kmeans_duplicate_points():
    z = np.zeros((6, 2))
    c = kmeans(z, 3)
    assert c.inertia == 0.0 and np.all(np.isfinite(c.centroids))
