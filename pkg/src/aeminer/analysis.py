"""Reconstruction-error anomaly detection, latent feature extraction and
k-means clustering of latent codes."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .linalg import Rng


class EmptyCalibrationError(ValueError):
    pass


class KTooLargeError(ValueError):
    pass


@dataclass(frozen=True)
class ThresholdPolicy:
    """``kind`` is ``"quantile"`` (value = p) or ``"mean_plus_k_sigma"``
    (value = k)."""

    kind: str = "quantile"
    value: float = 0.99

    def __post_init__(self):
        if self.kind not in ("quantile", "mean_plus_k_sigma"):
            raise ValueError(f"unknown threshold policy {self.kind!r}")
        if self.kind == "quantile" and not 0.0 <= self.value <= 1.0:
            raise ValueError("quantile level must lie in [0, 1]")

    def describe(self):
        return f"{self.kind}({self.value:g})"


def calibrate_threshold(train_errors, policy=None):
    errors = np.asarray(train_errors, dtype=np.float64).ravel()
    policy = policy or ThresholdPolicy()
    if errors.size == 0:
        raise EmptyCalibrationError("no calibration errors given")
    if np.any(errors < 0):
        raise ValueError("reconstruction errors must be non-negative")
    if policy.kind == "quantile":
        return float(np.quantile(errors, policy.value))
    return float(errors.mean() + policy.value * errors.std())


@dataclass
class AnomalyReport:
    errors: np.ndarray
    threshold: float
    flags: np.ndarray
    policy: str = ""
    calibration: dict = field(default_factory=dict)

    @property
    def n_flagged(self):
        return int(self.flags.sum())

    def summary(self):
        return {
            "threshold": self.threshold,
            "policy": self.policy,
            "n_samples": int(self.errors.size),
            "n_flagged": self.n_flagged,
            "mean_error": float(self.errors.mean()) if self.errors.size else 0.0,
            "calibration": self.calibration,
        }


def detect_anomalies(model, x_eval, threshold, policy=""):
    """Flag rows whose per-element reconstruction error exceeds ``threshold``."""
    errors = model.reconstruction_errors(x_eval)
    return AnomalyReport(errors, float(threshold), errors > threshold, policy)


def latent_features(model, x):
    """Compressed representation used downstream in place of raw features."""
    return model.encode(x)


@dataclass
class ClusterAssignment:
    k: int
    centroids: np.ndarray
    labels: np.ndarray
    inertia: float
    iterations: int
    inertia_history: list = field(default_factory=list)


def _sq_dist(z, c):
    return np.maximum(np.sum(z * z, 1)[:, None] + np.sum(c * c, 1)[None, :] - 2.0 * z @ c.T, 0.0)


def _assign(z, centroids):
    d = _sq_dist(z, centroids)
    labels = np.argmin(d, axis=1)
    return labels, d


def _inertia(z, centroids, labels):
    return float(np.sum((z - centroids[labels]) ** 2))


def kmeans_plusplus(z, k, rng):
    n = z.shape[0]
    chosen = [rng.integer(n)]
    closest = np.sum((z - z[chosen[0]]) ** 2, axis=1)
    for _ in range(1, k):
        if closest.sum() > 0:
            idx = rng.choice(closest)
        else:
            # every remaining point coincides with a centre
            idx = next(i for i in range(n) if i not in set(chosen))
        chosen.append(idx)
        closest = np.minimum(closest, np.sum((z - z[idx]) ** 2, axis=1))
    return z[chosen].copy()


def kmeans(z, k, max_iter=100, tol=1e-6, seed=0):
    """Lloyd's algorithm from a k-means++ start.

    A cluster that loses all its points is re-seeded at the point farthest
    from its current centroid.
    """
    z = np.asarray(z, dtype=np.float64)
    n = z.shape[0]
    if k < 1:
        raise ValueError("k must be >= 1")
    if k > n:
        raise KTooLargeError(f"k={k} exceeds the number of points {n}")
    centroids = kmeans_plusplus(z, k, Rng.derive(seed, "kmeans++"))
    labels, _ = _assign(z, centroids)
    history = [_inertia(z, centroids, labels)]
    it = 0
    for it in range(1, max_iter + 1):
        new = centroids.copy()
        counts = np.bincount(labels, minlength=k)
        for c in range(k):
            if counts[c]:
                new[c] = z[labels == c].mean(axis=0)
        for c in np.flatnonzero(counts == 0):
            far = int(np.argmax(np.sum((z - new[labels]) ** 2, axis=1)))
            new[c] = z[far]
            labels[far] = c
        shift = float(np.max(np.sqrt(np.sum((new - centroids) ** 2, axis=1))))
        centroids = new
        labels, _ = _assign(z, centroids)
        history.append(_inertia(z, centroids, labels))
        if shift < tol:
            break
    return ClusterAssignment(k, centroids, labels, history[-1], it, history)
