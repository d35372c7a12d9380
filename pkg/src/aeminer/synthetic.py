"""Seeded synthetic datasets used by the tests, demos and bundled configs.

``bank_marketing_rows`` emits rows with the exact column roster and label
vocabularies of the UCI ``bank-additional-full.csv`` file so the full
pipeline can run without downloading it. Its joint distribution is invented
(a latent economic cycle drives the macro columns; the response depends on
call duration, prior outcome and the cycle) and is not a substitute for the
real data when reproducing published numbers.
"""

from __future__ import annotations

import csv

import numpy as np

from .linalg import Rng


def sinusoidal_manifold(n, seed=0, dim=10, noise=0.05):
    """``n`` points on a curved 2-D manifold in ``dim`` dimensions.

    Latents ``t ~ U(-1, 1)^2`` are mapped through
    ``x_j = sin(a_j . t * pi + phi_j)`` with fixed frequency vectors, then
    Gaussian noise of scale ``noise`` is added. Returns ``(x, t)``.
    """
    shape_rng = Rng.derive(0, "manifold-shape", dim)
    freq = 0.6 + 0.9 * shape_rng.uniform((dim, 2))
    freq *= np.where(shape_rng.uniform((dim, 2)) < 0.5, -1.0, 1.0)
    phase = 2 * np.pi * shape_rng.uniform(dim)
    rng = Rng.derive(seed, "manifold-sample")
    t = 2.0 * rng.uniform((n, 2)) - 1.0
    x = np.sin(np.pi * t @ freq.T + phase)
    if noise:
        x = x + noise * rng.normal(n, dim)
    return x, t


def anomaly_benchmark(seed=0, n_inliers=500, n_outliers=25, dim=10):
    """Manifold inliers plus uniform outliers in the inliers' bounding box
    (padded by 50%). Returns ``(x, is_outlier)``; inliers come first."""
    inliers, _ = sinusoidal_manifold(n_inliers, seed=seed, dim=dim, noise=0.02)
    lo, hi = inliers.min(axis=0), inliers.max(axis=0)
    pad = 0.5 * (hi - lo)
    rng = Rng.derive(seed, "outliers")
    outliers = (lo - pad) + (hi - lo + 2 * pad) * rng.uniform((n_outliers, dim))
    x = np.vstack([inliers, outliers])
    labels = np.r_[np.zeros(n_inliers, dtype=int), np.ones(n_outliers, dtype=int)]
    return x, labels


def gaussian_blobs(n_per, centers, scale=1.0, seed=0):
    centers = np.asarray(centers, dtype=np.float64)
    rng = Rng.derive(seed, "blobs")
    labels = np.repeat(np.arange(len(centers)), n_per)
    x = centers[labels] + scale * rng.normal(labels.size, centers.shape[1])
    return x, labels


BANK_HEADER = [
    "age", "job", "marital", "education", "default", "housing", "loan", "contact",
    "month", "day_of_week", "duration", "campaign", "pdays", "previous", "poutcome",
    "emp.var.rate", "cons.price.idx", "cons.conf.idx", "euribor3m", "nr.employed", "y",
]
_JOBS = ["admin.", "blue-collar", "technician", "services", "management", "retired",
         "entrepreneur", "self-employed", "housemaid", "unemployed", "student", "unknown"]
_JOB_P = [0.253, 0.225, 0.164, 0.096, 0.071, 0.042, 0.035, 0.035, 0.026, 0.025, 0.021, 0.007]
_EDU = ["university.degree", "high.school", "basic.9y", "professional.course", "basic.4y",
        "basic.6y", "unknown", "illiterate"]
_EDU_P = [0.295, 0.231, 0.147, 0.127, 0.101, 0.056, 0.042, 0.001]
_MONTHS = ["may", "jul", "aug", "jun", "nov", "apr", "oct", "sep", "mar", "dec"]
_MONTH_P = [0.334, 0.174, 0.150, 0.129, 0.100, 0.064, 0.017, 0.014, 0.013, 0.005]
_DAYS = ["mon", "tue", "wed", "thu", "fri"]


def _pick(rng, labels, probs, n):
    cdf = np.cumsum(probs) / np.sum(probs)
    return [labels[i] for i in np.searchsorted(cdf, rng.uniform(n), side="right").clip(0, len(labels) - 1)]


def bank_marketing_rows(n, seed=0):
    """Synthetic rows in ``BANK_HEADER`` order; numeric cells are Python numbers."""
    rng = Rng.derive(seed, "bank")
    job = _pick(rng, _JOBS, _JOB_P, n)
    age = np.clip(np.round(40 + 10 * rng.normal(n, 1)[:, 0]), 17, 98)
    age = np.where([j == "retired" for j in job], np.clip(age + 22, 50, 98), age)
    age = np.where([j == "student" for j in job], np.clip(age - 15, 17, 35), age)
    marital = [
        "single" if a < 30 and u < 0.7 else m
        for a, u, m in zip(age, rng.uniform(n), _pick(rng, ["married", "single", "divorced", "unknown"], [0.61, 0.28, 0.11, 0.002], n))
    ]
    education = _pick(rng, _EDU, _EDU_P, n)
    default = _pick(rng, ["no", "unknown", "yes"], [0.79, 0.209, 0.001], n)
    housing = _pick(rng, ["yes", "no", "unknown"], [0.524, 0.452, 0.024], n)
    loan = [("unknown" if h == "unknown" else l) for h, l in zip(housing, _pick(rng, ["no", "yes"], [0.84, 0.16], n))]
    month = _pick(rng, _MONTHS, _MONTH_P, n)
    day = _pick(rng, _DAYS, [1, 1, 1, 1, 1], n)

    # economic cycle: boom months (may-aug) vs. downturn (sep-dec, mar, apr)
    boom = np.array([m in ("may", "jun", "jul", "aug", "nov") for m in month])
    cycle = np.where(boom, 0.8, -1.2) + 0.5 * rng.normal(n, 1)[:, 0]
    levels = np.array([-3.4, -2.9, -1.8, -1.1, -0.1, 1.1, 1.4])
    emp_var = levels[np.clip(np.round((cycle + 2.2) * 1.6).astype(int), 0, len(levels) - 1)]
    cons_price = np.round(93.6 + 0.45 * emp_var + 0.25 * rng.normal(n, 1)[:, 0], 3)
    cons_conf = np.round(-40.5 + 1.6 * emp_var + 3.5 * rng.normal(n, 1)[:, 0], 1)
    euribor = np.round(np.clip(3.6 + 1.15 * emp_var + 0.25 * rng.normal(n, 1)[:, 0], 0.634, 5.045), 3)
    nr_employed = np.round(5167.0 + 48.0 * emp_var + 8.0 * rng.normal(n, 1)[:, 0], 1)
    contact = ["cellular" if u < 0.55 - 0.12 * e else "telephone" for u, e in zip(rng.uniform(n), emp_var)]

    previous = np.floor(-np.log(1.0 - rng.uniform(n)) * np.where(emp_var < 0, 0.6, 0.08)).astype(int)
    previous = np.minimum(previous, 7)
    prior_success = (previous > 0) & (rng.uniform(n) < 0.35)
    poutcome = np.where(previous == 0, "nonexistent", np.where(prior_success, "success", "failure"))
    pdays = np.where(prior_success, np.clip(np.round(3 + 3 * np.abs(rng.normal(n, 1)[:, 0])), 0, 27), 999)

    duration = np.round(np.exp(5.2 + 0.75 * rng.normal(n, 1)[:, 0]))
    campaign = 1 + np.floor(-np.log(1.0 - rng.uniform(n)) * 1.6).astype(int)

    logit = (
        -2.7 + 1.35 * (np.log(duration) - 5.2) - 0.55 * emp_var
        + 1.9 * prior_success + 0.35 * (np.array(contact) == "cellular")
        - 0.08 * (campaign - 1) + 0.3 * np.isin(job, ["student", "retired"])
    )
    y = np.where(rng.uniform(n) < 1.0 / (1.0 + np.exp(-logit)), "yes", "no")

    rows = []
    for i in range(n):
        rows.append([
            int(age[i]), job[i], marital[i], education[i], default[i], housing[i], loan[i],
            contact[i], month[i], day[i], int(duration[i]), int(campaign[i]), int(pdays[i]),
            int(previous[i]), str(poutcome[i]), float(emp_var[i]), float(cons_price[i]),
            float(cons_conf[i]), float(euribor[i]), float(nr_employed[i]), str(y[i]),
        ])
    return rows


def write_bank_marketing_csv(path, n, seed=0):
    """Write a ``;``-delimited file in the UCI layout (strings quoted)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, delimiter=";", quotechar='"', quoting=csv.QUOTE_NONNUMERIC, lineterminator="\n")
        writer.writerow(BANK_HEADER)
        for row in bank_marketing_rows(n, seed):
            writer.writerow(row)
    return path
