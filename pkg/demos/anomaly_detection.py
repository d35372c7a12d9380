"""Flagging outliers by reconstruction error."""

import numpy as np

from aeminer.analysis import ThresholdPolicy, calibrate_threshold, detect_anomalies
from aeminer.autoencoder import TrainConfig, build_model, train
from aeminer.baselines import pca_fit
from aeminer.evaluation import roc_auc
from aeminer.synthetic import anomaly_benchmark

x, is_outlier = anomaly_benchmark(seed=0)
print(f"{len(x)} rows, {is_outlier.sum()} injected outliers")

z = (x - x.mean(axis=0)) / x.std(axis=0)

# unsupervised: the model never sees the labels
model = build_model(10, hidden=(32, 16), latent_dim=2, seed=0)
model, report = train(model, z, config=TrainConfig(epochs=100, batch_size=32, seed=0))
errors = model.reconstruction_errors(z)
print(f"AE error AUC {roc_auc(errors, is_outlier):.4f}")

pca = pca_fit(z, 2)
pca_errors = np.mean((z - pca.reconstruct(z)) ** 2, axis=1)
print(f"PCA error AUC {roc_auc(pca_errors, is_outlier):.4f}")

for policy in (ThresholdPolicy("quantile", 0.95), ThresholdPolicy("quantile", 0.99),
               ThresholdPolicy("mean_plus_k_sigma", 3.0)):
    threshold = calibrate_threshold(errors, policy)
    flagged = detect_anomalies(model, z, threshold, policy.describe()).flags
    hits = np.sum(flagged & (is_outlier == 1))
    print(f"{policy.describe():>26}: threshold {threshold:.4f}, flagged {flagged.sum():3d}, "
          f"true outliers among them {hits}")

worst = np.argsort(errors)[::-1][:10]
print("ten largest errors belong to outliers:", is_outlier[worst].tolist())
