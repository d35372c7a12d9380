"""Nonlinear vs. linear compression on a curved 2-D manifold in 10-D."""

import numpy as np

from aeminer.autoencoder import TrainConfig, build_model, train
from aeminer.baselines import pca_fit
from aeminer.evaluation import re_metric, rmse_metric
from aeminer.synthetic import sinusoidal_manifold

x, t = sinusoidal_manifold(2000, seed=0)
print("data", x.shape, "latent coordinates", t.shape)

# 80/20 split, standardized with training statistics
train_x, test_x = x[:1600], x[1600:]
mu, sd = train_x.mean(axis=0), train_x.std(axis=0)
train_x = (train_x - mu) / sd
test_x = (test_x - mu) / sd

for k in (1, 2, 3, 4):
    pca = pca_fit(train_x, k)
    ae = build_model(10, hidden=(64, 32), latent_dim=k, seed=0)
    ae, report = train(ae, train_x, test_x, TrainConfig(epochs=30, seed=0))
    print(
        f"k={k}  PCA RMSE {rmse_metric(test_x, pca.reconstruct(test_x)):.3f}"
        f"  AE RMSE {rmse_metric(test_x, ae.reconstruct(test_x)):.3f}"
        f"  (AE RE {re_metric(test_x, ae.reconstruct(test_x)):.3f})"
    )

# variance the linear model leaves on the table at k=2
pca = pca_fit(train_x, 2)
explained = pca.eigenvalues.sum() / pca.all_eigenvalues.sum()
print(f"two principal components explain {explained:.1%} of the variance")

# nearest neighbours on the true manifold that survive compression to 2-D
def neighbour_overlap(a, b, k=10):
    def knn(m):
        d = np.sum((m[:, None] - m[None]) ** 2, axis=2)
        np.fill_diagonal(d, np.inf)
        return np.argsort(d, axis=1)[:, :k]
    na, nb = knn(a), knn(b)
    return np.mean([len(set(r) & set(s)) / k for r, s in zip(na, nb)])


ae = build_model(10, latent_dim=2, seed=0)
train(ae, train_x, config=TrainConfig(seed=0))
truth = t[1600:]
print(f"10-NN overlap with true coordinates: AE {neighbour_overlap(truth, ae.encode(test_x)):.2f}, "
      f"PCA {neighbour_overlap(truth, pca.transform(test_x)):.2f}")
