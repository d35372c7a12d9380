"""Variational autoencoder: the reconstruction/KL trade-off and what the
latent space looks like for a few KL weights."""

import numpy as np

from aeminer.autoencoder import TrainConfig, build_model, train
from aeminer.evaluation import rmse_metric
from aeminer.linalg import Rng
from aeminer.synthetic import sinusoidal_manifold

x, _ = sinusoidal_manifold(3000, seed=1)
x = (x - x.mean(axis=0)) / x.std(axis=0)
train_x, test_x = x[:2400], x[2400:]

for beta in (0.0, 0.1, 1.0):
    vae = build_model(10, hidden=(64, 32), latent_dim=4, mode="variational", seed=0)
    vae, report = train(vae, train_x, test_x, TrainConfig(epochs=40, beta=beta, seed=0))
    mu = vae.encode(test_x)
    _, _, log_var, _, _ = vae.vae_forward(test_x, eps=np.zeros((len(test_x), 4)))
    active = np.sum(mu.var(axis=0) > 0.01)
    print(
        f"beta={beta:<4} recon {report.train_recon[-1]:.3f}  KL {report.train_kl[-1]:.3f}"
        f"  test RMSE {rmse_metric(test_x, vae.reconstruct(test_x)):.3f}"
        f"  active latent dims {active}/4  mean sigma {np.exp(0.5 * log_var).mean():.3f}"
    )

# sampling from the prior and decoding
vae = build_model(10, latent_dim=4, mode="variational", seed=0)
train(vae, train_x, config=TrainConfig(epochs=40, seed=0))
samples = vae.decode(Rng(5).normal(500, 4))
print("decoded prior samples, per-feature std:", np.round(samples.std(axis=0), 2))
print("training data,        per-feature std:", np.round(train_x.std(axis=0), 2))

