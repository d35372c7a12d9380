"""Shared oracles for the test modules."""

import numpy as np

from aeminer.autoencoder import LayerSpec, init_model, reconstruction_loss, vae_loss
from aeminer.linalg import Rng

SMALL_SPECS = [
    LayerSpec(8, 4, "relu"),
    LayerSpec(4, 2, "linear"),
    LayerSpec(2, 4, "relu"),
    LayerSpec(4, 8, "linear"),
]


def small_model(mode="plain", seed=0):
    return init_model(SMALL_SPECS, mode, Rng(seed))


def random_model(mode="plain", seed=0):
    """Small model with random (nonzero) biases as well as weights, so no
    ReLU input sits exactly on the kink."""
    model = small_model(mode, seed)
    rng = Rng.derive(seed, "biases")
    for layer in model.layers():
        layer.bias[:] = 0.1 * rng.normal(1, layer.bias.size)[0]
    return model


def min_relu_margin(model, x, eps=None):
    """Smallest |pre-activation| over ReLU units for this batch."""
    margins = []

    def walk(layers, h):
        for layer in layers:
            pre, h = layer(h)
            if layer.activation == "relu":
                margins.append(np.abs(pre).min())
        return h

    if model.variational:
        h = walk(model.encoder, x)
        mu = h @ model.mu_head.weights + model.mu_head.bias
        lv = h @ model.logvar_head.weights + model.logvar_head.bias
        walk(model.decoder, mu + np.exp(0.5 * np.clip(lv, -10, 10)) * eps)
    else:
        walk(model.decoder, walk(model.encoder, x))
    return min(margins)


def model_loss(model, x, eps=None, beta=1.0):
    if model.variational:
        x_hat, mu, log_var, _, _ = model.vae_forward(x, eps=eps)
        return vae_loss(x, x_hat, mu, log_var, beta)[0]
    return reconstruction_loss(x, model.forward(x)[0])


def gradient_check(model, x, eps=None, beta=1.0, h=1e-5, floor=1e-6):
    """Max elementwise relative error between backprop and central
    differences; the denominator is floored so near-zero entries compare
    absolutely."""
    if model.variational:
        cache = model.vae_forward(x, eps=eps)[-1]
    else:
        cache = model.forward(x)[-1]
    analytic = model.backward(cache, x, beta=beta)
    worst = 0.0
    for p, g in zip(model.parameters(), analytic):
        it = np.nditer(p, flags=["multi_index"])
        for _ in it:
            i = it.multi_index
            old = p[i]
            p[i] = old + h
            up = model_loss(model, x, eps, beta)
            p[i] = old - h
            down = model_loss(model, x, eps, beta)
            p[i] = old
            numeric = (up - down) / (2 * h)
            err = abs(numeric - g[i]) / max(abs(numeric), abs(g[i]), floor)
            worst = max(worst, err)
    return worst


def hand_adam(theta, grads, lr=1e-3, b1=0.9, b2=0.999, eps=1e-8):
    """Textbook Adam over a sequence of gradients for a single array."""
    m = np.zeros_like(theta)
    v = np.zeros_like(theta)
    theta = theta.copy()
    for t, g in enumerate(grads, start=1):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g**2
        m_hat = m / (1 - b1**t)
        v_hat = v / (1 - b2**t)
        theta = theta - lr * m_hat / (np.sqrt(v_hat) + eps)
    return theta


def prepare_bank(path, seed=0, ratio=0.2):
    """Standardized train/test matrices and labels for a Bank-Marketing-layout
    file, fitted on the training split only."""
    from aeminer.dataio import PreprocessPipeline, load_csv, load_schema, stratified_split

    table = load_csv(path, load_schema("builtin:bank-additional-full"))
    split = stratified_split(table.n_rows, table.target, ratio, Rng.derive(seed, "split"))
    pipeline = PreprocessPipeline(table.schema).fit(table, split.train)
    return (
        pipeline.transform(table, split.train),
        pipeline.transform(table, split.test),
        table.target[split.train],
        table.target[split.test],
    )
