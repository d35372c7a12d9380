"""Comparison reducers (PCA, factor analysis, FastICA, exact t-SNE) behind a
common transform / reconstruct interface."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .linalg import Rng, eig_sym, pinv, sym_inv_sqrt

PSI_FLOOR = 1e-6


class RankError(ValueError):
    pass


class PerplexityTooLargeError(ValueError):
    pass


class TsneUnseenRowsError(ValueError):
    pass


class ConvergenceWarning(UserWarning):
    pass


class DuplicateCollapseWarning(UserWarning):
    pass


def _as_matrix(x):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got shape {x.shape}")
    return x


@dataclass
class LinearDecoder:
    """Affine map ``z -> z @ coef + intercept``."""

    coef: np.ndarray
    intercept: np.ndarray

    def predict(self, z):
        return np.asarray(z, dtype=np.float64) @ self.coef + self.intercept


def linear_decoder_fit(z, x):
    """Least-squares affine decoder from codes ``z`` back to ``x``."""
    z = _as_matrix(z)
    x = _as_matrix(x)
    if z.shape[0] != x.shape[0]:
        raise ValueError("z and x must have the same number of rows")
    aug = np.hstack([z, np.ones((z.shape[0], 1))])
    b = pinv(aug) @ x
    return LinearDecoder(b[:-1], b[-1])


class ReducerModel:
    kind = None

    def __init__(self, k):
        self.k = k

    def transform(self, x):
        raise NotImplementedError

    def reconstruct(self, x):
        raise NotImplementedError


class PCAModel(ReducerModel):
    kind = "pca"

    def __init__(self, mean, components, eigenvalues, all_eigenvalues):
        super().__init__(components.shape[1])
        self.mean = mean
        self.components = components
        self.eigenvalues = eigenvalues
        self.all_eigenvalues = all_eigenvalues

    def transform(self, x):
        return (_as_matrix(x) - self.mean) @ self.components

    def inverse_transform(self, z):
        return np.asarray(z) @ self.components.T + self.mean

    def reconstruct(self, x):
        return self.inverse_transform(self.transform(x))


def pca_fit(x, k):
    x = _as_matrix(x)
    n, m = x.shape
    if k > m:
        raise RankError(f"k={k} exceeds the feature count {m}")
    if k < 1 or n < 2:
        raise ValueError("need k >= 1 and at least 2 rows")
    mean = x.mean(axis=0)
    xc = x - mean
    w, v = eig_sym(xc.T @ xc / n)
    return PCAModel(mean, v[:, :k].copy(), w[:k].copy(), w)


class FactorAnalysisModel(ReducerModel):
    kind = "fa"

    def __init__(self, mean, loadings, psi, loglik_history, converged):
        super().__init__(loadings.shape[1])
        self.mean = mean
        self.loadings = loadings
        self.psi = psi
        self.loglik_history = loglik_history
        self.converged = converged

    @property
    def model_covariance(self):
        return self.loadings @ self.loadings.T + np.diag(self.psi)

    def transform(self, x):
        lam = self.loadings
        scaled = lam.T / self.psi
        precision = np.eye(self.k) + scaled @ lam
        return np.linalg.solve(precision, scaled @ (_as_matrix(x) - self.mean).T).T

    def reconstruct(self, x):
        return self.transform(x) @ self.loadings.T + self.mean


def _fa_loglik(s, lam, psi, n):
    k = lam.shape[1]
    m = s.shape[0]
    scaled = lam.T / psi
    inner = np.eye(k) + scaled @ lam
    sign, logdet_inner = np.linalg.slogdet(inner)
    logdet = logdet_inner + np.sum(np.log(psi))
    # Woodbury: Sigma^-1 = Psi^-1 - Psi^-1 L inner^-1 L' Psi^-1
    sigma_inv = np.diag(1.0 / psi) - scaled.T @ np.linalg.solve(inner, scaled)
    return -0.5 * n * (m * np.log(2 * np.pi) + logdet + np.sum(sigma_inv * s)), sigma_inv


def fa_fit(x, k, max_iter=200, tol=1e-6):
    """Maximum-likelihood factor analysis by EM.

    Uniquenesses are floored at 1e-6 so constant columns stay finite. If the
    log-likelihood change never falls below ``tol`` the best iterate is
    returned with ``converged=False`` and a :class:`ConvergenceWarning`.
    """
    x = _as_matrix(x)
    n, m = x.shape
    if not 1 <= k < m:
        raise RankError(f"factor analysis needs 1 <= k < m, got k={k}, m={m}")
    mean = x.mean(axis=0)
    xc = x - mean
    s = xc.T @ xc / n
    w, v = eig_sym(s)
    lam = v[:, :k] * np.sqrt(np.maximum(w[:k], 0.0))
    diag_s = np.diag(s)
    psi = np.maximum(np.maximum(diag_s - np.sum(lam**2, axis=1), 0.01 * diag_s), PSI_FLOOR)

    loglik, sigma_inv = _fa_loglik(s, lam, psi, n)
    history = [loglik]
    converged = False
    for _ in range(max_iter):
        beta = lam.T @ sigma_inv  # k x m
        second = np.eye(k) - beta @ lam + beta @ s @ beta.T
        lam = np.linalg.solve(second.T, (s @ beta.T).T).T
        psi = np.maximum(np.diag(s) - np.sum(lam * (s @ beta.T), axis=1), PSI_FLOOR)
        loglik, sigma_inv = _fa_loglik(s, lam, psi, n)
        history.append(loglik)
        if abs(history[-1] - history[-2]) < tol:
            converged = True
            break
    if not converged:
        warnings.warn(f"factor analysis did not converge in {max_iter} iterations", ConvergenceWarning)
    return FactorAnalysisModel(mean, lam, psi, history, converged)


class ICAModel(ReducerModel):
    kind = "ica"

    def __init__(self, mean, whitening, unmixing, n_iter, converged, orthogonality_history):
        super().__init__(unmixing.shape[0])
        self.mean = mean
        self.whitening = whitening  # k x m
        self.unmixing = unmixing  # k x k, orthonormal rows
        self.mixing = pinv(unmixing @ whitening)  # m x k
        self.n_iter = n_iter
        self.converged = converged
        self.orthogonality_history = orthogonality_history

    def whiten(self, x):
        return (_as_matrix(x) - self.mean) @ self.whitening.T

    def transform(self, x):
        return self.whiten(x) @ self.unmixing.T

    def reconstruct(self, x):
        return self.transform(x) @ self.mixing.T + self.mean


def _sym_decorrelate(w):
    return sym_inv_sqrt(w @ w.T) @ w


def ica_fit(x, k, max_iter=200, tol=1e-4, rng=None):
    """Symmetric FastICA with the log-cosh contrast after PCA whitening."""
    x = _as_matrix(x)
    n, m = x.shape
    if not 1 <= k <= m:
        raise RankError(f"ICA needs 1 <= k <= m, got k={k}, m={m}")
    rng = rng if rng is not None else Rng(0)
    mean = x.mean(axis=0)
    xc = x - mean
    ev, vec = eig_sym(xc.T @ xc / n)
    ev = np.maximum(ev[:k], 1e-12 * max(ev[0], 1e-300))
    whitening = (vec[:, :k] / np.sqrt(ev)).T
    xw = xc @ whitening.T

    w = _sym_decorrelate(rng.normal(k, k))
    ortho = [float(np.max(np.abs(w @ w.T - np.eye(k))))]
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        g = np.tanh(xw @ w.T)  # n x k
        g_prime = 1.0 - g**2
        w_new = _sym_decorrelate(g.T @ xw / n - g_prime.mean(axis=0)[:, None] * w)
        ortho.append(float(np.max(np.abs(w_new @ w_new.T - np.eye(k)))))
        lim = np.max(np.abs(np.abs(np.sum(w_new * w, axis=1)) - 1.0))
        w = w_new
        if lim < tol:
            converged = True
            break
    if not converged:
        warnings.warn(f"FastICA did not converge in {max_iter} iterations", ConvergenceWarning)
    return ICAModel(mean, whitening, w, it, converged, ortho)


def _sq_distances(x):
    sq = np.sum(x * x, axis=1)
    d = sq[:, None] + sq[None, :] - 2.0 * x @ x.T
    np.maximum(d, 0.0, out=d)
    np.fill_diagonal(d, 0.0)
    return d


def conditional_affinities(x, perplexity, tol=1e-4, max_steps=200):
    """Row-normalized Gaussian affinities with per-point bandwidths chosen by
    bisection so each row's entropy (bits) equals ``log2(perplexity)``.

    Returns ``(P_cond, precisions, entropies_bits)``.
    """
    d = _sq_distances(_as_matrix(x))
    n = d.shape[0]
    off = ~np.eye(n, dtype=bool)
    d_off = d[off].reshape(n, n - 1)
    d_off = d_off - d_off.min(axis=1, keepdims=True)
    target = np.log2(perplexity)
    beta = np.ones(n)
    lo = np.zeros(n)
    hi = np.full(n, np.inf)

    def entropy(beta):
        p = np.exp(-d_off * beta[:, None])
        total = p.sum(axis=1)
        h_nats = np.log(total) + beta * np.sum(d_off * p, axis=1) / total
        return h_nats / np.log(2.0), p / total[:, None]

    h, p = entropy(beta)
    for _ in range(max_steps):
        diff = h - target
        active = np.abs(diff) >= tol
        if not active.any():
            break
        too_flat = active & (diff > 0)  # entropy too high: sharpen
        too_sharp = active & (diff < 0)
        lo = np.where(too_flat, beta, lo)
        hi = np.where(too_sharp, beta, hi)
        stepped = np.where(np.isinf(hi), beta * 2.0, 0.5 * (lo + hi))
        beta = np.where(active, stepped, beta)
        h, p = entropy(beta)
    p_cond = np.zeros((n, n))
    p_cond[off] = p.ravel()
    return p_cond, beta, h


class TSNEModel(ReducerModel):
    """Exact t-SNE embedding plus a linear decoder for reconstruction.

    Only rows present at fit time can be reconstructed.
    """

    kind = "tsne"

    def __init__(self, data, embedding, affinities, entropies, decoder, kl_history, row_index):
        super().__init__(embedding.shape[1])
        self.data = data
        self.embedding = embedding
        self.affinities = affinities
        self.entropies = entropies
        self.decoder = decoder
        self.kl_history = kl_history
        self._rows = {row.tobytes(): i for i, row in enumerate(data)}
        self.row_index = row_index

    def _lookup(self, x):
        x = np.ascontiguousarray(_as_matrix(x))
        idx = [self._rows.get(row.tobytes()) for row in x]
        missing = sum(i is None for i in idx)
        if missing:
            raise TsneUnseenRowsError(f"{missing} row(s) were not part of the fitted embedding")
        return np.asarray(idx, dtype=np.int64)

    def transform(self, x):
        return self.embedding[self._lookup(x)]

    def reconstruct(self, x):
        return self.decoder.predict(self.transform(x))


@dataclass
class TsneConfig:
    perplexity: float = 30.0
    iters: int = 1000
    early_exaggeration: float = 12.0
    exaggeration_iters: int = 250
    lr: float = 200.0
    seed: int = 0
    row_cap: int = 5000


def tsne_embed(x, k=2, config=None):
    """Exact O(n^2) t-SNE.

    Inputs above ``config.row_cap`` rows are subsampled (seeded) with a
    warning; ``row_index`` on the result maps embedding rows back to ``x``.
    """
    cfg = config or TsneConfig()
    x = _as_matrix(x)
    n = x.shape[0]
    row_index = np.arange(n)
    if n > cfg.row_cap:
        warnings.warn(f"t-SNE input has {n} rows; subsampling to {cfg.row_cap}", UserWarning)
        row_index = np.sort(Rng.derive(cfg.seed, "tsne-subsample").permutation(n)[: cfg.row_cap])
        x = x[row_index]
        n = x.shape[0]
    if n < 3 * cfg.perplexity + 1:
        raise PerplexityTooLargeError(f"perplexity {cfg.perplexity} needs at least {3 * cfg.perplexity + 1:g} rows, got {n}")
    x = np.ascontiguousarray(x)
    d = _sq_distances(x)
    np.fill_diagonal(d, np.inf)
    if np.mean(d.min(axis=1) == 0.0) > 0.5:
        warnings.warn("more than half of the rows have an exact duplicate", DuplicateCollapseWarning)

    p_cond, _, entropies = conditional_affinities(x, cfg.perplexity)
    p = (p_cond + p_cond.T) / (2.0 * n)

    y = pca_fit(x, k).transform(x)
    std = y[:, 0].std()
    y = y * (1e-4 / std) if std > 0 else Rng.derive(cfg.seed, "tsne-init").normal(n, k) * 1e-4
    update = np.zeros_like(y)
    gains = np.ones_like(y)
    kl_history = []
    for it in range(cfg.iters):
        exaggerate = it < cfg.exaggeration_iters
        pe = p * cfg.early_exaggeration if exaggerate else p
        num = 1.0 / (1.0 + _sq_distances(y))
        np.fill_diagonal(num, 0.0)
        q = np.maximum(num / num.sum(), 1e-300)
        pq = (pe - q) * num
        grad = 4.0 * (pq.sum(axis=1)[:, None] * y - pq @ y)
        momentum = 0.5 if it < cfg.exaggeration_iters else 0.8
        same_sign = np.sign(grad) == np.sign(update)
        gains = np.where(same_sign, gains * 0.8, gains + 0.2)
        np.maximum(gains, 0.01, out=gains)
        update = momentum * update - cfg.lr * gains * grad
        y = y + update
        y = y - y.mean(axis=0)
        if (it + 1) % 50 == 0 or it == cfg.iters - 1:
            mask = p > 0
            kl_history.append(float(np.sum(p[mask] * np.log(p[mask] / q[mask]))))
    decoder = linear_decoder_fit(y, x)
    return TSNEModel(x, y, p, entropies, decoder, kl_history, row_index)


def reconstruct(model, x):
    """Map ``x`` through the model's reconstruction pathway."""
    return model.reconstruct(x)
