"""Small deterministic numerical kernel shared by the rest of the package.

Random numbers come from :class:`Rng`, which draws uniform doubles from NumPy's
PCG64 bit generator (``(next_uint64 >> 11) * 2**-53``, stable across NumPy
releases) and derives everything else from them: Box-Muller normals,
permutations by stable argsort of uniforms, and inverse-CDF weighted choice.
Equal seeds therefore give equal streams on every platform.
"""

from __future__ import annotations

import zlib

import numpy as np

JACOBI_MAX_SWEEPS = 100
JACOBI_TOL = 1e-12
PINV_RCOND = 1e-12


class NonSymmetricError(ValueError):
    pass


class NoConvergenceError(RuntimeError):
    pass


def eig_sym(a, max_sweeps=JACOBI_MAX_SWEEPS, tol=JACOBI_TOL):
    """Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.

    Returns ``(eigenvalues, eigenvectors)`` with eigenvalues sorted in
    descending order and eigenvectors stored as orthonormal columns.
    Iteration stops once the off-diagonal Frobenius norm drops below
    ``tol`` times the Frobenius norm of ``a``; more than ``max_sweeps``
    sweeps raises :class:`NoConvergenceError`.
    """
    a = np.array(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise NonSymmetricError(f"expected a square matrix, got shape {a.shape}")
    m = a.shape[0]
    if m == 0:
        return np.zeros(0), np.zeros((0, 0))
    scale = np.max(np.abs(a))
    if np.max(np.abs(a - a.T)) > 1e-9 * scale:
        raise NonSymmetricError("matrix is not symmetric within 1e-9 * max|a|")
    a = 0.5 * (a + a.T)
    v = np.eye(m)
    fro = np.linalg.norm(a)
    if fro == 0.0:
        return np.zeros(m), v

    def off_norm(a):
        # summed directly: sum(a^2) - sum(diag^2) cancels catastrophically
        return np.sqrt(2.0 * np.sum(np.triu(a, 1) ** 2))

    for _ in range(max_sweeps):
        if off_norm(a) <= tol * fro:
            break
        for p in range(m - 1):
            for q in range(p + 1, m):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                diff = a[q, q] - a[p, p]
                if abs(diff) > 1e100 * abs(apq):
                    t = apq / diff  # |tau| huge: t ~ 1 / (2 tau)
                else:
                    tau = diff / (2.0 * apq)
                    t = (1.0 if tau >= 0 else -1.0) / (abs(tau) + np.sqrt(1.0 + tau * tau))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = t * c
                col_p = a[:, p].copy()
                col_q = a[:, q]
                a[:, p] = c * col_p - s * col_q
                a[:, q] = s * col_p + c * col_q
                row_p = a[p, :].copy()
                row_q = a[q, :]
                a[p, :] = c * row_p - s * row_q
                a[q, :] = s * row_p + c * row_q
                a[p, q] = a[q, p] = 0.0
                vp = v[:, p].copy()
                vq = v[:, q]
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq
    else:
        if off_norm(a) > tol * fro:
            raise NoConvergenceError(f"Jacobi did not converge in {max_sweeps} sweeps")

    w = np.diag(a).copy()
    order = np.argsort(-w, kind="stable")
    return w[order], v[:, order]


def pinv(a, rcond=PINV_RCOND):
    """Moore-Penrose pseudo-inverse via SVD, dropping singular values below
    ``rcond * s_max``."""
    a = np.asarray(a, dtype=np.float64)
    if a.size == 0:
        return np.zeros((a.shape[1], a.shape[0]))
    u, s, vt = np.linalg.svd(a, full_matrices=False)
    if s[0] == 0.0:
        return np.zeros((a.shape[1], a.shape[0]))
    keep = s > rcond * s[0]
    return (vt[keep].T / s[keep]) @ u[:, keep].T


def sym_inv_sqrt(a, floor=1e-12):
    """``a^{-1/2}`` for symmetric positive semi-definite ``a``."""
    w, v = eig_sym(a)
    w = np.maximum(w, floor * max(w[0], floor))
    return (v / np.sqrt(w)) @ v.T


class Rng:
    """Seeded pseudorandom stream (PCG64 uniforms, Box-Muller normals)."""

    def __init__(self, seed=0):
        self.seed = int(seed)
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        self._gen = np.random.Generator(np.random.PCG64(self.seed))

    @classmethod
    def derive(cls, seed, *labels):
        """Independent stream keyed by ``seed`` and string labels."""
        words = [int(seed) & 0xFFFFFFFF, int(seed) >> 32]
        words += [zlib.crc32(str(lab).encode()) for lab in labels]
        child = np.random.SeedSequence(words).generate_state(2, dtype=np.uint32)
        return cls(int(child[0]) | (int(child[1]) << 32))

    def uniform(self, size=None):
        """Uniform doubles on [0, 1)."""
        return self._gen.random(size)

    def normal(self, rows, cols):
        n = rows * cols
        half = (n + 1) // 2
        u1 = 1.0 - self._gen.random(half)  # (0, 1], keeps log finite
        u2 = self._gen.random(half)
        r = np.sqrt(-2.0 * np.log(u1))
        z = np.concatenate([r * np.cos(2 * np.pi * u2), r * np.sin(2 * np.pi * u2)])
        return z[:n].reshape(rows, cols)

    def permutation(self, n):
        return np.argsort(self._gen.random(n), kind="stable")

    def choice(self, weights):
        """Index drawn with probability proportional to ``weights``."""
        cdf = np.cumsum(weights)
        if cdf[-1] <= 0:
            raise ValueError("weights must have a positive sum")
        idx = int(np.searchsorted(cdf, self._gen.random() * cdf[-1], side="right"))
        return min(idx, len(cdf) - 1)

    def integer(self, n):
        return min(int(self._gen.random() * n), n - 1)


def sample_normal(rng, rows, cols):
    """``rows x cols`` matrix of i.i.d. standard normals from ``rng``."""
    if rows < 1 or cols < 1:
        raise ValueError("rows and cols must be >= 1")
    return rng.normal(rows, cols)
