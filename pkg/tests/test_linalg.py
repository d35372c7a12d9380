import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from aeminer.linalg import NonSymmetricError, NoConvergenceError, Rng, eig_sym, pinv, sample_normal, sym_inv_sqrt


def test_eig_identity():
    w, v = eig_sym(np.eye(3))
    np.testing.assert_allclose(w, [1, 1, 1])
    np.testing.assert_allclose(v.T @ v, np.eye(3), atol=1e-12)


def test_eig_diagonal_descending():
    w, v = eig_sym(np.diag([2.0, 5.0, 1.0]))
    np.testing.assert_allclose(w, [5, 2, 1])
    np.testing.assert_allclose(np.abs(v), np.eye(3)[:, [1, 0, 2]])


def test_eig_reassembly(rng):
    b = rng.normal(size=(6, 6))
    a = b + b.T
    w, v = eig_sym(a)
    np.testing.assert_allclose(v @ np.diag(w) @ v.T, a, atol=1e-8)
    np.testing.assert_allclose(v.T @ v, np.eye(6), atol=1e-10)
    assert np.all(np.diff(w) <= 0)
    # independent oracle
    np.testing.assert_allclose(w, np.linalg.eigvalsh(a)[::-1], atol=1e-10)


def test_eig_rejects_asymmetric():
    with pytest.raises(NonSymmetricError):
        eig_sym(np.array([[1.0, 2.0], [0.0, 1.0]]))
    with pytest.raises(NonSymmetricError):
        eig_sym(np.ones((2, 3)))


def test_eig_sweep_cap():
    b = np.random.default_rng(0).normal(size=(8, 8))
    with pytest.raises(NoConvergenceError):
        eig_sym(b + b.T, max_sweeps=1)


def test_eig_rank_deficient_covariance(rng):
    # one-hot style blocks make the covariance exactly singular
    x = np.eye(5)[rng.integers(0, 5, 400)]
    c = np.cov(x.T, bias=True)
    w, v = eig_sym(c)
    assert abs(w[-1]) < 1e-12
    np.testing.assert_allclose(v @ np.diag(w) @ v.T, c, atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(arrays(np.float64, (5, 5), elements=st.floats(-10, 10)))
def test_eig_reassembles_any_symmetric(b):
    a = b + b.T
    w, v = eig_sym(a)
    np.testing.assert_allclose(v @ np.diag(w) @ v.T, a, atol=1e-8 * max(1.0, np.abs(a).max()))


def test_pinv_inverse_2x2():
    a = np.array([[4.0, 7.0], [2.0, 6.0]])
    exact = np.array([[6.0, -7.0], [-2.0, 4.0]]) / (4 * 6 - 7 * 2)
    np.testing.assert_allclose(pinv(a), exact, atol=1e-10)


def test_pinv_zero():
    np.testing.assert_array_equal(pinv(np.zeros((3, 2))), np.zeros((2, 3)))


def test_pinv_left_inverse(rng):
    a = rng.normal(size=(4, 2))
    np.testing.assert_allclose(pinv(a) @ a, np.eye(2), atol=1e-8)


def test_pinv_penrose_conditions_rank_deficient(rng):
    a = rng.normal(size=(6, 2)) @ rng.normal(size=(2, 5))
    p = pinv(a)
    np.testing.assert_allclose(a @ p @ a, a, atol=1e-10)
    np.testing.assert_allclose(p @ a @ p, p, atol=1e-10)


def test_sym_inv_sqrt(rng):
    b = rng.normal(size=(4, 4))
    a = b @ b.T + np.eye(4)
    s = sym_inv_sqrt(a)
    np.testing.assert_allclose(s @ a @ s, np.eye(4), atol=1e-10)


def test_sample_normal_deterministic():
    np.testing.assert_array_equal(sample_normal(Rng(42), 3, 4), sample_normal(Rng(42), 3, 4))


def test_sample_normal_moments():
    z = sample_normal(Rng(5), 100_000, 1)
    assert abs(z.mean()) < 0.02
    assert abs(z.var() - 1.0) < 0.02


def test_sample_normal_scalar():
    z = sample_normal(Rng(0), 1, 1)
    assert z.shape == (1, 1) and np.isfinite(z[0, 0])


def test_rng_derive_streams_differ():
    a = Rng.derive(3, "shuffle").uniform(5)
    b = Rng.derive(3, "init").uniform(5)
    assert not np.array_equal(a, b)
    np.testing.assert_array_equal(a, Rng.derive(3, "shuffle").uniform(5))


def test_rng_permutation_and_choice():
    p = Rng(1).permutation(10)
    assert sorted(p) == list(range(10))
    picks = [Rng(s).choice([0.0, 1.0, 0.0]) for s in range(20)]
    assert set(picks) == {1}


def test_rng_rejects_negative_seed():
    with pytest.raises(ValueError):
        Rng(-1)
