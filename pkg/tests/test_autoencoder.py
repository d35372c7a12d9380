import numpy as np
import pytest
from helpers import SMALL_SPECS, gradient_check, hand_adam, min_relu_margin, random_model, small_model
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from aeminer.autoencoder import (
    AdamState,
    AutoencoderModel,
    Dense,
    LayerSpec,
    ModeMismatchError,
    NonFiniteLossError,
    ShapeMismatchError,
    SnapshotError,
    StaleCacheError,
    TrainConfig,
    adam_step,
    build_model,
    init_model,
    kl_divergence,
    load_model,
    reconstruction_loss,
    save_model,
    train,
    vae_loss,
)
from aeminer.linalg import Rng


def linear_identity(m=2):
    eye = lambda: Dense(np.eye(m), np.zeros(m), "linear")  # noqa: E731
    return AutoencoderModel([eye()], [eye()])


def test_init_deterministic():
    specs = [LayerSpec(8, 4, "linear"), LayerSpec(4, 8, "linear")]
    a, b = init_model(specs, rng=Rng(7)), init_model(specs, rng=Rng(7))
    for p, q in zip(a.parameters(), b.parameters()):
        np.testing.assert_array_equal(p, q)


def test_init_biases_zero_and_glorot_bound():
    model = build_model(63, (64, 32), 8, seed=3)
    for layer in model.layers():
        assert np.all(layer.bias == 0)
        fi, fo = layer.shape
        assert np.abs(layer.weights).max() <= np.sqrt(6 / (fi + fo))
    specs = [LayerSpec(8, 4, "linear"), LayerSpec(4, 8, "linear")]
    w = init_model(specs, rng=Rng(0)).encoder[0].weights
    assert np.abs(w).max() <= np.sqrt(6 / 12)


@pytest.mark.parametrize(
    "specs",
    [
        [LayerSpec(8, 4)],
        [LayerSpec(8, 4), LayerSpec(3, 8, "linear")],
        [LayerSpec(8, 4), LayerSpec(4, 7, "linear")],
        [LayerSpec(8, 4), LayerSpec(4, 8, "relu")],
    ],
)
def test_init_rejects_bad_chains(specs):
    with pytest.raises(ShapeMismatchError):
        init_model(specs)


def test_vae_layout():
    model = build_model(10, (6,), 3, mode="variational", seed=0)
    assert model.mu_head.shape == model.logvar_head.shape == (6, 3)
    assert model.latent_dim == 3 and model.input_dim == 10


def test_forward_identity():
    x = np.random.default_rng(0).normal(size=(4, 2))
    x_hat, z, _ = linear_identity().forward(x)
    np.testing.assert_array_equal(x_hat, x)
    np.testing.assert_array_equal(z, x)


def test_forward_zero_input():
    model = small_model()
    x_hat, z, _ = model.forward(np.zeros((3, 8)))
    assert not x_hat.any() and not z.any()


def test_forward_shapes():
    specs = [LayerSpec(8, 5), LayerSpec(5, 3, "linear"), LayerSpec(3, 5), LayerSpec(5, 8, "linear")]
    x_hat, z, _ = init_model(specs, rng=Rng(1)).forward(np.ones((5, 8)))
    assert x_hat.shape == (5, 8) and z.shape == (5, 3)


def test_forward_width_mismatch():
    with pytest.raises(ShapeMismatchError):
        small_model().forward(np.ones((2, 7)))


def test_reconstruction_loss_examples():
    x = np.array([[1.0, 2.0]])
    assert reconstruction_loss(x, x) == 0.0
    assert reconstruction_loss(x, np.zeros((1, 2))) == 5.0
    x2 = np.array([[2.0, 1.0], [1.0, np.sqrt(2)]])
    assert reconstruction_loss(x2, np.zeros((2, 2))) == pytest.approx(4.0, abs=1e-15)
    with pytest.raises(ShapeMismatchError):
        reconstruction_loss(x, np.zeros((1, 3)))


def test_kl_examples():
    assert kl_divergence([[0.0]], [[0.0]]) == 0.0
    assert kl_divergence([[1.0]], [[0.0]]) == 0.5
    assert kl_divergence([[0.0]], [[np.log(4)]]) == pytest.approx(0.5 * (4 - np.log(4) - 1), abs=1e-12)


def test_kl_clamps_log_var():
    assert np.isfinite(kl_divergence([[0.0]], [[-1e6]]))
    assert kl_divergence([[0.0]], [[1e6]]) == kl_divergence([[0.0]], [[10.0]])


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, (3, 2), elements=st.floats(-5, 5)), arrays(np.float64, (3, 2), elements=st.floats(-9, 9)))
def test_kl_non_negative(mu, lv):
    assert kl_divergence(mu, lv) >= 0.0


def test_vae_loss_examples():
    x = np.zeros((1, 2))
    assert vae_loss(x, x, [[0.0]], [[0.0]]) == (0.0, 0.0, 0.0)
    total, recon, kl = vae_loss(np.array([[1.0, 2.0]]), x, [[1.0]], [[0.0]], beta=1.0)
    assert (total, recon, kl) == (5.5, 5.0, 0.5)
    total, recon, _ = vae_loss(np.array([[1.0, 2.0]]), x, [[1.0]], [[0.0]], beta=0.0)
    assert total == recon


def test_vae_forward_eps_zero():
    model = small_model("variational")
    x = np.random.default_rng(0).normal(size=(4, 8))
    _, mu, _, _, cache = model.vae_forward(x, eps=np.zeros((4, 2)))
    np.testing.assert_array_equal(cache.z, mu)


def test_vae_forward_deterministic():
    model = small_model("variational")
    x = np.ones((3, 8))
    a = model.vae_forward(x, rng=Rng(5))[0]
    np.testing.assert_array_equal(a, model.vae_forward(x, rng=Rng(5))[0])


def test_vae_forward_clamped_sigma():
    model = small_model("variational")
    model.logvar_head.weights[:] = 0.0
    model.logvar_head.bias[:] = -1e3
    x = np.ones((3, 8))
    eps = Rng(0).normal(3, 2)
    _, mu, _, _, cache = model.vae_forward(x, eps=eps)
    assert np.all(np.abs(cache.z - mu) <= np.exp(-5) * np.abs(eps) + 1e-15)


def test_vae_forward_requires_variational():
    with pytest.raises(ModeMismatchError):
        small_model().vae_forward(np.ones((1, 8)), rng=Rng(0))


@pytest.mark.parametrize("seed", range(3))
@pytest.mark.parametrize("mode", ["plain", "variational"])
def test_gradients_match_finite_differences(mode, seed):
    model = random_model(mode, seed)
    x = np.random.default_rng(seed).normal(size=(16, 8))
    eps = Rng(seed).normal(16, 2) if mode == "variational" else None
    assert min_relu_margin(model, x, eps) > 1e-4
    assert gradient_check(model, x, eps, beta=0.7) < 1e-4


def test_gradients_zero_at_exact_reconstruction():
    model = linear_identity(3)
    x = np.random.default_rng(0).normal(size=(5, 3))
    grads = model.backward(model.forward(x)[-1], x)
    assert all(not g.any() for g in grads)


@pytest.mark.parametrize("mode", ["plain", "variational"])
def test_gradients_invariant_to_row_duplication(mode):
    model = random_model(mode)
    x = np.random.default_rng(1).normal(size=(6, 8))
    if mode == "variational":
        eps = Rng(1).normal(6, 2)
        g1 = model.backward(model.vae_forward(x, eps=eps)[-1], x)
        x2 = np.vstack([x, x])
        g2 = model.backward(model.vae_forward(x2, eps=np.vstack([eps, eps]))[-1], x2)
    else:
        g1 = model.backward(model.forward(x)[-1], x)
        x2 = np.vstack([x, x])
        g2 = model.backward(model.forward(x2)[-1], x2)
    for a, b in zip(g1, g2):
        np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-15)


def test_stale_cache_detected():
    model = small_model()
    x = np.ones((2, 8))
    cache = model.forward(x)[-1]
    model.bump()
    with pytest.raises(StaleCacheError):
        model.backward(cache, x)
    with pytest.raises(StaleCacheError):
        model.backward(model.forward(x)[-1], np.ones((3, 8)))


def test_adam_zero_gradient_noop():
    p = [np.array([1.0, -2.0])]
    adam_step(p, [np.zeros(2)], AdamState.for_params(p))
    np.testing.assert_array_equal(p[0], [1.0, -2.0])


def test_adam_first_step_is_sign():
    lr, eps = 1e-3, 1e-8
    for g in (3.7, -0.002, 1e-3):
        p = [np.array([0.5])]
        adam_step(p, [np.array([g])], AdamState.for_params(p, lr=lr, epsilon=eps))
        step = p[0][0] - 0.5
        assert step == pytest.approx(-lr * g / (abs(g) + eps), abs=1e-6 * lr)
        assert step == pytest.approx(-lr * np.sign(g), rel=1e-4)


def test_adam_matches_reference():
    rng = np.random.default_rng(2)
    theta = rng.normal(size=(3, 2))
    grads = [rng.normal(size=(3, 2)) for _ in range(2)]
    p = [theta.copy()]
    state = AdamState.for_params(p)
    for g in grads:
        adam_step(p, [g], state)
    np.testing.assert_allclose(p[0], hand_adam(theta, grads), rtol=0, atol=1e-12)


def test_train_zero_epochs():
    model = small_model()
    before = [p.copy() for p in model.parameters()]
    _, report = train(model, np.ones((4, 8)), config=TrainConfig(epochs=0))
    assert report.train_loss == [] and report.epochs == 0
    for a, b in zip(before, model.parameters()):
        np.testing.assert_array_equal(a, b)


def test_train_rank_one_linear_data():
    t = np.linspace(-1, 1, 200)[:, None]
    x = np.hstack([t, 2 * t])
    specs = [LayerSpec(2, 1, "linear"), LayerSpec(1, 2, "linear")]
    model = init_model(specs, rng=Rng(0))
    initial = reconstruction_loss(x, model.reconstruct(x))
    _, report = train(model, x, config=TrainConfig(epochs=50, batch_size=16, lr=1e-2))
    assert report.train_loss[-1] < 0.01 * initial


def test_train_deterministic():
    x = np.random.default_rng(0).normal(size=(64, 8))
    cfg = TrainConfig(epochs=3, batch_size=16, seed=4)
    _, r1 = train(random_model("variational"), x, x[:10], cfg)
    _, r2 = train(random_model("variational"), x, x[:10], cfg)
    assert r1.train_loss == r2.train_loss and r1.test_loss == r2.test_loss


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_train_divergence_reports_epoch():
    model = small_model()
    with pytest.raises(NonFiniteLossError) as info:
        train(model, np.full((4, 8), 1e200), config=TrainConfig(epochs=2))
    assert info.value.epoch == 1


def test_encode_identity_and_mu_head():
    x = np.random.default_rng(0).normal(size=(3, 2))
    np.testing.assert_array_equal(linear_identity().encode(x), x)
    model = small_model("variational")
    x8 = np.random.default_rng(1).normal(size=(4, 8))
    mu = model.vae_forward(x8, eps=np.zeros((4, 2)))[1]
    np.testing.assert_array_equal(model.encode(x8), mu)


def test_encode_batch_independent():
    model = build_model(12, (16, 8), 4, seed=2)
    x = np.random.default_rng(3).normal(size=(100, 12))
    np.testing.assert_allclose(model.encode(x[37:38])[0], model.encode(x)[37], rtol=0, atol=1e-12)


def test_reconstruction_errors():
    x = np.random.default_rng(0).normal(size=(4, 2))
    np.testing.assert_array_equal(linear_identity().reconstruction_errors(x), 0.0)
    zero = AutoencoderModel([Dense(np.zeros((2, 2)), np.zeros(2), "linear")], [Dense(np.zeros((2, 2)), np.zeros(2), "linear")])
    assert zero.reconstruction_errors(np.array([[1.0, 1.0]]))[0] == 1.0
    model = random_model()
    x8 = np.random.default_rng(2).normal(size=(9, 8))
    errs = model.reconstruction_errors(x8)
    assert errs.mean() * 8 == pytest.approx(reconstruction_loss(x8, model.reconstruct(x8)), abs=1e-12)


@pytest.mark.parametrize("mode", ["plain", "variational"])
def test_snapshot_round_trip(tmp_path, mode):
    model = random_model(mode, 4)
    save_model(model, tmp_path / "m.aem")
    loaded = load_model(tmp_path / "m.aem")
    assert loaded.mode == model.mode
    for a, b in zip(model.parameters(), loaded.parameters()):
        np.testing.assert_array_equal(a, b)
    assert [l.activation for l in loaded.layers()] == [l.activation for l in model.layers()]


def test_snapshot_rejects_garbage(tmp_path):
    (tmp_path / "bad.aem").write_bytes(b"not a model")
    with pytest.raises(SnapshotError):
        load_model(tmp_path / "bad.aem")
    save_model(small_model(), tmp_path / "m.aem")
    data = (tmp_path / "m.aem").read_bytes()
    (tmp_path / "cut.aem").write_bytes(data[:-8])
    with pytest.raises(SnapshotError):
        load_model(tmp_path / "cut.aem")


def test_small_specs_are_symmetric():
    assert [s.input_width for s in SMALL_SPECS] == [8, 4, 2, 4]
