"""Dense autoencoder / variational autoencoder trained with hand-written
backpropagation and Adam.

The training objective for the plain model is the mean over samples of the
squared L2 reconstruction norm (not divided by the feature count)::

    L = (1/n) * sum_i ||x_i - g(f(x_i))||^2

The variational model adds a KL penalty towards N(0, I)::

    L = (1/n) * sum_i ||x_i - g(z_i)||^2 + beta * KL(q(z|x) || p(z))

with ``z = mu + exp(log_var / 2) * eps`` and a single noise draw per sample.
"""

from __future__ import annotations

import struct
from dataclasses import asdict, dataclass, field

import numpy as np

from .linalg import Rng

ACTIVATIONS = ("linear", "relu")
LOGVAR_CLAMP = 10.0


class ShapeMismatchError(ValueError):
    pass


class ModeMismatchError(ValueError):
    pass


class StaleCacheError(RuntimeError):
    pass


class NonFiniteLossError(FloatingPointError):
    def __init__(self, epoch, loss):
        self.epoch = epoch
        super().__init__(f"loss became {loss} at epoch {epoch}; try a lower learning rate")


class SnapshotError(ValueError):
    pass


@dataclass(frozen=True)
class LayerSpec:
    input_width: int
    output_width: int
    activation: str = "relu"

    def __post_init__(self):
        if self.input_width < 1 or self.output_width < 1:
            raise ShapeMismatchError("layer widths must be >= 1")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")


class Dense:
    __slots__ = ("weights", "bias", "activation")

    def __init__(self, weights, bias, activation):
        self.weights = weights
        self.bias = bias
        self.activation = activation

    @property
    def shape(self):
        return self.weights.shape

    def __call__(self, h):
        pre = h @ self.weights + self.bias
        out = np.maximum(pre, 0.0) if self.activation == "relu" else pre
        return pre, out


def _glorot(rng, fan_in, fan_out):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return (2.0 * rng.uniform((fan_in, fan_out)) - 1.0) * limit


def _run(layers, h):
    inputs, pres = [], []
    for layer in layers:
        inputs.append(h)
        pre, h = layer(h)
        pres.append(pre)
    return h, inputs, pres


def _back(layers, inputs, pres, d):
    """Backpropagate ``d`` (gradient wrt the stack output); returns
    ``(per-layer [dW, db] pairs, gradient wrt stack input)``."""
    grads = [None] * len(layers)
    for i in range(len(layers) - 1, -1, -1):
        layer = layers[i]
        if layer.activation == "relu":
            d = d * (pres[i] > 0)
        grads[i] = (inputs[i].T @ d, d.sum(axis=0))
        d = d @ layer.weights.T
    return grads, d


@dataclass
class Cache:
    version: int
    mode: str
    x_shape: tuple
    enc: tuple
    dec: tuple
    z: np.ndarray
    x_hat: np.ndarray
    trunk_out: np.ndarray | None = None
    mu: np.ndarray | None = None
    log_var: np.ndarray | None = None
    eps: np.ndarray | None = None


class AutoencoderModel:
    """Mirror-symmetric encoder ``f`` / decoder ``g`` stack.

    In ``"variational"`` mode the last encoder layer is replaced by two
    parallel linear heads producing the latent mean and log-variance; the
    remaining encoder layers form a shared trunk.
    """

    def __init__(self, encoder, decoder, mode="plain", mu_head=None, logvar_head=None):
        if mode not in ("plain", "variational"):
            raise ValueError(f"unknown mode {mode!r}")
        self.encoder = list(encoder)
        self.decoder = list(decoder)
        self.mode = mode
        self.mu_head = mu_head
        self.logvar_head = logvar_head
        self._version = 0
        self._check()

    def _check(self):
        enc = self.encoder + ([self.mu_head] if self.variational else [])
        chain = enc + self.decoder
        for a, b in zip(chain, chain[1:]):
            if a.shape[1] != b.shape[0]:
                raise ShapeMismatchError("layer widths do not chain")
        if chain[0].shape[0] != chain[-1].shape[1]:
            raise ShapeMismatchError("decoder output width must equal encoder input width")
        if self.variational and self.logvar_head.shape != self.mu_head.shape:
            raise ShapeMismatchError("mean and log-variance heads must have equal shapes")

    @property
    def variational(self):
        return self.mode == "variational"

    @property
    def input_dim(self):
        first = self.encoder[0] if self.encoder else self.mu_head
        return first.shape[0]

    @property
    def latent_dim(self):
        return self.decoder[0].shape[0]

    def layers(self):
        """All layers in canonical parameter order."""
        heads = [self.mu_head, self.logvar_head] if self.variational else []
        return self.encoder + heads + self.decoder

    def parameters(self):
        out = []
        for layer in self.layers():
            out += [layer.weights, layer.bias]
        return out

    def bump(self):
        """Mark parameters as changed; invalidates outstanding caches."""
        self._version += 1

    def copy(self):
        def dup(layer):
            return None if layer is None else Dense(layer.weights.copy(), layer.bias.copy(), layer.activation)

        return AutoencoderModel(
            [dup(l) for l in self.encoder],
            [dup(l) for l in self.decoder],
            self.mode,
            dup(self.mu_head),
            dup(self.logvar_head),
        )

    def _check_input(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.input_dim:
            raise ShapeMismatchError(f"expected (n, {self.input_dim}) input, got {x.shape}")
        return x

    def _encode_stats(self, x):
        trunk_out, inputs, pres = _run(self.encoder, x)
        mu = trunk_out @ self.mu_head.weights + self.mu_head.bias
        log_var = trunk_out @ self.logvar_head.weights + self.logvar_head.bias
        return trunk_out, (inputs, pres), mu, log_var

    def forward(self, x):
        """Deterministic pass: returns ``(x_hat, z, cache)``.

        For the variational model ``z`` is the mean code (noise set to zero)
        and the cache backpropagates the full variational loss.
        """
        x = self._check_input(x)
        if self.variational:
            x_hat, mu, log_var, eps, cache = self.vae_forward(x, eps=np.zeros((x.shape[0], self.latent_dim)))
            return x_hat, mu, cache
        z, inputs, pres = _run(self.encoder, x)
        x_hat, dinputs, dpres = _run(self.decoder, z)
        cache = Cache(self._version, self.mode, x.shape, (inputs, pres), (dinputs, dpres), z, x_hat)
        return x_hat, z, cache

    def vae_forward(self, x, rng=None, eps=None):
        """Reparameterized pass: ``z = mu + exp(log_var / 2) * eps``.

        ``eps`` may be supplied directly (testing hook); otherwise it is drawn
        from ``rng``. Returns ``(x_hat, mu, log_var, eps, cache)``.
        """
        if not self.variational:
            raise ModeMismatchError("vae_forward requires a variational model")
        x = self._check_input(x)
        trunk_out, enc, mu, log_var = self._encode_stats(x)
        if eps is None:
            if rng is None:
                raise ValueError("either rng or eps must be given")
            eps = rng.normal(x.shape[0], self.latent_dim)
        sigma = np.exp(0.5 * np.clip(log_var, -LOGVAR_CLAMP, LOGVAR_CLAMP))
        z = mu + sigma * eps
        x_hat, dinputs, dpres = _run(self.decoder, z)
        cache = Cache(
            self._version, self.mode, x.shape, enc, (dinputs, dpres), z, x_hat,
            trunk_out=trunk_out, mu=mu, log_var=log_var, eps=eps,
        )
        return x_hat, mu, log_var, eps, cache

    def backward(self, cache, x, beta=1.0):
        """Exact gradients of the active loss, ordered like :meth:`parameters`."""
        if cache.version != self._version:
            raise StaleCacheError("cache was produced before the last parameter update")
        x = np.asarray(x, dtype=np.float64)
        if x.shape != cache.x_shape:
            raise StaleCacheError("x does not match the cached forward pass")
        n = x.shape[0]
        dec_grads, dz = _back(self.decoder, *cache.dec, 2.0 * (cache.x_hat - x) / n)

        if not self.variational:
            enc_grads, _ = _back(self.encoder, *cache.enc, dz)
            return _flatten(enc_grads + dec_grads)

        inside = np.abs(cache.log_var) <= LOGVAR_CLAMP
        lv = np.clip(cache.log_var, -LOGVAR_CLAMP, LOGVAR_CLAMP)
        sigma = np.exp(0.5 * lv)
        d_mu = dz + beta * cache.mu / n
        d_lv = inside * (dz * 0.5 * sigma * cache.eps + beta * 0.5 * (np.exp(lv) - 1.0) / n)
        h = cache.trunk_out
        head_grads = [(h.T @ d_mu, d_mu.sum(axis=0)), (h.T @ d_lv, d_lv.sum(axis=0))]
        dh = d_mu @ self.mu_head.weights.T + d_lv @ self.logvar_head.weights.T
        enc_grads, _ = _back(self.encoder, *cache.enc, dh)
        return _flatten(enc_grads + head_grads + dec_grads)

    def encode(self, x):
        """Latent code; the mean head for the variational model."""
        x = self._check_input(x)
        if self.variational:
            return self._encode_stats(x)[2]
        return _run(self.encoder, x)[0]

    def decode(self, z):
        z = np.asarray(z, dtype=np.float64)
        if z.ndim != 2 or z.shape[1] != self.latent_dim:
            raise ShapeMismatchError(f"expected (n, {self.latent_dim}) codes, got {z.shape}")
        return _run(self.decoder, z)[0]

    def reconstruct(self, x):
        return self.decode(self.encode(x))

    def reconstruction_errors(self, x):
        """Per-sample squared error divided by the feature count."""
        x = self._check_input(x)
        return np.sum((x - self.reconstruct(x)) ** 2, axis=1) / x.shape[1]


def _flatten(pairs):
    out = []
    for dw, db in pairs:
        out += [dw, db]
    return out


def init_model(layer_specs, mode="plain", rng=None):
    """Build a model from a symmetric chain ``m -> ... -> k -> ... -> m``.

    Weights are Glorot-uniform, biases zero. The first half of the specs is
    the encoder, the second half the decoder. In variational mode the last
    encoder spec becomes the (linear) mean and log-variance heads.
    """
    specs = list(layer_specs)
    rng = rng if rng is not None else Rng(0)
    if len(specs) < 2 or len(specs) % 2:
        raise ShapeMismatchError("need an even number (>= 2) of layer specs")
    for a, b in zip(specs, specs[1:]):
        if a.output_width != b.input_width:
            raise ShapeMismatchError("layer widths do not chain")
    half = len(specs) // 2
    for i in range(half):
        if specs[i].input_width != specs[-1 - i].output_width:
            raise ShapeMismatchError("decoder widths must mirror the encoder")
    if specs[-1].activation != "linear":
        raise ShapeMismatchError("decoder output layer must be linear")

    def make(spec, activation=None):
        w = _glorot(rng, spec.input_width, spec.output_width)
        return Dense(w, np.zeros(spec.output_width), activation or spec.activation)

    if mode == "variational":
        encoder = [make(s) for s in specs[: half - 1]]
        mu_head = make(specs[half - 1], "linear")
        logvar_head = make(specs[half - 1], "linear")
        decoder = [make(s) for s in specs[half:]]
        return AutoencoderModel(encoder, decoder, mode, mu_head, logvar_head)
    encoder = [make(s) for s in specs[:half]]
    decoder = [make(s) for s in specs[half:]]
    return AutoencoderModel(encoder, decoder, mode)


def symmetric_specs(input_dim, hidden=(64, 32), latent_dim=8):
    """ReLU hidden layers, linear bottleneck and linear output."""
    widths = [input_dim, *hidden, latent_dim]
    enc = [
        LayerSpec(a, b, "linear" if i == len(widths) - 2 else "relu")
        for i, (a, b) in enumerate(zip(widths, widths[1:]))
    ]
    back = widths[::-1]
    dec = [
        LayerSpec(a, b, "linear" if i == len(back) - 2 else "relu")
        for i, (a, b) in enumerate(zip(back, back[1:]))
    ]
    return enc + dec


def build_model(input_dim, hidden=(64, 32), latent_dim=8, mode="plain", seed=0):
    return init_model(symmetric_specs(input_dim, hidden, latent_dim), mode, Rng.derive(seed, "init"))


def reconstruction_loss(x, x_hat):
    """Mean over samples of the squared L2 residual norm."""
    x = np.asarray(x, dtype=np.float64)
    x_hat = np.asarray(x_hat, dtype=np.float64)
    if x.shape != x_hat.shape:
        raise ShapeMismatchError(f"shapes differ: {x.shape} vs {x_hat.shape}")
    if x.shape[0] == 0:
        return 0.0
    return float(np.sum((x - x_hat) ** 2) / x.shape[0])


def kl_divergence(mu, log_var):
    """Batch mean of KL(N(mu, exp(log_var)) || N(0, I)), log_var clamped to
    [-10, 10]."""
    mu = np.atleast_2d(np.asarray(mu, dtype=np.float64))
    log_var = np.atleast_2d(np.asarray(log_var, dtype=np.float64))
    if mu.shape != log_var.shape:
        raise ShapeMismatchError("mu and log_var shapes differ")
    lv = np.clip(log_var, -LOGVAR_CLAMP, LOGVAR_CLAMP)
    per_sample = 0.5 * np.sum(mu**2 + np.exp(lv) - lv - 1.0, axis=1)
    return float(per_sample.mean())


def vae_loss(x, x_hat, mu, log_var, beta=1.0):
    """``(total, reconstruction, kl)`` with ``total = recon + beta * kl``."""
    recon = reconstruction_loss(x, x_hat)
    kl = kl_divergence(mu, log_var)
    return recon + beta * kl, recon, kl


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    t: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    @classmethod
    def for_params(cls, params, **hyper):
        return cls(m=[np.zeros_like(p) for p in params], v=[np.zeros_like(p) for p in params], **hyper)


def adam_step(params, grads, state):
    """One bias-corrected Adam update, applied to ``params`` in place."""
    if not state.m:
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]
    state.t += 1
    c1 = 1.0 - state.beta1**state.t
    c2 = 1.0 - state.beta2**state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.epsilon)
    return params, state


@dataclass
class TrainConfig:
    epochs: int = 30
    batch_size: int = 128
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    seed: int = 0
    beta: float = 1.0
    weight_decay: float = 0.0


@dataclass
class TrainReport:
    train_loss: list = field(default_factory=list)
    test_loss: list = field(default_factory=list)
    train_recon: list = field(default_factory=list)
    train_kl: list = field(default_factory=list)
    epochs: int = 0
    seed: int = 0
    mode: str = "plain"

    def to_dict(self):
        return asdict(self)


def full_loss(model, x, rng=None, beta=1.0):
    """Whole-set training objective; ``(total, recon, kl)``."""
    if model.variational:
        x_hat, mu, log_var, _, _ = model.vae_forward(x, rng=rng)
        return vae_loss(x, x_hat, mu, log_var, beta)
    x_hat = model.reconstruct(x)
    recon = reconstruction_loss(x, x_hat)
    return recon, recon, 0.0


def train(model, train_x, test_x=None, config=None):
    """Mini-batch Adam training; the model is updated in place and returned
    together with the per-epoch loss history."""
    config = config or TrainConfig()
    train_x = np.asarray(train_x, dtype=np.float64)
    if train_x.shape[0] == 0:
        raise ValueError("train_x is empty")
    has_test = test_x is not None and len(test_x) > 0
    shuffle_rng = Rng.derive(config.seed, "shuffle")
    noise_rng = Rng.derive(config.seed, "reparam")
    eval_rng = Rng.derive(config.seed, "eval")
    params = model.parameters()
    state = AdamState.for_params(
        params, lr=config.lr, beta1=config.beta1, beta2=config.beta2, epsilon=config.epsilon
    )
    report = TrainReport(seed=config.seed, mode=model.mode)
    n = train_x.shape[0]
    for epoch in range(1, config.epochs + 1):
        order = shuffle_rng.permutation(n)
        for start in range(0, n, config.batch_size):
            xb = train_x[order[start : start + config.batch_size]]
            if model.variational:
                cache = model.vae_forward(xb, rng=noise_rng)[-1]
            else:
                cache = model.forward(xb)[-1]
            grads = model.backward(cache, xb, beta=config.beta)
            if config.weight_decay:
                grads = [g + config.weight_decay * p for g, p in zip(grads, params)]
            adam_step(params, grads, state)
            model.bump()
        total, recon, kl = full_loss(model, train_x, eval_rng, config.beta)
        if not np.isfinite(total):
            raise NonFiniteLossError(epoch, total)
        report.train_loss.append(total)
        report.train_recon.append(recon)
        report.train_kl.append(kl)
        if has_test:
            test_total = full_loss(model, test_x, eval_rng, config.beta)[0]
            if not np.isfinite(test_total):
                raise NonFiniteLossError(epoch, test_total)
            report.test_loss.append(test_total)
        report.epochs = epoch
    return model, report


# Snapshot file layout (little-endian):
#   magic b"AEMINER\0" | u32 format version | u32 mode (0 plain, 1 variational)
#   | u32 latent dim | u32 layer count
#   then per layer: u32 role (0 encoder, 1 decoder, 2 mean head, 3 log-var head)
#   | u32 input width | u32 output width | u32 activation (0 linear, 1 relu)
#   then per layer, same order: float64 weights (row-major, in x out), float64 biases.
SNAPSHOT_MAGIC = b"AEMINER\0"
SNAPSHOT_VERSION = 1
_ROLES = ("encoder", "decoder", "mu", "logvar")


def save_model(model, path):
    roles = [("encoder", l) for l in model.encoder]
    if model.variational:
        roles += [("mu", model.mu_head), ("logvar", model.logvar_head)]
    roles += [("decoder", l) for l in model.decoder]
    with open(path, "wb") as fh:
        fh.write(SNAPSHOT_MAGIC)
        fh.write(struct.pack("<4I", SNAPSHOT_VERSION, int(model.variational), model.latent_dim, len(roles)))
        for role, layer in roles:
            fi, fo = layer.shape
            fh.write(struct.pack("<4I", _ROLES.index(role), fi, fo, ACTIVATIONS.index(layer.activation)))
        for _, layer in roles:
            fh.write(np.ascontiguousarray(layer.weights, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(layer.bias, dtype="<f8").tobytes())


def load_model(path):
    with open(path, "rb") as fh:
        data = fh.read()
    try:
        return _parse_snapshot(data)
    except (struct.error, ValueError, IndexError) as exc:
        if isinstance(exc, SnapshotError):
            raise
        raise SnapshotError(f"corrupt snapshot: {exc}") from None


def _parse_snapshot(data):
    if data[:8] != SNAPSHOT_MAGIC:
        raise SnapshotError("not a model snapshot")
    version, variational, _latent, count = struct.unpack_from("<4I", data, 8)
    if version != SNAPSHOT_VERSION:
        raise SnapshotError(f"unsupported snapshot version {version}")
    offset = 24
    headers = []
    for _ in range(count):
        headers.append(struct.unpack_from("<4I", data, offset))
        offset += 16
    parts = {role: [] for role in _ROLES}
    for role, fi, fo, act in headers:
        w = np.frombuffer(data, dtype="<f8", count=fi * fo, offset=offset).reshape(fi, fo).astype(np.float64)
        offset += 8 * fi * fo
        b = np.frombuffer(data, dtype="<f8", count=fo, offset=offset).astype(np.float64)
        offset += 8 * fo
        parts[_ROLES[role]].append(Dense(w, b, ACTIVATIONS[act]))
    if offset != len(data):
        raise SnapshotError("trailing or missing bytes in snapshot")
    if variational:
        return AutoencoderModel(parts["encoder"], parts["decoder"], "variational", parts["mu"][0], parts["logvar"][0])
    return AutoencoderModel(parts["encoder"], parts["decoder"], "plain")
