"""Reconstruction metrics, downstream linear classifiers, the method
comparison harness and file export.

RE is the mean absolute error and RMSE the root mean squared error, both over
every entry of the standardized test matrix; RE <= RMSE always holds.
"""

from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.stats import rankdata

from . import __version__
from .autoencoder import TrainConfig, build_model, train
from .baselines import TsneConfig, fa_fit, ica_fit, pca_fit, tsne_embed
from .dataio import inject_noise
from .linalg import Rng

METRIC_NOTE = (
    "RE = mean absolute error, RMSE = root mean squared error, both over all "
    "entries of the standardized test matrix"
)

# Published reference values, printed next to measured rows and never used
# as targets.
REFERENCE_TABLE = {
    "pca": (0.215, 0.305),
    "fa": (0.198, 0.287),
    "ica": (0.176, 0.256),
    "tsne": (0.152, 0.239),
    "umap": (0.139, 0.218),
    "ae": (0.115, 0.195),
}
TABLE_ORDER = ("pca", "fa", "ica", "tsne", "umap", "ae", "vae")
DISPLAY = {"pca": "PCA", "fa": "FA", "ica": "ICA", "tsne": "T-SNE", "umap": "UMAP", "ae": "AE", "vae": "VAE"}


class ShapeMismatchError(ValueError):
    pass


class SingleClassError(ValueError):
    pass


def _pair(x, x_hat):
    x = np.asarray(x, dtype=np.float64)
    x_hat = np.asarray(x_hat, dtype=np.float64)
    if x.shape != x_hat.shape:
        raise ShapeMismatchError(f"shapes differ: {x.shape} vs {x_hat.shape}")
    return x, x_hat


def re_metric(x, x_hat):
    x, x_hat = _pair(x, x_hat)
    return float(np.mean(np.abs(x - x_hat)))


def rmse_metric(x, x_hat):
    x, x_hat = _pair(x, x_hat)
    return float(np.sqrt(np.mean((x - x_hat) ** 2)))


def _features(x, n=None):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if n is not None and x.shape[0] != n:
        raise ShapeMismatchError("x and y must have the same number of rows")
    return x


def _check_binary(y):
    y = np.asarray(y).astype(np.int64).ravel()
    if not np.isin(y, (0, 1)).all():
        raise ValueError("labels must be 0/1")
    if y.size == 0 or y.min() == y.max():
        raise SingleClassError("both classes must be present")
    return y


def _sigmoid(t):
    return np.where(t >= 0, 1.0 / (1.0 + np.exp(-np.abs(t))), np.exp(-np.abs(t)) / (1.0 + np.exp(-np.abs(t))))


@dataclass
class LogisticRegression:
    lr: float = 0.1
    epochs: int = 500
    l2: float = 1e-4
    weights: np.ndarray | None = None
    bias: float = 0.0
    loss_history: list = field(default_factory=list)

    def loss(self, x, y, weights=None, bias=None):
        w = self.weights if weights is None else weights
        b = self.bias if bias is None else bias
        t = x @ w + b
        # log(1 + e^t) - y t, computed stably
        ll = np.logaddexp(0.0, t) - y * t
        return float(ll.mean() + 0.5 * self.l2 * np.dot(w, w))

    def fit(self, x, y):
        """Full-batch gradient descent from zero weights."""
        x = _features(x, len(y))
        y = _check_binary(y)
        n = x.shape[0]
        self.weights = np.zeros(x.shape[1])
        self.bias = 0.0
        self.loss_history = [self.loss(x, y)]
        for _ in range(self.epochs):
            r = _sigmoid(x @ self.weights + self.bias) - y
            self.weights = self.weights - self.lr * (x.T @ r / n + self.l2 * self.weights)
            self.bias = self.bias - self.lr * float(r.mean())
            self.loss_history.append(self.loss(x, y))
        return self

    def decision_function(self, x):
        return _features(x) @ self.weights + self.bias

    def predict_proba(self, x):
        return _sigmoid(self.decision_function(x))

    def predict(self, x):
        return (self.predict_proba(x) >= 0.5).astype(np.int64)


@dataclass
class LinearSVM:
    """Linear SVM minimizing ``0.5 ||w||^2 + C * mean(hinge)`` by
    full-batch sub-gradient descent with step ``lr / sqrt(t)``, keeping the
    best iterate. Labels are 0/1 and mapped to -1/+1."""

    lr: float = 1.0
    epochs: int = 500
    C: float = 1.0
    weights: np.ndarray | None = None
    bias: float = 0.0
    loss_history: list = field(default_factory=list)

    def hinge(self, x, y):
        s = 2.0 * y - 1.0
        return float(np.mean(np.maximum(0.0, 1.0 - s * (x @ self.weights + self.bias))))

    def objective(self, x, y):
        return 0.5 * float(np.dot(self.weights, self.weights)) + self.C * self.hinge(x, y)

    def fit(self, x, y):
        x = _features(x, len(y))
        y = _check_binary(y)
        s = 2.0 * y - 1.0
        n = x.shape[0]
        self.weights = np.zeros(x.shape[1])
        self.bias = 0.0
        self.loss_history = [self.objective(x, y)]
        w, b = self.weights, self.bias
        best = self.loss_history[0]
        for t in range(1, self.epochs + 1):
            active = (s * (x @ w + b)) < 1.0
            gw = w - self.C * (x[active].T @ s[active]) / n
            gb = -self.C * float(s[active].sum()) / n
            # diminishing step; the hinge kink makes a fixed step oscillate
            step = self.lr / np.sqrt(t)
            w, b = w - step * gw, b - step * gb
            self.weights, self.bias = w, b
            obj = self.objective(x, y)
            self.loss_history.append(obj)
            if obj < best:
                best, best_wb = obj, (w, b)
        if best < self.loss_history[0]:
            self.weights, self.bias = best_wb
        else:
            self.weights, self.bias = np.zeros(x.shape[1]), 0.0
        return self

    def decision_function(self, x):
        return _features(x) @ self.weights + self.bias

    def predict(self, x):
        return (self.decision_function(x) > 0).astype(np.int64)


def logreg_train(x, y, lr=0.1, epochs=500, l2=1e-4):
    return LogisticRegression(lr=lr, epochs=epochs, l2=l2).fit(x, y)


def linear_svm_train(x, y, lr=1.0, epochs=500, C=1.0):
    return LinearSVM(lr=lr, epochs=epochs, C=C).fit(x, y)


def roc_auc(scores, labels):
    """Mann-Whitney AUC with midranks for ties."""
    labels = _check_binary(labels)
    ranks = rankdata(np.asarray(scores, dtype=np.float64))
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    return float((ranks[labels == 1].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def classifier_scores(classifier, x, y):
    """Accuracy at the 0.5 link threshold and ROC-AUC of the decision values;
    AUC is ``None`` when ``y`` has a single class."""
    y = np.asarray(y).astype(np.int64)
    accuracy = float(np.mean(classifier.predict(x) == y))
    try:
        auc = roc_auc(classifier.decision_function(x), y)
    except SingleClassError:
        auc = None
    return {"accuracy": accuracy, "roc_auc": auc}


@dataclass
class DatasetBundle:
    x_train: np.ndarray
    x_test: np.ndarray
    y_train: np.ndarray | None = None
    y_test: np.ndarray | None = None
    numeric_mask: np.ndarray | None = None
    feature_names: list | None = None


@dataclass
class CompareConfig:
    k: int = 8
    seeds: list = field(default_factory=lambda: [0, 1, 2])
    hidden: list = field(default_factory=lambda: [64, 32])
    train: TrainConfig = field(default_factory=TrainConfig)
    noise_sigma: float = 0.1
    fa_max_iter: int = 200
    fa_tol: float = 1e-6
    ica_max_iter: int = 200
    ica_tol: float = 1e-4
    tsne: TsneConfig = field(default_factory=lambda: TsneConfig(row_cap=2000))


@dataclass
class MetricsReport:
    rows: list = field(default_factory=list)
    loss_histories: list = field(default_factory=list)
    downstream: list = field(default_factory=list)
    anomaly: dict | None = None
    clusters: dict | None = None
    config: dict = field(default_factory=dict)
    seeds: list = field(default_factory=list)
    metric_definitions: str = METRIC_NOTE
    version: str = __version__
    embeddings: dict = field(default_factory=dict, repr=False)

    def to_dict(self):
        d = asdict(self)
        d.pop("embeddings")
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(**d)

    def row(self, method):
        for r in self.rows:
            if r["method"] == method:
                return r
        raise KeyError(method)


def _fit_reconstruct(method, bundle, k, seed, cfg):
    """Returns ``(x_hat_test, x_eval, noisy_pair, flags, extras)``.

    ``x_eval`` is the matrix the reconstruction is compared against; t-SNE
    evaluates on a seeded test subsample it was fitted on.
    """
    x_tr, x_te = bundle.x_train, bundle.x_test
    flags, extras = [], {}
    if method == "pca":
        model = pca_fit(x_tr, k)
    elif method == "fa":
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            model = fa_fit(x_tr, k, cfg.fa_max_iter, cfg.fa_tol)
        if not model.converged or caught:
            flags.append("not converged")
    elif method == "ica":
        with warnings.catch_warnings(record=True):
            warnings.simplefilter("always")
            model = ica_fit(x_tr, k, cfg.ica_max_iter, cfg.ica_tol, Rng.derive(seed, "ica"))
        if not model.converged:
            flags.append("not converged")
    elif method == "tsne":
        n = x_te.shape[0]
        idx = np.arange(n)
        if n > cfg.tsne.row_cap:
            idx = np.sort(Rng.derive(seed, "tsne-test-subsample").permutation(n)[: cfg.tsne.row_cap])
        x_eval = x_te[idx]
        tcfg = TsneConfig(**{**asdict(cfg.tsne), "seed": seed, "row_cap": max(cfg.tsne.row_cap, idx.size)})
        model = tsne_embed(x_eval, k, tcfg)
        flags += ["linear-decoder reconstruction", f"fitted on test subsample n={idx.size}"]
        extras["embedding"] = model.embedding
        return model.reconstruct(x_eval), x_eval, None, flags, extras
    elif method in ("ae", "vae"):
        mode = "variational" if method == "vae" else "plain"
        model = build_model(x_tr.shape[1], tuple(cfg.hidden), k, mode, seed)
        tcfg = TrainConfig(**{**asdict(cfg.train), "seed": seed})
        model, report = train(model, x_tr, x_te, tcfg)
        extras["history"] = report
        extras["embedding"] = model.encode(x_te)
        extras["model"] = model
    else:
        raise ValueError(f"unknown method {method!r}")
    if method in ("pca", "fa", "ica"):
        extras["embedding"] = model.transform(x_te)
    noisy = None
    if bundle.numeric_mask is not None and cfg.noise_sigma > 0:
        x_noisy = inject_noise(x_te, cfg.noise_sigma, bundle.numeric_mask, Rng.derive(seed, "test-noise"))
        noisy = (x_noisy, model.reconstruct(x_noisy))
    return model.reconstruct(x_te), x_te, noisy, flags, extras


def _mean_std(values):
    arr = np.asarray(values, dtype=np.float64)
    return float(arr.mean()), float(arr.std())


def compare_methods(bundle, methods, k=None, seeds=None, config=None):
    """Fit each method on the training matrix for every seed and score its
    test-set reconstruction. Failures are recorded per row, not raised."""
    cfg = config or CompareConfig()
    k = cfg.k if k is None else k
    seeds = list(cfg.seeds if seeds is None else seeds)
    report = MetricsReport(seeds=seeds)
    requested = [m for m in TABLE_ORDER if m in methods or m == "umap"]
    unknown = set(methods) - set(TABLE_ORDER)
    if unknown:
        raise ValueError(f"unknown methods: {sorted(unknown)}")
    for method in requested:
        ref = REFERENCE_TABLE.get(method)
        row = {
            "method": method,
            "display": DISPLAY[method],
            "k": k,
            "status": "ok",
            "error": None,
            "flags": [],
            "re": None, "re_std": None, "rmse": None, "rmse_std": None,
            "re_noisy": None, "rmse_noisy": None,
            "per_seed": [],
            "reference_re": ref[0] if ref else None,
            "reference_rmse": ref[1] if ref else None,
        }
        if method == "umap":
            row["status"] = "reference"
            row["flags"] = ["reference-external", "not implemented"]
            report.rows.append(row)
            continue
        try:
            for seed in seeds:
                x_hat, x_eval, noisy, flags, extras = _fit_reconstruct(method, bundle, k, seed, cfg)
                cell = {"seed": seed, "re": re_metric(x_eval, x_hat), "rmse": rmse_metric(x_eval, x_hat)}
                if noisy is not None:
                    cell["re_noisy"] = re_metric(*noisy)
                    cell["rmse_noisy"] = rmse_metric(*noisy)
                row["per_seed"].append(cell)
                for f in flags:
                    if f not in row["flags"]:
                        row["flags"].append(f)
                if "history" in extras:
                    h = extras["history"]
                    report.loss_histories.append(
                        {"run": f"{method}-seed{seed}", "train_loss": h.train_loss, "test_loss": h.test_loss}
                    )
                if seed == seeds[0] and "embedding" in extras:
                    report.embeddings[method] = extras["embedding"]
            row["re"], row["re_std"] = _mean_std([c["re"] for c in row["per_seed"]])
            row["rmse"], row["rmse_std"] = _mean_std([c["rmse"] for c in row["per_seed"]])
            if row["per_seed"] and "re_noisy" in row["per_seed"][0]:
                row["re_noisy"] = _mean_std([c["re_noisy"] for c in row["per_seed"]])[0]
                row["rmse_noisy"] = _mean_std([c["rmse_noisy"] for c in row["per_seed"]])[0]
        except Exception as exc:  # one failing method must not sink the table
            row["status"] = "failed"
            row["error"] = f"{type(exc).__name__}: {exc}"
        report.rows.append(row)
    report.config = {
        "k": k,
        "seeds": seeds,
        "methods": list(methods),
        "compare": _jsonable(asdict(cfg)),
    }
    return report


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    return obj


def format_float(x):
    return format(float(x), ".17g")


def _json_text(obj, indent=0):
    """JSON with floats written at 17 significant digits."""
    pad = "  " * (indent + 1)
    end = "  " * indent
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {_json_text(v, indent + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(not isinstance(v, (dict, list, tuple)) for v in obj):
            return "[" + ", ".join(_json_text(v) for v in obj) + "]"
        return "[\n" + ",\n".join(pad + _json_text(v, indent + 1) for v in obj) + "\n" + end + "]"
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, float):
        if not math.isfinite(obj):
            raise ValueError("non-finite float cannot be written to JSON")
        return format_float(obj)
    return json.dumps(obj)


def write_json(obj, path):
    Path(path).write_text(_json_text(_jsonable(obj)) + "\n", encoding="utf-8")


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return format_float(v)
    return str(v)


def _write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for r in rows:
            writer.writerow([_cell(v) for v in r])


def write_table_csv(report, path):
    _write_csv(
        path,
        ["method", "k", "RE", "RMSE", "RE_std", "RMSE_std", "RE_noisy", "RMSE_noisy",
         "reference_RE", "reference_RMSE", "status", "flags"],
        [
            [r["display"], r["k"], r["re"], r["rmse"], r["re_std"], r["rmse_std"], r["re_noisy"],
             r["rmse_noisy"], r["reference_re"], r["reference_rmse"], r["status"], "|".join(r["flags"])]
            for r in report.rows
        ],
    )


def write_loss_history_csv(histories, path):
    rows = []
    for h in histories:
        test = h.get("test_loss") or []
        for epoch, loss in enumerate(h["train_loss"], start=1):
            rows.append([h["run"], epoch, loss, test[epoch - 1] if epoch <= len(test) else None])
    _write_csv(path, ["run", "epoch", "train_loss", "test_loss"], rows)


def write_embedding_csv(embedding, path):
    embedding = np.asarray(embedding)
    _write_csv(path, ["index"] + [f"z{j}" for j in range(embedding.shape[1])],
               [[i, *row] for i, row in enumerate(embedding.tolist())])


def write_anomalies_csv(anomaly_report, path, indices=None):
    idx = range(anomaly_report.errors.size) if indices is None else indices
    _write_csv(path, ["index", "error", "flag"],
               [[int(i), float(e), int(f)] for i, e, f in zip(idx, anomaly_report.errors, anomaly_report.flags)])


def write_clusters_csv(assignment, path, indices=None):
    idx = range(assignment.labels.size) if indices is None else indices
    _write_csv(path, ["index", "cluster"], [[int(i), int(c)] for i, c in zip(idx, assignment.labels)])


def write_downstream_csv(scores, path):
    _write_csv(path, ["features", "classifier", "accuracy", "roc_auc"],
               [[s["features"], s["classifier"], s["accuracy"], s["roc_auc"]] for s in scores])


def read_metrics_json(path):
    with open(path, encoding="utf-8") as fh:
        return MetricsReport.from_dict(json.load(fh))


def export(report, out_dir, anomaly_report=None, clusters=None):
    """Write every artifact the report supports; returns the written paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    write_json(report.to_dict(), out / "metrics.json")
    written.append(out / "metrics.json")
    if report.rows:
        write_table_csv(report, out / "table1.csv")
        written.append(out / "table1.csv")
    if report.loss_histories:
        write_loss_history_csv(report.loss_histories, out / "loss_history.csv")
        written.append(out / "loss_history.csv")
    for method, emb in sorted(report.embeddings.items()):
        path = out / f"embeddings_{method}.csv"
        write_embedding_csv(emb, path)
        written.append(path)
    if anomaly_report is not None:
        write_anomalies_csv(anomaly_report, out / "anomalies.csv")
        written.append(out / "anomalies.csv")
    if clusters is not None:
        write_clusters_csv(clusters, out / "clusters.csv")
        written.append(out / "clusters.csv")
    if report.downstream:
        write_downstream_csv(report.downstream, out / "downstream.csv")
        written.append(out / "downstream.csv")
    return written
