"""Command-line pipeline: prepare -> train -> compare -> anomalies -> cluster
-> downstream, all writing into one artifact directory per run.

Usage::

    aeminer <subcommand> --config run.json [--out DIR] [--seed N]

The config is a JSON object with the sections of :class:`RunConfig`; every
key is optional except ``dataset.path`` and unknown keys are rejected.
``dataset.path`` may be ``"synthetic:bank-marketing"`` to generate a
Bank-Marketing-shaped file (``dataset.synthetic_rows`` rows) in the output
directory. Schema paths starting with ``builtin:`` name a bundled schema.
Relative dataset and schema paths are resolved against the config file's
directory; a relative output directory is resolved against
``$AEMINER_OUTPUT_ROOT`` when set, else the working directory.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
import types
import typing
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import ThresholdPolicy, calibrate_threshold, detect_anomalies, kmeans, latent_features
from .autoencoder import TrainConfig, build_model, load_model, save_model, train
from .baselines import TsneConfig, pca_fit
from .dataio import PreprocessPipeline, inject_noise, load_csv, load_schema, stratified_split
from .evaluation import (
    CompareConfig,
    DatasetBundle,
    MetricsReport,
    classifier_scores,
    compare_methods,
    linear_svm_train,
    logreg_train,
    read_metrics_json,
    write_anomalies_csv,
    write_clusters_csv,
    write_downstream_csv,
    write_embedding_csv,
    write_json,
    write_loss_history_csv,
    write_table_csv,
)
from .linalg import Rng
from .synthetic import write_bank_marketing_csv

SUBCOMMANDS = ("prepare", "train", "compare", "anomalies", "cluster", "downstream", "all")
SYNTHETIC_PREFIX = "synthetic:"
OUTPUT_ROOT_VAR = "AEMINER_OUTPUT_ROOT"  # prefixes relative output directories


class ConfigError(ValueError):
    pass


class UnknownKeyError(ConfigError):
    def __init__(self, key):
        self.key = key
        super().__init__(f"unknown config key {key!r}")


class ConfigTypeError(ConfigError):
    def __init__(self, key, expected, value):
        self.key = key
        super().__init__(f"config key {key!r}: expected {expected}, got {value!r}")


class MissingRequiredError(ConfigError):
    def __init__(self, key):
        self.key = key
        super().__init__(f"missing required config key {key!r}")


class MissingPrerequisiteError(RuntimeError):
    pass


class OutputLockedError(RuntimeError):
    pass


@dataclass
class DatasetSection:
    path: str | None = None
    schema: str = "builtin:bank-additional-full"
    ratio: float = 0.2
    stratify: bool = True
    synthetic_rows: int = 4000
    synthetic_seed: int = 0


@dataclass
class ModelSection:
    mode: str = "plain"
    hidden: list[int] = field(default_factory=lambda: [64, 32])
    k: int = 8
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    batch: int = 128
    epochs: int = 30
    beta: float = 1.0
    weight_decay: float = 0.0
    seed: int = 0


@dataclass
class NoiseSection:
    sigma: float = 0.1
    enabled: bool = True


@dataclass
class TsneSection:
    perplexity: float = 30.0
    iters: int = 1000
    row_cap: int = 2000
    early_exaggeration: float = 12.0
    lr: float = 200.0


@dataclass
class CompareSection:
    methods: list[str] = field(default_factory=lambda: ["pca", "fa", "ica", "tsne", "ae"])
    k: int = 8
    seeds: list[int] = field(default_factory=lambda: [0, 1, 2])
    fa_max_iter: int = 200
    ica_max_iter: int = 200
    tsne: TsneSection = field(default_factory=TsneSection)


@dataclass
class AnomalySection:
    policy: str = "quantile"
    p: float = 0.99
    k_sigma: float = 3.0


@dataclass
class ClusterSection:
    k: int = 4
    max_iter: int = 100
    tol: float = 1e-6


@dataclass
class DownstreamSection:
    classifiers: list[str] = field(default_factory=lambda: ["logreg", "svm"])
    features: list[str] = field(default_factory=lambda: ["ae", "pca", "raw"])
    lr: float = 0.1
    svm_lr: float = 1.0
    epochs: int = 500
    l2: float = 1e-4
    C: float = 1.0


@dataclass
class OutputSection:
    directory: str = "runs/default"


@dataclass
class RunConfig:
    dataset: DatasetSection = field(default_factory=DatasetSection)
    model: ModelSection = field(default_factory=ModelSection)
    noise: NoiseSection = field(default_factory=NoiseSection)
    compare: CompareSection = field(default_factory=CompareSection)
    anomaly: AnomalySection = field(default_factory=AnomalySection)
    cluster: ClusterSection = field(default_factory=ClusterSection)
    downstream: DownstreamSection = field(default_factory=DownstreamSection)
    output: OutputSection = field(default_factory=OutputSection)

    def to_dict(self):
        return asdict(self)


def _coerce(value, tp, key):
    origin = typing.get_origin(tp)
    if dataclasses.is_dataclass(tp):
        if not isinstance(value, dict):
            raise ConfigTypeError(key, "a section object", value)
        return _build(tp, value, key + ".")
    if origin is list:
        (item,) = typing.get_args(tp)
        if not isinstance(value, list):
            raise ConfigTypeError(key, "a list", value)
        return [_coerce(v, item, key) for v in value]
    if origin in (typing.Union, types.UnionType):
        args = typing.get_args(tp)
        if value is None and type(None) in args:
            return None
        return _coerce(value, next(a for a in args if a is not type(None)), key)
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigTypeError(key, "a boolean", value)
        return value
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigTypeError(key, "an integer", value)
        return value
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigTypeError(key, "a number", value)
        return float(value)
    if tp is str:
        if not isinstance(value, str):
            raise ConfigTypeError(key, "a string", value)
        return value
    raise ConfigTypeError(key, tp, value)


def _build(cls, data, prefix=""):
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    for key in data:
        if key not in names:
            raise UnknownKeyError(prefix + key)
    kwargs = {k: _coerce(v, hints[k], prefix + k) for k, v in data.items()}
    return cls(**kwargs)


def config_from_dict(data):
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    cfg = _build(RunConfig, data)
    if not cfg.dataset.path:
        raise MissingRequiredError("dataset.path")
    if cfg.model.mode not in ("plain", "vae"):
        raise ConfigTypeError("model.mode", "'plain' or 'vae'", cfg.model.mode)
    if cfg.anomaly.policy not in ("quantile", "mean_plus_k_sigma"):
        raise ConfigTypeError("anomaly.policy", "'quantile' or 'mean_plus_k_sigma'", cfg.anomaly.policy)
    return cfg


def parse_config(path):
    """Load a JSON run config, filling defaults. Relative dataset and schema
    paths are made relative to the config file's directory."""
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        cfg = config_from_dict(json.load(fh))
    base = path.resolve().parent
    ds = cfg.dataset
    if not ds.path.startswith(SYNTHETIC_PREFIX) and not Path(ds.path).is_absolute():
        ds.path = str(base / ds.path)
    if not ds.schema.startswith("builtin:") and not Path(ds.schema).is_absolute():
        ds.schema = str(base / ds.schema)
    return cfg


def _train_config(cfg):
    m = cfg.model
    return TrainConfig(
        epochs=m.epochs, batch_size=m.batch, lr=m.lr, beta1=m.beta1, beta2=m.beta2,
        epsilon=m.epsilon, seed=m.seed, beta=m.beta, weight_decay=m.weight_decay,
    )


def _mode(cfg):
    return "variational" if cfg.model.mode == "vae" else "plain"


def _prepared(out):
    d = out / "prepared"
    if not (d / "x_train.npy").exists():
        raise MissingPrerequisiteError(f"no prepared matrices in {d}; run 'prepare' first")
    arrays = {p.stem: np.load(p) for p in sorted(d.glob("*.npy"))}
    return arrays


def run_prepare(cfg, out):
    ds = cfg.dataset
    schema = load_schema(ds.schema)
    data_path = ds.path
    if data_path.startswith(SYNTHETIC_PREFIX):
        kind = data_path[len(SYNTHETIC_PREFIX):]
        if kind != "bank-marketing":
            raise ConfigError(f"unknown synthetic dataset {kind!r}")
        data_path = write_bank_marketing_csv(out / "synthetic_data.csv", ds.synthetic_rows, ds.synthetic_seed)
    table = load_csv(data_path, schema)
    split = stratified_split(
        table.n_rows, table.target, ds.ratio, Rng.derive(cfg.model.seed, "split"),
        stratify=ds.stratify and table.target is not None,
    )
    pipeline = PreprocessPipeline(schema).fit(table, split.train)
    x_train = pipeline.transform(table, split.train)
    x_test = pipeline.transform(table, split.test)
    mask = pipeline.numeric_mask
    sigma = cfg.noise.sigma if cfg.noise.enabled else 0.0
    x_noisy = inject_noise(x_test, sigma, mask, Rng.derive(cfg.model.seed, "test-noise"))
    d = out / "prepared"
    d.mkdir(parents=True, exist_ok=True)
    arrays = {
        "x_train": x_train, "x_test": x_test, "x_test_noisy": x_noisy,
        "train_idx": split.train, "test_idx": split.test, "numeric_mask": mask,
    }
    if table.target is not None:
        arrays["y_train"] = table.target[split.train]
        arrays["y_test"] = table.target[split.test]
    for name, arr in arrays.items():
        np.save(d / f"{name}.npy", arr)
    write_json(pipeline.to_dict(), out / "pipeline.json")
    write_json({"seed": split.seed, "ratio": split.ratio, "train": split.train, "test": split.test}, out / "split.json")
    return f"prepared {table.n_rows} rows -> {x_train.shape[1]} features ({len(split.train)} train / {len(split.test)} test)"


def _fit_model(cfg, out, arrays):
    model = build_model(arrays["x_train"].shape[1], tuple(cfg.model.hidden), cfg.model.k, _mode(cfg), cfg.model.seed)
    model, report = train(model, arrays["x_train"], arrays["x_test"], _train_config(cfg))
    save_model(model, out / "model.aem")
    write_loss_history_csv([{"run": f"{cfg.model.mode}-seed{cfg.model.seed}", **report.to_dict()}], out / "loss_history.csv")
    write_json(report.to_dict(), out / "train_report.json")
    return model, report


def _model(cfg, out, arrays):
    path = out / "model.aem"
    if path.exists():
        return load_model(path)
    return _fit_model(cfg, out, arrays)[0]


def run_train(cfg, out):
    arrays = _prepared(out)
    _, report = _fit_model(cfg, out, arrays)
    if not report.train_loss:
        return "trained 0 epochs"
    tail = f", test {report.test_loss[-1]:.4f}" if report.test_loss else ""
    return f"trained {report.epochs} epochs: train loss {report.train_loss[-1]:.4f}{tail}"


def _snapshot(cfg):
    d = cfg.to_dict()
    d.pop("output")
    return d


def _load_metrics(out):
    path = out / "metrics.json"
    return read_metrics_json(path) if path.exists() else MetricsReport()


def _save_metrics(report, cfg, out):
    report.config["run"] = _snapshot(cfg)
    write_json(report.to_dict(), out / "metrics.json")


def run_compare(cfg, out):
    arrays = _prepared(out)
    bundle = DatasetBundle(
        arrays["x_train"], arrays["x_test"], arrays.get("y_train"), arrays.get("y_test"),
        arrays["numeric_mask"].astype(bool),
    )
    c = cfg.compare
    tsne = TsneConfig(perplexity=c.tsne.perplexity, iters=c.tsne.iters, early_exaggeration=c.tsne.early_exaggeration,
                      lr=c.tsne.lr, row_cap=c.tsne.row_cap)
    ccfg = CompareConfig(
        k=c.k, seeds=list(c.seeds), hidden=list(cfg.model.hidden), train=_train_config(cfg),
        noise_sigma=cfg.noise.sigma if cfg.noise.enabled else 0.0,
        fa_max_iter=c.fa_max_iter, ica_max_iter=c.ica_max_iter, tsne=tsne,
    )
    report = compare_methods(bundle, c.methods, c.k, c.seeds, ccfg)
    previous = _load_metrics(out)
    report.downstream = previous.downstream
    report.anomaly = previous.anomaly
    report.clusters = previous.clusters
    _save_metrics(report, cfg, out)
    write_table_csv(report, out / "table1.csv")
    if report.loss_histories:
        write_loss_history_csv(report.loss_histories, out / "compare_loss_history.csv")
    for method, emb in sorted(report.embeddings.items()):
        write_embedding_csv(emb, out / f"embeddings_{method}.csv")
    failed = [r["method"] for r in report.rows if r["status"] == "failed"]
    lines = [f"{r['display']:>6}  RE {r['re']:.4f}  RMSE {r['rmse']:.4f}" for r in report.rows if r["status"] == "ok"]
    return "\n".join(lines + ([f"failed: {', '.join(failed)}"] if failed else []))


def _policy(cfg):
    a = cfg.anomaly
    return ThresholdPolicy(a.policy, a.p if a.policy == "quantile" else a.k_sigma)


def run_anomalies(cfg, out):
    arrays = _prepared(out)
    model = _model(cfg, out, arrays)
    policy = _policy(cfg)
    train_errors = model.reconstruction_errors(arrays["x_train"])
    threshold = calibrate_threshold(train_errors, policy)
    report = detect_anomalies(model, arrays["x_test"], threshold, policy.describe())
    report.calibration = {
        "source": "train reconstruction errors",
        "n": int(train_errors.size),
        "mean": float(train_errors.mean()),
        "flagged_fraction": float(np.mean(train_errors > threshold)),
    }
    noisy = model.reconstruction_errors(arrays["x_test_noisy"])
    write_anomalies_csv(report, out / "anomalies.csv", arrays["test_idx"])
    metrics = _load_metrics(out)
    metrics.anomaly = {
        **report.summary(),
        "noisy_test_mean_error": float(noisy.mean()),
        "noisy_test_flagged": int(np.sum(noisy > threshold)),
    }
    _save_metrics(metrics, cfg, out)
    return f"flagged {report.n_flagged}/{report.errors.size} test rows (threshold {threshold:.4g}, {policy.describe()})"


def run_cluster(cfg, out):
    arrays = _prepared(out)
    model = _model(cfg, out, arrays)
    z = np.vstack([latent_features(model, arrays["x_train"]), latent_features(model, arrays["x_test"])])
    rows = np.concatenate([arrays["train_idx"], arrays["test_idx"]])
    c = cfg.cluster
    assignment = kmeans(z, c.k, c.max_iter, c.tol, seed=cfg.model.seed)
    write_clusters_csv(assignment, out / "clusters.csv", rows)
    metrics = _load_metrics(out)
    metrics.clusters = {
        "k": c.k,
        "inertia": assignment.inertia,
        "iterations": assignment.iterations,
        "sizes": np.bincount(assignment.labels, minlength=c.k).tolist(),
        "centroids": assignment.centroids.tolist(),
    }
    _save_metrics(metrics, cfg, out)
    return f"k-means (k={c.k}) on {z.shape[0]} latent rows: inertia {assignment.inertia:.4g} after {assignment.iterations} iterations"


def run_downstream(cfg, out):
    arrays = _prepared(out)
    if "y_train" not in arrays:
        raise MissingPrerequisiteError("downstream classification needs a target column in the schema")
    model = _model(cfg, out, arrays)
    d = cfg.downstream
    features = {}
    for name in d.features:
        if name == "ae":
            features[name] = (latent_features(model, arrays["x_train"]), latent_features(model, arrays["x_test"]))
        elif name == "pca":
            pca = pca_fit(arrays["x_train"], cfg.model.k)
            features[name] = (pca.transform(arrays["x_train"]), pca.transform(arrays["x_test"]))
        elif name == "raw":
            features[name] = (arrays["x_train"], arrays["x_test"])
        else:
            raise ConfigError(f"unknown downstream feature set {name!r}")
    scores = []
    for name, (ftr, fte) in features.items():
        for clf_name in d.classifiers:
            if clf_name == "logreg":
                clf = logreg_train(ftr, arrays["y_train"], d.lr, d.epochs, d.l2)
            elif clf_name == "svm":
                clf = linear_svm_train(ftr, arrays["y_train"], d.svm_lr, d.epochs, d.C)
            else:
                raise ConfigError(f"unknown classifier {clf_name!r}")
            scores.append({"features": name, "classifier": clf_name, **classifier_scores(clf, fte, arrays["y_test"])})
    write_downstream_csv(scores, out / "downstream.csv")
    metrics = _load_metrics(out)
    metrics.downstream = scores
    _save_metrics(metrics, cfg, out)
    return "\n".join(
        f"{s['features']:>4} + {s['classifier']:<6} accuracy {s['accuracy']:.4f}  AUC "
        + ("n/a" if s["roc_auc"] is None else f"{s['roc_auc']:.4f}")
        for s in scores
    )


STEPS = {
    "prepare": run_prepare,
    "train": run_train,
    "compare": run_compare,
    "anomalies": run_anomalies,
    "cluster": run_cluster,
    "downstream": run_downstream,
}


class _Lock:
    def __init__(self, out):
        self.path = out / ".lock"

    def __enter__(self):
        try:
            fd = os.open(self.path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            raise OutputLockedError(f"{self.path} exists; another run owns this directory") from None
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        return self

    def __exit__(self, *exc):
        self.path.unlink(missing_ok=True)


def error_line(exc, operation):
    module = type(exc).__module__.rsplit(".", 1)[-1]
    if module in ("builtins", "__main__"):
        module = "cli"
    return f"error: module={module} operation={operation} kind={type(exc).__name__} cause={exc}"


def run(subcommand, cfg, out, log=print):
    """Execute a subcommand; returns the process exit status."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    steps = list(STEPS) if subcommand == "all" else [subcommand]
    with _Lock(out):
        write_json(cfg.to_dict(), out / "resolved_config.json")
        write_json({"version": __version__, "seed": cfg.model.seed, "compare_seeds": cfg.compare.seeds}, out / "run_info.json")
        for step in steps:
            marker = out / f"{step}.failed"
            try:
                message = STEPS[step](cfg, out)
            except Exception as exc:
                line = error_line(exc, step)
                marker.write_text(line + "\n", encoding="utf-8")
                print(line, file=sys.stderr)
                return 1
            marker.unlink(missing_ok=True)
            log(f"[{step}] {message}")
    return 0


def main(argv=None):
    parser = argparse.ArgumentParser(prog="aeminer", description=__doc__.split("\n\n")[0])
    parser.add_argument("subcommand", choices=SUBCOMMANDS)
    parser.add_argument("--config", required=True, help="JSON run config")
    parser.add_argument("--out", help="artifact directory (overrides output.directory)")
    parser.add_argument("--seed", type=int, help="override model.seed")
    args = parser.parse_args(argv)
    try:
        cfg = parse_config(args.config)
        if args.seed is not None:
            if not 0 <= args.seed < 2**64:
                raise ConfigTypeError("--seed", "an unsigned 64-bit integer", args.seed)
            cfg.model.seed = args.seed
        if args.out:
            cfg.output.directory = args.out
        out = Path(os.environ.get(OUTPUT_ROOT_VAR, "")) / cfg.output.directory
        return run(args.subcommand, cfg, out)
    except Exception as exc:
        print(error_line(exc, args.subcommand), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
