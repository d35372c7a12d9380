"""Reconstruction table for PCA, FA, ICA, t-SNE, AE and VAE on a
Bank-Marketing-shaped synthetic table."""

import tempfile
from pathlib import Path

from aeminer.autoencoder import TrainConfig
from aeminer.baselines import TsneConfig
from aeminer.dataio import PreprocessPipeline, load_csv, load_schema, stratified_split
from aeminer.evaluation import METRIC_NOTE, CompareConfig, DatasetBundle, compare_methods, export
from aeminer.linalg import Rng
from aeminer.synthetic import write_bank_marketing_csv

tmp = Path(tempfile.mkdtemp())
path = write_bank_marketing_csv(tmp / "bank.csv", 5000, seed=0)
table = load_csv(path, load_schema("builtin:bank-additional-full"))
split = stratified_split(table.n_rows, table.target, 0.2, Rng.derive(0, "split"))
pipe = PreprocessPipeline(table.schema).fit(table, split.train)
print(f"{table.n_rows} rows -> {pipe.width} standardized/one-hot features")

bundle = DatasetBundle(
    pipe.transform(table, split.train), pipe.transform(table, split.test),
    table.target[split.train], table.target[split.test], pipe.numeric_mask, pipe.feature_names,
)
config = CompareConfig(k=8, seeds=[0, 1], train=TrainConfig(epochs=30), tsne=TsneConfig(iters=500, row_cap=600))
report = compare_methods(bundle, ["pca", "fa", "ica", "tsne", "ae", "vae"], config=config)

print(METRIC_NOTE)
print(f"{'method':>7} {'RE':>7} {'RMSE':>7} {'noisy RMSE':>11}   published RE/RMSE")
for row in report.rows:
    ref = "" if row["reference_re"] is None else f"{row['reference_re']:.3f}/{row['reference_rmse']:.3f}"
    if row["status"] != "ok":
        print(f"{row['display']:>7} {'-':>7} {'-':>7} {'-':>11}   {ref}  ({', '.join(row['flags'])})")
        continue
    noisy = "-" if row["rmse_noisy"] is None else f"{row['rmse_noisy']:.3f}"
    print(f"{row['display']:>7} {row['re']:7.3f} {row['rmse']:7.3f} {noisy:>11}   {ref}")

written = export(report, tmp / "artifacts")
print("artifacts:", ", ".join(p.name for p in written))
