"""Do compressed features still predict the subscription outcome?"""

import tempfile
from pathlib import Path

import numpy as np

from aeminer.analysis import kmeans, latent_features
from aeminer.autoencoder import TrainConfig, build_model, train
from aeminer.baselines import pca_fit
from aeminer.dataio import PreprocessPipeline, load_csv, load_schema, stratified_split
from aeminer.evaluation import classifier_scores, linear_svm_train, logreg_train
from aeminer.linalg import Rng
from aeminer.synthetic import write_bank_marketing_csv

path = write_bank_marketing_csv(Path(tempfile.mkdtemp()) / "bank.csv", 10000, seed=3)
table = load_csv(path, load_schema("builtin:bank-additional-full"))
split = stratified_split(table.n_rows, table.target, 0.2, Rng.derive(3, "split"))
pipe = PreprocessPipeline(table.schema).fit(table, split.train)
x_tr, x_te = pipe.transform(table, split.train), pipe.transform(table, split.test)
y_tr, y_te = table.target[split.train], table.target[split.test]
print(f"positive rate: train {y_tr.mean():.3f}, test {y_te.mean():.3f}")

ae = build_model(x_tr.shape[1], latent_dim=8, seed=0)
train(ae, x_tr, config=TrainConfig(seed=0))
pca = pca_fit(x_tr, 8)

features = {
    "raw (63)": (x_tr, x_te),
    "PCA (8)": (pca.transform(x_tr), pca.transform(x_te)),
    "AE (8)": (latent_features(ae, x_tr), latent_features(ae, x_te)),
}
for name, (f_tr, f_te) in features.items():
    lr = classifier_scores(logreg_train(f_tr, y_tr), f_te, y_te)
    svm = classifier_scores(linear_svm_train(f_tr, y_tr), f_te, y_te)
    print(f"{name:>9}: logreg acc {lr['accuracy']:.3f} AUC {lr['roc_auc']:.3f} | "
          f"svm acc {svm['accuracy']:.3f} AUC {svm['roc_auc']:.3f}")

# response rate per latent cluster
clusters = kmeans(latent_features(ae, x_tr), 5, seed=0)
for c in range(5):
    members = clusters.labels == c
    print(f"cluster {c}: {members.sum():5d} clients, subscription rate {y_tr[members].mean():.3f}")
