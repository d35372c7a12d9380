"""Autoencoder-based feature extraction, dimensionality reduction and
anomaly detection for tabular data, with linear and t-SNE baselines."""

__version__ = "0.1.0"
