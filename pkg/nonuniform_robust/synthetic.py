"""Synthetic datasets with anisotropic class geometry."""

from __future__ import annotations

from typing import Optional

import numpy as np

from .data import Dataset


def make_toy(n: int = 1000, seed: int = 0, spread=(0.5, 0.8), gap=(1.0, 1.6)) -> Dataset:
    """
    Two 2-D classes whose separation differs per axis.

    Class 1 sits at ``+gap/2`` and class 0 at ``-gap/2`` with per-axis
    standard deviation ``spread``, so the room for a label-preserving
    perturbation is wider along the second axis.
    """
    rng = np.random.default_rng(seed)
    labels = np.arange(n) % 2
    rng.shuffle(labels)
    centers = np.where(labels[:, None] == 1, 0.5, -0.5) * np.asarray(gap)
    features = centers + rng.standard_normal((n, 2)) * np.asarray(spread) * 0.5
    return Dataset(features, labels, ("x0", "x1"))


def correlated_covariance(dim: int, rho: float = 0.6, scales: Optional[np.ndarray] = None) -> np.ndarray:
    """AR(1)-style covariance ``rho^|i-j|`` scaled per feature."""
    idx = np.arange(dim)
    corr = rho ** np.abs(idx[:, None] - idx[None, :])
    s = np.linspace(0.5, 2.0, dim) if scales is None else np.asarray(scales, dtype=np.float64)
    return corr * np.outer(s, s)


def make_correlated_blobs(
    n: int = 2000,
    dim: int = 6,
    seed: int = 0,
    separation: float = 2.0,
    rho: float = 0.6,
) -> Dataset:
    """
    Two Gaussian blobs sharing one correlated covariance.

    The means differ by ``separation`` along the first feature only.
    """
    rng = np.random.default_rng(seed)
    cov = correlated_covariance(dim, rho)
    labels = np.arange(n) % 2
    rng.shuffle(labels)
    shift = np.zeros(dim)
    shift[0] = separation / 2.0
    means = np.where(labels[:, None] == 1, shift, -shift)
    features = means + rng.multivariate_normal(np.zeros(dim), cov, size=n)
    return Dataset(features, labels, tuple(f"f{i}" for i in range(dim)))
