"""Gaussian plausibility of perturbations and MD-square statistics.

A perturbation ``delta`` is scored by the zero-mean Gaussian density of the
target class, ``gamma = exp(C - MD(delta)^2 / 2)``, where
``C = -log((2 pi)^(d/2) |Sigma|^(1/2))``. Everything is computed in log space;
``gamma`` itself underflows to 0 for large ``d``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import linalg

from . import numerics
from .errors import DimensionMismatch, EmptyInput

logger = logging.getLogger(__name__)

HISTOGRAM_BINS = 50
BOUND_RTOL = 1e-9


@dataclass(frozen=True, eq=False)
class GaussianModel:
    covariance: np.ndarray
    cholesky_factor: np.ndarray
    log_normalizer: float

    @classmethod
    def from_covariance(cls, covariance, ridge: float = 0.0) -> "GaussianModel":
        """
        Factor ``covariance + ridge * I``.

        Raises
        ------
        NotPositiveDefinite
            If the shifted covariance is not SPD.
        """
        cov = numerics.as_matrix(covariance, "covariance")
        cov = cov + ridge * np.eye(cov.shape[0])
        chol = numerics.cholesky(cov)
        d = cov.shape[0]
        log_det = 2.0 * float(np.sum(np.log(np.diag(chol))))
        c = -0.5 * d * np.log(2.0 * np.pi) - 0.5 * log_det
        return cls(cov, chol, float(c))

    @property
    def dim(self) -> int:
        return self.covariance.shape[0]

    def md_square(self, delta) -> np.ndarray:
        """``delta^T Sigma^{-1} delta`` along the last axis."""
        delta = np.asarray(delta, dtype=np.float64)
        if delta.shape[-1] != self.dim:
            raise DimensionMismatch(self.dim, delta.shape[-1], "perturbation")
        white = linalg.solve_triangular(self.cholesky_factor, np.atleast_2d(delta).T, lower=True)
        md2 = np.sum(white * white, axis=0)
        return md2[0] if delta.ndim == 1 else md2


@dataclass(frozen=True)
class Consistency:
    log_gamma: np.ndarray
    gamma: np.ndarray
    md_square: np.ndarray


def gamma_consistency(g: GaussianModel, delta) -> Consistency:
    """
    Gaussian density of ``delta`` under ``N(0, Sigma)``.

    Accepts one perturbation ``(d,)`` or a batch ``(n, d)``; ``log_gamma`` is
    exact, ``gamma`` may be 0 for high dimensions.
    """
    md2 = g.md_square(delta)
    log_gamma = g.log_normalizer - 0.5 * md2
    return Consistency(log_gamma, np.exp(log_gamma), md2)


def md_from_gamma(g: GaussianModel, log_gamma) -> np.ndarray:
    """Recover ``MD = sqrt(2C - 2 log gamma)``, clamped at zero."""
    return np.sqrt(np.maximum(0.0, 2.0 * g.log_normalizer - 2.0 * np.asarray(log_gamma)))


def consistency_bound_check(g: GaussianModel, delta, epsilon: float) -> bool:
    """True iff ``MD(delta) <= epsilon`` (up to a relative 1e-9)."""
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    md = md_from_gamma(g, gamma_consistency(g, delta).log_gamma)
    return bool(np.all(md <= epsilon * (1.0 + BOUND_RTOL)))


@dataclass
class MdSquareStats:
    mean: float
    mean_log_gamma: float
    bin_edges: np.ndarray
    counts: np.ndarray

    def histogram_rows(self) -> list[dict]:
        return [
            {"bin_low": float(lo), "bin_high": float(hi), "count": int(c)}
            for lo, hi, c in zip(self.bin_edges[:-1], self.bin_edges[1:], self.counts)
        ]


def md_square_stats(g: GaussianModel, deltas: Sequence, bins: int = HISTOGRAM_BINS) -> MdSquareStats:
    """
    Mean MD square and a fixed-width histogram over ``[0, max]``.

    Raises
    ------
    EmptyInput
        If ``deltas`` is empty.
    """
    arr = np.asarray(deltas, dtype=np.float64)
    if arr.size == 0:
        raise EmptyInput("No perturbations to summarize")
    arr = np.atleast_2d(arr)
    c = gamma_consistency(g, arr)
    md2 = np.atleast_1d(c.md_square)
    top = float(md2.max())
    counts, edges = np.histogram(md2, bins=bins, range=(0.0, top if top > 0 else 1.0))
    logger.debug("md-square over %d perturbations: mean %.4f max %.4f", md2.size, md2.mean(), top)
    return MdSquareStats(float(md2.mean()), float(np.mean(c.log_gamma)), edges, counts)
