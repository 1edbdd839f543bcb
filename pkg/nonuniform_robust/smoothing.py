"""Randomized smoothing with anisotropic Gaussian noise.

The smoothed classifier predicts the majority class of ``f(x + n)`` with
``n ~ N(0, Sigma)``. When the lower confidence bound ``p`` on the majority
probability exceeds 1/2, the prediction is constant over the Mahalanobis ball
``sqrt(delta^T Sigma^{-1} delta) <= chi_d^{-1}(p) - chi_d^{-1}(1/2)``.
"""

from __future__ import annotations

import concurrent.futures
import logging
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
from scipy.stats import norm
from statsmodels.stats.proportion import proportion_confint

from . import numerics
from .errors import DimensionMismatch, DomainError, UsageError
from .net import MlpModel, predict
from .omega import OmegaTransform

logger = logging.getLogger(__name__)

# to abstain, smoothed_predict returns this class
ABSTAIN = -1

RADIUS_P_CAP = 1.0 - 1e-12


@dataclass(frozen=True, eq=False)
class SmoothingConfig:
    """
    Noise covariance and the two-phase sampling schedule.

    ``n0`` samples pick the candidate class, ``n`` fresh samples bound its
    probability with a one-sided Clopper-Pearson interval at level ``alpha``.
    """

    covariance: np.ndarray
    n0: int = 100
    n: int = 10_000
    alpha: float = 0.001
    seed: int = 0
    batch_size: int = 1000
    factor: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        if self.n0 < 1 or self.n < 1:
            raise ValueError("n0 and n must be at least 1")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        cov = numerics.as_matrix(self.covariance, "noise covariance")
        object.__setattr__(self, "covariance", cov)
        object.__setattr__(self, "factor", numerics.cholesky(cov))

    @property
    def dim(self) -> int:
        return self.covariance.shape[0]


@dataclass
class SmoothingResult:
    prediction: int
    p_a_lower: float
    radius: float
    count: int = 0
    samples: int = 0

    @property
    def abstained(self) -> bool:
        return self.prediction == ABSTAIN


@dataclass(frozen=True)
class LinearClassifier:
    """``1`` when ``w . x + b > 0`` else ``0``."""

    w: np.ndarray
    b: float = 0.0

    def predict(self, x) -> np.ndarray:
        return (np.asarray(x, dtype=np.float64) @ np.asarray(self.w) + self.b > 0).astype(np.int64)


BaseClassifier = Union[MlpModel, LinearClassifier]


# ── Noise covariances ────────────────────────────────────────────────────


def noise_covariance_isotropic(sigma: float, dim: int) -> np.ndarray:
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    return sigma**2 * np.eye(dim)


def noise_covariance_from_omega(omega: OmegaTransform, sigma: float = 1.0) -> np.ndarray:
    """
    ``sigma^2 (Omega^T Omega)^{-1}``: noise shaped like the omega ball.

    For a Mahalanobis omega this is ``sigma^2`` times the (ridged) covariance.

    Raises
    ------
    NonInvertibleOmega
        For a mask omega.
    """
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    inv_t = omega.apply_inverse(np.eye(omega.dim))
    cov = sigma**2 * (inv_t.T @ inv_t)
    return 0.5 * (cov + cov.T)


# ── Certification ────────────────────────────────────────────────────────


def _base_predict(base: BaseClassifier, x: np.ndarray) -> np.ndarray:
    if isinstance(base, LinearClassifier):
        return base.predict(x)
    return predict(base.without_dropout(), x)


def _count_class(base: BaseClassifier, x: np.ndarray, cfg: SmoothingConfig, num: int, rng: np.random.Generator) -> np.ndarray:
    counts = np.zeros(2, dtype=np.int64)
    remaining = num
    while remaining > 0:
        size = min(cfg.batch_size, remaining)
        remaining -= size
        noise = rng.standard_normal((size, cfg.dim)) @ cfg.factor.T
        labels = _base_predict(base, x + noise)
        if labels.size and (labels.min() < 0 or labels.max() > 1):
            raise UsageError(
                "Randomized smoothing certifies binary classifiers only",
                suggestion="Use a model with exactly two output classes.",
            )
        counts += np.bincount(labels, minlength=2)
    return counts


def lower_confidence_bound(count: int, n: int, alpha: float) -> float:
    """One-sided ``(1 - alpha)`` Clopper-Pearson lower bound."""
    return float(proportion_confint(count, n, alpha=2 * alpha, method="beta")[0])


def certified_radius(p_a_lower: float, dof: int) -> float:
    """
    ``chi_quantile(dof, p) - chi_quantile(dof, 0.5)``.

    ``p`` is capped at ``1 - 1e-12`` so a unanimous vote gives a finite radius.

    Raises
    ------
    DomainError
        If ``p_a_lower <= 0.5`` or ``> 1``.
    """
    if not 0.5 < p_a_lower <= 1.0:
        raise DomainError(f"p_a_lower must lie in (0.5, 1], got {p_a_lower}")
    p = min(p_a_lower, RADIUS_P_CAP)
    return numerics.chi_quantile(dof, p) - numerics.chi_quantile(dof, 0.5)


def smoothed_predict(
    base: BaseClassifier,
    x,
    cfg: SmoothingConfig,
    rng: Optional[np.random.Generator] = None,
) -> SmoothingResult:
    """
    Two-phase Monte Carlo certification of one input.

    Returns ``ABSTAIN`` with radius 0 when the lower bound does not exceed 1/2.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (cfg.dim,):
        raise DimensionMismatch(cfg.dim, x.shape[-1] if x.ndim else 0, "smoothing input")
    if isinstance(base, MlpModel) and base.input_dim != cfg.dim:
        raise DimensionMismatch(base.input_dim, cfg.dim, "noise covariance")
    if isinstance(base, MlpModel) and base.num_classes != 2:
        raise UsageError(
            f"Randomized smoothing certifies binary classifiers only, model has {base.num_classes} classes",
            suggestion="Use a model with exactly two output classes.",
        )
    rng = rng if rng is not None else np.random.default_rng(cfg.seed)

    selection = _count_class(base, x, cfg, cfg.n0, rng)
    candidate = int(np.argmax(selection))
    estimation = _count_class(base, x, cfg, cfg.n, rng)
    count = int(estimation[candidate])
    p_lower = lower_confidence_bound(count, cfg.n, cfg.alpha)
    if p_lower <= 0.5:
        return SmoothingResult(ABSTAIN, p_lower, 0.0, count, cfg.n)
    return SmoothingResult(candidate, p_lower, certified_radius(p_lower, cfg.dim), count, cfg.n)


def certify_smoothed_batch(
    base: BaseClassifier,
    x: np.ndarray,
    cfg: SmoothingConfig,
    workers: int = 8,
) -> list[SmoothingResult]:
    """Certify every row of ``x``; each row draws from its own seeded stream."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    seeds = np.random.SeedSequence(cfg.seed).spawn(x.shape[0])

    def run(i: int) -> SmoothingResult:
        return smoothed_predict(base, x[i], cfg, np.random.default_rng(seeds[i]))

    with concurrent.futures.ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        results = list(pool.map(run, range(x.shape[0])))
    logger.debug("smoothed %d inputs, %d abstained", len(results), sum(r.abstained for r in results))
    return results


# ── Linear witnesses ─────────────────────────────────────────────────────


def linear_p_a(clf: LinearClassifier, x, covariance) -> tuple[int, float]:
    """Majority class of ``clf(x + n)`` and its exact probability."""
    w = np.asarray(clf.w, dtype=np.float64)
    scale = float(np.sqrt(w @ numerics.as_matrix(covariance) @ w))
    if scale == 0:
        raise DomainError("classifier weights vanish under the noise covariance")
    p_one = float(norm.cdf((w @ np.asarray(x, dtype=np.float64) + clf.b) / scale))
    return (1, p_one) if p_one >= 0.5 else (0, 1.0 - p_one)


def worst_direction(clf: LinearClassifier, x, covariance) -> np.ndarray:
    """
    Unit-Mahalanobis shift that moves ``x`` fastest toward the decision
    boundary: ``-/+ Sigma w / sqrt(w^T Sigma w)``.
    """
    cov = numerics.as_matrix(covariance)
    w = np.asarray(clf.w, dtype=np.float64)
    direction = cov @ w / np.sqrt(w @ cov @ w)
    side = 1.0 if w @ np.asarray(x, dtype=np.float64) + clf.b > 0 else -1.0
    return -side * direction


def verify_theorem_mc(
    clf: LinearClassifier,
    x,
    covariance,
    delta,
    samples: int,
    seed: int,
) -> bool:
    """
    Monte Carlo check that the majority class at ``x`` still wins at ``x + delta``.

    Returns whether the estimated probability of that class exceeds 1/2.
    """
    x = np.asarray(x, dtype=np.float64)
    delta = np.asarray(delta, dtype=np.float64)
    cov = numerics.as_matrix(covariance)
    if delta.shape != x.shape or x.shape != (cov.shape[0],):
        raise DimensionMismatch(cov.shape[0], delta.shape[-1], "shift")
    label, _ = linear_p_a(clf, x, cov)
    cfg = SmoothingConfig(cov, n0=1, n=samples, seed=seed, batch_size=min(samples, 100_000))
    counts = _count_class(clf, x + delta, cfg, samples, np.random.default_rng(seed))
    return bool(counts[label] / samples > 0.5)
