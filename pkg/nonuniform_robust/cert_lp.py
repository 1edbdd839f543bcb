"""Dual-network certification of ReLU classifiers under ``||Omega delta||_p <= eps``.

The ReLU relaxation is fixed to the slope ``u / (u - l)`` on spanning
neurons, so the dual problem collapses into one backward pass through a
linear network. Running that pass with ``c = +-I`` yields per-neuron
activation bounds layer by layer; running it with ``c = e_true - e_target``
yields the certificate.
"""

from __future__ import annotations

import concurrent.futures
import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import DimensionMismatch, DomainError
from .net import MlpModel, forward
from .omega import NormOrder, OmegaTransform, dual_order, inverse_norm

logger = logging.getLogger(__name__)

TAG_NEGATIVE = -1
TAG_SPANNING = 0
TAG_POSITIVE = 1


@dataclass
class LayerBounds:
    """
    Pre-activation intervals ``lower[t] <= z_t <= upper[t]`` for the output
    of every layer ``t``, hidden and final.
    """

    lower: list[np.ndarray] = field(default_factory=list)
    upper: list[np.ndarray] = field(default_factory=list)

    def tags(self, t: int) -> np.ndarray:
        """Activation set per neuron: -1 inactive, +1 active, 0 spanning."""
        lo, hi = self.lower[t], self.upper[t]
        return np.where(lo >= 0, TAG_POSITIVE, np.where(hi <= 0, TAG_NEGATIVE, TAG_SPANNING))

    def slopes(self, t: int) -> np.ndarray:
        lo, hi = self.lower[t], self.upper[t]
        spanning = (lo < 0) & (hi > 0)
        width = np.where(spanning, hi - lo, 1.0)
        return np.where(lo >= 0, 1.0, np.where(spanning, hi / width, 0.0))


@dataclass
class CertificationReport:
    index: int
    true_class: int
    certified: bool
    margin: float
    objectives: dict[int, float]
    epsilon: float
    omega_kind: str


def _check(m: MlpModel, x, omega: OmegaTransform, epsilon: float) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (m.input_dim,):
        raise DimensionMismatch(m.input_dim, x.shape[-1] if x.ndim else 0)
    if omega.dim != m.input_dim:
        raise DimensionMismatch(m.input_dim, omega.dim, "omega")
    if epsilon < 0 or not np.isfinite(epsilon):
        raise DomainError(f"epsilon must be finite and non-negative, got {epsilon}")
    return x


def _dual_pass(
    m: MlpModel,
    x: np.ndarray,
    bounds: LayerBounds,
    omega: OmegaTransform,
    epsilon: float,
    q: NormOrder,
    c: np.ndarray,
    top: int,
) -> np.ndarray:
    """
    Lower bounds on ``c @ z_top`` for every row of ``c``.

    Needs ``bounds`` for every hidden layer below ``top``.
    """
    nu = -np.atleast_2d(c)
    objective = np.zeros(nu.shape[0])
    for t in range(top, -1, -1):
        objective -= nu @ m.biases[t]
        nu_hat = nu @ m.weights[t]
        if t == 0:
            objective -= nu_hat @ x + epsilon * np.atleast_1d(inverse_norm(omega, nu_hat, q))
            break
        lo = bounds.lower[t - 1]
        nu = nu_hat * bounds.slopes(t - 1)
        spanning = (lo < 0) & (bounds.upper[t - 1] > 0)
        objective += np.maximum(nu[:, spanning], 0.0) @ lo[spanning]
    return objective


def activation_bounds(
    m: MlpModel,
    x,
    omega: OmegaTransform,
    epsilon: float,
    p: NormOrder = 2.0,
) -> LayerBounds:
    """
    Sound pre-activation bounds for every layer.

    The first layer gets ``W x + b -/+ eps * ||Omega^{-1} W^T e_j||_q``; each
    later layer is bounded by the dual pass with ``c = I`` (lower) and
    ``c = -I`` (upper) through the bounds already computed.

    Raises
    ------
    DimensionMismatch
        If ``x`` or ``omega`` do not match the input width.
    """
    m = m.without_dropout()
    x = _check(m, x, omega, epsilon)
    q = dual_order(p)
    bounds = LayerBounds()
    for t in range(m.num_layers):
        eye = np.eye(m.layer_dims[t + 1])
        lower = _dual_pass(m, x, bounds, omega, epsilon, q, eye, t)
        upper = -_dual_pass(m, x, bounds, omega, epsilon, q, -eye, t)
        # a pair computed from the same relaxation can cross only by rounding
        upper = np.maximum(upper, lower)
        bounds.lower.append(lower)
        bounds.upper.append(upper)
        if t < m.num_layers - 1:
            logger.debug(
                "layer %d: %d spanning of %d, mean width %.4g",
                t + 1, int(np.sum(bounds.tags(t) == TAG_SPANNING)), lower.size, float(np.mean(upper - lower)),
            )
    return bounds


def dual_objective(
    m: MlpModel,
    x,
    bounds: LayerBounds,
    omega: OmegaTransform,
    epsilon: float,
    c,
    p: NormOrder = 2.0,
):
    """
    Lower bound on ``min c @ logits(x + delta)`` over the relaxed feasible set.

    ``c`` may be one vector or a matrix of stacked objectives; the result is a
    float or an array accordingly. ``bounds`` must hold on the feasible set;
    bounds computed for any set containing it qualify. With ``bounds`` fixed
    the result is non-increasing in ``epsilon``.
    """
    m = m.without_dropout()
    x = _check(m, x, omega, epsilon)
    c = np.asarray(c, dtype=np.float64)
    if c.shape[-1] != m.num_classes:
        raise DimensionMismatch(m.num_classes, c.shape[-1], "objective")
    if len(bounds.lower) < m.num_layers - 1:
        raise DimensionMismatch(m.num_layers - 1, len(bounds.lower), "layer bounds")
    values = _dual_pass(m, x, bounds, omega, epsilon, dual_order(p), c, m.num_layers - 1)
    return float(values[0]) if c.ndim == 1 else values


def _objective_rows(m: MlpModel, true_class: int) -> tuple[list[int], np.ndarray]:
    if not 0 <= true_class < m.num_classes:
        raise DomainError(f"class {true_class} outside [0, {m.num_classes})")
    targets = [k for k in range(m.num_classes) if k != true_class]
    c = np.zeros((len(targets), m.num_classes))
    c[:, true_class] = 1.0
    c[np.arange(len(targets)), targets] = -1.0
    return targets, c


def _report(index, true_class, targets, values, epsilon, omega) -> CertificationReport:
    objectives = {k: float(v) for k, v in zip(targets, values)}
    margin = float(np.min(values))
    return CertificationReport(int(index), int(true_class), margin > 0, margin, objectives, float(epsilon), omega.kind)


def certify(
    m: MlpModel,
    x,
    true_class: int,
    omega: OmegaTransform,
    epsilon: float,
    p: NormOrder = 2.0,
    index: int = 0,
    extra_bounds: Sequence[LayerBounds] = (),
) -> CertificationReport:
    """
    Certify one sample against every other class.

    Dropout is stripped. The sample is certified iff every dual objective
    ``e_true - e_target`` is strictly positive; the margin is the smallest.

    ``extra_bounds`` holds activation bounds that are valid on a superset of
    the feasible set, such as bounds for a larger budget or for an enclosing
    plain ball. The dual is evaluated with each of them as well and the best
    value per target is kept; every one of them is a lower bound.
    """
    m = m.without_dropout()
    x = _check(m, x, omega, epsilon)
    targets, c = _objective_rows(m, true_class)

    if epsilon == 0:
        logits, _ = forward(m, x)
        values = c @ logits
    else:
        bounds = activation_bounds(m, x, omega, epsilon, p)
        values = dual_objective(m, x, bounds, omega, epsilon, c, p)
        for extra in extra_bounds:
            values = np.maximum(values, dual_objective(m, x, extra, omega, epsilon, c, p))
    return _report(index, true_class, targets, values, epsilon, omega)


def certify_grid(
    m: MlpModel,
    x,
    true_class: int,
    omega: OmegaTransform,
    epsilons: Sequence[float],
    p: NormOrder = 2.0,
    index: int = 0,
) -> list[CertificationReport]:
    """
    Certify one sample at several budgets with objectives non-increasing in epsilon.

    Bounds recomputed at each budget with the fixed ``u / (u - l)`` slope can
    give a larger objective at a larger budget. Bounds for a budget are valid
    for every smaller one, so each objective is the best dual over the bounds
    of all budgets at least as large. Reports follow the order of ``epsilons``.
    """
    m = m.without_dropout()
    eps = np.asarray(epsilons, dtype=np.float64)
    if eps.ndim != 1 or eps.size == 0:
        raise DomainError("epsilons must be a non-empty list")
    for e in eps:
        x = _check(m, x, omega, float(e))
    targets, c = _objective_rows(m, true_class)

    order = np.argsort(eps, kind="stable")
    ladder = eps[order]
    bounds = [activation_bounds(m, x, omega, e, p) if e > 0 else None for e in ladder]
    values = np.empty((ladder.size, len(targets)))
    for j, e in enumerate(ladder):
        if e == 0:
            logits, _ = forward(m, x)
            values[j] = c @ logits
            continue
        values[j] = np.max([dual_objective(m, x, b, omega, e, c, p) for b in bounds[j:]], axis=0)
    # rounding can still tie-break upwards between neighbouring budgets
    values = np.maximum.accumulate(values[::-1], axis=0)[::-1]

    reports: list[Optional[CertificationReport]] = [None] * ladder.size
    for j, k in enumerate(order):
        reports[k] = _report(index, true_class, targets, values[j], ladder[j], omega)
    return reports  # type: ignore[return-value]


def certify_batch(
    m: MlpModel,
    x: np.ndarray,
    y: np.ndarray,
    omega: OmegaTransform,
    epsilon: float,
    p: NormOrder = 2.0,
    workers: int = 8,
    indices: Optional[Sequence[int]] = None,
    enclosing: Optional[tuple[OmegaTransform, float]] = None,
) -> list[CertificationReport]:
    """
    Certify every row of ``x`` in a thread pool; reports keep input order.

    ``enclosing`` names an ``(omega, epsilon)`` ball that contains the
    certified set; its activation bounds are passed to ``certify`` as extra
    bounds. See ``omega.inscribed_epsilon`` for a budget that guarantees the
    containment in a plain ball.
    """
    m = m.without_dropout()
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    y = np.asarray(y, dtype=np.int64)
    idx = list(indices) if indices is not None else list(range(x.shape[0]))

    def run(i: int) -> CertificationReport:
        extra = ()
        if enclosing is not None and epsilon > 0:
            extra = (activation_bounds(m, x[i], enclosing[0], enclosing[1], p),)
        return certify(m, x[i], int(y[i]), omega, epsilon, p, index=idx[i], extra_bounds=extra)

    with concurrent.futures.ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        return list(pool.map(run, range(x.shape[0])))


def certify_grid_batch(
    m: MlpModel,
    x: np.ndarray,
    y: np.ndarray,
    omega: OmegaTransform,
    epsilons: Sequence[float],
    p: NormOrder = 2.0,
    workers: int = 8,
    indices: Optional[Sequence[int]] = None,
) -> dict[float, list[CertificationReport]]:
    """``certify_grid`` for every row, regrouped per epsilon."""
    m = m.without_dropout()
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    y = np.asarray(y, dtype=np.int64)
    idx = list(indices) if indices is not None else list(range(x.shape[0]))

    def run(i: int) -> list[CertificationReport]:
        return certify_grid(m, x[i], int(y[i]), omega, epsilons, p, index=idx[i])

    with concurrent.futures.ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        per_sample = list(pool.map(run, range(x.shape[0])))
    return {float(e): [reports[j] for reports in per_sample] for j, e in enumerate(epsilons)}


def summarize_certification(reports: Sequence[CertificationReport]) -> tuple[float, float]:
    """Certified fraction and mean margin."""
    if not reports:
        return 0.0, 0.0
    certified = np.array([r.certified for r in reports], dtype=bool)
    margins = np.array([r.margin for r in reports])
    return float(certified.mean()), float(margins.mean())
