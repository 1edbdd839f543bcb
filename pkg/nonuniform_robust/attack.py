"""Projections, PGD and FGSM under uniform and non-uniform constraints."""

from __future__ import annotations

import concurrent.futures
import logging
from dataclasses import dataclass
from typing import Literal, Optional

import numpy as np

from .errors import DimensionMismatch
from .net import MlpModel, forward, loss_and_grads
from .omega import NormOrder, OmegaTransform, omega_norm

logger = logging.getLogger(__name__)

AttackModeKind = Literal["uniform", "nonuniform", "combo"]
InitKind = Literal["zero", "random"]

DEFAULT_WORKERS = 8


def parse_norm_order(value) -> float:
    """Accept ``2``, ``"2"``, ``inf``, ``"inf"``."""
    if isinstance(value, str):
        value = value.strip().lower()
        if value in ("inf", "infinity", "linf"):
            return np.inf
    p = float(value)
    if p not in (2.0, np.inf):
        raise ValueError(f"Only p=2 and p=inf are supported, got {value}")
    return p


@dataclass(frozen=True)
class PerturbationBudget:
    epsilon: float
    p: NormOrder = 2.0

    def __post_init__(self) -> None:
        if not np.isfinite(self.epsilon) or self.epsilon <= 0:
            raise ValueError(f"epsilon must be finite and positive, got {self.epsilon}")
        object.__setattr__(self, "p", parse_norm_order(self.p))


@dataclass(frozen=True)
class AttackConfig:
    """
    PGD schedule and constraint mode.

    ``step_size=None`` means ``epsilon / 4``. ``combo`` enforces the omega
    constraint first and then ``||delta||_2 <= epsilon_uniform``.
    """

    steps: int = 10
    step_size: Optional[float] = None
    init: InitKind = "zero"
    seed: int = 0
    mode: AttackModeKind = "uniform"
    omega: Optional[OmegaTransform] = None
    epsilon_uniform: Optional[float] = None

    def __post_init__(self) -> None:
        if self.steps < 1:
            raise ValueError("steps must be at least 1")
        if self.step_size is not None and self.step_size <= 0:
            raise ValueError("step_size must be positive")
        if self.init not in ("zero", "random"):
            raise ValueError(f"Unknown init: {self.init}")
        if self.mode in ("nonuniform", "combo") and self.omega is None:
            raise ValueError(f"{self.mode} mode needs an omega transform")
        if self.mode == "combo" and (self.epsilon_uniform is None or self.epsilon_uniform <= 0):
            raise ValueError("combo mode needs a positive epsilon_uniform")
        if self.mode not in ("uniform", "nonuniform", "combo"):
            raise ValueError(f"Unknown attack mode: {self.mode}")


# ── Projections ──────────────────────────────────────────────────────────


def _radial(delta: np.ndarray, norms, epsilon: float) -> np.ndarray:
    norms = np.asarray(norms, dtype=np.float64)
    scale = epsilon / np.maximum(epsilon, norms)
    return delta * scale[..., None] if delta.ndim > 1 else delta * scale


def project_uniform(delta, budget: PerturbationBudget) -> np.ndarray:
    """``eps * delta / max(eps, ||delta||_p)`` along the last axis."""
    delta = np.asarray(delta, dtype=np.float64)
    return _radial(delta, np.linalg.norm(delta, ord=budget.p, axis=-1), budget.epsilon)


def project_nonuniform(delta, omega: OmegaTransform, budget: PerturbationBudget) -> np.ndarray:
    """
    ``eps * delta / ||Omega delta||_p`` when outside the set, unchanged otherwise.

    This is a radial rescaling, not the Euclidean nearest point of the
    ellipsoid. A mask omega first zeroes immutable coordinates.
    """
    if omega.kind == "identity":
        return project_uniform(delta, budget)
    delta = omega.restrict(delta)
    return _radial(delta, omega_norm(omega, delta, budget.p), budget.epsilon)


def project(delta, budget: PerturbationBudget, cfg: AttackConfig) -> np.ndarray:
    """Projection for the configured mode."""
    if cfg.mode == "uniform":
        return project_uniform(delta, budget)
    delta = project_nonuniform(delta, cfg.omega, budget)
    if cfg.mode == "combo":
        delta = project_uniform(delta, PerturbationBudget(cfg.epsilon_uniform, 2.0))
    return delta


def is_feasible(delta, budget: PerturbationBudget, cfg: AttackConfig, rtol: float = 1e-12) -> np.ndarray:
    slack = budget.epsilon * (1 + rtol)
    if cfg.mode == "uniform":
        return np.linalg.norm(delta, ord=budget.p, axis=-1) <= slack
    ok = np.asarray(omega_norm(cfg.omega, delta, budget.p)) <= slack
    if cfg.omega.kind == "mask":
        ok &= np.all(np.asarray(delta)[..., ~cfg.omega.mutable] == 0, axis=-1)
    if cfg.mode == "combo":
        ok &= np.linalg.norm(delta, axis=-1) <= cfg.epsilon_uniform * (1 + rtol)
    return ok


# ── Attacks ──────────────────────────────────────────────────────────────


def _random_init(shape: tuple, budget: PerturbationBudget, cfg: AttackConfig, rng: np.random.Generator) -> np.ndarray:
    direction = rng.standard_normal(shape)
    direction /= np.maximum(np.linalg.norm(direction, axis=-1, keepdims=True), 1e-300)
    radius = budget.epsilon * rng.random(shape[:-1])[..., None]
    return project(direction * radius, budget, cfg)


def per_sample_loss(m: MlpModel, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Cross-entropy of each row against its label."""
    _, probs = forward(m, np.atleast_2d(x))
    n = probs.shape[0]
    return -np.log(np.maximum(probs[np.arange(n), np.broadcast_to(y, (n,))], 1e-300))


def pgd(
    m: MlpModel,
    x,
    y,
    budget: PerturbationBudget,
    cfg: AttackConfig,
    loss_trace: Optional[list] = None,
) -> tuple[np.ndarray, np.ndarray]:
    """
    Projected gradient ascent on the cross-entropy loss.

    ``delta <- project(delta + alpha * g / ||g||_p)`` for ``cfg.steps`` steps.
    Rows whose gradient vanishes stop early and keep their current delta.
    Works on one sample ``(d,)`` or a batch ``(n, d)``; dropout is never
    applied.

    Returns
    -------
    tuple
        ``(delta, adv_loss)`` with per-sample adversarial loss.
    """
    m = m.without_dropout()
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != m.input_dim:
        raise DimensionMismatch(m.input_dim, x.shape[-1])
    single = x.ndim == 1
    xb = np.atleast_2d(x)
    yb = np.broadcast_to(np.atleast_1d(np.asarray(y, dtype=np.int64)), (xb.shape[0],))
    alpha = cfg.step_size if cfg.step_size is not None else budget.epsilon / 4.0

    if cfg.init == "random":
        delta = _random_init(xb.shape, budget, cfg, np.random.default_rng(cfg.seed))
    else:
        delta = np.zeros_like(xb)
    active = np.ones(xb.shape[0], dtype=bool)

    for _ in range(cfg.steps):
        if loss_trace is not None:
            loss_trace.append(per_sample_loss(m, xb + delta, yb))
        _, _, grad = loss_and_grads(m, xb + delta, yb)
        if cfg.omega is not None and cfg.omega.kind == "mask":
            grad = cfg.omega.restrict(grad)
        gnorm = np.linalg.norm(grad, ord=budget.p, axis=1)
        active &= gnorm > 0
        if not active.any():
            break
        step = np.zeros_like(grad)
        step[active] = grad[active] / gnorm[active, None]
        delta = np.where(active[:, None], project(delta + alpha * step, budget, cfg), delta)

    adv_loss = per_sample_loss(m, xb + delta, yb)
    if loss_trace is not None:
        loss_trace.append(adv_loss)
    if single:
        return delta[0], adv_loss[0]
    return delta, adv_loss


def fgsm(m: MlpModel, x, y, budget: PerturbationBudget) -> np.ndarray:
    """
    Single gradient step to the budget boundary.

    ``p=inf`` gives ``eps * sign(g)``; ``p=2`` gives ``eps * g / ||g||_2``.
    A zero gradient yields a zero perturbation.
    """
    m = m.without_dropout()
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != m.input_dim:
        raise DimensionMismatch(m.input_dim, x.shape[-1])
    _, _, grad = loss_and_grads(m, x, y)
    if budget.p == np.inf:
        return budget.epsilon * np.sign(grad)
    gnorm = np.linalg.norm(grad, axis=-1, keepdims=True)
    return np.where(gnorm > 0, budget.epsilon * grad / np.where(gnorm > 0, gnorm, 1.0), 0.0)


def attack_batch(
    m: MlpModel,
    x: np.ndarray,
    y: np.ndarray,
    budget: PerturbationBudget,
    cfg: AttackConfig,
    workers: int = DEFAULT_WORKERS,
    chunk_size: int = 256,
) -> tuple[np.ndarray, np.ndarray]:
    """
    PGD over many samples, fanned out across a thread pool.

    Each chunk gets its own seed spawned from ``cfg.seed``, so the result does
    not depend on the worker count.
    """
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    y = np.asarray(y, dtype=np.int64)
    starts = list(range(0, x.shape[0], chunk_size))
    seeds = np.random.SeedSequence(cfg.seed).generate_state(max(len(starts), 1))

    def run_chunk(k: int) -> tuple[np.ndarray, np.ndarray]:
        s = starts[k]
        chunk_cfg = AttackConfig(
            steps=cfg.steps, step_size=cfg.step_size, init=cfg.init, seed=int(seeds[k]),
            mode=cfg.mode, omega=cfg.omega, epsilon_uniform=cfg.epsilon_uniform,
        )
        return pgd(m, x[s:s + chunk_size], y[s:s + chunk_size], budget, chunk_cfg)

    if not starts:
        return np.zeros_like(x), np.zeros(0)
    with concurrent.futures.ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        parts = list(pool.map(run_chunk, range(len(starts))))
    logger.debug("attacked %d samples in %d chunks", x.shape[0], len(starts))
    return np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts])
