"""Adversarial training, budget matching and defense evaluation."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .attack import AttackConfig, PerturbationBudget, attack_batch, fgsm, per_sample_loss, pgd
from .data import Dataset
from .errors import CalibrationFailed, DimensionMismatch, NoPositiveSamples
from .net import MlpModel, TrainConfig, TrainResult, fit, init_model, predict, training_rngs
from .omega import OmegaTransform

logger = logging.getLogger(__name__)

MAX_BISECTION_STEPS = 60
BUDGET_RTOL = 0.02
DEFAULT_EVAL_GRID = (0.1, 0.3, 0.5, 0.7)


@dataclass(frozen=True)
class AdvTrainConfig:
    """
    Min-max training settings.

    Perturbations are applied only to samples of ``perturb_class``, and only
    to a fresh random ``positive_fraction`` of them each epoch.
    """

    base: TrainConfig
    budget: PerturbationBudget
    omega: OmegaTransform
    attack: AttackConfig = field(default_factory=AttackConfig)
    positive_fraction: float = 0.9
    perturb_class: int = 1
    noise_sigma: float = 0.0

    def __post_init__(self) -> None:
        if not 0.0 <= self.positive_fraction <= 1.0:
            raise ValueError("positive_fraction must lie in [0, 1]")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be non-negative")

    def attack_config(self) -> AttackConfig:
        """Attack settings with the training omega filled in."""
        if self.omega.kind == "identity" and self.attack.mode == "uniform":
            return self.attack
        mode = self.attack.mode if self.attack.mode != "uniform" else "nonuniform"
        return replace(self.attack, mode=mode, omega=self.omega)


@dataclass
class DefenseReport:
    """Attack outcome; the per-sample arrays follow ``indices`` (the attacked rows)."""

    clean_accuracy: float
    defense_success_rate: float
    n_attacked: int
    indices: np.ndarray = field(repr=False, default_factory=lambda: np.zeros(0, dtype=np.int64))
    deltas: np.ndarray = field(repr=False, default_factory=lambda: np.zeros((0, 0)))
    clean_predictions: np.ndarray = field(repr=False, default_factory=lambda: np.zeros(0, dtype=np.int64))
    adversarial_predictions: np.ndarray = field(repr=False, default_factory=lambda: np.zeros(0, dtype=np.int64))
    attack_loss: np.ndarray = field(repr=False, default_factory=lambda: np.zeros(0))


def perturbed_count(n_positive: int, fraction: float) -> int:
    return int(round(fraction * n_positive))


def adversarial_train(
    d: Dataset,
    cfg: AdvTrainConfig,
    model: Optional[MlpModel] = None,
) -> TrainResult:
    """
    Train ``model`` on ``d`` with PGD perturbations on the perturbed class.

    Each epoch draws a new subset of ``positive_fraction`` of the
    ``perturb_class`` samples; when one of them appears in a batch its input
    is replaced by ``x + pgd(x)`` computed against the current weights.
    Everything else trains clean. Deterministic per ``cfg.base.seed``.
    Without ``model`` a default network is initialised from the same seed.
    """
    if model is None:
        model = init_model(d.d, seed=cfg.base.seed)
    if model.input_dim != d.d:
        raise DimensionMismatch(model.input_dim, d.d, "training data")
    if cfg.omega.dim != d.d:
        raise DimensionMismatch(d.d, cfg.omega.dim, "omega")
    positives = np.flatnonzero(d.labels == cfg.perturb_class)
    if positives.size == 0:
        raise NoPositiveSamples(
            f"No samples of class {cfg.perturb_class} to perturb",
            suggestion="Check the label column and the perturbed class.",
        )

    _, subset_rng, attack_rng = training_rngs(cfg.base.seed)
    attack_cfg = cfg.attack_config()
    n_perturbed = perturbed_count(positives.size, cfg.positive_fraction)
    selected = np.zeros(d.n, dtype=bool)

    def choose_subset(epoch: int) -> None:
        selected[:] = False
        if n_perturbed:
            selected[subset_rng.choice(positives, size=n_perturbed, replace=False)] = True
        logger.debug("epoch %d: perturbing %d of %d positives", epoch + 1, n_perturbed, positives.size)

    def perturb_batch(m: MlpModel, idx: np.ndarray, xb: np.ndarray, yb: np.ndarray) -> np.ndarray:
        hit = selected[idx]
        out = xb
        if hit.any():
            seeded = replace(attack_cfg, seed=int(attack_rng.integers(2**31)))
            delta, _ = pgd(m, xb[hit], yb[hit], cfg.budget, seeded)
            out = xb.copy()
            out[hit] = xb[hit] + delta
        if cfg.noise_sigma > 0:
            clean_pos = (~hit) & (yb == cfg.perturb_class)
            if clean_pos.any():
                out = out.copy() if out is xb else out
                out[clean_pos] += cfg.noise_sigma * attack_rng.standard_normal((int(clean_pos.sum()), d.d))
        return out

    if n_perturbed == 0 and cfg.noise_sigma == 0:
        return fit(model, d, cfg.base)
    return fit(model, d, cfg.base, before_epoch=choose_subset, batch_hook=perturb_batch)


def mean_l2(
    m: MlpModel,
    x: np.ndarray,
    y: np.ndarray,
    omega: OmegaTransform,
    epsilon: float,
    attack: AttackConfig,
    p: float = 2.0,
) -> float:
    budget = PerturbationBudget(epsilon, p)
    cfg = replace(attack, mode="uniform" if omega.kind == "identity" else "nonuniform", omega=omega)
    delta, _ = pgd(m, x, y, budget, cfg)
    return float(np.mean(np.linalg.norm(delta, axis=1)))


def match_budgets(
    d: Dataset,
    omegas: Sequence[OmegaTransform],
    target_avg_l2: float,
    attack: AttackConfig,
    model: MlpModel,
    perturb_class: int = 1,
    calibration_size: int = 256,
    p: float = 2.0,
) -> list[float]:
    """
    Find, per omega, the epsilon whose PGD perturbations have mean
    ``||delta||_2`` within 2% of ``target_avg_l2`` on a calibration batch of
    the perturbed class.

    Raises
    ------
    CalibrationFailed
        When 60 bisection steps do not reach the tolerance.
    """
    if target_avg_l2 <= 0:
        raise ValueError("target_avg_l2 must be positive")
    rows = np.flatnonzero(d.labels == perturb_class)
    if rows.size == 0:
        raise NoPositiveSamples(f"No samples of class {perturb_class} for calibration")
    rows = rows[:calibration_size]
    x, y = d.features[rows], d.labels[rows]

    def close(value: float) -> bool:
        return abs(value - target_avg_l2) <= BUDGET_RTOL * target_avg_l2

    epsilons = []
    for omega in omegas:
        label = omega.source or omega.kind
        lo, hi = 0.0, target_avg_l2
        found: Optional[float] = None
        steps = 0
        # grow until the upper end overshoots
        while steps < MAX_BISECTION_STEPS:
            value = mean_l2(model, x, y, omega, hi, attack, p)
            steps += 1
            if close(value):
                found = hi
                break
            if value > target_avg_l2:
                break
            lo, hi = hi, hi * 2.0
        while found is None and steps < MAX_BISECTION_STEPS:
            mid = 0.5 * (lo + hi)
            value = mean_l2(model, x, y, omega, mid, attack, p)
            steps += 1
            logger.debug("calibrate %s: eps=%.6g mean_l2=%.6g", label, mid, value)
            if close(value):
                found = mid
            elif value < target_avg_l2:
                lo = mid
            else:
                hi = mid
        if found is None:
            raise CalibrationFailed(
                f"Could not match mean ||delta||_2 = {target_avg_l2} for omega "
                f"'{label}' within {MAX_BISECTION_STEPS} steps",
                suggestion="Use a trained surrogate model or a smaller target distortion.",
            )
        epsilons.append(found)
    return epsilons


def evaluate_defense(
    m: MlpModel,
    d: Dataset,
    budget: PerturbationBudget,
    attack: AttackConfig,
    positive_class: int = 1,
    method: str = "pgd",
    workers: int = 8,
) -> DefenseReport:
    """
    Clean accuracy over all samples and defense success rate over the
    attacked positives: the fraction still classified as positive.
    """
    m = m.without_dropout()
    clean_acc = float(np.mean(predict(m, d.features) == d.labels))
    rows = np.flatnonzero(d.labels == positive_class)
    if rows.size == 0:
        raise NoPositiveSamples(f"No samples of class {positive_class} to attack")
    x, y = d.features[rows], d.labels[rows]
    if method == "fgsm":
        delta = fgsm(m, x, y, budget)
        loss = per_sample_loss(m, x + delta, y)
    elif method == "pgd":
        delta, loss = attack_batch(m, x, y, budget, attack, workers=workers)
    else:
        raise ValueError(f"Unknown attack method: {method}")
    adv_pred = predict(m, x + delta)
    dsr = float(np.mean(adv_pred == positive_class))
    logger.info("clean accuracy %.4f, defense success %.4f over %d positives", clean_acc, dsr, rows.size)
    return DefenseReport(
        clean_acc, dsr, int(rows.size),
        indices=rows, deltas=delta, clean_predictions=predict(m, x),
        adversarial_predictions=adv_pred, attack_loss=loss,
    )


def evaluate_defense_grid(
    m: MlpModel,
    d: Dataset,
    epsilons: Sequence[float] = DEFAULT_EVAL_GRID,
    attack: Optional[AttackConfig] = None,
    positive_class: int = 1,
    workers: int = 8,
) -> dict[float, DefenseReport]:
    """Uniform l2 PGD evaluation at each epsilon of the grid."""
    attack = attack or AttackConfig()
    uniform = replace(attack, mode="uniform", omega=None, epsilon_uniform=None)
    return {
        float(eps): evaluate_defense(m, d, PerturbationBudget(eps, 2.0), uniform, positive_class, workers=workers)
        for eps in epsilons
    }


def summarize_runs(values: Sequence[float]) -> tuple[float, float]:
    """Mean and population standard deviation across seeds."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.size == 0:
        raise ValueError("no runs to summarize")
    return float(arr.mean()), float(arr.std())
