import numpy as np
import pytest

from conftest import random_net, random_spd
from nonuniform_robust.attack import AttackConfig, PerturbationBudget, pgd, project_nonuniform
from nonuniform_robust.consistency import (
    GaussianModel,
    consistency_bound_check,
    gamma_consistency,
    md_from_gamma,
    md_square_stats,
)
from nonuniform_robust.errors import DimensionMismatch, EmptyInput
from nonuniform_robust.omega import mahalanobis_omega, omega_norm


def test_peak_density_one_dimension():
    g = GaussianModel.from_covariance([[1.0]])
    assert gamma_consistency(g, [0.0]).gamma == pytest.approx(0.398942, abs=1e-6)


def test_density_two_dimensions():
    g = GaussianModel.from_covariance(np.eye(2))
    c = gamma_consistency(g, [1.0, 1.0])
    assert c.gamma == pytest.approx(np.exp(-1) / (2 * np.pi), rel=1e-9)
    assert c.gamma == pytest.approx(0.058550, abs=1e-6)
    assert c.md_square == pytest.approx(2.0)


def test_md_recovered_from_gamma():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        d = int(rng.integers(1, 7))
        sigma = random_spd(rng, d)
        g = GaussianModel.from_covariance(sigma)
        omega = mahalanobis_omega(sigma, ridge=0.0)
        delta = rng.standard_normal(d)
        md = md_from_gamma(g, gamma_consistency(g, delta).log_gamma)
        assert md == pytest.approx(omega_norm(omega, delta), rel=1e-7, abs=1e-7)


def test_log_gamma_decreases_with_distance(rng):
    g = GaussianModel.from_covariance(random_spd(rng, 3))
    direction = rng.standard_normal(3)
    logs = [gamma_consistency(g, t * direction).log_gamma for t in np.linspace(0.0, 3.0, 10)]
    assert all(b < a for a, b in zip(logs, logs[1:]))


def test_bound_check_on_projected_perturbations(rng):
    sigma = random_spd(rng, 3)
    g = GaussianModel.from_covariance(sigma)
    omega = mahalanobis_omega(sigma, ridge=0.0)
    eps = 0.7
    for delta in 4 * rng.standard_normal((50, 3)):
        projected = project_nonuniform(delta, omega, PerturbationBudget(eps))
        assert consistency_bound_check(g, projected, eps)


@pytest.mark.parametrize("seed", range(5))
def test_md_constrained_pgd_passes_bound_check(seed):
    # 5 covariances x 200 attacked inputs
    rng = np.random.default_rng(seed)
    sigma = random_spd(rng, 4)
    g = GaussianModel.from_covariance(sigma)
    omega = mahalanobis_omega(sigma, ridge=0.0)
    model = random_net(rng, 4, (8, 6))
    x = rng.standard_normal((200, 4))
    y = rng.integers(0, 2, 200)
    eps = float(rng.uniform(0.2, 2.0))
    cfg = AttackConfig(steps=20, mode="nonuniform", omega=omega, init="random", seed=seed)
    delta, _ = pgd(model, x, y, PerturbationBudget(eps), cfg)
    assert all(consistency_bound_check(g, row, eps) for row in delta)
    assert consistency_bound_check(g, delta, eps)


def test_bound_check_rejects_outside_and_accepts_zero(rng):
    sigma = random_spd(rng, 3)
    g = GaussianModel.from_covariance(sigma)
    delta = rng.standard_normal(3)
    outside = 1.5 * delta / np.sqrt(g.md_square(delta))
    assert not consistency_bound_check(g, outside, 1.0)
    for eps in (1e-6, 1.0, 100.0):
        assert consistency_bound_check(g, np.zeros(3), eps)
    assert md_from_gamma(g, gamma_consistency(g, np.zeros(3)).log_gamma) == 0.0
    with pytest.raises(ValueError):
        consistency_bound_check(g, delta, 0.0)


def test_stats_single_perturbation():
    g = GaussianModel.from_covariance(np.eye(2))
    stats = md_square_stats(g, [[2.0, 0.0]])
    assert stats.mean == pytest.approx(4.0)
    assert stats.counts.sum() == 1
    assert len(stats.histogram_rows()) == 50


def test_stats_gaussian_mean_is_dimension():
    rng = np.random.default_rng(5)
    sigma = random_spd(rng, 4)
    g = GaussianModel.from_covariance(sigma)
    deltas = rng.multivariate_normal(np.zeros(4), sigma, size=100_000)
    assert md_square_stats(g, deltas).mean == pytest.approx(4.0, rel=0.05)


def test_closer_set_is_more_consistent(rng):
    g = GaussianModel.from_covariance(np.eye(3))
    base = rng.standard_normal((200, 3))
    near, far = md_square_stats(g, 0.5 * base), md_square_stats(g, 2.0 * base)
    assert near.mean < far.mean
    assert near.mean_log_gamma > far.mean_log_gamma


def test_empty_and_mismatched_input():
    g = GaussianModel.from_covariance(np.eye(2))
    with pytest.raises(EmptyInput):
        md_square_stats(g, [])
    with pytest.raises(DimensionMismatch):
        gamma_consistency(g, [1.0, 2.0, 3.0])
