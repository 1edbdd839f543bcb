import numpy as np
import pytest

import nonuniform_robust.training as training
from conftest import linear_model
from nonuniform_robust.attack import AttackConfig, PerturbationBudget
from nonuniform_robust.data import Dataset, standardize
from nonuniform_robust.errors import NoPositiveSamples
from nonuniform_robust.net import TrainConfig, accuracy, init_model, train_clean
from nonuniform_robust.omega import identity_omega, importance_omega, mahalanobis_omega
from nonuniform_robust.synthetic import make_correlated_blobs
from nonuniform_robust.training import (
    AdvTrainConfig,
    adversarial_train,
    evaluate_defense,
    evaluate_defense_grid,
    match_budgets,
    perturbed_count,
    summarize_runs,
)


def _adv_cfg(d, epsilon=0.5, fraction=0.9, epochs=3, seed=4, omega=None):
    return AdvTrainConfig(
        base=TrainConfig(epochs=epochs, seed=seed),
        budget=PerturbationBudget(epsilon),
        omega=omega or identity_omega(d.d),
        positive_fraction=fraction,
    )


def test_zero_fraction_is_clean_training(blobs):
    cfg = _adv_cfg(blobs, fraction=0.0)
    adv = adversarial_train(blobs, cfg, init_model(blobs.d, seed=4)).model
    clean = train_clean(init_model(blobs.d, seed=4), blobs, cfg.base).model
    for a, c in zip(adv.weights, clean.weights):
        np.testing.assert_array_equal(a, c)


def test_vanishing_budget_matches_clean_training(blobs):
    cfg = _adv_cfg(blobs, epsilon=1e-12)
    adv = adversarial_train(blobs, cfg).model
    clean = train_clean(init_model(blobs.d, seed=4), blobs, cfg.base).model
    for a, c in zip(adv.weights + adv.biases, clean.weights + clean.biases):
        np.testing.assert_allclose(a, c, atol=1e-6)


def test_perturbs_requested_fraction_each_epoch(blobs, monkeypatch):
    calls = []

    def fake_pgd(m, x, y, budget, cfg):
        calls.append(np.asarray(y).copy())
        return np.zeros_like(x), np.zeros(len(x))

    monkeypatch.setattr(training, "pgd", fake_pgd)
    cfg = _adv_cfg(blobs, fraction=0.5, epochs=4)
    adversarial_train(blobs, cfg)

    n_pos = int(np.sum(blobs.labels == 1))
    seen = np.concatenate(calls)
    assert np.all(seen == 1)
    assert seen.size == 4 * perturbed_count(n_pos, 0.5)


def test_nonidentity_omega_switches_attack_mode(blobs):
    omega = importance_omega(np.linspace(0.1, 0.4, blobs.d))
    cfg = _adv_cfg(blobs, omega=omega)
    assert cfg.attack_config().mode == "nonuniform"
    assert cfg.attack_config().omega is omega
    assert _adv_cfg(blobs).attack_config().mode == "uniform"


def test_no_positive_samples():
    d = Dataset(np.random.default_rng(0).standard_normal((10, 2)), np.zeros(10, dtype=int), ("a", "b"))
    with pytest.raises(NoPositiveSamples):
        adversarial_train(d, _adv_cfg(d))


def test_config_validation(blobs):
    with pytest.raises(ValueError):
        _adv_cfg(blobs, fraction=1.5)


def test_perturbed_count():
    assert perturbed_count(300, 0.9) == 270
    assert perturbed_count(5, 0.0) == 0


@pytest.fixture
def trained(blobs):
    return train_clean(init_model(blobs.d, hidden=(16, 8), dropout_rate=0.0, seed=2), blobs, TrainConfig(epochs=20, seed=2)).model


def test_match_budgets_identity_and_scaled(blobs, trained):
    attack = AttackConfig(steps=20)
    eye = mahalanobis_omega(np.eye(blobs.d), ridge=0.0)
    eps_identity, eps_scaled = match_budgets(blobs, [identity_omega(blobs.d), eye.scaled(2.0)], 0.5, attack, trained)
    assert eps_identity == pytest.approx(0.5, rel=0.12)
    assert eps_scaled == pytest.approx(2 * eps_identity, rel=0.1)


def test_match_budgets_rejects_nonpositive_target(blobs, trained):
    with pytest.raises(ValueError):
        match_budgets(blobs, [identity_omega(blobs.d)], 0.0, AttackConfig(), trained)


def test_always_positive_model_defends_everything(blobs):
    model = linear_model(np.zeros((2, blobs.d)), [0.0, 5.0])
    report = evaluate_defense(model, blobs, PerturbationBudget(1.0), AttackConfig())
    assert report.defense_success_rate == 1.0
    assert report.clean_accuracy == pytest.approx(np.mean(blobs.labels == 1))
    assert report.n_attacked == int(np.sum(blobs.labels == 1))
    np.testing.assert_array_equal(report.adversarial_predictions, 1)


def test_untrained_model_on_independent_labels():
    rng = np.random.default_rng(8)
    labels = np.arange(2000) % 2
    d = Dataset(rng.standard_normal((2000, 5)), labels, tuple("abcde"))
    report = evaluate_defense(init_model(5, seed=1), d, PerturbationBudget(0.1), AttackConfig(steps=2))
    assert report.clean_accuracy == pytest.approx(0.5, abs=0.05)


def test_fgsm_and_unknown_method(blobs, trained):
    report = evaluate_defense(trained, blobs, PerturbationBudget(0.5, np.inf), AttackConfig(), method="fgsm")
    assert 0.0 <= report.defense_success_rate <= 1.0
    with pytest.raises(ValueError):
        evaluate_defense(trained, blobs, PerturbationBudget(0.5), AttackConfig(), method="cw")


def test_defense_grid_is_monotone_in_budget(blobs, trained):
    grid = evaluate_defense_grid(trained, blobs, (0.0 + 1e-9, 0.5, 1.5), AttackConfig(steps=20), workers=2)
    rates = [grid[eps].defense_success_rate for eps in sorted(grid)]
    assert len(rates) == 3
    assert rates[-1] <= rates[0]


def test_summarize_runs():
    mean, std = summarize_runs([1.0, 2.0, 3.0])
    assert mean == pytest.approx(2.0)
    assert std == pytest.approx(np.sqrt(2 / 3))
    with pytest.raises(ValueError):
        summarize_runs([])


@pytest.mark.slow
def test_adversarial_training_keeps_accuracy(separable_blobs):
    cfg = AdvTrainConfig(
        base=TrainConfig(epochs=60, seed=0),
        budget=PerturbationBudget(0.5),
        omega=identity_omega(2),
    )
    model = adversarial_train(separable_blobs, cfg, init_model(2, hidden=(16, 8), dropout_rate=0.0, seed=0)).model
    assert accuracy(model, separable_blobs) >= 0.9


@pytest.mark.slow
def test_adversarial_training_defends_better_than_standard():
    train, stats = standardize(make_correlated_blobs(n=1000, dim=4, seed=1))
    base = TrainConfig(epochs=30, seed=0)
    standard = train_clean(init_model(4, hidden=(16, 8), dropout_rate=0.0, seed=0), train, base).model
    cfg = AdvTrainConfig(base=base, budget=PerturbationBudget(0.5), omega=identity_omega(4))
    robust = adversarial_train(train, cfg, init_model(4, hidden=(16, 8), dropout_rate=0.0, seed=0)).model
    test = stats.apply(make_correlated_blobs(n=600, dim=4, seed=2))
    attack = AttackConfig(steps=20)

    def rate(m):
        return evaluate_defense(m, test, PerturbationBudget(0.5), attack).defense_success_rate

    assert rate(robust) > rate(standard)
