"""End-to-end trend checks.

German Credit runs need ``NUROBUST_GERMAN_CREDIT`` pointing at a CSV with a
binary label column (``NUROBUST_GERMAN_LABEL``, default ``label``; columns in
``NUROBUST_GERMAN_DROP`` are discarded). The synthetic trend checks train
several models and only run with ``NUROBUST_REPRODUCE=1``.
"""

import os

import numpy as np
import pytest

from nonuniform_robust.attack import AttackConfig, PerturbationBudget
from nonuniform_robust.cert_lp import certify_batch, summarize_certification
from nonuniform_robust.data import covariance, load_csv, split_dataset, standardize
from nonuniform_robust.net import TrainConfig, accuracy, init_model, train_clean
from nonuniform_robust.omega import OmegaTransform, build_omega, identity_omega, inscribed_epsilon
from nonuniform_robust.synthetic import make_correlated_blobs, make_toy
from nonuniform_robust.training import (
    AdvTrainConfig,
    adversarial_train,
    evaluate_defense,
    match_budgets,
)

GERMAN_CREDIT = os.getenv("NUROBUST_GERMAN_CREDIT")
REPRODUCE = os.getenv("NUROBUST_REPRODUCE") == "1"

needs_german_credit = pytest.mark.skipif(not GERMAN_CREDIT, reason="NUROBUST_GERMAN_CREDIT not set")
needs_reproduce = pytest.mark.skipif(not REPRODUCE, reason="NUROBUST_REPRODUCE=1 not set")


def _german_credit(seed):
    drop = [c for c in os.getenv("NUROBUST_GERMAN_DROP", "").split(",") if c]
    d = load_csv(GERMAN_CREDIT, os.getenv("NUROBUST_GERMAN_LABEL", "label"), drop)
    train, test = split_dataset(d, 0.2, seed)
    train, stats = standardize(train)
    return train, stats.apply(test)


def _matched_models(train, seed, target=1.0, epochs=100):
    base = TrainConfig(epochs=epochs, seed=seed)
    surrogate = train_clean(init_model(train.d, seed=seed), train, base).model
    uniform = identity_omega(train.d)
    target_omega = build_omega("md-target", covariance=covariance(train, "negative_only"))
    eps_uniform, eps_target = match_budgets(train, [uniform, target_omega], target, AttackConfig(), surrogate)
    models = {}
    for name, omega, eps in (("uniform", uniform, eps_uniform), ("md-target", target_omega, eps_target)):
        cfg = AdvTrainConfig(base=base, budget=PerturbationBudget(eps), omega=omega)
        models[name] = adversarial_train(train, cfg).model
    return surrogate, models, target_omega, eps_target


@needs_german_credit
@pytest.mark.slow
def test_german_credit_standard_accuracy():
    train, test = _german_credit(0)
    assert train.n + test.n == 1000
    model = train_clean(init_model(train.d, seed=0), train, TrainConfig(epochs=100, seed=0)).model
    assert accuracy(model, test) == pytest.approx(0.697, abs=0.05)


@needs_german_credit
@pytest.mark.slow
def test_german_credit_target_budget_defends_at_least_as_well():
    wins = 0
    for seed in range(5):
        train, test = _german_credit(seed)
        _, models, _, _ = _matched_models(train, seed)
        budget = PerturbationBudget(1.0)
        rates = {name: evaluate_defense(m, test, budget, AttackConfig()).defense_success_rate for name, m in models.items()}
        wins += rates["md-target"] >= rates["uniform"]
    assert wins >= 4


@needs_reproduce
@pytest.mark.slow
def test_target_certificates_have_larger_margin():
    d = make_correlated_blobs(n=2500, dim=6, seed=0)
    train, test = split_dataset(d, 0.2, 0)
    train, stats = standardize(train)
    test = stats.apply(test)
    _, models, target_omega, _ = _matched_models(train, 0, target=0.5, epochs=50)
    model = models["md-target"]
    x, y = test.features[:500], test.labels[:500]
    eps = 0.5
    # the target ball is sized to fit inside the uniform ball it is compared with
    _, uni_margin = summarize_certification(certify_batch(model, x, y, identity_omega(6), eps))
    target_reports = certify_batch(
        model, x, y, target_omega, inscribed_epsilon(target_omega, eps), enclosing=(identity_omega(6), eps)
    )
    _, nu_margin = summarize_certification(target_reports)
    assert nu_margin > uni_margin


@needs_reproduce
@pytest.mark.slow
def test_elliptical_budget_beats_both_round_budgets():
    train = make_toy(2000, seed=0)
    test = make_toy(1000, seed=1)
    ellipse = OmegaTransform("diagonal", 2, "toy", weights=np.array([1 / 0.5, 1 / 0.8]))
    base = TrainConfig(epochs=100, seed=0)

    def fit(omega, eps):
        cfg = AdvTrainConfig(base=base, budget=PerturbationBudget(eps), omega=omega)
        return adversarial_train(train, cfg, init_model(2, seed=0)).model

    elliptical = fit(ellipse, 1.0)
    small, large = fit(identity_omega(2), 0.5), fit(identity_omega(2), 0.8)
    attack = AttackConfig(steps=20, mode="nonuniform", omega=ellipse)

    def robust(m):
        return evaluate_defense(m, test, PerturbationBudget(1.0), attack).defense_success_rate

    assert robust(elliptical) > robust(small)
    assert accuracy(elliptical, test) > accuracy(large, test)
