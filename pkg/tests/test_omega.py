import numpy as np
import pytest

from conftest import random_spd
from nonuniform_robust.errors import DimensionMismatch, EmptyMutableSet, NonInvertibleOmega
from nonuniform_robust.omega import (
    OmegaTransform,
    build_omega,
    dual_order,
    identity_omega,
    importance_omega,
    inscribed_epsilon,
    inverse_norm,
    mahalanobis_omega,
    mask_omega,
    omega_norm,
)


def test_importance_weights_are_normalized_inverses():
    omega = importance_omega([0.5, 0.25])
    np.testing.assert_allclose(omega.weights, [0.4472136, 0.8944272], atol=1e-6)
    assert np.linalg.norm(omega.weights) == pytest.approx(1.0)


def test_importance_floor_and_sign():
    omega = importance_omega([-0.5, 0.0], floor=1e-3)
    inv = np.array([2.0, 1000.0])
    np.testing.assert_allclose(omega.weights, inv / np.linalg.norm(inv))


def test_mahalanobis_of_diagonal():
    omega = mahalanobis_omega(np.diag([4.0, 1.0]), ridge=0.0)
    np.testing.assert_allclose(omega.dense(), np.diag([0.5, 1.0]), atol=1e-12)
    np.testing.assert_allclose(omega.apply_inverse([1.0, 1.0]), [2.0, 1.0], atol=1e-12)


def test_mahalanobis_norm_matches_direct(rng):
    sigma = random_spd(rng, 5)
    omega = mahalanobis_omega(sigma, ridge=0.0)
    for _ in range(10):
        delta = rng.standard_normal(5)
        direct = np.sqrt(delta @ np.linalg.solve(sigma, delta))
        assert omega_norm(omega, delta) == pytest.approx(direct, rel=1e-8)


def test_norm_examples():
    assert omega_norm(identity_omega(2), [3.0, 4.0]) == pytest.approx(5.0)
    assert omega_norm(identity_omega(2), [3.0, -4.0], np.inf) == pytest.approx(4.0)
    assert omega_norm(mask_omega([True, False]), [3.0, 4.0]) == pytest.approx(3.0)
    pearson = importance_omega([0.5, 0.25])
    assert inverse_norm(pearson, [1.0, 0.0]) == pytest.approx(2.2360680, abs=1e-6)


def test_inverse_norm_is_support_function(rng):
    omega = mahalanobis_omega(random_spd(rng, 3), ridge=0.0)
    v = rng.standard_normal(3)
    # maximiser of v . delta on the unit omega-ball
    u = omega.apply_inverse(v)
    delta = omega.apply_inverse(u / np.linalg.norm(u))
    assert omega_norm(omega, delta) == pytest.approx(1.0)
    assert v @ delta == pytest.approx(inverse_norm(omega, v), rel=1e-9)


def test_mask_inverse_norm_ignores_immutable():
    omega = mask_omega([True, False, True])
    assert inverse_norm(omega, [3.0, 100.0, 4.0]) == pytest.approx(5.0)
    with pytest.raises(NonInvertibleOmega):
        omega.apply_inverse([1.0, 1.0, 1.0])


def test_empty_mask_rejected():
    with pytest.raises(EmptyMutableSet):
        mask_omega([False, False])


def test_dimension_checks():
    with pytest.raises(DimensionMismatch):
        identity_omega(3).apply([1.0, 2.0])
    with pytest.raises(ValueError):
        build_omega("identity")
    with pytest.raises(ValueError):
        build_omega("nope", dim=2)


def test_scaled_omega():
    omega = mahalanobis_omega(np.diag([4.0, 1.0]), ridge=0.0).scaled(2.0)
    np.testing.assert_allclose(omega.dense(), np.diag([1.0, 2.0]), atol=1e-12)
    np.testing.assert_allclose(identity_omega(2).scaled(3.0).weights, [3.0, 3.0])


def test_dict_round_trip_preserves_norm(rng):
    omega = mahalanobis_omega(random_spd(rng, 3), ridge=0.0)
    restored = OmegaTransform.from_dict(omega.to_dict())
    delta = rng.standard_normal(3)
    assert omega_norm(restored, delta) == pytest.approx(omega_norm(omega, delta))


def test_dual_order():
    assert dual_order(2) == 2.0
    assert dual_order(np.inf) == 1.0
    with pytest.raises(ValueError):
        dual_order(3)


def _asymmetric_full(rng, d):
    a = rng.standard_normal((d, d)) + 3.0 * np.eye(d)
    return a, OmegaTransform("full", d, "custom", matrix=a, inverse_matrix=np.linalg.inv(a))


def test_asymmetric_inverse_norm_uses_inverse_transpose(rng):
    for _ in range(20):
        a, omega = _asymmetric_full(rng, 3)
        v = rng.standard_normal(3)
        u = np.linalg.solve(a.T, v)
        assert inverse_norm(omega, v) == pytest.approx(np.linalg.norm(u), rel=1e-10)
        # maximiser of v . delta on the unit omega-ball
        delta = np.linalg.solve(a, u / np.linalg.norm(u))
        assert omega_norm(omega, delta) == pytest.approx(1.0)
        assert v @ delta == pytest.approx(inverse_norm(omega, v), rel=1e-9)
        boundary = np.linalg.solve(a, rng.standard_normal((500, 3)).T).T
        boundary /= omega_norm(omega, boundary)[:, None]
        assert np.all(boundary @ v <= inverse_norm(omega, v) + 1e-9)


def test_full_omega_requires_a_matching_inverse(rng):
    a, _ = _asymmetric_full(rng, 3)
    with pytest.raises(NonInvertibleOmega):
        OmegaTransform("full", 3, matrix=a, inverse_matrix=np.linalg.inv(a).T)
    with pytest.raises(NonInvertibleOmega):
        OmegaTransform("full", 3, matrix=a)
    with pytest.raises(DimensionMismatch):
        OmegaTransform("full", 3, matrix=a, inverse_matrix=np.eye(2))


def _omegas(rng, d):
    return [
        identity_omega(d),
        importance_omega(rng.uniform(0.1, 1.0, d)),
        mahalanobis_omega(random_spd(rng, d), ridge=0.0),
        _asymmetric_full(rng, d)[1],
    ]


def test_scaling_scales_both_norms(rng):
    for omega in _omegas(rng, 4):
        v = rng.standard_normal((10, 4))
        for c in (0.1, 2.5, 40.0):
            scaled = omega.scaled(c)
            np.testing.assert_allclose(omega_norm(scaled, v), c * omega_norm(omega, v), rtol=1e-12)
            np.testing.assert_allclose(inverse_norm(scaled, v), inverse_norm(omega, v) / c, rtol=1e-12)
            np.testing.assert_allclose(inverse_norm(scaled, v, np.inf), inverse_norm(omega, v, np.inf) / c, rtol=1e-12)
    with pytest.raises(ValueError):
        identity_omega(2).scaled(0.0)


def test_apply_inverse_undoes_apply(rng):
    for omega in _omegas(rng, 5):
        v = rng.standard_normal((20, 5))
        np.testing.assert_allclose(omega.apply_inverse(omega.apply(v)), v, atol=1e-10)
        np.testing.assert_allclose(omega.apply(omega.apply_inverse(v)), v, atol=1e-10)
        np.testing.assert_allclose(omega.apply_inverse_transpose(v), v @ np.linalg.inv(omega.dense()), atol=1e-10)


@pytest.mark.parametrize("p", [2, np.inf])
def test_inscribed_ball_lies_inside_plain_ball(rng, p):
    eps = 0.7
    for omega in _omegas(rng, 4) + [mask_omega([True, False, True, True])]:
        inner = inscribed_epsilon(omega, eps, p)
        assert 0 < inner
        u = rng.standard_normal((2000, 4))
        u *= inner / np.linalg.norm(u, ord=p, axis=1, keepdims=True)
        delta = omega.restrict(u) if omega.kind == "mask" else omega.apply_inverse(u)
        assert np.all(omega_norm(omega, delta, p) <= inner * (1 + 1e-12))
        assert np.all(np.linalg.norm(delta, ord=p, axis=1) <= eps * (1 + 1e-12))


def test_inscribed_budget_touches_the_plain_ball():
    omega = importance_omega([0.5, 0.25])
    inner = inscribed_epsilon(omega, 1.0)
    # the lightest weight is the widest axis of the omega-ball
    widest = np.array([inner / omega.weights[0], 0.0])
    assert omega_norm(omega, widest) == pytest.approx(inner)
    assert np.linalg.norm(widest) == pytest.approx(1.0)
    assert inscribed_epsilon(identity_omega(2), 0.3) == 0.3
    assert inscribed_epsilon(mahalanobis_omega(np.diag([4.0, 1.0]), ridge=0.0), 1.0) == pytest.approx(0.5)
    with pytest.raises(ValueError):
        inscribed_epsilon(omega, -1.0)
