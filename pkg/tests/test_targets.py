import math

import numpy as np
import pytest

from mirrormh.errors import DimensionMismatch, UnknownTargetId
from mirrormh.targets import (
    check_gradient,
    make_logistic_posterior,
    make_mvn,
    make_oned_target,
)

SQRT3 = math.sqrt(3.0)


def test_unknown_target_id():
    with pytest.raises(UnknownTargetId):
        make_oned_target(6)


def test_standard_normal_gradient_at_mode():
    target = make_oned_target(1)
    assert target.grad_log_density(np.zeros(1))[0] == 0.0


def test_log_gamma_density_difference():
    # log pi(1) - log pi(0) = (4 - 2e) - (0 - 2) = 6 - 2e
    target = make_oned_target(4)
    diff = target.log_density(np.array([1.0])) - target.log_density(np.array([0.0]))
    assert abs(diff - (6.0 - 2.0 * math.e)) < 1e-12


def test_t4_mixture_mean_by_iid_sampling_oracle():
    # direct i.i.d. draws from the mixture: 3/4 t4(-3/4, s^2) + 1/4 t4(3/4, s^2)
    rng = np.random.default_rng(10)
    n = 1_000_000
    s = math.sqrt(37.0 / 128.0)
    means = np.where(rng.random(n) < 0.75, -0.75, 0.75)
    draws = means + s * rng.standard_t(4, size=n)
    assert abs(draws.mean() - (-0.375)) < 4 * draws.std() / math.sqrt(n)


def test_oned_densities_integrate_to_stated_moments():
    # quadrature over the implemented densities: all five have variance 1,
    # and means 0, 1/2, -3/8, digamma-free checks via the transformed targets
    from scipy.integrate import trapezoid

    grid = np.linspace(-60.0, 60.0, 400_001)
    for target_id, want_mean in [(1, 0.0), (2, 0.5), (3, -0.375)]:
        target = make_oned_target(target_id)
        log_vals = np.array([target.log_density(np.array([x])) for x in grid[::40]])
        sub = grid[::40]
        dens = np.exp(log_vals - log_vals.max())
        mass = trapezoid(dens, sub)
        mean = trapezoid(sub * dens, sub) / mass
        var = trapezoid((sub - mean) ** 2 * dens, sub) / mass
        assert abs(mean - want_mean) < 1e-3, target_id
        assert abs(var - 1.0) < 1e-2, target_id


def test_back_transforms_map_into_support():
    gamma = make_oned_target(4)
    uniform = make_oned_target(5)
    xi = np.linspace(-30, 30, 1001)
    assert np.all(gamma.back_transform(xi) > 0)
    theta = uniform.back_transform(xi)
    assert np.all(np.abs(theta) < SQRT3)


def test_gradients_match_finite_differences_everywhere():
    rng = np.random.default_rng(11)
    for target_id in range(1, 6):
        target = make_oned_target(target_id)
        worst = max(
            check_gradient(target, rng.normal(scale=2.0, size=1)) for _ in range(100)
        )
        assert worst < 1e-5, target_id


def test_mvn_gradient_and_quadratic_form():
    target = make_mvn(np.zeros(2), np.eye(2))
    assert np.allclose(target.grad_log_density(np.array([3.0, 4.0])), [-3.0, -4.0])

    mu = np.array([1.0, 2.0])
    sigma = np.array([[1.0, 1.8], [1.8, 4.0]])
    target = make_mvn(mu, sigma)
    rng = np.random.default_rng(12)
    worst = max(check_gradient(target, mu + rng.normal(size=2)) for _ in range(100))
    assert worst < 1e-5

    omega = np.linalg.inv(sigma)
    diff = target.log_density(mu) - target.log_density(mu + np.array([1.0, 0.0]))
    assert abs(diff - 0.5 * omega[0, 0]) < 1e-12


def test_mvn_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        make_mvn(np.zeros(3), np.eye(2))


def test_logistic_posterior_at_zero():
    rng = np.random.default_rng(13)
    x = rng.standard_normal((40, 3))
    y = (rng.random(40) < 0.5).astype(float)
    target = make_logistic_posterior(x, y, prior_sd=10.0)
    theta0 = np.zeros(4)
    assert abs(target.log_density(theta0) - (-40 * math.log(2.0))) < 1e-12
    grad = target.grad_log_density(theta0)
    assert abs(grad[0] - (y.sum() - 20.0)) < 1e-12


def test_logistic_gradient_matches_finite_differences():
    rng = np.random.default_rng(14)
    x = rng.standard_normal((50, 3))
    coef = np.array([0.5, -1.0, 0.25])
    y = (rng.random(50) < 1.0 / (1.0 + np.exp(-(x @ coef)))).astype(float)
    target = make_logistic_posterior(x, y)
    for _ in range(10):
        assert check_gradient(target, rng.normal(size=4)) < 1e-6


def test_logistic_is_overflow_safe_at_large_parameters():
    rng = np.random.default_rng(15)
    x = rng.standard_normal((1000, 24))
    y = (rng.random(1000) < 0.5).astype(float)
    target = make_logistic_posterior(x, y)
    theta = np.full(25, 50.0)
    assert np.isfinite(target.log_density(theta))
    assert np.all(np.isfinite(target.grad_log_density(theta)))


def test_logistic_input_validation():
    with pytest.raises(DimensionMismatch):
        make_logistic_posterior(np.zeros((5, 2)), np.zeros(4))
    with pytest.raises(ValueError):
        make_logistic_posterior(np.zeros((3, 2)), np.array([0.0, 2.0, 1.0]))


def test_log_density_only_differences_matter():
    # shifting a target's log density by a constant must not change differences
    target = make_oned_target(2)
    a, b = np.array([0.3]), np.array([-1.1])
    base = target.log_density(a) - target.log_density(b)
    shifted = (target.log_density(a) + 7.5) - (target.log_density(b) + 7.5)
    assert abs(base - shifted) < 1e-12
