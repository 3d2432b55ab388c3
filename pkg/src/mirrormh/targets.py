"""Unnormalized log-densities and gradients for every built-in target.

Constrained targets (the Gamma and uniform ones) are expressed in a
transformed, unconstrained coordinate; chains sample the transformed
coordinate and ``back_transform`` maps samples to the original scale for
reporting. Log-densities are defined up to an additive constant: only
differences are ever consumed by the samplers.
"""

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.special import expit, logsumexp

from .errors import DimensionMismatch, UnknownTargetId
from .linalg import invert_spd

SQRT3 = math.sqrt(3.0)


@dataclass(frozen=True)
class TargetDensity:
    """A differentiable unnormalized log-density on R^d."""

    dim: int
    log_density: Callable[[np.ndarray], float]
    grad_log_density: Callable[[np.ndarray], np.ndarray]
    back_transform: Optional[Callable[[np.ndarray], np.ndarray]] = None
    name: str = ""


def _standard_normal_1d() -> TargetDensity:
    def logp(theta):
        x = theta[0]
        return -0.5 * x * x

    def grad(theta):
        return -theta

    return TargetDensity(1, logp, grad, name="normal")


def _normal_mixture_1d() -> TargetDensity:
    # 1/4 N(-1, 1/4) + 3/4 N(1, 1/4); overall mean 1/2, variance 1
    means = np.array([-1.0, 1.0])
    var = 0.25
    log_w = np.log(np.array([0.25, 0.75]))

    def component_logs(x):
        return log_w - (x - means) ** 2 / (2.0 * var)

    def logp(theta):
        return float(logsumexp(component_logs(theta[0])))

    def grad(theta):
        x = theta[0]
        lp = component_logs(x)
        resp = np.exp(lp - logsumexp(lp))
        return np.array([np.dot(resp, -(x - means) / var)])

    return TargetDensity(1, logp, grad, name="mixnormal")


def _t4_mixture_1d() -> TargetDensity:
    # 3/4 t4(-3/4, s^2) + 1/4 t4(3/4, s^2) with s = sqrt(37/2)/8; variance 1
    means = np.array([-0.75, 0.75])
    s2 = 37.0 / 128.0
    log_w = np.log(np.array([0.75, 0.25]))

    def component_logs(x):
        return log_w - 2.5 * np.log1p((x - means) ** 2 / (4.0 * s2))

    def logp(theta):
        return float(logsumexp(component_logs(theta[0])))

    def grad(theta):
        x = theta[0]
        lp = component_logs(x)
        resp = np.exp(lp - logsumexp(lp))
        u = (x - means) ** 2 / (4.0 * s2)
        dlog = -2.5 * ((x - means) / (2.0 * s2)) / (1.0 + u)
        return np.array([np.dot(resp, dlog)])

    return TargetDensity(1, logp, grad, name="mixt4")


def _log_gamma_1d() -> TargetDensity:
    # Gamma(4, 2) for theta > 0 via xi = log(theta): log pi(xi) = 4 xi - 2 e^xi
    def logp(theta):
        x = theta[0]
        return 4.0 * x - 2.0 * math.exp(x)

    def grad(theta):
        return np.array([4.0 - 2.0 * math.exp(theta[0])])

    def back(xi):
        return np.exp(xi)

    return TargetDensity(1, logp, grad, back_transform=back, name="gamma")


def _logit_uniform_1d() -> TargetDensity:
    # U(-sqrt(3), sqrt(3)) via xi = log((sqrt(3)+theta)/(sqrt(3)-theta)):
    # log pi(xi) = xi - 2 log(1 + e^xi)
    def logp(theta):
        x = theta[0]
        return x - 2.0 * np.logaddexp(0.0, x)

    def grad(theta):
        return np.array([1.0 - 2.0 * expit(theta[0])])

    def back(xi):
        return SQRT3 * np.tanh(np.asarray(xi) / 2.0)

    return TargetDensity(1, logp, grad, back_transform=back, name="uniform")


_ONED_BUILDERS = {
    1: _standard_normal_1d,
    2: _normal_mixture_1d,
    3: _t4_mixture_1d,
    4: _log_gamma_1d,
    5: _logit_uniform_1d,
}

# True means on the original scale, used by sweeps for sanity checks.
ONED_TRUE_MEANS = {1: 0.0, 2: 0.5, 3: -0.375, 4: 2.0, 5: 0.0}


def make_oned_target(target_id: int) -> TargetDensity:
    """Build one of the five bundled 1-D targets (all have variance 1)."""
    try:
        builder = _ONED_BUILDERS[target_id]
    except KeyError:
        raise UnknownTargetId(f"target id must be in 1..5, got {target_id!r}") from None
    return builder()


def make_mvn(mu, sigma) -> TargetDensity:
    """Multivariate normal N(mu, sigma) as an unnormalized target."""
    mu = np.asarray(mu, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    if mu.shape != (sigma.shape[0],):
        raise DimensionMismatch("mu and sigma dimensions do not match")
    omega = invert_spd(sigma)

    def logp(theta):
        diff = theta - mu
        return -0.5 * float(diff @ (omega @ diff))

    def grad(theta):
        return -(omega @ (theta - mu))

    return TargetDensity(mu.size, logp, grad, name=f"mvn{mu.size}")


def make_logistic_posterior(x, y, prior_sd: float = 10.0) -> TargetDensity:
    """Bayesian logistic regression posterior over (intercept, coefficients).

    log pi = sum_i y_i eta_i - sum_i log(1 + exp(eta_i)) - |theta|^2/(2 sd^2)
    with eta_i the linear predictor; evaluation is log-sum-exp safe for
    arbitrarily large predictors.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.ndim != 2:
        raise DimensionMismatch("predictor matrix must be 2-D")
    if y.shape != (x.shape[0],):
        raise DimensionMismatch("response length does not match predictor rows")
    if not np.all((y == 0.0) | (y == 1.0)):
        raise ValueError("responses must be binary")
    design = np.hstack([np.ones((x.shape[0], 1)), x])
    dim = design.shape[1]
    prior_var = float(prior_sd) ** 2

    def logp(theta):
        eta = design @ theta
        return float(y @ eta - np.logaddexp(0.0, eta).sum() - theta @ theta / (2.0 * prior_var))

    def grad(theta):
        eta = design @ theta
        return design.T @ (y - expit(eta)) - theta / prior_var

    return TargetDensity(dim, logp, grad, name=f"logistic{dim}")


def check_gradient(target: TargetDensity, point) -> float:
    """Max relative error between the analytic gradient and central differences.

    Per-coordinate step h_i = 1e-5 * (1 + |theta_i|); the error is scaled by
    max(1, |gradient|) so near-zero coordinates compare absolutely.
    """
    point = np.asarray(point, dtype=float)
    analytic = np.asarray(target.grad_log_density(point), dtype=float)
    numeric = np.empty_like(analytic)
    for i in range(point.size):
        h = 1e-5 * (1.0 + abs(point[i]))
        hi = point.copy()
        lo = point.copy()
        hi[i] += h
        lo[i] -= h
        numeric[i] = (target.log_density(hi) - target.log_density(lo)) / (2.0 * h)
    scale = np.maximum(1.0, np.maximum(np.abs(analytic), np.abs(numeric)))
    return float(np.max(np.abs(numeric - analytic) / scale))
