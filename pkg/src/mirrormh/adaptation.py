"""Burn-in drivers: moment estimation, adaptive preconditioning, scale tuning.

Burn-ins always use random-walk proposals; gradient kernels are never run
before moment estimates exist. When the burn-in is split into segments, the
interim covariance re-preconditions the walk and the returned estimate comes
from the final segment only.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import NotPositiveDefinite, SingularCovariance, TuningFailed
from .kernels import ChainState, RandomWalkKernel, make_kernel, run_chain
from .linalg import cholesky_lower, regularize_covariance, symmetrize
from .targets import TargetDensity

# Scale used for interim preconditioned walks once a covariance is available.
RW_OPTIMAL_SCALE = 2.38

# Defaults suggested for Mirror-type kernels on roughly unit-scale targets.
DEFAULT_MIRROR_C = 1.0
DEFAULT_MIRROR_EPSILON = 0.5


@dataclass(frozen=True)
class MomentEstimate:
    """Estimated location mu*, covariance Sigma*, and its Cholesky factor."""

    mu_star: np.ndarray
    sigma_star: np.ndarray
    chol_lower: np.ndarray
    sample_count: int

    @property
    def dim(self) -> int:
        return self.mu_star.size

    @classmethod
    def from_samples(cls, samples) -> "MomentEstimate":
        samples = np.asarray(samples, dtype=float)
        if samples.ndim == 1:
            samples = samples[:, None]
        count, dim = samples.shape
        if count < 2 * dim:
            raise ValueError(f"need at least {2 * dim} samples to estimate {dim}-dim moments")
        mu = samples.mean(axis=0)
        sigma = np.cov(samples, rowvar=False, ddof=1).reshape(dim, dim)
        sigma = regularize_covariance(symmetrize(sigma))
        try:
            chol = cholesky_lower(sigma)
        except NotPositiveDefinite as err:
            raise SingularCovariance(
                f"sample covariance singular even after regularization (pivot {err.pivot})"
            ) from err
        return cls(mu, sigma, chol, count)

    @classmethod
    def from_moments(cls, mu, sigma, sample_count: int = 0) -> "MomentEstimate":
        """Exact or externally supplied moments (e.g. the true mean/covariance)."""
        mu = np.asarray(mu, dtype=float)
        sigma = symmetrize(np.asarray(sigma, dtype=float))
        return cls(mu, sigma, cholesky_lower(sigma), sample_count)

    @classmethod
    def identity(cls, dim: int, mu=None) -> "MomentEstimate":
        """Unit preconditioner: mu* = 0 (or given), Sigma* = I."""
        mu = np.zeros(dim) if mu is None else np.asarray(mu, dtype=float)
        eye = np.eye(dim)
        return cls(mu, eye, eye.copy(), 0)


@dataclass(frozen=True)
class BurninResult:
    moments: MomentEstimate
    position: np.ndarray


def recommended_burnin(dim: int) -> tuple:
    """(burn-in length, update interval) defaults by dimension."""
    if dim <= 2:
        return 500, 500
    if dim <= 10:
        return 10_000, 10_000
    return 300_000, 50_000


def run_burnin(
    target: TargetDensity,
    iterations: int,
    update_every: int | None = None,
    rw_epsilon0: float | None = None,
    rng=None,
    start=None,
) -> BurninResult:
    """Random-walk burn-in that estimates mu* and Sigma*.

    Every `update_every` iterations the interim moments recondition the walk;
    the returned estimate uses the last segment only. `update_every` must
    divide the burn-in length (default: one segment).
    """
    iterations = int(iterations)
    if iterations < 100:
        raise ValueError("burn-in needs at least 100 iterations")
    update_every = iterations if update_every is None else int(update_every)
    if update_every < 1 or iterations % update_every != 0:
        raise ValueError("update_every must divide the burn-in length")
    rng = np.random.default_rng() if rng is None else rng
    dim = target.dim
    scale0 = (RW_OPTIMAL_SCALE / math.sqrt(dim)) if rw_epsilon0 is None else float(rw_epsilon0)
    start = np.zeros(dim) if start is None else np.asarray(start, dtype=float)

    kernel = RandomWalkKernel(scale0, MomentEstimate.identity(dim))
    state = ChainState.at(target, start)
    estimate = None
    for _segment in range(iterations // update_every):
        run = run_chain(kernel, target, state, update_every, rng)
        state = run.state
        estimate = MomentEstimate.from_samples(run.samples)
        kernel = RandomWalkKernel(RW_OPTIMAL_SCALE / math.sqrt(dim), estimate)
    return BurninResult(moments=estimate, position=state.position.copy())


def tune_epsilon(
    kernel_kind: str,
    target: TargetDensity,
    moments: MomentEstimate,
    target_pjump: float,
    rng,
    c: float = 1.0,
    epsilon0: float = 1.0,
    adapt_iterations: int = 12_000,
    average_window: int = 4_000,
    validate_iterations: int = 8_000,
    tolerance: float = 0.02,
) -> float:
    """Tune a kernel's scale to a target average acceptance probability.

    Stochastic approximation on log eps (step t adds t^-0.6 (alpha - target)),
    averaged over the final window, then validated with a frozen-scale run.
    The whole pilot stays within adapt_iterations + validate_iterations steps.
    """
    if not 0.0 < target_pjump < 1.0:
        raise ValueError("target_pjump must lie in (0, 1)")
    kernel = make_kernel(kernel_kind, epsilon0, moments=moments, c=c)
    state = ChainState.at(target, moments.mu_star)
    log_eps = math.log(epsilon0)
    lo, hi = math.log(1e-6), math.log(1e6)
    tail = 0.0
    for t in range(1, adapt_iterations + 1):
        alpha, _ = kernel.step(state, target, rng)
        log_eps = min(hi, max(lo, log_eps + t**-0.6 * (alpha - target_pjump)))
        kernel.epsilon = math.exp(log_eps)
        if t > adapt_iterations - average_window:
            tail += log_eps
    epsilon = math.exp(tail / average_window)
    kernel.epsilon = epsilon
    alpha_sum = 0.0
    for _ in range(validate_iterations):
        alpha, _ = kernel.step(state, target, rng)
        alpha_sum += alpha
    achieved = alpha_sum / validate_iterations
    if abs(achieved - target_pjump) > tolerance:
        raise TuningFailed(
            f"wanted P_jump {target_pjump:.3f}, got {achieved:.3f} at epsilon {epsilon:.4g}"
        )
    return epsilon
