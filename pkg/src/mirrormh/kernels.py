"""Proposal kernels and the Metropolis-Hastings accept/reject step.

All Gaussian-family kernels are preconditioned: proposals are scaled by
eps * sqrt(Sigma*) where sqrt(Sigma*) is the lower Cholesky factor of the
estimated target covariance. Unpreconditioned variants just use identity
moments. Mirror-type kernels launch the base proposal from the reflection
of the current state through the estimated location mu*.
"""

import math
import time
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np
from scipy.linalg import solve_triangular

from .errors import MissingPreconditioner, NonFiniteGradient, NonPositiveEpsilon
from .targets import TargetDensity

LOG_2PI = math.log(2.0 * math.pi)

KERNEL_KINDS = ("rw", "mirror", "mala", "mirrormala", "hmc", "mirrorhmc")


@dataclass(frozen=True)
class KernelSpec:
    """Plain description of a kernel, used by experiment configs and block samplers."""

    kind: str
    epsilon: float
    c: float = 1.0
    leapfrog_steps: int = 10

    def __post_init__(self):
        if self.kind not in KERNEL_KINDS:
            raise ValueError(f"unknown kernel kind {self.kind!r}")
        if not self.epsilon > 0:
            raise NonPositiveEpsilon(f"epsilon must be positive, got {self.epsilon}")
        if not self.c > 0:
            raise ValueError(f"c must be positive, got {self.c}")
        if self.leapfrog_steps < 1:
            raise ValueError("leapfrog_steps must be at least 1")


@dataclass
class ChainState:
    """Current position with cached log-density/gradient and acceptance tallies."""

    position: np.ndarray
    log_density: float
    gradient: Optional[np.ndarray] = None
    accept_count: int = 0
    alpha_sum: float = 0.0
    steps: int = 0

    @classmethod
    def at(cls, target: TargetDensity, position) -> "ChainState":
        position = np.array(position, dtype=float, copy=True).ravel()
        return cls(position=position, log_density=float(target.log_density(position)))

    @property
    def accept_rate(self) -> float:
        return self.accept_count / self.steps if self.steps else 0.0

    @property
    def mean_alpha(self) -> float:
        return self.alpha_sum / self.steps if self.steps else 0.0


class Proposal(NamedTuple):
    candidate: np.ndarray
    log_q_forward: float
    log_q_backward: float
    gradient: Optional[np.ndarray] = None  # target gradient at the candidate, if computed


class Kernel:
    """Base MH kernel: subclasses provide propose(); step() runs accept/reject."""

    kind = "base"

    def propose(self, state: ChainState, target: TargetDensity, rng) -> Proposal:
        raise NotImplementedError

    def step(self, state: ChainState, target: TargetDensity, rng):
        """One MH transition. Mutates state; returns (alpha, accepted)."""
        prop = self.propose(state, target, rng)
        cand_logp = float(target.log_density(prop.candidate))
        log_ratio = cand_logp - state.log_density + prop.log_q_backward - prop.log_q_forward
        if log_ratio >= 0.0:
            alpha = 1.0
        elif math.isnan(log_ratio):
            alpha = 0.0
        else:
            alpha = math.exp(log_ratio)
        state.steps += 1
        state.alpha_sum += alpha
        accepted = rng.random() < alpha
        if accepted:
            state.position = prop.candidate
            state.log_density = cand_logp
            state.gradient = prop.gradient
            state.accept_count += 1
        return alpha, accepted


class _PreconditionedKernel(Kernel):
    """Gaussian-family kernel scaled by eps * chol(Sigma*)."""

    def __init__(self, epsilon: float, moments):
        if moments is None:
            raise MissingPreconditioner(f"{self.kind} kernel needs a MomentEstimate")
        if not epsilon > 0:
            raise NonPositiveEpsilon(f"epsilon must be positive, got {epsilon}")
        self.moments = moments
        self.epsilon = float(epsilon)
        self._chol = np.asarray(moments.chol_lower, dtype=float)
        self._dim = self._chol.shape[0]
        self._chol_inv = solve_triangular(self._chol, np.eye(self._dim), lower=True)
        self._log_det_chol = float(np.sum(np.log(np.diag(self._chol))))
        self._norm_eps = -1.0  # cached epsilon of _log_norm / _half_inv_eps2

    def _noise(self, rng) -> np.ndarray:
        if self._dim == 1:
            return (self.epsilon * self._chol[0, 0]) * rng.standard_normal(1)
        return self.epsilon * (self._chol @ rng.standard_normal(self._dim))

    def _log_q(self, residual: np.ndarray) -> float:
        eps = self.epsilon
        if eps != self._norm_eps:
            # epsilon changes only under tuning; cache the scale-dependent parts
            self._norm_eps = eps
            self._half_inv_eps2 = 0.5 / (eps * eps)
            self._log_norm = (
                -self._dim * math.log(eps) - self._log_det_chol - 0.5 * self._dim * LOG_2PI
            )
        if self._dim == 1:
            u = self._chol_inv[0, 0] * residual[0]
            quad = u * u
        else:
            u = self._chol_inv @ residual
            quad = u @ u
        return self._log_norm - quad * self._half_inv_eps2


class RandomWalkKernel(_PreconditionedKernel):
    kind = "rw"

    def propose(self, state, target, rng):
        candidate = state.position + self._noise(rng)
        step_vec = candidate - state.position
        return Proposal(candidate, self._log_q(step_vec), self._log_q(-step_vec))


class _MirrorMixin:
    """Reflection through mu*: m(x) = mu* + c (mu* - x)."""

    def _init_mirror(self, c: float, mu):
        if not c > 0:
            raise ValueError(f"c must be positive, got {c}")
        if mu is None:
            raise MissingPreconditioner("mirror-type kernel needs mu*")
        self.c = float(c)
        self._mu = np.asarray(mu, dtype=float)

    def reflect(self, x: np.ndarray) -> np.ndarray:
        return self._mu + self.c * (self._mu - x)


class MirrorKernel(_PreconditionedKernel, _MirrorMixin):
    kind = "mirror"

    def __init__(self, epsilon, moments, c: float = 1.0, mu_star=None):
        super().__init__(epsilon, moments)
        self._init_mirror(c, moments.mu_star if mu_star is None else mu_star)

    def propose(self, state, target, rng):
        # Residuals are arranged so that for c = 1 the forward and backward
        # values are the same commutative sum, hence exactly equal.
        from_mu = state.position - self._mu
        mean_fwd = self._mu - self.c * from_mu
        candidate = mean_fwd + self._noise(rng)
        cand_from_mu = candidate - self._mu
        log_q_fwd = self._log_q(cand_from_mu + self.c * from_mu)
        log_q_bwd = self._log_q(from_mu + self.c * cand_from_mu)
        return Proposal(candidate, log_q_fwd, log_q_bwd)


class MalaKernel(_PreconditionedKernel):
    kind = "mala"

    def __init__(self, epsilon, moments):
        super().__init__(epsilon, moments)
        self._sigma = np.asarray(moments.sigma_star, dtype=float)

    def _grad(self, target, point) -> np.ndarray:
        g = np.asarray(target.grad_log_density(point), dtype=float)
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradient(f"gradient not finite at {point!r}")
        return g

    def _drift_mean(self, point, grad) -> np.ndarray:
        if self._dim == 1:
            return point + (0.5 * self.epsilon * self.epsilon * self._sigma[0, 0]) * grad
        return point + (0.5 * self.epsilon * self.epsilon) * (self._sigma @ grad)

    def propose(self, state, target, rng):
        grad = state.gradient
        if grad is None:
            grad = self._grad(target, state.position)
            state.gradient = grad
        mean_fwd = self._drift_mean(state.position, grad)
        candidate = mean_fwd + self._noise(rng)
        grad_cand = self._grad(target, candidate)
        mean_bwd = self._drift_mean(candidate, grad_cand)
        return Proposal(
            candidate,
            self._log_q(candidate - mean_fwd),
            self._log_q(state.position - mean_bwd),
            gradient=grad_cand,
        )


class MirrorMalaKernel(MalaKernel, _MirrorMixin):
    kind = "mirrormala"

    def __init__(self, epsilon, moments, c: float = 1.0, mu_star=None):
        super().__init__(epsilon, moments)
        self._init_mirror(c, moments.mu_star if mu_star is None else mu_star)

    def propose(self, state, target, rng):
        # Gradients at the reflected points are computed fresh every step: the
        # launch point changes with the state, so nothing useful can be cached.
        launch = self.reflect(state.position)
        mean_fwd = self._drift_mean(launch, self._grad(target, launch))
        candidate = mean_fwd + self._noise(rng)
        launch_bwd = self.reflect(candidate)
        mean_bwd = self._drift_mean(launch_bwd, self._grad(target, launch_bwd))
        return Proposal(
            candidate,
            self._log_q(candidate - mean_fwd),
            self._log_q(state.position - mean_bwd),
        )


class HmcKernel(Kernel):
    """Fixed-length leapfrog HMC with unit (or supplied) inverse mass."""

    kind = "hmc"

    def __init__(self, epsilon: float, leapfrog_steps: int, mass_inverse=None):
        if not epsilon > 0:
            raise NonPositiveEpsilon(f"epsilon must be positive, got {epsilon}")
        if leapfrog_steps < 1:
            raise ValueError("leapfrog_steps must be at least 1")
        self.epsilon = float(epsilon)
        self.leapfrog_steps = int(leapfrog_steps)
        self.mass_inverse = None if mass_inverse is None else np.asarray(mass_inverse, float)

    def _grad(self, target, point) -> np.ndarray:
        g = np.asarray(target.grad_log_density(point), dtype=float)
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradient(f"gradient not finite at {point!r}")
        return g

    def _velocity(self, momentum):
        if self.mass_inverse is None:
            return momentum
        return self.mass_inverse @ momentum

    def _kinetic(self, momentum) -> float:
        return 0.5 * float(momentum @ self._velocity(momentum))

    def leapfrog(self, target, position, momentum):
        """Run leapfrog_steps integration steps; returns (position, momentum)."""
        eps = self.epsilon
        grad = self._grad(target, position)
        momentum = momentum + 0.5 * eps * grad
        for step in range(self.leapfrog_steps):
            position = position + eps * self._velocity(momentum)
            grad = self._grad(target, position)
            if step < self.leapfrog_steps - 1:
                momentum = momentum + eps * grad
        momentum = momentum + 0.5 * eps * grad
        return position, momentum

    def _launch(self, position):
        return position

    def step(self, state, target, rng):
        momentum0 = rng.standard_normal(state.position.size)
        position, momentum = self.leapfrog(target, self._launch(state.position), momentum0)
        cand_logp = float(target.log_density(position))
        # H = -log pi(theta) + kinetic(p); accept with exp(H0 - H1)
        log_ratio = (cand_logp - self._kinetic(momentum)) - (
            state.log_density - self._kinetic(momentum0)
        )
        if log_ratio >= 0.0:
            alpha = 1.0
        elif math.isnan(log_ratio):
            alpha = 0.0
        else:
            alpha = math.exp(log_ratio)
        state.steps += 1
        state.alpha_sum += alpha
        accepted = rng.random() < alpha
        if accepted:
            state.position = position
            state.log_density = cand_logp
            state.gradient = None
            state.accept_count += 1
        return alpha, accepted


class MirrorHmcKernel(HmcKernel, _MirrorMixin):
    """HMC trajectory launched from the reflection of the current state."""

    kind = "mirrorhmc"

    def __init__(self, epsilon, leapfrog_steps, mu_star, c: float = 1.0, mass_inverse=None):
        super().__init__(epsilon, leapfrog_steps, mass_inverse)
        self._init_mirror(c, mu_star)

    def _launch(self, position):
        return self.reflect(position)


def mh_step(kernel: Kernel, state: ChainState, target: TargetDensity, rng):
    """One Metropolis-Hastings transition; mutates state, returns (alpha, accepted)."""
    return kernel.step(state, target, rng)


def propose(kernel: Kernel, state: ChainState, target: TargetDensity, rng) -> Proposal:
    """Draw a candidate with forward/backward proposal log-densities."""
    return kernel.propose(state, target, rng)


def mirrorize(base: Kernel, mu_star=None, c: float = 1.0) -> Kernel:
    """Wrap a base RW/MALA/HMC kernel so proposals launch from the mirror image.

    mirrorize(RW) is the Mirror kernel; mirrorize(MALA) the MirrorMALA kernel;
    mirrorize(HMC) the MirrorHMC kernel. mu_star defaults to the base kernel's
    preconditioner location where one exists.
    """
    if isinstance(base, RandomWalkKernel):
        return MirrorKernel(base.epsilon, base.moments, c=c, mu_star=mu_star)
    if isinstance(base, MirrorMalaKernel):
        raise ValueError("kernel is already mirror-type")
    if isinstance(base, MalaKernel):
        return MirrorMalaKernel(base.epsilon, base.moments, c=c, mu_star=mu_star)
    if isinstance(base, HmcKernel) and not isinstance(base, MirrorHmcKernel):
        if mu_star is None:
            raise MissingPreconditioner("mirrorized HMC needs an explicit mu*")
        return MirrorHmcKernel(
            base.epsilon, base.leapfrog_steps, mu_star, c=c, mass_inverse=base.mass_inverse
        )
    raise ValueError(f"cannot mirrorize kernel of type {type(base).__name__}")


def make_kernel(
    kind: str,
    epsilon: float,
    moments=None,
    c: float = 1.0,
    leapfrog_steps: int = 10,
    mass_inverse=None,
    mu_star=None,
) -> Kernel:
    """Build a kernel by kind string; used by configs and block samplers."""
    if kind == "rw":
        return RandomWalkKernel(epsilon, moments)
    if kind == "mirror":
        return MirrorKernel(epsilon, moments, c=c, mu_star=mu_star)
    if kind == "mala":
        return MalaKernel(epsilon, moments)
    if kind == "mirrormala":
        return MirrorMalaKernel(epsilon, moments, c=c, mu_star=mu_star)
    if kind == "hmc":
        return HmcKernel(epsilon, leapfrog_steps, mass_inverse=mass_inverse)
    if kind == "mirrorhmc":
        if mu_star is None and moments is not None:
            mu_star = moments.mu_star
        return MirrorHmcKernel(epsilon, leapfrog_steps, mu_star, c=c, mass_inverse=mass_inverse)
    raise ValueError(f"unknown kernel kind {kind!r}")


def build_kernel(spec: KernelSpec, moments=None, mass_inverse=None, mu_star=None) -> Kernel:
    return make_kernel(
        spec.kind,
        spec.epsilon,
        moments=moments,
        c=spec.c,
        leapfrog_steps=spec.leapfrog_steps,
        mass_inverse=mass_inverse,
        mu_star=mu_star,
    )


@dataclass
class ChainRun:
    """Samples and acceptance record of one chain."""

    samples: np.ndarray
    alphas: np.ndarray
    state: ChainState
    seconds: float

    @property
    def mean_alpha(self) -> float:
        return float(self.alphas.mean())


def run_chain(kernel: Kernel, target: TargetDensity, start, iterations: int, rng) -> ChainRun:
    """Run a chain for `iterations` MH steps, recording every position and alpha.

    `start` may be a position vector or an existing ChainState (continued
    in place). Timing covers the sampling loop only.
    """
    if isinstance(start, ChainState):
        state = start
    else:
        state = ChainState.at(target, start)
    iterations = int(iterations)
    samples = np.empty((iterations, state.position.size))
    alphas = np.empty(iterations)
    step = kernel.step
    t0 = time.perf_counter()
    for t in range(iterations):
        alphas[t], _ = step(state, target, rng)
        samples[t] = state.position
    seconds = time.perf_counter() - t0
    return ChainRun(samples=samples, alphas=alphas, state=state, seconds=seconds)
