"""Dense and sparse whitening maps and the block Metropolis sweep.

Dense whitening uses the Cholesky factor C of the estimated covariance:
theta = C phi. Sparse whitening factors the estimated precision instead,
zeroes the cross-subject blocks of the factor, and maps psi = R theta with
an arrow-patterned upper-triangular R (subject blocks on the diagonal, a
dense final block column for the global parameters, which must come last).
Because R^{-1} keeps the same pattern, each subject coordinate of
R^{-1} psi depends only on its own block and the global block, so block
updates of psi touch only one subject's data.
"""

import time
from dataclasses import dataclass

import numpy as np

from .adaptation import MomentEstimate
from .errors import PatternViolation
from .kernels import ChainState, KernelSpec, build_kernel
from .linalg import BlockPartition, cholesky_lower, invert_spd, solve_lower, solve_upper
from .targets import TargetDensity


@dataclass(frozen=True)
class WhiteningMap:
    """Invertible linear map between original and whitened coordinates.

    mode "dense": matrix is C (lower), whitened phi = C^{-1} theta.
    mode "sparse": matrix is R (upper, arrow pattern), whitened psi = R theta.
    log_abs_det_forward is the log |det| of the theta -> whitened map; it is a
    constant that cancels in acceptance ratios but is kept in reported
    log-density values.
    """

    mode: str
    matrix: np.ndarray
    partition: BlockPartition
    log_abs_det_forward: float
    mu: np.ndarray

    def forward(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        if self.mode == "dense":
            return solve_lower(self.matrix, theta)
        return self.matrix @ theta

    def inverse(self, whitened) -> np.ndarray:
        whitened = np.asarray(whitened, dtype=float)
        if self.mode == "dense":
            return self.matrix @ whitened
        return solve_upper(self.matrix, whitened)

    def transformed_mu(self) -> np.ndarray:
        return self.forward(self.mu)

    def inverse_matrix(self) -> np.ndarray:
        """Explicit matrix of the whitened -> theta map (pattern preserved)."""
        eye = np.eye(self.matrix.shape[0])
        if self.mode == "dense":
            return self.matrix.copy()
        return solve_upper(self.matrix, eye)

    def whiten_target(self, target: TargetDensity) -> TargetDensity:
        """The target expressed in whitened coordinates (Jacobian constant kept)."""
        const = self.log_abs_det_forward
        if self.mode == "dense":
            mat_t = self.matrix.T

            def grad(w):
                return mat_t @ target.grad_log_density(self.inverse(w))

        else:
            mat_t = self.matrix.T  # lower triangular

            def grad(w):
                return solve_lower(mat_t, target.grad_log_density(self.inverse(w)))

        def logp(w):
            return target.log_density(self.inverse(w)) - const

        return TargetDensity(
            target.dim, logp, grad, name=f"{target.name}|{self.mode}-whitened"
        )


def dense_whitening(moments: MomentEstimate, partition: BlockPartition) -> WhiteningMap:
    """Whitening through the Cholesky factor of the estimated covariance."""
    chol = np.asarray(moments.chol_lower, dtype=float)
    if partition.dim != chol.shape[0]:
        raise ValueError("partition does not match the moment dimension")
    log_det_forward = -float(np.sum(np.log(np.diag(chol))))
    return WhiteningMap("dense", chol.copy(), partition, log_det_forward, moments.mu_star.copy())


def sparse_whitening(moments: MomentEstimate, partition: BlockPartition) -> WhiteningMap:
    """Arrow-patterned whitening from the estimated precision matrix.

    The Cholesky factor of Omega* = (Sigma*)^{-1} has its cross-subject blocks
    zeroed (the global block stays last, so the exact-arrow case has no
    fill-in and zeroing removes nothing); R is that factor transposed.
    """
    if partition.dim != moments.dim:
        raise ValueError("partition does not match the moment dimension")
    omega = invert_spd(moments.sigma_star)
    factor = cholesky_lower(omega)
    slices = partition.slices()
    for i in range(1, partition.n_random):
        for j in range(i):
            factor[slices[i], slices[j]] = 0.0
    upper = factor.T.copy()
    if np.any(np.diag(upper) <= 0.0):
        raise PatternViolation("pattern-constrained factor has a non-positive diagonal")
    log_det_forward = float(np.sum(np.log(np.diag(upper))))
    return WhiteningMap("sparse", upper, partition, log_det_forward, moments.mu_star.copy())


@dataclass
class BlockChainRun:
    """Samples (in original theta coordinates) from a block sweep chain."""

    samples: np.ndarray
    alphas: np.ndarray  # (iterations, n_updates_per_sweep)
    seconds: float

    @property
    def mean_alpha(self) -> float:
        return float(self.alphas.mean())


class BlockSampler:
    """Algorithm runner for whitened block MH sweeps.

    Updates blocks 1..n+1 in fixed order each sweep. In sparse mode the
    subject blocks use the target's subject-local surface when it has one
    (``local_log_density``/``local_grad``), so their acceptance ratios touch
    only that subject's data; the final (global) block always uses full
    posterior differences. The whitening map is frozen for the sampler's
    lifetime.
    """

    def __init__(
        self,
        wmap: WhiteningMap,
        target,
        kernel_specs,
        theta0=None,
        w0=None,
        eta_componentwise: bool = False,
    ):
        self.wmap = wmap
        self.target = target
        self.partition = wmap.partition
        self._slices = self.partition.slices()
        n_blocks = self.partition.n_blocks
        if len(kernel_specs) != n_blocks:
            raise ValueError(f"need {n_blocks} kernel specs, got {len(kernel_specs)}")
        self.eta_componentwise = bool(eta_componentwise)

        if theta0 is not None:
            self.w = wmap.forward(theta0)
        elif w0 is not None:
            self.w = np.array(w0, dtype=float, copy=True)
        else:
            self.w = wmap.forward(wmap.mu)

        self._inv = wmap.inverse_matrix()
        self._jacobian = wmap.log_abs_det_forward
        self.theta = self._inv @ self.w

        self._mu_w = wmap.transformed_mu()
        self._use_local = (
            wmap.mode == "sparse"
            and self.partition.n_random > 0
            and hasattr(target, "local_log_density")
        )
        self._has_breakdown = hasattr(target, "log_density_breakdown")

        self._build_kernels(kernel_specs)
        self._build_conditionals()
        self._init_caches()

    # -- construction ------------------------------------------------------

    def _build_kernels(self, kernel_specs):
        slices = self._slices
        self._kernels = []
        for b, spec in enumerate(kernel_specs):
            sl = slices[b]
            size = sl.stop - sl.start
            if b == self.partition.n_blocks - 1 and self.eta_componentwise:
                self._kernels.append(
                    [
                        build_kernel(spec, MomentEstimate.identity(1, mu=self._mu_w[k : k + 1]))
                        for k in range(sl.start, sl.stop)
                    ]
                )
            else:
                self._kernels.append(
                    build_kernel(spec, MomentEstimate.identity(size, mu=self._mu_w[sl]))
                )

    def _build_conditionals(self):
        slices = self._slices
        n_random = self.partition.n_random
        last = slices[-1]
        self._local_targets = []
        if self._use_local:
            self._block_map = [self._inv[slices[i], slices[i]] for i in range(n_random)]
            self._global_map = [self._inv[slices[i], last] for i in range(n_random)]
            for i in range(n_random):
                self._local_targets.append(self._make_local_target(i))
        self._full_targets = {}

    def _make_local_target(self, i: int) -> TargetDensity:
        block = self._block_map[i]
        block_t = block.T
        size = block.shape[0]

        def logp(v):
            xi = block @ v + self._xi_base[i]
            return self.target.local_log_density(i, xi, self._eta())

        def grad(v):
            xi = block @ v + self._xi_base[i]
            return block_t @ self.target.local_grad(i, xi, self._eta())

        return TargetDensity(size, logp, grad, name=f"block{i}")

    def _full_conditional(self, indices) -> TargetDensity:
        """Conditional target over the given whitened indices, via the full posterior."""
        key = indices if isinstance(indices, slice) else tuple(indices)
        if key in self._full_targets:
            return self._full_targets[key]
        jac_cols = self._inv[:, indices]
        jac_cols_t = jac_cols.T
        size = jac_cols.shape[1]

        def logp(v):
            w_cand = self.w.copy()
            w_cand[indices] = v
            theta = self._inv @ w_cand
            if self._has_breakdown:
                total, per_subject = self.target.log_density_breakdown(theta)
            else:
                total = self.target.log_density(theta)
                per_subject = None
            self._pending = (theta, per_subject, total)
            return total - self._jacobian

        def grad(v):
            w_cand = self.w.copy()
            w_cand[indices] = v
            theta = self._inv @ w_cand
            return jac_cols_t @ self.target.grad_log_density(theta)

        cond = TargetDensity(size, logp, grad)
        self._full_targets[key] = cond
        return cond

    def _init_caches(self):
        slices = self._slices
        last = slices[-1]
        self._pending = None
        if self._use_local:
            eta = self.theta[last]
            self._xi_base = [self._global_map[i] @ self.w[last] for i in range(self.partition.n_random)]
            if self._has_breakdown:
                total, per_subject = self.target.log_density_breakdown(self.theta)
                self._local_logp = np.asarray(per_subject, dtype=float).copy()
            else:
                total = self.target.log_density(self.theta)
                self._local_logp = np.array(
                    [
                        self.target.local_log_density(i, self.theta[slices[i]], eta)
                        for i in range(self.partition.n_random)
                    ]
                )
        else:
            total = self.target.log_density(self.theta)
        self._full_logp = float(total) - self._jacobian

    # -- state helpers -----------------------------------------------------

    def _eta(self) -> np.ndarray:
        return self.theta[self._slices[-1]]

    def _refresh_after_global(self, theta, per_subject):
        self.theta = theta
        if self._use_local:
            last = self._slices[-1]
            w_last = self.w[last]
            for i in range(self.partition.n_random):
                self._xi_base[i] = self._global_map[i] @ w_last
            if per_subject is not None:
                self._local_logp = np.asarray(per_subject, dtype=float).copy()
            else:
                eta = self._eta()
                self._local_logp = np.array(
                    [
                        self.target.local_log_density(i, self.theta[self._slices[i]], eta)
                        for i in range(self.partition.n_random)
                    ]
                )

    # -- updates -----------------------------------------------------------

    def _update_local(self, i: int, rng):
        sl = self._slices[i]
        sub = ChainState(position=self.w[sl].copy(), log_density=float(self._local_logp[i]))
        alpha, accepted = self._kernels[i].step(sub, self._local_targets[i], rng)
        if accepted:
            delta = sub.log_density - self._local_logp[i]
            self.w[sl] = sub.position
            self.theta[sl] = self._block_map[i] @ sub.position + self._xi_base[i]
            self._local_logp[i] = sub.log_density
            self._full_logp += delta
        return alpha, accepted

    def _update_full(self, indices, kernel, rng):
        cond = self._full_conditional(indices)
        sub = ChainState(position=self.w[indices].copy(), log_density=self._full_logp)
        self._pending = None
        alpha, accepted = kernel.step(sub, cond, rng)
        if accepted:
            theta, per_subject, _total = self._pending
            self.w[indices] = sub.position
            self._full_logp = sub.log_density
            self._refresh_after_global(theta, per_subject)
        self._pending = None
        return alpha, accepted

    def updates_per_sweep(self) -> int:
        last = self._slices[-1]
        eta_updates = (last.stop - last.start) if self.eta_componentwise else 1
        return self.partition.n_random + eta_updates

    def sweep(self, rng):
        """One pass over all blocks; returns (alphas, accepted) per update."""
        slices = self._slices
        n_random = self.partition.n_random
        alphas = np.empty(self.updates_per_sweep())
        accepts = np.zeros(self.updates_per_sweep(), dtype=bool)
        pos = 0
        for i in range(n_random):
            if self._use_local:
                alphas[pos], accepts[pos] = self._update_local(i, rng)
            else:
                alphas[pos], accepts[pos] = self._update_full(slices[i], self._kernels[i], rng)
            pos += 1
        last = slices[-1]
        if self.eta_componentwise:
            for offset, kernel in enumerate(self._kernels[-1]):
                idx = slice(last.start + offset, last.start + offset + 1)
                alphas[pos], accepts[pos] = self._update_full(idx, kernel, rng)
                pos += 1
        else:
            alphas[pos], accepts[pos] = self._update_full(last, self._kernels[-1], rng)
            pos += 1
        return alphas, accepts

    def run(self, iterations: int, rng) -> BlockChainRun:
        iterations = int(iterations)
        samples = np.empty((iterations, self.partition.dim))
        alphas = np.empty((iterations, self.updates_per_sweep()))
        t0 = time.perf_counter()
        for t in range(iterations):
            alphas[t], _ = self.sweep(rng)
            samples[t] = self.theta
        seconds = time.perf_counter() - t0
        return BlockChainRun(samples=samples, alphas=alphas, seconds=seconds)


def block_mh_sweep(psi, wmap, kernel_specs, target, rng, eta_componentwise: bool = False):
    """One block sweep starting from whitened coordinates psi.

    Returns (updated psi, alphas, accepted flags). For repeated sweeps build a
    BlockSampler once and call sweep() in a loop.
    """
    sampler = BlockSampler(
        wmap, target, kernel_specs, w0=psi, eta_componentwise=eta_componentwise
    )
    alphas, accepts = sampler.sweep(rng)
    return sampler.w.copy(), alphas, accepts
