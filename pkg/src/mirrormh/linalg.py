"""Dense linear algebra used throughout: SPD Cholesky factors with positive
diagonals, triangular solves, SPD inversion, and covariance regularization.

All experiment dimensions stay below a few thousand, so everything is dense;
sparsity patterns elsewhere in the package are enforced by explicit zeroing.
"""

from dataclasses import dataclass

import numpy as np
from scipy.linalg import lapack, solve_triangular

from .errors import NotPositiveDefinite, NotSymmetric, SingularTriangular

SYMMETRY_RTOL = 1e-10
REGULARIZATION_REL = 1e-10


def _as_square(a) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix has non-finite entries")
    return a


def symmetrize(a: np.ndarray) -> np.ndarray:
    """Average away rounding asymmetry: (A + A^T) / 2."""
    return (a + a.T) / 2.0


def cholesky_lower(sigma) -> np.ndarray:
    """Lower Cholesky factor of an SPD matrix, with strictly positive diagonal.

    The input must be symmetric within ``SYMMETRY_RTOL`` times its largest
    entry; it is symmetrized by averaging before factorization so that sample
    covariances with rounding asymmetry do not fail.

    Raises NotSymmetric or NotPositiveDefinite (with the failing pivot index).
    """
    a = _as_square(sigma)
    scale = np.abs(a).max()
    if scale > 0 and np.abs(a - a.T).max() > SYMMETRY_RTOL * scale:
        raise NotSymmetric("matrix is not symmetric within tolerance")
    c, info = lapack.dpotrf(symmetrize(a), lower=1)
    if info > 0:
        raise NotPositiveDefinite(pivot=info - 1)
    if info < 0:
        raise ValueError(f"illegal value in argument {-info} of dpotrf")
    return np.tril(c)


def invert_spd(sigma) -> np.ndarray:
    """Inverse of an SPD matrix via its Cholesky factor."""
    chol = cholesky_lower(sigma)
    inv, info = lapack.dpotri(chol, lower=1)
    if info != 0:
        raise NotPositiveDefinite(pivot=abs(info) - 1)
    # dpotri fills only the lower triangle
    return np.tril(inv) + np.tril(inv, -1).T


def _check_triangular_diag(t: np.ndarray) -> None:
    zeros = np.flatnonzero(np.diag(t) == 0.0)
    if zeros.size:
        raise SingularTriangular(f"zero diagonal at index {zeros[0]}")


def solve_lower(chol_l, b) -> np.ndarray:
    """Solve L x = b for lower-triangular L."""
    chol_l = _as_square(chol_l)
    _check_triangular_diag(chol_l)
    return solve_triangular(chol_l, np.asarray(b, dtype=float), lower=True)


def solve_upper(u, b) -> np.ndarray:
    """Solve U x = b for upper-triangular U."""
    u = _as_square(u)
    _check_triangular_diag(u)
    return solve_triangular(u, np.asarray(b, dtype=float), lower=False)


def regularize_covariance(sigma, rel: float = REGULARIZATION_REL) -> np.ndarray:
    """Add rel * trace/d to the diagonal so short-burn-in covariances factor."""
    sigma = _as_square(sigma)
    d = sigma.shape[0]
    bump = rel * np.trace(sigma) / d
    return sigma + bump * np.eye(d)


@dataclass(frozen=True)
class BlockPartition:
    """Partition of a parameter vector into consecutive blocks.

    The first ``n_random`` blocks are the per-subject random-effect blocks;
    the final block is the global block (fixed effects plus covariance
    parameters). A partition with a single block has no random effects.
    """

    sizes: tuple

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.sizes)
        if not sizes or any(s < 1 for s in sizes):
            raise ValueError("block sizes must be positive")
        object.__setattr__(self, "sizes", sizes)

    @property
    def dim(self) -> int:
        return sum(self.sizes)

    @property
    def n_blocks(self) -> int:
        return len(self.sizes)

    @property
    def n_random(self) -> int:
        return len(self.sizes) - 1

    def slices(self) -> list:
        out, start = [], 0
        for s in self.sizes:
            out.append(slice(start, start + s))
            start += s
        return out

    def block_slice(self, i: int) -> slice:
        return self.slices()[i]
