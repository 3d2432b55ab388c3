"""Generalized linear mixed model posteriors with subject-local structure.

Parameter layout is theta = (xi_1, ..., xi_n, beta, zeta): one random-effect
vector per subject, fixed effects, then the unconstrained covariance
parameterization zeta = vech(W*) where W is the lower Cholesky factor of the
random-effect covariance G and W* log-transforms its diagonal. Subjects are
conditionally independent given (beta, zeta), which is what the sparse
whitening and block samplers exploit.
"""

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import expit

from .errors import BadSubjectGrouping, DimensionMismatch, SchemaError
from .linalg import BlockPartition, cholesky_lower
from .targets import TargetDensity

FAMILIES = ("poisson-log", "bernoulli-logit")
DEFAULT_PRIOR_SD = 10.0


def vech_wstar(g) -> np.ndarray:
    """Unconstrained vector for an SPD matrix: column-stacked lower Cholesky
    triangle with log-transformed diagonal."""
    w = cholesky_lower(np.asarray(g, dtype=float))
    r = w.shape[0]
    out = []
    for j in range(r):
        for i in range(j, r):
            out.append(math.log(w[i, i]) if i == j else w[i, j])
    return np.array(out)


def unvech_wstar(zeta) -> tuple:
    """Inverse of vech_wstar: returns (W, G) with G = W W^T."""
    zeta = np.asarray(zeta, dtype=float)
    r = int((math.isqrt(8 * zeta.size + 1) - 1) // 2)
    if r * (r + 1) != 2 * zeta.size:
        raise DimensionMismatch(f"zeta length {zeta.size} is not r(r+1)/2 for any r")
    w = np.zeros((r, r))
    pos = 0
    for j in range(r):
        for i in range(j, r):
            w[i, j] = math.exp(zeta[pos]) if i == j else zeta[pos]
            pos += 1
    return w, w @ w.T


@dataclass(frozen=True)
class GlmmSpec:
    """Data and priors for a GLMM with one random-effect block per subject."""

    family: str
    x: np.ndarray  # (N, p) fixed-effect design, all subjects stacked
    z: np.ndarray  # (N, r) random-effect design
    y: np.ndarray  # (N,)
    offsets: np.ndarray  # (n+1,) row offsets per subject
    subject_ids: tuple
    prior_sd_beta: float = DEFAULT_PRIOR_SD
    prior_sd_zeta: float = DEFAULT_PRIOR_SD

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}")
        if self.x.shape[0] != self.y.size or self.z.shape[0] != self.y.size:
            raise DimensionMismatch("design and response row counts differ")
        if self.family == "bernoulli-logit" and not np.all((self.y == 0) | (self.y == 1)):
            raise ValueError("bernoulli responses must be binary")
        if self.family == "poisson-log" and np.any(self.y < 0):
            raise ValueError("poisson responses must be non-negative counts")

    @property
    def n_subjects(self) -> int:
        return self.offsets.size - 1

    @property
    def counts(self) -> np.ndarray:
        return np.diff(self.offsets)

    @property
    def p(self) -> int:
        return self.x.shape[1]

    @property
    def r(self) -> int:
        return self.z.shape[1]

    @property
    def n_cov_params(self) -> int:
        return self.r * (self.r + 1) // 2

    @property
    def dim(self) -> int:
        return self.n_subjects * self.r + self.p + self.n_cov_params

    def partition(self) -> BlockPartition:
        return BlockPartition(
            tuple([self.r] * self.n_subjects + [self.p + self.n_cov_params])
        )


def _group_rows(rows, subject_col: str):
    """Group row dicts by subject id, preserving first-appearance order."""
    if not rows:
        raise BadSubjectGrouping("no data rows")
    groups: dict = {}
    for row in rows:
        sid = row.get(subject_col)
        if sid is None or (isinstance(sid, str) and not sid.strip()):
            raise BadSubjectGrouping(f"missing subject id in row {row!r}")
        groups.setdefault(sid, []).append(row)
    return groups


def _require(row, cols):
    for col in cols:
        if col not in row:
            raise SchemaError(f"missing column {col!r}")


def build_epilepsy_model(rows, prior_sd: float = DEFAULT_PRIOR_SD) -> GlmmSpec:
    """Poisson random-intercept model for seizure-count trial data.

    Expected columns: subject, visit, y, base (baseline count), trt, age.
    Derived covariates: Base = log(base/4), Age = log(age) centered at the
    mean over subjects, Base x Trt, and the fourth-visit indicator.
    """
    groups = _group_rows(rows, "subject")
    _require(rows[0], ["subject", "visit", "y", "base", "trt", "age"])
    log_ages = [math.log(float(g[0]["age"])) for g in groups.values()]
    mean_log_age = sum(log_ages) / len(log_ages)

    x_rows, y_vals, offsets = [], [], [0]
    for g in groups.values():
        for row in g:
            base = math.log(float(row["base"]) / 4.0)
            trt = float(row["trt"])
            age = math.log(float(row["age"])) - mean_log_age
            v4 = 1.0 if int(float(row["visit"])) == 4 else 0.0
            x_rows.append([1.0, base, trt, age, base * trt, v4])
            y_vals.append(float(row["y"]))
        offsets.append(len(y_vals))
    n_rows = len(y_vals)
    return GlmmSpec(
        family="poisson-log",
        x=np.array(x_rows),
        z=np.ones((n_rows, 1)),
        y=np.array(y_vals),
        offsets=np.array(offsets),
        subject_ids=tuple(groups.keys()),
        prior_sd_beta=prior_sd,
        prior_sd_zeta=prior_sd,
    )


def build_polypharmacy_model(
    rows, prior_sd: float = DEFAULT_PRIOR_SD, scale_age: bool = False
) -> GlmmSpec:
    """Bernoulli random-intercept model for repeated drug-use indicators.

    Expected columns: subject, y, gender, race, age, mhv1, mhv2, mhv3,
    inptmhv. Age is used as-is unless scale_age z-scores it.
    """
    groups = _group_rows(rows, "subject")
    cols = ["subject", "y", "gender", "race", "age", "mhv1", "mhv2", "mhv3", "inptmhv"]
    _require(rows[0], cols)
    ages = np.array([float(row["age"]) for row in rows])
    if scale_age:
        age_loc, age_scale = ages.mean(), ages.std() or 1.0
    else:
        age_loc, age_scale = 0.0, 1.0

    x_rows, y_vals, offsets = [], [], [0]
    for g in groups.values():
        for row in g:
            x_rows.append(
                [
                    1.0,
                    float(row["gender"]),
                    float(row["race"]),
                    (float(row["age"]) - age_loc) / age_scale,
                    float(row["mhv1"]),
                    float(row["mhv2"]),
                    float(row["mhv3"]),
                    float(row["inptmhv"]),
                ]
            )
            y_vals.append(float(row["y"]))
        offsets.append(len(y_vals))
    n_rows = len(y_vals)
    return GlmmSpec(
        family="bernoulli-logit",
        x=np.array(x_rows),
        z=np.ones((n_rows, 1)),
        y=np.array(y_vals),
        offsets=np.array(offsets),
        subject_ids=tuple(groups.keys()),
        prior_sd_beta=prior_sd,
        prior_sd_zeta=prior_sd,
    )


def build_synthetic_model(rows, prior_sd: float = DEFAULT_PRIOR_SD) -> GlmmSpec:
    """Model for the synthetic-data schema written by generate_synthetic_glmm."""
    groups = _group_rows(rows, "subject")
    first = rows[0]
    _require(first, ["subject", "y", "family"])
    x_cols = sorted((c for c in first if c.startswith("x")), key=lambda c: int(c[1:]))
    z_cols = sorted((c for c in first if c.startswith("z")), key=lambda c: int(c[1:]))
    family = str(first["family"])

    x_rows, z_rows, y_vals, offsets = [], [], [], [0]
    for g in groups.values():
        for row in g:
            x_rows.append([1.0] + [float(row[c]) for c in x_cols])
            z_rows.append([1.0] + [float(row[c]) for c in z_cols])
            y_vals.append(float(row["y"]))
        offsets.append(len(y_vals))
    return GlmmSpec(
        family=family,
        x=np.array(x_rows),
        z=np.array(z_rows),
        y=np.array(y_vals),
        offsets=np.array(offsets),
        subject_ids=tuple(groups.keys()),
        prior_sd_beta=prior_sd,
        prior_sd_zeta=prior_sd,
    )


def generate_synthetic_glmm(family, n, n_i, beta_true, zeta_true, seed) -> tuple:
    """Draw a synthetic GLMM dataset; returns (rows, truth).

    Covariates beyond the intercept are standard normal; the random-effect
    design is an intercept plus standard-normal columns when r > 1.
    """
    if family not in FAMILIES:
        raise ValueError(f"unknown family {family!r}")
    rng = np.random.default_rng(seed)
    beta = np.asarray(beta_true, dtype=float)
    zeta = np.asarray(zeta_true, dtype=float)
    w, g = unvech_wstar(zeta)
    r = w.shape[0]
    p = beta.size

    rows = []
    xis = np.empty((n, r))
    for subject in range(n):
        xi = w @ rng.standard_normal(r)
        xis[subject] = xi
        for _obs in range(n_i):
            x = rng.standard_normal(p - 1)
            z_extra = rng.standard_normal(r - 1)
            eta = beta[0] + x @ beta[1:] + xi[0] + z_extra @ xi[1:]
            if family == "poisson-log":
                y = rng.poisson(math.exp(eta))
            else:
                y = float(rng.random() < expit(eta))
            row = {"subject": subject, "y": y, "family": family}
            row.update({f"x{k + 1}": x[k] for k in range(p - 1)})
            row.update({f"z{k + 1}": z_extra[k] for k in range(r - 1)})
            rows.append(row)
    truth = {"beta": beta.copy(), "zeta": zeta.copy(), "xi": xis, "g": g}
    return rows, truth


def write_rows_csv(rows, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.DictWriter(handle, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)


def read_rows_csv(path) -> list:
    """Read a CSV into row dicts, converting numeric fields to float."""
    with open(path, newline="", encoding="utf-8") as handle:
        raw = list(csv.DictReader(handle))
    rows = []
    for entry in raw:
        row = {}
        for key, value in entry.items():
            try:
                row[key] = float(value)
            except (TypeError, ValueError):
                row[key] = value
        rows.append(row)
    return rows


@dataclass
class CostCounters:
    """Instrumentation for the block-sampling cost accounting."""

    subject_lik_evals: int = 0  # observation terms evaluated via the local surface
    full_posterior_evals: int = 0
    gradient_evals: int = 0

    def reset(self):
        self.subject_lik_evals = 0
        self.full_posterior_evals = 0
        self.gradient_evals = 0


class GlmmPosterior:
    """Posterior of a GlmmSpec exposing full and subject-local evaluation.

    Implements the block-structured target surface used by BlockSampler:
    log_density / grad_log_density over the full parameter vector,
    local_log_density / local_grad touching one subject's data, and
    log_density_breakdown returning per-subject local contributions.
    """

    def __init__(self, spec: GlmmSpec):
        self.spec = spec
        self.counters = CostCounters()
        self.dim = spec.dim
        self._n = spec.n_subjects
        self._p = spec.p
        self._r = spec.r
        self._q = spec.n_cov_params
        self._offsets = spec.offsets
        self._row_subject = np.repeat(np.arange(self._n), spec.counts)
        self._beta_var = spec.prior_sd_beta**2
        self._zeta_var = spec.prior_sd_zeta**2
        self._subject_views = [
            (
                spec.x[spec.offsets[i] : spec.offsets[i + 1]],
                spec.z[spec.offsets[i] : spec.offsets[i + 1]],
                spec.y[spec.offsets[i] : spec.offsets[i + 1]],
            )
            for i in range(self._n)
        ]
        self._zeta_cache = None

    # -- parameter layout ----------------------------------------------------

    def partition(self) -> BlockPartition:
        return self.spec.partition()

    def split(self, theta) -> tuple:
        """(xi (n, r), beta, zeta) views of the flat parameter vector."""
        n, r, p = self._n, self._r, self._p
        xi = theta[: n * r].reshape(n, r)
        beta = theta[n * r : n * r + p]
        zeta = theta[n * r + p :]
        return xi, beta, zeta

    def join(self, xi, beta, zeta) -> np.ndarray:
        return np.concatenate([np.asarray(xi).ravel(), beta, zeta])

    def _cov_factors(self, zeta):
        """(W, W^{-1}, sum log diag W), cached on the zeta value.

        zeta is constant across a whole sweep of subject-block updates, so the
        cache makes the per-subject prior evaluations cheap r x r products.
        """
        cached = self._zeta_cache
        if cached is not None and np.array_equal(cached[0], zeta):
            return cached[1], cached[2], cached[3]
        w, _g = unvech_wstar(zeta)
        w_inv = solve_triangular(w, np.eye(self._r), lower=True)
        log_diag = float(np.log(np.diag(w)).sum())
        self._zeta_cache = (zeta.copy(), w, w_inv, log_diag)
        return w, w_inv, log_diag

    # -- likelihood pieces -----------------------------------------------------

    def _obs_loglik(self, eta, y) -> float:
        if self.spec.family == "poisson-log":
            return float(y @ eta - np.exp(eta).sum())
        return float(y @ eta - np.logaddexp(0.0, eta).sum())

    def _obs_mean(self, eta) -> np.ndarray:
        if self.spec.family == "poisson-log":
            return np.exp(eta)
        return expit(eta)

    def _xi_prior_terms(self, xi_rows, w_inv, log_diag) -> np.ndarray:
        """Per-subject log N(xi_i; 0, W W^T) up to a zeta-free constant."""
        u = w_inv @ xi_rows.T
        return -0.5 * np.einsum("ij,ij->j", u, u) - log_diag

    # -- full surface ------------------------------------------------------------

    def log_density_breakdown(self, theta) -> tuple:
        """(total log posterior, per-subject local contributions).

        Local contribution i is log p(xi_i | zeta) plus subject i's
        observation terms; the total adds the beta and zeta priors.
        """
        theta = np.asarray(theta, dtype=float)
        xi, beta, zeta = self.split(theta)
        _w, w_inv, log_diag = self._cov_factors(zeta)
        eta = self.spec.x @ beta + np.einsum("ij,ij->i", self.spec.z, xi[self._row_subject])
        if self.spec.family == "poisson-log":
            obs = self.spec.y * eta - np.exp(eta)
        else:
            obs = self.spec.y * eta - np.logaddexp(0.0, eta)
        per_subject = np.add.reduceat(obs, self._offsets[:-1]) + self._xi_prior_terms(
            xi, w_inv, log_diag
        )
        priors = -0.5 * float(beta @ beta) / self._beta_var
        priors -= 0.5 * float(zeta @ zeta) / self._zeta_var
        self.counters.full_posterior_evals += 1
        return float(per_subject.sum() + priors), per_subject

    def log_density(self, theta) -> float:
        total, _ = self.log_density_breakdown(theta)
        return total

    def grad_log_density(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        xi, beta, zeta = self.split(theta)
        w, w_inv, _log_diag = self._cov_factors(zeta)
        eta = self.spec.x @ beta + np.einsum("ij,ij->i", self.spec.z, xi[self._row_subject])
        resid = self.spec.y - self._obs_mean(eta)

        grad_beta = self.spec.x.T @ resid - beta / self._beta_var

        u = w_inv @ xi.T  # (r, n)
        v = w_inv.T @ u  # G^{-1} xi_i columns
        zw = self.spec.z * resid[:, None]
        grad_xi = np.add.reduceat(zw, self._offsets[:-1], axis=0) - v.T

        m = v @ u.T  # sum_i v_i u_i^T
        grad_w = m - self._n * np.diag(1.0 / np.diag(w))
        grad_zeta = np.empty(self._q)
        pos = 0
        for j in range(self._r):
            for i in range(j, self._r):
                grad_zeta[pos] = grad_w[i, j] * (w[i, i] if i == j else 1.0)
                pos += 1
        grad_zeta -= zeta / self._zeta_var

        self.counters.gradient_evals += 1
        return np.concatenate([grad_xi.ravel(), grad_beta, grad_zeta])

    def as_target(self) -> TargetDensity:
        return TargetDensity(
            self.dim, self.log_density, self.grad_log_density, name=f"glmm-{self.spec.family}"
        )

    # -- subject-local surface ------------------------------------------------------

    def _split_eta(self, eta_block) -> tuple:
        return eta_block[: self._p], eta_block[self._p :]

    def local_log_density(self, i: int, xi_i, eta_block) -> float:
        """log p(xi_i | zeta) + subject i's observation terms (absolute value,
        up to constants shared across xi_i values)."""
        beta, zeta = self._split_eta(np.asarray(eta_block, dtype=float))
        xi_i = np.asarray(xi_i, dtype=float)
        _w, w_inv, log_diag = self._cov_factors(zeta)
        x_i, z_i, y_i = self._subject_views[i]
        eta = x_i @ beta + z_i @ xi_i
        u = w_inv @ xi_i
        prior = -0.5 * float(u @ u) - log_diag
        self.counters.subject_lik_evals += y_i.size
        return prior + self._obs_loglik(eta, y_i)

    def local_grad(self, i: int, xi_i, eta_block) -> np.ndarray:
        beta, zeta = self._split_eta(np.asarray(eta_block, dtype=float))
        xi_i = np.asarray(xi_i, dtype=float)
        _w, w_inv, _log_diag = self._cov_factors(zeta)
        x_i, z_i, y_i = self._subject_views[i]
        eta = x_i @ beta + z_i @ xi_i
        resid = y_i - self._obs_mean(eta)
        v = w_inv.T @ (w_inv @ xi_i)
        return z_i.T @ resid - v

    def subject_block_logratio(self, i: int, xi_old, xi_new, beta, zeta) -> float:
        """Log acceptance-ratio contribution of replacing subject i's random
        effect; touches only subject i's data."""
        eta_block = np.concatenate([np.asarray(beta, float), np.asarray(zeta, float)])
        return self.local_log_density(i, xi_new, eta_block) - self.local_log_density(
            i, xi_old, eta_block
        )


def glmm_log_posterior(spec: GlmmSpec, theta) -> float:
    return GlmmPosterior(spec).log_density(theta)


def glmm_grad(spec: GlmmSpec, theta) -> np.ndarray:
    return GlmmPosterior(spec).grad_log_density(theta)


def subject_block_logratio(spec: GlmmSpec, i: int, xi_old, xi_new, beta, zeta) -> float:
    return GlmmPosterior(spec).subject_block_logratio(i, xi_old, xi_new, beta, zeta)
