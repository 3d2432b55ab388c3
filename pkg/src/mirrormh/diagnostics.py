"""Efficiency measures: autocorrelation, spectral effective sample size,
empirical and closed-form average acceptance probabilities.

Efficiency E is the ratio of the i.i.d. variance to the asymptotic variance
of the chain mean, estimated as sample variance over the spectral density at
frequency zero. f(0) comes from an autoregressive fit with AIC order
selection (capped at floor(10 log10 T)), so E can exceed 1 when odd-lag
autocorrelations are negative. A batch-means estimator is provided as a
cross-check; the AR-fit value is the one reported everywhere.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateSeries, NonPositiveEpsilon

CSV_COLUMNS = [
    "kernel",
    "epsilon",
    "c",
    "d",
    "pjump",
    "rho1_mean",
    "E_mean",
    "ess_mean",
    "seconds",
    "E_per_second",
]


def _as_series(series) -> np.ndarray:
    x = np.asarray(series, dtype=float).ravel()
    if not np.all(np.isfinite(x)):
        raise ValueError("series has non-finite entries")
    return x


def autocorrelation(series, lag: int) -> float:
    """Sample autocorrelation at one lag (biased normalization by lag 0)."""
    x = _as_series(series)
    lag = int(lag)
    if lag < 0 or x.size <= lag + 1:
        raise ValueError(f"need more than {lag + 1} points for lag {lag}")
    centered = x - x.mean()
    c0 = float(centered @ centered)
    if c0 == 0.0:
        raise DegenerateSeries("series has zero variance")
    if lag == 0:
        return 1.0
    return float(centered[:-lag] @ centered[lag:]) / c0


def _autocovariances(centered: np.ndarray, max_lag: int) -> np.ndarray:
    """Biased autocovariances for lags 0..max_lag via FFT."""
    n = centered.size
    size = 1 << (2 * n - 1).bit_length()
    spectrum = np.fft.rfft(centered, size)
    acov = np.fft.irfft(spectrum * np.conj(spectrum), size)[: max_lag + 1]
    return acov / n


def _ar_spectrum_zero(x: np.ndarray) -> float:
    """Spectral density at frequency 0 from a Yule-Walker AR fit (AIC order)."""
    n = x.size
    max_order = min(int(10.0 * math.log10(n)), n - 2)
    centered = x - x.mean()
    acov = _autocovariances(centered, max_order)
    if acov[0] <= 0.0:
        raise DegenerateSeries("series has zero variance")

    # Levinson-Durbin; keep the (coefficients, innovation variance) with best AIC.
    sigma2 = acov[0]
    coefs = np.empty(0)
    best_aic = n * math.log(sigma2)
    best = (coefs, sigma2)
    for order in range(1, max_order + 1):
        residual = acov[order] - (coefs @ acov[order - 1 : 0 : -1] if order > 1 else 0.0)
        kappa = residual / sigma2
        if not np.isfinite(kappa) or abs(kappa) >= 1.0:
            break
        coefs = np.append(coefs - kappa * coefs[::-1], kappa)
        sigma2 = sigma2 * (1.0 - kappa * kappa)
        if sigma2 <= 0.0:
            break
        aic = n * math.log(sigma2) + 2.0 * order
        if aic < best_aic:
            best_aic = aic
            best = (coefs.copy(), sigma2)
    coefs, sigma2 = best
    denom = (1.0 - coefs.sum()) ** 2
    if denom == 0.0:
        return math.inf
    return sigma2 / denom


def effective_sample_size(series) -> tuple:
    """(ESS, efficiency) of a scalar chain via the AR-fit spectral estimator."""
    x = _as_series(series)
    if x.size < 100:
        raise ValueError("need at least 100 points to estimate ESS")
    f0 = _ar_spectrum_zero(x)
    variance = float(x.var(ddof=1))
    if variance == 0.0:
        raise DegenerateSeries("series has zero variance")
    efficiency = variance / f0
    return x.size * efficiency, efficiency


def batch_means_ess(series) -> tuple:
    """(ESS, efficiency) from non-overlapping batch means; cross-check only."""
    x = _as_series(series)
    if x.size < 100:
        raise ValueError("need at least 100 points to estimate ESS")
    batch = int(math.sqrt(x.size))
    count = x.size // batch
    means = x[: batch * count].reshape(count, batch).mean(axis=1)
    f0 = batch * float(means.var(ddof=1))
    variance = float(x.var(ddof=1))
    if variance == 0.0:
        raise DegenerateSeries("series has zero variance")
    if f0 == 0.0:
        return math.inf, math.inf
    efficiency = variance / f0
    return x.size * efficiency, efficiency


def _check_epsilon(epsilon) -> np.ndarray:
    eps = np.asarray(epsilon, dtype=float)
    if np.any(eps <= 0.0):
        raise NonPositiveEpsilon("epsilon must be strictly positive")
    return eps


def pjump_rw_analytic(epsilon):
    """Average acceptance probability of the (preconditioned) RW and Mirror
    kernels on a standard normal target: (2/pi) atan(2/eps)."""
    eps = _check_epsilon(epsilon)
    out = (2.0 / np.pi) * np.arctan(2.0 / eps)
    return float(out) if out.ndim == 0 else out


def pjump_mala_analytic(epsilon):
    """Average acceptance probability of MALA and MirrorMALA on a standard
    normal target; equals the RW curve at eps = 2."""
    eps = _check_epsilon(epsilon)
    out = (
        np.arctan(4.0 / (eps * (eps**2 + 2.0)))  # acot of the positive argument
        + np.arctan(2.0 / eps - eps / 2.0)
        + np.arctan(eps / 2.0)
        + np.arctan(4.0 * eps / (eps**4 - 2.0 * eps**2 + 8.0))
    ) / np.pi
    return float(out) if out.ndim == 0 else out


@dataclass
class DiagnosticsReport:
    """Per-coordinate efficiency diagnostics plus run metadata."""

    kernel: str
    epsilon: float
    c: float
    d: int
    iterations: int
    pjump: float
    rho1: np.ndarray
    efficiency: np.ndarray
    ess: np.ndarray
    seconds: float
    extra: dict = field(default_factory=dict)

    @property
    def rho1_mean(self) -> float:
        return float(np.mean(self.rho1))

    @property
    def efficiency_mean(self) -> float:
        return float(np.mean(self.efficiency))

    @property
    def ess_mean(self) -> float:
        return float(np.mean(self.ess))

    @property
    def efficiency_per_second(self) -> float:
        return self.efficiency_mean / self.seconds if self.seconds > 0 else math.inf

    def to_row(self) -> dict:
        row = {
            "kernel": self.kernel,
            "epsilon": self.epsilon,
            "c": self.c,
            "d": self.d,
            "pjump": self.pjump,
            "rho1_mean": self.rho1_mean,
            "E_mean": self.efficiency_mean,
            "ess_mean": self.ess_mean,
            "seconds": self.seconds,
            "E_per_second": self.efficiency_per_second,
        }
        row.update(self.extra)
        return row


def summarize(
    samples,
    alphas,
    wall_time: float,
    kernel: str = "",
    epsilon: float = math.nan,
    c: float = math.nan,
    **extra,
) -> DiagnosticsReport:
    """Per-coordinate rho1/E/ESS plus P_jump (mean of the supplied alphas)."""
    samples = np.asarray(samples, dtype=float)
    if samples.ndim == 1:
        samples = samples[:, None]
    iterations, d = samples.shape
    if iterations < 100:
        raise ValueError("need at least 100 samples to summarize")
    rho1 = np.empty(d)
    eff = np.empty(d)
    ess = np.empty(d)
    for j in range(d):
        col = samples[:, j]
        rho1[j] = autocorrelation(col, 1)
        ess[j], eff[j] = effective_sample_size(col)
    return DiagnosticsReport(
        kernel=kernel,
        epsilon=epsilon,
        c=c,
        d=d,
        iterations=iterations,
        pjump=float(np.mean(alphas)),
        rho1=rho1,
        efficiency=eff,
        ess=ess,
        seconds=float(wall_time),
        extra=extra,
    )
