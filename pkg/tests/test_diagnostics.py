import math

import numpy as np
import pytest
from scipy.signal import lfilter

from mirrormh.diagnostics import (
    autocorrelation,
    batch_means_ess,
    effective_sample_size,
    pjump_mala_analytic,
    pjump_rw_analytic,
    summarize,
)
from mirrormh.errors import DegenerateSeries, NonPositiveEpsilon


def ar1(phi, n, rng):
    return lfilter([1.0], [1.0, -phi], rng.standard_normal(n))


def brute_force_autocorrelation(x, k):
    x = np.asarray(x, dtype=float)
    d = x - x.mean()
    num = sum(d[t] * d[t + k] for t in range(len(x) - k))
    den = sum(v * v for v in d)
    return num / den


def test_autocorrelation_against_direct_formula():
    ramp = np.arange(1.0, 1001.0)
    got = autocorrelation(ramp, 1)
    assert got == pytest.approx(brute_force_autocorrelation(ramp, 1), abs=1e-12)
    assert got == pytest.approx(0.997, abs=1e-3)
    rng = np.random.default_rng(0)
    noisy = rng.standard_normal(400)
    for k in (1, 2, 7):
        assert autocorrelation(noisy, k) == pytest.approx(
            brute_force_autocorrelation(noisy, k), abs=1e-12
        )


def test_autocorrelation_iid_near_zero():
    rng = np.random.default_rng(1)
    x = rng.standard_normal(1_000_000)
    assert abs(autocorrelation(x, 1)) < 0.005


def test_autocorrelation_ar1():
    rng = np.random.default_rng(2)
    x = ar1(0.5, 1_000_000, rng)
    assert abs(autocorrelation(x, 1) - 0.5) < 0.01


def test_autocorrelation_errors():
    with pytest.raises(DegenerateSeries):
        autocorrelation(np.ones(100), 1)
    with pytest.raises(ValueError):
        autocorrelation(np.arange(3.0), 5)


def test_ess_iid():
    rng = np.random.default_rng(3)
    ess, eff = effective_sample_size(rng.standard_normal(1_000_000))
    assert 0.9 <= eff <= 1.1
    assert ess == pytest.approx(eff * 1_000_000)


@pytest.mark.parametrize("phi", [-0.5, 0.5, 0.9])
def test_ess_matches_ar1_closed_form(phi):
    rng = np.random.default_rng(40 + int(10 * phi))
    x = ar1(phi, 400_000, rng)
    _, eff = effective_sample_size(x)
    want = (1.0 - phi) / (1.0 + phi)
    assert abs(eff - want) / want < 0.2


def test_super_efficiency_detected():
    rng = np.random.default_rng(4)
    _, eff = effective_sample_size(ar1(-0.5, 400_000, rng))
    assert eff > 1.0


def test_batch_means_cross_check():
    rng = np.random.default_rng(5)
    x = ar1(0.5, 200_000, rng)
    _, eff_ar = effective_sample_size(x)
    _, eff_bm = batch_means_ess(x)
    assert abs(eff_ar - eff_bm) / eff_ar < 0.3


def test_ess_input_validation():
    with pytest.raises(ValueError):
        effective_sample_size(np.arange(50.0))
    with pytest.raises(DegenerateSeries):
        effective_sample_size(np.zeros(500))


def test_pjump_closed_form_values():
    assert pjump_rw_analytic(2.0) == pytest.approx(0.5, abs=1e-12)
    assert pjump_mala_analytic(2.0) == pytest.approx(0.5, abs=1e-12)
    assert abs(pjump_rw_analytic(2.0) - pjump_mala_analytic(2.0)) < 1e-12
    assert pjump_rw_analytic(2.1) == pytest.approx(0.484, abs=5e-4)
    assert pjump_rw_analytic(0.4) == pytest.approx(0.874, abs=5e-4)
    assert pjump_mala_analytic(1.4) == pytest.approx(0.790, abs=5e-4)
    assert pjump_mala_analytic(0.5) == pytest.approx(0.990, abs=5e-4)


def test_pjump_curve_shape():
    grid = np.linspace(1e-3, 50.0, 4000)
    rw = pjump_rw_analytic(grid)
    mala = pjump_mala_analytic(grid)
    for curve in (rw, mala):
        assert np.all(np.diff(curve) < 0)
        assert curve[0] > 0.999
        assert curve[-1] < 0.05
    below_two = grid < 2.0 - 1e-9
    above_two = (grid > 2.0 + 1e-9) & (grid <= 5.0)
    assert np.all(mala[below_two] > rw[below_two])
    assert np.all(mala[above_two] < rw[above_two])


def test_pjump_rejects_nonpositive_epsilon():
    with pytest.raises(NonPositiveEpsilon):
        pjump_rw_analytic(0.0)
    with pytest.raises(NonPositiveEpsilon):
        pjump_mala_analytic(np.array([0.5, -1.0]))


def test_summarize_iid_matrix():
    rng = np.random.default_rng(6)
    samples = rng.standard_normal((20_000, 3))
    alphas = rng.random(20_000)
    report = summarize(samples, alphas, wall_time=1.5, kernel="rw", epsilon=2.0, c=1.0)
    assert report.pjump == pytest.approx(alphas.mean())
    assert 0.9 <= report.efficiency_mean <= 1.1
    assert np.allclose(report.ess, report.efficiency * 20_000)
    row = report.to_row()
    assert row["kernel"] == "rw"
    assert row["E_per_second"] == pytest.approx(report.efficiency_mean / 1.5)
    assert set(row) >= {
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
    }


def test_summarize_identical_columns_identical_diagnostics():
    rng = np.random.default_rng(7)
    col = rng.standard_normal(5_000)
    samples = np.column_stack([col, col])
    report = summarize(samples, np.full(5_000, 0.3), wall_time=1.0)
    assert report.rho1[0] == report.rho1[1]
    assert report.efficiency[0] == report.efficiency[1]
    assert report.pjump == pytest.approx(0.3)
