import numpy as np
import pytest

import mirrormh as mm
from mirrormh.errors import SingularCovariance, TuningFailed

FIG_MU = np.array([1.0, 2.0])
FIG_SIGMA = np.array([[1.0, 1.8], [1.8, 4.0]])


def test_moment_estimate_from_samples_recovers_moments():
    rng = np.random.default_rng(0)
    chol = np.linalg.cholesky(FIG_SIGMA)
    draws = FIG_MU + rng.standard_normal((200_000, 2)) @ chol.T
    est = mm.MomentEstimate.from_samples(draws)
    assert est.sample_count == 200_000
    assert np.abs(est.mu_star - FIG_MU).max() < 0.02
    assert np.abs(est.sigma_star - FIG_SIGMA).max() < 0.05
    recon = est.chol_lower @ est.chol_lower.T
    assert np.abs(recon - est.sigma_star).max() < 1e-8


def test_moment_estimate_needs_enough_samples():
    with pytest.raises(ValueError):
        mm.MomentEstimate.from_samples(np.zeros((3, 2)))


def test_moment_estimate_singular_samples():
    with pytest.raises(SingularCovariance):
        mm.MomentEstimate.from_samples(np.ones((50, 2)))


def test_identity_moments():
    est = mm.MomentEstimate.identity(3)
    assert np.array_equal(est.sigma_star, np.eye(3))
    assert np.array_equal(est.mu_star, np.zeros(3))


def test_run_burnin_estimates_standard_normal_moments():
    target = mm.make_mvn(np.zeros(2), np.eye(2))
    rng = np.random.default_rng(1)
    result = mm.run_burnin(target, 100_000, rng=rng)
    assert np.abs(result.moments.mu_star).max() < 0.05
    assert np.abs(result.moments.sigma_star - np.eye(2)).max() < 0.1


def test_run_burnin_single_segment_matches_default():
    target = mm.make_mvn(FIG_MU, FIG_SIGMA)
    a = mm.run_burnin(target, 1000, rng=np.random.default_rng(2))
    b = mm.run_burnin(target, 1000, update_every=1000, rng=np.random.default_rng(2))
    assert np.array_equal(a.moments.mu_star, b.moments.mu_star)
    assert np.array_equal(a.moments.sigma_star, b.moments.sigma_star)
    assert np.array_equal(a.position, b.position)


def test_run_burnin_validation():
    target = mm.make_oned_target(1)
    with pytest.raises(ValueError):
        mm.run_burnin(target, 50, rng=np.random.default_rng(0))
    with pytest.raises(ValueError):
        mm.run_burnin(target, 1000, update_every=300, rng=np.random.default_rng(0))


def test_run_burnin_uses_last_segment_only():
    # an adaptive run and a plain run of the final segment differ, but both
    # estimates come from exactly update_every samples
    target = mm.make_mvn(FIG_MU, FIG_SIGMA)
    result = mm.run_burnin(target, 4000, update_every=1000, rng=np.random.default_rng(3))
    assert result.moments.sample_count == 1000


def test_burnin_rmse_improves_with_length():
    target = mm.make_mvn(FIG_MU, FIG_SIGMA)
    truth = np.concatenate([FIG_MU, FIG_SIGMA.ravel()])
    rmse = {}
    for length in (100, 1000, 10_000):
        errs = []
        for seed in range(20):
            rng = np.random.default_rng(1000 + seed)
            est = mm.run_burnin(target, length, rng=rng).moments
            got = np.concatenate([est.mu_star, est.sigma_star.ravel()])
            errs.append(np.mean((got - truth) ** 2))
        rmse[length] = np.sqrt(np.mean(errs))
    assert rmse[100] > rmse[1000] > rmse[10_000]


def test_recommended_burnin_brackets():
    assert mm.recommended_burnin(1) == (500, 500)
    assert mm.recommended_burnin(5) == (10_000, 10_000)
    length, every = mm.recommended_burnin(100)
    assert length >= 300_000 and every == 50_000


def test_preconditioned_rw_proposal_covariance_is_scaled_sigma():
    target = mm.make_mvn(FIG_MU, FIG_SIGMA)
    moments = mm.MomentEstimate.from_moments(FIG_MU, FIG_SIGMA)
    eps = 0.7
    kernel = mm.RandomWalkKernel(eps, moments)
    state = mm.ChainState.at(target, FIG_MU)
    rng = np.random.default_rng(4)
    draws = np.array(
        [kernel.propose(state, target, rng).candidate for _ in range(100_000)]
    )
    cov = np.cov(draws, rowvar=False)
    want = eps**2 * FIG_SIGMA
    assert np.abs(cov - want).max() / np.abs(want).max() < 0.05


def test_tune_epsilon_hits_rw_target():
    target = mm.make_oned_target(1)
    moments = mm.MomentEstimate.from_moments([0.0], [[1.0]])
    eps = mm.tune_epsilon("rw", target, moments, 0.484, np.random.default_rng(5))
    assert abs(eps - 2.1) < 0.1


def test_tune_epsilon_hits_mirrormala_target():
    target = mm.make_oned_target(1)
    moments = mm.MomentEstimate.from_moments([0.0], [[1.0]])
    eps = mm.tune_epsilon("mirrormala", target, moments, 0.99, np.random.default_rng(6))
    assert abs(eps - 0.5) < 0.1


def test_tune_epsilon_monotone_in_target():
    target = mm.make_oned_target(1)
    moments = mm.MomentEstimate.from_moments([0.0], [[1.0]])
    lo = mm.tune_epsilon("rw", target, moments, 0.3, np.random.default_rng(7))
    hi = mm.tune_epsilon("rw", target, moments, 0.7, np.random.default_rng(7))
    assert lo > hi


def test_tune_epsilon_failure_and_validation():
    target = mm.make_oned_target(1)
    moments = mm.MomentEstimate.from_moments([0.0], [[1.0]])
    with pytest.raises(ValueError):
        mm.tune_epsilon("rw", target, moments, 1.5, np.random.default_rng(8))
    with pytest.raises(TuningFailed):
        mm.tune_epsilon(
            "rw",
            target,
            moments,
            0.95,
            np.random.default_rng(9),
            epsilon0=100.0,
            adapt_iterations=40,
            average_window=10,
            validate_iterations=100,
        )
