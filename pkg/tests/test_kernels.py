import math

import numpy as np
import pytest

import mirrormh as mm
from mirrormh.errors import MissingPreconditioner, NonPositiveEpsilon

FIG_MU = np.array([1.0, 2.0])
FIG_SIGMA = np.array([[1.0, 1.8], [1.8, 4.0]])


@pytest.fixture
def normal_target():
    return mm.make_oned_target(1)


@pytest.fixture
def oracle_1d():
    return mm.MomentEstimate.from_moments([0.0], [[1.0]])


def test_kernel_spec_validation():
    with pytest.raises(NonPositiveEpsilon):
        mm.KernelSpec("rw", 0.0)
    with pytest.raises(ValueError):
        mm.KernelSpec("nope", 1.0)
    with pytest.raises(ValueError):
        mm.KernelSpec("mirror", 1.0, c=0.0)


def test_preconditioner_required(normal_target):
    with pytest.raises(MissingPreconditioner):
        mm.RandomWalkKernel(1.0, None)
    with pytest.raises(NonPositiveEpsilon):
        mm.RandomWalkKernel(0.0, mm.MomentEstimate.identity(1))


def test_mirror_reflection_values(oracle_1d):
    moments = mm.MomentEstimate.from_moments([0.5], [[1.0]])
    kernel = mm.MirrorKernel(0.3, moments, c=1.0)
    assert kernel.reflect(np.array([1.2]))[0] == pytest.approx(-0.2, abs=1e-15)
    # reflection with c = 1 is an involution to machine precision
    rng = np.random.default_rng(0)
    for _ in range(100):
        x = rng.normal(size=1)
        assert kernel.reflect(kernel.reflect(x))[0] == pytest.approx(x[0], rel=1e-14, abs=1e-15)


def test_proposal_means_on_standard_normal(normal_target, oracle_1d):
    eps = 0.6
    theta = np.array([2.0])
    grad = normal_target.grad_log_density(theta)
    mala = mm.MalaKernel(eps, oracle_1d)
    assert mala._drift_mean(theta, grad)[0] == pytest.approx((1 - eps**2 / 2) * 2.0)
    mimala = mm.MirrorMalaKernel(eps, oracle_1d, c=1.0)
    launch = mimala.reflect(theta)
    drifted = mimala._drift_mean(launch, normal_target.grad_log_density(launch))
    assert drifted[0] == pytest.approx(-(1 - eps**2 / 2) * 2.0)


def test_symmetric_kernels_have_exactly_equal_proposal_densities(normal_target):
    rng = np.random.default_rng(1)
    moments = mm.MomentEstimate.from_moments([0.4], [[1.7]])
    state = mm.ChainState.at(normal_target, [1.3])
    for kernel in (mm.RandomWalkKernel(1.1, moments), mm.MirrorKernel(0.5, moments, c=1.0)):
        for _ in range(300):
            prop = kernel.propose(state, normal_target, rng)
            assert prop.log_q_forward == prop.log_q_backward


def test_asymmetric_kernels_have_unequal_proposal_densities(normal_target, oracle_1d):
    rng = np.random.default_rng(2)
    state = mm.ChainState.at(normal_target, [1.3])
    mala = mm.MalaKernel(0.8, oracle_1d)
    prop = mala.propose(state, normal_target, rng)
    assert prop.log_q_forward != prop.log_q_backward
    mirror_c2 = mm.MirrorKernel(0.5, oracle_1d, c=1.7)
    prop = mirror_c2.propose(state, normal_target, rng)
    assert prop.log_q_forward != prop.log_q_backward


def test_alpha_is_one_for_uphill_symmetric_proposals(normal_target, oracle_1d):
    # construct an uphill move explicitly: candidate closer to the mode
    kernel = mm.RandomWalkKernel(1.0, oracle_1d)
    state = mm.ChainState.at(normal_target, [2.0])

    class _Rig:
        def __init__(self):
            self.calls = 0

        def standard_normal(self, n):
            return np.full(n, -1.0)  # proposes theta - 1, uphill toward 0

        def random(self):
            return 0.999999

    alpha, accepted = mm.mh_step(kernel, state, normal_target, _Rig())
    assert alpha == 1.0 and accepted


def test_rejection_keeps_position_and_counts_alpha(normal_target, oracle_1d):
    kernel = mm.RandomWalkKernel(1.0, oracle_1d)
    state = mm.ChainState.at(normal_target, [0.0])

    class _Rig:
        def standard_normal(self, n):
            return np.full(n, 50.0)  # hopeless candidate

        def random(self):
            return 0.5

    alpha, accepted = mm.mh_step(kernel, state, normal_target, _Rig())
    assert not accepted
    assert state.position[0] == 0.0
    assert state.steps == 1 and state.accept_count == 0
    assert state.alpha_sum == alpha < 1e-100


def test_mean_alpha_matches_analytic_at_moderate_length(normal_target, oracle_1d):
    rng = np.random.default_rng(4)
    kernel = mm.MirrorKernel(0.4, oracle_1d, c=1.0)
    run = mm.run_chain(kernel, normal_target, [0.0], 200_000, rng)
    assert abs(run.mean_alpha - mm.pjump_rw_analytic(0.4)) < 0.01


def test_alpha_recomputation_is_bit_identical(normal_target, oracle_1d):
    kernel = mm.MalaKernel(0.9, oracle_1d)
    alphas = []
    for _ in range(2):
        rng = np.random.default_rng(99)
        state = mm.ChainState.at(normal_target, [1.0])
        alphas.append([mm.mh_step(kernel, state, normal_target, rng)[0] for _ in range(50)])
    assert alphas[0] == alphas[1]


def test_chains_are_deterministic_given_seed(normal_target, oracle_1d):
    for kind in ("rw", "mirror", "mala", "mirrormala"):
        runs = []
        for _ in range(2):
            rng = np.random.default_rng(7)
            kernel = mm.make_kernel(kind, 0.7, moments=oracle_1d)
            runs.append(mm.run_chain(kernel, normal_target, [0.5], 500, rng).samples)
        assert np.array_equal(runs[0], runs[1]), kind


def test_cached_log_density_consistent_with_position(normal_target, oracle_1d):
    rng = np.random.default_rng(8)
    kernel = mm.MalaKernel(1.0, oracle_1d)
    state = mm.ChainState.at(normal_target, [0.3])
    for _ in range(200):
        mm.mh_step(kernel, state, normal_target, rng)
        assert state.log_density == normal_target.log_density(state.position)
        if state.gradient is not None:
            assert np.array_equal(state.gradient, normal_target.grad_log_density(state.position))


def test_mirrorize_reproduces_mirror_and_mirrormala(normal_target, oracle_1d):
    base_rw = mm.RandomWalkKernel(0.5, oracle_1d)
    base_mala = mm.MalaKernel(0.5, oracle_1d)
    for wrapped, direct_kind in [
        (mm.mirrorize(base_rw), "mirror"),
        (mm.mirrorize(base_mala), "mirrormala"),
    ]:
        direct = mm.make_kernel(direct_kind, 0.5, moments=oracle_1d)
        assert type(wrapped) is type(direct)
        a = mm.run_chain(wrapped, normal_target, [1.0], 400, np.random.default_rng(5)).samples
        b = mm.run_chain(direct, normal_target, [1.0], 400, np.random.default_rng(5)).samples
        assert np.array_equal(a, b)


def test_mirrorize_hmc(normal_target):
    base = mm.HmcKernel(0.3, 5)
    wrapped = mm.mirrorize(base, mu_star=np.zeros(1))
    assert isinstance(wrapped, mm.MirrorHmcKernel)
    rng = np.random.default_rng(6)
    run = mm.run_chain(wrapped, normal_target, [1.0], 2000, rng)
    assert 0.0 < run.mean_alpha <= 1.0
    with pytest.raises(MissingPreconditioner):
        mm.mirrorize(base)
    with pytest.raises(ValueError):
        mm.mirrorize(wrapped)


def test_single_leapfrog_step_hand_values(normal_target):
    kernel = mm.HmcKernel(0.1, 1)
    position, momentum = kernel.leapfrog(normal_target, np.array([1.0]), np.array([0.0]))
    assert position[0] == pytest.approx(0.995, abs=1e-12)
    assert momentum[0] == pytest.approx(-0.09975, abs=1e-12)


def test_hmc_accepts_everything_as_epsilon_vanishes():
    target = mm.make_mvn(FIG_MU, FIG_SIGMA)
    kernel = mm.HmcKernel(1e-4, 3)
    rng = np.random.default_rng(9)
    run = mm.run_chain(kernel, target, FIG_MU, 500, rng)
    assert run.mean_alpha > 0.999999


def test_hmc_fig_demo_smoke():
    target = mm.make_mvn(FIG_MU, FIG_SIGMA)
    kernel = mm.HmcKernel(0.7, 6)
    rng = np.random.default_rng(10)
    run = mm.run_chain(kernel, target, FIG_MU, 20_000, rng)
    assert abs(run.mean_alpha - 0.78) < 0.05


def _mcse_of_mean(series):
    ess, _ = mm.effective_sample_size(series)
    return math.sqrt(series.var(ddof=1) / ess)


@pytest.mark.slow
def test_stationarity_all_kernels_on_correlated_gaussian():
    target = mm.make_mvn(FIG_MU, FIG_SIGMA)
    moments = mm.MomentEstimate.from_moments(FIG_MU, FIG_SIGMA)
    kernels = {
        "rw": mm.make_kernel("rw", 1.7, moments=moments),
        "mirror": mm.make_kernel("mirror", 0.5, moments=moments),
        "mala": mm.make_kernel("mala", 1.2, moments=moments),
        "mirrormala": mm.make_kernel("mirrormala", 0.5, moments=moments),
        "hmc": mm.make_kernel("hmc", 0.7, leapfrog_steps=6),
    }
    for name, kernel in kernels.items():
        rng = np.random.default_rng(hash(name) % 2**32)
        run = mm.run_chain(kernel, target, FIG_MU, 1_000_000, rng)
        for j in range(2):
            col = run.samples[:, j]
            mean_err = abs(col.mean() - FIG_MU[j])
            assert mean_err < 4 * _mcse_of_mean(col), (name, j, "mean")
            sq = (col - col.mean()) ** 2
            var_err = abs(col.var(ddof=1) - FIG_SIGMA[j, j])
            assert var_err < 4 * _mcse_of_mean(sq), (name, j, "variance")
