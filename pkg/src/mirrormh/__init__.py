"""Mirror-type Metropolis-Hastings sampling toolkit.

Proposal kernels (random walk, Mirror, MALA, MirrorMALA, leapfrog HMC, and
the mirror-type combinator), efficiency diagnostics, adaptive burn-in
preconditioning, dense/sparse whitening with block sampling for Bayesian
GLMMs, and a batch experiment runner.
"""

from .adaptation import BurninResult, MomentEstimate, recommended_burnin, run_burnin, tune_epsilon
from .diagnostics import (
    DiagnosticsReport,
    autocorrelation,
    batch_means_ess,
    effective_sample_size,
    pjump_mala_analytic,
    pjump_rw_analytic,
    summarize,
)
from .glmm import (
    GlmmPosterior,
    GlmmSpec,
    build_epilepsy_model,
    build_polypharmacy_model,
    build_synthetic_model,
    generate_synthetic_glmm,
    glmm_grad,
    glmm_log_posterior,
    subject_block_logratio,
    unvech_wstar,
    vech_wstar,
)
from .kernels import (
    ChainState,
    HmcKernel,
    Kernel,
    KernelSpec,
    MalaKernel,
    MirrorHmcKernel,
    MirrorKernel,
    MirrorMalaKernel,
    Proposal,
    RandomWalkKernel,
    make_kernel,
    mh_step,
    mirrorize,
    propose,
    run_chain,
)
from .linalg import (
    BlockPartition,
    cholesky_lower,
    invert_spd,
    regularize_covariance,
    solve_lower,
    solve_upper,
)
from .targets import (
    TargetDensity,
    check_gradient,
    make_logistic_posterior,
    make_mvn,
    make_oned_target,
)
from .whitening import (
    BlockSampler,
    WhiteningMap,
    block_mh_sweep,
    dense_whitening,
    sparse_whitening,
)

__version__ = "0.1.0"
