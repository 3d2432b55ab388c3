"""Batch experiment runner: configuration, seeding, dispatch, CSV/JSON emission.

Each experiment writes one diagnostics CSV row per (kernel, grid point,
replicate) plus a replicate-averaged summary, all deterministic given the
master seed. Desk presets keep runtimes to seconds/minutes; paper presets
carry the full-length settings for optional long runs.
"""

import csv
import hashlib
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, asdict

import numpy as np
from scipy import stats as sps

from . import glmm as glmm_mod
from .adaptation import MomentEstimate, run_burnin, tune_epsilon
from .diagnostics import (
    pjump_mala_analytic,
    pjump_rw_analytic,
    summarize,
)
from .errors import ConfigError, DataError
from .kernels import KernelSpec, make_kernel, run_chain
from .targets import make_logistic_posterior, make_mvn, make_oned_target
from .whitening import BlockSampler, dense_whitening, sparse_whitening

EXPERIMENT_NAMES = (
    "oned-sweep",
    "c-sweep",
    "gaussian-grid",
    "corr-gaussian",
    "logistic",
    "glmm",
    "pjump-analytic",
    "trajectory-demo",
)

ROW_COLUMNS = [
    "experiment",
    "target",
    "kernel",
    "epsilon",
    "c",
    "d",
    "seed",
    "replicate",
    "pjump",
    "rho1_mean",
    "E_mean",
    "ess_mean",
    "seconds",
    "E_per_second",
]

# Per-kernel proposal scales that maximize efficiency on the five bundled
# 1-D targets (target id -> kind -> epsilon).
ONED_BEST_EPSILON = {
    1: {"rw": 2.1, "mirror": 0.4, "mala": 1.4, "mirrormala": 0.5},
    2: {"rw": 2.2, "mirror": 1.1, "mala": 1.4, "mirrormala": 0.6},
    3: {"rw": 2.4, "mirror": 0.5, "mala": 1.7, "mirrormala": 0.5},
    4: {"rw": 2.2, "mirror": 0.8, "mala": 1.2, "mirrormala": 0.7},
    5: {"rw": 3.0, "mirror": 0.3, "mala": 1.7, "mirrormala": 0.5},
}

RW_TARGET_PJUMP = 0.234
MALA_TARGET_PJUMP = 0.574


@dataclass
class ExperimentConfig:
    experiment: str = ""
    preset: str = "desk"  # desk | paper
    seed: int = 0
    replicates: int = 0  # 0 -> preset default
    threads: int = 1
    out_dir: str = "out"
    dataset: str = ""
    kernels: list = field(default_factory=list)
    epsilon_grid: list = field(default_factory=list)
    c_grid: list = field(default_factory=list)
    iterations: int = 0  # 0 -> preset default
    burnin: int = 0
    update_every: int = 0
    targets: list = field(default_factory=list)  # 1-D target ids
    dimension: int = 0  # corr-gaussian
    dimensions: list = field(default_factory=list)  # gaussian-grid
    oracle_moments: bool = False  # skip burn-in, use exact target moments
    emit_marginals: bool = False
    bins: int = 60
    glmm_model: str = "synthetic"  # synthetic | epilepsy | polypharmacy
    glmm_samplers: list = field(default_factory=list)
    glmm_subjects: int = 20
    glmm_obs_per_subject: int = 4
    standardize: bool = True
    scale_age: bool = False

    def validate(self):
        if self.experiment not in EXPERIMENT_NAMES:
            raise ConfigError(f"unknown experiment {self.experiment!r}")
        if self.preset not in ("desk", "paper"):
            raise ConfigError(f"preset must be desk or paper, got {self.preset!r}")
        if self.replicates < 0 or self.iterations < 0 or self.burnin < 0:
            raise ConfigError("counts must be non-negative")
        if self.threads < 1:
            raise ConfigError("threads must be at least 1")


_LIST_FIELDS = {"kernels", "epsilon_grid", "c_grid", "targets", "dimensions", "glmm_samplers"}
_BOOL_FIELDS = {"oracle_moments", "emit_marginals", "standardize", "scale_age"}
_INT_FIELDS = {
    "seed",
    "replicates",
    "threads",
    "iterations",
    "burnin",
    "update_every",
    "dimension",
    "bins",
    "glmm_subjects",
    "glmm_obs_per_subject",
}


def _parse_value(key: str, raw: str):
    raw = raw.strip()
    if key in _LIST_FIELDS:
        items = [piece.strip() for piece in raw.split(",") if piece.strip()]
        if key in ("targets", "dimensions"):
            return [int(item) for item in items]
        if key in ("epsilon_grid", "c_grid"):
            return [float(item) for item in items]
        return items
    if key in _BOOL_FIELDS:
        if raw.lower() in ("1", "true", "yes", "on"):
            return True
        if raw.lower() in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"cannot parse boolean {key}={raw!r}")
    if key in _INT_FIELDS:
        return int(raw)
    return raw


def load_config(path: str, overrides=None) -> ExperimentConfig:
    """Plain key = value config file plus command-line overrides."""
    config = ExperimentConfig()
    if path:
        if not os.path.exists(path):
            raise ConfigError(f"config file not found: {path}")
        with open(path, encoding="utf-8") as handle:
            for lineno, line in enumerate(handle, start=1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ConfigError(f"{path}:{lineno}: expected key = value")
                key, raw = line.split("=", 1)
                key = key.strip().replace("-", "_")
                if not hasattr(config, key):
                    raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
                setattr(config, key, _parse_value(key, raw))
    for key, raw in (overrides or {}).items():
        key = key.replace("-", "_")
        if not hasattr(config, key):
            raise ConfigError(f"unknown config key {key!r}")
        setattr(config, key, _parse_value(key, raw) if isinstance(raw, str) else raw)
    return config


def child_rng(master_seed: int, label: str, replicate: int):
    """Independent, reproducible stream for one grid point and replicate."""
    digest = hashlib.sha256(label.encode("utf-8")).digest()
    key = int.from_bytes(digest[:8], "little")
    return np.random.default_rng(np.random.SeedSequence((int(master_seed), key, int(replicate))))


def _write_csv(path, rows, columns):
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.DictWriter(handle, fieldnames=columns, extrasaction="ignore")
        writer.writeheader()
        writer.writerows(rows)


def _write_json(path, payload):
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(payload, handle, indent=2, sort_keys=True)
        handle.write("\n")


def _summary_rows(rows):
    """Arithmetic mean over replicates for each (target, kernel, epsilon, c, d)."""
    keys = ("experiment", "target", "kernel", "epsilon", "c", "d", "seed")
    numeric = ("pjump", "rho1_mean", "E_mean", "ess_mean", "seconds", "E_per_second")
    grouped: dict = {}
    order = []
    for row in rows:
        key = tuple(row[k] for k in keys)
        if key not in grouped:
            grouped[key] = []
            order.append(key)
        grouped[key].append(row)
    out = []
    for key in order:
        bucket = grouped[key]
        summary = dict(zip(keys, key))
        summary["replicates"] = len(bucket)
        for col in numeric:
            summary[col] = float(np.mean([row[col] for row in bucket]))
        out.append(summary)
    return out


# ----------------------------------------------------------------------------
# target recipes (picklable job payloads rebuild targets in workers)
# ----------------------------------------------------------------------------


def _build_target(recipe: dict):
    kind = recipe["kind"]
    if kind == "oned":
        return make_oned_target(recipe["id"])
    if kind == "mvn":
        return make_mvn(np.asarray(recipe["mu"]), np.asarray(recipe["sigma"]))
    if kind == "logistic":
        return make_logistic_posterior(
            np.asarray(recipe["x"]), np.asarray(recipe["y"]), recipe.get("prior_sd", 10.0)
        )
    raise ConfigError(f"unknown target recipe {kind!r}")


def _recipe_moments(recipe: dict):
    if "true_mu" in recipe:
        return MomentEstimate.from_moments(
            np.asarray(recipe["true_mu"]), np.asarray(recipe["true_sigma"])
        )
    raise ConfigError("oracle moments requested but the target has no known moments")


@dataclass
class SweepJob:
    experiment: str
    target_label: str
    recipe: dict
    kernel_kind: str
    epsilon: float  # ignored when tune_to is set
    c: float
    iterations: int
    burnin: int
    update_every: int
    master_seed: int
    replicate: int
    tune_to: float = 0.0  # 0 -> fixed epsilon
    oracle_moments: bool = False
    burnin_epsilon0: float = 0.0  # 0 -> adaptive default
    variant: str = ""

    def label(self) -> str:
        eps_part = f"tune{self.tune_to:.6g}" if self.tune_to else f"{self.epsilon:.6g}"
        return (
            f"{self.experiment}/{self.target_label}/{self.kernel_kind}{self.variant}/"
            f"{eps_part}/{self.c:.6g}"
        )


def run_sweep_job(job: SweepJob) -> dict:
    """One chain: burn-in (or oracle moments), optional tuning, chain, diagnostics."""
    rng = child_rng(job.master_seed, job.label(), job.replicate)
    target = _build_target(job.recipe)
    if job.oracle_moments:
        moments = _recipe_moments(job.recipe)
        start = moments.mu_star
    else:
        burn = run_burnin(
            target,
            job.burnin,
            update_every=job.update_every or None,
            rw_epsilon0=job.burnin_epsilon0 or None,
            rng=rng,
        )
        moments = burn.moments
        start = burn.position
    epsilon = job.epsilon
    if job.tune_to:
        epsilon = tune_epsilon(job.kernel_kind, target, moments, job.tune_to, rng, c=job.c)
    kernel = make_kernel(job.kernel_kind, epsilon, moments=moments, c=job.c)
    run = run_chain(kernel, target, start, job.iterations, rng)
    samples = run.samples
    if target.back_transform is not None:
        samples = target.back_transform(samples)
    report = summarize(
        samples, run.alphas, run.seconds, kernel=job.kernel_kind, epsilon=epsilon, c=job.c
    )
    row = report.to_row()
    row.update(
        experiment=job.experiment,
        target=job.target_label,
        seed=job.master_seed,
        replicate=job.replicate,
    )
    return row


def _map_jobs(jobs, threads: int):
    if threads <= 1 or len(jobs) <= 1:
        return [run_sweep_job(job) for job in jobs]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(run_sweep_job, jobs, chunksize=max(1, len(jobs) // (threads * 4))))


def _emit(config, name, rows, written):
    rows_path = os.path.join(config.out_dir, f"{name}_rows.csv")
    cols = ROW_COLUMNS + [c for c in rows[0] if c not in ROW_COLUMNS] if rows else ROW_COLUMNS
    _write_csv(rows_path, rows, cols)
    written.append(rows_path)
    summary = _summary_rows(rows)
    summary_path = os.path.join(config.out_dir, f"{name}_summary.csv")
    summary_cols = list(summary[0].keys()) if summary else []
    _write_csv(summary_path, summary, summary_cols)
    written.append(summary_path)
    json_path = os.path.join(config.out_dir, f"{name}_summary.json")
    _write_json(json_path, {"rows": rows, "summary": summary})
    written.append(json_path)


# ----------------------------------------------------------------------------
# experiments
# ----------------------------------------------------------------------------


def _run_pjump_analytic(config, written):
    grid = config.epsilon_grid or list(np.linspace(0.05, 5.0, 100))
    rows = []
    for eps in grid:
        rows.append(
            {
                "epsilon": float(eps),
                "pjump_rw_mirror": pjump_rw_analytic(eps),
                "pjump_mala_mirrormala": pjump_mala_analytic(eps),
            }
        )
    path = os.path.join(config.out_dir, "pjump_analytic.csv")
    _write_csv(path, rows, ["epsilon", "pjump_rw_mirror", "pjump_mala_mirrormala"])
    written.append(path)


def _fig_target_recipe() -> dict:
    mu = [1.0, 2.0]
    sigma = [[1.0, 1.8], [1.8, 4.0]]
    return {"kind": "mvn", "mu": mu, "sigma": sigma, "true_mu": mu, "true_sigma": sigma}


def _write_path(path, samples):
    rows = [{f"x{j + 1}": float(v) for j, v in enumerate(point)} for point in samples]
    _write_csv(path, rows, list(rows[0].keys()))


def _run_trajectory_demo(config, written):
    recipe = _fig_target_recipe()
    target = _build_target(recipe)
    out = config.out_dir

    # Variant 1: four kernels from a far-away start, preconditioned with
    # moments estimated by a short preliminary walk.
    rng = child_rng(config.seed, "trajectory/preliminary", 0)
    burn = run_burnin(target, 500, rng=rng, start=[0.0, 0.0])
    moments = burn.moments
    start = np.array([-3.0, 6.0])
    specs = [
        ("rw", tune_epsilon("rw", target, moments, 0.30, rng), 1.0),
        ("mirror", 0.5, 1.0),
        ("mala", tune_epsilon("mala", target, moments, 0.57, rng), 1.0),
        ("mirrormala", 0.5, 1.0),
    ]
    for kind, eps, c in specs:
        chain_rng = child_rng(config.seed, f"trajectory/startfar/{kind}", 0)
        kernel = make_kernel(kind, eps, moments=moments, c=c)
        run = run_chain(kernel, target, start, 100, chain_rng)
        path = os.path.join(out, f"trajectory_startfar_{kind}.csv")
        _write_path(path, np.vstack([start, run.samples]))
        written.append(path)

    # Variant 2: RW / MALA / HMC / Mirror without preconditioning, short
    # trajectories plus longer chains for the acceptance-probability estimates.
    identity = MomentEstimate.identity(2)
    exact = MomentEstimate.from_moments(recipe["true_mu"], np.eye(2))
    rng2 = child_rng(config.seed, "trajectory/hmc-tuning", 0)
    kernels = {
        "rw": make_kernel("rw", tune_epsilon("rw", target, identity, 0.30, rng2), moments=identity),
        "mala": make_kernel(
            "mala", tune_epsilon("mala", target, identity, 0.60, rng2), moments=identity
        ),
        "hmc": make_kernel("hmc", 0.7, leapfrog_steps=6),
        "mirror": make_kernel("mirror", 0.5, moments=exact, c=1.0),
    }
    start2 = np.array([-0.5, -1.0])
    iterations = config.iterations or 100_000
    rows = []
    for kind, kernel in kernels.items():
        path_rng = child_rng(config.seed, f"trajectory/hmc/{kind}", 0)
        short = run_chain(kernel, target, start2.copy(), 10, path_rng)
        path = os.path.join(out, f"trajectory_hmc_{kind}.csv")
        _write_path(path, np.vstack([start2, short.samples]))
        written.append(path)
        long_rng = child_rng(config.seed, f"trajectory/hmc-long/{kind}", 0)
        run = run_chain(kernel, target, recipe["true_mu"], iterations, long_rng)
        report = summarize(
            run.samples, run.alphas, run.seconds, kernel=kind, epsilon=kernel.epsilon, c=1.0
        )
        row = report.to_row()
        row.update(
            experiment="trajectory-demo",
            target="mvn2-demo",
            seed=config.seed,
            replicate=0,
        )
        rows.append(row)
    _emit(config, "trajectory_hmc", rows, written)


def _oned_recipe(target_id: int) -> dict:
    recipe = {"kind": "oned", "id": target_id}
    if target_id == 1:
        recipe["true_mu"] = [0.0]
        recipe["true_sigma"] = [[1.0]]
    return recipe


def _run_oned_sweep(config, written):
    desk = config.preset == "desk"
    iterations = config.iterations or (20_000 if desk else 1_000_000)
    burnin = config.burnin or 500
    replicates = config.replicates or (3 if desk else 5)
    target_ids = config.targets or [1, 2, 3, 4, 5]
    kinds = config.kernels or ["rw", "mirror", "mala", "mirrormala"]
    if config.epsilon_grid:
        grid = config.epsilon_grid
    else:
        grid = list(np.linspace(0.1, 5.0, 20 if desk else 100))
    jobs = []
    for tid in target_ids:
        for kind in kinds:
            for eps in grid:
                for rep in range(replicates):
                    jobs.append(
                        SweepJob(
                            experiment="oned-sweep",
                            target_label=f"oned{tid}",
                            recipe=_oned_recipe(tid),
                            kernel_kind=kind,
                            epsilon=float(eps),
                            c=1.0,
                            iterations=iterations,
                            burnin=burnin,
                            update_every=0,
                            master_seed=config.seed,
                            replicate=rep,
                            oracle_moments=config.oracle_moments,
                        )
                    )
    rows = _map_jobs(jobs, config.threads)
    _emit(config, "oned_sweep", rows, written)


def _run_c_sweep(config, written):
    desk = config.preset == "desk"
    iterations = config.iterations or (30_000 if desk else 1_000_000)
    burnin = config.burnin or (2_000 if desk else 500)
    replicates = config.replicates or (3 if desk else 5)
    target_ids = config.targets or [1]
    epsilon = config.epsilon_grid[0] if config.epsilon_grid else 0.5
    grid = config.c_grid or list(np.linspace(0.02, 2.0, 100))
    kinds = config.kernels or ["mirror", "mirrormala"]
    jobs = []
    for tid in target_ids:
        for kind in kinds:
            for c in grid:
                for rep in range(replicates):
                    jobs.append(
                        SweepJob(
                            experiment="c-sweep",
                            target_label=f"oned{tid}",
                            recipe=_oned_recipe(tid),
                            kernel_kind=kind,
                            epsilon=float(epsilon),
                            c=float(c),
                            iterations=iterations,
                            burnin=burnin,
                            update_every=0,
                            master_seed=config.seed,
                            replicate=rep,
                            oracle_moments=config.oracle_moments,
                        )
                    )
    rows = _map_jobs(jobs, config.threads)
    _emit(config, "c_sweep", rows, written)


def _run_gaussian_grid(config, written):
    desk = config.preset == "desk"
    iterations = config.iterations or (100_000 if desk else 1_000_000)
    burnin = config.burnin or 10_000
    replicates = config.replicates or (1 if desk else 5)
    dims = config.dimensions or list(range(2, 11))
    policies = [
        ("rw", 0.0, RW_TARGET_PJUMP),
        ("mirror", 0.5, 0.0),
        ("mirror", 1.0, 0.0),
        ("mala", 0.0, MALA_TARGET_PJUMP),
        ("mirrormala", 0.5, 0.0),
        ("mirrormala", 1.0, 0.0),
    ]
    jobs = []
    for d in dims:
        recipe = {
            "kind": "mvn",
            "mu": [0.0] * d,
            "sigma": np.eye(d).tolist(),
            "true_mu": [0.0] * d,
            "true_sigma": np.eye(d).tolist(),
        }
        for kind, eps, tune_to in policies:
            for rep in range(replicates):
                jobs.append(
                    SweepJob(
                        experiment="gaussian-grid",
                        target_label=f"std{d}",
                        recipe=recipe,
                        kernel_kind=kind,
                        epsilon=eps,
                        c=1.0,
                        iterations=iterations,
                        burnin=burnin,
                        update_every=0,
                        master_seed=config.seed,
                        replicate=rep,
                        tune_to=tune_to,
                        oracle_moments=config.oracle_moments,
                    )
                )
    rows = _map_jobs(jobs, config.threads)
    _emit(config, "gaussian_grid", rows, written)


def _run_corr_gaussian(config, written):
    desk = config.preset == "desk"
    d = config.dimension or (30 if desk else 100)
    iterations = config.iterations or (200_000 if desk else 10_000_000)
    burnin = config.burnin or (90_000 if desk else 300_000)
    update_every = config.update_every or (30_000 if desk else 50_000)
    replicates = config.replicates or 1

    # The covariance is generated (inverse-Wishart style), persisted, and
    # reused so rows are reproducible from the recorded seed alone.
    sigma_rng = child_rng(config.seed, f"corr-gaussian/sigma/{d}", 0)
    sigma = sps.invwishart.rvs(df=d, scale=np.eye(d), random_state=sigma_rng)
    sigma_path = os.path.join(config.out_dir, f"corr_sigma_d{d}.npy")
    np.save(sigma_path, sigma)
    written.append(sigma_path)

    recipe = {
        "kind": "mvn",
        "mu": [0.0] * d,
        "sigma": sigma.tolist(),
        "true_mu": [0.0] * d,
        "true_sigma": sigma.tolist(),
    }
    policies = [
        ("rw", 0.0, RW_TARGET_PJUMP),
        ("mirror", 0.5, 0.0),
        ("mala", 0.0, MALA_TARGET_PJUMP),
        ("mirrormala", 0.5, 0.0),
    ]
    if not desk:
        policies += [("mirror", 1.0, 0.0), ("mirrormala", 1.0, 0.0)]
    jobs = []
    for kind, eps, tune_to in policies:
        for rep in range(replicates):
            jobs.append(
                SweepJob(
                    experiment="corr-gaussian",
                    target_label=f"corr{d}",
                    recipe=recipe,
                    kernel_kind=kind,
                    epsilon=eps,
                    c=1.0,
                    iterations=iterations,
                    burnin=burnin,
                    update_every=update_every,
                    master_seed=config.seed,
                    replicate=rep,
                    tune_to=tune_to,
                    oracle_moments=config.oracle_moments,
                )
            )
    rows = _map_jobs(jobs, config.threads)
    _emit(config, "corr_gaussian", rows, written)


def make_synthetic_logistic(n_rows: int, n_predictors: int, seed: int):
    """Credit-scoring-shaped synthetic data: mixed binary/continuous columns."""
    rng = np.random.default_rng(np.random.SeedSequence((int(seed), 0xFEED)))
    n_binary = n_predictors // 2
    x_cont = rng.standard_normal((n_rows, n_predictors - n_binary))
    x_bin = (rng.random((n_rows, n_binary)) < 0.4).astype(float)
    x = np.hstack([x_cont, x_bin])
    coef = rng.normal(scale=0.5, size=n_predictors)
    intercept = -0.3
    probs = 1.0 / (1.0 + np.exp(-(intercept + x @ coef)))
    y = (rng.random(n_rows) < probs).astype(float)
    return x, y


def _standardize_columns(x: np.ndarray) -> np.ndarray:
    """Z-score columns that are not binary indicators."""
    out = x.copy()
    for j in range(x.shape[1]):
        col = x[:, j]
        if set(np.unique(col)) <= {0.0, 1.0}:
            continue
        sd = col.std()
        out[:, j] = (col - col.mean()) / (sd if sd > 0 else 1.0)
    return out


def _load_logistic_dataset(config):
    if config.dataset:
        if not os.path.exists(config.dataset):
            raise DataError(f"dataset not found: {config.dataset}")
        rows = glmm_mod.read_rows_csv(config.dataset)
        if not rows or "y" not in rows[0]:
            raise DataError("logistic dataset needs a 'y' column")
        cols = [c for c in rows[0] if c != "y"]
        try:
            x = np.array([[float(row[c]) for c in cols] for row in rows])
            y = np.array([float(row["y"]) for row in rows])
        except (TypeError, ValueError) as err:
            raise DataError(f"non-numeric value in logistic dataset: {err}") from err
        label = os.path.splitext(os.path.basename(config.dataset))[0]
    else:
        x, y = make_synthetic_logistic(1000, 24, config.seed)
        label = "synthetic-credit"
    if config.standardize:
        x = _standardize_columns(x)
    return x, y, label


def _run_logistic(config, written):
    desk = config.preset == "desk"
    iterations = config.iterations or (40_000 if desk else 10_000_000)
    burnin = config.burnin or 30_000
    update_every = config.update_every or 10_000
    replicates = config.replicates or 1
    x, y, label = _load_logistic_dataset(config)
    recipe = {"kind": "logistic", "x": x.tolist(), "y": y.tolist()}
    policies = [
        ("rw", 0.0, RW_TARGET_PJUMP, False),
        ("rw", 0.0, RW_TARGET_PJUMP, True),
        ("mirror", 0.5, 0.0, False),
        ("mala", 0.0, MALA_TARGET_PJUMP, False),
        ("mala", 0.0, MALA_TARGET_PJUMP, True),
        ("mirrormala", 0.5, 0.0, False),
    ]
    if not desk:
        policies += [("mirror", 1.0, 0.0, False), ("mirrormala", 1.0, 0.0, False)]
    jobs = []
    for kind, eps, tune_to, no_precond in policies:
        for rep in range(replicates):
            jobs.append(
                SweepJob(
                    experiment="logistic",
                    target_label=label,
                    recipe=dict(recipe, no_precond=no_precond),
                    kernel_kind=kind,
                    epsilon=eps,
                    c=1.0,
                    iterations=iterations,
                    burnin=burnin,
                    update_every=update_every,
                    master_seed=config.seed,
                    replicate=rep,
                    tune_to=tune_to,
                    variant="_noprec" if no_precond else "",
                )
            )
    rows = _map_jobs_generic(jobs, config.threads, run_logistic_job)
    _emit(config, "logistic", rows, written)
    if config.emit_marginals:
        job = jobs[0]
        rng = child_rng(config.seed, "logistic/marginals", 0)
        target = _build_target(job.recipe)
        burn = run_burnin(target, burnin, update_every=update_every, rng=rng)
        kernel = make_kernel("mirrormala", 0.5, moments=burn.moments)
        run = run_chain(kernel, target, burn.position, iterations, rng)
        written.extend(
            emit_marginals(run.samples, config.bins, config.out_dir, prefix="logistic")
        )


def run_logistic_job(job: SweepJob) -> dict:
    """Like run_sweep_job, but unpreconditioned variants swap the estimated
    covariance for the identity (keeping the estimated mean)."""
    rng = child_rng(job.master_seed, job.label(), job.replicate)
    target = _build_target(job.recipe)
    burn = run_burnin(target, job.burnin, update_every=job.update_every or None, rng=rng)
    moments = burn.moments
    no_precond = bool(job.recipe.get("no_precond"))
    if no_precond:
        moments = MomentEstimate.identity(target.dim, mu=moments.mu_star)
    epsilon = job.epsilon
    if job.tune_to:
        epsilon = tune_epsilon(job.kernel_kind, target, moments, job.tune_to, rng, c=job.c)
    kernel = make_kernel(job.kernel_kind, epsilon, moments=moments, c=job.c)
    run = run_chain(kernel, target, burn.position, job.iterations, rng)
    kernel_label = job.kernel_kind + ("_noprec" if no_precond else "")
    report = summarize(
        run.samples, run.alphas, run.seconds, kernel=kernel_label, epsilon=epsilon, c=job.c
    )
    row = report.to_row()
    row.update(
        experiment=job.experiment,
        target=job.target_label,
        seed=job.master_seed,
        replicate=job.replicate,
    )
    return row


def _map_jobs_generic(jobs, threads, worker):
    if threads <= 1 or len(jobs) <= 1:
        return [worker(job) for job in jobs]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(worker, jobs))


def _glmm_posterior(config):
    if config.glmm_model == "synthetic":
        rows, truth = glmm_mod.generate_synthetic_glmm(
            "poisson-log",
            config.glmm_subjects,
            config.glmm_obs_per_subject,
            beta_true=[0.5, -0.25],
            zeta_true=[math.log(0.7)],
            seed=config.seed,
        )
        data_path = os.path.join(config.out_dir, "glmm_synthetic.csv")
        glmm_mod.write_rows_csv(rows, data_path)
        spec = glmm_mod.build_synthetic_model(rows)
        return glmm_mod.GlmmPosterior(spec), "synthetic", [data_path]
    if not config.dataset:
        raise DataError(f"glmm model {config.glmm_model!r} needs --set dataset=PATH")
    if not os.path.exists(config.dataset):
        raise DataError(f"dataset not found: {config.dataset}")
    rows = glmm_mod.read_rows_csv(config.dataset)
    if config.glmm_model == "epilepsy":
        spec = glmm_mod.build_epilepsy_model(rows)
    elif config.glmm_model == "polypharmacy":
        spec = glmm_mod.build_polypharmacy_model(rows, scale_age=config.scale_age)
    else:
        raise ConfigError(f"unknown glmm model {config.glmm_model!r}")
    return glmm_mod.GlmmPosterior(spec), config.glmm_model, []


def _parse_glmm_sampler(spec_str: str):
    if "-" not in spec_str:
        raise ConfigError(f"glmm sampler must look like kind-mode, got {spec_str!r}")
    kind, mode = spec_str.rsplit("-", 1)
    if mode not in ("joint", "dense", "sparse"):
        raise ConfigError(f"glmm sampler mode must be joint/dense/sparse, got {mode!r}")
    return kind, mode


def run_glmm_sampler(
    posterior, mode: str, kind: str, moments, start, iterations: int, rng, epsilon: float = 0.0
):
    """One GLMM sampling run; returns (theta samples, alphas, seconds, epsilon)."""
    target = posterior.as_target()
    if mode == "joint":
        if not epsilon:
            if kind == "rw":
                epsilon = tune_epsilon("rw", target, moments, RW_TARGET_PJUMP, rng)
            elif kind == "mala":
                epsilon = tune_epsilon("mala", target, moments, MALA_TARGET_PJUMP, rng)
            else:
                epsilon = 0.5
        kernel = make_kernel(kind, epsilon, moments=moments)
        run = run_chain(kernel, target, start, iterations, rng)
        return run.samples, run.alphas.reshape(-1, 1), run.seconds, epsilon
    partition = posterior.partition()
    if mode == "dense":
        wmap = dense_whitening(moments, partition)
    else:
        wmap = sparse_whitening(moments, partition)
    if not epsilon:
        epsilon = 0.5 if kind in ("mirror", "mirrormala") else (2.4 if kind == "rw" else 1.5)
    specs = [KernelSpec(kind, epsilon, c=1.0)] * partition.n_blocks
    sampler = BlockSampler(
        wmap, posterior, specs, theta0=start, eta_componentwise=True
    )
    run = sampler.run(iterations, rng)
    return run.samples, run.alphas, run.seconds, epsilon


def _run_glmm(config, written):
    desk = config.preset == "desk"
    iterations = config.iterations or (20_000 if desk else 10_000_000)
    burnin = config.burnin or (20_000 if desk else 300_000)
    update_every = config.update_every or (5_000 if desk else 50_000)
    samplers = config.glmm_samplers or [
        "rw-joint",
        "mirror-dense",
        "mirror-sparse",
        "mirrormala-sparse",
    ]
    posterior, label, extra_files = _glmm_posterior(config)
    written.extend(extra_files)
    target = posterior.as_target()

    rng = child_rng(config.seed, f"glmm/{label}/burnin", 0)
    burn = run_burnin(target, burnin, update_every=update_every, rng=rng)

    rows = []
    for sampler_str in samplers:
        kind, mode = _parse_glmm_sampler(sampler_str)
        run_rng = child_rng(config.seed, f"glmm/{label}/{sampler_str}", 0)
        posterior.counters.reset()
        samples, alphas, seconds, epsilon = run_glmm_sampler(
            posterior, mode, kind, burn.moments, burn.position, iterations, run_rng
        )
        report = summarize(
            samples, alphas.ravel(), seconds, kernel=sampler_str, epsilon=epsilon, c=1.0
        )
        row = report.to_row()
        row.update(
            experiment="glmm",
            target=label,
            seed=config.seed,
            replicate=0,
            subject_lik_evals=posterior.counters.subject_lik_evals,
            full_posterior_evals=posterior.counters.full_posterior_evals,
        )
        rows.append(row)
        if config.emit_marginals:
            written.extend(
                emit_marginals(
                    samples, config.bins, config.out_dir, prefix=f"glmm_{sampler_str}"
                )
            )
    _emit(config, "glmm", rows, written)


def emit_marginals(samples, bins: int, out_dir: str, prefix: str = "marginal"):
    """Histogram density plus matched-moment normal curve per coordinate.

    Degenerate (constant) coordinates are flagged in the metadata instead of
    producing a curve file.
    """
    samples = np.asarray(samples, dtype=float)
    if samples.ndim == 1:
        samples = samples[:, None]
    if bins < 10:
        raise ConfigError("bins must be at least 10")
    written = []
    degenerate = []
    for j in range(samples.shape[1]):
        col = samples[:, j]
        sd = col.std(ddof=1)
        if sd == 0.0 or not np.isfinite(sd):
            degenerate.append(j)
            continue
        density, edges = np.histogram(col, bins=bins, density=True)
        centers = 0.5 * (edges[:-1] + edges[1:])
        normal = np.exp(-0.5 * ((centers - col.mean()) / sd) ** 2) / (sd * math.sqrt(2 * math.pi))
        rows = [
            {
                "bin_center": float(c),
                "density": float(h),
                "normal_density": float(nrm),
            }
            for c, h, nrm in zip(centers, density, normal)
        ]
        path = os.path.join(out_dir, f"{prefix}_coord{j}.csv")
        _write_csv(path, rows, ["bin_center", "density", "normal_density"])
        written.append(path)
    meta_path = os.path.join(out_dir, f"{prefix}_metadata.json")
    _write_json(
        meta_path,
        {
            "columns": int(samples.shape[1]),
            "bins": int(bins),
            "degenerate_columns": degenerate,
            "degenerate_flag": "DegenerateSeries" if degenerate else "",
        },
    )
    written.append(meta_path)
    return written


_RUNNERS = {
    "pjump-analytic": _run_pjump_analytic,
    "trajectory-demo": _run_trajectory_demo,
    "oned-sweep": _run_oned_sweep,
    "c-sweep": _run_c_sweep,
    "gaussian-grid": _run_gaussian_grid,
    "corr-gaussian": _run_corr_gaussian,
    "logistic": _run_logistic,
    "glmm": _run_glmm,
}


def run_experiment(config: ExperimentConfig) -> list:
    """Run one experiment; returns the list of files written."""
    config.validate()
    os.makedirs(config.out_dir, exist_ok=True)
    written: list = []
    started = time.perf_counter()
    _RUNNERS[config.experiment](config, written)
    manifest = {
        "experiment": config.experiment,
        "preset": config.preset,
        "seed": config.seed,
        "elapsed_seconds": time.perf_counter() - started,
        "files": [os.path.basename(f) for f in written],
        "config": asdict(config),
    }
    manifest_path = os.path.join(config.out_dir, f"{config.experiment}_manifest.json")
    _write_json(manifest_path, manifest)
    written.append(manifest_path)
    return written
