"""Experiment orchestration: configs, seeding, method comparison, rate and alpha-control studies.

Every experiment is driven by a strict JSON config (unknown keys rejected) and
a master seed; replicate seeds derive from (master seed, experiment id, n,
replicate index) so results are independent of scheduling order.  Outputs are
a versioned replicates.csv, rates.csv and summary.json per run.
"""

from __future__ import annotations

import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy.special import ndtr

from . import ar1, oracle
from .core import (
    DecisionConfig,
    GroupStructure,
    SampleWProvider,
    additive_rule,
    optimize_decision,
)
from .errors import (
    BetaZeroBound,
    ErrorReport,
    beta_zero_bound_check,
    calibrate_beta_core,
    error_report,
    joint_probs_at,
    rate_fit,
)
from .kernels import active_kernel_name
from .klrates import KlEnv, equipartition_trace, rate_constants

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "load_config",
    "parse_config",
    "jaccard",
    "ks_distance",
    "szg_rule",
    "run_comparison",
    "run_rates",
    "run_alpha_control",
    "run_oracle_suite",
    "run_equipartition",
    "run_experiment",
    "REPLICATES_HEADER",
]

REPLICATES_SCHEMA = "# nmmt replicates schema v1"
RATES_SCHEMA = "# nmmt rates schema v1"
REPLICATES_HEADER = (
    "experiment,seed,n,method,rejections,jaccard,euclid,ks,"
    "fdr_x,mfdr_x,fnr_x,mfnr_x,beta,wall_ms"
)
_EXPERIMENT_IDS = {
    "compare": 1,
    "rates": 2,
    "alpha-control": 3,
    "oracle-suite": 4,
    "equipartition": 5,
}
_METHODS = ("NMD", "MPR", "SZG")


class ConfigError(ValueError):
    """Malformed experiment configuration."""


# ---------------------------------------------------------------------------
# configuration


def _take(section: dict, allowed: dict, where: str) -> dict:
    """Pop known keys with defaults; reject unknown ones."""
    unknown = set(section) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {sorted(unknown)}")
    out = {}
    for key, default in allowed.items():
        if key in section:
            out[key] = section[key]
        elif default is _REQUIRED:
            raise ConfigError(f"missing required key {key!r} in {where}")
        else:
            out[key] = default
    return out


_REQUIRED = object()


@dataclass(frozen=True)
class Ar1ModelConfig:
    rho0: float
    sigma0_sq: float
    eps: tuple[float, float]
    lambda_kind: str
    block_size: int
    off_diag: float
    lambda_matrix: tuple | None
    signal_indices: tuple[int, ...] | None
    n_signals: int
    signal_value: float
    intercept: bool
    intercept0: float

    def build(self, m: int) -> ar1.Ar1TrueParams:
        if self.lambda_kind == "identity":
            lam = np.eye(m)
        elif self.lambda_kind == "block":
            lam = _block_cov(m, self.block_size, self.off_diag)
        elif self.lambda_kind == "explicit":
            lam = np.asarray(self.lambda_matrix, dtype=float)
        else:
            raise ConfigError(f"unknown lambda kind {self.lambda_kind!r}")
        beta0 = np.zeros(m)
        idx = self.signal_indices
        if idx is None:
            step = max(1, m // max(self.n_signals, 1))
            idx = tuple((k * step) % m for k in range(self.n_signals))
        beta0[list(idx)] = self.signal_value
        return ar1.Ar1TrueParams(
            rho0=self.rho0, beta0=beta0, sigma0_sq=self.sigma0_sq, Lambda=lam,
            intercept0=self.intercept0,
        )


@dataclass(frozen=True)
class OracleModelConfig:
    theta0: tuple[float, ...]
    sigma: float
    prior_mean: float
    prior_sd: float
    eps: float
    groups: object  # "singletons" or explicit list of lists

    def build(self) -> oracle.GaussOracleModel:
        return oracle.GaussOracleModel(
            theta0=np.asarray(self.theta0, dtype=float),
            sigma=self.sigma,
            prior_mean=self.prior_mean,
            prior_sd=self.prior_sd,
            eps=self.eps,
        )

    def build_groups(self) -> GroupStructure:
        if self.groups == "singletons":
            return GroupStructure.singletons(len(self.theta0))
        return GroupStructure.from_lists(self.groups)


@dataclass(frozen=True)
class McmcConfig:
    iters: int = 6000
    burnin: int = 1000
    thin: int = 5
    refit_iters: int = 3000
    refit_burnin: int = 500
    refit_thin: int = 5


@dataclass(frozen=True)
class ControlConfig:
    method: str = "NMD"
    error: str = "mfdr"


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    seed: int
    m: int
    n_grid: tuple[int, ...]
    replicates: int
    alpha: float
    methods: tuple[str, ...]
    group_percentile: float
    out_dir: str | None
    jobs: int
    max_failures: int
    beta: float
    error_fn: str
    resolution: float
    model_kind: str
    ar1_model: Ar1ModelConfig | None
    oracle_model: OracleModelConfig | None
    prior: ar1.SpikeSlabPrior
    mcmc: McmcConfig
    control: ControlConfig
    theta_list: tuple | None


def _block_cov(m: int, block: int, off: float) -> np.ndarray:
    lam = np.eye(m)
    for start in range(0, m, block):
        stop = min(start + block, m)
        lam[start:stop, start:stop] = off
        for k in range(start, stop):
            lam[k, k] = 1.0
    return lam


def parse_config(raw: dict) -> ExperimentConfig:
    top = _take(
        raw,
        {
            "experiment": _REQUIRED,
            "seed": _REQUIRED,
            "m": _REQUIRED,
            "n_grid": _REQUIRED,
            "replicates": _REQUIRED,
            "alpha": 0.05,
            "methods": list(_METHODS),
            "group_percentile": 0.95,
            "out_dir": None,
            "jobs": 1,
            "max_failures": 0,
            "beta": 0.5,
            "error_fn": "fdr",
            "resolution": 2.0**-12,
            "model": _REQUIRED,
            "prior": {},
            "mcmc": {},
            "control": {},
            "theta_list": None,
        },
        "config",
    )
    if top["experiment"] not in _EXPERIMENT_IDS:
        raise ConfigError(f"unknown experiment {top['experiment']!r}")
    n_grid = tuple(int(n) for n in top["n_grid"])
    if any(b <= a for a, b in zip(n_grid, n_grid[1:])):
        raise ConfigError("n_grid must be strictly increasing")
    if top["replicates"] < 1:
        raise ConfigError("replicates must be >= 1")
    if not 0 < top["alpha"] < 1:
        raise ConfigError("alpha must lie in (0, 1)")
    methods = tuple(top["methods"])
    if any(meth not in _METHODS for meth in methods):
        raise ConfigError(f"methods must be a subset of {_METHODS}")
    if top["error_fn"] not in ("fdr", "mfdr"):
        raise ConfigError("error_fn must be 'fdr' or 'mfdr'")

    model_raw = dict(top["model"])
    kind = model_raw.pop("kind", None)
    ar1_model = oracle_model = None
    if kind == "ar1":
        sect = _take(
            model_raw,
            {
                "rho0": -0.5,
                "sigma0_sq": 1.0,
                "eps": [-0.3, 0.3],
                "lambda": {"kind": "identity"},
                "signal_indices": None,
                "n_signals": 0,
                "signal_value": 1.0,
                "intercept": True,
                "intercept0": 0.0,
            },
            "model(ar1)",
        )
        lam_raw = dict(sect["lambda"])
        lam_kind = lam_raw.pop("kind", "identity")
        lam = _take(
            lam_raw, {"block_size": 5, "off_diag": 0.5, "matrix": None}, "model.lambda"
        )
        ar1_model = Ar1ModelConfig(
            rho0=float(sect["rho0"]),
            sigma0_sq=float(sect["sigma0_sq"]),
            eps=(float(sect["eps"][0]), float(sect["eps"][1])),
            lambda_kind=lam_kind,
            block_size=int(lam["block_size"]),
            off_diag=float(lam["off_diag"]),
            lambda_matrix=None if lam["matrix"] is None else tuple(map(tuple, lam["matrix"])),
            signal_indices=None
            if sect["signal_indices"] is None
            else tuple(int(i) for i in sect["signal_indices"]),
            n_signals=int(sect["n_signals"]),
            signal_value=float(sect["signal_value"]),
            intercept=bool(sect["intercept"]),
            intercept0=float(sect["intercept0"]),
        )
    elif kind == "oracle":
        sect = _take(
            model_raw,
            {
                "theta0": _REQUIRED,
                "sigma": 1.0,
                "prior_mean": 0.0,
                "prior_sd": 10.0,
                "eps": 0.3,
                "groups": "singletons",
            },
            "model(oracle)",
        )
        oracle_model = OracleModelConfig(
            theta0=tuple(float(t) for t in sect["theta0"]),
            sigma=float(sect["sigma"]),
            prior_mean=float(sect["prior_mean"]),
            prior_sd=float(sect["prior_sd"]),
            eps=float(sect["eps"]),
            groups=sect["groups"],
        )
        if len(oracle_model.theta0) != top["m"]:
            raise ConfigError("oracle theta0 length must equal m")
    else:
        raise ConfigError("model.kind must be 'ar1' or 'oracle'")

    prior_sect = _take(
        dict(top["prior"]),
        {
            "tau": 100.0,
            "v_spike": 1e-6,
            "p_mode": None,
            "a1": None,
            "b1": None,
            "sigma_mode": None,
            "sigma_var": None,
            "a2": None,
            "b2": None,
        },
        "prior",
    )
    kwargs = {"tau": float(prior_sect["tau"]), "v_spike": float(prior_sect["v_spike"])}
    if prior_sect["a1"] is not None:
        kwargs["a1"], kwargs["b1"] = float(prior_sect["a1"]), float(prior_sect["b1"])
    elif prior_sect["p_mode"] is not None:
        kwargs["a1"], kwargs["b1"] = ar1.beta_hyperparams_for_mode(float(prior_sect["p_mode"]))
    if prior_sect["a2"] is not None:
        kwargs["a2"], kwargs["b2"] = float(prior_sect["a2"]), float(prior_sect["b2"])
    elif prior_sect["sigma_mode"] is not None:
        kwargs["a2"], kwargs["b2"] = ar1.solve_ig_hyperparams(
            float(prior_sect["sigma_mode"]), float(prior_sect["sigma_var"])
        )
    prior = ar1.SpikeSlabPrior(**kwargs)

    mcmc = McmcConfig(**_take(
        dict(top["mcmc"]),
        {"iters": 6000, "burnin": 1000, "thin": 5,
         "refit_iters": 3000, "refit_burnin": 500, "refit_thin": 5},
        "mcmc",
    ))
    control = ControlConfig(**_take(
        dict(top["control"]), {"method": "NMD", "error": "mfdr"}, "control"
    ))
    if control.method not in ("NMD", "MPR") or control.error not in ("fdr", "mfdr"):
        raise ConfigError("control.method must be NMD/MPR and control.error fdr/mfdr")

    theta_list = None
    if top["theta_list"] is not None:
        theta_list = []
        for entry in top["theta_list"]:
            sect = _take(dict(entry), {"rho": _REQUIRED, "beta": _REQUIRED, "sigma_sq": _REQUIRED}, "theta_list[]")
            theta_list.append((float(sect["rho"]), tuple(float(b) for b in sect["beta"]), float(sect["sigma_sq"])))
        theta_list = tuple(theta_list)

    return ExperimentConfig(
        experiment=top["experiment"],
        seed=int(top["seed"]),
        m=int(top["m"]),
        n_grid=n_grid,
        replicates=int(top["replicates"]),
        alpha=float(top["alpha"]),
        methods=methods,
        group_percentile=float(top["group_percentile"]),
        out_dir=top["out_dir"],
        jobs=int(top["jobs"]),
        max_failures=int(top["max_failures"]),
        beta=float(top["beta"]),
        error_fn=top["error_fn"],
        resolution=float(top["resolution"]),
        model_kind=kind,
        ar1_model=ar1_model,
        oracle_model=oracle_model,
        prior=prior,
        mcmc=mcmc,
        control=control,
        theta_list=theta_list,
    )


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    with open(path) as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
    return parse_config(raw)


# ---------------------------------------------------------------------------
# comparison metrics


def jaccard(d0: DecisionConfig, d: DecisionConfig) -> float:
    """|rejections in both| / |rejections in either|; 1 when both reject nothing."""
    if d0.m != d.m:
        raise ValueError("decision vectors differ in length")
    inter = sum(a & b for a, b in zip(d0.bits, d.bits))
    union = sum(a | b for a, b in zip(d0.bits, d.bits))
    return 1.0 if union == 0 else inter / union


def ks_distance(samples: np.ndarray, cdf: Callable[[np.ndarray], np.ndarray]) -> float:
    """One-sample Kolmogorov-Smirnov statistic by sorted-sample sweep."""
    samples = np.asarray(samples, dtype=float)
    if samples.size < 1:
        raise ValueError("need at least one sample")
    xs = np.sort(samples)
    size = xs.size
    f_vals = np.asarray(cdf(xs), dtype=float)
    steps = np.arange(1, size + 1) / size
    return float(max(np.max(steps - f_vals), np.max(f_vals - (steps - 1.0 / size))))


def szg_rule(v: Sequence[float], alpha: float) -> DecisionConfig:
    """Largest rejection set, filled in order of decreasing alternative probability,
    whose posterior FDR stays at or below alpha."""
    v = np.asarray(v, dtype=float)
    order = np.lexsort((np.arange(v.size), -v))
    cum = np.cumsum(1.0 - v[order])
    k_sizes = np.arange(1, v.size + 1)
    ok = cum / k_sizes <= alpha
    k_best = int(np.max(np.nonzero(ok)[0]) + 1) if np.any(ok) else 0
    bits = np.zeros(v.size, dtype=np.uint8)
    bits[order[:k_best]] = 1
    return DecisionConfig.from_array(bits)


class _MarginalProvider:
    """w(d, i) = v_i: a singleton-group provider for calibrating the additive rule."""

    def __init__(self, v: np.ndarray):
        self._v = np.asarray(v, dtype=float)

    def __call__(self, bits, i: int) -> float:
        return float(self._v[i])


def calibrate_beta_additive(v: np.ndarray, alpha: float, resolution: float = 2.0**-12) -> float:
    singles = GroupStructure.singletons(len(v))
    return calibrate_beta_core(v, _MarginalProvider(v), singles, alpha, "fdr", resolution)


# ---------------------------------------------------------------------------
# shared run helpers


def _seed_for(cfg_seed: int, experiment: str, *parts: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([cfg_seed, _EXPERIMENT_IDS[experiment], *[int(p) for p in parts]])


def _seed_id(ss: np.random.SeedSequence) -> int:
    return int(ss.generate_state(1, dtype=np.uint64)[0] % np.uint64(2**63))


def _fmt(x) -> str:
    if isinstance(x, float):  # includes numpy float64, which is a float subclass
        if math.isnan(x):
            return "nan"
        return repr(float(x))
    return str(int(x)) if isinstance(x, np.integer) else str(x)


def _write_rows(path: Path, schema: str, header: str, rows: list[list]) -> None:
    with open(path, "w") as fh:
        fh.write(schema + "\n")
        fh.write(header + "\n")
        for row in rows:
            fh.write(",".join(_fmt(x) for x in row) + "\n")


def _write_json(path: Path, payload: dict) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _method_order(methods: Sequence[str]) -> list[str]:
    return [meth for meth in _METHODS if meth in methods]


# ---------------------------------------------------------------------------
# the section-7 style three-method comparison (AR(1) model)


def _compare_replicate(cfg: ExperimentConfig, n: int, rep: int) -> list[dict]:
    params = cfg.ar1_model.build(cfg.m)
    eps = cfg.ar1_model.eps
    groups = ar1.form_groups(params.Lambda, cfg.group_percentile)
    hyps = ar1.map_hypotheses(cfg.m, eps)
    d_t = ar1.true_decision(params, eps)

    root = _seed_for(cfg.seed, "compare", n, rep)
    s_z, s_x, s_mcmc, s_znext = root.spawn(4)
    Z = ar1.gen_covariates(n, params.Lambda, s_z)
    x = ar1.gen_data(Z, params, s_x)
    post = ar1.posterior_sample(
        x, Z, cfg.prior, iters=cfg.mcmc.iters, burnin=cfg.mcmc.burnin, thin=cfg.mcmc.thin,
        seed=s_mcmc, intercept=cfg.ar1_model.intercept,
    )
    samples = post.sample_set()
    provider = SampleWProvider(samples, groups, hyps)
    v = provider.marginals()
    z_next = ar1.gen_covariates(1, params.Lambda, s_znext)[0]
    x_n = float(x[-1])
    true_mean = params.rho0 * x_n + float(z_next @ params.beta0) + params.intercept0
    true_sd = math.sqrt(params.sigma0_sq)
    true_cdf = lambda q: ndtr((q - true_mean) / true_sd)  # noqa: E731

    rows = []
    for mi, method in enumerate(_method_order(cfg.methods)):
        t0 = time.perf_counter()
        if method == "NMD":
            beta = calibrate_beta_core(
                v, provider, groups, cfg.alpha, cfg.error_fn, cfg.resolution
            )
            d_hat = optimize_decision(provider, groups, beta, groups.m)
        elif method == "MPR":
            beta = calibrate_beta_additive(v, cfg.alpha, cfg.resolution)
            d_hat = additive_rule(v, beta)
        else:
            beta = float("nan")
            d_hat = szg_rule(v, cfg.alpha)
        report = error_report(d_hat, v, joint_probs_at(provider, d_hat))

        s_refit, s_pred = _seed_for(cfg.seed, "compare", n, rep, 100 + mi).spawn(2)
        refit_post = ar1.refit_posterior(
            d_hat, x, Z, cfg.prior.tau, cfg.prior,
            iters=cfg.mcmc.refit_iters, burnin=cfg.mcmc.refit_burnin, thin=cfg.mcmc.refit_thin,
            seed=s_refit, intercept=cfg.ar1_model.intercept,
        )
        mode = ar1.refit_mode(refit_post, d_hat, x, Z, cfg.prior.tau, cfg.prior,
                              intercept=cfg.ar1_model.intercept)
        euclid = math.sqrt(
            float((mode.beta_hat - params.beta0) @ (mode.beta_hat - params.beta0))
            + (mode.rho_hat - params.rho0) ** 2
        )
        pred = ar1.posterior_predictive(refit_post, z_next, x_n, seed=s_pred)
        ks = ks_distance(pred, true_cdf)
        wall_ms = int(round(1000.0 * (time.perf_counter() - t0)))
        rows.append(
            {
                "experiment": cfg.experiment,
                "seed": _seed_id(root),
                "n": n,
                "method": method,
                "rejections": d_hat.rejections(),
                "jaccard": jaccard(d_t, d_hat),
                "euclid": euclid,
                "ks": ks,
                "fdr_x": report.fdr_x,
                "mfdr_x": report.mfdr_x,
                "fnr_x": report.fnr_x,
                "mfnr_x": report.mfnr_x,
                "beta": beta,
                "wall_ms": wall_ms,
            }
        )
    return rows


def _task_compare(args):
    cfg, n, rep = args
    try:
        return (n, rep, _compare_replicate(cfg, n, rep), None)
    except Exception as exc:  # noqa: BLE001 - per-replicate failures are recorded, run continues
        return (n, rep, [], f"{type(exc).__name__}: {exc}")


def _run_tasks(tasks, worker, jobs: int):
    if jobs <= 1:
        return [worker(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(worker, tasks, chunksize=1))


def run_comparison(cfg: ExperimentConfig, out_dir: str | Path) -> dict:
    """Three-method comparison on the AR(1) model; writes replicates.csv and summary.json."""
    if cfg.model_kind != "ar1":
        raise ConfigError("compare requires an ar1 model")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    tasks = [(cfg, n, rep) for n in cfg.n_grid for rep in range(cfg.replicates)]
    results = _run_tasks(tasks, _task_compare, cfg.jobs)
    results.sort(key=lambda r: (r[0], r[1]))

    rows, failures = [], []
    for n, rep, rep_rows, err in results:
        if err is not None:
            failures.append({"n": n, "replicate": rep, "error": err})
        for row in rep_rows:
            rows.append([row[col] for col in REPLICATES_HEADER.split(",")])
    _write_rows(out / "replicates.csv", REPLICATES_SCHEMA, REPLICATES_HEADER, rows)

    cells = _summarize_cells(rows)
    n_total = len(cfg.n_grid) * cfg.replicates
    summary = {
        "experiment": cfg.experiment,
        "kernel": active_kernel_name(),
        "alpha": cfg.alpha,
        "methods": list(_method_order(cfg.methods)),
        "n_grid": list(cfg.n_grid),
        "replicates": cfg.replicates,
        "bookkeeping": {
            "n_replicates": n_total,
            "n_qualifying": n_total - len(failures),
            "n_excluded": 0,
            "n_failed": len(failures),
        },
        "failures": failures,
        "cells": cells,
    }
    _write_json(out / "summary.json", summary)
    return summary


def _summarize_cells(rows: list[list]) -> list[dict]:
    cols = REPLICATES_HEADER.split(",")
    idx = {c: i for i, c in enumerate(cols)}
    metrics = ["jaccard", "euclid", "ks", "fdr_x", "mfdr_x", "fnr_x", "mfnr_x", "rejections"]
    groups: dict[tuple, list] = {}
    for row in rows:
        groups.setdefault((row[idx["method"]], row[idx["n"]]), []).append(row)
    cells = []
    for (method, n), bucket in sorted(groups.items(), key=lambda kv: (kv[0][1], kv[0][0])):
        for metric in metrics:
            vals = np.array([float(r[idx[metric]]) for r in bucket])
            cells.append(
                {
                    "method": method,
                    "n": int(n),
                    "metric": metric,
                    "count": int(vals.size),
                    "mean": float(vals.mean()),
                    "median": float(np.median(vals)),
                }
            )
    return cells


# ---------------------------------------------------------------------------
# oracle-model replicate machinery (exact posteriors)


def _oracle_replicate_provider(cfg: ExperimentConfig, n: int, rep: int, groups: GroupStructure):
    model = cfg.oracle_model.build()
    root = _seed_for(cfg.seed, cfg.experiment, n, rep)
    data = oracle.gen_oracle_data(model, n, root)
    post = oracle.analytic_posterior(model, data)
    provider = oracle.AnalyticWProvider(post, groups, model.eps)
    return provider.marginals(), provider


def _oracle_decide(cfg, v, provider, groups, beta: float, method: str) -> DecisionConfig:
    if method == "NMD":
        return optimize_decision(provider, groups, beta, groups.m)
    if method == "MPR":
        return additive_rule(v, beta)
    raise ConfigError(f"alpha-control supports NMD/MPR, got {method!r}")


def run_rates(cfg: ExperimentConfig, out_dir: str | Path) -> dict:
    """Error decay study: mean posterior errors per n, OLS slopes, theoretical targets.

    Oracle mode uses exact posterior probabilities (no Monte-Carlo posterior
    noise); AR(1) mode runs the Gibbs sampler per replicate.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    measures = ("fdr_x", "mfdr_x", "fnr_x", "mfnr_x")

    if cfg.model_kind == "oracle":
        model = cfg.oracle_model.build()
        groups = cfg.oracle_model.build_groups()
        d_t = oracle.true_decision(model)
        consts = oracle.oracle_rate_constants(model, d_t, groups)
        targets = {
            "fdr_x": -consts.h_min,
            "mfdr_x": -consts.j_min,
            "fnr_x": -consts.h_tilde_min,
            "mfnr_x": -consts.h_tilde_min,
        }
    else:
        params = cfg.ar1_model.build(cfg.m)
        groups = ar1.form_groups(params.Lambda, cfg.group_percentile)
        d_t = ar1.true_decision(params, cfg.ar1_model.eps)
        env = KlEnv.from_ar1(params)
        consts = rate_constants(d_t, groups, env, cfg.ar1_model.eps)
        targets = {
            "fdr_x": -consts.h_min,
            "mfdr_x": -consts.j_min,
            "fnr_x": -consts.h_tilde_min,
            "mfnr_x": -consts.h_tilde_min,
        }

    means: dict[str, list[tuple[int, float]]] = {meas: [] for meas in measures}
    n_zero_rows = 0
    for n in cfg.n_grid:
        acc = {meas: [] for meas in measures}
        for rep in range(cfg.replicates):
            report = _rates_replicate(cfg, n, rep, groups)
            for meas in measures:
                acc[meas].append(report.value(meas))
        for meas in measures:
            means[meas].append((n, float(np.mean(acc[meas]))))

    rows = []
    fits = {}
    for meas in measures:
        for n, mean_err in means[meas]:
            rows.append([n, meas, mean_err, targets[meas]])
        try:
            fit = rate_fit(means[meas])
            fits[meas] = {
                "slope": fit.slope,
                "intercept": fit.intercept,
                "r_squared": fit.r_squared,
                "n_dropped": fit.n_dropped,
                "slope_target": targets[meas],
                "rel_gap": abs(fit.slope - targets[meas]) / abs(targets[meas])
                if targets[meas] != 0
                else float("nan"),
            }
            n_zero_rows += fit.n_dropped
        except Exception as exc:  # noqa: BLE001
            fits[meas] = {"error": f"{type(exc).__name__}: {exc}", "slope_target": targets[meas]}
    _write_rows(out / "rates.csv", RATES_SCHEMA, "n,measure,mean_error,slope_target", rows)
    summary = {
        "experiment": cfg.experiment,
        "kernel": active_kernel_name(),
        "beta": cfg.beta,
        "n_grid": list(cfg.n_grid),
        "replicates": cfg.replicates,
        "bookkeeping": {
            "n_replicates": len(cfg.n_grid) * cfg.replicates,
            "n_qualifying": len(cfg.n_grid) * cfg.replicates,
            "n_excluded": 0,
            "n_failed": 0,
        },
        "dropped_zero_means": n_zero_rows,
        "fits": fits,
        "rate_constants": {
            "j_min": consts.j_min,
            "h_min": consts.h_min,
            "h_tilde_min": consts.h_tilde_min,
        },
    }
    _write_json(out / "summary.json", summary)
    return summary


def _rates_replicate(cfg: ExperimentConfig, n: int, rep: int, groups: GroupStructure) -> ErrorReport:
    if cfg.model_kind == "oracle":
        model = cfg.oracle_model.build()
        root = _seed_for(cfg.seed, cfg.experiment, n, rep)
        data = oracle.gen_oracle_data(model, n, root)
        post = oracle.analytic_posterior(model, data)
        provider = oracle.AnalyticWProvider(post, groups, model.eps)
        d_hat = optimize_decision(provider, groups, cfg.beta, groups.m)
        # tail-stable report: exponentially small errors survive at large n
        return oracle.analytic_error_report(post, d_hat, groups, model.eps)
    params = cfg.ar1_model.build(cfg.m)
    root = _seed_for(cfg.seed, cfg.experiment, n, rep)
    s_z, s_x, s_mcmc = root.spawn(3)
    Z = ar1.gen_covariates(n, params.Lambda, s_z)
    x = ar1.gen_data(Z, params, s_x)
    post = ar1.posterior_sample(
        x, Z, cfg.prior, iters=cfg.mcmc.iters, burnin=cfg.mcmc.burnin, thin=cfg.mcmc.thin,
        seed=s_mcmc, intercept=cfg.ar1_model.intercept,
    )
    hyps = ar1.map_hypotheses(cfg.m, cfg.ar1_model.eps)
    provider = SampleWProvider(post.sample_set(), groups, hyps)
    v = provider.marginals()
    d_hat = optimize_decision(provider, groups, cfg.beta, groups.m)
    return error_report(d_hat, v, joint_probs_at(provider, d_hat))


# ---------------------------------------------------------------------------
# alpha-control study (oracle model)


def run_alpha_control(cfg: ExperimentConfig, out_dir: str | Path) -> dict:
    """Calibrate beta_n so the replicate-averaged conditional error hits the target level.

    Also runs the beta=0 bound check at the largest n.  Emits an infeasibility
    report when the target lies outside the theorem's interval.
    """
    if cfg.model_kind != "oracle":
        raise ConfigError("alpha-control requires an oracle model")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    model = cfg.oracle_model.build()
    groups = cfg.oracle_model.build_groups()
    d_t = oracle.true_decision(model)
    s_t = d_t.rejections()
    m = model.m
    null_groups = [i for i in range(m) if not any(d_t.bits[j] for j in groups.groups[i])]
    m1 = m - len(null_groups)
    m0 = m - s_t
    lower = 1.0 / (s_t + 1.0)
    upper = (m - m1) / (s_t + (m - m1))

    method, err_kind = cfg.control.method, cfg.control.error
    if method == "NMD" and not lower < cfg.alpha < upper:
        summary = {
            "experiment": cfg.experiment,
            "infeasible": True,
            "reason": f"target {cfg.alpha} outside the attainable interval ({lower:.6g}, {upper:.6g})",
            "bounds": {"lower": lower, "upper": upper},
        }
        _write_json(out / "summary.json", summary)
        return summary
    if method == "MPR" and not cfg.alpha < m0 / m:
        summary = {
            "experiment": cfg.experiment,
            "infeasible": True,
            "reason": f"target {cfg.alpha} not below the additive-rule ceiling {m0}/{m}",
            "bounds": {"upper": m0 / m},
        }
        _write_json(out / "summary.json", summary)
        return summary

    rows = []
    trace = []
    for n in cfg.n_grid:
        cached = [
            _oracle_replicate_provider(cfg, n, rep, groups) for rep in range(cfg.replicates)
        ]

        def achieved(beta: float) -> tuple[float, float, int]:
            vals = []
            for v, provider in cached:
                d_hat = _oracle_decide(cfg, v, provider, groups, beta, method)
                if d_hat.rejections() == 0:
                    continue
                if err_kind == "mfdr":
                    vals.append(
                        float(np.mean([1.0 - provider(d_hat.as_array(), i)
                                       for i in range(m) if d_hat.bits[i]]))
                    )
                else:
                    vals.append(
                        float(np.mean([1.0 - v[i] for i in range(m) if d_hat.bits[i]]))
                    )
            if not vals:
                return 0.0, float("nan"), 0
            arr = np.asarray(vals)
            se = float(arr.std(ddof=1) / math.sqrt(arr.size)) if arr.size > 1 else float("nan")
            return float(arr.mean()), se, arr.size

        # beta_n decays exponentially in n, so bisect on log(beta)
        t_lo, t_hi = math.log(1e-300), 0.0
        for _ in range(60):
            t_mid = 0.5 * (t_lo + t_hi)
            val, _, _ = achieved(math.exp(t_mid))
            if val > cfg.alpha:
                t_lo = t_mid
            else:
                t_hi = t_mid
        beta_n = math.exp(t_hi)
        val, se, k = achieved(beta_n)
        trace.append(beta_n)
        rows.append([n, beta_n, val, se, k, cfg.replicates - k, 0, cfg.alpha])

    bound = _beta_zero_check(cfg, model, groups, d_t)
    _write_rows(
        out / "alpha_control.csv",
        "# nmmt alpha-control schema v1",
        "n,beta_n,achieved,std_err,n_qualifying,n_excluded,n_failed,target",
        rows,
    )
    summary = {
        "experiment": cfg.experiment,
        "infeasible": False,
        "method": method,
        "error": err_kind,
        "target": cfg.alpha,
        "bounds": {"lower": lower, "upper": upper, "additive_ceiling": m0 / m},
        "beta_trace": trace,
        "beta_trace_decreasing": all(t0 > t1 for t0, t1 in zip(trace, trace[1:])),
        "achieved_at_largest_n": rows[-1][2],
        "std_err_at_largest_n": rows[-1][3],
        "bookkeeping": {
            "n_replicates": cfg.replicates,
            "n_qualifying": rows[-1][4],
            "n_excluded": rows[-1][5],
            "n_failed": 0,
        },
        "beta_zero_check": {
            "observed": bound.observed,
            "lower": bound.lower,
            "upper": bound.upper,
            "std_err": bound.std_err,
            "within": bound.within,
            "n_qualifying": bound.n_qualifying,
        },
    }
    _write_json(out / "summary.json", summary)
    return summary


def _beta_zero_check(cfg, model, groups, d_t) -> BetaZeroBound:
    n_max = cfg.n_grid[-1]
    cached = [
        _oracle_replicate_provider(cfg, n_max, rep, groups) for rep in range(cfg.replicates)
    ]

    def runner(rep: int):
        v, provider = cached[rep]
        d_hat = optimize_decision(provider, groups, 0.0, groups.m)
        return d_hat, error_report(d_hat, v, joint_probs_at(provider, d_hat))

    return beta_zero_bound_check(runner, cfg.replicates, d_t, groups)


# ---------------------------------------------------------------------------
# oracle property suite


def run_oracle_suite(cfg: ExperimentConfig, out_dir: str | Path) -> dict:
    """Monte-Carlo vs analytic posterior checks and optimizer equivalence on random instances."""
    if cfg.model_kind != "oracle":
        raise ConfigError("oracle-suite requires an oracle model")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    from .core import brute_force_decision  # local import to keep module top lean

    model = cfg.oracle_model.build()
    groups = cfg.oracle_model.build_groups()
    hyps = oracle.hypothesis_set(model)
    m = model.m
    draws = 4000
    n_obs = cfg.n_grid[-1]

    v_fail = w_fail = mismatch = 0
    lln_flags = []
    rng = np.random.default_rng(cfg.seed)
    for rep in range(cfg.replicates):
        root = _seed_for(cfg.seed, "oracle-suite", n_obs, rep)
        data = oracle.gen_oracle_data(model, n_obs, root)
        post = oracle.analytic_posterior(model, data)
        samples = oracle.sample_posterior(post, draws, root.spawn(1)[0])
        provider = SampleWProvider(samples, groups, hyps)
        exact = oracle.AnalyticWProvider(post, groups, model.eps)
        v_mc, v_ex = provider.marginals(), exact.marginals()
        tol = 3.0 * np.sqrt(v_ex * (1.0 - v_ex) / draws) + 0.005
        v_fail += int(np.any(np.abs(v_mc - v_ex) > tol))
        bits = rng.integers(0, 2, size=m)
        i = int(rng.integers(m))
        w_mc, w_ex = provider(bits, i), exact(bits, i)
        w_tol = 3.0 * math.sqrt(max(w_ex * (1.0 - w_ex), 1e-12) / draws) + 0.005
        w_fail += int(abs(w_mc - w_ex) > w_tol)
        beta = float(rng.uniform(0.05, 0.95))
        if (
            optimize_decision(provider, groups, beta, m).bits
            != brute_force_decision(provider, groups, beta, m).bits
        ):
            mismatch += 1
        xbar = data.mean(axis=0)
        lln_flags.append(bool(np.any(np.abs(xbar - model.theta0) > 4.0 * model.sigma / math.sqrt(n_obs))))

    checks = {
        "marginal_prob_within_tolerance": {"failures": v_fail, "total": cfg.replicates},
        "joint_prob_within_tolerance": {"failures": w_fail, "total": cfg.replicates},
        "optimizer_matches_brute_force": {"failures": mismatch, "total": cfg.replicates},
        "sample_mean_lln_flag": {"flagged": int(sum(lln_flags)), "total": cfg.replicates},
    }
    passed = v_fail == 0 and w_fail == 0 and mismatch == 0
    summary = {
        "experiment": cfg.experiment,
        "passed": bool(passed),
        "draws": draws,
        "checks": checks,
        "bookkeeping": {
            "n_replicates": cfg.replicates,
            "n_qualifying": cfg.replicates,
            "n_excluded": 0,
            "n_failed": 0,
        },
    }
    _write_json(out / "summary.json", summary)
    return summary


# ---------------------------------------------------------------------------
# equipartition study


def run_equipartition(cfg: ExperimentConfig, out_dir: str | Path) -> dict:
    """Residuals of the normalized log likelihood ratio against the closed-form rate."""
    if cfg.model_kind != "ar1" or not cfg.theta_list:
        raise ConfigError("equipartition requires an ar1 model and a theta_list")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    params = cfg.ar1_model.build(cfg.m)
    rows_raw = equipartition_trace(
        [(r, np.asarray(b), s) for r, b, s in cfg.theta_list],
        cfg.n_grid,
        cfg.replicates,
        params,
        seed=cfg.seed,
    )
    rows = [
        [r["theta_id"], r["n"], r["rate"], r["mc_rate"], r["mean_resid"], r["median_resid"], r["std_err"]]
        for r in rows_raw
    ]
    _write_rows(
        out / "equipartition.csv",
        "# nmmt equipartition schema v1",
        "theta_id,n,rate,mc_rate,mean_resid,median_resid,std_err",
        rows,
    )
    shrinking = all(
        last["median_resid"] <= first["median_resid"] or first["rate"] == 0.0
        for first, last in _pair_extremes(rows_raw)
    )
    summary = {
        "experiment": cfg.experiment,
        "n_grid": list(cfg.n_grid),
        "replicates": cfg.replicates,
        "residual_shrinks": bool(shrinking),
        "bookkeeping": {
            "n_replicates": len(cfg.theta_list) * len(cfg.n_grid) * cfg.replicates,
            "n_qualifying": len(cfg.theta_list) * len(cfg.n_grid) * cfg.replicates,
            "n_excluded": 0,
            "n_failed": 0,
        },
    }
    _write_json(out / "summary.json", summary)
    return summary


def _pair_extremes(rows_raw: list[dict]):
    by_theta: dict[int, list[dict]] = {}
    for row in rows_raw:
        by_theta.setdefault(row["theta_id"], []).append(row)
    for rows in by_theta.values():
        rows = sorted(rows, key=lambda r: r["n"])
        yield rows[0], rows[-1]


def run_experiment(cfg: ExperimentConfig, out_dir: str | Path) -> dict:
    runner = {
        "compare": run_comparison,
        "rates": run_rates,
        "alpha-control": run_alpha_control,
        "oracle-suite": run_oracle_suite,
        "equipartition": run_equipartition,
    }[cfg.experiment]
    return runner(cfg, out_dir)
