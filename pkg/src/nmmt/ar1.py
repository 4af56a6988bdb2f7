"""AR(1) response with time-varying covariates: generator, sampler, groups, refits.

The true process is x_t = rho0 x_{t-1} + z_t' beta0 + eps_t with x_0 = 0 and
iid normal innovations; covariate rows are iid N(0, Lambda).  The postulated
Bayesian model mirrors it with a spike-and-slab prior over the regression
coefficients, an inverse-gamma prior on the innovation variance and an
unconstrained N(0,1) prior on the autoregressive coefficient, so the
stationarity hypothesis |rho| < 1 keeps a nondegenerate posterior.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .core import DecisionConfig, GroupStructure, Hypothesis, HypothesisSet, PosteriorSampleSet
from .kernels import active_kernel

__all__ = [
    "Ar1TrueParams",
    "SpikeSlabPrior",
    "Ar1Posterior",
    "RefitResult",
    "solve_ig_hyperparams",
    "beta_hyperparams_for_mode",
    "save_dataset",
    "load_dataset",
    "gen_covariates",
    "gen_data",
    "posterior_sample",
    "map_hypotheses",
    "form_groups",
    "true_decision",
    "log_likelihood_ratio",
    "posterior_predictive",
    "refit_posterior",
    "refit_mode",
    "refit_selected",
]


@dataclass(frozen=True)
class Ar1TrueParams:
    """True generator: |rho0| < 1, coefficient vector, innovation variance, covariate covariance."""

    rho0: float
    beta0: np.ndarray
    sigma0_sq: float
    Lambda: np.ndarray
    intercept0: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "beta0", np.asarray(self.beta0, dtype=float))
        object.__setattr__(self, "Lambda", np.asarray(self.Lambda, dtype=float))
        if not abs(self.rho0) < 1:
            raise ValueError("stationarity requires |rho0| < 1")
        if self.sigma0_sq <= 0:
            raise ValueError("sigma0_sq must be positive")
        if self.Lambda.shape != (self.m, self.m):
            raise ValueError("Lambda must be m x m")
        if not np.allclose(self.Lambda, self.Lambda.T):
            raise ValueError("Lambda must be symmetric")
        np.linalg.cholesky(self.Lambda)  # positive definiteness

    @property
    def m(self) -> int:
        return self.beta0.shape[0]


def solve_ig_hyperparams(mode: float, variance: float) -> tuple[float, float]:
    """Inverse-gamma (a, b) with the requested mode b/(a+1) and variance b^2/((a-1)^2 (a-2)).

    The variance exists only for a > 2; the root in a is found numerically
    and b follows from the mode equation.
    """
    if mode <= 0 or variance <= 0:
        raise ValueError("mode and variance must be positive")

    def gap(a: float) -> float:
        b = mode * (a + 1.0)
        return b * b / ((a - 1.0) ** 2 * (a - 2.0)) - variance

    lo = 2.0 + 1e-9
    hi = 4.0
    while gap(hi) > 0:
        hi *= 2.0
        if hi > 1e12:
            raise RuntimeError("no inverse-gamma solution found")
    a = brentq(gap, lo, hi, xtol=1e-12, rtol=1e-14)
    return a, mode * (a + 1.0)


def beta_hyperparams_for_mode(mode: float, a1: float = 2.0) -> tuple[float, float]:
    """Beta (a1, b1) with prior mode (a1-1)/(a1+b1-2); a1 fixed, b1 solved."""
    if not 0 < mode < 1 or a1 <= 1:
        raise ValueError("need 0 < mode < 1 and a1 > 1")
    b1 = (a1 - 1.0) / mode + 2.0 - a1
    return a1, b1


_DEFAULT_IG = solve_ig_hyperparams(1.0, 100.0)


@dataclass(frozen=True)
class SpikeSlabPrior:
    """Two-component normal mixture on each tested coefficient plus nuisance priors.

    Slab N(0, tau^2), spike N(0, v_spike * tau^2); inclusion probability p has
    a Beta(a1, b1) prior (defaults put the mode at 0.1); the innovation
    variance is inverse-gamma (defaults: mode 1, variance 100); rho is a fixed
    standard normal.
    """

    tau: float = 100.0
    v_spike: float = 1e-6
    a1: float = 2.0
    b1: float = 10.0
    a2: float = _DEFAULT_IG[0]
    b2: float = _DEFAULT_IG[1]

    def __post_init__(self) -> None:
        if self.tau <= 0 or not 0 < self.v_spike < 1:
            raise ValueError("need tau > 0 and 0 < v_spike < 1")
        if min(self.a1, self.b1, self.a2, self.b2) <= 0:
            raise ValueError("Beta/inverse-gamma hyperparameters must be positive")


def save_dataset(path, x: np.ndarray, Z: np.ndarray) -> None:
    """Write a dataset as CSV with columns t, x, z_1..z_m (t starts at 1)."""
    x = np.asarray(x, dtype=float)
    Z = np.asarray(Z, dtype=float)
    if Z.shape[0] != x.shape[0]:
        raise ValueError("x and Z disagree on n")
    header = "t,x," + ",".join(f"z_{i + 1}" for i in range(Z.shape[1]))
    with open(path, "w") as fh:
        fh.write(header + "\n")
        for t in range(x.shape[0]):
            cells = [str(t + 1), repr(float(x[t]))] + [repr(float(v)) for v in Z[t]]
            fh.write(",".join(cells) + "\n")


def load_dataset(path) -> tuple[np.ndarray, np.ndarray]:
    """Read a dataset written by :func:`save_dataset`; returns (x, Z) in t order."""
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        if header[:2] != ["t", "x"]:
            raise ValueError(f"unexpected dataset header {header[:2]}")
        rows = [line.strip().split(",") for line in fh if line.strip()]
    rows.sort(key=lambda r: int(r[0]))
    x = np.array([float(r[1]) for r in rows])
    Z = np.array([[float(v) for v in r[2:]] for r in rows])
    return x, Z


def gen_covariates(n: int, Lambda: np.ndarray, seed) -> np.ndarray:
    """n iid covariate rows from N(0, Lambda), via its Cholesky factor."""
    Lambda = np.asarray(Lambda, dtype=float)
    chol = np.linalg.cholesky(Lambda)
    rng = np.random.default_rng(seed)
    return rng.standard_normal((n, Lambda.shape[0])) @ chol.T


def gen_data(Z: np.ndarray, params: Ar1TrueParams, seed) -> np.ndarray:
    """Series of length n from the true AR(1) recursion, x_0 = 0."""
    Z = np.asarray(Z, dtype=float)
    if Z.shape[1] != params.m:
        raise ValueError("covariate matrix width does not match beta0")
    n = Z.shape[0]
    rng = np.random.default_rng(seed)
    eps = math.sqrt(params.sigma0_sq) * rng.standard_normal(n)
    drive = Z @ params.beta0 + params.intercept0 + eps
    x = np.empty(n)
    prev = 0.0
    for t in range(n):
        prev = params.rho0 * prev + drive[t]
        x[t] = prev
    return x


@dataclass(frozen=True)
class Ar1Posterior:
    """Retained draws of the spike-and-slab sampler.

    ``beta`` is (S, m) over the tested coefficients; ``intercept`` is (S,) or
    None.  ``sample_set`` exposes the hypothesis coordinates (rho first, then
    the tested coefficients) for the decision machinery.
    """

    beta: np.ndarray
    gamma: np.ndarray
    p: np.ndarray
    sigma_sq: np.ndarray
    rho: np.ndarray
    intercept: np.ndarray | None
    provenance: str

    @property
    def size(self) -> int:
        return self.beta.shape[0]

    @property
    def m(self) -> int:
        return self.beta.shape[1]

    def sample_set(self) -> PosteriorSampleSet:
        thetas = np.column_stack([self.rho, self.beta])
        return PosteriorSampleSet(
            thetas=thetas, coord_index=np.arange(self.m + 1), provenance=self.provenance
        )


def posterior_sample(
    x: np.ndarray,
    Z: np.ndarray,
    prior: SpikeSlabPrior,
    iters: int = 6000,
    burnin: int = 1000,
    thin: int = 5,
    seed=0,
    intercept: bool = True,
    kernel=None,
    init: dict | None = None,
) -> Ar1Posterior:
    """Systematic-scan Gibbs sampler for the postulated model.

    Retains (iters - burnin) / thin draws.  All randomness is pregenerated
    from one seeded stream, so draws are reproducible and identical across
    the compiled and pure-Python kernels.  ``init`` optionally warm-starts
    the chain state (keys b, gamma, p, sigma_sq, rho).
    """
    if iters <= burnin:
        raise ValueError("iters must exceed burnin")
    if thin < 1 or (iters - burnin) % thin != 0:
        raise ValueError("thin must divide iters - burnin")
    x = np.asarray(x, dtype=float)
    Z = np.asarray(Z, dtype=float)
    n = x.shape[0]
    if Z.shape[0] != n:
        raise ValueError("x and Z disagree on n")
    m = Z.shape[1]
    icpt = 1 if intercept else 0
    design = np.column_stack([np.ones(n), Z]) if intercept else Z
    lag = np.concatenate([[0.0], x[:-1]])

    G0 = design.T @ design
    G0 = (G0 + G0.T) / 2.0  # exact symmetry so both kernels factor identical bytes
    Zy = design.T @ x
    ZL = design.T @ lag
    yy = float(x @ x)
    yL = float(x @ lag)
    LL = float(lag @ lag)

    rng = np.random.default_rng(seed)
    p_dim = m + icpt
    norm_beta = rng.standard_normal((iters, p_dim))
    unif_gamma = rng.random((iters, m))
    u_p = rng.random(iters)
    gam_sigma = rng.gamma(prior.a2 + 0.5 * n, 1.0, size=iters)
    norm_rho = rng.standard_normal(iters)

    init = init or {}
    mod = kernel if kernel is not None else active_kernel()
    beta_out, gamma_out, p_out, sig2_out, rho_out, n_jitter = mod.run_chain(
        np.ascontiguousarray(G0),
        np.ascontiguousarray(Zy),
        np.ascontiguousarray(ZL),
        yy,
        yL,
        LL,
        icpt,
        prior.tau**2,
        prior.v_spike * prior.tau**2,
        prior.a1,
        prior.b1,
        prior.b2,
        norm_beta,
        unif_gamma,
        u_p,
        gam_sigma,
        norm_rho,
        iters,
        burnin,
        thin,
        init_b=init.get("b"),
        init_gamma=init.get("gamma"),
        init_p=float(init.get("p", -1.0)),
        init_sig2=float(init.get("sigma_sq", 1.0)),
        init_rho=float(init.get("rho", 0.0)),
    )
    return Ar1Posterior(
        beta=beta_out[:, icpt:],
        gamma=gamma_out,
        p=p_out,
        sigma_sq=sig2_out,
        rho=rho_out,
        intercept=beta_out[:, 0] if intercept else None,
        provenance=f"gibbs[{mod.KERNEL_NAME}]:seed={seed}:jitter={n_jitter}",
    )


def map_hypotheses(m: int, eps_interval: tuple[float, float] = (-0.3, 0.3)) -> HypothesisSet:
    """Hypothesis 0: the open stationarity null |rho| < 1; hypotheses 1..m: closed nulls on each coefficient."""
    lo, hi = eps_interval
    regions = [Hypothesis(-1.0, 1.0, closed_null=False)]
    regions.extend(Hypothesis(lo, hi, closed_null=True) for _ in range(m))
    return HypothesisSet(tuple(regions))


def true_decision(params: Ar1TrueParams, eps_interval: tuple[float, float] = (-0.3, 0.3)) -> DecisionConfig:
    """True configuration over the m+1 hypotheses: rho null holds, coefficients by interval membership."""
    hyps = map_hypotheses(params.m, eps_interval)
    coords = np.concatenate([[params.rho0], params.beta0])
    return DecisionConfig(tuple(int(hyps.regions[i].in_alt(coords[i])) for i in range(params.m + 1)))


def form_groups(Lambda: np.ndarray, percentile_level: float = 0.95, normalize: bool = True) -> GroupStructure:
    """Groups over the m+1 hypotheses from the precision structure of the covariates.

    Pair scores are |lambda_ij| / sqrt(lambda_ii lambda_jj) over the inverse of
    Lambda (raw |lambda_ij| with ``normalize=False``); pairs at or above the
    ``percentile_level`` quantile are grouped.  Hypothesis 0 (the
    autoregressive coefficient) always gets a singleton group.
    """
    if not 0 < percentile_level < 1:
        raise ValueError("percentile_level must lie in (0, 1)")
    Lambda = np.asarray(Lambda, dtype=float)
    prec = np.linalg.inv(Lambda)
    prec = (prec + prec.T) / 2.0  # exact symmetry despite inversion round-off
    m = Lambda.shape[0]
    if normalize:
        dd = np.sqrt(np.diag(prec))
        scores = np.abs(prec) / np.outer(dd, dd)
    else:
        scores = np.abs(prec)
    # rounding keeps structurally tied pairs (equicorrelated blocks) on one
    # side of the threshold instead of splitting them on inversion noise
    scores = np.round(scores, 12)
    iu, ju = np.triu_indices(m, k=1)
    pair_scores = scores[iu, ju]
    groups: list[tuple[int, ...]] = [(0,)]
    if pair_scores.size == 0:
        groups.extend((i + 1,) for i in range(m))
        return GroupStructure(tuple(groups))
    thresh = np.quantile(pair_scores, percentile_level)
    for i in range(m):
        members = {i + 1}
        for j in range(m):
            # an exactly zero score is conditional independence: never grouped
            if j != i and scores[i, j] >= thresh and scores[i, j] > 0.0:
                members.add(j + 1)
        groups.append(tuple(sorted(members)))
    return GroupStructure(tuple(groups))


def log_likelihood_ratio(
    rho: float, beta: np.ndarray, sigma_sq: float, x: np.ndarray, Z: np.ndarray, params: Ar1TrueParams
) -> float:
    """Log ratio of the model density at (rho, beta, sigma^2) to the true density, summed over t.

    Zero when evaluated at the true parameters, on every dataset.
    """
    if sigma_sq <= 0:
        raise ValueError("sigma_sq must be positive")
    x = np.asarray(x, dtype=float)
    lag = np.concatenate([[0.0], x[:-1]])
    resid_model = x - rho * lag - Z @ np.asarray(beta, dtype=float)
    resid_true = x - params.rho0 * lag - Z @ params.beta0 - params.intercept0
    n = x.shape[0]
    ll_model = -0.5 * n * math.log(2.0 * math.pi * sigma_sq) - float(resid_model @ resid_model) / (
        2.0 * sigma_sq
    )
    ll_true = -0.5 * n * math.log(2.0 * math.pi * params.sigma0_sq) - float(
        resid_true @ resid_true
    ) / (2.0 * params.sigma0_sq)
    return ll_model - ll_true


def posterior_predictive(post: Ar1Posterior, z_next: np.ndarray, x_n: float, seed=0) -> np.ndarray:
    """One draw of x_{n+1} per retained posterior draw."""
    if post.size < 1:
        raise ValueError("empty posterior")
    z_next = np.asarray(z_next, dtype=float)
    rng = np.random.default_rng(seed)
    mean = post.rho * x_n + post.beta @ z_next
    if post.intercept is not None:
        mean = mean + post.intercept
    return mean + np.sqrt(post.sigma_sq) * rng.standard_normal(post.size)


@dataclass(frozen=True)
class RefitResult:
    """Posterior-mode estimate after refitting with only the selected covariates active."""

    beta_hat: np.ndarray
    rho_hat: float
    intercept_hat: float
    method: str = "best-draw+coordinate-ascent"


def _active_indices(d: DecisionConfig, m: int) -> list[int]:
    if d.m != m + 1:
        raise ValueError("decision must cover the rho hypothesis plus one per covariate")
    return [i for i in range(m) if d.bits[i + 1]]


def refit_posterior(
    d: DecisionConfig,
    x: np.ndarray,
    Z: np.ndarray,
    tau: float,
    prior: SpikeSlabPrior | None = None,
    iters: int = 3000,
    burnin: int = 500,
    thin: int = 5,
    seed=0,
    intercept: bool = True,
) -> Ar1Posterior:
    """Posterior with only the d-selected covariates active and iid N(0, tau^2) coefficient priors.

    ``d`` covers the m+1 hypotheses; entry 0 (the autoregressive hypothesis)
    plays no role in selection.  Unselected coefficients are fixed at zero in
    the returned (S, m) draw matrix.
    """
    if prior is None:
        prior = SpikeSlabPrior(tau=tau)
    x = np.asarray(x, dtype=float)
    Z = np.asarray(Z, dtype=float)
    m = Z.shape[1]
    active = _active_indices(d, m)
    betas_act, rhos, b0s, sig2s = _slab_gibbs(
        x, Z[:, active], tau, prior.a2, prior.b2,
        iters=iters, burnin=burnin, thin=thin, seed=seed, intercept=intercept,
    )
    n_keep = rhos.shape[0]
    betas = np.zeros((n_keep, m))
    betas[:, active] = betas_act
    gamma = np.zeros((n_keep, m), dtype=np.int64)
    gamma[:, active] = 1
    return Ar1Posterior(
        beta=betas,
        gamma=gamma,
        p=np.ones(n_keep),
        sigma_sq=sig2s,
        rho=rhos,
        intercept=b0s if intercept else None,
        provenance=f"refit-slab:seed={seed}:active={len(active)}",
    )


def refit_mode(
    post: Ar1Posterior,
    d: DecisionConfig,
    x: np.ndarray,
    Z: np.ndarray,
    tau: float,
    prior: SpikeSlabPrior | None = None,
    intercept: bool = True,
    ascent_sweeps: int = 50,
) -> RefitResult:
    """Posterior-mode approximation from refit draws.

    Takes the highest-log-posterior retained draw and polishes it with
    coordinate ascent on (coefficients, rho) at that draw's innovation
    variance; given the variance the conditional log posterior is an exactly
    quadratic ridge problem, so the ascent converges to its maximum.
    """
    if prior is None:
        prior = SpikeSlabPrior(tau=tau)
    x = np.asarray(x, dtype=float)
    Z = np.asarray(Z, dtype=float)
    m = Z.shape[1]
    active = _active_indices(d, m)
    Z_act = Z[:, active]
    lag = np.concatenate([[0.0], x[:-1]])
    tau2 = tau * tau

    def log_post(bvec: np.ndarray, rho: float, b0: float, sig2: float) -> float:
        resid = x - rho * lag - Z_act @ bvec - b0
        out = -0.5 * x.shape[0] * math.log(sig2) - float(resid @ resid) / (2.0 * sig2)
        out -= float(bvec @ bvec) / (2.0 * tau2)
        if intercept:
            out -= b0 * b0 / (2.0 * tau2)
        out -= rho * rho / 2.0
        out -= (prior.a2 + 1.0) * math.log(sig2) + prior.b2 / sig2
        return out

    b0s = post.intercept if post.intercept is not None else np.zeros(post.size)
    scores = [
        log_post(post.beta[s, active], float(post.rho[s]), float(b0s[s]), float(post.sigma_sq[s]))
        for s in range(post.size)
    ]
    best = int(np.argmax(scores))
    bvec = post.beta[best, active].copy()
    rho = float(post.rho[best])
    b0 = float(b0s[best])
    sig2 = float(post.sigma_sq[best])

    cols = [Z_act[:, j] for j in range(len(active))]
    for _ in range(ascent_sweeps):
        resid = x - rho * lag - Z_act @ bvec - b0
        for j, col in enumerate(cols):
            resid = resid + col * bvec[j]
            prec = float(col @ col) / sig2 + 1.0 / tau2
            bvec[j] = float(col @ resid) / sig2 / prec
            resid = resid - col * bvec[j]
        if intercept:
            resid = resid + b0
            prec = x.shape[0] / sig2 + 1.0 / tau2
            b0 = float(resid.sum()) / sig2 / prec
            resid = resid - b0
        resid = resid + rho * lag
        prec = float(lag @ lag) / sig2 + 1.0
        rho = float(lag @ resid) / sig2 / prec

    beta_hat = np.zeros(m)
    beta_hat[active] = bvec
    return RefitResult(beta_hat=beta_hat, rho_hat=rho, intercept_hat=b0)


def refit_selected(
    d: DecisionConfig,
    x: np.ndarray,
    Z: np.ndarray,
    tau: float,
    prior: SpikeSlabPrior | None = None,
    iters: int = 3000,
    burnin: int = 500,
    thin: int = 5,
    seed=0,
    intercept: bool = True,
    ascent_sweeps: int = 50,
) -> RefitResult:
    """Refit the selected covariates and return the posterior-mode point estimate."""
    post = refit_posterior(
        d, x, Z, tau, prior, iters=iters, burnin=burnin, thin=thin, seed=seed, intercept=intercept
    )
    return refit_mode(post, d, x, Z, tau, prior, intercept=intercept, ascent_sweeps=ascent_sweeps)


def _slab_gibbs(x, Z_act, tau, a2, b2, iters, burnin, thin, seed, intercept):
    """Plain Gibbs for the refit model: active coefficients iid N(0, tau^2), same sigma^2/rho priors."""
    n = x.shape[0]
    k_act = Z_act.shape[1]
    icpt = 1 if intercept else 0
    design = np.column_stack([np.ones(n), Z_act]) if intercept else Z_act
    p_dim = k_act + icpt
    lag = np.concatenate([[0.0], x[:-1]])
    G0 = design.T @ design
    Zy = design.T @ x
    ZL = design.T @ lag
    LL = float(lag @ lag)
    yL = float(x @ lag)
    tau2 = tau * tau

    rng = np.random.default_rng(seed)
    n_keep = (iters - burnin) // thin
    betas = np.zeros((n_keep, k_act))
    rhos = np.zeros(n_keep)
    b0s = np.zeros(n_keep)
    sig2s = np.ones(n_keep)

    b = np.zeros(p_dim)
    rho = 0.0
    sig2 = 1.0
    for it in range(iters):
        if p_dim > 0:
            prec = G0 / sig2 + np.eye(p_dim) / tau2
            chol = np.linalg.cholesky(prec)
            rhs = (Zy - rho * ZL) / sig2
            mu = np.linalg.solve(prec, rhs)
            b = mu + np.linalg.solve(chol.T, rng.standard_normal(p_dim))
        resid = x - rho * lag - (design @ b if p_dim else 0.0)
        ssr = float(resid @ resid)
        sig2 = (b2 + 0.5 * ssr) / rng.gamma(a2 + 0.5 * n)
        prec_rho = LL / sig2 + 1.0
        mean_rho = (yL - float(ZL @ b) if p_dim else yL) / sig2 / prec_rho
        rho = mean_rho + rng.standard_normal() / math.sqrt(prec_rho)
        if it >= burnin and (it - burnin) % thin == 0:
            keep = (it - burnin) // thin
            if keep < n_keep:
                betas[keep] = b[icpt:]
                rhos[keep] = rho
                b0s[keep] = b[0] if intercept else 0.0
                sig2s[keep] = sig2
    return betas, rhos, b0s, sig2s
