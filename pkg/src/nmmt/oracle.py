"""Conjugate Gaussian-means testbed with exact posterior quantities.

Observations are n iid draws from N(theta0, sigma^2 I); each coordinate has an
independent normal prior and an interval null [-eps, eps].  Everything the
Monte-Carlo machinery estimates (alternative probabilities, joint group
probabilities, KL rate constants, the true decision) is available here in
closed form, making the model the ground-truth oracle for property tests and
rate checks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr, ndtri

from .core import DecisionConfig, GroupStructure, Hypothesis, HypothesisSet, PosteriorSampleSet

__all__ = [
    "GaussOracleModel",
    "CoordinatePosterior",
    "AnalyticWProvider",
    "gen_oracle_data",
    "analytic_posterior",
    "analytic_alt_prob",
    "analytic_null_prob",
    "analytic_error_report",
    "analytic_joint_prob",
    "sample_posterior",
    "kl_rate",
    "oracle_rate_constants",
    "RateConstants",
    "true_decision",
    "hypothesis_set",
]


@dataclass(frozen=True)
class GaussOracleModel:
    """True mean vector, known observation sd, per-coordinate normal prior, null half-width."""

    theta0: np.ndarray
    sigma: float
    prior_mean: np.ndarray
    prior_sd: np.ndarray
    eps: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "theta0", np.asarray(self.theta0, dtype=float))
        object.__setattr__(self, "prior_mean", np.broadcast_to(np.asarray(self.prior_mean, dtype=float), self.theta0.shape).copy())
        object.__setattr__(self, "prior_sd", np.broadcast_to(np.asarray(self.prior_sd, dtype=float), self.theta0.shape).copy())
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")
        if np.any(self.prior_sd <= 0):
            raise ValueError("prior_sd must be positive")
        if self.eps < 0:
            raise ValueError("eps must be nonnegative")

    @property
    def m(self) -> int:
        return self.theta0.shape[0]


@dataclass(frozen=True)
class CoordinatePosterior:
    """Independent normal posteriors, one (mean, sd) pair per coordinate."""

    mean: np.ndarray
    sd: np.ndarray

    @property
    def m(self) -> int:
        return self.mean.shape[0]


def hypothesis_set(model: GaussOracleModel) -> HypothesisSet:
    """Closed null [-eps, eps] for every coordinate."""
    return HypothesisSet(tuple(Hypothesis(-model.eps, model.eps) for _ in range(model.m)))


def true_decision(model: GaussOracleModel) -> DecisionConfig:
    """Reject exactly the coordinates whose true mean lies outside the null interval."""
    return DecisionConfig(tuple(int(abs(t) > model.eps) for t in model.theta0))


def gen_oracle_data(model: GaussOracleModel, n: int, seed) -> np.ndarray:
    """n iid rows from N(theta0, sigma^2 I); deterministic under the seed."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    return model.theta0 + model.sigma * rng.standard_normal((n, model.m))


def analytic_posterior(model: GaussOracleModel, data: np.ndarray) -> CoordinatePosterior:
    """Exact conjugate posterior per coordinate.

    mean = (prior_prec * prior_mean + (n / sigma^2) * xbar) / (prior_prec + n / sigma^2),
    variance = 1 / (prior_prec + n / sigma^2).
    """
    data = np.atleast_2d(np.asarray(data, dtype=float))
    n = data.shape[0]
    if n < 1 or data.shape[1] != model.m:
        raise ValueError("data must be an (n, m) array with n >= 1")
    prior_prec = 1.0 / model.prior_sd**2
    data_prec = n / model.sigma**2
    var = 1.0 / (prior_prec + data_prec)
    mean = var * (prior_prec * model.prior_mean + data_prec * data.mean(axis=0))
    return CoordinatePosterior(mean=mean, sd=np.sqrt(var))


def analytic_alt_prob(mean, sd, eps: float):
    """Exact posterior probability of the alternative: 1 - P(-eps <= theta_i <= eps).

    Evaluated as the sum of the two tails P(theta > eps) + P(theta < -eps) so
    exponentially small probabilities survive floating point (the textbook
    one-minus-difference form rounds them to exactly 0).
    """
    mean = np.asarray(mean, dtype=float)
    sd = np.asarray(sd, dtype=float)
    return ndtr((mean - eps) / sd) + ndtr((-eps - mean) / sd)


def analytic_null_prob(mean, sd, eps: float):
    """Exact posterior probability of the null interval, stable for means far outside it.

    The direct difference of CDFs keeps tiny interval masses representable;
    it is the complement of :func:`analytic_alt_prob` up to rounding.
    """
    mean = np.asarray(mean, dtype=float)
    sd = np.asarray(sd, dtype=float)
    return ndtr((eps - mean) / sd) - ndtr((-eps - mean) / sd)


def analytic_joint_prob(
    post: CoordinatePosterior, d: DecisionConfig, i: int, groups: GroupStructure, eps: float
) -> float:
    """Exact joint probability, using posterior independence across coordinates.

    Product of the i-th alternative probability with, for each other group
    member j, the probability of the region selected by ``d_j``.
    """
    v = analytic_alt_prob(post.mean, post.sd, eps)
    out = float(v[i])
    for j in groups.others(i):
        out *= float(v[j]) if d.bits[j] else float(1.0 - v[j])
    return out


class AnalyticWProvider:
    """Exact joint-probability provider for the optimizer, analytic counterpart of SampleWProvider."""

    def __init__(self, post: CoordinatePosterior, groups: GroupStructure, eps: float):
        self._v = np.asarray(analytic_alt_prob(post.mean, post.sd, eps), dtype=float)
        self._groups = groups

    def marginals(self) -> np.ndarray:
        return self._v.copy()

    def __call__(self, bits, i: int) -> float:
        out = float(self._v[i])
        for j in self._groups.others(i):
            out *= float(self._v[j]) if bits[j] else float(1.0 - self._v[j])
        return out


def sample_posterior(post: CoordinatePosterior, size: int, seed) -> PosteriorSampleSet:
    """Inverse-CDF posterior draws, coordinate by coordinate.

    Inverse-CDF sampling keeps golden tests platform-independent.
    """
    if size < 1:
        raise ValueError("need at least one draw")
    rng = np.random.default_rng(seed)
    u = rng.random((size, post.m))
    thetas = post.mean + post.sd * ndtri(u)
    return PosteriorSampleSet(
        thetas=thetas, coord_index=np.arange(post.m), provenance=f"oracle-invcdf:{seed}"
    )


def _wrong_prob(v_i: float, null_i: float, d_bit: int) -> float:
    """Probability the region selected by the decision bit is wrong."""
    return null_i if d_bit else v_i


def analytic_error_report(
    post: CoordinatePosterior, d: DecisionConfig, groups: GroupStructure, eps: float
):
    """All four posterior error measures from exact tail probabilities.

    Joint complements 1 - w_i(d) are assembled as -expm1(sum log1p(-a_k)) over
    the per-coordinate wrong-region masses, so exponentially small error
    values survive floating point; needed for decay-rate studies at large n.
    """
    from .errors import ErrorReport

    v = np.asarray(analytic_alt_prob(post.mean, post.sd, eps), dtype=float)
    null_p = np.asarray(analytic_null_prob(post.mean, post.sd, eps), dtype=float)
    m = post.m
    rejected = [i for i in range(m) if d.bits[i]]
    accepted = [i for i in range(m) if not d.bits[i]]

    fdr = float(sum(null_p[i] for i in rejected)) / max(len(rejected), 1)
    fnr = float(sum(v[i] for i in accepted)) / max(len(accepted), 1)

    def complement_joint(i: int) -> float:
        terms = [_wrong_prob(v[i], null_p[i], 1)]  # i itself must be in the alternative
        for j in groups.others(i):
            terms.append(_wrong_prob(v[j], null_p[j], d.bits[j]))
        acc = 0.0
        for a in terms:
            acc += math.log1p(-min(a, 1.0))
        return -math.expm1(acc)

    def joint(i: int) -> float:
        # w_i(d) itself, for the modified FNR numerator
        out = v[i]
        for j in groups.others(i):
            out *= v[j] if d.bits[j] else null_p[j]
        return float(out)

    mfdr = float(sum(complement_joint(i) for i in rejected)) / max(len(rejected), 1)
    mfnr = float(sum(joint(i) for i in accepted)) / max(len(accepted), 1)
    return ErrorReport(fdr_x=fdr, mfdr_x=mfdr, fnr_x=fnr, mfnr_x=mfnr, rejections=len(rejected))


def kl_rate(theta, model: GaussOracleModel) -> float:
    """Per-observation KL divergence of N(theta, sigma^2 I) from the truth: ||theta-theta0||^2 / (2 sigma^2)."""
    diff = np.asarray(theta, dtype=float) - model.theta0
    return float(diff @ diff) / (2.0 * model.sigma**2)


@dataclass(frozen=True)
class RateConstants:
    """Minimal KL rates governing the exponential decay of the error measures."""

    j_min: float
    h_min: float
    h_tilde_min: float


def _null_region_rate(model: GaussOracleModel, i: int) -> float:
    """min over t in [-eps, eps] of (t - theta0_i)^2 / (2 sigma^2)."""
    t0 = model.theta0[i]
    dist = max(abs(t0) - model.eps, 0.0)
    return dist**2 / (2.0 * model.sigma**2)


def _alt_region_rate(model: GaussOracleModel, i: int) -> float:
    """Closure infimum over |t| > eps of (t - theta0_i)^2 / (2 sigma^2)."""
    t0 = model.theta0[i]
    dist = max(model.eps - abs(t0), 0.0)
    return dist**2 / (2.0 * model.sigma**2)


def _wrong_region_rate(model: GaussOracleModel, i: int, d_true_i: int) -> float:
    return _null_region_rate(model, i) if d_true_i else _alt_region_rate(model, i)


def region_rate_correct_joint(
    model: GaussOracleModel,
    d_t: DecisionConfig,
    groups: GroupStructure,
    i: int,
    grid_points: int = 20001,
    box: float = 50.0,
) -> float:
    """Rate over {alt_i holds, all other G_i decisions correct}, by per-coordinate grid scan.

    The squared-distance rate separates across coordinates, so the joint
    infimum is the sum of 1-D minima.  Computed on dense grids rather than in
    closed form so it can serve as an independent check of the identity with
    the plain i-th alternative rate.
    """

    def grid_min(lo: float, hi: float, t0: float) -> float:
        ts = np.linspace(lo, hi, grid_points)
        return float(np.min((ts - t0) ** 2)) / (2.0 * model.sigma**2)

    eps = model.eps
    # coordinate i over the closure of the alternative, best of the two sides
    rate = min(
        grid_min(-box, -eps, model.theta0[i]),
        grid_min(eps, box, model.theta0[i]),
    )
    for j in groups.others(i):
        if d_t.bits[j]:
            rate += min(
                grid_min(-box, -eps, model.theta0[j]),
                grid_min(eps, box, model.theta0[j]),
            )
        else:
            rate += grid_min(-eps, eps, model.theta0[j])
    return rate


def oracle_rate_constants(
    model: GaussOracleModel, d_t: DecisionConfig, groups: GroupStructure
) -> RateConstants:
    """Exact rate constants by coordinate-wise minimization under independence.

    h_min scans falsely-rejectable nulls, h_tilde_min falsely-acceptable
    alternatives, j_min the group-joint single-coordinate violations.
    """
    if d_t.bits != true_decision(model).bits:
        raise ValueError("d_t is inconsistent with the model's true means")
    rejected = [i for i in range(model.m) if d_t.bits[i]]
    accepted = [i for i in range(model.m) if not d_t.bits[i]]
    if not rejected or not accepted:
        raise ValueError("need both a rejected and an accepted coordinate")
    h_min = min(_null_region_rate(model, i) for i in rejected)
    h_tilde_min = min(_alt_region_rate(model, i) for i in accepted)
    j_min = min(
        min(_wrong_region_rate(model, k, d_t.bits[k]) for k in groups.groups[i])
        for i in rejected
    )
    return RateConstants(j_min=j_min, h_min=h_min, h_tilde_min=h_tilde_min)
