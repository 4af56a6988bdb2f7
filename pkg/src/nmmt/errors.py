"""Posterior error measures, beta calibration and replicated (expected) error estimates.

The posterior FDR/FNR condition on the data; their modified versions replace
the marginal alternative probabilities with the group-aware joint ones.  All
measures use the "or 1" denominator convention so they are total functions of
the decision.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from .core import (
    DecisionConfig,
    GroupStructure,
    HypothesisSet,
    PosteriorSampleSet,
    SampleWProvider,
    WProvider,
    optimize_decision,
)

__all__ = [
    "ErrorReport",
    "ExpectedErrorEstimate",
    "ConditioningNeverOccurredError",
    "InsufficientDataError",
    "NonMonotoneTraceWarning",
    "posterior_fdr",
    "posterior_fnr",
    "modified_posterior_fdr",
    "modified_posterior_fnr",
    "joint_probs_at",
    "error_report",
    "calibrate_beta",
    "calibrate_beta_core",
    "expected_errors",
    "rate_fit",
    "RateFit",
    "beta_zero_bound_check",
    "BetaZeroBound",
]


class ConditioningNeverOccurredError(RuntimeError):
    """No replicate passed the conditioning event; the estimate is undefined."""


class InsufficientDataError(ValueError):
    """Fewer than three positive error values; no rate can be fitted."""


class NonMonotoneTraceWarning(UserWarning):
    """The error trace violated monotonicity in beta beyond grid tolerance."""


def _check_len(d: DecisionConfig, vec: Sequence[float]) -> None:
    if d.m != len(vec):
        raise ValueError(f"decision length {d.m} != probability vector length {len(vec)}")


def posterior_fdr(d: DecisionConfig, v: Sequence[float]) -> float:
    """sum d_i (1 - v_i) / (sum d_i or 1): expected fraction of false rejections given the data."""
    _check_len(d, v)
    num = math.fsum((1.0 - v[i]) for i in range(d.m) if d.bits[i])
    return num / max(d.rejections(), 1)


def posterior_fnr(d: DecisionConfig, v: Sequence[float]) -> float:
    """sum (1 - d_i) v_i / (sum (1 - d_i) or 1): expected fraction of missed signals given the data."""
    _check_len(d, v)
    num = math.fsum(v[i] for i in range(d.m) if not d.bits[i])
    return num / max(d.m - d.rejections(), 1)


def modified_posterior_fdr(d: DecisionConfig, w_of_d: Sequence[float]) -> float:
    """Group-aware posterior FDR: the marginal probabilities are replaced by joint ones at this d."""
    _check_len(d, w_of_d)
    num = math.fsum((1.0 - w_of_d[i]) for i in range(d.m) if d.bits[i])
    return num / max(d.rejections(), 1)


def modified_posterior_fnr(d: DecisionConfig, w_of_d: Sequence[float]) -> float:
    """Group-aware posterior FNR."""
    _check_len(d, w_of_d)
    num = math.fsum(w_of_d[i] for i in range(d.m) if not d.bits[i])
    return num / max(d.m - d.rejections(), 1)


def joint_probs_at(w_provider: WProvider, d: DecisionConfig) -> np.ndarray:
    """Vector of joint probabilities w_i(d), all evaluated at the same decision."""
    bits = d.as_array()
    return np.array([w_provider(bits, i) for i in range(d.m)])


@dataclass(frozen=True)
class ErrorReport:
    """The four posterior error measures and the rejection count for one decision."""

    fdr_x: float
    mfdr_x: float
    fnr_x: float
    mfnr_x: float
    rejections: int

    def value(self, component: str) -> float:
        return getattr(self, component)


def error_report(d: DecisionConfig, v: Sequence[float], w_of_d: Sequence[float]) -> ErrorReport:
    return ErrorReport(
        fdr_x=posterior_fdr(d, v),
        mfdr_x=modified_posterior_fdr(d, w_of_d),
        fnr_x=posterior_fnr(d, v),
        mfnr_x=modified_posterior_fnr(d, w_of_d),
        rejections=d.rejections(),
    )


def calibrate_beta_core(
    v: np.ndarray,
    w_provider: WProvider,
    groups: GroupStructure,
    target_alpha: float,
    error_fn: str = "fdr",
    resolution: float = 2.0**-12,
) -> float:
    """Smallest beta on a dyadic bisection grid whose optimized decision meets the target.

    The posterior error trace of the optimizer is non-increasing in beta up to
    Monte-Carlo ties, so bisection applies; the evaluated points are checked
    for monotonicity and a violation beyond the grid tolerance downgrades the
    answer to the conservative (largest qualifying) endpoint with a warning.
    """
    if not 0.0 < target_alpha <= 1.0:
        raise ValueError("target_alpha must lie in (0, 1]")
    if error_fn not in ("fdr", "mfdr"):
        raise ValueError("error_fn must be 'fdr' or 'mfdr'")
    m = groups.m

    def err_at(beta: float) -> float:
        d = optimize_decision(w_provider, groups, beta, m)
        if error_fn == "fdr":
            return posterior_fdr(d, v)
        return modified_posterior_fdr(d, joint_probs_at(w_provider, d))

    evaluated: list[tuple[float, float]] = []
    lo, hi = 0.0, 1.0
    err_hi = err_at(hi)
    evaluated.append((hi, err_hi))
    err_lo = err_at(lo)
    evaluated.append((lo, err_lo))
    if err_lo <= target_alpha:
        return 0.0
    while hi - lo > resolution:
        mid = 0.5 * (lo + hi)
        e = err_at(mid)
        evaluated.append((mid, e))
        if e <= target_alpha:
            hi = mid
        else:
            lo = mid

    evaluated.sort()
    worst = 0.0
    for (b0, e0), (b1, e1) in zip(evaluated, evaluated[1:]):
        worst = max(worst, e1 - e0)
    if worst > 1e-12:
        warnings.warn(
            f"error trace increased by {worst:.3g} along the bisection path; "
            "returning the conservative endpoint",
            NonMonotoneTraceWarning,
        )
        qualifying = [b for b, e in evaluated if e <= target_alpha]
        # largest beta below which every evaluated point still qualifies
        safe = 1.0
        for b in sorted(qualifying, reverse=True):
            if all(e <= target_alpha for bb, e in evaluated if bb >= b):
                safe = b
            else:
                break
        return safe
    return hi


def calibrate_beta(
    target_alpha: float,
    error_fn: str,
    samples: PosteriorSampleSet,
    groups: GroupStructure,
    hyps: HypothesisSet,
    resolution: float = 2.0**-12,
) -> float:
    """Calibrate beta on a Monte-Carlo posterior so the chosen error measure meets the target."""
    provider = SampleWProvider(samples, groups, hyps)
    return calibrate_beta_core(
        provider.marginals(), provider, groups, target_alpha, error_fn, resolution
    )


@dataclass(frozen=True)
class ExpectedErrorEstimate:
    """Replicate average of one error component under a conditioning event."""

    value: float
    n_replicates: int
    n_qualifying: int
    std_err: float


ReplicateRunner = Callable[[int], tuple[DecisionConfig, ErrorReport]]


def expected_errors(
    replicate_runner: ReplicateRunner,
    n_replicates: int,
    conditioning: str | None,
    component: str = "mfdr_x",
) -> ExpectedErrorEstimate:
    """Mean of one error component over replicates passing the conditioning event.

    ``conditioning`` is one of ``"exclude_all_zero"`` (drop replicates whose
    decision rejects nothing), ``"exclude_all_one"`` (drop all-reject
    decisions) or ``None``.  Raises if the conditioning event never occurs.
    """
    if n_replicates < 1:
        raise ValueError("need at least one replicate")
    if conditioning not in (None, "exclude_all_zero", "exclude_all_one"):
        raise ValueError(f"unknown conditioning {conditioning!r}")
    values = []
    for r in range(n_replicates):
        d, report = replicate_runner(r)
        if conditioning == "exclude_all_zero" and d.rejections() == 0:
            continue
        if conditioning == "exclude_all_one" and d.rejections() == d.m:
            continue
        values.append(report.value(component))
    if not values:
        raise ConditioningNeverOccurredError(
            f"conditioning event {conditioning!r} never occurred in {n_replicates} replicates"
        )
    arr = np.asarray(values)
    k = arr.size
    std_err = float(arr.std(ddof=1) / math.sqrt(k)) if k > 1 else float("nan")
    return ExpectedErrorEstimate(
        value=float(arr.mean()), n_replicates=n_replicates, n_qualifying=k, std_err=std_err
    )


@dataclass(frozen=True)
class RateFit:
    """OLS fit of log(error) on n; slope is the empirical exponential decay rate."""

    slope: float
    intercept: float
    r_squared: float
    n_dropped: int


def rate_fit(points: Iterable[tuple[float, float]]) -> RateFit:
    """Least squares of log(error) on n, dropping non-positive error values.

    Raises :class:`InsufficientDataError` when fewer than three positive
    points remain.
    """
    pts = [(float(n), float(e)) for n, e in points]
    kept = [(n, e) for n, e in pts if e > 0.0]
    dropped = len(pts) - len(kept)
    if len(kept) < 3:
        raise InsufficientDataError(
            f"need >= 3 positive error values, got {len(kept)} ({dropped} dropped)"
        )
    ns = np.array([n for n, _ in kept])
    ys = np.log(np.array([e for _, e in kept]))
    slope, intercept = np.polyfit(ns, ys, 1)
    resid = ys - (slope * ns + intercept)
    total = ys - ys.mean()
    ss_tot = float(total @ total)
    r2 = 1.0 - float(resid @ resid) / ss_tot if ss_tot > 0 else 1.0
    return RateFit(slope=float(slope), intercept=float(intercept), r_squared=r2, n_dropped=dropped)


@dataclass(frozen=True)
class BetaZeroBound:
    """Observed maximum expected group-aware FDR at beta=0 against its theoretical interval."""

    observed: float
    lower: float
    upper: float
    std_err: float
    within: bool
    n_qualifying: int


def beta_zero_bound_check(
    replicate_runner: ReplicateRunner,
    n_replicates: int,
    d_t: DecisionConfig,
    groups: GroupStructure,
) -> BetaZeroBound:
    """Estimate the beta=0 expected modified FDR and compare with the interval bounds.

    The runner must produce decisions of the beta=0 rule.  Requires the
    isolated-true-null group layout: every group made only of true nulls must
    be disjoint from every group containing a false null.  The interval is
    (1 / (S_t + 1), (m - m1) / (S_t + m - m1)) with S_t the number of true
    rejections and m1 the number of groups containing a false null.
    """
    m = groups.m
    signal = set(i for i in range(m) if d_t.bits[i])
    null_groups = [i for i in range(m) if not any(d_t.bits[j] for j in groups.groups[i])]
    m1 = m - len(null_groups)
    signal_cover = set()
    for i in range(m):
        if i not in null_groups:
            signal_cover.update(groups.groups[i])
    for i in null_groups:
        if signal_cover.intersection(groups.groups[i]):
            raise ValueError("all-true-null groups must not overlap groups containing a signal")
    if not signal or m1 >= m:
        raise ValueError("setup needs at least one false null and one isolated true-null group")
    s_t = d_t.rejections()
    lower = 1.0 / (s_t + 1.0)
    upper = (m - m1) / (s_t + (m - m1))
    est = expected_errors(replicate_runner, n_replicates, "exclude_all_zero", "mfdr_x")
    band = 2.0 * est.std_err if np.isfinite(est.std_err) else 0.0
    within = (est.value >= lower - band) and (est.value <= upper + band)
    return BetaZeroBound(
        observed=est.value,
        lower=lower,
        upper=upper,
        std_err=est.std_err,
        within=within,
        n_qualifying=est.n_qualifying,
    )
