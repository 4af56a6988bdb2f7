"""Decision configurations, hypothesis groups and the group-aware decision rules.

A testing problem is a set of ``m`` interval hypotheses over coordinates of a
parameter vector.  Decisions are binary vectors (1 = reject the i-th null).
The group-aware rule maximizes ``sum_i d_i * (w_i(d) - beta)`` where ``w_i(d)``
is the posterior probability that the i-th alternative holds *and* every other
decision inside hypothesis i's group is correct.  With singleton groups this
collapses to marginal thresholding of the alternative probabilities.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "Hypothesis",
    "HypothesisSet",
    "DecisionConfig",
    "GroupStructure",
    "ParameterDraw",
    "PosteriorSampleSet",
    "SampleWProvider",
    "TableWProvider",
    "GroupInconsistencyError",
    "alt_indicator",
    "group_correct_indicator",
    "indicator_matrix",
    "marginal_alt_prob",
    "joint_alt_prob",
    "decision_objective",
    "additive_rule",
    "optimize_decision",
    "brute_force_decision",
    "connected_components",
]

# Exhaustive enumeration bound: components up to this size are solved exactly.
K_EXACT = 20
_GREEDY_RESTARTS = 32


class GroupInconsistencyError(ValueError):
    """The w-provider depends on decisions outside the declared group."""


@dataclass(frozen=True)
class Hypothesis:
    """One interval null ``[lo, hi]`` against its complement.

    ``closed_null=True`` assigns the boundary to the null (the alternative is
    the open complement); ``closed_null=False`` is the reverse, used for the
    open stationarity null ``|rho| < 1``.
    """

    lo: float
    hi: float
    closed_null: bool = True

    def __post_init__(self) -> None:
        if not self.lo <= self.hi:
            raise ValueError(f"empty null interval [{self.lo}, {self.hi}]")

    def in_alt(self, x):
        """Vectorized membership indicator of the alternative region."""
        x = np.asarray(x)
        if self.closed_null:
            return (x < self.lo) | (x > self.hi)
        return (x <= self.lo) | (x >= self.hi)

    def in_null(self, x):
        return ~self.in_alt(x)


@dataclass(frozen=True)
class HypothesisSet:
    """The per-hypothesis partition of each tested coordinate's space."""

    regions: tuple[Hypothesis, ...]

    @property
    def m(self) -> int:
        return len(self.regions)

    def __post_init__(self) -> None:
        if not self.regions:
            raise ValueError("at least one hypothesis required")


@dataclass(frozen=True)
class DecisionConfig:
    """Binary decision vector; entry 1 rejects the corresponding null."""

    bits: tuple[int, ...]

    def __post_init__(self) -> None:
        if any(b not in (0, 1) for b in self.bits):
            raise ValueError("decision entries must be 0 or 1")

    @classmethod
    def from_array(cls, arr) -> "DecisionConfig":
        return cls(tuple(int(b) for b in np.asarray(arr).ravel()))

    @property
    def m(self) -> int:
        return len(self.bits)

    def rejections(self) -> int:
        return sum(self.bits)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.bits, dtype=np.uint8)

    @classmethod
    def zeros(cls, m: int) -> "DecisionConfig":
        return cls((0,) * m)


@dataclass(frozen=True)
class GroupStructure:
    """Index sets ``G_i``; each contains its own index, singletons allowed."""

    groups: tuple[tuple[int, ...], ...]

    def __post_init__(self) -> None:
        m = len(self.groups)
        for i, g in enumerate(self.groups):
            if i not in g:
                raise ValueError(f"group {i} must contain its own index")
            if any(not 0 <= j < m for j in g):
                raise ValueError(f"group {i} has out-of-range index")
            if len(set(g)) != len(g):
                raise ValueError(f"group {i} has duplicate indices")

    @classmethod
    def from_lists(cls, groups: Sequence[Sequence[int]]) -> "GroupStructure":
        return cls(tuple(tuple(sorted(g)) for g in groups))

    @classmethod
    def singletons(cls, m: int) -> "GroupStructure":
        return cls(tuple((i,) for i in range(m)))

    @property
    def m(self) -> int:
        return len(self.groups)

    def others(self, i: int) -> tuple[int, ...]:
        """Group members of ``G_i`` excluding ``i`` itself."""
        return tuple(j for j in self.groups[i] if j != i)

    def all_singletons(self) -> bool:
        return all(len(g) == 1 for g in self.groups)


@dataclass(frozen=True)
class ParameterDraw:
    """One posterior draw: raw vector plus hypothesis-to-coordinate map."""

    theta: np.ndarray
    coord_index: np.ndarray

    def coord(self, i: int) -> float:
        return float(self.theta[self.coord_index[i]])


@dataclass(frozen=True)
class PosteriorSampleSet:
    """S posterior draws sharing one hypothesis-to-coordinate map.

    ``thetas`` has shape (S, D); ``coord_index[i]`` is the column inspected by
    hypothesis i.  Immutable after construction.
    """

    thetas: np.ndarray
    coord_index: np.ndarray
    provenance: str = ""

    def __post_init__(self) -> None:
        if self.thetas.ndim != 2 or self.thetas.shape[0] < 1:
            raise ValueError("need a (S, D) matrix with S >= 1")
        if np.any(self.coord_index < 0) or np.any(self.coord_index >= self.thetas.shape[1]):
            raise ValueError("coordinate map out of range")
        self.thetas.setflags(write=False)

    @property
    def size(self) -> int:
        return self.thetas.shape[0]

    @property
    def m(self) -> int:
        return len(self.coord_index)

    def draw(self, s: int) -> ParameterDraw:
        return ParameterDraw(self.thetas[s], self.coord_index)

    def coords(self, i: int) -> np.ndarray:
        """All S draws of the coordinate tested by hypothesis i."""
        return self.thetas[:, self.coord_index[i]]


def alt_indicator(draw: ParameterDraw, i: int, hyps: HypothesisSet) -> int:
    """1 iff the draw's coordinate for hypothesis i lies in the alternative."""
    if not 0 <= i < hyps.m:
        raise IndexError(f"hypothesis index {i} out of range")
    return int(hyps.regions[i].in_alt(draw.coord(i)))


def group_correct_indicator(
    draw: ParameterDraw, d: DecisionConfig, i: int, groups: GroupStructure, hyps: HypothesisSet
) -> int:
    """1 iff every decision ``d_j`` for j in G_i \\ {i} is correct under the draw.

    Returns 1 for singleton groups regardless of the draw and decision.
    """
    _check_dims(d.m, groups.m, hyps.m)
    for j in groups.others(i):
        in_alt = hyps.regions[j].in_alt(draw.coord(j))
        if int(in_alt) != d.bits[j]:
            return 0
    return 1


def indicator_matrix(samples: PosteriorSampleSet, hyps: HypothesisSet) -> np.ndarray:
    """(S, m) boolean matrix of alternative-region membership per draw."""
    if samples.m != hyps.m:
        raise ValueError("sample set and hypothesis set disagree on m")
    cols = [hyps.regions[i].in_alt(samples.coords(i)) for i in range(hyps.m)]
    return np.column_stack(cols)


def marginal_alt_prob(samples: PosteriorSampleSet, i: int, hyps: HypothesisSet) -> float:
    """Monte-Carlo posterior probability that the i-th alternative holds."""
    if samples.size < 1:
        raise ValueError("empty sample set")
    if not 0 <= i < hyps.m:
        raise IndexError(f"hypothesis index {i} out of range")
    return float(np.mean(hyps.regions[i].in_alt(samples.coords(i))))


def joint_alt_prob(
    samples: PosteriorSampleSet,
    d: DecisionConfig,
    i: int,
    groups: GroupStructure,
    hyps: HypothesisSet,
) -> float:
    """Posterior probability that alternative i holds and G_i's other decisions are correct.

    Plain indicator mean over the draws; equals :func:`marginal_alt_prob`
    when ``G_i`` is a singleton.
    """
    _check_dims(d.m, groups.m, hyps.m, samples.m)
    if samples.size < 1:
        raise ValueError("empty sample set")
    ok = hyps.regions[i].in_alt(samples.coords(i))
    for j in groups.others(i):
        in_alt_j = hyps.regions[j].in_alt(samples.coords(j))
        ok = ok & (in_alt_j == bool(d.bits[j]))
    return float(np.mean(ok))


def decision_objective(w: Sequence[float], d: DecisionConfig, beta: float) -> float:
    """``sum_i d_i * (w_i - beta)``; zero for the all-accept configuration.

    ``w[i]`` must be the joint probability evaluated at this same ``d`` for
    every i with ``d_i = 1``; entries with ``d_i = 0`` are ignored.
    """
    _check_beta(beta)
    terms = [w[i] - beta for i in range(d.m) if d.bits[i]]
    return math.fsum(terms)


def additive_rule(v: Sequence[float], beta: float) -> DecisionConfig:
    """Marginal thresholding rule: reject iff the alternative probability exceeds beta.

    The inequality is strict, so a probability exactly at the threshold is
    accepted.
    """
    _check_beta(beta)
    return DecisionConfig(tuple(int(vi > beta) for vi in v))


class SampleWProvider:
    """Joint-probability provider backed by a posterior sample set.

    Memoizes on ``(i, d restricted to G_i \\ {i})`` since the joint
    probability depends on the decision only through those coordinates.
    """

    def __init__(self, samples: PosteriorSampleSet, groups: GroupStructure, hyps: HypothesisSet):
        _check_dims(groups.m, hyps.m, samples.m)
        self._r = indicator_matrix(samples, hyps)
        self._groups = groups
        self._cache: dict[tuple, float] = {}

    @property
    def m(self) -> int:
        return self._groups.m

    def marginals(self) -> np.ndarray:
        """Vector of marginal alternative probabilities."""
        return self._r.mean(axis=0)

    def __call__(self, bits, i: int) -> float:
        others = self._groups.others(i)
        key = (i, tuple(int(bits[j]) for j in others))
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        ok = self._r[:, i]
        for j in others:
            ok = ok & (self._r[:, j] == bool(bits[j]))
        out = float(np.mean(ok))
        self._cache[key] = out
        return out


class TableWProvider:
    """Provider over explicit tables, for tests and synthetic instances.

    ``tables[i]`` maps the tuple ``d_{G_i \\ {i}}`` (ascending index order)
    to the joint probability.
    """

    def __init__(self, tables: Sequence[dict], groups: GroupStructure):
        self._tables = list(tables)
        self._groups = groups

    def __call__(self, bits, i: int) -> float:
        key = tuple(int(bits[j]) for j in self._groups.others(i))
        return float(self._tables[i][key])


WProvider = Callable[[Sequence[int], int], float]


def connected_components(groups: GroupStructure) -> list[list[int]]:
    """Components of the undirected graph with an edge (i, j) iff one group contains the other's index."""
    m = groups.m
    adj: list[set[int]] = [set() for _ in range(m)]
    for i in range(m):
        for j in groups.others(i):
            adj[i].add(j)
            adj[j].add(i)
    seen = [False] * m
    comps = []
    for start in range(m):
        if seen[start]:
            continue
        stack, comp = [start], []
        seen[start] = True
        while stack:
            u = stack.pop()
            comp.append(u)
            for vtx in adj[u]:
                if not seen[vtx]:
                    seen[vtx] = True
                    stack.append(vtx)
        comps.append(sorted(comp))
    return comps


def _component_objective(bits: np.ndarray, comp: list[int], w_provider: WProvider, beta: float) -> float:
    terms = [w_provider(bits, i) - beta for i in comp if bits[i]]
    return math.fsum(terms)


def _better(obj_a: float, ones_a: int, bits_a: tuple, obj_b: float, ones_b: int, bits_b: tuple) -> bool:
    """True iff candidate a beats b: higher objective, then fewer rejections, then lex order."""
    if obj_a != obj_b:
        return obj_a > obj_b
    if ones_a != ones_b:
        return ones_a < ones_b
    return bits_a < bits_b


def _solve_component_exact(comp, w_provider, beta, m) -> np.ndarray:
    best_bits = None
    best_obj = -math.inf
    best_ones = 0
    scratch = np.zeros(m, dtype=np.uint8)
    for assign in itertools.product((0, 1), repeat=len(comp)):
        scratch[comp] = assign
        obj = _component_objective(scratch, comp, w_provider, beta)
        ones = sum(assign)
        if best_bits is None or _better(obj, ones, assign, best_obj, best_ones, best_bits):
            best_bits, best_obj, best_ones = assign, obj, ones
    out = np.zeros(m, dtype=np.uint8)
    out[comp] = best_bits
    return out


def _solve_component_greedy(comp, w_provider, beta, m, rng) -> np.ndarray:
    """Steepest-ascent bit flips from random starts plus threshold/extreme starts."""
    k = len(comp)
    starts = [np.zeros(k, dtype=np.uint8), np.ones(k, dtype=np.uint8)]
    probe = np.ones(m, dtype=np.uint8)
    starts.append(np.array([w_provider(probe, i) > beta for i in comp], dtype=np.uint8))
    for _ in range(_GREEDY_RESTARTS):
        starts.append(rng.integers(0, 2, size=k).astype(np.uint8))

    scratch = np.zeros(m, dtype=np.uint8)
    best_bits, best_obj, best_ones = None, -math.inf, 0
    for start in starts:
        scratch[:] = 0
        scratch[comp] = start
        obj = _component_objective(scratch, comp, w_provider, beta)
        improved = True
        while improved:
            improved = False
            flip_best, flip_obj = None, obj
            for pos in comp:
                scratch[pos] ^= 1
                cand = _component_objective(scratch, comp, w_provider, beta)
                scratch[pos] ^= 1
                if cand > flip_obj:
                    flip_best, flip_obj = pos, cand
            if flip_best is not None:
                scratch[flip_best] ^= 1
                obj = flip_obj
                improved = True
        bits = tuple(int(scratch[i]) for i in comp)
        ones = sum(bits)
        if best_bits is None or _better(obj, ones, bits, best_obj, best_ones, best_bits):
            best_bits, best_obj, best_ones = bits, obj, ones
    out = np.zeros(m, dtype=np.uint8)
    out[comp] = best_bits
    return out


def _audit_provider(w_provider: WProvider, groups: GroupStructure, m: int, rng) -> None:
    """Spot-check that w(d, i) ignores decisions outside G_i."""
    for _ in range(8):
        bits = rng.integers(0, 2, size=m).astype(np.uint8)
        i = int(rng.integers(m))
        base = w_provider(bits, i)
        outside = [j for j in range(m) if j != i and j not in groups.others(i)]
        if not outside:
            continue
        j = outside[int(rng.integers(len(outside)))]
        bits[j] ^= 1
        if w_provider(bits, i) != base:
            raise GroupInconsistencyError(
                f"w({i}) changed when flipping out-of-group coordinate {j}"
            )
        bits[j] ^= 1


def optimize_decision(
    w_provider: WProvider,
    groups: GroupStructure,
    beta: float,
    m: int,
    k_exact: int = K_EXACT,
    audit: bool = False,
    rng_seed: int = 0,
) -> DecisionConfig:
    """Maximize ``sum_i d_i (w_i(d) - beta)`` over all binary configurations.

    The objective decomposes over connected components of the group graph;
    components of size <= ``k_exact`` are enumerated exhaustively, larger ones
    use multi-restart greedy bit-flip ascent.  Ties break toward fewer
    rejections, then the lexicographically smallest vector.
    """
    _check_beta(beta)
    if groups.m != m:
        raise ValueError("group structure size does not match m")
    rng = np.random.default_rng(rng_seed)
    if audit:
        _audit_provider(w_provider, groups, m, rng)
    out = np.zeros(m, dtype=np.uint8)
    for comp in connected_components(groups):
        if len(comp) <= k_exact:
            sol = _solve_component_exact(comp, w_provider, beta, m)
        else:
            sol = _solve_component_greedy(comp, w_provider, beta, m, rng)
        out[comp] = sol[comp]
    return DecisionConfig.from_array(out)


def brute_force_decision(
    w_provider: WProvider, groups: GroupStructure, beta: float, m: int
) -> DecisionConfig:
    """Exhaustive argmax over all 2^m configurations; test oracle for the optimizer."""
    _check_beta(beta)
    if m > 20:
        raise ValueError("brute force capped at m <= 20")
    best_bits, best_obj, best_ones = None, -math.inf, 0
    arr = np.zeros(m, dtype=np.uint8)
    for assign in itertools.product((0, 1), repeat=m):
        arr[:] = assign
        terms = [w_provider(arr, i) - beta for i in range(m) if assign[i]]
        obj = math.fsum(terms)
        ones = sum(assign)
        if best_bits is None or _better(obj, ones, assign, best_obj, best_ones, best_bits):
            best_bits, best_obj, best_ones = assign, obj, ones
    return DecisionConfig(best_bits)


def _check_beta(beta: float) -> None:
    if not 0.0 <= beta <= 1.0:
        raise ValueError(f"beta must lie in [0, 1], got {beta}")


def _check_dims(*ms: int) -> None:
    if len(set(ms)) != 1:
        raise ValueError(f"dimension mismatch across components: {ms}")
