"""Assistant policies: forecast update rules and the candidate-search policy.

Each policy is a small mutable state plus a step function. A state instance
belongs to a single run; distinct instances are independent.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Hashable, Mapping, Sequence

import numpy as np

from .core import (
    DegenerateGainError,
    DiscreteDistribution,
    Forecast,
    InvalidConfigError,
    InvalidParameterError,
    JointProfile,
    NeedsInitialForecastError,
    PointForecast,
    ShapeError,
    euclidean_distance,
)


@dataclass
class ExpodampState:
    """Damped forecast update: move the forecast a fraction alpha toward the outcome."""

    a: PointForecast
    alpha: float

    def __post_init__(self) -> None:
        if not math.isfinite(self.alpha):
            raise InvalidParameterError("alpha must be finite")


def expodamp_step(state: ExpodampState, y_prev: Sequence[float]) -> PointForecast:
    """a <- a + alpha * (y_prev - a), componentwise."""
    y = tuple(float(v) for v in y_prev)
    if len(y) != len(state.a):
        raise ShapeError(f"forecast has {len(state.a)} entries, observation has {len(y)}")
    new = PointForecast(
        tuple(av + state.alpha * (yv - av) for av, yv in zip(state.a.values, y))
    )
    state.a = new
    return new


def naive_step(y_prev: object) -> Forecast:
    """Yesterday's outcome as today's forecast (Dirac for joint-action outcomes)."""
    if y_prev is None:
        raise NeedsInitialForecastError("no observation yet; configure an initial forecast")
    if isinstance(y_prev, JointProfile):
        return DiscreteDistribution.dirac(y_prev)
    if isinstance(y_prev, PointForecast):
        return y_prev
    if isinstance(y_prev, (int, float)):
        return PointForecast((float(y_prev),))
    if isinstance(y_prev, (tuple, list)):
        return PointForecast(tuple(float(v) for v in y_prev))
    raise ShapeError(f"cannot forecast from observation {y_prev!r}")


@dataclass
class AverageState:
    """Running-mean forecast; a configured prior is used before two observations exist."""

    prior: PointForecast
    sum: list[float] = field(default_factory=list)
    count: int = 0


def average_step(state: AverageState, y_prev: Sequence[float]) -> PointForecast:
    y = tuple(float(v) for v in y_prev)
    if not state.sum:
        state.sum = [0.0] * len(y)
    if len(y) != len(state.sum):
        raise ShapeError("observation length changed mid-run")
    for idx, v in enumerate(y):
        state.sum[idx] += v
    state.count += 1
    if state.count < 2:
        return state.prior
    return PointForecast(tuple(s / state.count for s in state.sum))


@dataclass
class EmpiricalDistributionState:
    """I.i.d.-style baseline: forecast the empirical distribution of past outcomes."""

    prior: DiscreteDistribution
    counts: Counter = field(default_factory=Counter)


def empirical_step(state: EmpiricalDistributionState, c_prev: JointProfile) -> DiscreteDistribution:
    state.counts[c_prev] += 1
    return DiscreteDistribution.from_mapping(state.counts)


@dataclass
class KalmanPolicyState:
    """Scalar filter over the latent level of the linear aggregate model.

    Tracks the one-step-ahead mean and variance of the latent level given all
    announced forecasts and observed outcomes so far.
    """

    beta: float
    gamma: float
    var_ex: float
    var_ey: float
    x_mean: float
    x_var: float

    def __post_init__(self) -> None:
        if self.beta == 1.0:
            raise InvalidParameterError("beta = 1 leaves no fixed point to target")
        if self.gamma == 0.0:
            raise InvalidParameterError("gamma must be nonzero")
        if self.var_ex < 0.0 or self.var_ey < 0.0 or self.x_var < 0.0:
            raise InvalidParameterError("variances must be nonnegative")


def kalman_init(
    beta: float,
    gamma: float,
    var_ex: float,
    var_ey: float,
    x0_mean: float,
    x0_var: float,
) -> tuple[KalmanPolicyState, float]:
    """State plus the opening forecast gamma * (1 - beta)^-1 * E(x0)."""
    state = KalmanPolicyState(
        beta=beta, gamma=gamma, var_ex=var_ex, var_ey=var_ey, x_mean=x0_mean, x_var=x0_var
    )
    return state, (gamma / (1.0 - beta)) * x0_mean


def kalman_step(state: KalmanPolicyState, a_prev: float, y_prev: float) -> float:
    """Filter the latest outcome and emit the variance-optimal next forecast."""
    g2s = state.gamma * state.gamma * state.x_var
    denom = g2s + state.var_ey
    if denom == 0.0:
        raise DegenerateGainError("gamma^2 * x_var + var_ey is zero")
    gain = state.gamma * state.x_var / denom
    # g2s / denom is exactly 1.0 when var_ey == 0, so the forecast update then
    # collapses bitwise to plain damping with alpha = (1 - beta)^-1.
    coef = (g2s / denom) / (1.0 - state.beta)
    a_next = a_prev + coef * (y_prev - a_prev)
    state.x_mean = state.x_mean + gain * (y_prev - state.gamma * state.x_mean - state.beta * a_prev)
    state.x_var = max(0.0, (1.0 - gain * state.gamma) * state.x_var) + state.var_ex
    return a_next


UpdateFn = Callable[[DiscreteDistribution, DiscreteDistribution, Hashable], DiscreteDistribution]


def update_congestion(a: JointProfile, a_prime: JointProfile) -> JointProfile:
    """Take over a maximal collision-free subset of the changed responses.

    Players are visited in ascending index order. A player whose response
    actually changed is admitted only if its current slot differs from every
    admitted current slot and its new slot differs from every admitted new
    slot; stationary players keep their slot without occupying either set.
    """
    if len(a) != len(a_prime):
        raise ShapeError("profiles have different player counts")
    result = list(a.actions)
    sources: set[int] = set()
    targets: set[int] = set()
    for i in range(len(a)):
        if a_prime[i] == a[i]:
            continue
        if a[i] in sources or a_prime[i] in targets:
            continue
        sources.add(a[i])
        targets.add(a_prime[i])
        result[i] = a_prime[i]
    return JointProfile(tuple(result))


def _player_count(dist: DiscreteDistribution) -> int:
    profiles = [c for c in dist.support if isinstance(c, JointProfile)]
    if len(profiles) != len(dist.support):
        raise ShapeError("expected a distribution over joint profiles")
    n = len(profiles[0])
    if any(len(c) != n for c in profiles):
        raise ShapeError("profiles in one distribution must share the player count")
    return n


def _marginal(dist: DiscreteDistribution, i: int) -> dict[int, float]:
    out: dict[int, float] = {}
    for c, p in dist.items():
        out[c[i]] = out.get(c[i], 0.0) + p
    return out


def _marginals_differ(m1: Mapping[int, float], m2: Mapping[int, float], tol: float) -> bool:
    keys = set(m1) | set(m2)
    return any(abs(m1.get(k, 0.0) - m2.get(k, 0.0)) > tol for k in keys)


def update_general(
    a: DiscreteDistribution, a_prime: DiscreteDistribution, tol: float = 1e-9
) -> DiscreteDistribution:
    """Swap in the first differing per-player marginal from a_prime.

    The new joint is the product of the swapped marginal with a's distribution
    over the remaining players; if no marginal differs beyond tol, a is
    returned unchanged.
    """
    n = _player_count(a)
    if n != _player_count(a_prime):
        raise ShapeError("distributions are over different player sets")
    for i in range(n):
        new_marginal = _marginal(a_prime, i)
        if not _marginals_differ(_marginal(a, i), new_marginal, tol):
            continue
        rest: dict[tuple[int, ...], float] = {}
        for c, p in a.items():
            key = c.actions[:i] + c.actions[i + 1 :]
            rest[key] = rest.get(key, 0.0) + p
        weights: dict[JointProfile, float] = {}
        for action, pa in new_marginal.items():
            for key, pr in rest.items():
                c = JointProfile(key[:i] + (action,) + key[i:])
                weights[c] = weights.get(c, 0.0) + pa * pr
        return DiscreteDistribution.from_mapping(weights)
    return a


def congestion_update_fn(
    a: DiscreteDistribution, a_prime: DiscreteDistribution, w: Hashable
) -> DiscreteDistribution:
    """Apply the profile-level collision-free update to Dirac candidates."""
    if len(a.support) != 1 or len(a_prime.support) != 1:
        raise InvalidConfigError("the congestion update needs deterministic candidates")
    return DiscreteDistribution.dirac(update_congestion(a.support[0], a_prime.support[0]))


def general_update_fn(
    a: DiscreteDistribution, a_prime: DiscreteDistribution, w: Hashable
) -> DiscreteDistribution:
    return update_general(a, a_prime)


UPDATE_FNS: dict[str, UpdateFn] = {
    "congestion": congestion_update_fn,
    "general": general_update_fn,
}


@dataclass
class _CovariateSearch:
    """Per-covariate bookkeeping of the candidate search."""

    candidates: list[DiscreteDistribution]
    current: int
    announce_counts: list[int]
    tallies: list[Counter]
    converged: bool = False
    exploration_used: bool = False
    update_log: list[int] = field(default_factory=list)

    @property
    def empirical(self) -> list[DiscreteDistribution | None]:
        out: list[DiscreteDistribution | None] = []
        for tally in self.tallies:
            out.append(DiscreteDistribution.from_mapping(tally) if tally else None)
        return out


@dataclass
class PartpredState:
    """Group-wise trial of candidate forecasts until a fixed point is confirmed.

    Each candidate is announced for r consecutive stages of its covariate;
    the empirical outcome distribution of that group then drives the next
    candidate via the configured update function. Once convergence is
    flagged for a covariate its output never changes again.
    """

    candidates: Mapping[Hashable, Sequence[DiscreteDistribution]] | Sequence[DiscreteDistribution]
    r: int
    update_fn: UpdateFn
    rng: np.random.Generator
    initial_index: int | None = None
    per_w: dict[Hashable, _CovariateSearch] = field(default_factory=dict)
    last_w: Hashable | None = None

    def __post_init__(self) -> None:
        if self.r < 1:
            raise InvalidConfigError("partpred.r: group length must be at least 1")

    def _candidates_for(self, w: Hashable) -> list[DiscreteDistribution]:
        if isinstance(self.candidates, Mapping):
            cands = list(self.candidates.get(w, ()))
        else:
            cands = list(self.candidates)
        if not cands:
            raise InvalidConfigError(f"partpred.candidates: empty candidate set for w={w!r}")
        return cands

    def _search_for(self, w: Hashable) -> _CovariateSearch:
        search = self.per_w.get(w)
        if search is None:
            cands = self._candidates_for(w)
            if self.initial_index is not None:
                start = self.initial_index
            else:
                start = int(self.rng.integers(len(cands)))
            search = _CovariateSearch(
                candidates=cands,
                current=start,
                announce_counts=[0] * len(cands),
                tallies=[Counter() for _ in cands],
            )
            search.update_log.append(start)
            self.per_w[w] = search
        return search

    def converged_for(self, w: Hashable) -> bool:
        search = self.per_w.get(w)
        return search.converged if search is not None else False

    def exploration_used_anywhere(self) -> bool:
        return any(s.exploration_used for s in self.per_w.values())


def _nearest_candidate(
    candidates: Sequence[DiscreteDistribution], target: DiscreteDistribution
) -> int:
    """Index of the candidate closest to target; ties go to the lowest index."""
    best_idx = 0
    best_dist = math.inf
    for idx, cand in enumerate(candidates):
        dist = euclidean_distance(cand, target)
        if dist < best_dist:
            best_idx, best_dist = idx, dist
    return best_idx


def _candidate_index(
    candidates: Sequence[DiscreteDistribution], dist: DiscreteDistribution
) -> int:
    for idx, cand in enumerate(candidates):
        if cand.close_to(dist):
            return idx
    raise InvalidConfigError("update produced a forecast outside the candidate set")


def partpred_step(
    state: PartpredState, w: Hashable, c_observed: JointProfile | None
) -> DiscreteDistribution:
    """Record the previous outcome, then announce this stage's candidate for w."""
    if c_observed is not None and state.last_w is not None:
        prev = state.per_w[state.last_w]
        prev.tallies[prev.current][c_observed] += 1
    search = state._search_for(w)
    state.last_w = w

    if search.converged:
        return search.candidates[search.current]

    if search.announce_counts[search.current] < state.r:
        search.announce_counts[search.current] += 1
        return search.candidates[search.current]

    # A full group of r outcomes has been observed under the current candidate.
    empirical = DiscreteDistribution.from_mapping(search.tallies[search.current])
    nearest = search.candidates[_nearest_candidate(search.candidates, empirical)]
    updated = state.update_fn(search.candidates[search.current], nearest, w)
    new_idx = _candidate_index(search.candidates, updated)

    if new_idx == search.current:
        search.converged = True
    elif all(c >= state.r for c in search.announce_counts):
        per_candidate = search.empirical
        best_idx = 0
        best_dist = math.inf
        for idx, cand in enumerate(search.candidates):
            emp = per_candidate[idx]
            if emp is None:
                continue
            dist = euclidean_distance(cand, emp)
            if dist < best_dist:
                best_idx, best_dist = idx, dist
        search.current = best_idx
        search.converged = True
    elif search.announce_counts[new_idx] >= state.r:
        unused = [idx for idx, c in enumerate(search.announce_counts) if c == 0]
        search.exploration_used = True
        search.current = unused[int(state.rng.integers(len(unused)))]
        search.announce_counts[search.current] += 1
    else:
        search.current = new_idx
        search.announce_counts[search.current] += 1

    search.update_log.append(search.current)
    return search.candidates[search.current]
