"""Social welfare under the trading framework and exact efficient-state solvers.

A social state counts participants K_i and model buyers B_i per type.  With
budget-balanced transfers the client payoffs sum to

    W(K, B) = sum_i (K_i + B_i) * U(eps(K)) - sum_i K_i * C_i,

so maximizing welfare reduces to a search over participation profiles with
everyone else buying: at any optimum either nobody obtains the model or all
N clients do.  The brute solver enumerates profiles exactly; the structured
solver exploits that optima sit at per-type corners K_i in {0, N_i} (plus,
for types with data above d*gamma2/sigma2, interior stationary points) and
must agree with the brute solver wherever both run.

The participation-only baseline W_FL = sum_i K_i*(U(eps(K)) - C_i) never
beats the trading optimum.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Sequence

from .errors import EnumerationCapError, InvalidStateError
from .performance import generalization_error, validate_profile
from .scenario import Scenario, partition_types

__all__ = [
    "ENUMERATION_CAP",
    "SocialState",
    "WelfareReport",
    "FlOptimum",
    "welfare_mts",
    "welfare_fl",
    "solve_efficient_brute",
    "solve_efficient_structured",
    "fl_optimum",
    "welfare_landscape",
]

ENUMERATION_CAP = 10_000_000


@dataclass(frozen=True, order=True)
class SocialState:
    """Participant and buyer counts per type (parallel tuples)."""

    k: tuple
    b: tuple

    @staticmethod
    def all_abstain(s: Scenario) -> "SocialState":
        zeros = (0,) * s.n_types
        return SocialState(k=zeros, b=zeros)

    @staticmethod
    def full_obtain(s: Scenario, k: Sequence[int]) -> "SocialState":
        """State where everyone not participating buys."""
        profile = tuple(int(x) for x in k)
        return SocialState(k=profile, b=tuple(t.count - x for x, t in zip(profile, s.types)))

    def to_dict(self) -> dict:
        return {"K": list(self.k), "B": list(self.b)}


def validate_state(s: Scenario, st: SocialState) -> SocialState:
    ks = validate_profile(s, st.k)
    bs = validate_profile(s, st.b)
    for x, y, t in zip(ks, bs, s.types):
        if x + y > t.count:
            raise InvalidStateError(
                f"type {t.index}: K + B = {x + y} exceeds count {t.count}")
    return SocialState(k=ks, b=bs)


def welfare_mts(s: Scenario, st: SocialState) -> float:
    """Total client payoff with transfers cancelled (buyers included)."""
    st = validate_state(s, st)
    if sum(st.k) == 0:
        return 0.0
    u = s.utility(generalization_error(s, st.k))
    obtainers = sum(st.k) + sum(st.b)
    costs = math.fsum(x * t.cost for x, t in zip(st.k, s.types))
    return obtainers * u - costs


def welfare_fl(s: Scenario, k: Sequence[int]) -> float:
    """Participation-only welfare: sum_i K_i * (U(eps(K)) - C_i)."""
    profile = validate_profile(s, k, check_capacity=True)
    total = sum(profile)
    if total == 0:
        return 0.0
    u = s.utility(generalization_error(s, profile))
    return math.fsum(x * (u - t.cost) for x, t in zip(profile, s.types))


@dataclass(frozen=True)
class WelfareReport:
    """Solver output: every maximizer, the optimum, and a deterministic pick."""

    w_star: float
    states: tuple  # all maximizing SocialStates, sorted
    recommendation: SocialState  # lexicographically smallest maximizer
    eps_star: float | None  # eps at the recommendation, None when K* = 0
    method: str

    def to_dict(self) -> dict:
        return {
            "w_star": self.w_star,
            "eps_star": self.eps_star,
            "recommendation": self.recommendation.to_dict(),
            "optimal_states": [st.to_dict() for st in self.states],
            "method": self.method,
        }


def _full_state_welfare(s: Scenario, profile) -> float:
    return welfare_mts(s, SocialState.full_obtain(s, profile))


def _profile_space_size(s: Scenario) -> int:
    return math.prod(t.count + 1 for t in s.types)


def _report_from_values(s: Scenario, values: dict, method: str) -> WelfareReport:
    """Assemble a report from {profile: welfare-at-full-obtainment}.

    The all-abstain state (welfare 0) is always a candidate; a profile with
    positive welfare beats it, and ties at the exact optimum are all kept.
    """
    w_star = 0.0
    for w in values.values():
        if w > w_star:
            w_star = w
    maximizers = []
    if w_star == 0.0:
        maximizers.append(SocialState.all_abstain(s))
    for profile, w in values.items():
        if w == w_star and sum(profile) > 0:
            maximizers.append(SocialState.full_obtain(s, profile))
    maximizers.sort()
    recommendation = maximizers[0]
    eps_star = (generalization_error(s, recommendation.k)
                if sum(recommendation.k) > 0 else None)
    return WelfareReport(w_star=w_star, states=tuple(maximizers),
                         recommendation=recommendation, eps_star=eps_star,
                         method=method)


def solve_efficient_brute(s: Scenario, cap: int = ENUMERATION_CAP) -> WelfareReport:
    """Exact search over every participation profile (buyers filled in).

    Raises EnumerationCapError when the profile space exceeds ``cap``; use
    solve_efficient_structured for larger instances.
    """
    size = _profile_space_size(s)
    if size > cap:
        raise EnumerationCapError(
            f"{size} profiles exceed the cap of {cap}; "
            "use solve_efficient_structured")
    values = {}
    for profile in itertools.product(*(range(t.count + 1) for t in s.types)):
        if sum(profile) == 0:
            continue
        values[profile] = _full_state_welfare(s, profile)
    return _report_from_values(s, values, method="brute")


def _stationary_candidates(s: Scenario, base, j: int, upper: int) -> list:
    """Integer neighbors of roots of dW/dx along coordinate j (0-based).

    W is relaxed continuously in x on [1, upper] with the other coordinates
    frozen at ``base``; sign changes of the derivative are bisected to 1e-9
    and both adjacent integers are kept.
    """
    others_rest = sum(base) - base[j]
    inv_rest = math.fsum(x / t.data_size for i, (x, t) in enumerate(zip(base, s.types))
                         if i != j)
    dj = s.types[j].data_size
    cj = s.types[j].cost
    n_total = s.n_clients

    def derivative(x: float) -> float:
        total = others_rest + x
        eps = (s.d * s.gamma2 * (inv_rest + x / dj) / total**2
               + (total - 1.0) / total * s.sigma2)
        deps = (s.d * s.gamma2 * (1.0 / dj - 2.0 * (inv_rest + x / dj) / total)
                / total**2 + s.sigma2 / total**2)
        return n_total * s.utility.d1(eps) * deps - cj

    if upper <= 1:
        return []
    grid = 256
    xs = [1.0 + (upper - 1.0) * i / grid for i in range(grid + 1)]
    out = []
    for lo, hi in zip(xs, xs[1:]):
        flo, fhi = derivative(lo), derivative(hi)
        if flo == 0.0:
            root = lo
        elif flo * fhi < 0.0:
            a_, b_ = lo, hi
            while b_ - a_ > 1e-9:
                mid = 0.5 * (a_ + b_)
                if derivative(a_) * derivative(mid) <= 0.0:
                    b_ = mid
                else:
                    a_ = mid
            root = 0.5 * (a_ + b_)
        else:
            continue
        out.append(max(0, min(upper, math.floor(root))))
        out.append(max(0, min(upper, math.ceil(root))))
    return out


def solve_efficient_structured(s: Scenario) -> WelfareReport:
    """Corner-and-stationary-point search with local refinement.

    Evaluates per-type corners {0, N_i} (all that is needed when every type
    sits below the d*gamma2/sigma2 threshold), augments high types with the
    integer neighbors of interior stationary points, then hill-climbs one
    coordinate at a time until no single move improves the welfare.  Agrees
    with solve_efficient_brute on instances where both run.
    """
    _, high = partition_types(s)
    high_idx = {i - 1 for i in high}
    counts = s.counts

    candidate_sets = []
    reference_low = tuple(0 for _ in counts)
    reference_high = tuple(t.count if i in high_idx else 0
                           for i, t in enumerate(s.types))
    for i, t in enumerate(s.types):
        options = {0, t.count}
        if i in high_idx:
            for base in (reference_low, reference_high):
                options.update(_stationary_candidates(s, base, i, t.count))
        candidate_sets.append(sorted(options))

    values = {}

    def evaluate(profile) -> float:
        if profile not in values:
            values[profile] = (_full_state_welfare(s, profile)
                               if sum(profile) > 0 else 0.0)
        return values[profile]

    combos = math.prod(len(c) for c in candidate_sets)
    if combos <= 200_000:
        for profile in itertools.product(*candidate_sets):
            evaluate(profile)
    else:  # degenerate guard; coordinate descent below still applies
        evaluate(tuple(0 for _ in counts))
        evaluate(tuple(counts))

    # local refinement from every current best
    improved = True
    while improved:
        improved = False
        best_w = max(values.values(), default=0.0)
        frontier = [p for p, w in values.items() if w == best_w]
        for profile in frontier:
            for i in range(s.n_types):
                for step in (-1, 1):
                    x = profile[i] + step
                    if 0 <= x <= counts[i]:
                        neighbor = profile[:i] + (x,) + profile[i + 1:]
                        if evaluate(neighbor) > best_w:
                            improved = True
    report = _report_from_values(s, values, method="structured")
    return report


@dataclass(frozen=True)
class FlOptimum:
    """Best participation-only profile and its welfare."""

    profile: tuple
    w_star: float


def fl_optimum(s: Scenario, cap: int = ENUMERATION_CAP) -> FlOptimum:
    """Maximize W_FL over all profiles; the empty profile scores 0."""
    size = _profile_space_size(s)
    if size > cap:
        raise EnumerationCapError(
            f"{size} profiles exceed the cap of {cap}")
    best = 0.0
    best_profile = tuple(0 for _ in s.types)
    for profile in itertools.product(*(range(t.count + 1) for t in s.types)):
        if sum(profile) == 0:
            continue
        w = welfare_fl(s, profile)
        if w > best:
            best = w
            best_profile = profile
    return FlOptimum(profile=best_profile, w_star=best)


def welfare_landscape(s: Scenario, cap: int = ENUMERATION_CAP):
    """Yield (K..., B..., eps or None, W) for every social state.

    Intended for small instances; raises EnumerationCapError when the state
    space exceeds ``cap``.
    """
    size = math.prod((t.count + 1) * (t.count + 2) // 2 for t in s.types)
    if size > cap:
        raise EnumerationCapError(f"{size} states exceed the cap of {cap}")
    per_type = [
        [(x, y) for x in range(t.count + 1) for y in range(t.count + 1 - x)]
        for t in s.types
    ]
    for combo in itertools.product(*per_type):
        k = tuple(x for x, _ in combo)
        b = tuple(y for _, y in combo)
        st = SocialState(k=k, b=b)
        eps = generalization_error(s, k) if sum(k) > 0 else None
        yield (*k, *b, eps, welfare_mts(s, st))
