"""Sequential best-response play under a posted mechanism.

Clients update one at a time in a fixed round-robin order.  A client
evaluates each candidate role at the anticipated state (the current state
with its own role replaced), with the mechanism's quote recomputed at each
anticipated state; it keeps the payoff-maximizing role, resolving
indifference by following the platform's recommended role for its type and
then by the fixed priority join > buy > abstain.  A pass with no change is
a fixed point, i.e. a Nash equilibrium of the quoted game.

Payoff comparisons are scale-aware: roles within 1e-12 (relative to the
magnitudes of the payoffs, utilities, and costs involved) of the best are
treated as indifferent, which keeps symbolically equal payoffs tied under
floating-point rounding at any utility scale.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Sequence

from .mechanism import (
    Decision,
    MechanismQuote,
    benchmark_modified_fl_quote,
    budget_residual,
    client_payoff,
    semts_quote,
    settle,
)
from .performance import utility_at
from .scenario import Scenario
from .welfare import (
    SocialState,
    WelfareReport,
    solve_efficient_structured,
    validate_state,
    welfare_mts,
)

__all__ = [
    "SemtsMechanism",
    "ModifiedFlMechanism",
    "make_mechanism",
    "best_response",
    "run_dynamics",
    "verify_equilibrium",
    "TraceStep",
    "DynamicsTrace",
    "EquilibriumReport",
]

PAYOFF_RTOL = 1e-12


class SemtsMechanism:
    """Socially efficient schedule with per-profile quote caching."""

    name = "semts"
    settles = True

    def __init__(self, s: Scenario, report: WelfareReport | None = None):
        self.scenario = s
        if report is None:
            report = solve_efficient_structured(s)
        self.w_star = report.w_star
        self.recommendation = report.recommendation
        self._quotes: dict = {}

    def quote(self, profile: tuple) -> MechanismQuote:
        q = self._quotes.get(profile)
        if q is None:
            q = semts_quote(self.scenario, profile, self.w_star,
                            recommendation=self.recommendation)
            self._quotes[profile] = q
        return q


class ModifiedFlMechanism:
    """Benchmark: price equals utility, no rewards, no recommendation."""

    name = "modified_fl"
    settles = False
    recommendation = None

    def __init__(self, s: Scenario):
        self.scenario = s
        self._quotes: dict = {}

    def quote(self, profile: tuple) -> MechanismQuote:
        q = self._quotes.get(profile)
        if q is None:
            q = benchmark_modified_fl_quote(self.scenario, profile)
            self._quotes[profile] = q
        return q


def make_mechanism(s: Scenario, name: str, report: WelfareReport | None = None):
    if name == "semts":
        return SemtsMechanism(s, report)
    if name == "modified_fl":
        return ModifiedFlMechanism(s)
    raise ValueError(f"unknown mechanism: {name!r}")


def _without_client(st: SocialState, i: int, decision: Decision) -> SocialState:
    k = list(st.k)
    b = list(st.b)
    if decision == Decision.JOIN:
        k[i - 1] -= 1
    elif decision == Decision.BUY:
        b[i - 1] -= 1
    return SocialState(k=tuple(k), b=tuple(b))


def _with_client(st: SocialState, i: int, decision: Decision) -> SocialState:
    k = list(st.k)
    b = list(st.b)
    if decision == Decision.JOIN:
        k[i - 1] += 1
    elif decision == Decision.BUY:
        b[i - 1] += 1
    return SocialState(k=tuple(k), b=tuple(b))


def _recommended_role(mech, rest: SocialState, i: int) -> Decision | None:
    """Role steering the type-i client toward the recommended state.

    ``rest`` is the state without the deciding client; the client is told
    to fill the first unmet quota (participants before buyers).
    """
    rec = mech.recommendation
    if rec is None:
        return None
    if rest.k[i - 1] < rec.k[i - 1]:
        return Decision.JOIN
    if rest.b[i - 1] < rec.b[i - 1]:
        return Decision.BUY
    return Decision.ABSTAIN


def best_response(s: Scenario, mech, st: SocialState, client) -> Decision:
    """Payoff-maximizing role for one client, given everyone else's roles.

    ``client`` is (type index, current decision); the current decision must
    be consistent with the state.  Each candidate role is priced at its own
    anticipated state.
    """
    i, current = client
    current = Decision(current)
    st = validate_state(s, st)
    if current == Decision.JOIN and st.k[i - 1] < 1:
        raise ValueError(f"state has no type-{i} participant to move")
    if current == Decision.BUY and st.b[i - 1] < 1:
        raise ValueError(f"state has no type-{i} buyer to move")
    rest = _without_client(st, i, current)

    join_state = _with_client(rest, i, Decision.JOIN)
    buy_state = _with_client(rest, i, Decision.BUY)
    pay_join = client_payoff(s, join_state, mech.quote(join_state.k), i, Decision.JOIN)
    pay_buy = client_payoff(s, buy_state, mech.quote(buy_state.k), i, Decision.BUY)
    pay_abstain = 0.0

    scale = max(1.0, abs(pay_join), abs(pay_buy),
                utility_at(s, join_state.k), utility_at(s, buy_state.k),
                s.types[i - 1].cost)
    tol = PAYOFF_RTOL * scale
    best = max(pay_abstain, pay_join, pay_buy)
    maxset = set()
    if pay_join >= best - tol:
        maxset.add(Decision.JOIN)
    if pay_buy >= best - tol:
        maxset.add(Decision.BUY)
    if pay_abstain >= best - tol:
        maxset.add(Decision.ABSTAIN)

    recommended = _recommended_role(mech, rest, i)
    if recommended is not None and recommended in maxset:
        return recommended
    for choice in (Decision.JOIN, Decision.BUY, Decision.ABSTAIN):
        if choice in maxset:
            return choice
    raise AssertionError("unreachable")


@dataclass(frozen=True)
class TraceStep:
    """One accepted move in the simulation."""

    round: int
    client: int
    type_index: int
    old: Decision
    new: Decision
    k: tuple
    b: tuple
    payoff: float  # mover's payoff at the anticipated (now current) state

    def to_dict(self) -> dict:
        return {
            "round": self.round,
            "client": self.client,
            "type": self.type_index,
            "old": self.old.value,
            "new": self.new.value,
            "K": list(self.k),
            "B": list(self.b),
            "payoff": self.payoff,
        }


@dataclass(frozen=True)
class DynamicsTrace:
    """Full record of a best-response simulation."""

    mechanism: str
    steps: tuple
    converged: bool
    rounds: int
    final_state: SocialState
    final_welfare: float          # welfare of the final state
    client_payoff_pre: float      # payoff sum before settlement
    client_payoff_post: float     # payoff sum after settlement (if any)
    residual: float               # pre-settlement budget residual
    settlement_share: float | None

    def summary_dict(self) -> dict:
        return {
            "mechanism": self.mechanism,
            "converged": self.converged,
            "rounds": self.rounds,
            "final_state": self.final_state.to_dict(),
            "final_welfare": self.final_welfare,
            "client_payoff_pre_settlement": self.client_payoff_pre,
            "client_payoff_post_settlement": self.client_payoff_post,
            "budget_residual": self.residual,
            "settlement_share": self.settlement_share,
            "moves": len(self.steps),
        }


def _initial_decisions(s: Scenario, initial: SocialState):
    """Expand per-type counts to per-client roles (joiners first)."""
    decisions = []
    types = []
    for t, x, y in zip(s.types, initial.k, initial.b):
        for slot in range(t.count):
            types.append(t.index)
            if slot < x:
                decisions.append(Decision.JOIN)
            elif slot < x + y:
                decisions.append(Decision.BUY)
            else:
                decisions.append(Decision.ABSTAIN)
    return types, decisions


def _state_of(s: Scenario, types, decisions) -> SocialState:
    k = [0] * s.n_types
    b = [0] * s.n_types
    for t, d in zip(types, decisions):
        if d == Decision.JOIN:
            k[t - 1] += 1
        elif d == Decision.BUY:
            b[t - 1] += 1
    return SocialState(k=tuple(k), b=tuple(b))


def run_dynamics(
    s: Scenario,
    mech,
    initial: SocialState,
    order: Sequence[int] | int | None = None,
    max_rounds: int | None = None,
) -> DynamicsTrace:
    """Round-robin best-response from ``initial`` until a full quiet pass.

    ``order`` is a permutation of client ids 0..N-1, an int seed used to
    shuffle the natural order, or None for the natural order (clients
    grouped by type).  The run is deterministic given (initial, order).
    Hitting ``max_rounds`` (default N*(N+1)) without a quiet pass is
    reported as converged=False, not an error.
    """
    initial = validate_state(s, initial)
    n = s.n_clients
    if max_rounds is None:
        max_rounds = n * (n + 1)
    if max_rounds < 1:
        raise ValueError("max_rounds must be >= 1")
    if order is None:
        schedule = list(range(n))
    elif isinstance(order, int):
        schedule = list(range(n))
        random.Random(order).shuffle(schedule)
    else:
        schedule = [int(x) for x in order]
        if sorted(schedule) != list(range(n)):
            raise ValueError("order must be a permutation of client ids 0..N-1")

    types, decisions = _initial_decisions(s, initial)
    state = _state_of(s, types, decisions)
    steps = []
    converged = False
    rounds = 0
    for rnd in range(1, max_rounds + 1):
        rounds = rnd
        changed = False
        for client in schedule:
            i = types[client]
            current = decisions[client]
            new = best_response(s, mech, state, (i, current))
            if new != current:
                rest = _without_client(state, i, current)
                state = _with_client(rest, i, new)
                decisions[client] = new
                payoff = client_payoff(s, state, mech.quote(state.k), i, new)
                steps.append(TraceStep(round=rnd, client=client, type_index=i,
                                       old=current, new=new,
                                       k=state.k, b=state.b, payoff=payoff))
                changed = True
        if not changed:
            converged = True
            break

    final_quote = mech.quote(state.k)
    residual = budget_residual(state, final_quote)
    pre = 0.0
    for t, x, y in zip(s.types, state.k, state.b):
        if x:
            pre += x * client_payoff(s, state, final_quote, t.index, Decision.JOIN)
        if y:
            pre += y * client_payoff(s, state, final_quote, t.index, Decision.BUY)
    share = None
    post = pre
    if mech.settles:
        obtainers = sum(state.k) + sum(state.b)
        if obtainers > 0 or residual != 0.0:
            settlement = settle(state, final_quote)
            share = settlement.share
            post = pre + settlement.share * settlement.obtainers
    return DynamicsTrace(
        mechanism=mech.name,
        steps=tuple(steps),
        converged=converged,
        rounds=rounds,
        final_state=state,
        final_welfare=welfare_mts(s, state),
        client_payoff_pre=pre,
        client_payoff_post=post,
        residual=residual,
        settlement_share=share,
    )


@dataclass(frozen=True)
class EquilibriumReport:
    is_nash: bool
    deviations: tuple  # (type_index, from_role, to_role, payoff_from, payoff_to)

    def to_dict(self) -> dict:
        return {
            "is_nash": self.is_nash,
            "profitable_deviations": [
                {"type": i, "from": a.value, "to": b.value,
                 "payoff_from": pf, "payoff_to": pt}
                for i, a, b, pf, pt in self.deviations
            ],
        }


def verify_equilibrium(s: Scenario, mech, st: SocialState) -> EquilibriumReport:
    """Check every unilateral deviation, quotes recomputed at each.

    A deviation counts as profitable when it beats the client's current
    payoff by more than the scale-aware 1e-12 tolerance.
    """
    st = validate_state(s, st)
    current_quote = mech.quote(st.k)
    deviations = []
    for t, x, y in zip(s.types, st.k, st.b):
        occupied = []
        if x:
            occupied.append(Decision.JOIN)
        if y:
            occupied.append(Decision.BUY)
        if t.count - x - y:
            occupied.append(Decision.ABSTAIN)
        for role in occupied:
            here = client_payoff(s, st, current_quote, t.index, role)
            rest = _without_client(st, t.index, role)
            for alt in Decision:
                if alt == role:
                    continue
                there_state = _with_client(rest, t.index, alt)
                there = client_payoff(s, there_state, mech.quote(there_state.k),
                                      t.index, alt)
                scale = max(1.0, abs(here), abs(there),
                            utility_at(s, st.k), utility_at(s, there_state.k),
                            t.cost)
                if there - here > PAYOFF_RTOL * scale:
                    deviations.append((t.index, role, alt, here, there))
    return EquilibriumReport(is_nash=not deviations, deviations=tuple(deviations))
