"""Posted prices, participation rewards, payoffs, and budget settlement.

The socially efficient trading mechanism ("semts") posts a model price p
and per-type participation rewards r_i.  Client payoffs are

    abstain: 0      join: U(eps) - C_i + r_i      buy: U(eps) - p.

In low-heterogeneity markets (sigma2 <= d*gamma2/D_I) the schedule is
steered by theta evaluated at the recommended efficient profile K*, the
per-client surplus margin of the target state:

    theta* < 0, W* <= 0:  p = U(eps),          r_i = C_i - avg participation cost
    theta* < 0, W* >  0:  p = U(eps),          r_i = C_i - U(eps)
    theta* >= 0 (W* > 0): p = U(eps) - theta*, r_i = C_i - U(eps) + theta*

which makes every obtainment payoff equal to max(theta*, 0) at every state,
so self-interested play is indifferent between states and the platform's
recommendation can steer it to the efficient one.  (Branching on theta at
the quoted state instead creates profitable off-path pockets that trap
best-response play in suboptimal equilibria.)  In high-heterogeneity
markets the price is capped by the average participation cost so that
nobody pays more than the cost of producing the model.

Quotes are generally not budget balanced state by state; ``settle``
redistributes the residual equally over everyone who obtained the model,
after which payments exactly fund rewards and total client payoff equals
the welfare of the state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

from .errors import UnsettleableError
from .performance import utility_at, validate_profile
from .scenario import Scenario, is_low_heterogeneity
from .welfare import SocialState, solve_efficient_structured, validate_state

__all__ = [
    "Decision",
    "MechanismQuote",
    "Settlement",
    "theta",
    "semts_quote",
    "benchmark_modified_fl_quote",
    "client_payoff",
    "budget_residual",
    "settle",
    "state_payoffs",
]


class Decision(str, Enum):
    ABSTAIN = "abstain"
    JOIN = "join"
    BUY = "buy"


@dataclass(frozen=True)
class MechanismQuote:
    """Posted price and rewards, with the branch that produced them.

    ``theta`` is the steering value the low-heterogeneity branch keys on
    (None for the high-heterogeneity branch and for benchmarks);
    ``recommendation`` is the social state the platform steers toward
    (None for benchmarks).
    """

    price: float
    rewards: tuple
    branch: str
    theta: float | None
    recommendation: SocialState | None

    def to_dict(self) -> dict:
        return {
            "price": self.price,
            "rewards": list(self.rewards),
            "branch": self.branch,
            "theta": self.theta,
            "recommendation": (self.recommendation.to_dict()
                               if self.recommendation is not None else None),
        }


def theta(s: Scenario, k: Sequence[int]) -> float:
    """Steering value of a profile.

    For each type the coalition is re-evaluated with that coordinate forced
    to 0 and to N_i (other coordinates unchanged, U = 0 when the override
    empties the coalition):

        theta(K) = sum_i [ (N_i - K_i)/(N_i * I) * U(eps(K_i := 0))
                           - K_i/(N_i * I)       * U(eps(K_i := N_i))
                           - K_i * C_i / N ].
    """
    profile = validate_profile(s, k, check_capacity=True)
    n_types = s.n_types
    n_clients = s.n_clients
    total = 0.0
    for i, t in enumerate(s.types):
        dropped = profile[:i] + (0,) + profile[i + 1:]
        filled = profile[:i] + (t.count,) + profile[i + 1:]
        u_dropped = utility_at(s, dropped)
        u_filled = utility_at(s, filled)
        total += ((t.count - profile[i]) / (t.count * n_types) * u_dropped
                  - profile[i] / (t.count * n_types) * u_filled
                  - profile[i] * t.cost / n_clients)
    return total


def _average_participation_cost(s: Scenario, profile) -> float:
    return math.fsum(x * t.cost for x, t in zip(profile, s.types)) / s.n_clients


def semts_quote(
    s: Scenario,
    k: Sequence[int],
    w_star: float,
    recommendation: SocialState | None = None,
) -> MechanismQuote:
    """Quote the socially efficient schedule at a profile.

    ``w_star`` is the optimal welfare from the solver; ``recommendation``
    is the target state (computed with the structured solver when omitted).
    The utility U(eps) is evaluated at the quoted profile, with U = 0 for
    the empty coalition.
    """
    profile = validate_profile(s, k, check_capacity=True)
    if recommendation is None:
        recommendation = solve_efficient_structured(s).recommendation
    u = utility_at(s, profile)
    costs = s.costs

    if is_low_heterogeneity(s):
        theta_star = theta(s, recommendation.k)
        if w_star <= 0:
            avg = _average_participation_cost(s, profile)
            price = u
            rewards = tuple(c - avg for c in costs)
            branch = "low_het_wstar_nonpos"
        elif theta_star < 0:
            price = u
            rewards = tuple(c - u for c in costs)
            branch = "low_het_wstar_pos"
        else:
            price = u - theta_star
            rewards = tuple(c - u + theta_star for c in costs)
            branch = "low_het_theta_nonneg"
        return MechanismQuote(price=price, rewards=rewards, branch=branch,
                              theta=theta_star, recommendation=recommendation)

    avg = _average_participation_cost(s, profile)
    if u < avg:
        price = u
        if w_star > 0:
            rewards = tuple(c - u for c in costs)
            branch = "high_het_u_lt_avg_wstar_pos"
        else:
            rewards = tuple(c - avg for c in costs)
            branch = "high_het_other"
    else:
        price = avg
        rewards = tuple(c - avg for c in costs)
        branch = "high_het_other"
    return MechanismQuote(price=price, rewards=rewards, branch=branch,
                          theta=None, recommendation=recommendation)


def benchmark_modified_fl_quote(s: Scenario, k: Sequence[int]) -> MechanismQuote:
    """Benchmark schedule: price the model at its utility, pay no rewards."""
    profile = validate_profile(s, k, check_capacity=True)
    return MechanismQuote(price=utility_at(s, profile),
                          rewards=tuple(0.0 for _ in s.types),
                          branch="modified_fl", theta=None, recommendation=None)


def client_payoff(s: Scenario, st: SocialState, q: MechanismQuote,
                  i: int, decision: Decision) -> float:
    """Payoff of one type-i client under quote ``q`` at state ``st``.

    eps is evaluated at the state's participation profile (U = 0 when
    nobody trains).  ``i`` is a 1-based type index.
    """
    if decision == Decision.ABSTAIN:
        return 0.0
    st = validate_state(s, st)
    u = utility_at(s, st.k)
    if decision == Decision.JOIN:
        return u - s.types[i - 1].cost + q.rewards[i - 1]
    return u - q.price


def budget_residual(st: SocialState, q: MechanismQuote) -> float:
    """Buyer payments minus reward payouts; zero means exact balance."""
    return (math.fsum(x * q.price for x in st.b)
            - math.fsum(x * r for x, r in zip(st.k, q.rewards)))


@dataclass(frozen=True)
class Settlement:
    """Equal lump-sum distribution of the budget residual to obtainers.

    The platform empties its residual account, so the post-settlement
    residual is identically zero; ``share`` is what each participant and
    buyer receives (abstainers receive nothing).
    """

    residual: float
    obtainers: int
    share: float
    post_residual: float = 0.0


def settle(st: SocialState, q: MechanismQuote) -> Settlement:
    """Distribute the residual equally over everyone holding the model."""
    residual = budget_residual(st, q)
    obtainers = sum(st.k) + sum(st.b)
    if obtainers == 0:
        if residual != 0.0:
            raise UnsettleableError(
                "nonzero residual with no model obtainers to settle with")
        return Settlement(residual=0.0, obtainers=0, share=0.0)
    return Settlement(residual=residual, obtainers=obtainers,
                      share=residual / obtainers)


def state_payoffs(s: Scenario, st: SocialState, q: MechanismQuote,
                  settlement: Settlement | None = None):
    """Per-(type, decision) payoffs, pre- and post-settlement.

    Returns records (type_index, decision, count, payoff, post_payoff);
    only roles with at least one client appear.
    """
    st = validate_state(s, st)
    share = settlement.share if settlement is not None else 0.0
    records = []
    for t, x, y in zip(s.types, st.k, st.b):
        idle = t.count - x - y
        if x:
            pay = client_payoff(s, st, q, t.index, Decision.JOIN)
            records.append((t.index, Decision.JOIN, x, pay, pay + share))
        if y:
            pay = client_payoff(s, st, q, t.index, Decision.BUY)
            records.append((t.index, Decision.BUY, y, pay, pay + share))
        if idle:
            records.append((t.index, Decision.ABSTAIN, idle, 0.0, 0.0))
    return tuple(records)
