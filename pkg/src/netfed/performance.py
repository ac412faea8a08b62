"""Analytic generalization error and the network effects of participation.

The error of the model trained by a coalition with K_i type-i participants
(K = sum K_i >= 1) is

    eps(K) = d*gamma2/K**2 * sum_i(K_i / D_i) + (K - 1)/K * sigma2.

A newcomer with data size D lowers eps (non-negative network effect) iff
1/D <= eta, where

    eta(K) = (2K + 1) * sum_i(K_i / D_i) / K**2 - (K + 1)*sigma2 / (d*gamma2*K).

Together with the ratio sigma2/(d*gamma2) this splits newcomers into four
regions: effects that start helpful and eventually turn harmful (I), stay
helpful (II), stay harmful (III), or start harmful and eventually turn
helpful (IV).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from .errors import CapacityError, EmptyCoalitionError, InvalidProfileError
from .scenario import Scenario

__all__ = [
    "validate_profile",
    "generalization_error",
    "utility_at",
    "participation_effect",
    "eta_threshold",
    "MergeBenefit",
    "merge_benefit",
    "classify_region",
    "two_type_turning_point",
    "NetworkEffectReport",
    "network_effect_report",
]


def validate_profile(s: Scenario, k: Sequence[int], check_capacity: bool = False):
    """Normalize a participation profile to a tuple and check its shape."""
    profile = tuple(int(x) for x in k)
    if len(profile) != s.n_types:
        raise InvalidProfileError(
            f"profile has {len(profile)} entries, scenario has {s.n_types} types")
    if any(x < 0 for x in profile):
        raise InvalidProfileError("profile entries must be >= 0")
    if check_capacity:
        for x, t in zip(profile, s.types):
            if x > t.count:
                raise InvalidProfileError(
                    f"type {t.index}: {x} participants exceed count {t.count}")
    return profile


def _weighted_inverse_sum(s: Scenario, profile) -> float:
    return math.fsum(x / t.data_size for x, t in zip(profile, s.types))


def generalization_error(s: Scenario, k: Sequence[int]) -> float:
    """Evaluate eps(K); raises EmptyCoalitionError when K = 0."""
    profile = validate_profile(s, k)
    total = sum(profile)
    if total == 0:
        raise EmptyCoalitionError("generalization error undefined for K = 0")
    data_term = s.d * s.gamma2 * _weighted_inverse_sum(s, profile) / total**2
    return data_term + (total - 1) / total * s.sigma2


def utility_at(s: Scenario, k: Sequence[int]) -> float:
    """Model utility at a profile, with U = 0 for the empty coalition."""
    profile = validate_profile(s, k)
    if sum(profile) == 0:
        return 0.0
    return s.utility(generalization_error(s, profile))


def participation_effect(s: Scenario, k: Sequence[int], j: int) -> float:
    """Network effect of one more type-j client: eps(K) - eps(K + e_j).

    Positive means the newcomer improves the model.  ``j`` is a 1-based
    type index; raises CapacityError if type j is already fully enrolled.
    """
    profile = validate_profile(s, k, check_capacity=True)
    if sum(profile) == 0:
        raise EmptyCoalitionError("network effect undefined for an empty coalition")
    if profile[j - 1] >= s.types[j - 1].count:
        raise CapacityError(f"type {j} already has all {s.types[j - 1].count} clients participating")
    grown = list(profile)
    grown[j - 1] += 1
    return generalization_error(s, profile) - generalization_error(s, grown)


def eta_threshold(s: Scenario, k: Sequence[int]) -> float:
    """Inverse-data-size threshold for a newcomer to help the coalition."""
    profile = validate_profile(s, k)
    total = sum(profile)
    if total == 0:
        raise EmptyCoalitionError("eta undefined for an empty coalition")
    inv_sum = _weighted_inverse_sum(s, profile)
    return (2 * total + 1) * inv_sum / total**2 \
        - (total + 1) * s.sigma2 / (s.d * s.gamma2 * total)


@dataclass(frozen=True)
class MergeBenefit:
    """Outcome of merging two disjoint coalitions.

    ``benefits`` is the direct comparison eps_merged < max(eps_a, eps_b);
    ``condition_holds`` is the closed-form harmonic-mean criterion
    sigma2/gamma2 < (H_b*K_b + K_a*(2H_b - H_a)) / (H_a*H_b*(K_a + K_b)/d)
    with coalitions labelled so that H_a <= H_b.  The two agree.
    """

    benefits: bool
    eps_a: float
    eps_b: float
    eps_merged: float
    condition_holds: bool
    threshold: float


def merge_benefit(s: Scenario, a: Sequence[int], b: Sequence[int]) -> MergeBenefit:
    """Does training jointly beat the worse of two disjoint coalitions?"""
    pa = validate_profile(s, a)
    pb = validate_profile(s, b)
    if sum(pa) == 0 or sum(pb) == 0:
        raise EmptyCoalitionError("both coalitions must be non-empty")
    merged = tuple(x + y for x, y in zip(pa, pb))
    validate_profile(s, merged, check_capacity=True)

    eps_a = generalization_error(s, pa)
    eps_b = generalization_error(s, pb)
    eps_merged = generalization_error(s, merged)

    ka, kb = sum(pa), sum(pb)
    ha = ka / _weighted_inverse_sum(s, pa)
    hb = kb / _weighted_inverse_sum(s, pb)
    if ha > hb:
        ha, hb = hb, ha
        ka, kb = kb, ka
    threshold = (hb * kb + ka * (2.0 * hb - ha)) / (ha * hb * (ka + kb) / s.d)

    return MergeBenefit(
        benefits=eps_merged < max(eps_a, eps_b),
        eps_a=eps_a,
        eps_b=eps_b,
        eps_merged=eps_merged,
        condition_holds=s.sigma2 / s.gamma2 < threshold,
        threshold=threshold,
    )


def classify_region(s: Scenario, k: Sequence[int], j: int) -> str:
    """Region tag ("I".."IV") for type-j newcomers at the given coalition.

    With x = 1/D_j, t = sigma2/(d*gamma2), and eta at the supplied profile:
    I when x <= eta and x < t; II when t <= x <= eta; III when
    eta < x <= t; IV when x > max(t, eta).  The tag is a snapshot: eta is
    profile-dependent, so the region can change as the coalition grows.
    """
    profile = validate_profile(s, k)
    x = 1.0 / s.types[j - 1].data_size
    t = s.sigma2 / (s.d * s.gamma2)
    eta = eta_threshold(s, profile)
    if x <= eta:
        return "I" if x < t else "II"
    return "III" if x <= t else "IV"


def two_type_turning_point(d1: int, d2: int, k2: int) -> int:
    """Smallest type-1 count from which adding type-1 clients stops hurting.

    For two types with i.i.d. data (sigma2 = 0), D1 <= D2, and K2 type-2
    participants fixed, eps first rises and then falls in K1; the returned
    count is max(0, ceil((-2*K2*D1 - D2 + sqrt(4*K2^2*(D2-D1)^2 + D2^2)) /
    (2*D2))), computed exactly when the discriminant is a perfect square.
    """
    if d1 > d2:
        raise ValueError("requires D1 <= D2")
    if k2 < 1:
        raise ValueError("requires K2 >= 1")
    disc = 4 * k2 * k2 * (d2 - d1) ** 2 + d2 * d2
    root = math.isqrt(disc)
    if root * root == disc:
        numerator = -2 * k2 * d1 - d2 + root
        value = -((-numerator) // (2 * d2))  # exact ceil for integer operands
    else:
        value = math.ceil((-2 * k2 * d1 - d2 + math.sqrt(disc)) / (2 * d2))
    return max(0, value)


@dataclass(frozen=True)
class NetworkEffectReport:
    """Per-type classification of newcomer effects at one coalition."""

    eta: float
    entries: tuple  # ((type_index, region, delta_eps or None), ...)

    def to_dict(self) -> dict:
        return {
            "eta": self.eta,
            "types": [
                {"type": i, "region": region, "delta_eps": delta}
                for i, region, delta in self.entries
            ],
        }


def network_effect_report(s: Scenario, k: Sequence[int]) -> NetworkEffectReport:
    """Classify every type and record its instantaneous effect at ``k``.

    ``delta_eps`` is None for types already at capacity (no client left
    to add).
    """
    profile = validate_profile(s, k, check_capacity=True)
    eta = eta_threshold(s, profile)
    entries = []
    for t in s.types:
        region = classify_region(s, profile, t.index)
        if profile[t.index - 1] < t.count:
            delta = participation_effect(s, profile, t.index)
        else:
            delta = None
        entries.append((t.index, region, delta))
    return NetworkEffectReport(eta=eta, entries=tuple(entries))
