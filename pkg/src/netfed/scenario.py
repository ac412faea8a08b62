"""Market instances: client types, variances, and model-utility functions.

A scenario fixes the feature dimension ``d``, the label-noise variance
``gamma2``, the cross-client heterogeneity magnitude ``sigma2`` (scalar,
summed over feature dimensions), an ordered list of client types, and a
utility function mapping generalization error to model value.

Types are indexed 1..I in order of non-decreasing data size, and the index
set splits into a low part ``I_L = {i : D_i <= d*gamma2/sigma2}`` and its
complement ``I_H``; with ``sigma2 = 0`` every type is low.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Union

from .errors import ScenarioParseError, ScenarioValidationError

__all__ = [
    "PowerUtility",
    "TableUtility",
    "UtilitySpec",
    "ClientType",
    "Scenario",
    "UtilityConditionReport",
    "load_scenario",
    "scenario_from_dict",
    "scenario_to_dict",
    "scenario_to_json",
    "partition_types",
    "check_utility_condition",
    "with_proportional_costs",
]


@dataclass(frozen=True)
class PowerUtility:
    """U(eps) = a * eps**(-b), strictly decreasing for a, b > 0.

    The convention U = 0 when no model exists (empty coalition) is applied
    by callers, not here; this object only evaluates the curve.
    """

    a: float
    b: float

    family = "power"

    def __call__(self, eps: float) -> float:
        return self.a * eps ** (-self.b)

    def d1(self, eps: float) -> float:
        """First derivative U'(eps)."""
        return -self.a * self.b * eps ** (-self.b - 1.0)

    def d2(self, eps: float) -> float:
        """Second derivative U''(eps)."""
        return self.a * self.b * (self.b + 1.0) * eps ** (-self.b - 2.0)

    def to_dict(self) -> dict:
        return {"family": "power", "a": self.a, "b": self.b}


@dataclass(frozen=True)
class TableUtility:
    """Piecewise-linear utility given as sorted (eps, U) knots.

    Evaluation clamps outside the knot range (flat extrapolation), which
    preserves the non-increasing shape globally.  Derivatives are taken by
    central finite differences with step h = eps * 1e-5.
    """

    points: tuple  # ((eps, u), ...) sorted by eps

    family = "table"

    def __call__(self, eps: float) -> float:
        pts = self.points
        if eps <= pts[0][0]:
            return pts[0][1]
        if eps >= pts[-1][0]:
            return pts[-1][1]
        # linear search is fine at the table sizes used here
        for (x0, y0), (x1, y1) in zip(pts, pts[1:]):
            if x0 <= eps <= x1:
                t = (eps - x0) / (x1 - x0)
                return y0 + t * (y1 - y0)
        raise AssertionError("unreachable")

    def d1(self, eps: float) -> float:
        h = eps * 1e-5
        return (self(eps + h) - self(eps - h)) / (2.0 * h)

    def d2(self, eps: float) -> float:
        h = eps * 1e-5
        return (self(eps + h) - 2.0 * self(eps) + self(eps - h)) / (h * h)

    def to_dict(self) -> dict:
        return {"family": "table", "points": [[x, y] for x, y in self.points]}


UtilitySpec = Union[PowerUtility, TableUtility]


@dataclass(frozen=True)
class ClientType:
    """One client type: 1-based index, data size, participation cost, count."""

    index: int
    data_size: int
    cost: float
    count: int


@dataclass(frozen=True)
class Scenario:
    """Immutable market instance; safe to share across threads."""

    d: int
    gamma2: float
    sigma2: float
    types: tuple  # tuple[ClientType, ...]
    utility: UtilitySpec

    @property
    def n_types(self) -> int:
        return len(self.types)

    @property
    def n_clients(self) -> int:
        return sum(t.count for t in self.types)

    @property
    def data_sizes(self) -> tuple:
        return tuple(t.data_size for t in self.types)

    @property
    def costs(self) -> tuple:
        return tuple(t.cost for t in self.types)

    @property
    def counts(self) -> tuple:
        return tuple(t.count for t in self.types)

    def type_of(self, index: int) -> ClientType:
        """Look up a type by its 1-based index."""
        return self.types[index - 1]


def _validate_utility(spec: UtilitySpec, violations: list) -> None:
    if isinstance(spec, PowerUtility):
        if not spec.a > 0:
            violations.append("utility coefficient a must be > 0")
        if not spec.b > 0:
            violations.append("utility exponent b must be > 0")
        return
    pts = spec.points
    if len(pts) < 1:
        violations.append("utility table must contain at least one point")
        return
    for eps, u in pts:
        if not eps > 0:
            violations.append("utility table eps values must be > 0")
            break
    for (x0, _), (x1, _) in zip(pts, pts[1:]):
        if not x0 < x1:
            violations.append("utility table eps values must be strictly increasing")
            break
    for _, u in pts:
        if u < 0:
            violations.append("utility values must be non-negative")
            break
    for (_, y0), (_, y1) in zip(pts, pts[1:]):
        if y1 > y0:
            violations.append("utility table must be non-increasing in eps")
            break


def _validate(d, gamma2, sigma2, types, utility) -> None:
    violations = []
    if not (isinstance(d, int) and d >= 1):
        violations.append("feature dimension d must be a positive integer")
    if not gamma2 > 0:
        violations.append("data variance gamma2 must be > 0")
    if sigma2 < 0:
        violations.append("client variance sigma2 must be >= 0")
    if not types:
        violations.append("at least one client type is required")
    for t in types:
        if not (isinstance(t.data_size, int) and t.data_size >= 1):
            violations.append(f"type {t.index}: data size must be a positive integer")
        if t.cost < 0:
            violations.append(f"type {t.index}: cost must be >= 0")
        if not (isinstance(t.count, int) and t.count >= 1):
            violations.append(f"type {t.index}: count must be a positive integer")
    for a, b in zip(types, types[1:]):
        if a.data_size > b.data_size:
            violations.append("types not sorted by data size")
            break
    for a, b in zip(types, types[1:]):
        if a.cost > b.cost:
            violations.append("costs must be non-decreasing with data size")
            break
    _validate_utility(utility, violations)
    if violations:
        raise ScenarioValidationError(violations)


def _utility_from_dict(doc: dict) -> UtilitySpec:
    family = doc.get("family")
    if family == "power":
        return PowerUtility(a=float(doc["a"]), b=float(doc["b"]))
    if family == "table":
        pts = tuple((float(x), float(y)) for x, y in doc["points"])
        return TableUtility(points=pts)
    raise ScenarioParseError(f"unknown utility family: {family!r}")


def scenario_from_dict(doc: dict) -> Scenario:
    """Build and validate a Scenario from its dict form."""
    try:
        utility = _utility_from_dict(doc["utility"])
        types = tuple(
            ClientType(index=i + 1, data_size=int(t["D"]), cost=float(t["C"]), count=int(t["N"]))
            for i, t in enumerate(doc["types"])
        )
        d = int(doc["d"])
        gamma2 = float(doc["gamma2"])
        sigma2 = float(doc["sigma2"])
    except ScenarioParseError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ScenarioParseError(f"malformed scenario document: {exc}") from exc
    _validate(d, gamma2, sigma2, types, utility)
    return Scenario(d=d, gamma2=gamma2, sigma2=sigma2, types=types, utility=utility)


def load_scenario(path) -> Scenario:
    """Load a scenario from a JSON file."""
    text = Path(path).read_text(encoding="utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioParseError(f"{path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ScenarioParseError(f"{path}: top-level value must be an object")
    return scenario_from_dict(doc)


def scenario_to_dict(s: Scenario) -> dict:
    return {
        "d": s.d,
        "gamma2": s.gamma2,
        "sigma2": s.sigma2,
        "utility": s.utility.to_dict(),
        "types": [{"D": t.data_size, "C": t.cost, "N": t.count} for t in s.types],
    }


def scenario_to_json(s: Scenario) -> str:
    """Exact (repr-faithful) JSON text; load_scenario round-trips it."""
    return json.dumps(scenario_to_dict(s), indent=2) + "\n"


def partition_types(s: Scenario):
    """Split 1-based type indices into (I_L, I_H) by D_i <= d*gamma2/sigma2.

    With sigma2 = 0 the threshold is infinite and I_H is empty.  The
    boundary D_i == d*gamma2/sigma2 belongs to I_L.
    """
    if s.sigma2 == 0:
        return tuple(t.index for t in s.types), ()
    threshold = s.d * s.gamma2 / s.sigma2
    low = tuple(t.index for t in s.types if t.data_size <= threshold)
    high = tuple(t.index for t in s.types if t.data_size > threshold)
    return low, high


def is_low_heterogeneity(s: Scenario) -> bool:
    """True when sigma2 <= d*gamma2/D_I, i.e. I_H is empty."""
    return s.sigma2 * s.types[-1].data_size <= s.d * s.gamma2


@dataclass(frozen=True)
class UtilityConditionReport:
    """Result of the curvature check (eps - sigma2)*U'' + 2*U' >= 0."""

    satisfied: bool
    violating_ranges: tuple  # ((lo, hi), ...) sub-ranges where it fails


def check_utility_condition(
    u: UtilitySpec,
    sigma2: float,
    eps_lo: float,
    eps_hi: float,
    grid: int = 1000,
    tol: float = 1e-9,
) -> UtilityConditionReport:
    """Check (eps - sigma2)*U''(eps) + 2*U'(eps) >= -tol on an eps grid.

    The scan uses at least 1000 points over [eps_lo, eps_hi]; contiguous
    failing runs are reported as (lo, hi) sub-ranges.
    """
    if not eps_lo > 0:
        raise ValueError("eps_lo must be > 0")
    if not eps_hi > eps_lo:
        raise ValueError("eps_hi must be > eps_lo")
    n = max(int(grid), 1000)
    step = (eps_hi - eps_lo) / (n - 1)
    violations = []
    run_start = None
    last_eps = eps_lo
    for i in range(n):
        eps = eps_lo + i * step
        value = (eps - sigma2) * u.d2(eps) + 2.0 * u.d1(eps)
        if value < -tol:
            if run_start is None:
                run_start = eps
        else:
            if run_start is not None:
                violations.append((run_start, last_eps))
                run_start = None
        last_eps = eps
    if run_start is not None:
        violations.append((run_start, last_eps))
    return UtilityConditionReport(satisfied=not violations, violating_ranges=tuple(violations))


def with_proportional_costs(s: Scenario, per_sample_cost: float) -> Scenario:
    """Derive a scenario with C_i = c * D_i (used by cost sweeps)."""
    if per_sample_cost < 0:
        raise ScenarioValidationError(["per-sample cost must be >= 0"])
    types = tuple(
        ClientType(index=t.index, data_size=t.data_size,
                   cost=per_sample_cost * t.data_size, count=t.count)
        for t in s.types
    )
    return Scenario(d=s.d, gamma2=s.gamma2, sigma2=s.sigma2, types=types, utility=s.utility)
