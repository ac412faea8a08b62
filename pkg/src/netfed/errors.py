"""Exception hierarchy shared across the package."""


class NetfedError(Exception):
    """Base class for all package errors."""


class ScenarioParseError(NetfedError):
    """Scenario document is not valid JSON or is structurally malformed."""


class ScenarioValidationError(NetfedError):
    """Scenario violates one or more invariants.

    ``violations`` lists every violated invariant, not just the first.
    """

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("invalid scenario: " + "; ".join(self.violations))


class InvalidProfileError(NetfedError):
    """Participation profile has the wrong arity or negative entries."""


class InvalidStateError(NetfedError):
    """Social state violates per-type capacity K_i + B_i <= N_i."""


class EmptyCoalitionError(NetfedError):
    """Generalization error is undefined for an empty coalition (K = 0)."""


class CapacityError(NetfedError):
    """A type is already at full participation; no client of it can join."""


class EnumerationCapError(NetfedError):
    """Exact enumeration would exceed the configured profile cap."""


class UnsettleableError(NetfedError):
    """Nonzero budget residual but no model obtainers to distribute it to."""


class IllPosedTaskError(NetfedError):
    """A participant has too few samples for a well-posed local fit."""
