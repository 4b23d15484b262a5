"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """A parameter or configuration value is outside its documented domain."""


class DomainError(ValueError):
    """An operation was called outside the region where it is defined."""


class NumericalError(ArithmeticError):
    """A numerical routine failed (no bracket, non-finite value, underflow)."""


class RangeError(NumericalError, OverflowError):
    """An exponential argument would overflow double precision."""


class ContractViolation(RuntimeError):
    """A caller broke a precondition that the type system cannot express."""


class DegenerateAgentError(DomainError):
    """Every trio available to an agent has zero weight."""

    def __init__(self, agent, message=None):
        self.agent = agent
        super().__init__(message or f"agent {agent} has no trio with positive weight")


class SizeError(DomainError):
    """A problem is too large for exact enumeration."""
