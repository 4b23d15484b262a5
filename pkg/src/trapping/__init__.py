"""Exponentially discounted reinforcement: walks, urns, Three's Company and trapping-time rates."""

__version__ = "0.1.0"

from . import increments, meanfield, network, rate, walk  # noqa: E402
from .errors import (  # noqa: E402
    ConfigurationError,
    ContractViolation,
    DegenerateAgentError,
    DomainError,
    NumericalError,
    RangeError,
    SizeError,
)
from .increments import BinaryFamily, ThreeAtomFamily, make_family  # noqa: E402
from .rate import RateProfile, build_profile, lambda_root, tilt_kernel, z_value  # noqa: E402

__all__ = [
    "__version__",
    "increments",
    "rate",
    "walk",
    "network",
    "meanfield",
    "BinaryFamily",
    "ThreeAtomFamily",
    "make_family",
    "RateProfile",
    "build_profile",
    "lambda_root",
    "tilt_kernel",
    "z_value",
    "ConfigurationError",
    "ContractViolation",
    "DegenerateAgentError",
    "DomainError",
    "NumericalError",
    "RangeError",
    "SizeError",
]
