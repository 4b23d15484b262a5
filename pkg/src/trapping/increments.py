"""Finite-support increment laws ``Q_w`` indexed by the state ``w`` in [0, 1].

A family maps each state to an :class:`AtomList` (offsets in increment units
and their probabilities).  Built-in families are symmetric about 1/2, i.e.
the law at ``1 - w`` is the law at ``w`` with offsets negated, and they push
the state toward 1/2.

Probabilities are computed from the parameters at every call.  Passing a
:class:`fractions.Fraction` for ``w`` evaluates them in exact rational
arithmetic, which makes the reflection symmetry an exact identity.
"""
from __future__ import annotations

import bisect
from dataclasses import dataclass
from fractions import Fraction
from itertools import accumulate

import numpy as np

from .errors import ConfigurationError, DomainError

__all__ = [
    "AtomList",
    "IncrementFamily",
    "BinaryFamily",
    "ThreeAtomFamily",
    "FAMILIES",
    "make_family",
    "atoms",
    "mean",
    "sample",
]


@dataclass(frozen=True)
class AtomList:
    """Concrete finite-support law: ascending distinct offsets with probabilities."""

    offsets: tuple
    probs: tuple

    def __post_init__(self):
        if len(self.offsets) != len(self.probs) or not self.offsets:
            raise ValueError("offsets and probs must be non-empty and of equal length")
        if any(b <= a for a, b in zip(self.offsets, self.offsets[1:])):
            raise ValueError("offsets must be strictly increasing")
        if any(p < 0 for p in self.probs):
            raise ValueError("probabilities must be nonnegative")
        if abs(float(sum(self.probs)) - 1.0) > 1e-12:
            raise ValueError(f"probabilities sum to {float(sum(self.probs))!r}, not 1")

    @classmethod
    def from_pairs(cls, pairs) -> "AtomList":
        pairs = sorted(pairs)
        return cls(tuple(y for y, _ in pairs), tuple(p for _, p in pairs))

    def pairs(self):
        return list(zip(self.offsets, self.probs))

    def negated(self) -> "AtomList":
        return AtomList(tuple(-y for y in reversed(self.offsets)), tuple(reversed(self.probs)))

    def mean(self):
        return sum(p * y for y, p in zip(self.offsets, self.probs))

    def cumulative(self) -> list:
        return list(accumulate(float(p) for p in self.probs))

    def draw(self, u: float):
        """Inverse-CDF draw for a uniform ``u`` in [0, 1)."""
        cum = self.cumulative()
        k = bisect.bisect_right(cum, u * cum[-1])
        return self.offsets[min(k, len(self.offsets) - 1)]

    def sample(self, rng: np.random.Generator):
        return self.draw(rng.random())


class IncrementFamily:
    """Base class for ``w``-parametrized increment laws.

    Subclasses define ``family_id``, ``offsets``, :meth:`probabilities` and
    the declared constants ``lipschitz`` (bound on |d mean / dw|) and
    ``p_min`` (lower bound on the extreme atoms' mass for ``w`` in (0, 1)).
    """

    family_id: str = ""
    offsets: tuple = ()

    @property
    def parameters(self) -> dict:
        raise NotImplementedError

    @property
    def y_max(self) -> float:
        return float(max(abs(y) for y in self.offsets))

    @property
    def atom_count(self) -> int:
        return len(self.offsets)

    @property
    def integer_offsets(self) -> bool:
        return all(float(y).is_integer() for y in self.offsets)

    def probabilities(self, w) -> tuple:
        raise NotImplementedError

    def atoms(self, w) -> AtomList:
        _check_state(w)
        return AtomList(tuple(self.offsets), self.probabilities(w))

    def mean(self, w):
        return self.atoms(w).mean()

    def __repr__(self):
        params = ", ".join(f"{k}={v!r}" for k, v in self.parameters.items())
        return f"{type(self).__name__}({params})"

    def __eq__(self, other):
        return type(self) is type(other) and self.parameters == other.parameters

    def __hash__(self):
        return hash((type(self).__name__, tuple(sorted(self.parameters.items()))))


def _check_state(w):
    if not 0 <= w <= 1:
        raise DomainError(f"state w={w!r} is outside [0, 1]")


def _half_and(w, *params):
    # exact arithmetic when the caller hands in a Fraction
    if isinstance(w, Fraction):
        return (Fraction(1, 2),) + tuple(Fraction(p) for p in params)
    return (0.5,) + tuple(float(p) for p in params)


class BinaryFamily(IncrementFamily):
    """Atoms {-1, +1} with ``P(+1) = 1/2 + kappa (1/2 - w)``, ``0 < kappa <= 1``.

    The tilt root has the closed form ``lambda_w = log(p / (1 - p))``.
    """

    family_id = "binary"
    offsets = (-1.0, 1.0)

    def __init__(self, kappa: float = 0.5):
        kappa = float(kappa)
        if not 0 < kappa <= 1:
            raise ConfigurationError(f"binary family requires 0 < kappa <= 1, got kappa={kappa}")
        self.kappa = kappa

    @property
    def parameters(self):
        return {"kappa": self.kappa}

    @property
    def lipschitz(self):
        return 2 * self.kappa

    @property
    def p_min(self):
        return 0.5 * (1 - self.kappa)

    def p_up(self, w):
        half, kappa = _half_and(w, self.kappa)
        return half + kappa * (half - w)

    def probabilities(self, w):
        half, kappa = _half_and(w, self.kappa)
        d = kappa * (half - w)
        return (half - d, half + d)


class ThreeAtomFamily(IncrementFamily):
    """Atoms {-1, 0, +1}: a lazy version of :class:`BinaryFamily`.

    ``P(0) = q`` and the remaining mass is split as in the binary family.
    """

    family_id = "three-atom"
    offsets = (-1.0, 0.0, 1.0)

    def __init__(self, kappa: float = 0.5, q: float = 0.2):
        kappa, q = float(kappa), float(q)
        if not 0 < kappa <= 1:
            raise ConfigurationError(f"three-atom family requires 0 < kappa <= 1, got kappa={kappa}")
        if not 0 <= q < 1:
            raise ConfigurationError(f"three-atom family requires 0 <= q < 1, got q={q}")
        self.kappa = kappa
        self.q = q

    @property
    def parameters(self):
        return {"kappa": self.kappa, "q": self.q}

    @property
    def lipschitz(self):
        return 2 * self.kappa * (1 - self.q)

    @property
    def p_min(self):
        return 0.5 * (1 - self.kappa) * (1 - self.q)

    def probabilities(self, w):
        half, kappa, q = _half_and(w, self.kappa, self.q)
        d = kappa * (half - w)
        move = 1 - q
        return ((half - d) * move, q, (half + d) * move)


FAMILIES = {cls.family_id: cls for cls in (BinaryFamily, ThreeAtomFamily)}


def make_family(family_id: str, **parameters) -> IncrementFamily:
    """Build a registered family from its id and parameter mapping."""
    try:
        cls = FAMILIES[family_id]
    except KeyError:
        raise ConfigurationError(
            f"unknown family id {family_id!r}; available: {', '.join(sorted(FAMILIES))}"
        ) from None
    try:
        return cls(**parameters)
    except TypeError as exc:
        raise ConfigurationError(f"bad parameters for family {family_id!r}: {exc}") from None


def atoms(family: IncrementFamily, w) -> AtomList:
    return family.atoms(w)


def mean(family: IncrementFamily, w):
    return family.mean(w)


def sample(family: IncrementFamily, w, rng: np.random.Generator):
    """Draw one offset from ``Q_w`` using a single uniform from ``rng``."""
    return family.atoms(w).sample(rng)
