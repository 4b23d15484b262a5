"""Exponential moments, tilt roots and the trapping-rate integral.

For an increment family with positive drift on (0, 1/2):

* ``Z_w(lam) = sum_y p_w(y) exp(-lam y)`` is convex with ``Z_w(0) = 1`` and a
  unique positive root ``lambda_w`` of ``Z_w = 1``;
* ``Lambda(w)`` is the integral of ``lambda_u`` over ``[w, 1/2]``, extended to
  [1/2, 1] by ``Lambda(w) = Lambda(1 - w)``;
* ``C = Lambda(0)`` is the exponent in ``E T_x ~ exp(C / x)``.
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy.integrate import cumulative_simpson
from scipy.interpolate import CubicHermiteSpline

from .errors import DomainError, NumericalError, RangeError
from .increments import AtomList, IncrementFamily, make_family

__all__ = [
    "RateProfile",
    "TiltedKernel",
    "SupermartingaleReport",
    "z_value",
    "lambda_root",
    "build_profile",
    "biglambda_at",
    "tilt_kernel",
    "supermartingale_ratio",
    "check_supermartingale",
    "search_supermartingale_x",
    "save_profile",
    "load_profile",
]

EXP_LIMIT = 700.0
W_MIN = 1e-4


def _z_minus_one(family, w, lam):
    a = family.atoms(w)
    if abs(lam) * family.y_max > EXP_LIMIT:
        raise RangeError(f"|lambda| * y_max = {abs(lam) * family.y_max:g} exceeds {EXP_LIMIT}")
    # expm1 keeps the sign of Z - 1 accurate for tiny lambda
    return math.fsum(float(p) * math.expm1(-lam * float(y)) for y, p in a.pairs())


def z_value(family: IncrementFamily, w: float, lam: float) -> float:
    """Exponential moment ``E exp(-lam Y)`` for ``Y ~ Q_w``."""
    if not 0 < w < 1:
        raise DomainError(f"z_value needs 0 < w < 1, got {w}")
    if not math.isfinite(lam):
        raise DomainError(f"lambda must be finite, got {lam}")
    return 1.0 + _z_minus_one(family, w, lam)


def lambda_root(family: IncrementFamily, w: float, tol: float = 1e-10, max_doublings: int = 60) -> float:
    """Positive root of ``Z_w(lam) = 1``.

    Grows the bracket ``[0, hi]`` geometrically from ``hi = 1``, bisects to a
    width of ``tol``, then takes one secant step inside the final bracket.

    Raises
    ------
    DomainError
        If ``w >= 1/2`` or the mean of ``Q_w`` is not positive.
    NumericalError
        If ``Z_w`` never exceeds 1 (no mass on negative offsets).
    """
    if tol <= 0:
        raise DomainError("tol must be positive")
    if not 0 <= w < 0.5:
        raise DomainError(f"lambda_root needs 0 <= w < 1/2, got {w}")
    if float(family.mean(w)) <= 0:
        raise DomainError(f"mean of Q_w is not positive at w={w}")

    g = lambda lam: _z_minus_one(family, w, lam)
    hi = 1.0
    for _ in range(max_doublings):
        if hi * family.y_max > EXP_LIMIT:
            break
        if g(hi) > 0:
            break
        hi *= 2.0
    else:
        raise NumericalError(f"no sign change for Z_w - 1 at w={w} after {max_doublings} doublings")
    if g(hi) <= 0:
        raise NumericalError(f"no sign change for Z_w - 1 at w={w} before exponent overflow")

    lo, g_lo, g_hi = 0.0, 0.0, g(hi)
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        g_mid = g(mid)
        if g_mid < 0:
            lo, g_lo = mid, g_mid
        else:
            hi, g_hi = mid, g_mid
    if lo == 0.0 or g_hi == g_lo:
        return 0.5 * (lo + hi)
    root = lo - g_lo * (hi - lo) / (g_hi - g_lo)
    if not lo <= root <= hi:
        return 0.5 * (lo + hi)
    return root


@dataclass(frozen=True, eq=False)
class RateProfile:
    """Tabulated ``lambda_w`` and ``Lambda(w)`` on a uniform grid of [0, 1/2]."""

    family_id: str
    parameters: dict
    grid: np.ndarray
    lam: np.ndarray
    biglam: np.ndarray
    C: float
    tol: float
    clipped_w0: bool = False

    @property
    def grid_size(self) -> int:
        return len(self.grid) - 1

    @cached_property
    def spline(self):
        # Hermite data: Lambda' = -lambda, exact at the nodes
        return CubicHermiteSpline(self.grid, self.biglam, -self.lam)

    def family(self) -> IncrementFamily:
        return make_family(self.family_id, **self.parameters)

    def biglambda(self, w):
        """``Lambda`` on [0, 1/2]; vectorized, exact at grid nodes."""
        return biglambda_at(self, w)

    def reflected(self, w):
        """``Lambda`` extended to [0, 1] by ``Lambda(w) = Lambda(1 - w)``."""
        w = np.asarray(w, dtype=float)
        if np.any((w < 0) | (w > 1)):
            raise DomainError("reflected Lambda is defined on [0, 1] only")
        return biglambda_at(self, np.minimum(w, 1.0 - w))


def build_profile(family: IncrementFamily, grid_size: int = 512, tol: float = 1e-10) -> RateProfile:
    """Tabulate ``lambda_w`` on ``grid_size + 1`` nodes and integrate by Simpson's rule."""
    if grid_size < 16:
        raise DomainError(f"grid_size must be >= 16, got {grid_size}")
    grid = np.linspace(0.0, 0.5, grid_size + 1)
    lam = np.empty_like(grid)
    lam[-1] = 0.0
    clipped = False
    for k, w in enumerate(grid[:-1]):
        try:
            lam[k] = lambda_root(family, float(w), tol)
        except (DomainError, NumericalError) as exc:
            if k != 0:
                raise NumericalError(f"root failure at w={w}: {exc}") from exc
            warnings.warn(
                f"lambda undefined at w=0 for {family!r}; using w={W_MIN} (biases C low)",
                RuntimeWarning,
                stacklevel=2,
            )
            lam[k] = lambda_root(family, W_MIN, tol)
            clipped = True
        if not math.isfinite(lam[k]):
            raise NumericalError(f"non-finite lambda at w={w}")
    h = grid[1] - grid[0]
    # integrate from 1/2 downward so that Lambda(1/2) = 0 exactly
    tail = cumulative_simpson(lam[::-1], dx=h, initial=0.0)
    biglam = tail[::-1].copy()
    if not np.all(np.isfinite(biglam)):
        bad = grid[~np.isfinite(biglam)][0]
        raise NumericalError(f"non-finite Lambda at w={bad}")
    return RateProfile(
        family_id=family.family_id,
        parameters=dict(family.parameters),
        grid=grid,
        lam=lam,
        biglam=biglam,
        C=float(biglam[0]),
        tol=tol,
        clipped_w0=clipped,
    )


def biglambda_at(profile: RateProfile, w):
    w_arr = np.asarray(w, dtype=float)
    if np.any((w_arr < 0) | (w_arr > 0.5)):
        raise DomainError(f"Lambda is tabulated on [0, 1/2]; got {w}")
    out = profile.spline(w_arr)
    # snap nodes to the tabulated values
    idx = np.rint(w_arr / (profile.grid[1] - profile.grid[0])).astype(int)
    on_node = np.isclose(profile.grid[idx], w_arr, rtol=0, atol=0)
    out = np.where(on_node, profile.biglam[idx], out)
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class TiltedKernel:
    """Exponentially tilted increment law at one state.

    ``log_lr[k]`` is ``log(p_k / p~_k)``, the per-step log likelihood ratio
    dP/dP~ incurred when the tilted sampler picks atom ``k``.
    """

    base: str
    delta: float
    w: float
    x: float
    atoms: AtomList
    log_normalizer: float
    log_lr: tuple

    def mean(self) -> float:
        return float(self.atoms.mean())


def _potential_steps(family, profile, w, x):
    base = family.atoms(w)
    ys = np.array([float(y) for y in base.offsets])
    targets = w + x * ys
    lo, hi = w - x * family.y_max, w + x * family.y_max
    if lo < -1e-12 or hi > 1 + 1e-12:
        raise DomainError(f"w={w} with step scale x={x} can leave [0, 1]")
    targets = np.clip(targets, 0.0, 1.0)
    dlam = np.asarray(profile.reflected(targets)) - profile.reflected(w)
    return base, dlam


def tilt_kernel(family: IncrementFamily, profile: RateProfile, w: float, delta: float, x: float) -> TiltedKernel:
    """Tilt ``Q_w`` by ``exp((1 + delta) x^-1 (Lambda(w + x y) - Lambda(w)))``.

    ``Lambda`` is the reflected profile, so on both halves of [0, 1] the tilt
    pushes the state away from 1/2.  ``delta = -1`` gives the identity tilt.
    """
    if not 0 < x < 1:
        raise DomainError(f"step scale x must lie in (0, 1), got {x}")
    base, dlam = _potential_steps(family, profile, w, x)
    probs = np.array([float(p) for p in base.probs])
    if 1.0 + delta == 0.0:
        return TiltedKernel(family.family_id, delta, w, x, base, 0.0, (0.0,) * len(probs))
    expo = (1.0 + delta) / x * dlam
    with np.errstate(divide="ignore"):
        logp = np.log(probs)
    logits = logp + expo
    top = np.max(logits)
    if not np.isfinite(top):
        raise NumericalError(f"tilted weights underflow at w={w}")
    log_norm = float(top + np.log(np.sum(np.exp(logits - top))))
    tilted = np.exp(logits - log_norm)
    total = tilted.sum()
    if not np.isfinite(log_norm) or total <= 0:
        raise NumericalError(f"tilt normalization failed at w={w}")
    tilted = tilted / total
    log_lr = tuple(float(log_norm - e) for e in expo)
    return TiltedKernel(
        base=family.family_id,
        delta=float(delta),
        w=float(w),
        x=float(x),
        atoms=AtomList(base.offsets, tuple(float(p) for p in tilted)),
        log_normalizer=log_norm,
        log_lr=log_lr,
    )


def supermartingale_ratio(family, profile, w, x, delta) -> float:
    """One-step ratio ``E[M(t+1) | W(t) = w] / M(t)`` for ``M = exp((1-delta) Lambda(W) / x)``.

    Computed exactly over the finite support of ``Q_w``.
    """
    base, dlam = _potential_steps(family, profile, w, x)
    expo = (1.0 - delta) / x * dlam
    return math.fsum(float(p) * math.exp(e) for p, e in zip(base.probs, expo))


@dataclass(frozen=True)
class SupermartingaleReport:
    x: float
    delta: float
    grid: np.ndarray
    ratios: np.ndarray
    slack: float

    @property
    def holds(self) -> bool:
        return bool(np.all(self.ratios <= 1.0 + self.slack))

    @property
    def worst_w(self) -> float:
        return float(self.grid[int(np.argmax(self.ratios))])

    @property
    def max_ratio(self) -> float:
        return float(np.max(self.ratios))

    @property
    def failing(self) -> np.ndarray:
        return self.grid[self.ratios > 1.0 + self.slack]


def check_supermartingale(family, profile, x, delta, grid, slack=1e-9) -> SupermartingaleReport:
    grid = np.asarray(grid, dtype=float)
    ratios = np.array([supermartingale_ratio(family, profile, float(w), x, delta) for w in grid])
    return SupermartingaleReport(x=x, delta=delta, grid=grid, ratios=ratios, slack=slack)


def search_supermartingale_x(family, profile, delta, w_lo, w_hi, points=201, k_max=20, slack=1e-9):
    """Largest ``x`` in ``{2^-1, ..., 2^-k_max}`` certifying the inequality on ``[w_lo, w_hi]``.

    The window must keep a margin of ``x * y_max`` from 0.  Returns ``None``
    when no candidate works; windows reaching 1/2 never certify, because at
    ``w = 1/2`` every step raises ``Lambda``.
    """
    for k in range(1, k_max + 1):
        x = 2.0**-k
        lo = max(w_lo, x * family.y_max)
        if lo > w_hi:
            continue
        rep = check_supermartingale(family, profile, x, delta, np.linspace(lo, w_hi, points), slack)
        if rep.holds:
            return x
    return None


def _fmt(v: float) -> str:
    return repr(float(v))


def save_profile(profile: RateProfile, directory, stem: str = "profile"):
    """Write ``<stem>.csv`` (w, lambda, biglambda) and ``<stem>.json``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    csv_path = directory / f"{stem}.csv"
    with open(csv_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("w,lambda,biglambda\n")
        for w, lam, big in zip(profile.grid, profile.lam, profile.biglam):
            fh.write(f"{_fmt(w)},{_fmt(lam)},{_fmt(big)}\n")
    header = {
        "family_id": profile.family_id,
        "parameters": profile.parameters,
        "grid_size": profile.grid_size,
        "tol": profile.tol,
        "C": profile.C,
        "clipped_w0": profile.clipped_w0,
    }
    json_path = directory / f"{stem}.json"
    json_path.write_text(json.dumps(header, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return csv_path, json_path


def load_profile(directory, stem: str = "profile") -> RateProfile:
    directory = Path(directory)
    header = json.loads((directory / f"{stem}.json").read_text(encoding="utf-8"))
    data = np.loadtxt(directory / f"{stem}.csv", delimiter=",", skiprows=1, ndmin=2)
    return RateProfile(
        family_id=header["family_id"],
        parameters=header["parameters"],
        grid=data[:, 0],
        lam=data[:, 1],
        biglam=data[:, 2],
        C=float(header["C"]),
        tol=float(header["tol"]),
        clipped_w0=bool(header.get("clipped_w0", False)),
    )
