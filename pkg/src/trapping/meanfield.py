"""Mean motion of Three's Company near the symmetric point.

Edge vectors are indexed by ``itertools.combinations(range(N), 2)``.  The
normalized state is ``a = C(N, 2) W / S`` so the symmetric point ``c`` is the
all-ones vector.  Write ``n = N - 1``.  At the stationary total ``S = 3N/x``
one step maps

    a  ->  (1 - x) a + x (n/6) R

where ``R`` is the random vector of pair reinforcements (it always sums to
``3N``).  The mean field is ``F(a) = (n/6) E[R | a] - a`` and its differential
at ``c`` is ``M - I`` with ``M`` built from the coefficients ``B_j``.

Every expectation here is exact: trio probabilities are enumerated, and the
joint law of the ``N`` simultaneous choices is enumerated when needed.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from functools import lru_cache
from itertools import combinations
from math import comb
from pathlib import Path

import numpy as np

from .errors import DomainError, NumericalError, SizeError
from .network import NetworkState, trio_probabilities, trio_table
from .seeding import replica_rng

__all__ = [
    "DriftField",
    "LinearizationCheck",
    "MeanFieldLinearization",
    "LyapunovCertificate",
    "edge_list",
    "edge_distance",
    "drift",
    "mc_drift",
    "linearization_excess",
    "jacobian",
    "bj_coefficients",
    "mean_field_matrix",
    "reduced_matrix",
    "closed_form_eigenvalues",
    "left_eigenvectors",
    "spectrum",
    "spectrum_scan",
    "lyapunov_certificate",
    "recheck_certificate",
    "write_spectrum_csv",
    "write_json",
]

EXACT_DRIFT_MAX_N = 10
CERTIFICATE_MAX_N = 8
JOINT_MAX_N = 6  # K**N joint outcomes: 10**6 at N = 6
LAMBDA_EXPONENTS = range(0, 21)


# ---------------------------------------------------------------- geometry


def edge_list(N: int) -> tuple:
    return tuple(combinations(range(N), 2))


@lru_cache(maxsize=None)
def _distance_table(N: int) -> np.ndarray:
    E = edge_list(N)
    D = np.empty((len(E), len(E)), dtype=np.int64)
    for a, e in enumerate(E):
        for b, f in enumerate(E):
            D[a, b] = 2 - len(set(e) & set(f))
    D.setflags(write=False)
    return D


def edge_distance(N: int, e: int = 0) -> np.ndarray:
    """0 for ``e`` itself, 1 for edges sharing a vertex with it, 2 for disjoint edges."""
    return _distance_table(N)[e].copy()


# ------------------------------------------------------------------- drift


def _state_for(W, rule):
    return NetworkState(N=W.shape[0], x=0.5, t=0, weights=W, rule=rule)


@lru_cache(maxsize=None)
def _incidence(N: int) -> np.ndarray:
    """``(N, K, E)`` 0/1 array: edges reinforced when agent ``i`` picks its ``k``-th trio."""
    tab = trio_table(N)
    te = tab.trio_edges[tab.per_agent]
    E = comb(N, 2)
    A = np.zeros(te.shape[:2] + (E,))
    for c in range(3):
        np.put_along_axis(A, te[..., c : c + 1], 1.0, axis=2)
    A.setflags(write=False)
    return A


def _reinforcement_moments(W, rule, cov=False):
    """Exact mean (and optionally covariance) of the reinforcement vector ``R``."""
    N = W.shape[0]
    P = trio_probabilities(_state_for(W, rule))
    A = _incidence(N)
    per_agent = np.einsum("ik,ike->ie", P, A)
    mean = per_agent.sum(axis=0)
    if not cov:
        return mean, None
    second = np.einsum("ik,ike,ikf->ef", P, A, A)
    return mean, second - per_agent.T @ per_agent


def _next_normalized(W, S, R, x, decay_after_add):
    """Normalized state after adding ``R`` (rows of ``R`` may be replicates)."""
    N = W.shape[0]
    m = comb(N, 2)
    iu = np.triu_indices(N, 1)
    w = W[iu]
    if decay_after_add:
        return m * (w + R) / (S + 3 * N)
    return m * ((1 - x) * w + R) / ((1 - x) * S + 3 * N)


@dataclass(frozen=True)
class DriftField:
    """Expected one-step displacement of the normalized state.

    ``reinforcement`` is the raw ``E[R]``; ``value`` is ``E[a(t+1)] - a(t)``.
    ``value_se``/``reinforcement_se`` are set by :func:`mc_drift` only.
    """

    n: int
    x: float
    at: np.ndarray
    value: np.ndarray
    reinforcement: np.ndarray
    value_se: np.ndarray | None = None
    reinforcement_se: np.ndarray | None = None

    @property
    def mean_field(self) -> np.ndarray:
        """``F(a) = (n/6) E[R] - a``, the x-free mean field."""
        return self.n / 6 * self.reinforcement - self.at

    def to_dict(self) -> dict:
        out = {
            "n": self.n,
            "x": self.x,
            "at": self.at.tolist(),
            "value": self.value.tolist(),
            "reinforcement": self.reinforcement.tolist(),
        }
        if self.value_se is not None:
            out["value_se"] = self.value_se.tolist()
            out["reinforcement_se"] = self.reinforcement_se.tolist()
        return out


def _normalized(state):
    m = comb(state.N, 2)
    return m * state.edge_vector() / state.total


def drift(state: NetworkState) -> DriftField:
    """Exact expected displacement by enumerating every agent's trio law (``N <= 10``)."""
    if state.N > EXACT_DRIFT_MAX_N:
        raise SizeError(
            f"exact drift enumerates N * C(N-1, 2) trios and is limited to N <= {EXACT_DRIFT_MAX_N}; "
            f"got N = {state.N}, use mc_drift instead"
        )
    mean, _ = _reinforcement_moments(state.weights, state.rule)
    at = _normalized(state)
    nxt = _next_normalized(state.weights, state.total, mean, state.x, state.decay_after_add)
    return DriftField(n=state.N - 1, x=state.x, at=at, value=nxt - at, reinforcement=mean)


def mc_drift(state: NetworkState, replicates: int, rng: np.random.Generator, chunk: int = 100_000) -> DriftField:
    """Monte Carlo estimate of :func:`drift` with per-edge standard errors."""
    if replicates < 1000:
        raise DomainError(f"replicates must be >= 1000, got {replicates}")
    N = state.N
    tab = trio_table(N)
    P = trio_probabilities(state)
    cum = np.cumsum(P, axis=1)
    cum[:, -1] = 1.0
    E = comb(N, 2)
    at = _normalized(state)
    sums = np.zeros((2, E))
    sq = np.zeros((2, E))
    done = 0
    while done < replicates:
        b = min(chunk, replicates - done)
        U = rng.random((b, N))
        pos = (cum[None, :, :] <= U[:, :, None]).sum(axis=2)
        pos = np.minimum(pos, P.shape[1] - 1)
        edges = tab.trio_edges[tab.per_agent[np.arange(N), pos]]  # (b, N, 3)
        rows = np.repeat(np.arange(b), 3 * N)
        R = np.zeros((b, E))
        np.add.at(R, (rows, edges.reshape(-1)), 1.0)
        disp = _next_normalized(state.weights, state.total, R, state.x, state.decay_after_add) - at
        for k, arr in enumerate((disp, R)):
            sums[k] += arr.sum(axis=0)
            sq[k] += (arr * arr).sum(axis=0)
        done += b
    mean = sums / replicates
    var = np.maximum(sq / replicates - mean**2, 0.0) * replicates / (replicates - 1)
    se = np.sqrt(var / replicates)
    return DriftField(
        n=N - 1, x=state.x, at=at, value=mean[0], reinforcement=mean[1], value_se=se[0], reinforcement_se=se[1]
    )


# ---------------------------------------------------------- linearization


def bj_coefficients(n: int):
    """``(B0, B1, B2)`` for edges at distance 0, 1, 2 from the perturbed edge."""
    if n < 3:
        raise DomainError(f"n must be >= 3, got {n}")
    return 2 * (n - 2) / (3 * n), 0.0, -4 / (3 * n * (n - 1))


@dataclass(frozen=True)
class LinearizationCheck:
    """Excess reinforcement ``E[R_f] - 6/n`` at ``c + eps 1_e`` grouped by distance from ``e``."""

    N: int
    eps: float
    rule: str
    excess: dict
    spread: dict
    predicted: dict

    def residual(self, j: int) -> float:
        return abs(self.excess[j] - self.predicted[j])

    def to_dict(self) -> dict:
        return {
            "N": self.N,
            "eps": self.eps,
            "rule": self.rule,
            "excess": {str(k): v for k, v in self.excess.items()},
            "spread": {str(k): v for k, v in self.spread.items()},
            "predicted": {str(k): v for k, v in self.predicted.items()},
        }


def linearization_excess(N: int, eps: float, rule: str = "pairwise", edge: int = 0) -> LinearizationCheck:
    """Exact excess reinforcement after perturbing one edge weight by ``eps``.

    The closed-form ``B_j`` belong to the two-factor choice rule; under the
    three-factor rule the distance-1 excess is not zero.
    """
    if N > EXACT_DRIFT_MAX_N:
        raise SizeError(f"exact enumeration limited to N <= {EXACT_DRIFT_MAX_N}")
    n = N - 1
    E = edge_list(N)
    W = np.ones((N, N)) - np.eye(N)
    a, b = E[edge]
    W[a, b] += eps
    W[b, a] += eps
    mean, _ = _reinforcement_moments(W, rule)
    ex = mean - 6 / n
    dist = edge_distance(N, edge)
    B = bj_coefficients(n)
    excess, spread, predicted = {}, {}, {}
    for j in (0, 1, 2):
        vals = ex[dist == j]
        excess[j] = float(vals.mean())
        spread[j] = float(vals.max() - vals.min())
        predicted[j] = 6 / n * B[j] * eps
    return LinearizationCheck(N, float(eps), rule, excess, spread, predicted)


def jacobian(N: int, rule: str = "pairwise", h: float = 1e-5) -> np.ndarray:
    """Differential of ``(n/6) E[R]`` at ``c`` by central differences of the exact mean.

    For ``rule="pairwise"`` this reproduces ``M`` (``B0`` on the diagonal,
    ``B2`` for disjoint pairs) to roughly ``h**2``.
    """
    n = N - 1
    E = edge_list(N)
    J = np.empty((len(E), len(E)))
    base = np.ones((N, N)) - np.eye(N)
    for col, (a, b) in enumerate(E):
        cols = []
        for sgn in (1, -1):
            W = base.copy()
            W[a, b] += sgn * h
            W[b, a] += sgn * h
            cols.append(_reinforcement_moments(W, rule)[0])
        J[:, col] = n / 6 * (cols[0] - cols[1]) / (2 * h)
    return J


def mean_field_matrix(N: int) -> np.ndarray:
    """``M`` in closed form: ``B0 I + B2 D`` with ``D`` the disjoint-edge adjacency."""
    B0, _, B2 = bj_coefficients(N - 1)
    D = _distance_table(N)
    return np.where(D == 0, B0, 0.0) + np.where(D == 2, B2, 0.0)


def reduced_matrix(n: int) -> np.ndarray:
    """Action of ``M`` on coordinates ``(a2, a1, a0)`` of ``H2, H1, H0``, as a right-hand matrix for row vectors."""
    if n < 4:
        raise DomainError(f"reduced matrix needs n >= 4, got {n}")
    core = np.array(
        [
            [comb(n - 1, 2), 0, -1],
            [0, comb(n - 2, 2), -2 * (n - 3)],
            [-comb(n - 1, 2), -comb(n - 2, 2), 2 * n - 5],
        ],
        dtype=float,
    )
    return 4 / (3 * n * (n - 1)) * core


def closed_form_eigenvalues(n: int):
    return 0.0, 2 / 3 * (n + 1) * (n - 2) / (n * (n - 1)), 2 / 3 * (n - 3) / (n - 1)


def left_eigenvectors(n: int) -> np.ndarray:
    """Rows pair with :func:`closed_form_eigenvalues` in order."""
    return np.array([[1.0, 1.0, 1.0], [(n - 1) / 2, (n - 3) / 4, -1.0], [comb(n - 1, 2), -(n - 2) / 2, 1.0]])


@dataclass(frozen=True)
class MeanFieldLinearization:
    n: int
    B0: float
    B1: float
    B2: float
    reduced: np.ndarray
    eigenvalues: tuple
    numeric: tuple
    attracting: bool

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "B0": self.B0,
            "B1": self.B1,
            "B2": self.B2,
            "reduced": self.reduced.tolist(),
            "eigenvalues": list(self.eigenvalues),
            "numeric": list(self.numeric),
            "attracting": self.attracting,
        }


def spectrum(n: int, tol: float = 1e-9) -> MeanFieldLinearization:
    """Closed-form eigenvalues, cross-checked against a numeric eigensolve."""
    A = reduced_matrix(n)
    closed = closed_form_eigenvalues(n)
    ev = np.linalg.eigvals(A)
    if np.max(np.abs(ev.imag)) > tol:
        raise NumericalError(f"complex eigenvalues for n={n}: {ev}")
    numeric = np.sort(ev.real)
    gap = np.max(np.abs(numeric - np.sort(closed)))
    if gap > tol:
        raise NumericalError(f"closed-form and numeric eigenvalues differ by {gap:.3g} at n={n}")
    B0, B1, B2 = bj_coefficients(n)
    attracting = closed[1] < 1 and closed[2] < 1
    return MeanFieldLinearization(n, B0, B1, B2, A, closed, tuple(float(v) for v in numeric), attracting)


def spectrum_scan(n_values) -> list:
    """Rows ``(n, lambda2, lambda3, attracting)`` from the closed forms."""
    rows = []
    for n in n_values:
        _, l2, l3 = closed_form_eigenvalues(n)
        rows.append((int(n), l2, l3, bool(l2 < 1 and l3 < 1)))
    return rows


def write_spectrum_csv(path, rows) -> Path:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["n", "lambda2", "lambda3", "attracting"])
        for n, l2, l3, att in rows:
            wr.writerow([n, repr(float(l2)), repr(float(l3)), "true" if att else "false"])
    return path


# ------------------------------------------------------------- certificate


@dataclass(frozen=True)
class LyapunovCertificate:
    """Quadratic ``V(h) = V0 - h^T Q h`` with ``Q = gap * P`` and a tilt ``lam``.

    ``P`` projects onto the sum-zero subspace and ``gap = 1 - max`` nonzero
    eigenvalue of the linearization.  ``v_margins`` holds ``E[V'] - V`` and
    ``exp_margins`` holds ``E[exp(-lam (V' - V))] - 1`` per grid point.
    """

    n: int
    x: float
    rule: str
    radius: float
    center: np.ndarray
    gap: float
    V0: float
    lam: float | None
    gamma: float | None
    grid: np.ndarray
    v_margins: np.ndarray
    exp_margins: np.ndarray | None
    exp_method: str
    center_check: dict
    worst: dict
    seed: int
    verified: bool

    @property
    def grid_checked(self) -> int:
        return int(self.grid.shape[0])

    @property
    def quadratic(self) -> np.ndarray:
        E = self.center.size
        return self.gap * (np.eye(E) - np.full((E, E), 1.0 / E))

    def V(self, a) -> float:
        h = np.asarray(a, dtype=float) - self.center
        h = h - h.mean()
        return self.V0 - self.gap * float(h @ h)

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "x": self.x,
            "rule": self.rule,
            "radius": self.radius,
            "gap": self.gap,
            "V0": self.V0,
            "lambda": self.lam,
            "gamma": self.gamma,
            "grid_checked": self.grid_checked,
            "min_v_margin": float(self.v_margins.min()),
            "max_exp_margin": None if self.exp_margins is None else float(self.exp_margins.max()),
            "exp_method": self.exp_method,
            "center_check": self.center_check,
            "worst": self.worst,
            "seed": self.seed,
            "verified": self.verified,
        }


@lru_cache(maxsize=2)
def _joint_outcomes(N: int):
    """Unique joint reinforcement vectors and the map from each of the ``K**N`` choice tuples."""
    K = comb(N - 1, 2)
    A = _incidence(N)  # (N, K, E)
    idx = np.indices((K,) * N, dtype=np.int8).reshape(N, -1).T
    R = np.zeros((idx.shape[0], A.shape[2]), dtype=np.int8)
    for i in range(N):
        R += A[i].astype(np.int8)[idx[:, i]]
    uniq, inv = np.unique(R, axis=0, return_inverse=True)
    uniq = uniq.astype(float)
    for arr in (idx, uniq, inv):
        arr.setflags(write=False)
    return idx, uniq, inv.reshape(-1), (uniq * uniq).sum(axis=1)


def _gap(N, rule):
    if rule == "pairwise":
        top = max(closed_form_eigenvalues(N - 1)[1:]) if N >= 5 else max(np.linalg.eigvalsh(mean_field_matrix(N))[:-1])
        return 1.0 - top
    J = jacobian(N, rule)
    ev = np.linalg.eigvalsh((J + J.T) / 2)
    ev = ev[np.abs(ev) > 1e-6]  # drop the null direction along c
    top = ev.max()
    if top >= 1:
        raise DomainError(f"symmetric point is not attracting under rule {rule!r} (eigenvalue {top:.4g})")
    return 1.0 - top


def _grid(N, radius, count, seed):
    E = comb(N, 2)
    dist = edge_distance(N, 0)
    special = []
    for j in (0, 1, 2):
        v = (dist == j).astype(float)
        v -= v.mean()
        v /= np.linalg.norm(v)
        special += [v, -v]
    rng = replica_rng(seed, 11)
    G = rng.standard_normal((max(count - len(special), 0), E))
    G -= G.mean(axis=1, keepdims=True)
    G /= np.linalg.norm(G, axis=1, keepdims=True)
    H = np.vstack([np.array(special), G])[:count] * radius
    pts = 1.0 + H
    if (pts <= 0).any():
        raise DomainError(f"radius {radius} puts grid points outside the positive orthant")
    return pts


def _point_law(a, N, rule):
    # raw weights proportional to the normalized state give the same choice law
    W = np.zeros((N, N))
    iu = np.triu_indices(N, 1)
    W[iu] = a
    return W + W.T


def _v_margin(a, N, x, rule, gap):
    s = (N - 1) / 6
    mean, cov = _reinforcement_moments(_point_law(a, N, rule), rule, cov=True)
    d = a - 1.0
    d1 = (1 - x) * a + x * s * mean - 1.0
    d, d1 = d - d.mean(), d1 - d1.mean()
    trace = float(np.trace(cov)) - float(cov.sum()) / cov.shape[0]
    return -gap * (d1 @ d1 + (x * s) ** 2 * trace - d @ d)


def _delta_values(a, N, x, gap, uniq, R2):
    """``V' - V`` for every unique reinforcement vector (V0 cancels)."""
    s = (N - 1) / 6
    u = (1 - x) * a - 1.0
    d = a - 1.0
    d = d - d.mean()
    sq = u @ u + 2 * x * s * (uniq @ u) + (x * s) ** 2 * R2
    return -gap * (sq - d @ d)


def _exp_margins_exact(a, N, x, rule, gap, lams):
    idx, uniq, inv, R2 = _joint_outcomes(N)
    P = trio_probabilities(_state_for(_point_law(a, N, rule), rule))
    p = np.ones(idx.shape[0])
    for i in range(N):
        p *= P[i][idx[:, i]]
    pu = np.bincount(inv, weights=p, minlength=uniq.shape[0])
    delta = _delta_values(a, N, x, gap, uniq, R2)
    return np.array([float(pu @ np.expm1(-lam * delta)) for lam in lams])


def _exp_margins_hoeffding(a, N, x, rule, gap, lams, v_margin):
    # E exp(-lam D) <= exp(-lam E D + lam^2 width^2 / 8) for D in an interval of that width
    s = (N - 1) / 6
    A = _incidence(N)
    u = (1 - x) * a - 1.0
    per = A @ u  # (N, K)
    width_lin = float((per.max(axis=1) - per.min(axis=1)).sum())
    E = A.shape[2]
    width_sq = 9 * N * N - (3 * N) ** 2 / E
    width = gap * (2 * x * s * width_lin + (x * s) ** 2 * width_sq)
    return np.array([math.expm1(-lam * v_margin + lam * lam * width * width / 8) for lam in lams])


def lyapunov_certificate(
    n: int,
    x: float,
    radius: float,
    grid_resolution: int = 500,
    rule: str = "pairwise",
    seed: int = 0,
    x_max: float = 0.1,
) -> LyapunovCertificate:
    """Exact one-step check of a quadratic Lyapunov function on a shell around ``c``.

    Grid points sit at distance ``radius`` from ``c`` (normalized coordinates,
    sum-zero directions): the six signed ``H_j`` pattern directions plus
    uniformly random ones.  ``V0 = gap * radius**2 / 2`` so ``V`` is negative
    on the shell and beyond.  The first check is ``E[V'] > V`` at every grid
    point; only if it passes are ``lam = 2**-k`` (largest first) searched for
    ``E[exp(-lam V')] < exp(-lam V)`` everywhere.  That second check
    enumerates the joint law of all ``N`` choices for ``N <= 6`` and falls
    back to a Hoeffding bound for ``N`` of 7 or 8.

    Parameters
    ----------
    n : int
        ``N - 1``; requires ``N <= 8``.
    x : float
        Step scale, ``0 < x <= x_max``.
    radius : float
        Distance of the grid from ``c``.
    grid_resolution : int
        Number of grid points (at least 6).
    rule : {"triad", "pairwise"}
        Trio choice rule.
    seed : int
        Seed for the random grid directions.
    """
    N = n + 1
    if not 4 <= N <= CERTIFICATE_MAX_N:
        raise SizeError(f"certificate needs 4 <= N <= {CERTIFICATE_MAX_N}, got N = {N}")
    if not 0 < x <= x_max:
        raise DomainError(f"x must lie in (0, {x_max}], got {x}")
    if not radius > 0:
        raise DomainError(f"radius must be positive, got {radius}")
    if grid_resolution < 6:
        raise DomainError("grid_resolution must be >= 6")
    gap = _gap(N, rule)
    V0 = gap * radius**2 / 2
    grid = _grid(N, radius, grid_resolution, seed)
    v_margins = np.array([_v_margin(a, N, x, rule, gap) for a in grid])
    c = np.ones(comb(N, 2))
    center = {"v_margin": float(_v_margin(c, N, x, rule, gap))}
    lams = [2.0**-k for k in LAMBDA_EXPONENTS]
    method = "exact" if N <= JOINT_MAX_N else "hoeffding"
    v_ok = bool((v_margins > 0).all())
    exp_margins = None
    lam = None
    if v_ok:
        if method == "exact":
            table = np.array([_exp_margins_exact(a, N, x, rule, gap, lams) for a in grid])
        else:
            table = np.array([_exp_margins_hoeffding(a, N, x, rule, gap, lams, vm) for a, vm in zip(grid, v_margins)])
        passing = np.flatnonzero((table < 0).all(axis=0))
        col = int(passing[0]) if passing.size else len(lams) - 1
        exp_margins = table[:, col]
        if passing.size:
            lam = lams[col]
            if method == "exact":
                center["exp_margin"] = float(_exp_margins_exact(c, N, x, rule, gap, [lam])[0])
    if not v_ok:
        k = int(np.argmin(v_margins))
        worst = {"check": "mean", "index": k, "margin": float(v_margins[k]), "point": grid[k].tolist()}
    else:
        k = int(np.argmax(exp_margins))
        worst = {
            "check": "exponential",
            "index": k,
            "margin": float(exp_margins[k]),
            "lambda": lams[col],
            "point": grid[k].tolist(),
        }
    verified = v_ok and lam is not None
    return LyapunovCertificate(
        n=n,
        x=float(x),
        rule=rule,
        radius=float(radius),
        center=c,
        gap=float(gap),
        V0=float(V0),
        lam=lam,
        gamma=None if lam is None else lam * V0 / 4,
        grid=grid,
        v_margins=v_margins,
        exp_margins=exp_margins,
        exp_method=method,
        center_check=center,
        worst=worst,
        seed=int(seed),
        verified=bool(verified),
    )


def recheck_certificate(cert: LyapunovCertificate) -> bool:
    """Recompute every inequality of a verified certificate from scratch."""
    if not cert.verified:
        return False
    N = cert.n + 1
    _joint_outcomes.cache_clear()
    for a, vm in zip(cert.grid, cert.v_margins):
        fresh = _v_margin(a, N, cert.x, cert.rule, cert.gap)
        if not fresh > 0:
            return False
        if cert.exp_method == "exact":
            em = _exp_margins_exact(a, N, cert.x, cert.rule, cert.gap, [cert.lam])[0]
        else:
            em = _exp_margins_hoeffding(a, N, cert.x, cert.rule, cert.gap, [cert.lam], fresh)[0]
        if not em < 0:
            return False
    return True


def write_json(path, payload: dict) -> Path:
    path = Path(path)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path
