"""One-dimensional discounted walk, the discounted two-colour urn, and exit times.

The walk moves by ``x * Y`` with ``Y ~ Q_W`` while ``W`` stays in the closed
window ``I_x = [a_x, 1 - a_x]`` and halts at the first exit.  Positions are
tracked as ``w0 + x * k`` with ``k`` the running sum of offsets, which is
exact for integer-offset families.
"""
from __future__ import annotations

import csv
import json
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve

from .errors import ConfigurationError, ContractViolation, DomainError
from .increments import IncrementFamily
from .rate import RateProfile, build_profile, tilt_kernel
from .seeding import UniformStream, check_seed, replica_rng

__all__ = [
    "Walk1DConfig",
    "Walk1DState",
    "ExitResult",
    "ExitTimeSummary",
    "ExcursionSummary",
    "UrnState",
    "BirthDeathChain",
    "default_a_x",
    "default_max_steps",
    "step",
    "run_exit",
    "mc_exit",
    "naive_excursions",
    "importance_exit",
    "lattice_chain",
    "exact_exit_oracle",
    "exit_time_pmf",
    "urn_step",
    "urn_outcomes",
    "urn_drift",
    "write_runs_csv",
    "write_summary_json",
]

MAX_STEPS_CAP = 10**8
LOG_WEIGHT_LIMIT = 700.0


def default_a_x(family: IncrementFamily, x: float) -> float:
    return max(x * family.y_max, 0.02)


_C_CACHE: dict = {}


def default_max_steps(family: IncrementFamily, x: float) -> int:
    """``ceil(100 exp(1.5 C / x))`` clamped to 1e8."""
    key = (family.family_id, tuple(sorted(family.parameters.items())))
    if key not in _C_CACHE:
        _C_CACHE[key] = build_profile(family).C
    expo = 1.5 * _C_CACHE[key] / x
    if expo > math.log(MAX_STEPS_CAP / 100):
        return MAX_STEPS_CAP
    return min(MAX_STEPS_CAP, math.ceil(100 * math.exp(expo)))


@dataclass(frozen=True)
class Walk1DConfig:
    family: IncrementFamily
    x: float
    a_x: float
    w0: float = 0.5
    max_steps: int = 10**6

    def __post_init__(self):
        if not 0 < self.x < 1:
            raise ConfigurationError(f"x must lie in (0, 1), got {self.x}")
        if not 0 < self.a_x < 0.5:
            raise ConfigurationError(f"a_x must lie in (0, 1/2), got {self.a_x}")
        if self.a_x < self.x * self.family.y_max - self.slack:
            raise ConfigurationError(
                f"a_x={self.a_x} < x*y_max={self.x * self.family.y_max}: a step could leave [0, 1]"
            )
        if not self.inside(self.w0):
            raise ConfigurationError(f"w0={self.w0} is outside I_x=[{self.a_x}, {1 - self.a_x}]")
        if self.max_steps < 0:
            raise ConfigurationError("max_steps must be >= 0")

    @classmethod
    def create(cls, family, x, a_x=None, w0=0.5, max_steps=None):
        """Fill ``a_x`` and ``max_steps`` with their defaults when omitted."""
        if a_x is None:
            a_x = default_a_x(family, x)
        if max_steps is None:
            max_steps = default_max_steps(family, x)
        return cls(family=family, x=float(x), a_x=float(a_x), w0=float(w0), max_steps=int(max_steps))

    @property
    def slack(self) -> float:
        # absorbs rounding in w0 + x*k so lattice points on the boundary count as inside
        return 1e-9 * self.x

    def inside(self, w: float) -> bool:
        return self.a_x - self.slack <= w <= 1.0 - self.a_x + self.slack

    def describe(self) -> dict:
        return {
            "family_id": self.family.family_id,
            "parameters": dict(self.family.parameters),
            "x": self.x,
            "a_x": self.a_x,
            "w0": self.w0,
            "max_steps": self.max_steps,
        }


@dataclass(frozen=True)
class Walk1DState:
    w: float
    t: int = 0

    def __post_init__(self):
        if not 0 <= self.w <= 1:
            raise ContractViolation(f"walk state left [0, 1]: w={self.w}")


def step(state: Walk1DState, config: Walk1DConfig, rng: np.random.Generator) -> Walk1DState:
    if not config.inside(state.w):
        raise ContractViolation(f"step called outside I_x: w={state.w}")
    y = config.family.atoms(state.w).sample(rng)
    w = min(1.0, max(0.0, state.w + config.x * float(y)))
    return Walk1DState(w=w, t=state.t + 1)


@dataclass(frozen=True)
class ExitResult:
    tau: int
    side: str  # "low", "high" or "censored"
    w_final: float
    w_min: float
    w_max: float
    log_weight: float = 0.0


class _KernelCache:
    """Per-run memo of cumulative probabilities keyed by the lattice offset ``k``."""

    def __init__(self, config, kernel_fn=None):
        self.config = config
        self.kernel_fn = kernel_fn
        self.memo = {}

    def get(self, k):
        entry = self.memo.get(k)
        if entry is None:
            w = self.config.w0 + self.config.x * k
            if self.kernel_fn is None:
                a = self.config.family.atoms(w)
                lr = (0.0,) * len(a.offsets)
            else:
                kern = self.kernel_fn(w)
                a, lr = kern.atoms, kern.log_lr
            cum = a.cumulative()
            entry = (w, tuple(float(y) for y in a.offsets), cum, cum[-1], lr)
            self.memo[k] = entry
        return entry


def _draw(entry, u):
    _, offsets, cum, total, lr = entry
    target = u * total
    for j, c in enumerate(cum):
        if target < c:
            return offsets[j], lr[j]
    return offsets[-1], lr[-1]


def run_exit(config: Walk1DConfig, rng, cache=None) -> ExitResult:
    """Run from ``w0`` until ``W`` leaves ``I_x`` or ``max_steps`` is reached."""
    stream = rng if isinstance(rng, UniformStream) else UniformStream(rng)
    cache = cache or _KernelCache(config)
    x, w0 = config.x, config.w0
    k, t = 0.0, 0
    w = w0
    w_lo = w_hi = w0
    while t < config.max_steps:
        entry = cache.get(k)
        y, _ = _draw(entry, stream.next())
        k += y
        t += 1
        w = w0 + x * k
        w_lo, w_hi = min(w_lo, w), max(w_hi, w)
        if not config.inside(w):
            side = "low" if w < 0.5 else "high"
            return ExitResult(t, side, min(1.0, max(0.0, w)), w_lo, w_hi)
    return ExitResult(t, "censored", w, w_lo, w_hi)


@dataclass(frozen=True)
class ExitTimeSummary:
    n_runs: int
    estimator: str
    x: float
    mean_T: float
    se_T: float
    median_T: float
    min_T: int
    max_T: int
    censored: int
    seed: int
    lower_bound: bool = False
    config: dict = field(default_factory=dict)

    @property
    def rse(self) -> float:
        return self.se_T / self.mean_T if self.mean_T > 0 else math.inf

    def to_dict(self) -> dict:
        return asdict(self)


def _summarize(taus, censored, *, estimator, config, seed) -> ExitTimeSummary:
    taus = np.asarray(taus, dtype=np.int64)
    n = len(taus)
    mean_t = float(np.mean(taus))
    se = float(np.std(taus, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    if censored == n:
        warnings.warn("every run was censored; mean_T is only a lower bound", RuntimeWarning, stacklevel=3)
    return ExitTimeSummary(
        n_runs=n,
        estimator=estimator,
        x=config.x,
        mean_T=mean_t,
        se_T=se,
        median_T=float(np.median(taus)),
        min_T=int(taus.min()),
        max_T=int(taus.max()),
        censored=int(censored),
        seed=int(seed),
        lower_bound=censored > 0,
        config=config.describe(),
    )


def _exit_chunk(args):
    config, master_seed, indices = args
    cache = _KernelCache(config)
    return [run_exit(config, replica_rng(master_seed, i), cache) for i in indices]


def _map_replicas(fn, config, master_seed, n_runs, workers, extra=()):
    indices = list(range(n_runs))
    if workers <= 1 or n_runs < 2 * workers:
        return fn((config, master_seed, indices) + tuple(extra))
    chunks = [indices[i::workers] for i in range(workers)]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        parts = list(pool.map(fn, [(config, master_seed, c) + tuple(extra) for c in chunks]))
    # reassemble in run-index order so the result never depends on scheduling
    out = [None] * n_runs
    for chunk, part in zip(chunks, parts):
        for i, r in zip(chunk, part):
            out[i] = r
    return out


def mc_exit(config: Walk1DConfig, n_runs: int, master_seed: int, workers: int = 1, return_runs: bool = False):
    """Plain Monte Carlo estimate of the exit time from ``I_x``.

    Run ``i`` uses the stream keyed by ``(master_seed, i)``.
    """
    if n_runs < 1:
        raise DomainError("n_runs must be >= 1")
    check_seed(master_seed)
    runs = _map_replicas(_exit_chunk, config, master_seed, n_runs, workers)
    censored = sum(r.side == "censored" for r in runs)
    summary = _summarize([r.tau for r in runs], censored, estimator="naive", config=config, seed=master_seed)
    return (summary, runs) if return_runs else summary


@dataclass(frozen=True)
class ExcursionSummary:
    """Exit probability per excursion, plus the excursion-length summary.

    An excursion starts at ``w0``, and ends at the first exit from ``I_x``
    (a hit) or when ``W - 1/2`` changes sign relative to ``W(1) - 1/2`` or
    reaches 0 (a miss).  ``p_exit`` estimates the hit probability under the
    untilted law; tilted runs carry the weight ``dP/dP~``.
    """

    estimator: str
    delta: float | None
    x: float
    n_runs: int
    p_exit: float
    se: float
    ess: float
    total_steps: int
    discarded: int
    hits: int
    lengths: ExitTimeSummary

    @property
    def rse(self) -> float:
        return self.se / self.p_exit if self.p_exit > 0 else math.inf

    @property
    def work_normalized_rse(self) -> float:
        """Relative SE rescaled to a budget of one step per trajectory unit (``rse * sqrt(steps)``)."""
        return self.rse * math.sqrt(self.total_steps)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["rse"] = self.rse
        return d


def _run_excursion(config, stream, cache):
    x, w0 = config.x, config.w0
    k, t, log_w = 0.0, 0, 0.0
    side0 = 0.0
    w = w0
    while t < config.max_steps:
        entry = cache.get(k)
        y, lr = _draw(entry, stream.next())
        k += y
        t += 1
        log_w += lr
        w = w0 + x * k
        if not config.inside(w):
            return t, True, log_w
        d = w - 0.5
        if abs(d) <= config.slack:
            return t, False, log_w
        if t == 1:
            side0 = d
        elif d * side0 < 0:
            return t, False, log_w
    return t, False, log_w


def _excursion_chunk(args):
    config, master_seed, indices, profile, delta = args
    if profile is None:
        cache = _KernelCache(config)
    else:
        family = config.family
        cache = _KernelCache(config, lambda w: tilt_kernel(family, profile, w, delta, config.x))
    out = []
    for i in indices:
        out.append(_run_excursion(config, UniformStream(replica_rng(master_seed, i)), cache))
    return out


def _excursion_summary(results, *, config, master_seed, estimator, delta):
    n = len(results)
    lengths = [r[0] for r in results]
    log_w = np.array([r[2] for r in results])
    hit = np.array([r[1] for r in results], dtype=bool)
    keep = log_w <= LOG_WEIGHT_LIMIT
    discarded = int(np.count_nonzero(~keep))
    if discarded:
        msg = f"{discarded} of {n} runs discarded for likelihood-ratio overflow"
        warnings.warn(msg, RuntimeWarning, stacklevel=3)
    weights = np.where(keep, np.exp(np.minimum(log_w, LOG_WEIGHT_LIMIT)), 0.0)
    vals = weights * hit
    m = int(keep.sum())
    p = float(vals[keep].mean()) if m else math.nan
    se = float(vals[keep].std(ddof=1) / math.sqrt(m)) if m > 1 else math.nan
    wk = weights[keep]
    ess = float(wk.sum() ** 2 / np.sum(wk**2)) if m and np.sum(wk**2) > 0 else 0.0
    censored = sum(1 for r in results if not r[1] and r[0] >= config.max_steps)
    return ExcursionSummary(
        estimator=estimator,
        delta=delta,
        x=config.x,
        n_runs=n,
        p_exit=p,
        se=se,
        ess=ess,
        total_steps=int(sum(lengths)),
        discarded=discarded,
        hits=int(hit.sum()),
        lengths=_summarize(lengths, censored, estimator=estimator, config=config, seed=master_seed),
    )


def naive_excursions(
    config: Walk1DConfig, n_runs: int, master_seed: int, workers: int = 1, return_runs: bool = False
):
    """Untilted estimate of the per-excursion exit probability.

    With ``return_runs`` the per-run ``(steps, hit, log_weight)`` tuples come back too.
    """
    if n_runs < 1:
        raise DomainError("n_runs must be >= 1")
    check_seed(master_seed)
    res = _map_replicas(_excursion_chunk, config, master_seed, n_runs, workers, extra=(None, None))
    summary = _excursion_summary(res, config=config, master_seed=master_seed, estimator="naive", delta=None)
    return (summary, res) if return_runs else summary


def importance_exit(
    config: Walk1DConfig,
    profile: RateProfile,
    delta: float,
    n_runs: int,
    master_seed: int,
    workers: int = 1,
    return_runs: bool = False,
):
    """Exit probability per excursion under the tilted law, reweighted by ``dP/dP~``.

    Each step is drawn from :func:`trapping.rate.tilt_kernel` at the current
    state and contributes its exact log likelihood ratio.  With
    ``delta = -1`` the tilt is the identity and the result coincides with
    :func:`naive_excursions` under the same seed.
    """
    if profile.family_id != config.family.family_id or profile.parameters != config.family.parameters:
        raise ConfigurationError("rate profile was built for a different family")
    if n_runs < 1:
        raise DomainError("n_runs must be >= 1")
    check_seed(master_seed)
    res = _map_replicas(_excursion_chunk, config, master_seed, n_runs, workers, extra=(profile, delta))
    summary = _excursion_summary(
        res, config=config, master_seed=master_seed, estimator=f"tilted({delta:g})", delta=float(delta)
    )
    return (summary, res) if return_runs else summary


@dataclass(frozen=True)
class BirthDeathChain:
    """Interior states of a finite walk with one-step exit probabilities."""

    states: np.ndarray
    P: object  # interior -> interior transition matrix (dense or sparse)
    exit_low: np.ndarray
    exit_high: np.ndarray
    start: int = 0

    @property
    def size(self) -> int:
        return len(self.states)


def lattice_chain(config: Walk1DConfig) -> BirthDeathChain:
    """Finite chain induced on the lattice ``w0 + x k`` inside ``I_x``."""
    fam = config.family
    if not fam.integer_offsets:
        raise DomainError("lattice_chain needs integer offsets")
    x, w0 = config.x, config.w0
    k_lo = -math.floor((w0 - config.a_x + config.slack) / x)
    k_hi = math.floor((1 - config.a_x - w0 + config.slack) / x)
    ks = list(range(k_lo, k_hi + 1))
    if len(ks) > 10**4:
        raise DomainError(f"lattice has {len(ks)} states; limit is 10^4")
    index = {k: i for i, k in enumerate(ks)}
    rows, cols, vals = [], [], []
    lo_p = np.zeros(len(ks))
    hi_p = np.zeros(len(ks))
    for i, k in enumerate(ks):
        w = w0 + x * k
        for y, p in fam.atoms(w).pairs():
            j = index.get(k + int(y))
            if j is None:
                if (w + x * float(y)) < 0.5:
                    lo_p[i] += float(p)
                else:
                    hi_p[i] += float(p)
            elif p > 0:
                rows.append(i)
                cols.append(j)
                vals.append(float(p))
    P = sp.csr_matrix((vals, (rows, cols)), shape=(len(ks), len(ks)))
    states = np.array([w0 + x * k for k in ks])
    return BirthDeathChain(states=states, P=P, exit_low=lo_p, exit_high=hi_p, start=index[0])


def exact_exit_oracle(chain) -> np.ndarray:
    """Expected exit times ``h`` from every interior state, solving ``(I - P) h = 1``.

    ``chain`` is a :class:`BirthDeathChain` or a (sub)stochastic interior
    transition matrix.
    """
    P = chain.P if isinstance(chain, BirthDeathChain) else chain
    P = sp.csr_matrix(P, dtype=float)
    n = P.shape[0]
    if n == 0 or n > 10**4 or P.shape != (n, n):
        raise DomainError(f"interior matrix must be square with 1..10^4 states, got {P.shape}")
    row_sums = np.asarray(P.sum(axis=1)).ravel()
    if np.any(row_sums > 1 + 1e-12) or P.min() < 0:
        raise DomainError("interior rows must be nonnegative with sums <= 1")
    A = (sp.identity(n, format="csc") - P.tocsc()).tocsc()
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        try:
            h = spsolve(A, np.ones(n))
        except Exception as exc:
            raise DomainError(f"no absorption reachable: {exc}") from None
    h = np.atleast_1d(h)
    if not np.all(np.isfinite(h)) or np.any(h < 1 - 1e-9):
        raise DomainError("singular first-step system: absorption is not reachable from every state")
    resid = np.max(np.abs(A @ h - 1.0))
    if resid > 1e-10 * max(1.0, np.max(h)):
        raise DomainError(f"first-step system badly conditioned (residual {resid:g})")
    return h


def exit_time_pmf(chain: BirthDeathChain, t_max: int) -> np.ndarray:
    """``P(T = t)`` for ``t = 1..t_max`` starting from ``chain.start``."""
    P = sp.csr_matrix(chain.P)
    exit_p = chain.exit_low + chain.exit_high
    dist = np.zeros(chain.size)
    dist[chain.start] = 1.0
    out = np.empty(t_max)
    for t in range(t_max):
        out[t] = dist @ exit_p
        dist = P.T @ dist
    return out


@dataclass(frozen=True)
class UrnState:
    red: float
    black: float
    t: int = 0

    def __post_init__(self):
        if self.red < 0 or self.black < 0 or self.red + self.black <= 0:
            raise DomainError(f"urn weights must be nonnegative with positive total: {self}")

    @property
    def total(self) -> float:
        return self.red + self.black

    @property
    def w(self) -> float:
        return self.red / (self.red + self.black)


def urn_outcomes(w: float):
    """(added red, added black, probability) for two draws with replacement."""
    return [(1, 0, w * w), (0, 1, (1 - w) * (1 - w)), (1, 1, 2 * w * (1 - w))]


def urn_step(state: UrnState, x: float, rng) -> UrnState:
    """Draw two balls; same colour adds one of it, mixed adds one of each; then discount by ``1 - x``."""
    w = state.w
    first = rng.random() < w
    second = rng.random() < w
    if first and second:
        dr, db = 1, 0
    elif not first and not second:
        dr, db = 0, 1
    else:
        dr, db = 1, 1
    keep = 1.0 - x
    return UrnState(red=keep * (state.red + dr), black=keep * (state.black + db), t=state.t + 1)


def urn_drift(w: float, total: float) -> float:
    """Exact expected one-step change of the red fraction at total weight ``total``."""
    red = w * total
    return sum(p * ((red + dr) / (total + dr + db) - w) for dr, db, p in urn_outcomes(w))


def write_runs_csv(path, runs) -> Path:
    """One row per run: run_id, tau, side, log_weight."""
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["run_id", "tau", "side", "log_weight"])
        for i, r in enumerate(runs):
            if isinstance(r, ExitResult):
                writer.writerow([i, r.tau, r.side, repr(float(r.log_weight))])
            else:
                tau, hit, log_w = r
                writer.writerow([i, tau, "exit" if hit else "return", repr(float(log_w))])
    return path


def write_summary_json(path, summary) -> Path:
    path = Path(path)
    path.write_text(json.dumps(summary.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path
