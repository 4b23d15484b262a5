"""Three's Company: trio formation with discounted uniform reinforcement.

Each step every agent picks a trio containing itself, all picks made from the
same pre-step weights.  Under the default ``rule="triad"`` the trio
``{i, j, k}`` is chosen with probability proportional to
``W(i,j) W(i,k) W(j,k)``; ``rule="pairwise"`` drops the ``W(j,k)`` factor.
Each picked trio adds 1 to its three pair weights and the old weights decay
by ``1 - x``::

    W(t+1) = (1 - x) W(t) + increments

so the unordered total obeys ``S(t+1) = (1 - x) S(t) + 3N``.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, replace
from functools import lru_cache
from itertools import combinations
from math import comb
from pathlib import Path

import numpy as np

from .errors import DegenerateAgentError, DomainError

__all__ = [
    "NetworkState",
    "TrioChoice",
    "PartitionReport",
    "TrapRun",
    "init_state",
    "trio_table",
    "trio_probabilities",
    "trio_distribution",
    "step",
    "detect_partition",
    "run_until_trap",
    "write_log_csv",
    "write_report_json",
]

RULES = ("triad", "pairwise")
ALLOWED_BLOCKS = frozenset({3, 4, 5})


@dataclass(frozen=True)
class NetworkState:
    N: int
    x: float
    t: int
    weights: np.ndarray
    rule: str = "triad"
    decay_after_add: bool = False

    def __post_init__(self):
        if self.rule not in RULES:
            raise DomainError(f"rule must be one of {RULES}, got {self.rule!r}")
        if self.weights.shape != (self.N, self.N):
            raise DomainError("weights must be N x N")

    @property
    def total(self) -> float:
        """Unordered total ``sum_{i<j} W(i, j)``."""
        iu = np.triu_indices(self.N, 1)
        return float(self.weights[iu].sum())

    def edge_vector(self) -> np.ndarray:
        iu = np.triu_indices(self.N, 1)
        return self.weights[iu].copy()


@dataclass(frozen=True)
class TrioChoice:
    chooser: int
    members: frozenset

    def __post_init__(self):
        if len(self.members) != 3 or self.chooser not in self.members:
            raise ValueError(f"illegal trio {sorted(self.members)} for chooser {self.chooser}")


@dataclass(frozen=True)
class TrioTable:
    """Index arrays shared by every state with the same ``N``."""

    N: int
    trios: np.ndarray  # (K_total, 3) sorted member triples
    per_agent: np.ndarray  # (N, K) trio indices containing each agent
    partners: np.ndarray  # (N, K, 2) the two other members, ascending
    edge_index: np.ndarray  # (N, N) position of pair (i, j) in the edge vector
    trio_edges: np.ndarray  # (K_total, 3) edge positions of each trio's pairs


@lru_cache(maxsize=None)
def trio_table(N: int) -> TrioTable:
    trios = np.array(list(combinations(range(N), 3)), dtype=np.int64)
    per_agent = np.array([np.flatnonzero((trios == i).any(axis=1)) for i in range(N)])
    partners = np.empty(per_agent.shape + (2,), dtype=np.int64)
    for i in range(N):
        mem = trios[per_agent[i]]
        partners[i] = mem[mem != i].reshape(-1, 2)
    edge_index = -np.ones((N, N), dtype=np.int64)
    for e, (a, b) in enumerate(combinations(range(N), 2)):
        edge_index[a, b] = edge_index[b, a] = e
    trio_edges = np.stack(
        [edge_index[trios[:, 0], trios[:, 1]], edge_index[trios[:, 0], trios[:, 2]], edge_index[trios[:, 1], trios[:, 2]]],
        axis=1,
    )
    for arr in (trios, per_agent, partners, edge_index, trio_edges):
        arr.setflags(write=False)
    return TrioTable(N, trios, per_agent, partners, edge_index, trio_edges)


def init_state(N: int, x: float, mode: str = "unit", rule: str = "triad", decay_after_add: bool = False) -> NetworkState:
    """All off-diagonal weights 1 (``unit``) or scaled so the total is ``3N/x`` (``stationary``)."""
    if N < 4:
        raise DomainError(f"N must be >= 4, got {N}")
    if not 0 < x < 1:
        raise DomainError(f"x must lie in (0, 1), got {x}")
    W = np.ones((N, N)) - np.eye(N)
    if mode == "stationary":
        W *= (3 * N / x) / comb(N, 2)
    elif mode != "unit":
        raise DomainError(f"mode must be 'unit' or 'stationary', got {mode!r}")
    return NetworkState(N=N, x=float(x), t=0, weights=W, rule=rule, decay_after_add=decay_after_add)


def _trio_weights(state: NetworkState) -> np.ndarray:
    tab = trio_table(state.N)
    W = state.weights
    i = np.arange(state.N)[:, None]
    j, k = tab.partners[..., 0], tab.partners[..., 1]
    prod = W[i, j] * W[i, k]
    if state.rule == "triad":
        prod = prod * W[j, k]
    return prod


def trio_probabilities(state: NetworkState) -> np.ndarray:
    """``(N, K)`` choice probabilities; row ``i`` indexes ``trio_table(N).per_agent[i]``."""
    prod = _trio_weights(state)
    tot = prod.sum(axis=1)
    bad = np.flatnonzero(~(tot > 0))
    if bad.size:
        raise DegenerateAgentError(int(bad[0]))
    return prod / tot[:, None]


def trio_distribution(state: NetworkState, i: int):
    """List of ``(TrioChoice, probability)`` over all trios containing agent ``i``."""
    if not 0 <= i < state.N:
        raise DomainError(f"agent {i} outside 0..{state.N - 1}")
    prod = _trio_weights(state)[i]
    tot = prod.sum()
    if not tot > 0:
        raise DegenerateAgentError(i)
    tab = trio_table(state.N)
    return [
        (TrioChoice(i, frozenset(int(m) for m in tab.trios[t])), float(p / tot))
        for t, p in zip(tab.per_agent[i], prod)
    ]


def _sample_trios(state, u):
    """Chosen trio index per agent, one uniform each (inverse CDF)."""
    prod = _trio_weights(state)
    cum = np.cumsum(prod, axis=1)
    tot = cum[:, -1]
    bad = np.flatnonzero(~(tot > 0))
    if bad.size:
        raise DegenerateAgentError(int(bad[0]))
    pos = (cum <= (u * tot)[:, None]).sum(axis=1)
    pos = np.minimum(pos, prod.shape[1] - 1)
    return trio_table(state.N).per_agent[np.arange(state.N), pos]


def _apply(state, chosen):
    tab = trio_table(state.N)
    mem = tab.trios[chosen]
    inc = np.zeros((state.N, state.N))
    for a, b in ((0, 1), (0, 2), (1, 2)):
        np.add.at(inc, (mem[:, a], mem[:, b]), 1.0)
    inc = inc + inc.T
    keep = 1.0 - state.x
    W = keep * (state.weights + inc) if state.decay_after_add else keep * state.weights + inc
    return replace(state, t=state.t + 1, weights=W)


def step(state: NetworkState, rng: np.random.Generator):
    """One simultaneous round: returns the new state and the ``N`` trio choices."""
    chosen = _sample_trios(state, rng.random(state.N))
    tab = trio_table(state.N)
    choices = [TrioChoice(i, frozenset(int(m) for m in tab.trios[c])) for i, c in enumerate(chosen)]
    return _apply(state, chosen), choices


@dataclass(frozen=True)
class PartitionReport:
    trapped: bool
    blocks: list
    block_sizes: list
    detected_at: int | None
    cross_weight_fraction: float

    def to_dict(self) -> dict:
        return {
            "trapped": self.trapped,
            "blocks": [list(b) for b in self.blocks],
            "block_sizes": list(self.block_sizes),
            "detected_at": self.detected_at,
            "cross_weight_fraction": self.cross_weight_fraction,
        }


def _component_labels(W, cutoff):
    """Label of each agent = smallest agent index in its threshold component."""
    N = W.shape[0]
    reach = (W >= cutoff) | np.eye(N, dtype=bool)
    for _ in range(max(1, int(np.ceil(np.log2(N))))):
        reach = (reach.astype(np.int64) @ reach.astype(np.int64)) > 0
    return np.argmax(reach, axis=1)


def _blocks(labels):
    groups = {}
    for i, lab in enumerate(labels):
        groups.setdefault(int(lab), []).append(i)
    return [tuple(g) for _, g in sorted(groups.items())]


def _as_members(entry):
    """Normalize one history step to an ``(m, 3)`` array of trio members."""
    if isinstance(entry, np.ndarray):
        return entry
    return np.array([sorted(c.members) if isinstance(c, TrioChoice) else sorted(c) for c in entry], dtype=np.int64)


def _within(labels, members):
    lab = labels[members]
    return bool(np.all((lab[:, 0] == lab[:, 1]) & (lab[:, 1] == lab[:, 2])))


def detect_partition(state: NetworkState, threshold: float = 1e-4, history=(), persistence: int = 200) -> PartitionReport:
    """Threshold-graph partition and trap test.

    Agents ``i, j`` are linked when ``W(i, j) >= threshold * S / C(N, 2)``.
    The state counts as trapped when every component has size 3, 4 or 5 and
    the last ``persistence`` entries of ``history`` (one list of trio
    choices per step) contain no trio spanning two components.  A history
    shorter than ``persistence`` never counts as trapped.
    """
    if not 0 < threshold < 1:
        raise DomainError("threshold must lie in (0, 1)")
    if persistence < 1:
        raise DomainError("persistence must be >= 1")
    N = state.N
    S = state.total
    labels = _component_labels(state.weights, threshold * S / comb(N, 2))
    blocks = _blocks(labels)
    sizes = sorted(len(b) for b in blocks)
    cross = labels[:, None] != labels[None, :]
    cross_frac = float(state.weights[cross].sum() / 2 / S) if S > 0 else 0.0
    window = list(history)[-persistence:]
    trapped = (
        all(s in ALLOWED_BLOCKS for s in sizes)
        and len(window) >= persistence
        and all(_within(labels, _as_members(h)) for h in window)
    )
    return PartitionReport(
        trapped=trapped,
        blocks=blocks,
        block_sizes=sizes,
        detected_at=state.t if trapped else None,
        cross_weight_fraction=cross_frac,
    )


@dataclass
class TrapRun:
    report: PartitionReport
    steps_taken: int
    log: list = field(default_factory=list)  # rows (t, S_t, cross_weight_fraction, trapped)
    trios: list = field(default_factory=list)  # (t, members array) at the log stride
    final_state: NetworkState | None = None


def run_until_trap(
    state: NetworkState,
    max_steps: int,
    threshold: float = 1e-4,
    persistence: int = 200,
    rng: np.random.Generator | None = None,
    log_stride: int = 0,
    block: int = 1024,
) -> TrapRun:
    """Iterate :func:`step` until :func:`detect_partition` reports a trap or ``max_steps`` pass.

    ``log_stride > 0`` records ``(t, S_t, cross_weight_fraction, trapped)``
    and the trio choices every ``log_stride`` steps (and at the trap).
    The loop runs in a compiled kernel that reproduces :func:`step` exactly.
    """
    from ._kernels import trap_block

    if rng is None:
        raise DomainError("an explicit random generator is required")
    if not 0 < threshold < 1 or persistence < 1:
        raise DomainError("need 0 < threshold < 1 and persistence >= 1")
    N = state.N
    tab = trio_table(N)
    W = np.array(state.weights, dtype=float, copy=True)
    hist = np.zeros((persistence, N, 3), dtype=np.int64)
    ctr = np.zeros(6, dtype=np.int64)
    ctr[3] = state.t
    labels_prev = np.zeros(N, dtype=np.int64)
    run = TrapRun(report=None, steps_taken=0)
    rel = threshold / comb(N, 2)
    done, trapped = 0, False
    while done < max_steps and not trapped:
        b = min(block, max_steps - done)
        U = rng.random((b, N))
        n_log = b if log_stride else 1
        log_out = np.zeros((n_log, 4))
        trio_out = np.zeros((n_log, N), dtype=np.int64)
        ctr[5] = 0
        n, trapped = trap_block(
            W, state.x, state.decay_after_add, state.rule == "triad", tab.partners, tab.per_agent,
            tab.trios, U, rel, hist, ctr, labels_prev, log_stride, log_out, trio_out,
        )
        if n < 0:
            raise DegenerateAgentError(int(-n - 1))
        done += n
        for row, chosen in zip(log_out[: ctr[5]], trio_out[: ctr[5]]):
            run.log.append((int(row[0]), float(row[1]), float(row[2]), bool(row[3])))
            run.trios.append((int(row[0]), tab.trios[chosen]))
    final = replace(state, t=int(ctr[3]), weights=W)
    k = int(min(ctr[1], persistence))
    order = [(int(ctr[0]) - k + j) % persistence for j in range(k)]
    history = [hist[i] for i in order]
    run.report = detect_partition(final, threshold, history, persistence)
    run.steps_taken = done
    run.final_state = final
    return run


def write_log_csv(path, log) -> Path:
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["t", "S_t", "cross_weight_fraction", "trapped_flag"])
        for t, S, cf, tr in log:
            writer.writerow([t, repr(float(S)), repr(float(cf)), int(tr)])
    return path


def write_report_json(path, report: PartitionReport, *, seed, parameters) -> Path:
    path = Path(path)
    payload = dict(report.to_dict(), seed=seed, parameters=parameters)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path
