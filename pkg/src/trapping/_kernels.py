"""Compiled inner loop for long Three's Company runs.

Consumes uniforms in exactly the order :func:`trapping.network.step` does
(one per agent per step, agents in index order) and uses the same
arithmetic, so trajectories match the NumPy path bit for bit.
"""
import numpy as np
from numba import njit


@njit(cache=True)
def _labels(W, cutoff, out):
    N = W.shape[0]
    parent = np.arange(N)
    for i in range(N):
        for j in range(i + 1, N):
            if W[i, j] >= cutoff:
                a = i
                while parent[a] != a:
                    a = parent[a]
                b = j
                while parent[b] != b:
                    b = parent[b]
                if a != b:
                    if a < b:
                        parent[b] = a
                    else:
                        parent[a] = b
    for i in range(N):
        a = i
        while parent[a] != a:
            a = parent[a]
        out[i] = a


@njit(cache=True)
def _within(labels, mem):
    for r in range(mem.shape[0]):
        a = labels[mem[r, 0]]
        if labels[mem[r, 1]] != a or labels[mem[r, 2]] != a:
            return False
    return True


@njit(cache=True)
def _valid_sizes(labels, sizes):
    N = labels.shape[0]
    sizes[:] = 0
    for i in range(N):
        sizes[labels[i]] += 1
    for i in range(N):
        s = sizes[i]
        if s != 0 and (s < 3 or s > 5):
            return False
    return True


@njit(cache=True)
def trap_block(W, x, decay_after_add, triad, partners, per_agent, trios, U, rel_cutoff,
               hist, ctr, labels_prev, log_stride, log_out, trio_out):
    """Advance up to ``U.shape[0]`` steps in place.

    ``ctr`` holds ``[hist_pos, hist_len, streak, t, have_prev, n_logged]``.
    Returns ``(steps_done, trapped)``.
    """
    N = W.shape[0]
    K = per_agent.shape[1]
    persistence = hist.shape[0]
    keep = 1.0 - x
    prods = np.empty(K)
    chosen = np.empty(N, dtype=np.int64)
    inc = np.zeros((N, N))
    labels = np.empty(N, dtype=np.int64)
    sizes = np.empty(N, dtype=np.int64)
    members = np.empty((N, 3), dtype=np.int64)
    for s in range(U.shape[0]):
        for i in range(N):
            tot = 0.0
            for k in range(K):
                j = partners[i, k, 0]
                l = partners[i, k, 1]
                p = W[i, j] * W[i, l]
                if triad:
                    p = p * W[j, l]
                prods[k] = p
            cum = 0.0
            cums = np.empty(K)
            for k in range(K):
                cum += prods[k]
                cums[k] = cum
            if not (cum > 0):
                return -(i + 1), False
            target = U[s, i] * cum
            pos = 0
            for k in range(K):
                if cums[k] <= target:
                    pos += 1
            if pos > K - 1:
                pos = K - 1
            chosen[i] = per_agent[i, pos]
        inc[:, :] = 0.0
        for i in range(N):
            a = trios[chosen[i], 0]
            b = trios[chosen[i], 1]
            c = trios[chosen[i], 2]
            members[i, 0] = a
            members[i, 1] = b
            members[i, 2] = c
            inc[a, b] += 1.0
            inc[a, c] += 1.0
            inc[b, c] += 1.0
        inc2 = inc + inc.T
        if decay_after_add:
            for i in range(N):
                for j in range(N):
                    W[i, j] = keep * (W[i, j] + inc2[i, j])
        else:
            for i in range(N):
                for j in range(N):
                    W[i, j] = keep * W[i, j] + inc2[i, j]
        ctr[3] += 1

        hp = ctr[0]
        hist[hp] = members
        ctr[0] = (hp + 1) % persistence
        if ctr[1] < persistence:
            ctr[1] += 1

        S = 0.0
        for i in range(N):
            for j in range(i + 1, N):
                S += W[i, j]
        _labels(W, rel_cutoff * S, labels)
        valid = _valid_sizes(labels, sizes)
        streak = ctr[2]
        if not valid:
            streak = 0
        else:
            same = ctr[4] == 1
            if same:
                for i in range(N):
                    if labels[i] != labels_prev[i]:
                        same = False
                        break
            if same:
                if _within(labels, members):
                    streak += 1
                else:
                    streak = 0
            else:
                streak = 0
                n_h = ctr[1]
                for back in range(n_h):
                    idx = (ctr[0] - 1 - back) % persistence
                    if not _within(labels, hist[idx]):
                        break
                    streak += 1
        ctr[2] = streak
        labels_prev[:] = labels
        ctr[4] = 1
        trapped = streak >= persistence

        if log_stride > 0 and (ctr[3] % log_stride == 0 or trapped):
            cross = 0.0
            for i in range(N):
                for j in range(i + 1, N):
                    if labels[i] != labels[j]:
                        cross += W[i, j]
            row = ctr[5]
            log_out[row, 0] = ctr[3]
            log_out[row, 1] = S
            log_out[row, 2] = cross / S
            log_out[row, 3] = 1.0 if trapped else 0.0
            for i in range(N):
                trio_out[row, i] = chosen[i]
            ctr[5] += 1
        if trapped:
            return s + 1, True
    return U.shape[0], False
