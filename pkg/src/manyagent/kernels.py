"""Dense configuration-distribution kernels.

The distribution over counts is kept as a dense tensor with one axis per
neighborhood pair; the dummy count is implied by the number of agents
added so far.  Agents are folded in one at a time.

Set ``MANYAGENT_PURE_NUMPY=1`` to bypass numba and use the vectorized
numpy path.
"""
from __future__ import annotations

import os

import numpy as np

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

USE_NUMBA = numba is not None and os.environ.get("MANYAGENT_PURE_NUMPY", "") not in ("1", "true", "yes")


def accumulate_numpy(slot_probs: np.ndarray, n_slots: int, prune: float = 0.0) -> np.ndarray:
    """Fold agents into the count tensor with shifted slice additions."""
    L = n_slots
    cur = np.ones((1,) * L)
    for p in slot_probs:
        side = cur.shape[0] if L else 0
        new = np.zeros((side + 1,) * L)
        core = (slice(0, side),) * L
        new[core] += cur * p[L]
        for l in range(L):
            if p[l] == 0.0:
                continue
            sl = list(core)
            sl[l] = slice(1, side + 1)
            new[tuple(sl)] += cur * p[l]
        if prune > 0.0:
            new[new < prune] = 0.0
        cur = new
    return cur


if numba is not None:

    @numba.njit(cache=True, nogil=True)
    def _accumulate_flat(slot_probs, L, prune):
        n = slot_probs.shape[0]
        cur = np.ones(1)
        side = 1
        weights = np.empty(L, dtype=np.int64)
        for j in range(n):
            new_side = side + 1
            size = 1
            for _ in range(L):
                size *= new_side
            new = np.zeros(size)
            # slot l is axis l, most significant first
            w = 1
            for l in range(L - 1, -1, -1):
                weights[l] = w
                w *= new_side
            p = slot_probs[j]
            for idx in range(cur.shape[0]):
                v = cur[idx]
                if v == 0.0:
                    continue
                rem = idx
                dst = 0
                mult = 1
                for _ in range(L):
                    dst += (rem % side) * mult
                    rem //= side
                    mult *= new_side
                new[dst] += v * p[L]
                for l in range(L):
                    pl = p[l]
                    if pl != 0.0:
                        new[dst + weights[l]] += v * pl
            if prune > 0.0:
                for idx in range(size):
                    if new[idx] < prune:
                        new[idx] = 0.0
            cur = new
            side = new_side
        return cur

    def accumulate_numba(slot_probs: np.ndarray, n_slots: int, prune: float = 0.0) -> np.ndarray:
        sp = np.ascontiguousarray(slot_probs, dtype=np.float64).reshape(-1, n_slots + 1)
        flat = _accumulate_flat(sp, n_slots, float(prune))
        side = sp.shape[0] + 1
        return flat.reshape((side,) * n_slots)

else:  # pragma: no cover
    accumulate_numba = None


def accumulate(slot_probs: np.ndarray, n_slots: int, prune: float = 0.0) -> np.ndarray:
    """Dense distribution over the first ``n_slots`` counts after folding in
    every row of ``slot_probs`` (one row per agent, last column = dummy)."""
    slot_probs = np.asarray(slot_probs, dtype=np.float64).reshape(-1, n_slots + 1)
    if USE_NUMBA:
        return accumulate_numba(slot_probs, n_slots, prune)
    return accumulate_numpy(slot_probs, n_slots, prune)


# -- naive joint-enumeration kernels ---------------------------------------------------
#
# The unstructured baseline: states are atomic, so every expectation over the
# others' joint action is taken afresh for each (s, s') or (s, s', omega)
# entry instead of once per factor value.  NaiveEngine's numpy path performs
# the same arithmetic in vectorized form.

if numba is not None:

    @numba.njit(cache=True, nogil=True)
    def naive_weights(rows, pi, mprofiles, aprofiles, live):
        """W[i, p] = sum_m prod_j b_j(m_j | s_i) Pr(a_j | m_j)."""
        n_live = live.shape[0]
        P, N = aprofiles.shape
        W = np.zeros((n_live, P))
        for i in range(n_live):
            s = live[i]
            for q in range(mprofiles.shape[0]):
                wm = 1.0
                for j in range(N):
                    wm *= rows[j, s, mprofiles[q, j]]
                if wm == 0.0:
                    continue
                for p in range(P):
                    w = wm
                    for j in range(N):
                        w *= pi[j, mprofiles[q, j], aprofiles[p, j]]
                    W[i, p] += w
        return W

    @numba.njit(cache=True, nogil=True)
    def naive_predict(bl, W, Tt, Ot, st_live, st, ot, joint):
        """Pr(s', omega) summed over live s and every joint action."""
        S, K = st.shape
        nW = ot.shape[0]
        n_live, P = W.shape
        out = np.zeros((S, nW))
        TT = np.empty(P)
        for i in range(n_live):
            for t in range(S):
                if joint:
                    for p in range(P):
                        v = bl[i] * W[i, p]
                        for k in range(K):
                            v *= Tt[k, st_live[i, k], st[t, k], p]
                        TT[p] = v
                    for w in range(nW):
                        acc = 0.0
                        for p in range(P):
                            v = TT[p]
                            for k in range(K):
                                v *= Ot[k, st[t, k], ot[w, k], p]
                            acc += v
                        out[t, w] += acc
                    continue
                vt = bl[i]
                for k in range(K):
                    e = 0.0
                    for p in range(P):
                        e += W[i, p] * Tt[k, st_live[i, k], st[t, k], p]
                    vt *= e
                for w in range(nW):
                    v = vt
                    for k in range(K):
                        e = 0.0
                        for p in range(P):
                            e += W[i, p] * Ot[k, st[t, k], ot[w, k], p]
                        v *= e
                    out[t, w] += v
        return out

    @numba.njit(cache=True, nogil=True)
    def naive_model_update(bl, bj, pij, Wm, OJt, tau, st, fot, support, joint):
        """Unnormalized Pr(m' | s') for one agent, summed over live s, its
        node and action, every joint action of the others, and omega_j."""
        S, K = st.shape
        nW = fot.shape[0]
        n_live, P = Wm.shape
        M, A = pij.shape
        G = np.zeros((M, A, S, nW))
        Y = np.empty((A, S, nW))
        for i in range(n_live):
            for a in range(A):
                for t in range(S):
                    if not support[t]:
                        continue
                    for w in range(nW):
                        if joint:
                            y = 0.0
                            for p in range(P):
                                v = Wm[i, p]
                                for k in range(K):
                                    v *= OJt[k, a, st[t, k], fot[w, k], p]
                                y += v
                        else:
                            y = 1.0
                            for k in range(K):
                                e = 0.0
                                for p in range(P):
                                    e += Wm[i, p] * OJt[k, a, st[t, k], fot[w, k], p]
                                y *= e
                        Y[a, t, w] = y
            for m in range(M):
                bm = bl[i] * bj[i, m]
                if bm == 0.0:
                    continue
                for a in range(A):
                    c = bm * pij[m, a]
                    if c == 0.0:
                        continue
                    for t in range(S):
                        if support[t]:
                            for w in range(nW):
                                G[m, a, t, w] += c * Y[a, t, w]
        out = np.zeros((S, M))
        for t in range(S):
            if not support[t]:
                continue
            for n in range(M):
                acc = 0.0
                for m in range(M):
                    for a in range(A):
                        for w in range(nW):
                            acc += G[m, a, t, w] * tau[m, a, w, n]
                out[t, n] = acc
        return out

else:  # pragma: no cover
    naive_weights = naive_predict = naive_model_update = None
