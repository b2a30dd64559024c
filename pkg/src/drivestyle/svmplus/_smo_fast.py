"""Compiled inner loop for the privileged-dual SMO.

Mirrors the candidate selection and update rules of the reference
implementation in smo.py exactly (same direction families, same
first-extremum tie-breaking, same exact line search). The pure-numpy
path in smo.py stays authoritative; a test pins the two paths to each
other. Falls back transparently when numba is unavailable.
"""

from __future__ import annotations

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(fn):
            return fn
        return wrap if not (len(args) == 1 and callable(args[0])) else args[0]


NEG_INF = -1e300


@njit(cache=True)
def smo_svmplus_loop(K, Ks, y, C, gamma, tol, max_iter):  # pragma: no cover
    n = len(y)
    alpha = np.zeros(n)
    beta = np.full(n, C)
    F = np.zeros(n)
    G = np.zeros(n)

    converged = False
    violation = 1e300
    it = 0
    while it < max_iter:
        # running extremes per class: 0 = +1, 1 = -1
        a1_v = np.full(2, NEG_INF)   # max p over class
        a1_i = np.full(2, -1, dtype=np.int64)
        a2_v = np.full(2, -NEG_INF)  # min p over class & alpha>0
        a2_i = np.full(2, -1, dtype=np.int64)
        s1_v = np.full(2, NEG_INF)   # max r over class & beta>0
        s1_i = np.full(2, -1, dtype=np.int64)
        s2_v = np.full(2, -NEG_INF)  # min r over class & alpha>0
        s2_i = np.full(2, -1, dtype=np.int64)
        b1_v = NEG_INF               # max q overall
        b1_i = -1
        b2_v = -NEG_INF              # min q over beta>0
        b2_i = -1

        for m in range(n):
            pm = 1.0 - y[m] * F[m] - G[m]
            qm = -G[m]
            rm = pm - qm
            c = 0 if y[m] > 0 else 1
            if pm > a1_v[c]:
                a1_v[c] = pm
                a1_i[c] = m
            if alpha[m] > 0.0:
                if pm < a2_v[c]:
                    a2_v[c] = pm
                    a2_i[c] = m
                if rm < s2_v[c]:
                    s2_v[c] = rm
                    s2_i[c] = m
            if beta[m] > 0.0:
                if rm > s1_v[c]:
                    s1_v[c] = rm
                    s1_i[c] = m
                if qm < b2_v:
                    b2_v = qm
                    b2_i = m
            if qm > b1_v:
                b1_v = qm
                b1_i = m

        # candidates: (viol, curvature, t_hi, kind, i, j, k)
        # kinds: 0 same, 1 opp_fwd, 2 opp_rev, 3 beta,
        #        4 swap_same, 5 swap_fwd, 6 swap_rev
        cand_viol = np.empty(9)
        cand_curv = np.empty(9)
        cand_thi = np.empty(9)
        cand_kind = np.empty(9, dtype=np.int64)
        cand_i = np.empty(9, dtype=np.int64)
        cand_j = np.empty(9, dtype=np.int64)
        cand_k = np.empty(9, dtype=np.int64)
        cand_cert = np.empty(9, dtype=np.int64)
        m_c = 0

        for c in range(2):
            i = a1_i[c]
            j = a2_i[c]
            if i >= 0 and j >= 0 and i != j:
                cand_viol[m_c] = a1_v[c] - a2_v[c]
                cand_curv[m_c] = (K[i, i] + K[j, j] - 2.0 * K[i, j]
                                  + (Ks[i, i] + Ks[j, j] - 2.0 * Ks[i, j]) / gamma)
                cand_thi[m_c] = alpha[j]
                cand_kind[m_c] = 0
                cand_i[m_c] = i
                cand_j[m_c] = j
                cand_k[m_c] = -1
                cand_cert[m_c] = 1
                m_c += 1
            i = s1_i[c]
            j = s2_i[c]
            if i >= 0 and j >= 0 and i != j:
                cand_viol[m_c] = s1_v[c] - s2_v[c]
                cand_curv[m_c] = K[i, i] + K[j, j] - 2.0 * K[i, j]
                thi = beta[i] if beta[i] < alpha[j] else alpha[j]
                cand_thi[m_c] = thi
                cand_kind[m_c] = 4
                cand_i[m_c] = i
                cand_j[m_c] = j
                cand_k[m_c] = -1
                cand_cert[m_c] = 0
                m_c += 1
        if b2_i >= 0:
            k = b2_i
            i = a1_i[0]
            j = a1_i[1]
            if i >= 0 and j >= 0:
                cand_viol[m_c] = a1_v[0] + a1_v[1] - 2.0 * b2_v
                cand_curv[m_c] = (K[i, i] + K[j, j] - 2.0 * K[i, j]
                                  + (Ks[i, i] + Ks[j, j] + 4.0 * Ks[k, k]
                                     + 2.0 * Ks[i, j] - 4.0 * Ks[i, k]
                                     - 4.0 * Ks[j, k]) / gamma)
                cand_thi[m_c] = beta[k] / 2.0
                cand_kind[m_c] = 1
                cand_i[m_c] = i
                cand_j[m_c] = j
                cand_k[m_c] = k
                cand_cert[m_c] = 1
                m_c += 1
            if b1_i >= 0 and b1_i != b2_i:
                i = b1_i
                j = b2_i
                cand_viol[m_c] = b1_v - b2_v  # q[i] - q[j]
                cand_curv[m_c] = (Ks[i, i] + Ks[j, j] - 2.0 * Ks[i, j]) / gamma
                cand_thi[m_c] = beta[j]
                cand_kind[m_c] = 3
                cand_i[m_c] = i
                cand_j[m_c] = j
                cand_k[m_c] = -1
                cand_cert[m_c] = 1
                m_c += 1
        if a2_i[0] >= 0 and a2_i[1] >= 0:
            k = b1_i
            i = a2_i[0]
            j = a2_i[1]
            cand_viol[m_c] = 2.0 * b1_v - a2_v[0] - a2_v[1]
            cand_curv[m_c] = (K[i, i] + K[j, j] - 2.0 * K[i, j]
                              + (Ks[i, i] + Ks[j, j] + 4.0 * Ks[k, k]
                                 + 2.0 * Ks[i, j] - 4.0 * Ks[i, k]
                                 - 4.0 * Ks[j, k]) / gamma)
            thi = alpha[i] if alpha[i] < alpha[j] else alpha[j]
            cand_thi[m_c] = thi
            cand_kind[m_c] = 2
            cand_i[m_c] = i
            cand_j[m_c] = j
            cand_k[m_c] = k
            cand_cert[m_c] = 1
            m_c += 1
        if s2_i[0] >= 0 and s2_i[1] >= 0:
            i = s2_i[0]
            j = s2_i[1]
            cand_viol[m_c] = -s2_v[0] - s2_v[1]
            cand_curv[m_c] = K[i, i] + K[j, j] - 2.0 * K[i, j]
            thi = alpha[i] if alpha[i] < alpha[j] else alpha[j]
            cand_thi[m_c] = thi
            cand_kind[m_c] = 6
            cand_i[m_c] = i
            cand_j[m_c] = j
            cand_k[m_c] = -1
            cand_cert[m_c] = 0
            m_c += 1
        if s1_i[0] >= 0 and s1_i[1] >= 0:
            i = s1_i[0]
            j = s1_i[1]
            cand_viol[m_c] = s1_v[0] + s1_v[1]
            cand_curv[m_c] = K[i, i] + K[j, j] - 2.0 * K[i, j]
            thi = beta[i] if beta[i] < beta[j] else beta[j]
            cand_thi[m_c] = thi
            cand_kind[m_c] = 5
            cand_i[m_c] = i
            cand_j[m_c] = j
            cand_k[m_c] = -1
            cand_cert[m_c] = 0
            m_c += 1

        violation = 0.0
        for idx in range(m_c):
            if cand_cert[idx] == 1 and cand_viol[idx] > violation:
                violation = cand_viol[idx]
        if violation < tol:
            converged = True
            break

        best = -1
        best_gain = -1.0
        best_t = 0.0
        for idx in range(m_c):
            viol = cand_viol[idx]
            thi = cand_thi[idx]
            if viol <= 0.0 or thi <= 0.0:
                continue
            qc = cand_curv[idx]
            if qc > 0.0:
                t = viol / qc
                if t > thi:
                    t = thi
            else:
                t = thi
            gain = t * viol - 0.5 * t * t * qc
            if gain > best_gain:
                best = idx
                best_gain = gain
                best_t = t
        if best < 0:
            break

        kind = cand_kind[best]
        i = cand_i[best]
        j = cand_j[best]
        k = cand_k[best]
        t = best_t
        if kind == 0:
            alpha[i] += t
            alpha[j] -= t
            tyi = t * y[i]
            tg = t / gamma
            for m in range(n):
                F[m] += tyi * (K[m, i] - K[m, j])
                G[m] += tg * (Ks[m, i] - Ks[m, j])
        elif kind == 1:
            alpha[i] += t
            alpha[j] += t
            beta[k] -= 2.0 * t
            tg = t / gamma
            for m in range(n):
                F[m] += t * (K[m, i] - K[m, j])
                G[m] += tg * (Ks[m, i] + Ks[m, j] - 2.0 * Ks[m, k])
        elif kind == 2:
            alpha[i] -= t
            alpha[j] -= t
            beta[k] += 2.0 * t
            tg = t / gamma
            for m in range(n):
                F[m] -= t * (K[m, i] - K[m, j])
                G[m] -= tg * (Ks[m, i] + Ks[m, j] - 2.0 * Ks[m, k])
        elif kind == 3:
            beta[i] += t
            beta[j] -= t
            tg = t / gamma
            for m in range(n):
                G[m] += tg * (Ks[m, i] - Ks[m, j])
        elif kind == 4:
            alpha[i] += t
            alpha[j] -= t
            beta[i] -= t
            beta[j] += t
            tyi = t * y[i]
            for m in range(n):
                F[m] += tyi * (K[m, i] - K[m, j])
        elif kind == 5:
            alpha[i] += t
            alpha[j] += t
            beta[i] -= t
            beta[j] -= t
            for m in range(n):
                F[m] += t * (K[m, i] - K[m, j])
        else:
            alpha[i] -= t
            alpha[j] -= t
            beta[i] += t
            beta[j] += t
            for m in range(n):
                F[m] -= t * (K[m, i] - K[m, j])
        it += 1

    return alpha, beta, F, G, it, converged, violation
