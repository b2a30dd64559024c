"""Independent reference solvers for the SVM and privileged-SVM duals.

Accelerated projected-gradient ascent with an exact Euclidean projection
onto the feasible polytope, followed by a KKT polish on the identified
active set. Shares no code path with the SMO solvers it is used to
check; only the dual objective definition is common ground.
"""

from __future__ import annotations

import numpy as np


# ---------------------------------------------------------------------------
# exact projections
# ---------------------------------------------------------------------------

def project_svmplus(w: np.ndarray, y: np.ndarray, total: float,
                    warm: tuple[float, float] = (0.0, 0.0),
                    tol: float = 1e-13) -> tuple[np.ndarray, tuple[float, float]]:
    """Project w onto {u >= 0, sum(y * u_alpha) = 0, sum(u) = total}.

    u stacks (alpha, beta). Solved through the 2-multiplier dual with a
    damped semismooth Newton iteration (the dual is concave piecewise
    quadratic), with a bisection fallback.
    """
    n = len(y)
    wa, wb = w[:n], w[n:]
    scale = max(1.0, abs(total), float(np.max(np.abs(w))))

    def parts(rho, mu):
        ua = np.maximum(0.0, wa + rho * y + mu)
        ub = np.maximum(0.0, wb + mu)
        return ua, ub

    def residual(rho, mu):
        ua, ub = parts(rho, mu)
        return np.array([np.dot(y, ua), ua.sum() + ub.sum() - total])

    def dual_value(rho, mu):
        ua, ub = parts(rho, mu)
        da = ua - wa
        db = ub - wb
        return float(0.5 * (da @ da + db @ db)
                     - rho * (y @ ua) - mu * (ua.sum() + ub.sum()) + mu * total)

    rho, mu = warm
    ok = False
    for _ in range(200):
        E = residual(rho, mu)
        if max(abs(E[0]), abs(E[1])) <= tol * scale:
            ok = True
            break
        ua, ub = parts(rho, mu)
        act_a = ua > 0
        act_b = ub > 0
        j11 = float(np.sum(act_a)) + 1e-12
        j12 = float(np.sum(y[act_a]))
        j22 = float(np.sum(act_a) + np.sum(act_b)) + 1e-12
        det = j11 * j22 - j12 * j12
        if det <= 1e-14:
            break
        step0 = (-E[0] * j22 + E[1] * j12) / det
        step1 = (-j11 * E[1] + j12 * E[0]) / det
        base = dual_value(rho, mu)
        t = 1.0
        for _ in range(40):
            cand = (rho + t * step0, mu + t * step1)
            if dual_value(*cand) >= base:
                rho, mu = cand
                break
            t *= 0.5
        else:
            break

    if not ok and np.max(np.abs(residual(rho, mu))) > tol * scale:
        rho, mu = _bisection_multipliers(wa, wb, y, total, tol * scale)

    ua, ub = parts(rho, mu)
    return np.concatenate([ua, ub]), (rho, mu)


def _bisection_multipliers(wa, wb, y, total, atol):
    """Nested bisection fallback: inner exact rho(mu), outer monotone mu."""

    def rho_for(mu):
        # solve sum(y * max(0, wa + rho*y + mu)) = 0; nondecreasing in rho
        lo, hi = -1.0, 1.0
        def h(rho):
            return float(np.dot(y, np.maximum(0.0, wa + rho * y + mu)))
        for _ in range(200):
            if h(lo) <= 0:
                break
            lo *= 2.0
        for _ in range(200):
            if h(hi) >= 0:
                break
            hi *= 2.0
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if h(mid) < 0:
                lo = mid
            else:
                hi = mid
        return 0.5 * (lo + hi)

    def excess(mu):
        rho = rho_for(mu)
        ua = np.maximum(0.0, wa + rho * y + mu)
        ub = np.maximum(0.0, wb + mu)
        return float(ua.sum() + ub.sum() - total), rho

    lo, hi = -1.0, 1.0
    for _ in range(200):
        if excess(lo)[0] <= 0:
            break
        lo *= 2.0
    for _ in range(200):
        if excess(hi)[0] >= 0:
            break
        hi *= 2.0
    rho = 0.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        val, rho = excess(mid)
        if abs(val) <= atol:
            return rho, mid
        if val < 0:
            lo = mid
        else:
            hi = mid
    return rho, 0.5 * (lo + hi)


def project_box_hyperplane(w: np.ndarray, y: np.ndarray, C: float) -> np.ndarray:
    """Project w onto {0 <= u <= C, sum(y * u) = 0} by an exact breakpoint scan."""
    def h(rho):
        return np.sum(y * np.clip(w + rho * y, 0.0, C))

    # breakpoints where any clip boundary switches
    bp = np.concatenate([(0.0 - w) * y, (C - w) * y])
    bp = np.unique(bp)
    values = np.array([h(r) for r in bp])
    if values[0] > 0:
        rho = bp[0] - 1.0  # flat slope region below; extend until sign change
        while h(rho) > 0:
            rho *= 2.0
            if rho < -1e12:
                break
        lo, hi = rho, bp[0]
    elif values[-1] < 0:
        rho = bp[-1] + 1.0
        while h(rho) < 0:
            rho *= 2.0
            if rho > 1e12:
                break
        lo, hi = bp[-1], rho
    else:
        k = int(np.searchsorted(values >= 0, True))
        k = min(max(k, 1), len(bp) - 1)
        lo, hi = bp[k - 1], bp[k]
    # h is linear between breakpoints; secant gives the exact root
    hlo, hhi = h(lo), h(hi)
    rho = lo if hhi == hlo else lo - hlo * (hi - lo) / (hhi - hlo)
    return np.clip(w + rho * y, 0.0, C)


# ---------------------------------------------------------------------------
# FISTA + KKT polish
# ---------------------------------------------------------------------------

def _fista(H, c, project, u0, max_iter, tol):
    """Maximize c.u - 0.5 u.H.u over the projectable feasible set."""
    lip = float(np.max(np.linalg.eigvalsh(H)))
    step = 1.0 / max(lip, 1e-12)
    u = u0.copy()
    z = u0.copy()
    t_k = 1.0
    obj = lambda v: float(c @ v - 0.5 * v @ (H @ v))
    best, best_obj = u.copy(), obj(u)
    for k in range(max_iter):
        grad = c - H @ z
        u_next = project(z + step * grad)
        t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t_k * t_k))
        z = u_next + ((t_k - 1.0) / t_next) * (u_next - u)
        u, t_k = u_next, t_next
        o = obj(u)
        if o > best_obj:
            best, best_obj = u.copy(), o
        else:
            z = u.copy()  # restart momentum on non-ascent
            t_k = 1.0
        if k % 10 == 0:
            res = np.max(np.abs(u - project(u + (c - H @ u))))
            if res < tol:
                break
    return best


def _kkt_polish(H, c, A, rhs, u, zero_tol=1e-9):
    """Exact solve on the active set guessed from u; None when KKT checks fail."""
    m = len(u)
    free = u > zero_tol
    if not np.any(free):
        return None
    f = np.flatnonzero(free)
    Af = A[:, f]
    Hff = H[np.ix_(f, f)]
    k = A.shape[0]
    kkt = np.block([[Hff, Af.T], [Af, np.zeros((k, k))]])
    vec = np.concatenate([c[f], rhs])
    try:
        sol, *_ = np.linalg.lstsq(kkt, vec, rcond=None)
    except np.linalg.LinAlgError:
        return None
    uf, nu = sol[:len(f)], sol[len(f):]
    if np.min(uf) < -1e-8:
        return None
    full = np.zeros(m)
    full[f] = np.maximum(uf, 0.0)
    if np.max(np.abs(A @ full - rhs)) > 1e-8 * max(1.0, np.max(np.abs(rhs))):
        return None
    # multiplier feasibility on the zero set
    grad = c - H @ full
    slack = grad - A.T @ nu
    if np.any(slack[~free] > 1e-7):
        return None
    return full


def solve_svmplus_reference(K, Ks, y, C, gamma, tol=1e-10, max_iter=20000):
    """Reference maximizer of the privileged dual; returns (alpha, beta, objective).

    With s = alpha + beta - C, the s-quadratic contributes a linear term
    (C/gamma) Ks 1 to both halves of the stacked variable and a constant
    -(C^2 / 2 gamma) 1.Ks.1, which the oracle keeps explicit.
    """
    n = len(y)
    H = np.block([
        [np.outer(y, y) * K + Ks / gamma, Ks / gamma],
        [Ks / gamma, Ks / gamma],
    ])
    H = 0.5 * (H + H.T)
    ks_row = (C / gamma) * (Ks @ np.ones(n))
    c = np.concatenate([np.ones(n) + ks_row, ks_row])
    const = -(C * C) / (2.0 * gamma) * float(np.ones(n) @ Ks @ np.ones(n))
    total = float(n * C)
    warm = {"val": (0.0, 0.0)}

    def project(v):
        u, warm["val"] = project_svmplus(v, y, total, warm=warm["val"])
        return u

    u0 = np.concatenate([np.zeros(n), np.full(n, C)])
    A = np.vstack([np.concatenate([y, np.zeros(n)]), np.ones(2 * n)])
    rhs = np.array([0.0, total])
    obj = lambda v: float(c @ v - 0.5 * v @ (H @ v)) + const

    u = u0
    for chunk in range(max_iter // 40):
        u = _fista(H, c, project, u, 40, tol)
        polished = _kkt_polish(H, c, A, rhs, u)
        if polished is not None and obj(polished) >= obj(u) - 1e-12:
            res = np.max(np.abs(polished - project(polished + (c - H @ polished))))
            if res < tol:
                u = polished
                break
            u = project(polished)
        res = np.max(np.abs(u - project(u + (c - H @ u))))
        if res < tol:
            break
    return u[:n], u[n:], obj(u)


def solve_svm_reference(K, y, C, tol=1e-10, max_iter=20000):
    """Reference maximizer of the soft-margin SVM dual; returns (alpha, objective)."""
    n = len(y)
    H = np.outer(y, y) * K
    H = 0.5 * (H + H.T)
    c = np.ones(n)
    project = lambda v: project_box_hyperplane(v, y, C)
    obj = lambda v: float(c @ v - 0.5 * v @ (H @ v))

    u = np.zeros(n)
    for chunk in range(max_iter // 40):
        u = _fista(H, c, project, u, 40, tol)
        u_box = _polish_svm(H, c, y, C, u)
        if u_box is not None and obj(u_box) >= obj(u) - 1e-12:
            res = np.max(np.abs(u_box - project(u_box + (c - H @ u_box))))
            if res < tol:
                u = u_box
                break
            u = project(u_box)
        res = np.max(np.abs(u - project(u + (c - H @ u))))
        if res < tol:
            break
    return u, obj(u)


def _polish_svm(H, c, y, C, u, zero_tol=1e-9):
    at_zero = u <= zero_tol
    at_cap = u >= C - zero_tol
    free = ~(at_zero | at_cap)
    f = np.flatnonzero(free)
    fixed = np.zeros(len(u))
    fixed[at_cap] = C
    rhs_eq = -float(y @ fixed)
    if len(f) == 0:
        full = fixed
        if abs(y @ full) > 1e-9 * max(1.0, C):
            return None
        nu = 0.0
    else:
        Hff = H[np.ix_(f, f)]
        kkt = np.block([[Hff, y[f, None]], [y[None, f], np.zeros((1, 1))]])
        vec = np.concatenate([c[f] - H[np.ix_(f, np.flatnonzero(at_cap))] @ fixed[at_cap], [rhs_eq]])
        try:
            sol, *_ = np.linalg.lstsq(kkt, vec, rcond=None)
        except np.linalg.LinAlgError:
            return None
        uf, nu = sol[:-1], float(sol[-1])
        if np.min(uf) < -1e-8 or np.max(uf) > C + 1e-8:
            return None
        full = fixed.copy()
        full[f] = np.clip(uf, 0.0, C)
    grad = c - H @ full
    slack = grad - nu * y
    if np.any(slack[at_zero] > 1e-7) or np.any(slack[at_cap] < -1e-7):
        return None
    return full


def bias_from_support(alpha, K, y, zero_tol=1e-9):
    """Eq-style bias: mean of y_i - f_raw(x_i) over {alpha_i > 0}."""
    F = K @ (alpha * y)
    sv = alpha > zero_tol
    if not np.any(sv):
        return float(np.mean(y - F))
    return float(np.mean(y[sv] - F[sv]))
