"""SMO solvers for the privileged-information SVM dual and the plain SVM dual.

The privileged dual being maximized over alpha, beta >= 0 is

    sum_i alpha_i - 1/2 sum_ij alpha_i alpha_j y_i y_j K_ij
                  - 1/(2 gamma) sum_ij s_i s_j Kstar_ij,   s = alpha + beta - C

subject to sum_i s_i = 0 and sum_i y_i alpha_i = 0. Each iteration moves
along the maximally violating sparse feasible direction with an exact
line search clipped to the nonnegativity box, so both equality
constraints are preserved by construction and the objective never
decreases. Termination: the largest directional derivative over all
feasible directions drops below the configured tolerance.

Direction families (t > 0 along each; i, j, k are sample indices):
  same-class pair   d_alpha = +e_i - e_j            (y_i == y_j)
  opposite forward  d_alpha = +e_i + e_j (y_i != y_j), d_beta = -2 e_k
  opposite reverse  the negation of forward
  beta pair         d_beta  = +e_i - e_j
The compensating beta index k is picked at the extremal beta gradient,
not tied to i or j; with that choice the maximal directional derivative
over the four families is zero exactly at KKT points, so it doubles as
the termination certificate.

Three additional slack-preserving families accelerate convergence (they
keep alpha + beta fixed per sample, so the privileged term is untouched
and alpha mass relocates at plain-SVM speed); they never affect the
certificate, only the step choice, which greedily maximizes the
expected objective gain of the exact line search:
  swap same-class   d_alpha = +e_i - e_j, d_beta = -e_i + e_j
  swap opp forward  d_alpha = +e_i + e_j, d_beta = -e_i - e_j
  swap opp reverse  the negation of swap forward
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..errors import ConfigError, InputError
from ._smo_fast import HAVE_NUMBA, smo_svmplus_loop
from .kernels import KernelConfig, gaussian_gram

MIN_GAMMA = 1e-6


@dataclass
class SmoConfig:
    """Termination settings for the SMO loop."""

    tolerance: float = 1e-3
    max_iterations: Optional[int] = None  # None: 1e5 * n direction steps
    track_history: bool = False

    def __post_init__(self):
        if self.tolerance <= 0:
            raise ConfigError("tolerance must be positive")


@dataclass
class SmoHistory:
    """Per-iteration diagnostics recorded when track_history is on."""

    objective: list[float] = field(default_factory=list)
    eq_label_residual: list[float] = field(default_factory=list)
    eq_budget_residual: list[float] = field(default_factory=list)
    min_multiplier: list[float] = field(default_factory=list)


@dataclass
class SvmPlusProblem:
    """One binary training problem with privileged vectors."""

    X: np.ndarray
    X_star: np.ndarray
    y: np.ndarray
    C: float
    gamma: float
    kernel: KernelConfig

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        self.X_star = np.asarray(self.X_star, dtype=float)
        self.y = np.asarray(self.y, dtype=float)
        n = len(self.y)
        if n < 2 or len(self.X) != n or len(self.X_star) != n:
            raise InputError("need X, X_star and y of equal length >= 2")
        if not (np.all(np.isfinite(self.X)) and np.all(np.isfinite(self.X_star))):
            raise InputError("non-finite rows in training input")
        if not set(np.unique(self.y)) == {-1.0, 1.0}:
            raise InputError("labels must contain both classes, encoded as -1/+1")
        if self.C <= 0:
            raise InputError(f"C must be positive, got {self.C}")
        if self.gamma < MIN_GAMMA:
            raise InputError(f"gamma below {MIN_GAMMA} is numerically degenerate")


@dataclass
class DualSolution:
    alpha: np.ndarray
    beta: np.ndarray
    b: float
    objective: float
    iterations: int
    converged: bool
    kkt_violation: float
    history: Optional[SmoHistory] = None


def svmplus_objective(alpha, beta, K, K_star, y, C, gamma) -> float:
    ay = alpha * y
    s = alpha + beta - C
    return float(np.sum(alpha) - 0.5 * ay @ (K @ ay) - 0.5 / gamma * s @ (K_star @ s))


def svm_objective(alpha, K, y) -> float:
    ay = alpha * y
    return float(np.sum(alpha) - 0.5 * ay @ (K @ ay))


def _bias_from_support(alpha: np.ndarray, F: np.ndarray, y: np.ndarray) -> float:
    """Mean of (y_i - f_raw(x_i)) over support vectors {alpha_i > 0}."""
    sv = alpha > 0
    if not np.any(sv):
        return float(np.mean(y - F))
    return float(np.mean(y[sv] - F[sv]))


def solve_svmplus(problem: SvmPlusProblem, smo: SmoConfig | None = None) -> DualSolution:
    """Maximize the privileged dual by feasible-direction SMO.

    Starts at the feasible point alpha = 0, beta = C. Non-convergence
    within the iteration cap is reported on the result, never hidden.
    """
    smo = smo or SmoConfig()
    y = problem.y
    n = len(y)
    C, gamma = problem.C, problem.gamma
    K = gaussian_gram(problem.X, problem.kernel.lam)
    Ks = gaussian_gram(problem.X_star, problem.kernel.lam_star)
    max_iter = smo.max_iterations if smo.max_iterations is not None else int(1e5) * n

    if HAVE_NUMBA and not smo.track_history:
        alpha, beta, F, G, it, converged, violation = smo_svmplus_loop(
            K, Ks, y, float(C), float(gamma), float(smo.tolerance), max_iter)
        if not converged:
            warnings.warn(
                f"SMO did not reach tolerance {smo.tolerance} in {max_iter} iterations "
                f"(last violation {violation:.3g})",
                RuntimeWarning,
            )
        return DualSolution(
            alpha=alpha,
            beta=beta,
            b=_bias_from_support(alpha, F, y),
            objective=svmplus_objective(alpha, beta, K, Ks, y, C, gamma),
            iterations=it,
            converged=converged,
            kkt_violation=float(violation if np.isfinite(violation) else 0.0),
        )

    alpha = np.zeros(n)
    beta = np.full(n, float(C))
    F = np.zeros(n)  # K @ (alpha * y)
    G = np.zeros(n)  # Ks @ (alpha + beta - C) / gamma
    pos = y > 0
    neg = ~pos
    history = SmoHistory() if smo.track_history else None

    def curv_k(i, j):
        return K[i, i] + K[j, j] - 2.0 * K[i, j]

    def curv_ks(i, j):
        return (Ks[i, i] + Ks[j, j] - 2.0 * Ks[i, j]) / gamma

    converged = False
    violation = np.inf
    it = 0
    while it < max_iter:
        # gradients: p for alpha components, q for beta components
        p = 1.0 - y * F - G
        q = -G
        r = p - q  # gradient of the slack-preserving alpha/beta swap

        certificate = []  # families whose max violation certifies KKT
        extras = []  # slack-preserving accelerators
        for mask in (pos, neg):
            idx = np.flatnonzero(mask)
            a_set = idx[alpha[idx] > 0]
            b_set = idx[beta[idx] > 0]
            if len(a_set):
                i = int(idx[np.argmax(p[idx])])
                j = int(a_set[np.argmin(p[a_set])])
                if i != j:
                    certificate.append(
                        (float(p[i] - p[j]), curv_k(i, j) + curv_ks(i, j),
                         alpha[j], "same", i, j, -1))
            if len(b_set) and len(a_set):
                i = int(b_set[np.argmax(r[b_set])])
                j = int(a_set[np.argmin(r[a_set])])
                if i != j:
                    extras.append(
                        (float(r[i] - r[j]), curv_k(i, j),
                         min(beta[i], alpha[j]), "swap_same", i, j, -1))
        bset = np.flatnonzero(beta > 0)
        if len(bset):
            k_dec = int(bset[np.argmin(q[bset])])  # cheapest beta to shrink
            i = int(np.flatnonzero(pos)[np.argmax(p[pos])])
            j = int(np.flatnonzero(neg)[np.argmax(p[neg])])
            certificate.append((
                float(p[i] + p[j] - 2.0 * q[k_dec]),
                curv_k(i, j) + (Ks[i, i] + Ks[j, j] + 4.0 * Ks[k_dec, k_dec]
                                + 2.0 * Ks[i, j] - 4.0 * Ks[i, k_dec]
                                - 4.0 * Ks[j, k_dec]) / gamma,
                beta[k_dec] / 2.0, "opp_fwd", i, j, k_dec))
            i2 = int(np.argmax(q))
            j2 = int(bset[np.argmin(q[bset])])
            if i2 != j2:
                certificate.append((float(q[i2] - q[j2]), curv_ks(i2, j2),
                                    beta[j2], "beta", i2, j2, -1))
        ap = np.flatnonzero(pos & (alpha > 0))
        an = np.flatnonzero(neg & (alpha > 0))
        if len(ap) and len(an):
            k_inc = int(np.argmax(q))  # best beta to grow, unrestricted
            i = int(ap[np.argmin(p[ap])])
            j = int(an[np.argmin(p[an])])
            certificate.append((
                float(2.0 * q[k_inc] - p[i] - p[j]),
                curv_k(i, j) + (Ks[i, i] + Ks[j, j] + 4.0 * Ks[k_inc, k_inc]
                                + 2.0 * Ks[i, j] - 4.0 * Ks[i, k_inc]
                                - 4.0 * Ks[j, k_inc]) / gamma,
                min(alpha[i], alpha[j]), "opp_rev", i, j, k_inc))
            i3 = int(ap[np.argmin(r[ap])])
            j3 = int(an[np.argmin(r[an])])
            extras.append((float(-r[i3] - r[j3]), curv_k(i3, j3),
                           min(alpha[i3], alpha[j3]), "swap_rev", i3, j3, -1))
        bp = np.flatnonzero(pos & (beta > 0))
        bn = np.flatnonzero(neg & (beta > 0))
        if len(bp) and len(bn):
            i4 = int(bp[np.argmax(r[bp])])
            j4 = int(bn[np.argmax(r[bn])])
            extras.append((float(r[i4] + r[j4]), curv_k(i4, j4),
                           min(beta[i4], beta[j4]), "swap_fwd", i4, j4, -1))

        violation = max((c[0] for c in certificate), default=0.0)
        if violation < smo.tolerance:
            converged = True
            break

        def step_of(cand):
            viol, q_curv, t_hi, *_ = cand
            if viol <= 0 or t_hi <= 0:
                return 0.0, -1.0
            t = min(viol / q_curv, t_hi) if q_curv > 0 else t_hi
            return t, t * viol - 0.5 * t * t * q_curv

        best, (t, gain) = None, (0.0, -1.0)
        for cand in certificate + extras:
            t_c, gain_c = step_of(cand)
            if gain_c > gain:
                best, t, gain = cand, t_c, gain_c
        _, _, _, kind, i, j, k = best

        if kind == "same":
            alpha[i] += t
            alpha[j] -= t
            F += (t * y[i]) * (K[:, i] - K[:, j])
            G += (t / gamma) * (Ks[:, i] - Ks[:, j])
        elif kind == "opp_fwd":
            alpha[i] += t
            alpha[j] += t
            beta[k] -= 2.0 * t
            F += t * (K[:, i] - K[:, j])
            G += (t / gamma) * (Ks[:, i] + Ks[:, j] - 2.0 * Ks[:, k])
        elif kind == "opp_rev":
            alpha[i] -= t
            alpha[j] -= t
            beta[k] += 2.0 * t
            F -= t * (K[:, i] - K[:, j])
            G -= (t / gamma) * (Ks[:, i] + Ks[:, j] - 2.0 * Ks[:, k])
        elif kind == "beta":
            beta[i] += t
            beta[j] -= t
            G += (t / gamma) * (Ks[:, i] - Ks[:, j])
        elif kind == "swap_same":
            alpha[i] += t
            alpha[j] -= t
            beta[i] -= t
            beta[j] += t
            F += (t * y[i]) * (K[:, i] - K[:, j])
        elif kind == "swap_fwd":
            alpha[i] += t
            alpha[j] += t
            beta[i] -= t
            beta[j] -= t
            F += t * (K[:, i] - K[:, j])
        else:  # swap_rev
            alpha[i] -= t
            alpha[j] -= t
            beta[i] += t
            beta[j] += t
            F -= t * (K[:, i] - K[:, j])
        it += 1

        if history is not None:
            s = alpha + beta - C
            history.objective.append(float(np.sum(alpha) - 0.5 * (alpha * y) @ F - 0.5 * s @ G))
            history.eq_label_residual.append(abs(float(np.sum(y * alpha))))
            history.eq_budget_residual.append(abs(float(np.sum(s))))
            history.min_multiplier.append(float(min(alpha.min(), beta.min())))

    if not converged:
        warnings.warn(
            f"SMO did not reach tolerance {smo.tolerance} in {max_iter} iterations "
            f"(last violation {violation:.3g})",
            RuntimeWarning,
        )
    return DualSolution(
        alpha=alpha,
        beta=beta,
        b=_bias_from_support(alpha, F, y),
        objective=svmplus_objective(alpha, beta, K, Ks, y, C, gamma),
        iterations=it,
        converged=converged,
        kkt_violation=float(violation if np.isfinite(violation) else 0.0),
        history=history,
    )


def solve_svm(
    X: np.ndarray,
    y: np.ndarray,
    C: float,
    kernel: KernelConfig,
    smo: SmoConfig | None = None,
) -> DualSolution:
    """Classic two-index SMO for the soft-margin SVM dual (box 0..C)."""
    smo = smo or SmoConfig()
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n = len(y)
    if n < 2 or not set(np.unique(y)) == {-1.0, 1.0}:
        raise InputError("labels must contain both classes, encoded as -1/+1")
    if C <= 0:
        raise InputError(f"C must be positive, got {C}")
    K = gaussian_gram(X, kernel.lam)

    alpha = np.zeros(n)
    F = np.zeros(n)  # K @ (alpha * y)
    max_iter = smo.max_iterations if smo.max_iterations is not None else int(1e5) * n
    history = SmoHistory() if smo.track_history else None

    converged = False
    violation = np.inf
    it = 0
    while it < max_iter:
        v = y - F
        up = ((y > 0) & (alpha < C)) | ((y < 0) & (alpha > 0))
        low = ((y > 0) & (alpha > 0)) | ((y < 0) & (alpha < C))
        if not (np.any(up) and np.any(low)):
            converged = True
            violation = 0.0
            break
        iu = np.flatnonzero(up)
        il = np.flatnonzero(low)
        i = int(iu[np.argmax(v[iu])])
        j = int(il[np.argmin(v[il])])
        violation = float(v[i] - v[j])
        if violation < smo.tolerance:
            converged = True
            break

        q = K[i, i] + K[j, j] - 2.0 * K[i, j]
        t_hi_i = C - alpha[i] if y[i] > 0 else alpha[i]
        t_hi_j = alpha[j] if y[j] > 0 else C - alpha[j]
        t = violation / q if q > 0 else np.inf
        t = min(t, t_hi_i, t_hi_j)

        alpha[i] += y[i] * t
        alpha[j] -= y[j] * t
        alpha[i] = min(max(alpha[i], 0.0), C)
        alpha[j] = min(max(alpha[j], 0.0), C)
        F += t * (K[:, i] - K[:, j])
        it += 1

        if history is not None:
            history.objective.append(float(np.sum(alpha) - 0.5 * (alpha * y) @ F))
            history.eq_label_residual.append(abs(float(np.sum(y * alpha))))
            history.eq_budget_residual.append(0.0)
            history.min_multiplier.append(float(alpha.min()))

    if not converged:
        warnings.warn(
            f"SMO did not reach tolerance {smo.tolerance} in {max_iter} iterations "
            f"(last violation {violation:.3g})",
            RuntimeWarning,
        )
    return DualSolution(
        alpha=alpha,
        beta=np.zeros(n),
        b=_bias_from_support(alpha, F, y),
        objective=svm_objective(alpha, K, y),
        iterations=it,
        converged=converged,
        kkt_violation=float(violation if np.isfinite(violation) else 0.0),
        history=history,
    )
