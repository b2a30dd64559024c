"""Scratch validation: SMO vs projected-gradient oracle on random instances."""
import sys
import time

import numpy as np

sys.path.insert(0, "tests")
from oracle import (bias_from_support, project_box_hyperplane, project_svmplus,
                    solve_svm_reference, solve_svmplus_reference)

from drivestyle.svmplus import (KernelConfig, SmoConfig, SvmPlusProblem,
                                gaussian_gram, solve_svm, solve_svmplus)

rng = np.random.default_rng(0)

# 1. projection sanity: feasibility + optimality vs cvxpy
print("== projection sanity ==")
try:
    import cvxpy as cp
    HAVE_CVXPY = True
except Exception:
    HAVE_CVXPY = False
print("cvxpy:", HAVE_CVXPY)

for trial in range(20):
    n = rng.integers(2, 8)
    y = np.concatenate([np.ones(1), -np.ones(1), rng.choice([-1.0, 1.0], size=n - 2)])
    w = rng.normal(size=2 * n) * 5
    total = float(n * rng.uniform(0.5, 4))
    u, _ = project_svmplus(w, y, total, warm=(0.0, 0.0))
    assert np.all(u >= -1e-12), u.min()
    assert abs(np.dot(y, u[:n])) < 1e-9, np.dot(y, u[:n])
    assert abs(u.sum() - total) < 1e-9
    if HAVE_CVXPY:
        v = cp.Variable(2 * n)
        prob = cp.Problem(cp.Minimize(cp.sum_squares(v - w)),
                          [v >= 0, y @ v[:n] == 0, cp.sum(v) == total])
        prob.solve(solver=cp.CLARABEL)
        ref = v.value
        err = np.max(np.abs(ref - u))
        assert err < 1e-6, (trial, err)
print("svmplus projection ok")

for trial in range(20):
    n = rng.integers(2, 9)
    y = np.concatenate([np.ones(1), -np.ones(1), rng.choice([-1.0, 1.0], size=n - 2)])
    w = rng.normal(size=n) * 4
    C = float(rng.uniform(0.5, 10))
    u = project_box_hyperplane(w, y, C)
    assert np.all(u >= -1e-12) and np.all(u <= C + 1e-12)
    assert abs(np.dot(y, u)) < 1e-8, np.dot(y, u)
    if HAVE_CVXPY:
        v = cp.Variable(n)
        prob = cp.Problem(cp.Minimize(cp.sum_squares(v - w)),
                          [v >= 0, v <= C, y @ v == 0])
        prob.solve(solver=cp.CLARABEL)
        err = np.max(np.abs(v.value - u))
        assert err < 1e-6, (trial, err)
print("svm projection ok")

# 2. SMO vs oracle, svmplus
print("== svmplus smo vs oracle ==")
t0 = time.time()
worst_rel = 0.0
worst_dec = 0.0
for trial in range(100):
    r = np.random.default_rng(1000 + trial)
    n = int(r.integers(3, 9))
    while True:
        y = r.choice([-1.0, 1.0], size=n)
        if len(np.unique(y)) == 2:
            break
    X = r.normal(size=(n, 3))
    Xs = r.normal(size=(n, 5))
    C = float(r.uniform(0.5, 16))
    gamma = float(r.uniform(0.5, 4))
    lam = float(r.uniform(0.3, 2.0))
    lam_star = float(r.uniform(0.3, 2.0))
    kernel = KernelConfig(lam=lam, lam_star=lam_star)
    prob = SvmPlusProblem(X=X, X_star=Xs, y=y, C=C, gamma=gamma, kernel=kernel)
    sol = solve_svmplus(prob, SmoConfig(tolerance=1e-8))
    K = gaussian_gram(X, lam)
    Ks = gaussian_gram(Xs, lam_star)
    a_ref, b_ref, obj_ref = solve_svmplus_reference(K, Ks, y, C, gamma)
    rel = abs(sol.objective - obj_ref) / max(1.0, abs(obj_ref))
    worst_rel = max(worst_rel, rel)
    # decision values at test points
    Xt = r.normal(size=(5, 3))
    Kt = np.exp(-lam * ((X[:, None, :] - Xt[None, :, :]) ** 2).sum(-1))
    f_smo = (sol.alpha * y) @ Kt + sol.b
    f_ref = (a_ref * y) @ Kt + bias_from_support(a_ref, K, y)
    worst_dec = max(worst_dec, np.max(np.abs(f_smo - f_ref)))
    if rel > 1e-6:
        print("BAD", trial, rel, sol.converged, sol.iterations)
print(f"svmplus: worst rel obj err {worst_rel:.2e}, worst decision err {worst_dec:.2e}, "
      f"time {time.time()-t0:.1f}s")

# 3. SMO vs oracle, svm
print("== svm smo vs oracle ==")
t0 = time.time()
worst_rel = 0.0
worst_dec = 0.0
for trial in range(100):
    r = np.random.default_rng(2000 + trial)
    n = int(r.integers(3, 9))
    while True:
        y = r.choice([-1.0, 1.0], size=n)
        if len(np.unique(y)) == 2:
            break
    X = r.normal(size=(n, 3))
    C = float(r.uniform(0.5, 16))
    lam = float(r.uniform(0.3, 2.0))
    kernel = KernelConfig(lam=lam, lam_star=1.0)
    sol = solve_svm(X, y, C, kernel, SmoConfig(tolerance=1e-8))
    K = gaussian_gram(X, lam)
    a_ref, obj_ref = solve_svm_reference(K, y, C)
    rel = abs(sol.objective - obj_ref) / max(1.0, abs(obj_ref))
    worst_rel = max(worst_rel, rel)
    Xt = r.normal(size=(5, 3))
    Kt = np.exp(-lam * ((X[:, None, :] - Xt[None, :, :]) ** 2).sum(-1))
    f_smo = (sol.alpha * y) @ Kt + sol.b
    f_ref = (a_ref * y) @ Kt + bias_from_support(a_ref, K, y)
    worst_dec = max(worst_dec, np.max(np.abs(f_smo - f_ref)))
    if rel > 1e-6:
        print("BAD", trial, rel, sol.converged, sol.iterations)
print(f"svm: worst rel obj err {worst_rel:.2e}, worst decision err {worst_dec:.2e}, "
      f"time {time.time()-t0:.1f}s")
