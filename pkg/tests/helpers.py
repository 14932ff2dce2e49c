"""Independent oracles shared by the tests: literal sums, enumeration, generic solvers."""

import itertools

import numpy as np

from densecrf_relax.model import KernelSpec, Potts, ProblemInstance

TINY3_FEATURES = np.array([[0.0], [1.0], [3.0]])
K12, K13, K23 = np.exp(-0.5), np.exp(-4.5), np.exp(-2.0)


def tiny3(unary=None, m=2, compat=None):
    unary = np.zeros((3, m)) if unary is None else unary
    return ProblemInstance(unary, [KernelSpec(1.0, TINY3_FEATURES)], compat or Potts())


def literal_kernel(features_list, weights):
    """K_ab by scalar loops over every pair, diagonal included."""
    n = features_list[0].shape[0]
    k = np.zeros((n, n))
    for a in range(n):
        for b in range(n):
            for f, w in zip(features_list, weights):
                k[a, b] += w * np.exp(-0.5 * sum((f[a, c] - f[b, c]) ** 2 for c in range(f.shape[1])))
    return k


def problem_kernel(problem):
    """Literal K with zero diagonal."""
    k = literal_kernel([ks.features for ks in problem.kernels], [ks.weight for ks in problem.kernels])
    np.fill_diagonal(k, 0.0)
    return k


def random_problem(rng, n, m, d=2, n_kernels=2, scale=1.5, unary_scale=1.0, nonneg=False, compat=None,
                   backend="exact"):
    kernels = [KernelSpec(rng.uniform(0.2, 1.5), rng.normal(size=(n, d)) * scale) for _ in range(n_kernels)]
    unary = rng.normal(size=(n, m)) * unary_scale
    if nonneg:
        unary = np.abs(unary)
    return ProblemInstance(unary, kernels, compat or Potts(), backend)


def random_feasible(rng, n, m):
    return rng.dirichlet(np.ones(m), size=n)


def literal_qp(problem, y):
    k = problem_kernel(problem)
    mu = problem.mu
    n = y.shape[0]
    pair = sum(k[a, b] * y[a] @ mu @ y[b] for a in range(n) for b in range(n) if a != b)
    return float(np.sum(problem.unary * y) + pair)


def literal_lp(problem, y):
    k = problem_kernel(problem)
    n = y.shape[0]
    pair = sum(k[a, b] * np.abs(y[a] - y[b]).sum() / 2 for a in range(n) for b in range(n) if a != b)
    return float(np.sum(problem.unary * y) + pair)


def all_labelings(n, m):
    return np.array(list(itertools.product(range(m), repeat=n)), dtype=np.int64)


def batch_energy(problem, labelings, k=None):
    """Energies of many labelings at once, straight from the definition."""
    k = problem_kernel(problem) if k is None else k
    mu = problem.mu
    n = problem.n_vars
    unary = problem.unary[np.arange(n), labelings].sum(axis=1)
    pair = (mu[labelings[:, :, None], labelings[:, None, :]] * k).sum(axis=(1, 2))
    return unary + pair


def exhaustive_ip(problem):
    labs = all_labelings(problem.n_vars, problem.n_labels)
    e = batch_energy(problem, labs)
    i = int(np.argmin(e))
    return float(e[i]), labs[i]


def lp_oracle(problem):
    """Exact Potts LP optimum via HiGHS on the expanded |y_a - y_b| formulation."""
    from scipy.optimize import linprog

    n, m = problem.unary.shape
    k = problem_kernel(problem)
    pairs = [(a, b) for a in range(n) for b in range(a + 1, n)]
    ny, nz = n * m, len(pairs) * m
    c = np.concatenate([problem.unary.ravel(), np.repeat([k[a, b] for a, b in pairs], m)])
    rows = []
    for p, (a, b) in enumerate(pairs):
        for i in range(m):
            for sign in (1.0, -1.0):
                r = np.zeros(ny + nz)
                r[a * m + i] = sign
                r[b * m + i] = -sign
                r[ny + p * m + i] = -1.0
                rows.append(r)
    a_eq = np.zeros((n, ny + nz))
    for a in range(n):
        a_eq[a, a * m:(a + 1) * m] = 1.0
    res = linprog(c, A_ub=np.array(rows) if rows else None, b_ub=np.zeros(len(rows)) if rows else None,
                  A_eq=a_eq, b_eq=np.ones(n), bounds=[(0, None)] * (ny + nz), method="highs")
    assert res.status == 0, res.message
    return float(res.fun), res.x[:ny].reshape(n, m)


def dense_cvx_matrix(problem):
    """(Psi + D) as an NM x NM matrix, variables ordered a-major."""
    k = problem_kernel(problem)
    mu = problem.mu
    n, m = problem.unary.shape
    psi = np.kron(k, mu)
    d = (np.abs(mu).sum(axis=1)[None, :] * k.sum(axis=1)[:, None]).ravel()
    return psi + np.diag(d), d.reshape(n, m)


def cvx_oracle(problem):
    """min (phi - d) . y + y'(Psi + D)y over the simplices, by CLARABEL through cvxpy."""
    import cvxpy as cp

    n, m = problem.unary.shape
    q, d = dense_cvx_matrix(problem)
    q = 0.5 * (q + q.T)
    w, v = np.linalg.eigh(q)
    root = v * np.sqrt(np.maximum(w, 0.0))
    y = cp.Variable(n * m)
    obj = cp.sum_squares(root.T @ y) + (problem.unary - d).ravel() @ y
    cons = [y >= 0] + [cp.sum(y[a * m:(a + 1) * m]) == 1 for a in range(n)]
    prob = cp.Problem(cp.Minimize(obj), cons)
    prob.solve(solver=cp.CLARABEL, tol_gap_abs=1e-12, tol_gap_rel=1e-12, tol_feas=1e-12)
    return float(prob.value), np.asarray(y.value).reshape(n, m)


def central_difference(f, y, h=1e-5):
    g = np.zeros_like(y)
    for idx in np.ndindex(*y.shape):
        e = np.zeros_like(y)
        e[idx] = h
        g[idx] = (f(y + e) - f(y - e)) / (2 * h)
    return g


def tie_free_point(rng, n, m, gap=1e-3):
    """Feasible y whose entries within each column are pairwise separated by more than ``gap``."""
    while True:
        y = random_feasible(rng, n, m)
        ok = all(np.diff(np.sort(y[:, k])).min(initial=1.0) > gap for k in range(m))
        if ok:
            return y


def two_level_tree(rng, m=4, r=2.0):
    """Root -> 2 internal nodes -> leaves, with edge lengths shrinking by r."""
    from densecrf_relax.lp import RHSTree

    top = rng.uniform(1.0, 2.0)
    parent = [-1, 0, 0]
    length = [0.0, top, top * rng.uniform(0.8, 1.0)]
    labels = {}
    for i in range(m):
        parent.append(1 + i % 2)
        length.append(length[1 + i % 2] / r * rng.uniform(0.5, 1.0))
        labels[len(parent) - 1] = i
    return RHSTree(parent, length, labels)


def literal_rhst(problem, tree, y):
    """r-HST LP objective from its definition: phi.y + sum_T c_T sum_{a<b} K_ab |y_a(T) - y_b(T)|."""
    k = problem_kernel(problem)
    sets = tree.leaf_sets()
    total = np.sum(problem.unary * y)
    for v in range(len(tree.parent)):
        if v == tree.root:
            continue
        yt = y[:, sets[v]].sum(axis=1)
        total += tree.length[v] * 0.5 * np.sum(k * np.abs(yt[:, None] - yt[None, :]))
    return total
