"""Difference-of-convex relaxations minimized by the concave-convex procedure.

Both variants write the QP objective as p(y) - q(y) with p, q convex, then
repeatedly replace q by its tangent at y_t and minimize the convex surrogate.

* generic: p = cvx_objective, q(y) = y' D y - d . y. The surrogate is the
  convex QP again with linear term phi - 2 d * y_t, solved by Frank-Wolfe.
* negdef: with mu = mu~ + c 11' and mu~ negative semi-definite, take
  q(y) = -y' (mu~ (x) K) y (K including its diagonal) and
  p(y) = phi . y - w sum_a y_a' mu~ y_a. The surrogate decouples over pixels.
"""

import numpy as np

from .energy import d_vector, rounded_energy
from .errors import InvalidParameter, UnsupportedCompat
from .frank_wolfe import FWCache, apply_psi_d, run_frank_wolfe
from .model import canonicalize_compat, check_feasible, uniform_assignment
from .trace import EnergyTrace, SolverResult

DEFAULT_OUTER = 20
DEFAULT_TOL = 1e-5


def _converged(prev, cur, tol):
    return prev - cur < tol * max(abs(prev), 1e-12)


def generic_split(problem, y, d=None):
    """(p, q) of the diagonal-dominance split at y; p - q equals qp_objective."""
    if d is None:
        d = d_vector(problem)
    psi_d_y = apply_psi_d(problem, y, d)
    p = float(np.sum((problem.unary - d) * y) + np.sum(y * psi_d_y))
    q = float(np.sum(d * y * y) - np.sum(d * y))
    return p, q


def negdef_split(problem, y, shifted=None):
    """(p, q) of the negative-definite split at y, plus the constant offset c sum K.

    p - q + offset equals qp_objective for feasible y.
    """
    if shifted is None:
        shifted = canonicalize_compat(problem.compat, problem.n_labels)
    filt = problem.filter
    w = filt.w_total
    mu_t = shifted.shifted
    k_full_y = filt.apply(y, include_self=True)
    p = float(np.sum(problem.unary * y) - w * np.sum(y * (y @ mu_t)))
    q = -float(np.sum(y * (k_full_y @ mu_t)))
    offset = shifted.offset_coeff * float(filt.row_sums_excluding_self().sum())
    return p, q, offset


def run_cccp_generic(problem, y0=None, outer_iters=DEFAULT_OUTER, tol=DEFAULT_TOL, inner_iters=20,
                     inner_gap_tol=1e-3, integer_trace=True, stage="dcgen"):
    """CCCP on the diagonal-dominance split; inner problems by warm-started Frank-Wolfe."""
    n, m = problem.unary.shape
    if outer_iters < 0:
        raise InvalidParameter(f"outer_iters must be >= 0, got {outer_iters}")
    y = uniform_assignment(n, m) if y0 is None else np.array(check_feasible(y0, n, m))
    d = d_vector(problem)
    cache = FWCache(apply_psi_d(problem, y, d))
    trace = EnergyTrace(stage)

    def qp_from_cache(y):
        return float(np.sum(problem.unary * y) + np.sum(y * (cache.psi_d_y - d * y)))

    obj = qp_from_cache(y)
    trace.record(0, obj, rounded_energy(problem, y, integer_trace))
    inner_counts = []
    stop = "max_iters"
    for t in range(1, outer_iters + 1):
        # tangent of q(y) = y'Dy - d.y at y_t is 2 d y_t - d
        res = run_frank_wolfe(problem, y, max_iters=inner_iters, gap_tol=inner_gap_tol, d=d,
                              linear=problem.unary - 2.0 * d * y, cache=cache, integer_trace=False)
        inner_counts.append(res.info["iters"])
        y, cache = res.y, res.info["cache"]
        prev, obj = obj, qp_from_cache(y)
        trace.record(t, obj, rounded_energy(problem, y, integer_trace))
        if _converged(prev, obj, tol):
            stop = "converged"
            break
    return SolverResult(y, trace, {"stop": stop, "objective": obj, "inner_iters": inner_counts})


def solve_pixelwise_convex(phi_eff, mu_tilde, y0=None, iters=50, tol=1e-9):
    """Minimize phi_eff_a . y - y' mu_tilde y over the simplex, independently per row.

    Frank-Wolfe with away steps and exact line search, vectorized over rows.
    Away steps let the iterate drop labels, which plain Frank-Wolfe only does
    asymptotically. Each step is monotone, so the result never does worse than
    ``y0``. Accepts one row (length M) or a batch (N x M).
    """
    phi_eff = np.asarray(phi_eff, dtype=np.float64)
    single = phi_eff.ndim == 1
    c = np.atleast_2d(phi_eff)
    n, m = c.shape
    h = -np.asarray(mu_tilde, dtype=np.float64)
    x = uniform_assignment(n, m) if y0 is None else np.array(np.atleast_2d(y0), dtype=np.float64)
    rows = np.arange(n)
    for _ in range(iters):
        grad = c + 2.0 * (x @ h)
        s = np.argmin(grad, axis=1)
        masked = np.where(x > 0, grad, -np.inf)
        v = np.argmax(masked, axis=1)
        gx = np.sum(grad * x, axis=1)
        fw_gap = gx - grad[rows, s]
        away_gap = grad[rows, v] - gx
        active = fw_gap > tol
        if not active.any():
            break
        use_fw = fw_gap >= away_gap
        direction = -x.copy()
        direction[rows, s] += 1.0
        away_dir = x.copy()
        away_dir[rows, v] -= 1.0
        direction = np.where(use_fw[:, None], direction, away_dir)
        xv = x[rows, v]
        with np.errstate(divide="ignore"):
            gmax = np.where(use_fw, 1.0, np.where(xv < 1.0, xv / (1.0 - xv), np.inf))
        slope = np.sum(grad * direction, axis=1)
        curv = np.sum(direction * (direction @ h), axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            gamma = np.where(curv > 1e-15, -slope / (2.0 * curv), np.where(slope < 0, gmax, 0.0))
        gamma = np.clip(gamma, 0.0, gmax)
        gamma = np.where(active & np.isfinite(gamma), gamma, 0.0)
        x = x + gamma[:, None] * direction
        drop = (~use_fw) & (gamma >= gmax) & active
        x[rows[drop], v[drop]] = 0.0
        x = np.maximum(x, 0.0)
        x /= x.sum(axis=1, keepdims=True)
    return x[0] if single else x


def run_cccp_negdef(problem, y0=None, outer_iters=DEFAULT_OUTER, tol=DEFAULT_TOL, pixel_iters=50,
                    pixel_tol=1e-9, integer_trace=True, stage="dcneg"):
    """CCCP on the negative semi-definite split: one filter pass per outer iteration.

    The pass on y_t gives both the objective at y_t and the tangent of q.
    Objectives are reported in the original scale (shift offset added back).
    """
    n, m = problem.unary.shape
    if outer_iters < 0:
        raise InvalidParameter(f"outer_iters must be >= 0, got {outer_iters}")
    shifted = canonicalize_compat(problem.compat, m)
    if not shifted.is_nsd:
        raise UnsupportedCompat("label compatibility has no negative semi-definite shift")
    y = uniform_assignment(n, m) if y0 is None else np.array(check_feasible(y0, n, m))
    filt = problem.filter
    mu_t = shifted.shifted
    w = filt.w_total
    offset = shifted.offset_coeff * float(filt.row_sums_excluding_self().sum())
    trace = EnergyTrace(stage)
    applies = []
    obj = None
    stop = "max_iters"
    for t in range(outer_iters + 1):
        before = filt.n_applies
        k0_y_mu = filt.apply(y, include_self=False) @ mu_t
        prev, obj = obj, float(np.sum(problem.unary * y) + np.sum(y * k0_y_mu)) + offset
        trace.record(t, obj, rounded_energy(problem, y, integer_trace))
        if prev is not None and _converged(prev, obj, tol):
            stop = "converged"
            break
        if t == outer_iters:
            break
        # gradient of the concave part: 2 (mu~ (x) K) y_t with K's diagonal included
        g = 2.0 * (k0_y_mu + w * (y @ mu_t))
        y = solve_pixelwise_convex(problem.unary + g, w * mu_t, y, iters=pixel_iters, tol=pixel_tol)
        applies.append(filt.n_applies - before)
    return SolverResult(y, trace, {"stop": stop, "objective": obj, "applies_per_outer": applies})
