"""Frank-Wolfe on the convex QP relaxation with a closed-form step.

The objective is l . y + y' (Psi + D) y over the product of simplices, with
l = phi - d by default. (Psi + D) y is maintained through the linearity of the
update, so every iteration after the first costs a single filter pass.
"""

from dataclasses import dataclass

import numpy as np

from .energy import d_vector, pairwise_product, rounded_energy
from .errors import InvalidInput, InvalidParameter
from .model import check_feasible, one_hot, uniform_assignment
from .trace import EnergyTrace, SolverResult

DEGENERATE_CURVATURE = 1e-12


@dataclass
class FWCache:
    """(Psi + D) y for the current iterate and the last conditional gradient."""

    psi_d_y: np.ndarray
    psi_d_s: np.ndarray = None
    alpha_last: float = float("nan")


def apply_psi_d(problem, y, d):
    """(Psi + D) y with one filter pass."""
    return pairwise_product(problem, y) + d * y


def gradient_cvx(problem, y, d=None, cache=None, linear=None):
    """l + 2 (Psi + D) y, reusing ``cache.psi_d_y`` when given."""
    if d is None:
        d = d_vector(problem)
    if linear is None:
        linear = problem.unary - d
    psi_d_y = cache.psi_d_y if cache is not None else apply_psi_d(problem, y, d)
    return linear + 2.0 * psi_d_y


def conditional_gradient(grad):
    """One-hot rows at the smallest gradient entry (ties to the smallest index)."""
    grad = np.asarray(grad)
    if not np.all(np.isfinite(grad)):
        raise InvalidInput("gradient must be finite")
    return one_hot(np.argmin(grad, axis=1), grad.shape[1])


def step_from_coefficients(slope, curvature):
    """Minimizer over [0, 1] of slope * a + curvature * a^2."""
    if curvature <= DEGENERATE_CURVATURE:
        return 1.0 if slope < 0 else 0.0
    return float(np.clip(-slope / (2.0 * curvature), 0.0, 1.0))


def optimal_step(problem, y, s, cache, d=None, linear=None):
    """Exact line search along s - y given (Psi + D) y and (Psi + D) s in ``cache``."""
    grad = gradient_cvx(problem, y, d, cache, linear)
    direction = s - y
    slope = float(np.sum(grad * direction))
    curvature = float(np.sum(direction * (cache.psi_d_s - cache.psi_d_y)))
    return step_from_coefficients(slope, curvature)


def run_frank_wolfe(problem, y0=None, max_iters=100, gap_tol=1e-3, d=None, linear=None,
                    cache=None, integer_trace=True, debug=False, stage="qp", offset=0.0):
    """Minimize l . y + y' (Psi + D) y by Frank-Wolfe.

    Stops once the FW gap falls below ``gap_tol`` times the initial gap, or
    after ``max_iters`` iterations. ``linear`` overrides l = phi - d (CCCP
    inner solves), and a ``cache`` carried over from a previous run saves the
    first filter pass. The trace records the objective plus ``offset``.
    ``info`` holds the final cache, the gap history and the QP objective.
    """
    n, m = problem.unary.shape
    if max_iters < 0:
        raise InvalidParameter(f"max_iters must be >= 0, got {max_iters}")
    y = uniform_assignment(n, m) if y0 is None else np.array(check_feasible(y0, n, m))
    if d is None:
        d = d_vector(problem)
    if linear is None:
        linear = problem.unary - d
    if cache is None:
        cache = FWCache(apply_psi_d(problem, y, d))
    trace = EnergyTrace(stage)
    gaps = []
    gap0 = None
    stop = "max_iters"
    for t in range(max_iters + 1):
        grad = linear + 2.0 * cache.psi_d_y
        obj = float(np.sum(linear * y) + np.sum(y * cache.psi_d_y))
        trace.record(t, obj + offset, rounded_energy(problem, y, integer_trace))
        if t == max_iters:
            break
        s = conditional_gradient(grad)
        gap = float(np.sum(grad * (y - s)))
        gaps.append(gap)
        if gap0 is None:
            gap0 = gap
        if gap <= gap_tol * gap0 or gap <= 0.0:
            stop = "gap"
            break
        cache.psi_d_s = apply_psi_d(problem, s, d)
        direction = s - y
        curvature = float(np.sum(direction * (cache.psi_d_s - cache.psi_d_y)))
        alpha = step_from_coefficients(-gap, curvature)
        y = y + alpha * direction
        cache.psi_d_y = (1.0 - alpha) * cache.psi_d_y + alpha * cache.psi_d_s
        cache.alpha_last = alpha
        if debug:
            fresh = apply_psi_d(problem, y, d)
            err = np.abs(fresh - cache.psi_d_y).max()
            if err > 1e-6 * max(np.abs(fresh).max(), 1.0):
                raise AssertionError(f"cached (Psi + D) y drifted by {err}")
    qp = float(np.sum(problem.unary * y) + np.sum(y * (cache.psi_d_y - d * y)))
    return SolverResult(y, trace, {"cache": cache, "gaps": gaps, "stop": stop, "iters": t, "qp_objective": qp})
