"""Parallel mean-field updates, the baseline the relaxations are compared to."""

import numpy as np
from scipy.special import softmax

from .energy import pairwise_product, qp_objective, rounded_energy
from .errors import InvalidParameter
from .model import check_feasible
from .trace import EnergyTrace, SolverResult

OSCILLATION_LIMIT = 10


def unary_softmax(problem):
    """Rows of softmax(-phi); the default starting point."""
    return softmax(-problem.unary, axis=1)


def _update(problem, messages):
    # softmax subtracts the row max before exponentiating
    return softmax(-problem.unary - messages, axis=1)


def mf_step(problem, q):
    """Q'_a(i) proportional to exp(-phi_a(i) - sum_j mu(i, j) sum_{b != a} K_ab Q_b(j))."""
    q = np.asarray(q, dtype=np.float64)
    return _update(problem, pairwise_product(problem, q))


def run_mf(problem, q0=None, max_iters=100, tol=1e-5, integer_trace=True, stage="mf"):
    """Iterate synchronous mean-field updates.

    Stops when the max-norm change of Q drops below ``tol``, after
    ``max_iters`` steps, or once the QP objective has changed direction
    ``OSCILLATION_LIMIT`` times in a row; in the last case the best Q seen
    is returned. Each trace row reuses the filter pass of the next update.
    """
    if max_iters < 0:
        raise InvalidParameter(f"max_iters must be >= 0, got {max_iters}")
    q = unary_softmax(problem) if q0 is None else check_feasible(q0, *problem.unary.shape)
    trace = EnergyTrace(stage)

    def observe(t, q):
        msg = pairwise_product(problem, q)
        obj = qp_objective(problem, q, psi_y=msg)
        trace.record(t, obj, rounded_energy(problem, q, integer_trace))
        return msg, obj

    msg, obj = observe(0, q)
    best_q, best_obj = q, obj
    prev_obj, prev_delta, flips = obj, 0.0, 0
    stop = "max_iters"
    for t in range(1, max_iters + 1):
        q_new = _update(problem, msg)
        change = np.abs(q_new - q).max()
        q = q_new
        msg, obj = observe(t, q)
        if obj < best_obj:
            best_q, best_obj = q, obj
        delta = obj - prev_obj
        flips = flips + 1 if delta * prev_delta < 0 else 0
        prev_obj, prev_delta = obj, delta
        if flips >= OSCILLATION_LIMIT:
            return SolverResult(best_q, trace, {"stop": "oscillation", "iters": t, "objective": best_obj})
        if change < tol:
            stop = "converged"
            break
    else:
        t = max_iters
    return SolverResult(q, trace, {"stop": stop, "iters": t, "objective": obj})
