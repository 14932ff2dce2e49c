"""Objective functions: integer energy, QP, convexified QP and LP.

Ordered pairs are counted both ways throughout, so for Potts a disagreeing
pair (a, b) contributes 2 K_ab to the energy.
"""

import numpy as np

from .errors import UnsupportedCompat
from .model import Potts, TreeCompat, check_labeling, one_hot, round_argmax

LITERAL_MAX_N = 512


def pairwise_product(problem, y):
    """(K - w I) Y mu, the pairwise operator Psi applied to y in matrix form. One filter pass."""
    return problem.filter.apply(y, include_self=False) @ problem.mu


def ip_energy(problem, labels):
    """sum_a phi_a(x_a) + sum_{a != b} mu(x_a, x_b) K_ab."""
    n, m = problem.unary.shape
    labels = check_labeling(labels, n, m)
    unary = problem.unary[np.arange(n), labels].sum()
    if n <= LITERAL_MAX_N:
        k = problem.filter.dense_matrix()
        mu = problem.mu
        pair = mu[labels[:, None], labels[None, :]] * k
        # the diagonal of mu is zero, so the a == b terms vanish
        return float(unary + pair.sum() - np.trace(pair))
    y = one_hot(labels, m)
    return float(unary + np.sum(y * pairwise_product(problem, y)))


def qp_objective(problem, y, psi_y=None):
    """phi . y + y' Psi y, with Psi = mu (x) (K - w I)."""
    y = np.asarray(y, dtype=np.float64)
    if psi_y is None:
        psi_y = pairwise_product(problem, y)
    return float(np.sum(problem.unary * y) + np.sum(y * psi_y))


def d_vector(problem):
    """d_a(i) = (sum_j |mu(i, j)|) * sum_{b != a} K_ab."""
    if isinstance(problem.compat, TreeCompat):
        raise UnsupportedCompat("the diagonal-dominance vector needs a Potts or matrix compatibility")
    row_abs = np.abs(problem.mu).sum(axis=1)
    return np.outer(problem.filter.row_sums_excluding_self(), row_abs)


def cvx_objective(problem, y, d=None, psi_y=None):
    """(phi - d) . y + y' (Psi + D) y."""
    y = np.asarray(y, dtype=np.float64)
    if d is None:
        d = d_vector(problem)
    if psi_y is None:
        psi_y = pairwise_product(problem, y)
    return float(np.sum((problem.unary - d) * y) + np.sum(y * psi_y) + np.sum(d * y * y))


def sorted_order(column):
    """Stable descending order of one label column; ties keep index order."""
    return np.argsort(-np.asarray(column), kind="stable")


def sorted_pair_terms(filt, values):
    """U - L of the descending sort of ``values``, in original indexing.

    U_c sums K over variables sorted after c, L_c over those before. Tied
    entries get the average over both tie orders, so pairs inside a tie
    cancel: the result is sum_{a: v_a < v_c} K_ac - sum_{a: v_a > v_c} K_ac.
    The second pass only runs when ``values`` has ties.
    """
    values = np.asarray(values, dtype=np.float64)
    n = len(values)
    order = sorted_order(values)
    upper, lower = filt.triangular_sums(order)
    out = np.empty(n)
    out[order] = upper - lower
    ranked = values[order]
    if n > 1 and np.any(ranked[1:] == ranked[:-1]):
        reverse = np.lexsort((-np.arange(n), -values))
        upper, lower = filt.triangular_sums(reverse)
        other = np.empty(n)
        other[reverse] = upper - lower
        out = 0.5 * (out + other)
    return out


def label_pair_terms(problem, y):
    """Per label k, :func:`sorted_pair_terms` of y[:, k]. Returns an N x M matrix."""
    y = np.asarray(y, dtype=np.float64)
    return np.column_stack([sorted_pair_terms(problem.filter, y[:, k]) for k in range(y.shape[1])])


def _check_potts(problem):
    if not isinstance(problem.compat, Potts):
        raise UnsupportedCompat("the LP objective handles Potts only; use the r-HST path for tree metrics")


def lp_objective(problem, y, pair_terms=None):
    """sum phi y + sum_{a != b} sum_i K_ab |y_a(i) - y_b(i)| / 2 via sorted triangular sums."""
    _check_potts(problem)
    # the sorted form equals the absolute-value form for any real y
    y = np.asarray(y, dtype=np.float64)
    if pair_terms is None:
        pair_terms = label_pair_terms(problem, y)
    return float(np.sum(problem.unary * y) + np.sum(y * pair_terms))


def rounded_energy(problem, y, enabled=True):
    """ip_energy of the argmax rounding of y, or NaN when disabled."""
    return ip_energy(problem, round_argmax(y)) if enabled else float("nan")
