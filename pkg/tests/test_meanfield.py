import numpy as np
import pytest
from scipy.special import softmax

from densecrf_relax.meanfield import mf_step, run_mf, unary_softmax
from densecrf_relax.model import KernelSpec, MatrixCompat, ProblemInstance, uniform_assignment

from helpers import problem_kernel, random_feasible, random_problem, tiny3


def test_symmetric_fixed_point():
    p = tiny3(m=3)
    q = uniform_assignment(3, 3)
    assert np.allclose(mf_step(p, q), q, rtol=0, atol=1e-15)


def test_decoupled_step_is_unary_softmax():
    rng = np.random.default_rng(0)
    p = tiny3(unary=rng.normal(size=(3, 4)), m=4, compat=MatrixCompat(np.zeros((4, 4))))
    out = mf_step(p, random_feasible(rng, 3, 4))
    assert np.allclose(out, softmax(-p.unary, axis=1), rtol=1e-14)


def test_tiny3_step_matches_literal_messages():
    rng = np.random.default_rng(1)
    p = tiny3(unary=rng.normal(size=(3, 2)))
    q = random_feasible(rng, 3, 2)
    k = problem_kernel(p)
    mu = p.mu
    ref = np.empty((3, 2))
    for a in range(3):
        e = [np.exp(-p.unary[a, i] - sum(mu[i, j] * k[a, b] * q[b, j] for j in range(2) for b in range(3) if b != a))
             for i in range(2)]
        ref[a] = np.array(e) / sum(e)
    assert np.allclose(mf_step(p, q), ref, rtol=1e-8, atol=0)


def test_max_iters_zero_returns_start():
    rng = np.random.default_rng(2)
    p = random_problem(rng, 10, 3)
    q0 = random_feasible(rng, 10, 3)
    res = run_mf(p, q0, max_iters=0)
    assert np.array_equal(res.y, q0)
    assert len(res.trace) == 1


def test_mf5_runs_exactly_five_steps():
    rng = np.random.default_rng(3)
    p = random_problem(rng, 10, 3)
    before = p.filter.n_applies
    res = run_mf(p, max_iters=5, tol=0.0)
    assert res.info["iters"] == 5 and len(res.trace) == 6
    # one filter pass per step plus the initial evaluation
    assert p.filter.n_applies - before == 6
    q = unary_softmax(p)
    for _ in range(5):
        q = mf_step(p, q)
    assert np.array_equal(res.y, q)


def test_decoupled_converges_in_one_step():
    rng = np.random.default_rng(4)
    p = tiny3(unary=rng.normal(size=(3, 3)), m=3, compat=MatrixCompat(np.zeros((3, 3))))
    res = run_mf(p, random_feasible(rng, 3, 3))
    assert res.info["stop"] == "converged" and res.info["iters"] <= 2
    assert np.allclose(res.y, softmax(-p.unary, axis=1))


def test_rows_on_simplex_and_deterministic():
    rng = np.random.default_rng(5)
    p = random_problem(rng, 50, 4, scale=0.5)
    a = run_mf(p, max_iters=20)
    b = run_mf(p, max_iters=20)
    assert np.array_equal(a.y, b.y)
    assert np.abs(a.y.sum(axis=1) - 1).max() < 1e-12
    assert a.y.min() >= 0


def test_integer_trace_toggle():
    rng = np.random.default_rng(6)
    p = random_problem(rng, 8, 2)
    assert np.isnan(run_mf(p, max_iters=2, integer_trace=False).trace.integer).all()
    assert np.isfinite(run_mf(p, max_iters=2).trace.integer).all()


def test_oscillation_returns_best_seen():
    # two strongly coupled points starting on opposite labels swap labels every synchronous step
    strong = ProblemInstance(np.array([[0.0, 0.3], [0.3, 0.0]]), [KernelSpec(50.0, np.zeros((2, 1)))])
    res = run_mf(strong, np.array([[0.9, 0.1], [0.1, 0.9]]), max_iters=100)
    assert res.info["stop"] == "oscillation"
    assert res.info["objective"] == pytest.approx(min(res.trace.relaxed))
