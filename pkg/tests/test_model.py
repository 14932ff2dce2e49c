import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from densecrf_relax.errors import InvalidInput, InvalidParameter, UnsupportedCompat
from densecrf_relax.model import (
    KernelSpec, MatrixCompat, Potts, ProblemInstance, TreeCompat, build_features, canonicalize_compat,
    check_feasible, check_labeling, one_hot, round_argmax,
)
from densecrf_relax.energy import qp_objective

from helpers import literal_qp, random_feasible, random_problem


PARAMS = dict(w1=1.0, sigma1=3.0, w2=1.0, sigma_spc=50.0, sigma_col=10.0)


def test_features_single_pixel():
    img = np.array([[[10, 20, 30]]], dtype=np.uint8)
    k1, k2 = build_features(img, **PARAMS)
    assert np.array_equal(k1.features, [[0.0, 0.0]])
    assert np.allclose(k2.features, [[0.0, 0.0, 1.0, 2.0, 3.0]])


def test_features_identical_colors_differ_only_spatially():
    img = np.full((2, 1, 3), 77, dtype=np.uint8)
    _, k2 = build_features(img, 1.0, 3.0, 1.0, 50.0, 1.0)
    assert np.array_equal(k2.features[0, 2:], k2.features[1, 2:])
    assert not np.array_equal(k2.features[0, :2], k2.features[1, :2])


def test_features_2x2_scalar_oracle():
    rng = np.random.default_rng(0)
    img = rng.integers(0, 256, size=(2, 2, 3)).astype(np.uint8)
    k1, k2 = build_features(img, **PARAMS)
    assert (k1.weight, k2.weight) == (1.0, 1.0)
    for row in range(2):
        for col in range(2):
            a = row * 2 + col
            assert k1.features[a].tolist() == [col / 3.0, row / 3.0]
            expect = [col / 50.0, row / 50.0] + [float(img[row, col, c]) / 10.0 for c in range(3)]
            assert k2.features[a].tolist() == expect


def test_features_channel_order_symmetry_for_gray():
    img = np.repeat(np.arange(6, dtype=np.uint8).reshape(2, 3, 1) * 40, 3, axis=2)
    a = build_features(img, **PARAMS)[1].features
    b = build_features(img[:, :, ::-1], **PARAMS)[1].features
    assert np.array_equal(a, b)
    color = img.copy()
    color[..., 0] = 255
    c = build_features(color, **PARAMS)[1].features
    d = build_features(color[:, :, ::-1], **PARAMS)[1].features
    assert not np.array_equal(c, d)


@pytest.mark.parametrize("bad", [dict(sigma1=0.0), dict(sigma_col=-1.0), dict(w2=-0.5)])
def test_features_reject_bad_params(bad):
    with pytest.raises(InvalidParameter):
        build_features(np.zeros((2, 2, 3)), **{**PARAMS, **bad})


def test_problem_validation():
    k = [KernelSpec(1.0, np.zeros((3, 1)))]
    with pytest.raises(InvalidInput):
        ProblemInstance(np.zeros((4, 2)), k)
    with pytest.raises(InvalidInput):
        ProblemInstance(np.full((3, 2), np.nan), k)
    with pytest.raises(InvalidInput):
        ProblemInstance(np.zeros((3, 2)), k, MatrixCompat(np.zeros((3, 3))))
    with pytest.raises(InvalidInput):
        MatrixCompat(np.array([[0.0, 1.0], [2.0, 0.0]]))
    with pytest.raises(InvalidParameter):
        KernelSpec(-1.0, np.zeros((3, 1)))


def test_canonicalize_potts():
    s = canonicalize_compat(Potts(), 3)
    assert np.array_equal(s.shifted, -np.eye(3))
    assert s.offset_coeff == 1.0 and s.is_nsd


def test_canonicalize_zero():
    s = canonicalize_compat(MatrixCompat(np.zeros((3, 3))), 3)
    assert np.array_equal(s.shifted, np.zeros((3, 3)))
    assert s.offset_coeff == 0.0 and s.is_nsd


def test_canonicalize_random_matches_eigensolver():
    rng = np.random.default_rng(1)
    for _ in range(50):
        a = rng.normal(size=(4, 4))
        mu = a + a.T
        np.fill_diagonal(mu, 0.0)
        s = canonicalize_compat(MatrixCompat(mu), 4)
        assert np.allclose(s.shifted + s.offset_coeff, mu)
        top = np.linalg.eigvalsh(s.shifted)[-1]
        assert s.is_nsd == (top <= 1e-8)


def test_canonicalize_rejects_tree():
    from helpers import two_level_tree

    with pytest.raises(UnsupportedCompat):
        canonicalize_compat(TreeCompat(two_level_tree(np.random.default_rng(0))), 4)


def test_round_argmax_examples():
    y = one_hot([2, 0, 1], 3)
    assert round_argmax(y).tolist() == [2, 0, 1]
    assert round_argmax(np.full((1, 3), 1 / 3)).tolist() == [0]
    assert round_argmax(np.array([[0.2, 0.5, 0.3]])).tolist() == [1]


@given(st.lists(st.integers(0, 4), min_size=1, max_size=20))
def test_round_argmax_idempotent_on_one_hot(labels):
    y = one_hot(labels, 5)
    assert np.array_equal(one_hot(round_argmax(y), 5), y)


def test_check_helpers():
    with pytest.raises(InvalidInput):
        check_labeling(np.array([0, 3]), 2, 3)
    with pytest.raises(InvalidInput):
        check_feasible(np.array([[0.5, 0.6]]), 1, 2)
    check_feasible(np.array([[0.5, 0.5]]), 1, 2)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.integers(2, 7), st.integers(2, 4))
def test_shifted_objective_equals_qp(seed, n, m):
    """phi.y - y'(I (x) K)y + c sum K equals the unshifted QP on feasible points (Potts)."""
    rng = np.random.default_rng(seed)
    p = random_problem(rng, n, m)
    y = random_feasible(rng, n, m)
    k = p.filter.dense_matrix() - p.filter.w_total * np.eye(n)
    shifted = np.sum(p.unary * y) - np.sum(y * (k @ y)) + k.sum()
    ref = literal_qp(p, y)
    assert shifted == pytest.approx(ref, rel=1e-6, abs=1e-9)
    assert qp_objective(p, y) == pytest.approx(ref, rel=1e-6, abs=1e-9)
