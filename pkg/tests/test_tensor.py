import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from polymatch.errors import ShapeCapError, ValidationError
from polymatch.tensor import (
    check_shape,
    check_tensor,
    diagonal,
    ground_truth,
    inner,
    lse,
    marginal,
    set_max_elements,
    tensor_sum,
    uniform,
)

from .conftest import brute_marginal

small_shapes = st.tuples(st.integers(1, 4), st.integers(1, 4))


@pytest.mark.parametrize("n,k", [(1, 1), (3, 2), (2, 5), (4, 3)])
def test_marginal_of_uniform_and_ground_truth(n, k):
    for axis in range(1, k + 1):
        np.testing.assert_allclose(marginal(uniform(n, k), axis), np.full(n, 1 / n), rtol=1e-14)
        np.testing.assert_allclose(marginal(ground_truth(n, k), axis), np.full(n, 1 / n), rtol=1e-14)


def test_marginal_row_sums():
    P = np.array([[0.5, 0.0], [0.0, 0.5]])
    np.testing.assert_array_equal(marginal(P, 1), [0.5, 0.5])


def test_marginal_matches_loop(rng):
    P = rng.random((3, 3, 3, 3))
    for axis in range(1, 5):
        np.testing.assert_allclose(marginal(P, axis), brute_marginal(P, axis - 1), rtol=1e-13)


@pytest.mark.parametrize("axis", [0, 3, -1])
def test_marginal_axis_out_of_range(axis):
    with pytest.raises(ValidationError):
        marginal(np.ones((2, 2)), axis)


def test_tensor_sum_examples():
    assert not tensor_sum(np.zeros((3, 4))).any()
    np.testing.assert_array_equal(tensor_sum(np.array([[1.0, 10.0], [2.0, 20.0]])), [[11, 21], [12, 22]])
    out = tensor_sum(np.array([[1.5, -2.0, 4.0]]))
    assert out.shape == (1, 1, 1) and out[0, 0, 0] == 3.5


@given(arrays(np.float64, (3, 3), elements=st.floats(-1e3, 1e3)), arrays(np.float64, (3, 3), elements=st.floats(-1e3, 1e3)))
def test_tensor_sum_linear(F, G):
    np.testing.assert_allclose(tensor_sum(F + G), tensor_sum(F) + tensor_sum(G), atol=1e-9)


def test_lse_counts():
    assert lse(np.zeros((2, 2)), [1, 2]) == pytest.approx(math.log(4), abs=1e-15)
    np.testing.assert_allclose(lse(np.zeros((5, 5, 5)), [2]), np.full((5, 5), math.log(5)), atol=1e-15)


def test_lse_neg_inf_entries():
    A = np.array([[-np.inf, 0.0], [-np.inf, -np.inf]])
    out = lse(A, [2])
    assert out[0] == 0.0 and out[1] == -np.inf


def test_lse_errors():
    with pytest.raises(ValidationError):
        lse(np.zeros((2, 2)), [])
    with pytest.raises(ValidationError):
        lse(np.array([[np.nan, 0.0], [0.0, 0.0]]), [1])


def test_lse_huge_magnitudes_against_extended_precision(rng):
    mpmath.mp.dps = 50
    A = rng.uniform(-1e6, 1e6, size=(4, 4, 4))
    got = lse(A, [1, 3])
    for j in range(4):
        exact = mpmath.log(mpmath.fsum(mpmath.exp(mpmath.mpf(a)) for a in A[:, j, :].ravel()))
        assert abs(got[j] - float(exact)) <= 1e-9 * max(1.0, abs(float(exact)))
    # rescaled into [-1, 1] the naive formula is safe
    B = A / 1e6
    np.testing.assert_allclose(lse(B, [1, 2, 3]), np.log(np.sum(np.exp(B))), rtol=1e-14)


@settings(max_examples=50)
@given(arrays(np.float64, (3, 3, 3), elements=st.floats(-50, 50)), st.floats(-1e3, 1e3), st.sampled_from([[1], [2, 3], [1, 2, 3]]))
def test_lse_shift_law(A, c, axes):
    np.testing.assert_allclose(np.asarray(lse(A + c, axes)), np.asarray(lse(A, axes)) + c, atol=1e-12, rtol=0)


def test_inner_examples():
    C = np.arange(27.0).reshape(3, 3, 3)
    assert inner(ground_truth(3, 3), C) == pytest.approx(np.mean(diagonal(C)), abs=1e-14)
    assert inner(np.zeros((2, 2)), np.ones((2, 2))) == 0.0
    assert inner(np.array([[1.0, 2.0], [3.0, 4.0]]), np.eye(2)) == 5.0
    with pytest.raises(ValidationError):
        inner(np.ones((2, 2)), np.ones((3, 3)))


@settings(max_examples=40)
@given(small_shapes, st.integers(0, 2**32 - 1))
def test_marginal_mass_equals_inner_with_ones(shape, seed):
    n, k = shape
    P = np.random.default_rng(seed).random((n,) * k)
    total = inner(P, np.ones_like(P))
    for axis in range(1, k + 1):
        assert abs(marginal(P, axis).sum() - total) <= 1e-12 * total


def test_inner_is_deterministic(rng):
    A, B = rng.standard_normal((2, 9, 9, 9))
    assert inner(A, B) == inner(A.copy(), B.copy())


def test_shape_cap():
    with pytest.raises(ShapeCapError):
        check_shape(2, 29)
    prev = set_max_elements(100)
    try:
        check_shape(10, 2)
        with pytest.raises(ShapeCapError):
            check_shape(5, 3)
    finally:
        set_max_elements(prev)


def test_check_tensor_rejects():
    with pytest.raises(ValidationError):
        check_tensor(np.ones((2, 3)))
    with pytest.raises(ValidationError):
        check_tensor(np.array([[1.0, np.inf], [0.0, 0.0]]))
    with pytest.raises(ValidationError):
        check_shape(0, 2)


def test_row_major_indexing_law():
    n, k = 3, 3
    A = np.arange(float(n**k)).reshape((n,) * k)
    flat = A.ravel()
    for idx in [(0, 0, 0), (1, 2, 0), (2, 2, 2), (0, 1, 2)]:
        # 0-based version of sum (i_l - 1) n^(k - l)
        linear = sum(i * n ** (k - 1 - l) for l, i in enumerate(idx))
        assert flat[linear] == A[idx]
