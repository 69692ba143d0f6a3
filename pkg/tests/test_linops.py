import numpy as np
import pytest
from scipy.fft import dctn
from scipy.linalg import hadamard

from csnewton.linops import (
    LinearOperator,
    SamplingMask,
    estimate_delta,
    make_dense_dictionary,
    make_gradient2d,
    make_mask,
    make_partial_dct2,
    make_partial_walsh01,
    to_dense,
)


def assert_adjoint_consistent(op, rng, pairs=100, rtol=1e-10):
    complex_in = op.field == "complex"
    for _ in range(pairs):
        u = rng.standard_normal(op.cols)
        if complex_in:
            u = u + 1j * rng.standard_normal(op.cols)
        v = rng.standard_normal(op.rows)
        lhs = np.vdot(op.apply(u), v)
        rhs = np.vdot(u, op.adjoint_apply(v))
        assert abs(lhs - rhs) <= rtol * max(1.0, abs(lhs))


def test_operator_dimension_validation():
    with pytest.raises(ValueError):
        LinearOperator(0, 3, "real", lambda x: x, lambda x: x)
    with pytest.raises(ValueError):
        LinearOperator(3, 3, "quaternion", lambda x: x, lambda x: x)


def test_mask_sorted_distinct_and_seeded():
    m1 = make_mask(100, 25, seed=7)
    m2 = make_mask(100, 25, seed=7)
    assert np.array_equal(m1.selected_indices, m2.selected_indices)
    assert len(m1) == 25
    assert np.all(np.diff(m1.selected_indices) > 0)
    with pytest.raises(ValueError):
        SamplingMask(np.array([3, 3, 5]), seed=0)


def test_mask_include_first():
    m = make_mask(64, 16, seed=3, include_first=True)
    assert m.selected_indices[0] == 0
    assert len(m) == 16


# ---------------------------------------------------------------------------
# 2D gradient
# ---------------------------------------------------------------------------


def test_gradient2d_constant_image_maps_to_zero():
    W = make_gradient2d(5, 7)
    x = np.full(35, 0.7)
    assert np.all(W.adjoint_apply(x) == 0)


def test_gradient2d_2x2_stencil():
    # columns of the image: [a, b] and [c, d]; column-stacked x = [a, b, c, d]
    a, b, c, d = 1.0, 2.0, 4.0, 8.0
    W = make_gradient2d(2, 2)
    y = W.adjoint_apply(np.array([a, b, c, d]))
    expected = np.array([(c - a) + 1j * (b - a), (d - b), 1j * (d - c), 0.0])
    np.testing.assert_allclose(y, expected, atol=1e-15)


@pytest.mark.parametrize("n1,n2", [(2, 2), (3, 3), (4, 5), (6, 6)])
def test_gradient2d_dense_rank_deficiency(n1, n2):
    W = make_gradient2d(n1, n2)
    dense = to_dense(W)
    assert np.linalg.matrix_rank(dense) == n1 * n2 - 1


def test_gradient2d_adjoint_and_sparse_parts():
    rng = np.random.default_rng(0)
    W = make_gradient2d(4, 6)
    assert_adjoint_consistent(W, rng)
    rw, iw = W.re_im_parts
    dense = to_dense(W)
    np.testing.assert_allclose(rw.toarray(), dense.real, atol=1e-14)
    np.testing.assert_allclose(iw.toarray(), dense.imag, atol=1e-14)


def test_gradient2d_rejects_small_dims():
    with pytest.raises(ValueError):
        make_gradient2d(1, 8)


# ---------------------------------------------------------------------------
# partial DCT2
# ---------------------------------------------------------------------------


def test_partial_dct2_full_mask_isometry():
    rng = np.random.default_rng(1)
    n1 = n2 = 8
    n = n1 * n2
    A = make_partial_dct2(n1, n2, make_mask(n, n, seed=0))
    x = rng.standard_normal(n)
    assert abs(np.linalg.norm(A.apply(x)) - np.linalg.norm(x)) <= 1e-12 * np.linalg.norm(x)
    assert estimate_delta(A, 20) <= 1e-12


def test_partial_dct2_matches_dense_row_selection():
    rng = np.random.default_rng(2)
    n1, n2 = 8, 8
    n = n1 * n2
    mask = make_mask(n, n // 4, seed=5)
    A = make_partial_dct2(n1, n2, mask)
    # dense oracle: full orthonormal DCT-II matrix, select rows
    full = np.zeros((n, n))
    e = np.zeros(n)
    for j in range(n):
        e[j] = 1.0
        full[:, j] = dctn(e.reshape((n1, n2), order="F"), norm="ortho").ravel(order="F")
        e[j] = 0.0
    dense = full[mask.selected_indices, :]
    x = rng.standard_normal(n)
    np.testing.assert_allclose(A.apply(x), dense @ x, rtol=1e-12, atol=1e-12)
    assert_adjoint_consistent(A, rng)


def test_partial_dct2_rejects_non_power_of_two():
    with pytest.raises(ValueError):
        make_partial_dct2(6, 8, make_mask(48, 10, seed=0))


# ---------------------------------------------------------------------------
# partial 0/1 Walsh
# ---------------------------------------------------------------------------


def test_walsh01_dense_entries_are_binary():
    n = 8
    A = make_partial_walsh01(n, make_mask(n, n, seed=0))
    dense = to_dense(A)
    assert np.all((dense == 0.0) | (dense == 1.0))
    # first row of (H+1)/2 is all ones
    np.testing.assert_array_equal(dense[0], np.ones(n))


def test_walsh01_matches_dense_oracle():
    rng = np.random.default_rng(3)
    n = 64
    mask = make_mask(n, 16, seed=11)
    A = make_partial_walsh01(n, mask)
    dense = ((hadamard(n) + 1) / 2)[mask.selected_indices, :]
    x = rng.standard_normal(n)
    np.testing.assert_allclose(A.apply(x), dense @ x, rtol=1e-12)
    assert_adjoint_consistent(A, rng)


def test_walsh01_rejects_non_power_of_two():
    with pytest.raises(ValueError):
        make_partial_walsh01(12, make_mask(12, 4, seed=0))


# ---------------------------------------------------------------------------
# dense dictionary and delta estimate
# ---------------------------------------------------------------------------


def test_dense_dictionary_identity_and_adjoint():
    op = make_dense_dictionary(np.eye(4))
    x = np.arange(4.0)
    np.testing.assert_array_equal(op.apply(x), x)
    row = make_dense_dictionary(np.array([[1.0, 1.0]]) / np.sqrt(2))
    np.testing.assert_allclose(row.adjoint_apply(np.array([1.0])), np.array([1, 1]) / np.sqrt(2))


def test_dense_dictionary_random_adjoint():
    rng = np.random.default_rng(4)
    op = make_dense_dictionary(rng.standard_normal((8, 12)))
    assert_adjoint_consistent(op, rng)


def test_dense_dictionary_rejects_nonfinite():
    with pytest.raises(ValueError):
        make_dense_dictionary(np.array([[1.0, np.inf]]))


def test_estimate_delta_scaled_identity():
    A = make_dense_dictionary(2.0 * np.eye(4))
    assert abs(estimate_delta(A, 30) - 3.0) <= 1e-8


def test_estimate_delta_matches_dense_norm():
    n, m = 64, 16
    A = make_partial_walsh01(n, make_mask(n, m, seed=2))
    dense = to_dense(A)
    exact = np.linalg.norm(dense @ dense.T - np.eye(m), 2)
    assert abs(estimate_delta(A, 300) - exact) <= 1e-6 * max(1.0, exact)


def test_estimate_delta_monotone_in_iterations():
    A = make_partial_walsh01(64, make_mask(64, 16, seed=2))
    values = [estimate_delta(A, k) for k in (1, 2, 5, 10, 30)]
    assert all(b >= a - 1e-12 for a, b in zip(values, values[1:]))
