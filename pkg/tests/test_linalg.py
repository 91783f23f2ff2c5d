import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from splitfix.linalg import (LinMap, BlockVector, as_vector, as_matrix,
                             operator_norm, adjoint_check, sym_eig, svd,
                             vector_to_json, vector_from_json,
                             matrix_to_json, matrix_from_json,
                             matrix_to_csv, matrix_from_csv)


def test_as_vector_rejects_nonfinite():
    with pytest.raises(ValueError):
        as_vector([1.0, np.nan])
    with pytest.raises(ValueError):
        as_vector([[1.0, 2.0]])
    assert as_vector(3.0).shape == (1,)


def test_as_matrix_rejects_nonfinite():
    with pytest.raises(ValueError):
        as_matrix([[np.inf]])
    with pytest.raises(ValueError):
        as_matrix([1.0, 2.0])


def test_linmap_from_matrix_roundtrip():
    A = np.array([[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]])
    L = LinMap.from_matrix(A)
    assert L.in_dim == 2 and L.out_dim == 3
    x = np.array([1.0, -1.0])
    assert np.allclose(L(x), A @ x)
    assert np.allclose(L.t(np.ones(3)), A.T @ np.ones(3))
    assert np.allclose(L.to_matrix(), A)


def test_adjoint_check_flags_wrong_adjoint():
    A = np.array([[1.0, 2.0], [0.0, 1.0]])
    good = LinMap.from_matrix(A)
    bad = LinMap(lambda x: A @ x, lambda y: A @ y, 2, 2)
    assert adjoint_check(good) < 1e-12
    assert adjoint_check(bad) > 1e-3


def test_operator_norm_diag():
    # diag(3, 1): norm exactly 3
    L = LinMap.from_matrix(np.diag([3.0, 1.0]))
    assert operator_norm(L) == pytest.approx(3.0, rel=1e-8)
    # inflated estimate is an upper bound of the truth
    assert operator_norm(L, inflate=True) >= 3.0


def test_operator_norm_zero_map():
    L = LinMap.from_matrix(np.zeros((2, 2)))
    assert operator_norm(L) == 0.0


@settings(max_examples=50, deadline=None)
@given(st.lists(st.lists(st.floats(-5, 5), min_size=3, max_size=3),
                min_size=2, max_size=4))
def test_operator_norm_matches_svd(rows):
    A = np.array(rows, dtype=float)
    L = LinMap.from_matrix(A)
    truth = np.linalg.norm(A, 2)
    est = operator_norm(L)
    assert est <= truth * (1 + 1e-6) + 1e-12
    assert est >= truth * (1 - 1e-6) - 1e-12


def test_sym_eig_rejects_asymmetric():
    with pytest.raises(ValueError):
        sym_eig([[0.0, 1.0], [0.0, 0.0]])
    mu, U = sym_eig([[2.0, 0.0], [0.0, 3.0]])
    assert np.allclose(sorted(mu), [2.0, 3.0])
    M = U @ np.diag(mu) @ U.T
    assert np.allclose(M, [[2.0, 0.0], [0.0, 3.0]])


def test_svd_reconstructs():
    A = np.array([[1.0, 0.0, 2.0], [0.0, -1.0, 1.0]])
    U, s, V = svd(A)
    assert np.all(np.diff(s) <= 0) and np.all(s >= 0)
    assert np.allclose(U @ np.diag(s) @ V.T, A)


def test_block_vector_arithmetic():
    a = BlockVector([[1.0, 2.0], [3.0]])
    b = BlockVector([[1.0, 0.0], [1.0]])
    c = a + 2.0 * b
    assert np.allclose(c[0], [3.0, 2.0])
    assert np.allclose(c[1], [5.0])
    assert a.dot(b) == pytest.approx(4.0)
    assert a.norm() == pytest.approx(np.sqrt(14.0))
    assert (a - b).dims == [2, 1]
    assert np.allclose(a.concat(), [1.0, 2.0, 3.0])


def test_json_roundtrips():
    v = np.array([1.5, -2.25])
    assert np.array_equal(vector_from_json(vector_to_json(v)), v)
    M = np.array([[0.1, 0.2], [0.3, 0.4]])
    assert np.array_equal(matrix_from_json(matrix_to_json(M)), M)


def test_matrix_csv_roundtrip_and_format():
    M = np.array([[1.0, 0.5], [-2.0, 3.25]])
    text = matrix_to_csv(M)
    assert '\r' not in text and text.endswith('\n')
    assert np.array_equal(matrix_from_csv(text), M)
