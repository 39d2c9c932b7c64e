import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dtgnn.core import SparseMatrix, matmul, sparse_weighted_sum, spmm, spmm_transpose
from dtgnn.errors import InputError

from conftest import sparse_from


def entries_strategy(dim, max_nnz=30, value_pool=(-2.0, -1.0, 1.0, 2.0, 3.0)):
    entry = st.tuples(
        st.integers(0, dim - 1),
        st.integers(0, dim - 1),
        st.sampled_from(value_pool),
    )
    return st.lists(entry, max_size=max_nnz)


class TestSparseMatrix:
    def test_canonical_sorted_dedup(self):
        m = sparse_from(3, [(2, 1, 1.0), (0, 2, 2.0), (2, 1, 3.0)])
        assert list(zip(m.rows, m.cols, m.vals)) == [(0, 2, 2.0), (2, 1, 4.0)]

    def test_zero_elision(self):
        m = sparse_from(3, [(1, 1, 2.0), (1, 1, -2.0)])
        assert m.nnz == 0

    def test_bounds_rejected(self):
        with pytest.raises(InputError):
            sparse_from(2, [(2, 0, 1.0)])
        with pytest.raises(InputError):
            sparse_from(2, [(0, -1, 1.0)])

    def test_non_finite_rejected(self):
        with pytest.raises(InputError):
            sparse_from(2, [(0, 0, float("nan"))])

    def test_equality_is_entry_list_equality(self):
        a = sparse_from(3, [(0, 1, 1.0), (1, 2, 2.0)])
        b = sparse_from(3, [(1, 2, 2.0), (0, 1, 1.0)])
        assert a == b
        assert a != sparse_from(3, [(0, 1, 1.0)])

    @given(entries_strategy(5))
    @settings(max_examples=60)
    def test_canonicalization_idempotent(self, entries):
        m = sparse_from(5, entries)
        again = SparseMatrix.from_entries(5, m.rows, m.cols, m.vals)
        assert m == again

    def test_immutability(self):
        m = sparse_from(2, [(0, 1, 1.0)])
        with pytest.raises(ValueError):
            m.vals[0] = 5.0


class TestSpmm:
    def test_identity(self):
        x = np.arange(6, dtype=np.float64).reshape(3, 2)
        assert np.array_equal(spmm(SparseMatrix.identity(3), x), x)

    def test_empty_gives_zeros(self):
        x = np.ones((3, 2))
        assert np.array_equal(spmm(SparseMatrix.empty(3), x), np.zeros((3, 2)))

    def test_hand_example(self):
        a = sparse_from(2, [(0, 1, 2.0)])
        x = np.array([[1.0], [3.0]])
        assert np.array_equal(spmm(a, x), np.array([[6.0], [0.0]]))

    def test_dimension_mismatch(self):
        with pytest.raises(InputError):
            spmm(SparseMatrix.identity(3), np.ones((2, 2)))

    @given(entries_strategy(6))
    @settings(max_examples=60)
    def test_matches_dense_oracle(self, entries):
        a = sparse_from(6, entries)
        rng = np.random.default_rng(1)
        x = rng.standard_normal((6, 3))
        assert np.allclose(spmm(a, x), a.to_dense() @ x, atol=1e-12, rtol=1e-12)

    @given(entries_strategy(6))
    @settings(max_examples=40)
    def test_transpose_matches_dense_oracle(self, entries):
        a = sparse_from(6, entries)
        rng = np.random.default_rng(2)
        g = rng.standard_normal((6, 3))
        assert np.allclose(spmm_transpose(a, g), a.to_dense().T @ g, atol=1e-12, rtol=1e-12)


class TestMatmul:
    def test_identity(self):
        a = np.arange(6, dtype=np.float64).reshape(2, 3)
        assert np.array_equal(matmul(a, np.eye(3)), a)

    def test_hand_example(self):
        assert matmul(np.array([[1.0, 2.0]]), np.array([[3.0], [4.0]]))[0, 0] == 11.0

    def test_zero(self):
        assert np.array_equal(matmul(np.zeros((2, 3)), np.ones((3, 4))), np.zeros((2, 4)))

    def test_shape_mismatch(self):
        with pytest.raises(InputError):
            matmul(np.ones((2, 3)), np.ones((2, 3)))


class TestSparseWeightedSum:
    def test_single_term_identity(self):
        a = sparse_from(3, [(0, 1, 2.0), (2, 2, -1.0)])
        assert sparse_weighted_sum([(1.0, a)]) == a

    def test_structural_union(self):
        a = sparse_from(2, [(0, 1, 1.0)])
        b = sparse_from(2, [(1, 0, 1.0)])
        assert sparse_weighted_sum([(1.0, a), (1.0, b)]) == sparse_from(
            2, [(0, 1, 1.0), (1, 0, 1.0)]
        )

    def test_exact_cancellation_elides(self):
        a = sparse_from(2, [(0, 1, 1.0)])
        assert sparse_weighted_sum([(1.0, a), (-1.0, a)]).nnz == 0

    def test_dimension_mismatch(self):
        with pytest.raises(InputError):
            sparse_weighted_sum([(1.0, SparseMatrix.empty(2)), (1.0, SparseMatrix.empty(3))])

    @given(entries_strategy(4, max_nnz=10), entries_strategy(4, max_nnz=10))
    @settings(max_examples=40)
    def test_commutative_on_exact_values(self, e1, e2):
        # integer-valued entries keep float addition exact, so term order
        # cannot matter even bitwise
        a, b = sparse_from(4, e1), sparse_from(4, e2)
        assert sparse_weighted_sum([(1.0, a), (2.0, b)]) == sparse_weighted_sum(
            [(2.0, b), (1.0, a)]
        )

    @given(entries_strategy(5))
    @settings(max_examples=40)
    def test_matches_dense_oracle(self, entries):
        a = sparse_from(5, entries)
        b = sparse_from(5, [(1, 3, 2.0), (0, 0, -1.0)])
        out = sparse_weighted_sum([(0.5, a), (2.0, b)])
        assert np.allclose(out.to_dense(), 0.5 * a.to_dense() + 2.0 * b.to_dense())
