from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, strategies as st

from kdfmat import MatrixList, SingularShift, list_poch, poch, poch_inv
from kdfmat.pochhammer import ListTable, PochTable
from oracles import naive_list_poch, naive_poch


def _random(r, seed, shift=1.5):
    rng = np.random.default_rng(seed)
    return shift * np.eye(r) + 0.4 * (rng.standard_normal((r, r)) + 1j * rng.standard_normal((r, r)))


seeds = st.integers(0, 2**32 - 1)
dims = st.integers(1, 3)


def test_poch_examples():
    a = _random(2, 0)
    np.testing.assert_array_equal(poch(a, 0), np.eye(2))
    np.testing.assert_array_equal(poch(np.eye(2), 3), 6 * np.eye(2))
    np.testing.assert_array_equal(poch(np.diag([1, 2]), 2), np.diag([2, 6]))


def test_poch_inv_examples():
    np.testing.assert_array_equal(poch_inv(_random(2, 1), 0), np.eye(2))
    np.testing.assert_allclose(poch_inv(np.diag([1, 2]), 2), np.diag([1 / 2, 1 / 6]), rtol=1e-15)
    a = np.array([[1.0, 1.0], [0.0, 1.0]])
    assert np.linalg.norm(poch(a, 2) @ poch_inv(a, 2) - np.eye(2)) <= 1e-12


def test_list_poch_examples():
    np.testing.assert_array_equal(list_poch(MatrixList.of("B", [], 2), 5), np.eye(2))
    np.testing.assert_array_equal(list_poch([np.eye(2), 2 * np.eye(2)], 2), 12 * np.eye(2))
    np.testing.assert_allclose(list_poch([np.diag([1, 2]), np.diag([3, 1])], 1, inverted=True),
                               np.diag([1 / 3, 1 / 2]))


@given(dims, seeds, st.integers(0, 12))
def test_recurrence_is_bitwise(r, seed, n):
    a = _random(r, seed)
    assert np.array_equal(poch(a, n + 1), poch(a, n) @ (a + n * np.eye(r)))


@given(dims, seeds, st.integers(0, 8), st.integers(0, 8))
def test_split(r, seed, m, n):
    a = _random(r, seed)
    lhs = poch(a, m + n)
    rhs = poch(a, m) @ poch(a + m * np.eye(r), n)
    assert np.linalg.norm(lhs - rhs) <= 1e-12 * np.linalg.norm(lhs)


@given(dims, seeds, st.integers(1, 10))
def test_translation(r, seed, n):
    # (A)_{n+1} = A (A+I)_n
    a = _random(r, seed)
    lhs = poch(a, n + 1)
    rhs = a @ poch(a + np.eye(r), n)
    assert np.linalg.norm(lhs - rhs) <= 1e-12 * np.linalg.norm(lhs)


@pytest.mark.parametrize("k", [0, 1, 3])
def test_negative_integer_terminates(k):
    a = -k * np.eye(2)
    assert np.any(poch(a, k))
    for n in range(k + 1, k + 4):
        assert not np.any(poch(a, n))


@given(st.complex_numbers(min_magnitude=0.2, max_magnitude=4, allow_nan=False, allow_infinity=False),
       st.integers(0, 15))
def test_scalar_reduction(a, n):
    want = 1.0 + 0j
    for k in range(n):
        want *= a + k
    assert np.isclose(poch([[a]], n)[0, 0], want, rtol=1e-13)


@given(dims, seeds, st.integers(0, 10))
def test_poch_inv_multiplies_back(r, seed, n):
    a = _random(r, seed)
    assert np.linalg.norm(poch(a, n) @ poch_inv(a, n) - np.eye(r)) <= 1e-10


def test_singular_shift_location():
    e = np.diag([-2.0, 1.5])
    with pytest.raises(SingularShift) as info:
        poch_inv(e, 4)
    assert info.value.k == 2
    lst = MatrixList.of("E", [np.eye(2), e])
    with pytest.raises(SingularShift) as info:
        list_poch(lst, 3, inverted=True)
    assert (info.value.k, info.value.role, info.value.index) == (2, "E", 1)
    # two factors suffice before the singular one appears
    list_poch(lst, 2, inverted=True)


@given(dims, seeds, st.integers(1, 3), st.booleans())
def test_list_table_matches_naive(r, seed, count, inverted):
    items = [_random(r, seed + j) for j in range(count)]
    lst = MatrixList.of("D", items)
    table = ListTable(lst, inverted)
    for n in (0, 1, 5, 17):
        want = naive_list_poch(items, n, r, inverted)
        assert np.linalg.norm(table.value(n) - want) <= 1e-11 * np.linalg.norm(want)


def test_poch_table_growth_is_consistent():
    a = _random(3, 4)
    small = PochTable(a, inverted=False)
    small.ensure(5)
    small.ensure(40)
    fresh = PochTable(a, inverted=False)
    fresh.ensure(40)
    for n in (0, 5, 39):
        np.testing.assert_allclose(small.value(n), fresh.value(n), rtol=1e-13)
        np.testing.assert_allclose(small.value(n), naive_poch(a, n), rtol=1e-10)


def test_empty_list_table_is_identity():
    t = ListTable(MatrixList.of("C", [], 3), inverted=True)
    np.testing.assert_array_equal(t.value(7), np.eye(3))


def test_matrix_list_helpers():
    lst = MatrixList.of("A", [np.eye(2), 2 * np.eye(2)])
    assert len(lst.shifted(1)) == 2 and np.array_equal(lst.shifted(1)[0], 2 * np.eye(2))
    assert lst.shifted(0) is lst
    assert np.array_equal(lst.shift_item(1, -1)[1], np.eye(2))
    assert len(lst.without(0)) == 1
    assert lst.max_commutation_defect() == 0.0
    with pytest.raises(ValueError):
        MatrixList.of("A", [np.eye(2), np.eye(3)])
    with pytest.raises(ValueError):
        MatrixList.of("A", [])
