from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from disk.errors import InputError
from disk.partition import random_partition, read_assignment, write_assignment


def test_single_subset():
    a = random_partition(10, 1, seed=3)
    assert a.k == 1
    np.testing.assert_array_equal(a.memberships[0], np.arange(10))
    assert a.exponents[0] == 1.0


def test_five_pairs():
    a = random_partition(10, 5, seed=3)
    assert list(a.sizes) == [2] * 5
    assert np.all(a.exponents == 5.0)
    assert np.unique(np.concatenate(a.memberships)).size == 10


def test_uneven_sizes():
    a = random_partition(10007, 20, seed=1)
    assert set(a.sizes) == {500, 501}
    np.testing.assert_array_equal(np.sort(np.concatenate(a.memberships)), np.arange(10007))


def test_k_greater_than_n():
    with pytest.raises(InputError):
        random_partition(3, 4, seed=0)
    with pytest.raises(InputError):
        random_partition(3, 2, seed=0, overlap_fraction=1.0)


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 300), st.data(), st.integers(0, 2**32),
       st.sampled_from([0.0, 0.1, 0.5]))
def test_invariants(n, data, seed, overlap):
    k = data.draw(st.integers(1, n))
    a = random_partition(n, k, seed, overlap)
    b = random_partition(n, k, seed, overlap)
    assert all(np.array_equal(x, y) for x, y in zip(a.memberships, b.memberships))
    union = np.unique(np.concatenate(a.memberships))
    np.testing.assert_array_equal(union, np.arange(n))
    for m, e in zip(a.memberships, a.exponents):
        assert m.size > 0 and np.all(np.diff(m) > 0)
        assert Fraction(n, m.size) == Fraction(n) / m.size
        assert abs(e * m.size - n) <= 1e-12 * n
    if overlap == 0:
        assert sum(m.size for m in a.memberships) == n
        assert a.sizes.max() - a.sizes.min() <= 1


def test_overlap_adds_rows():
    a = random_partition(100, 4, seed=2, overlap_fraction=0.2)
    assert list(a.sizes) == [30] * 4
    assert np.all(a.exponents == 100 / 30)


def test_seed_changes_partition():
    a, b = random_partition(50, 5, 1), random_partition(50, 5, 2)
    assert any(not np.array_equal(x, y) for x, y in zip(a.memberships, b.memberships))


def test_csv_roundtrip(tmp_path):
    a = random_partition(37, 4, seed=9, overlap_fraction=0.3)
    path = tmp_path / "p.csv"
    write_assignment(path, a)
    assert path.read_text().startswith("subset_id,row_index\n")
    b = read_assignment(path, n=37)
    assert all(np.array_equal(x, y) for x, y in zip(a.memberships, b.memberships))
    np.testing.assert_array_equal(a.exponents, b.exponents)


def test_csv_coverage_checked(tmp_path):
    path = tmp_path / "p.csv"
    path.write_text("subset_id,row_index\n0,0\n0,2\n")
    with pytest.raises(InputError):
        read_assignment(path)
