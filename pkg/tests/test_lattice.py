import numpy as np
import pytest

from ortsmooth.lattice import LatticeError, LatticeField, PointSet, coord_to_nearest_index, index_to_coord

from .oracles import lattice_coords, nearest_index_brute


def field(dims):
    return LatticeField(dims, np.zeros(int(np.prod(dims))))


@pytest.mark.parametrize("dims, i, expected", [
    ((4, 4), 0, (0.25, 0.25)),
    ((4, 4), 15, (1.0, 1.0)),
    ((2, 3), 4, (1.0, 2 / 3)),
])
def test_index_to_coord_examples(dims, i, expected):
    np.testing.assert_allclose(index_to_coord(field(dims), i), expected, rtol=0, atol=1e-15)


def test_index_to_coord_out_of_range():
    with pytest.raises(LatticeError):
        index_to_coord(field((4, 4)), 16)
    with pytest.raises(LatticeError):
        index_to_coord(field((4, 4)), -1)


@pytest.mark.parametrize("x, expected", [((0.25, 0.25), 0), ((0.0, 0.0), 0)])
def test_nearest_index_examples(x, expected):
    assert coord_to_nearest_index(field((4, 4)), x) == expected


def test_nearest_index_against_brute_force():
    f = field((4, 4))
    k = coord_to_nearest_index(f, (0.374, 0.51))
    assert k == nearest_index_brute((4, 4), (0.374, 0.51))
    np.testing.assert_allclose(index_to_coord(f, k), (0.25, 0.5))
    rng = np.random.default_rng(0)
    for dims in [(4, 4), (3, 5), (7,), (3, 2, 4)]:
        f = field(dims)
        for x in rng.random((200, len(dims))):
            assert coord_to_nearest_index(f, x) == nearest_index_brute(dims, x)


def test_nearest_index_ties_go_to_smaller_index():
    f = field((4, 4))
    # midway between the first two grid lines on both axes
    assert coord_to_nearest_index(f, (0.375, 0.375)) == nearest_index_brute((4, 4), (0.375, 0.375)) == 0


def test_nearest_index_domain_error():
    f = field((4, 4))
    for x in [(-0.1, 0.5), (0.5, 1.2), (np.nan, 0.5)]:
        with pytest.raises(LatticeError):
            coord_to_nearest_index(f, x)
    with pytest.raises(LatticeError):
        coord_to_nearest_index(f, (0.5,))


def test_coord_round_trip_and_row_major():
    for dims in [(4, 4), (2, 3), (3, 4, 5)]:
        f = field(dims)
        np.testing.assert_array_equal(f.coords(), lattice_coords(dims))
        for i in range(f.size):
            assert coord_to_nearest_index(f, index_to_coord(f, i)) == i
            assert np.ravel_multi_index(np.unravel_index(i, dims), dims) == i


def test_field_invariants():
    with pytest.raises(LatticeError):
        LatticeField((2, 2), np.zeros(3))
    with pytest.raises(LatticeError):
        LatticeField((2, 2), [0.0, np.nan, 0.0, 0.0])
    with pytest.raises(LatticeError):
        LatticeField((0, 2), [])
    f = LatticeField((2, 2), [1, 2, 3, 4])
    assert f.p == 2 and f.size == 4
    assert f.grid[1, 0] == 3.0
    with pytest.raises(ValueError):
        f.values[0] = 9.0


def test_from_array_keeps_shape():
    arr = np.arange(6.0).reshape(2, 3)
    f = LatticeField.from_array(arr)
    assert f.dims == (2, 3)
    np.testing.assert_array_equal(f.grid, arr)


def test_pointset_invariants():
    f = field((3, 3))
    s = PointSet.of(f, [4, 1, 1, 7])
    assert list(s) == [1, 4, 7] and len(s) == 3
    assert 4 in s and 5 not in s
    assert PointSet.of(f) == PointSet(np.arange(9), (3, 3))
    with pytest.raises(LatticeError):
        PointSet(np.array([2, 1]), (3, 3))
    with pytest.raises(LatticeError):
        PointSet(np.array([9]), (3, 3))
    assert PointSet(np.array([], dtype=int), (3, 3)).empty
