import numpy as np
import pytest

from harfusion.errors import ParameterError, ShapeError
from harfusion.tensor import (Rng, concat, elementwise_map, elementwise_zip,
                              matmul, ones, randn, reduce_mean, reshape,
                              slice_axis, zeros)


def test_zeros_ones_basic():
    z = zeros([2, 3])
    assert z.shape == (2, 3) and z.sum() == 0.0 and z.size == 6
    assert np.array_equal(ones([1]), np.array([1.0]))
    assert zeros([4, 1, 2]).sum() == 0.0


@pytest.mark.parametrize("bad", [[], [0], [2, 0, 3], [-1]])
def test_zeros_rejects_bad_shapes(bad):
    with pytest.raises(ShapeError):
        zeros(bad)


def test_randn_statistics():
    x = randn([10000], Rng(1), 1.0)
    assert -0.05 < x.mean() < 0.05
    s = randn([10000], Rng(2), 0.1)
    assert 0.095 < s.std() < 0.105


def test_randn_deterministic():
    a = randn([3], Rng(99))
    b = randn([3], Rng(99))
    assert np.array_equal(a, b)
    big1 = randn([5000], Rng(7), 0.3)
    big2 = randn([5000], Rng(7), 0.3)
    assert np.array_equal(big1, big2)


def test_randn_rejects_nonpositive_scale():
    with pytest.raises(ParameterError):
        randn([3], Rng(0), 0.0)
    with pytest.raises(ParameterError):
        randn([3], Rng(0), -1.0)


def test_rng_stream_position_independent_of_grouping():
    r1 = Rng(5)
    joined = r1.uniform(10)
    r2 = Rng(5)
    split = np.concatenate([r2.uniform(4), r2.uniform(6)])
    assert np.array_equal(joined, split)


def test_permutation_is_a_permutation_and_deterministic():
    p = Rng(3).permutation(100)
    assert sorted(p.tolist()) == list(range(100))
    assert np.array_equal(p, Rng(3).permutation(100))


def test_matmul_examples():
    a = np.array([[1.0, 2.0], [3.0, 4.0]])
    assert np.array_equal(matmul(np.eye(3), np.arange(9.0).reshape(3, 3)),
                          np.arange(9.0).reshape(3, 3))
    assert np.array_equal(matmul(a, np.array([[1.0], [1.0]])), np.array([[3.0], [7.0]]))
    assert np.array_equal(matmul(a, zeros([2, 2])), zeros([2, 2]))


def test_matmul_shape_errors():
    with pytest.raises(ShapeError):
        matmul(zeros([2, 3]), zeros([2, 3]))
    with pytest.raises(ShapeError):
        matmul(zeros([2]), zeros([2, 2]))


def test_matmul_associativity():
    rng = Rng(11)
    for _ in range(20):
        a, b, c = rng.normal((5, 8)), rng.normal((8, 3)), rng.normal((3, 7))
        left = matmul(matmul(a, b), c)
        right = matmul(a, matmul(b, c))
        assert np.abs(left - right).max() < 1e-9


def test_map_zip():
    t = np.array([[1.0, -2.0], [3.0, -4.0]])
    assert np.array_equal(elementwise_map(t, abs), np.abs(t))
    assert np.array_equal(elementwise_zip(t, t, lambda a, b: a + b), 2 * t)
    with pytest.raises(ShapeError):
        elementwise_zip(t, np.zeros(3), lambda a, b: a)


def test_concat_and_slice_seam_roundtrip():
    rng = Rng(4)
    a, b = rng.normal((5, 2)), rng.normal((5, 3))
    joined = concat([a, b], axis=1)
    assert joined.shape == (5, 5)
    assert np.array_equal(slice_axis(joined, 1, 0, 2), a)
    assert np.array_equal(slice_axis(joined, 1, 2, 5), b)


def test_concat_errors():
    with pytest.raises(ShapeError):
        concat([zeros([2, 2]), zeros([3, 2])], axis=1)
    with pytest.raises(ShapeError):
        concat([zeros([2, 2])], axis=5)
    with pytest.raises(ShapeError):
        concat([], axis=0)


def test_slice_axis_bounds():
    with pytest.raises(ShapeError):
        slice_axis(zeros([4, 4]), 0, 2, 6)
    with pytest.raises(ShapeError):
        slice_axis(zeros([4, 4]), 2, 0, 1)


def test_reshape_row_major():
    t = reshape(np.arange(1.0, 7.0), [2, 3])
    assert np.array_equal(t[0], [1.0, 2.0, 3.0])
    r = reshape(t, [3, 2])
    assert np.array_equal(r[0], [1.0, 2.0])
    with pytest.raises(ShapeError):
        reshape(t, [4, 2])


def test_reduce_mean():
    assert reduce_mean(ones([4, 4])) == 1.0
    t = np.arange(6.0).reshape(2, 3)
    assert np.allclose(reduce_mean(t, axes=0), [1.5, 2.5, 3.5])
    assert reduce_mean(t, axes=(0, 1)) == 2.5
    with pytest.raises(ShapeError):
        reduce_mean(t, axes=3)


def test_reduce_mean_constant_over_all_axes():
    for v in (-2.5, 0.0, 7.0):
        assert reduce_mean(np.full((3, 2, 4), v)) == pytest.approx(v, abs=1e-12)


def test_all_public_ops_keep_values_finite():
    rng = Rng(8)
    x = randn([6, 6], rng, 3.0)
    for out in (matmul(x, x), concat([x, x], 0), reshape(x, [4, 9]),
                slice_axis(x, 0, 1, 4)):
        assert np.all(np.isfinite(out))
