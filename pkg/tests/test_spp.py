import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dmmcnn.nn import ShapeError
from dmmcnn.spp import SpatialPyramidPool, block_bounds, pyramid_bins, spp_backward, spp_forward
from oracles import check_layer, max_rel_error, numeric_grad, separated_values


@pytest.mark.parametrize("levels,length", [(1, 2048), (3, 28672)])
def test_full_scale_lengths(levels, length):
    x = np.random.default_rng(0).standard_normal((2048, 5, 7))
    assert spp_forward(x, levels).shape == (length,)


def test_two_by_two_example():
    x = np.array([[[1.0, 2.0], [3.0, 4.0]]])
    np.testing.assert_array_equal(spp_forward(x, 2), [4, 1, 2, 3, 4])


def test_fixed_length_for_random_sizes():
    rng = np.random.default_rng(1)
    C, levels = 3, 3
    for _ in range(20):
        h, w = rng.integers(4, 65, size=2)
        out = spp_forward(rng.standard_normal((C, h, w)), levels)
        assert out.shape == (C * 14,)


def test_block_bounds_tile_exactly_when_large():
    for size in range(3, 40):
        for k in (1, 2, 3, 4):
            if size < k:
                continue
            b = block_bounds(size, k)
            assert b[0][0] == 0 and b[-1][1] == size
            assert all(b[i][1] == b[i + 1][0] for i in range(k - 1))
            assert all(e > s for s, e in b)


def test_small_maps_give_nonempty_overlapping_blocks():
    assert block_bounds(2, 3) == [(0, 1), (0, 2), (1, 2)]
    assert block_bounds(1, 3) == [(0, 1), (0, 1), (0, 1)]


def test_level_one_is_global_max():
    x = np.random.default_rng(2).standard_normal((4, 6, 5))
    np.testing.assert_array_equal(spp_forward(x, 1), x.max(axis=(1, 2)))


def test_channel_permutation_equivariance():
    rng = np.random.default_rng(3)
    x = rng.standard_normal((5, 7, 6))
    perm = rng.permutation(5)
    out, out_p = spp_forward(x, 3), spp_forward(x[perm], 3)
    offset = 0
    for k in (1, 2, 3):
        block = out[offset:offset + 5 * k * k].reshape(5, k * k)
        block_p = out_p[offset:offset + 5 * k * k].reshape(5, k * k)
        np.testing.assert_array_equal(block_p, block[perm])
        offset += 5 * k * k


def test_backward_level_one_lands_on_argmax():
    x = np.array([[[0.0, 5.0, 1.0], [2.0, 3.0, 4.0]]])
    g = spp_backward(x, 1, np.array([2.5]))
    expected = np.zeros_like(x)
    expected[0, 0, 1] = 2.5
    np.testing.assert_array_equal(g, expected)


def test_backward_conserves_mass():
    rng = np.random.default_rng(4)
    x = rng.standard_normal((3, 5, 7))
    up = rng.integers(-4, 5, size=3 * 14).astype(float)
    assert spp_backward(x, 3, up).sum() == up.sum()


def test_backward_matches_finite_differences():
    rng = np.random.default_rng(5)
    x = separated_values(rng, (2, 5, 7))
    up = rng.standard_normal(2 * 14)
    analytic = spp_backward(x, 3, up)
    numeric = numeric_grad(lambda: float(up @ spp_forward(x, 3)), x)
    assert max_rel_error(analytic, numeric) < 1e-4


@pytest.mark.parametrize("levels", [1, 2, 3])
def test_layer_gradcheck(levels):
    rng = np.random.default_rng(levels)
    for _ in range(5):
        h, w = rng.integers(1, 8, size=2)
        x = separated_values(rng, (2, 3, h, w))
        assert check_layer(SpatialPyramidPool(levels), x, rng) < 1e-4


def test_errors():
    with pytest.raises(ValueError):
        SpatialPyramidPool(0)
    with pytest.raises(ShapeError):
        spp_forward(np.zeros((2, 0, 3)), 1)
    with pytest.raises(ShapeError):
        spp_backward(np.zeros((1, 3, 3)), 2, np.zeros(4))


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 4), st.integers(1, 12), st.integers(1, 12), st.integers(1, 3))
def test_length_invariant(levels, h, w, c):
    x = np.random.default_rng(h * 31 + w).standard_normal((c, h, w))
    assert spp_forward(x, levels).shape == (c * pyramid_bins(levels),)
