"""Spatial transformer oracles: identity, integer shifts, closed-form
bilinear samples, the mean layer, and gradient checks."""

import numpy as np
import pytest

from groupreg import tensor as T
from groupreg.errors import ShapeError
from groupreg.tensor import Tensor, gradient_check
from groupreg.warp import (CoordinateGrid, DisplacementField, compose_mean,
                           identity_grid, warp_bilinear)


def rand_image(h, w, seed):
    return np.random.default_rng(seed).standard_normal((1, h, w))


def test_identity_grid_contents():
    g = identity_grid(3, 4)
    assert isinstance(g, CoordinateGrid)
    np.testing.assert_array_equal(g.coords[0], [[0, 0, 0, 0], [1, 1, 1, 1], [2, 2, 2, 2]])
    np.testing.assert_array_equal(g.coords[1][0], [0, 1, 2, 3])
    with pytest.raises(ValueError):
        identity_grid(0, 4)


def test_displacement_field_validation():
    with pytest.raises(ShapeError):
        DisplacementField(np.zeros((3, 4, 4)))
    bad = np.zeros((2, 4, 4))
    bad[0, 0, 0] = np.nan
    with pytest.raises(ValueError):
        DisplacementField(bad)


def test_identity_warp_is_bit_exact():
    src = rand_image(7, 9, 0)
    out = warp_bilinear(Tensor(src), Tensor(np.zeros((2, 7, 9))))
    assert np.array_equal(out.data, src)


@pytest.mark.parametrize("dr,dc", [(1, 0), (0, 2), (2, 1), (-1, 0), (0, -2)])
def test_integer_shift_equals_roll_with_zero_fill(dr, dc):
    src = rand_image(8, 8, 1)
    u = np.zeros((2, 8, 8))
    u[0] = dr
    u[1] = dc
    out = warp_bilinear(Tensor(src), Tensor(u)).data[0]
    want = np.zeros((8, 8))
    rows = slice(max(dr, 0), min(8 + dr, 8))
    cols = slice(max(dc, 0), min(8 + dc, 8))
    want[max(-dr, 0):min(8 - dr, 8), max(-dc, 0):min(8 - dc, 8)] = src[0][rows, cols]
    np.testing.assert_array_equal(out, want)


def test_fractional_shift_matches_closed_form_bilinear():
    src = rand_image(6, 6, 2)
    dy, dx = 0.25, 0.5
    u = np.zeros((2, 6, 6))
    u[0], u[1] = dy, dx
    out = warp_bilinear(Tensor(src), Tensor(u)).data[0]
    s = src[0]
    for i in range(5):
        for j in range(5):
            want = ((1 - dy) * ((1 - dx) * s[i, j] + dx * s[i, j + 1])
                    + dy * ((1 - dx) * s[i + 1, j] + dx * s[i + 1, j + 1]))
            assert abs(out[i, j] - want) <= 1e-12


def test_out_of_bounds_samples_are_zero():
    src = np.ones((1, 4, 4))
    u = np.zeros((2, 4, 4))
    u[0] = 10.0
    out = warp_bilinear(Tensor(src), Tensor(u)).data
    np.testing.assert_array_equal(out, np.zeros((1, 4, 4)))


def test_warp_gradients_match_finite_differences():
    src0 = rand_image(5, 5, 3)
    u0 = np.random.default_rng(4).uniform(-1.2, 1.2, size=(2, 5, 5))
    src_t = Tensor(src0)
    assert gradient_check(
        lambda u: T.sum_all(T.square(warp_bilinear(src_t, u))), Tensor(u0.copy())) < 1e-4
    u_t = Tensor(u0)
    assert gradient_check(
        lambda s: T.sum_all(T.square(warp_bilinear(s, u_t))), Tensor(src0.copy())) < 1e-4


def test_compose_mean_k1_is_bitwise_identity():
    img = Tensor(rand_image(4, 4, 5))
    out = compose_mean([img])
    assert np.array_equal(out.data, img.data)


def test_compose_mean_averages_and_checks_k():
    a, b = Tensor(np.full((1, 2, 2), 1.0)), Tensor(np.full((1, 2, 2), 3.0))
    np.testing.assert_array_equal(compose_mean([a, b]).data, np.full((1, 2, 2), 2.0))
    with pytest.raises(ValueError):
        compose_mean([a, b], k=3)
    with pytest.raises(ValueError):
        compose_mean([])
