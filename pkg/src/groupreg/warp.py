"""Spatial transformer: identity grids, displacement fields, and
differentiable bilinear resampling with zero padding outside the image.

Displacements are in absolute pixel units; the sampling location for
output pixel (i, j) is (i + u_row(i, j), j + u_col(i, j)).
"""

from dataclasses import dataclass

import numpy as np

from groupreg import backend
from groupreg import tensor as T
from groupreg.errors import ShapeError
from groupreg.tensor import Tensor


@dataclass
class CoordinateGrid:
    """Pixel coordinates, coords[0] = row index, coords[1] = column index."""
    coords: np.ndarray  # [2, H, W]


class DisplacementField:
    """Per-pixel (row, col) displacement in pixels, shape [2, H, W]."""

    def __init__(self, u):
        if not isinstance(u, Tensor):
            u = Tensor(u)
        if u.data.ndim != 3 or u.data.shape[0] != 2:
            raise ShapeError(f"displacement field must be [2,H,W], got {u.data.shape}")
        if not np.all(np.isfinite(u.data)):
            raise ValueError("displacement field contains NaN/Inf")
        self.u = u

    @property
    def shape(self):
        return self.u.data.shape


def identity_grid(h, w):
    if h < 1 or w < 1:
        raise ValueError(f"grid extents must be >= 1, got ({h}, {w})")
    rows, cols = np.meshgrid(np.arange(h, dtype=np.float64),
                             np.arange(w, dtype=np.float64), indexing="ij")
    return CoordinateGrid(np.stack([rows, cols]))


def _as_field_tensor(u):
    if isinstance(u, DisplacementField):
        return u.u
    if isinstance(u, Tensor):
        return u
    return Tensor(u)


def warp_bilinear(src, u):
    """Resample src [1,H,W] at the deformed grid defined by u [2,H,W]."""
    if not isinstance(src, Tensor):
        src = Tensor(src)
    ut = _as_field_tensor(u)
    if src.data.ndim != 3 or src.data.shape[0] != 1:
        raise ShapeError(f"warp_bilinear: source must be [1,H,W], got {src.data.shape}")
    if src.data.shape[1:] != ut.data.shape[1:]:
        raise ShapeError(f"warp_bilinear: source spatial {src.data.shape[1:]} vs "
                         f"field spatial {ut.data.shape[1:]}")
    src2d = src.data[0]
    udata = ut.data.astype(src2d.dtype, copy=False)
    out2d = backend.warp_forward(src2d, udata)
    out = T._result(out2d[None], (src, ut), None)

    def _bw():
        gsrc, gu = backend.warp_backward(out.grad[0], src2d, udata)
        T._accumulate(src, gsrc[None])
        T._accumulate(ut, gu.astype(ut.data.dtype, copy=False))

    out._backward = _bw if out.requires_grad else None
    return out


def compose_mean(warped, k=None):
    """Pixelwise average of K warped images; gradient splits 1/K per branch."""
    if not warped:
        raise ValueError("compose_mean: empty input list")
    k = len(warped) if k is None else k
    if k != len(warped):
        raise ValueError(f"compose_mean: K={k} but got {len(warped)} images")
    acc = warped[0]
    for img in warped[1:]:
        acc = T.add(acc, img)
    return T.scalar_mul(acc, 1.0 / k)
