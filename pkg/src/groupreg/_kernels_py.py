"""Pure-numpy implementations of the hot kernels.

Same low-level contract as the compiled extension: convolution inputs are
pre-padded, outputs pre-allocated, and every routine accumulates into the
output it is given.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def conv2d_fwd(xp, k, y, stride):
    kh, kw = k.shape[2], k.shape[3]
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
    y += np.tensordot(win, k, axes=([1, 4, 5], [1, 2, 3])).transpose(0, 3, 1, 2)


def conv2d_bwd_input(gy, k, gxp, stride):
    kh, kw = k.shape[2], k.shape[3]
    oh, ow = gy.shape[2], gy.shape[3]
    for ky in range(kh):
        for kx in range(kw):
            contrib = np.tensordot(gy, k[:, :, ky, kx], axes=([1], [0]))
            gxp[:, :, ky:ky + oh * stride:stride,
                kx:kx + ow * stride:stride] += contrib.transpose(0, 3, 1, 2)


def conv2d_bwd_kernel(gy, xp, gk, stride):
    kh, kw = gk.shape[2], gk.shape[3]
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
    gk += np.tensordot(gy, win, axes=([0, 2, 3], [0, 2, 3]))


def _corners(src, u):
    H, W = src.shape
    ii, jj = np.meshgrid(np.arange(H), np.arange(W), indexing="ij")
    y = ii + u[0]
    x = jj + u[1]
    y0 = np.floor(y).astype(np.int64)
    x0 = np.floor(x).astype(np.int64)
    wy = (y - y0).astype(src.dtype)
    wx = (x - x0).astype(src.dtype)
    vals, bounds, coords = [], [], []
    for dy, dx in ((0, 0), (0, 1), (1, 0), (1, 1)):
        yc, xc = y0 + dy, x0 + dx
        ok = (yc >= 0) & (yc < H) & (xc >= 0) & (xc < W)
        ycl = np.clip(yc, 0, H - 1)
        xcl = np.clip(xc, 0, W - 1)
        vals.append(np.where(ok, src[ycl, xcl], 0).astype(src.dtype))
        bounds.append(ok)
        coords.append((ycl, xcl))
    return vals, bounds, coords, wy, wx


def warp_fwd(src, u, out):
    (v00, v01, v10, v11), _, _, wy, wx = _corners(src, u)
    out[...] = ((1 - wy) * ((1 - wx) * v00 + wx * v01)
                + wy * ((1 - wx) * v10 + wx * v11))


def warp_bwd(gy_out, src, u, gsrc, gu):
    vals, bounds, coords, wy, wx = _corners(src, u)
    v00, v01, v10, v11 = vals
    gu[0] += gy_out * ((1 - wx) * (v10 - v00) + wx * (v11 - v01))
    gu[1] += gy_out * ((1 - wy) * (v01 - v00) + wy * (v11 - v10))
    weights = ((1 - wy) * (1 - wx), (1 - wy) * wx, wy * (1 - wx), wy * wx)
    for w, ok, (yc, xc) in zip(weights, bounds, coords):
        contrib = gy_out * w
        np.add.at(gsrc, (yc[ok], xc[ok]), contrib[ok])
