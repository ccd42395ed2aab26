"""Kernel backend selection and the padded/allocating wrappers around it.

The compiled Cython extension is preferred when it imports; otherwise the
pure-numpy fallback is used. Set GROUPREG_BACKEND=compiled|python|auto to
force a choice (``compiled`` raises if the extension is unavailable).
"""

import os

import numpy as np


def _select():
    choice = os.environ.get("GROUPREG_BACKEND", "auto")
    if choice not in ("auto", "compiled", "python"):
        raise ValueError(f"GROUPREG_BACKEND must be auto|compiled|python, got {choice!r}")
    if choice in ("auto", "compiled"):
        try:
            from groupreg import _kernels
            return _kernels, "compiled"
        except ImportError:
            if choice == "compiled":
                raise
    from groupreg import _kernels_py
    return _kernels_py, "python"


_impl, BACKEND_NAME = _select()


def _pad4(x, pad):
    if pad == 0:
        return np.ascontiguousarray(x)
    return np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))


def conv2d_forward(x, k, bias, stride, pad):
    N, C, H, W = x.shape
    F, _, kh, kw = k.shape
    oh = (H + 2 * pad - kh) // stride + 1
    ow = (W + 2 * pad - kw) // stride + 1
    xp = _pad4(x, pad)
    y = np.empty((N, F, oh, ow), dtype=x.dtype)
    y[...] = bias.reshape(1, F, 1, 1)
    _impl.conv2d_fwd(xp, np.ascontiguousarray(k), y, stride)
    return y


def conv2d_backward(gy, x, k, stride, pad):
    N, C, H, W = x.shape
    gy = np.ascontiguousarray(gy)
    xp = _pad4(x, pad)
    gxp = np.zeros_like(xp)
    _impl.conv2d_bwd_input(gy, np.ascontiguousarray(k), gxp, stride)
    gx = gxp[:, :, pad:pad + H, pad:pad + W].copy() if pad else gxp
    gk = np.zeros_like(k)
    _impl.conv2d_bwd_kernel(gy, xp, gk, stride)
    gbias = gy.sum(axis=(0, 2, 3))
    return gx, gk, gbias


def warp_forward(src, u):
    out = np.empty_like(src)
    _impl.warp_fwd(np.ascontiguousarray(src), np.ascontiguousarray(u), out)
    return out


def warp_backward(gy, src, u):
    gsrc = np.zeros_like(src)
    gu = np.zeros_like(u)
    _impl.warp_bwd(np.ascontiguousarray(gy), np.ascontiguousarray(src),
                   np.ascontiguousarray(u), gsrc, gu)
    return gsrc, gu
