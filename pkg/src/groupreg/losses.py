"""Similarity losses and the displacement-smoothness regularizer.

Similarity is either squared local normalized cross-correlation over a
sliding window, or mean-squared difference of edge maps produced by a
frozen edge detector. The regularizer penalizes squared forward
differences of the displacement components.
"""

from dataclasses import dataclass, field

import numpy as np

from groupreg import tensor as T
from groupreg.errors import ShapeError
from groupreg.tensor import Tensor
from groupreg.warp import DisplacementField

DEFAULT_LAMBDA = {"cc": 0.01, "edge": 0.1}


@dataclass
class LossConfig:
    cc_window: int = 9
    epsilon: float = 1e-5
    lam: float = 0.01

    def __post_init__(self):
        if self.cc_window < 3 or self.cc_window % 2 == 0:
            raise ValueError(f"cc_window must be odd and >= 3, got {self.cc_window}")
        if not np.isfinite(self.lam) or self.lam < 0:
            raise ValueError(f"lambda must be finite and >= 0, got {self.lam}")


def _as_image(x):
    if not isinstance(x, Tensor):
        x = Tensor(x)
    if x.data.ndim != 3 or x.data.shape[0] != 1:
        raise ShapeError(f"expected image [1,H,W], got {x.data.shape}")
    return x


def _box_kernel(n, dtype):
    return Tensor(np.ones((1, 1, n, n), dtype=dtype)), Tensor(np.zeros(1, dtype=dtype))


def cc_loss(t, w, cfg=None):
    """1 - mean squared local normalized cross-correlation.

    Window sums are zero-padded at the borders and always divided by the
    full window size.
    """
    cfg = cfg or LossConfig()
    t = _as_image(t)
    w = _as_image(w)
    if t.data.shape != w.data.shape:
        raise ShapeError(f"cc_loss: shapes {t.data.shape} vs {w.data.shape}")
    n = cfg.cc_window
    _, H, W = t.data.shape
    if H < n or W < n:
        raise ShapeError(f"cc_loss: window {n} larger than image {H}x{W}")
    kern, kbias = _box_kernel(n, t.data.dtype)
    pad = (n - 1) // 2
    inv_n2 = 1.0 / (n * n)

    def box(x):
        return T.conv2d(T.reshape(x, (1, 1, H, W)), kern, kbias, stride=1, padding=pad)

    t_sum = box(t)
    w_sum = box(w)
    t2_sum = box(T.square(t))
    w2_sum = box(T.square(w))
    tw_sum = box(T.mul(t, w))
    cross = T.sub(tw_sum, T.scalar_mul(T.mul(t_sum, w_sum), inv_n2))
    t_var = T.sub(t2_sum, T.scalar_mul(T.square(t_sum), inv_n2))
    w_var = T.sub(w2_sum, T.scalar_mul(T.square(w_sum), inv_n2))
    cc2 = T.div(T.square(cross), T.add_scalar(T.mul(t_var, w_var), cfg.epsilon))
    return T.add_scalar(T.scalar_mul(T.mean_all(cc2), -1.0), 1.0)


def mse_loss(a, b):
    if not isinstance(a, Tensor):
        a = Tensor(a)
    if not isinstance(b, Tensor):
        b = Tensor(b)
    if a.data.shape != b.data.shape:
        raise ShapeError(f"mse_loss: shapes {a.data.shape} vs {b.data.shape}")
    return T.mean_all(T.square(T.sub(a, b)))


def smoothness_loss(u):
    """Mean squared forward difference over both displacement components
    and both spatial directions, averaged jointly."""
    ut = u.u if isinstance(u, DisplacementField) else (u if isinstance(u, Tensor) else Tensor(u))
    _, H, W = ut.data.shape
    if H < 2 or W < 2:
        raise ShapeError(f"smoothness_loss: needs H,W >= 2, got {H}x{W}")
    d_row = T.sub(T.narrow(ut, 1, 1, H - 1), T.narrow(ut, 1, 0, H - 1))
    d_col = T.sub(T.narrow(ut, 2, 1, W - 1), T.narrow(ut, 2, 0, W - 1))
    total = T.add(T.sum_all(T.square(d_row)), T.sum_all(T.square(d_col)))
    count = 2 * (H - 1) * W + 2 * H * (W - 1)
    return T.scalar_mul(total, 1.0 / count)


def edge_similarity(t_ref, img, detector):
    """MSE between edge maps; the reference edge map carries no gradient."""
    from groupreg.edge import detect
    target_edges = detect(detector, _as_image(t_ref)).detach()
    return mse_loss(detect(detector, img), target_edges)


def _similarity(t_ref, img, cfg, mode, detector):
    if mode == "cc":
        return cc_loss(t_ref, img, cfg)
    if mode == "edge":
        if detector is None:
            raise ValueError("edge mode requires a detector")
        return edge_similarity(t_ref, img, detector)
    raise ValueError(f"unknown similarity mode {mode!r}")


def objective_pairwise(t_ref, warped, u, cfg, mode="cc", detector=None):
    sim = _similarity(t_ref, warped, cfg, mode, detector)
    return T.add(sim, T.scalar_mul(smoothness_loss(u), cfg.lam))


def objective_group(t_ref, warped_mean, u_list, cfg, mode="cc", detector=None):
    if not u_list:
        raise ValueError("objective_group: empty field list")
    k = len(u_list)
    sim = _similarity(t_ref, warped_mean, cfg, mode, detector)
    reg = smoothness_loss(u_list[0])
    for u in u_list[1:]:
        reg = T.add(reg, smoothness_loss(u))
    return T.add(sim, T.scalar_mul(reg, cfg.lam / k))
