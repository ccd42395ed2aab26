"""Displacement-prediction network and the four training variants.

One encoder-decoder CNN predicts a displacement field from a concatenated
(target, source) pair. Groupwise registration evaluates the same weights
on all K sources (weight tying) and averages the warped results through a
mean layer. Variants: vxm-cc / vxm-ed apply the loss per source pair;
aim-cc / aim-ed apply it once to the warped mean.
"""

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from groupreg import tensor as T
from groupreg.errors import ShapeError
from groupreg.losses import LossConfig, objective_group, objective_pairwise
from groupreg.tensor import Tensor
from groupreg.warp import DisplacementField, compose_mean, warp_bilinear

VARIANTS = ("vxm-cc", "vxm-ed", "aim-cc", "aim-ed")
LEAKY_SLOPE = 0.2

# (name, cin, cout) for every conv; all 3x3, padding 1, stride 1.
# Downsampling is a 2x2 mean-pool after each encoder conv; the decoder
# mirrors it with nearest-neighbor 2x upsampling and skip concatenations.
_CONV_PLAN = [
    ("enc0", 2, 16),
    ("enc1", 16, 32),
    ("enc2", 32, 32),
    ("enc3", 32, 32),
    ("dec0", 32, 32),
    ("dec1", 64, 32),   # up + skip enc3 activation
    ("dec2", 64, 32),   # up + skip enc2 activation
    ("dec3", 64, 32),   # up + skip enc1 activation
    ("trail0", 34, 16),  # up + skip raw 2-channel input
    ("trail1", 16, 16),
    ("flow", 16, 2),
]

N_DOWNSAMPLE = 4


def parameter_count():
    """Closed-form parameter count of the conv plan."""
    return sum(cout * (cin * 9 + 1) for _, cin, cout in _CONV_PLAN)


class RegistrationModel:
    """Weight-tied displacement predictor; the same parameters serve any K."""

    def __init__(self, seed=0, dtype=np.float32):
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, 0x4A1])))
        self.params = {}
        for name, cin, cout in _CONV_PLAN:
            if name == "flow":
                w = np.zeros((cout, cin, 3, 3), dtype=dtype)
            else:
                std = math.sqrt(2.0 / (cin * 9))
                w = rng.normal(0.0, std, size=(cout, cin, 3, 3)).astype(dtype)
            self.params[name + ".w"] = Tensor(w, requires_grad=True)
            self.params[name + ".b"] = Tensor(np.zeros(cout, dtype=dtype), requires_grad=True)

    def parameters(self):
        return list(self.params.values())

    def parameter_names(self):
        return list(self.params.keys())

    def cast(self, dtype):
        out = RegistrationModel.__new__(RegistrationModel)
        out.params = {k: Tensor(v.data.astype(dtype), requires_grad=v.requires_grad)
                      for k, v in self.params.items()}
        return out

    def _conv(self, x, name, activate=True):
        y = T.conv2d(x, self.params[name + ".w"], self.params[name + ".b"],
                     stride=1, padding=1)
        return T.leaky_relu(y, LEAKY_SLOPE) if activate else y


@dataclass
class GroupInput:
    """One training/inference sample: noisy target, K sources, and (for
    training only) the clean counterpart of the target frame."""
    target_noisy: np.ndarray
    sources: list
    clean_ref: Optional[np.ndarray] = None

    def __post_init__(self):
        if not self.sources:
            raise ValueError("GroupInput needs at least one source")
        shape = np.asarray(self.target_noisy).shape
        for j, s in enumerate(self.sources):
            if np.asarray(s).shape != shape:
                raise ShapeError(f"source {j} shape {np.asarray(s).shape} != target {shape}")

    @property
    def k(self):
        return len(self.sources)


def _as_chw(img, dtype):
    if isinstance(img, Tensor):
        return img
    arr = np.asarray(img, dtype=dtype)
    if arr.ndim == 2:
        arr = arr[None]
    return Tensor(arr)


def predict_displacement(model, target, source):
    """Run the CNN on a (target, source) pair; returns a [2,H,W] field."""
    dtype = model.params["enc0.w"].data.dtype
    t = _as_chw(target, dtype)
    s = _as_chw(source, dtype)
    if t.data.shape != s.data.shape:
        raise ShapeError(f"predict_displacement: target {t.data.shape} vs source {s.data.shape}")
    _, H, W = t.data.shape
    div = 2 ** N_DOWNSAMPLE
    if H % div or W % div:
        raise ShapeError(f"spatial size {H}x{W} not divisible by {div}")
    x = T.concat_channels(T.reshape(t, (1, 1, H, W)), T.reshape(s, (1, 1, H, W)))

    a0 = model._conv(x, "enc0")
    a1 = model._conv(T.avgpool2x(a0), "enc1")
    a2 = model._conv(T.avgpool2x(a1), "enc2")
    a3 = model._conv(T.avgpool2x(a2), "enc3")
    bottom = T.avgpool2x(a3)

    d = model._conv(bottom, "dec0")
    d = model._conv(T.concat_channels(T.upsample2x(d), a3), "dec1")
    d = model._conv(T.concat_channels(T.upsample2x(d), a2), "dec2")
    d = model._conv(T.concat_channels(T.upsample2x(d), a1), "dec3")
    d = model._conv(T.concat_channels(T.upsample2x(d), x), "trail0")
    d = model._conv(d, "trail1")
    u = model._conv(d, "flow", activate=False)
    return T.reshape(u, (2, H, W))


def forward_group(model, gin):
    """Register all sources to the noisy target and average them.

    Returns (registered image [1,H,W], list of displacement fields)."""
    fields = [predict_displacement(model, gin.target_noisy, s) for s in gin.sources]
    dtype = model.params["enc0.w"].data.dtype
    warped = [warp_bilinear(_as_chw(s, dtype), u) for s, u in zip(gin.sources, fields)]
    return compose_mean(warped, gin.k), fields


def training_loss(model, gin, cfg, variant, detector=None):
    if variant not in VARIANTS:
        raise ValueError(f"variant must be one of {VARIANTS}, got {variant!r}")
    mode = "edge" if variant.endswith("-ed") else "cc"
    if mode == "edge" and detector is None:
        raise ValueError(f"variant {variant} requires an edge detector")
    if gin.clean_ref is None:
        raise ValueError("training_loss requires the clean reference frame")
    dtype = model.params["enc0.w"].data.dtype
    t_clean = _as_chw(gin.clean_ref, dtype)
    if variant.startswith("aim"):
        registered, fields = forward_group(model, gin)
        return objective_group(t_clean, registered, fields, cfg, mode, detector)
    # pairwise: loss per source against the clean reference, then averaged
    fields = [predict_displacement(model, gin.target_noisy, s) for s in gin.sources]
    acc = None
    for s, u in zip(gin.sources, fields):
        warped = warp_bilinear(_as_chw(s, dtype), u)
        term = objective_pairwise(t_clean, warped, u, cfg, mode, detector)
        acc = term if acc is None else T.add(acc, term)
    return T.scalar_mul(acc, 1.0 / gin.k)
