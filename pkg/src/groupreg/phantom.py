"""Synthetic free-breathing series generator with ground-truth motion.

A geometric torso/heart scene stands in for real anatomy. Breathing is a
sin^(2n) amplitude curve with a phase-lagged secondary axis (depth,
hysteresis, and frequency as the three knobs). Each frame is the clean
reference warped by a known displacement field; optional white Gaussian
noise is scaled to a nominal series SNR.
"""

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.ndimage import gaussian_filter

from groupreg import backend


@dataclass
class Breathing:
    depth_px: float = 4.0
    period_frames: float = 8.0
    shape_exponent: int = 2
    hysteresis_phase: float = 0.5

    def __post_init__(self):
        if self.depth_px < 0:
            raise ValueError("depth_px must be >= 0")
        if self.period_frames <= 0:
            raise ValueError("period_frames must be > 0")
        if self.shape_exponent < 1:
            raise ValueError("shape_exponent must be >= 1")


@dataclass
class Lesion:
    center: tuple = (0.42, 0.56)     # fractional (row, col)
    radii: tuple = (0.025, 0.035)    # fractional semi-axes
    intensity_delta: float = 0.3


@dataclass
class PhantomSpec:
    size: int = 192
    frames: int = 15
    breathing: Breathing = field(default_factory=Breathing)
    lesion: Optional[Lesion] = None
    anatomy_seed: int = 0
    noise_snr_db: Optional[float] = None

    def __post_init__(self):
        if self.frames < 2:
            raise ValueError("frames must be >= 2")


@dataclass
class GeneratedSeries:
    clean_reference: np.ndarray
    clean_frames: np.ndarray      # [F, H, W]
    noisy_frames: np.ndarray      # [F, H, W]; equals clean if no noise
    gt_fields: np.ndarray         # [F, 2, H, W], frame <- reference
    snr_actual_db: np.ndarray     # per frame; inf when no noise


def breathing_curve(spec, frame_index):
    """(si_amp, ap_amp) in pixels at the given frame index."""
    if frame_index < 0:
        raise ValueError("frame_index must be >= 0")
    b = spec.breathing
    n2 = 2 * b.shape_exponent
    phase = math.pi * frame_index / b.period_frames
    si = b.depth_px * math.sin(phase) ** n2
    ap = 0.4 * b.depth_px * math.sin(phase + b.hysteresis_phase) ** n2
    return si, ap


def _geometry(seed, size):
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, 0xA11A])))
    jitter = lambda lo, hi: float(rng.uniform(lo, hi))
    heart = (0.52 + jitter(-0.03, 0.03), 0.45 + jitter(-0.03, 0.03))
    pool_r = 0.085 * jitter(0.9, 1.1)
    return {
        "torso_axes": (0.42 * jitter(0.95, 1.05), 0.46 * jitter(0.95, 1.05)),
        "lung_l": ((0.38, 0.28), (0.18, 0.10 * jitter(0.9, 1.1))),
        "lung_r": ((0.38, 0.66), (0.20 * jitter(0.9, 1.1), 0.11)),
        "heart": heart,
        "pool_r": pool_r,
        "myo_r": pool_r + 0.045,
        "pap": (heart[0] + 0.02, heart[1] - 0.5 * pool_r),
        "pap_r": 0.016,
    }


def _ellipse(rr, cc, center, axes):
    return ((rr - center[0]) / axes[0]) ** 2 + ((cc - center[1]) / axes[1]) ** 2 <= 1.0


def anatomy(seed, size, lesion=None):
    """Deterministic geometric scene in [0,1] with anti-aliased boundaries."""
    if size < 32:
        raise ValueError("size must be >= 32")
    g = _geometry(seed, size)
    coords = np.linspace(0.0, 1.0, size)
    rr, cc = np.meshgrid(coords, coords, indexing="ij")
    img = np.full((size, size), 0.05)
    img[_ellipse(rr, cc, (0.5, 0.5), g["torso_axes"])] = 0.35
    img[_ellipse(rr, cc, *g["lung_l"])] = 0.12
    img[_ellipse(rr, cc, *g["lung_r"])] = 0.12
    heart = g["heart"]
    img[_ellipse(rr, cc, heart, (g["myo_r"], g["myo_r"]))] = 0.45
    img[_ellipse(rr, cc, heart, (g["pool_r"], g["pool_r"]))] = 0.85
    img[_ellipse(rr, cc, g["pap"], (g["pap_r"], g["pap_r"]))] = 0.25
    if lesion is not None:
        inside = _ellipse(rr, cc, lesion.center, lesion.radii)
        img[inside] += lesion.intensity_delta
    return gaussian_filter(img, sigma=1.0)


def heart_mask(seed, size, margin=1.6):
    """Disk over the myocardium/blood pool region of the scene."""
    g = _geometry(seed, size)
    coords = np.linspace(0.0, 1.0, size)
    rr, cc = np.meshgrid(coords, coords, indexing="ij")
    r = g["myo_r"] * margin
    return _ellipse(rr, cc, g["heart"], (r, r))


def _bump(seed, size):
    g = _geometry(seed, size)
    sigma = size / 8.0
    center = (g["heart"][0] * (size - 1), g["heart"][1] * (size - 1))
    ii, jj = np.meshgrid(np.arange(size, dtype=np.float64),
                         np.arange(size, dtype=np.float64), indexing="ij")
    return np.exp(-((ii - center[0]) ** 2 + (jj - center[1]) ** 2) / (2 * sigma ** 2))


def gt_field(spec, frame_index, bump=None):
    """Ground-truth displacement (reference -> frame), [2, size, size]."""
    si, ap = breathing_curve(spec, frame_index)
    size = spec.size
    u = np.zeros((2, size, size))
    depth = spec.breathing.depth_px
    ratio = si / depth if depth > 0 else 0.0
    if bump is None:
        bump = _bump(spec.anatomy_seed, size)
    u[0] = si + 0.25 * depth * ratio * bump  # bump deforms the SI axis only
    u[1] = ap
    return u


def generate(spec):
    """Full series: clean reference, warped clean frames, noisy frames,
    ground-truth fields, and the measured per-frame SNR."""
    size = spec.size
    ref = anatomy(spec.anatomy_seed, size, spec.lesion)
    bump = _bump(spec.anatomy_seed, size)
    fields = np.stack([gt_field(spec, j, bump) for j in range(spec.frames)])
    clean = np.stack([backend.warp_forward(ref, fields[j]) for j in range(spec.frames)])
    snr_actual = np.full(spec.frames, np.inf)
    if spec.noise_snr_db is None:
        noisy = clean.copy()
    else:
        rng = np.random.Generator(np.random.PCG64(
            np.random.SeedSequence([spec.anatomy_seed, 0x5E1, spec.frames])))
        power = float(np.mean(clean ** 2))
        sigma = math.sqrt(power * 10.0 ** (-spec.noise_snr_db / 10.0))
        noise = rng.normal(0.0, sigma, size=clean.shape)
        noisy = clean + noise
        for j in range(spec.frames):
            snr_actual[j] = 10.0 * math.log10(power / float(np.mean(noise[j] ** 2)))
    return GeneratedSeries(ref, clean, noisy, fields, snr_actual)
