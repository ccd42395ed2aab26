"""Preprocessing, augmentation, the training loop, and inference.

All randomness flows from one seed through named sub-streams, so a run is
a pure function of (data, config, seed).
"""

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from groupreg import backend
from groupreg.errors import NumericError, ShapeError
from groupreg.io import StoredSeries, load_model, load_series, save_model  # noqa: F401
from groupreg.losses import DEFAULT_LAMBDA, LossConfig
from groupreg.model import GroupInput, RegistrationModel, predict_displacement, training_loss
from groupreg.optim import SGD

N_DIVISIBLE = 16  # spatial size the network requires


@dataclass
class TrainConfig:
    variant: str = "aim-ed"
    epochs: int = 2500
    lr_max: float = 0.1
    lr_min: float = 1e-3
    batch_size: int = 4
    lam: Optional[float] = None      # default depends on cc vs edge mode
    k: int = 14
    seed: int = 0
    noise_center_db: float = 7.0
    noise_halfwidth_db: float = 3.5
    max_shift_px: int = 2
    intensity_jitter_frac: float = 0.1
    snr_eval_levels: tuple = (11.0, 6.0, 1.0)
    momentum: float = 0.9
    cc_window: int = 9
    epsilon: float = 1e-5

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        # lr 0 is allowed so a no-op training run stays expressible
        if not (self.lr_max >= self.lr_min >= 0):
            raise ValueError("need lr_max >= lr_min >= 0")
        if self.noise_halfwidth_db < 0:
            raise ValueError("noise_halfwidth_db must be >= 0")

    @property
    def mode(self):
        return "edge" if self.variant.endswith("-ed") else "cc"

    def loss_config(self):
        lam = DEFAULT_LAMBDA[self.mode] if self.lam is None else self.lam
        return LossConfig(cc_window=self.cc_window, epsilon=self.epsilon, lam=lam)


def preprocess(img, size=None):
    """Center-crop/zero-pad to a square of the given size, then normalize
    to zero mean and unit std. Returns (image, mean, std) with the
    constants recorded for inversion; a flat image gets std = 1."""
    img = np.asarray(img, dtype=np.float64)
    if size is not None:
        h, w = img.shape
        out = np.zeros((size, size), dtype=img.dtype)
        src_r = max((h - size) // 2, 0)
        src_c = max((w - size) // 2, 0)
        dst_r = max((size - h) // 2, 0)
        dst_c = max((size - w) // 2, 0)
        rows = min(h, size)
        cols = min(w, size)
        out[dst_r:dst_r + rows, dst_c:dst_c + cols] = img[src_r:src_r + rows,
                                                          src_c:src_c + cols]
        img = out
    mean = float(img.mean())
    std = float(img.std())
    if std < 1e-12:
        std = 1.0
    return (img - mean) / std, mean, std


def lr_schedule(epoch, cfg):
    if not 0 <= epoch < cfg.epochs:
        raise ValueError(f"epoch {epoch} outside [0, {cfg.epochs})")
    span = max(cfg.epochs - 1, 1)
    return cfg.lr_min + 0.5 * (cfg.lr_max - cfg.lr_min) * (1 + math.cos(math.pi * epoch / span))


def shift_int(img, dr, dc):
    """Integer shift with zero fill; positive dr moves content down."""
    out = np.zeros_like(img)
    h, w = img.shape
    src_r = slice(max(-dr, 0), min(h - dr, h))
    dst_r = slice(max(dr, 0), min(h + dr, h))
    src_c = slice(max(-dc, 0), min(w - dc, w))
    dst_c = slice(max(dc, 0), min(w + dc, w))
    out[dst_r, dst_c] = img[src_r, src_c]
    return out


def augment(gin, cfg, rng):
    """Noise/shift/jitter augmentation of a clean GroupInput.

    The clean reference is passed through untouched. Noise at one SNR per
    sample (relative to the sample's clean power) hits the target and all
    sources; integer shifts and intensity jitter hit the sources only."""
    snr = cfg.noise_center_db + float(rng.uniform(-1, 1)) * cfg.noise_halfwidth_db
    power = float(np.mean(np.square(np.stack([gin.target_noisy] + list(gin.sources)))))
    sigma = math.sqrt(power * 10.0 ** (-snr / 10.0))

    def jitter():
        f = cfg.intensity_jitter_frac
        return 1.0 + float(rng.uniform(-f, f)) if f > 0 else 1.0

    def noise(shape):
        return rng.normal(0.0, sigma, size=shape) if sigma > 0 else 0.0

    target = gin.target_noisy * jitter() + noise(gin.target_noisy.shape)
    sources = []
    for s in gin.sources:
        if cfg.max_shift_px > 0:
            dr, dc = rng.integers(-cfg.max_shift_px, cfg.max_shift_px + 1, size=2)
            s = shift_int(s, int(dr), int(dc))
        sources.append(s * jitter() + noise(s.shape))
    return GroupInput(target, sources, clean_ref=gin.clean_ref)


@dataclass
class TrainData:
    train: list                      # list of [F,H,W] clean frame stacks
    val: list = field(default_factory=list)


@dataclass
class TrainResult:
    model: RegistrationModel
    best_model: RegistrationModel
    log: list                        # rows (epoch, train_loss, val_loss, lr)


def _rng(seed, *tags):
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, *tags])))


def _normalized_stack(frames):
    return np.stack([preprocess(f)[0] for f in frames]).astype(np.float32)


def _draw_sample(frames, cfg, rng):
    n = frames.shape[0]
    idx = int(rng.integers(n))
    others = [j for j in range(n) if j != idx]
    k = min(cfg.k, len(others))
    chosen = sorted(int(j) for j in rng.permutation(others)[:k])
    clean = frames[idx]
    gin = GroupInput(clean, [frames[j] for j in chosen], clean_ref=clean)
    return augment(gin, cfg, rng)


def _batch_loss(model, samples, cfg, detector):
    loss_cfg = cfg.loss_config()
    total = None
    for gin in samples:
        loss = training_loss(model, gin, loss_cfg, cfg.variant, detector)
        from groupreg import tensor as T
        total = loss if total is None else T.add(total, loss)
    from groupreg import tensor as T
    return T.scalar_mul(total, 1.0 / len(samples))


def train(dataset, cfg, detector=None):
    """SGD with momentum and cosine-annealed learning rate. Returns the
    final model, the best-validation model, and the per-epoch log."""
    if not dataset.train:
        raise ValueError("train: empty dataset")
    if cfg.mode == "edge" and detector is None:
        raise ValueError(f"variant {cfg.variant} requires an edge detector")
    train_frames = [_normalized_stack(f) for f in dataset.train]
    val_frames = [_normalized_stack(f) for f in (dataset.val or dataset.train)]
    model = RegistrationModel(seed=cfg.seed, dtype=np.float32)
    opt = SGD(model.parameters(), momentum=cfg.momentum)
    order_rng = _rng(cfg.seed, 1)
    sample_rng = _rng(cfg.seed, 2)
    log = []
    best = (math.inf, None)
    for epoch in range(cfg.epochs):
        lr = lr_schedule(epoch, cfg)
        order = order_rng.permutation(len(train_frames))
        epoch_losses = []
        for start in range(0, len(order), cfg.batch_size):
            batch_ids = order[start:start + cfg.batch_size]
            samples = [_draw_sample(train_frames[i], cfg, sample_rng) for i in batch_ids]
            loss = _batch_loss(model, samples, cfg, detector)
            val = loss.item()
            if not math.isfinite(val):
                raise NumericError(f"non-finite training loss {val} at epoch {epoch}, "
                                   f"series batch {list(map(int, batch_ids))}")
            opt.zero_grad()
            loss.backward()
            opt.step(lr)
            epoch_losses.append(val)
        val_rng = _rng(cfg.seed, 3, epoch)
        val_samples = [_draw_sample(f, cfg, val_rng) for f in val_frames]
        val_loss = _batch_loss(model, val_samples, cfg, detector).item()
        train_loss = float(np.mean(epoch_losses))
        log.append((epoch, train_loss, val_loss, lr))
        if val_loss < best[0]:
            best = (val_loss, {k: v.data.copy() for k, v in model.params.items()})
    best_model = model.cast(np.float32)
    if best[1] is not None:
        for k in best_model.params:
            best_model.params[k].data = best[1][k]
    return TrainResult(model, best_model, log)


def register(model, series, target_index):
    """Register every other frame of a series onto the chosen target frame.

    Displacements are predicted from per-frame-normalized inputs; the raw
    sources are then warped and averaged, so the output lives in the
    original intensity scale. Returns (registered [H,W], fields [K,2,H,W])."""
    frames = series.frames if isinstance(series, StoredSeries) else np.asarray(series)
    n = frames.shape[0]
    if not 0 <= target_index < n:
        raise IndexError(f"target index {target_index} outside [0, {n})")
    h, w = frames.shape[1:]
    pad_h = (-h) % N_DIVISIBLE
    pad_w = (-w) % N_DIVISIBLE
    norm = [preprocess(f)[0].astype(np.float32) for f in frames]
    if pad_h or pad_w:
        norm = [np.pad(f, ((0, pad_h), (0, pad_w))) for f in norm]
    target = norm[target_index]
    src_ids = [j for j in range(n) if j != target_index]
    fields = []
    warped = []
    for j in src_ids:
        u = predict_displacement(model, target, norm[j]).data[:, :h, :w]
        fields.append(u.astype(np.float64))
        warped.append(backend.warp_forward(frames[j].astype(np.float64), fields[-1]))
    registered = np.mean(warped, axis=0)
    return registered, np.stack(fields)
