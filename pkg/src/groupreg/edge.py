"""Edge detection: a classical Sobel baseline and a small trainable CNN
that stays usable at low SNR.

The CNN (4 conv layers, 16 channels, leaky-relu, sigmoid head) is trained
to reproduce binarized Sobel edges of clean images from noisy inputs. Once
trained it is frozen: gradients flow through it during registration
training but its own weights never update.
"""

import math

import numpy as np

from groupreg import backend
from groupreg import tensor as T
from groupreg.errors import ShapeError
from groupreg.optim import SGD
from groupreg.tensor import Tensor

SOBEL_X = np.array([[-1.0, 0.0, 1.0],
                    [-2.0, 0.0, 2.0],
                    [-1.0, 0.0, 1.0]])
SOBEL_Y = SOBEL_X.T

_LAYER_PLAN = [(1, 16), (16, 16), (16, 16), (16, 1)]
LEAKY_SLOPE = 0.2
BINARIZE_THRESHOLD = 0.2


def sobel_edges(img, epsilon=1e-5):
    """Max-normalized Sobel gradient magnitude with zero padding.

    Not differentiable (used for targets and baselines only); an all-flat
    image maps to all zeros.
    """
    data = img.data if isinstance(img, Tensor) else np.asarray(img, dtype=np.float64)
    if data.ndim == 2:
        data = data[None]
    if data.ndim != 3 or data.shape[0] != 1:
        raise ShapeError(f"sobel_edges: expected [1,H,W], got {data.shape}")
    _, H, W = data.shape
    if H < 3 or W < 3:
        raise ShapeError(f"sobel_edges: needs H,W >= 3, got {H}x{W}")
    kern = np.stack([SOBEL_X, SOBEL_Y])[:, None].astype(data.dtype)
    g = backend.conv2d_forward(data[None], kern, np.zeros(2, dtype=data.dtype),
                               stride=1, pad=1)[0]
    mag = np.sqrt(g[0] ** 2 + g[1] ** 2 + epsilon) - math.sqrt(epsilon)
    peak = mag.max()
    if peak <= epsilon:
        return Tensor(np.zeros_like(data))
    return Tensor((mag / peak)[None])


class EdgeDetector:
    """Small CNN edge-probability detector, output in [0,1]."""

    def __init__(self, seed=0, dtype=np.float32):
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
        self.weights = []
        self.biases = []
        for cin, cout in _LAYER_PLAN:
            std = math.sqrt(2.0 / (cin * 9))
            w = rng.normal(0.0, std, size=(cout, cin, 3, 3)).astype(dtype)
            self.weights.append(Tensor(w))
            self.biases.append(Tensor(np.zeros(cout, dtype=dtype)))
        self.is_trained = False

    def parameters(self):
        return self.weights + self.biases

    def cast(self, dtype):
        out = EdgeDetector.__new__(EdgeDetector)
        out.weights = [Tensor(w.data.astype(dtype)) for w in self.weights]
        out.biases = [Tensor(b.data.astype(dtype)) for b in self.biases]
        out.is_trained = self.is_trained
        return out

    def set_trainable(self, flag):
        for p in self.parameters():
            p.requires_grad = flag


def detect(detector, img):
    """Edge-probability map of img [1,H,W]; differentiable w.r.t. img."""
    if not detector.is_trained:
        raise RuntimeError("edge detector is not trained/loaded")
    if not isinstance(img, Tensor):
        img = Tensor(img)
    if img.data.ndim != 3 or img.data.shape[0] != 1:
        raise ShapeError(f"detect: expected [1,H,W], got {img.data.shape}")
    _, H, W = img.data.shape
    x = T.reshape(img, (1, 1, H, W))
    n_layers = len(detector.weights)
    for i, (w, b) in enumerate(zip(detector.weights, detector.biases)):
        if img.data.dtype != w.data.dtype:
            w = Tensor(w.data.astype(img.data.dtype), requires_grad=w.requires_grad)
            b = Tensor(b.data.astype(img.data.dtype), requires_grad=b.requires_grad)
        x = T.conv2d(x, w, b, stride=1, padding=1)
        if i < n_layers - 1:
            x = T.leaky_relu(x, LEAKY_SLOPE)
    return T.reshape(T.sigmoid(x), (1, H, W))


def _noise_sigma(img, snr_db):
    power = float(np.mean(img ** 2))
    return math.sqrt(power * 10.0 ** (-snr_db / 10.0))


def binarized_sobel_target(img, threshold=BINARIZE_THRESHOLD):
    return (sobel_edges(img).data > threshold).astype(np.float64)


def train_edge_detector(clean_images, snr_range_db=(1.0, 23.0), seed=0,
                        steps=600, lr_max=0.2, lr_min=0.004,
                        intensity_shift=0.5, momentum=0.9):
    """Train the CNN on clean images + synthetic noise against binarized
    Sobel edges of the clean images. Deterministic given the seed."""
    if not clean_images:
        raise ValueError("train_edge_detector: empty dataset")
    lo, hi = snr_range_db
    if not lo < hi:
        raise ValueError(f"snr range must satisfy lo < hi, got ({lo}, {hi})")
    images = [np.asarray(im, dtype=np.float32) for im in clean_images]
    targets = [binarized_sobel_target(im).astype(np.float32) for im in images]
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, 0xED9E])))
    detector = EdgeDetector(seed=seed)
    detector.set_trainable(True)
    detector.is_trained = True  # detect() is used inside the loop
    opt = SGD(detector.parameters(), momentum=momentum)
    from groupreg.losses import mse_loss
    for step in range(steps):
        idx = int(rng.integers(len(images)))
        img = images[idx]
        snr = float(rng.uniform(lo, hi))
        noisy = img + rng.normal(0.0, _noise_sigma(img, snr), size=img.shape).astype(np.float32)
        noisy = noisy + np.float32(rng.uniform(-intensity_shift, intensity_shift))
        loss = mse_loss(detect(detector, noisy[None]), Tensor(targets[idx]))
        opt.zero_grad()
        loss.backward()
        lr = lr_min + 0.5 * (lr_max - lr_min) * (1 + math.cos(math.pi * step / max(steps - 1, 1)))
        opt.step(lr)
    detector.set_trainable(False)
    return detector


def edge_error_curve(detector, clean_images, snr_levels_db=(23.0, 16.0, 11.0, 6.0, 1.0),
                     seed=0):
    """Robustness curve on held-out clean images: per SNR level, the mean
    edge-map MSE of the trained detector and of Sobel applied to the noisy
    image, both scored against the binarized Sobel edges of the clean image
    (the detector's supervision target). Returns {snr: (detector, sobel)}."""
    images = [np.asarray(im, dtype=np.float64) for im in clean_images]
    if not images:
        raise ValueError("edge_error_curve: empty dataset")
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, 0xC07E])))
    curve = {}
    for snr in snr_levels_db:
        det_errs, sob_errs = [], []
        for img in images:
            ref = binarized_sobel_target(img)
            noisy = img + rng.normal(0.0, _noise_sigma(img, snr), size=img.shape)
            e_det = detect(detector, noisy[None].astype(np.float32)).data
            det_errs.append(float(np.mean((e_det - ref) ** 2)))
            sob_errs.append(float(np.mean((sobel_edges(noisy).data - ref) ** 2)))
        curve[float(snr)] = (float(np.mean(det_errs)), float(np.mean(sob_errs)))
    return curve
