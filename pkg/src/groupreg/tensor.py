"""Dense tensors with reverse-mode automatic differentiation.

Define-by-run tape: every op records its inputs and a backward closure on
the output node. ``backward()`` walks the recorded graph once in reverse
topological order and releases it afterwards unless asked to retain it.
Layout is row-major N,C,H,W throughout.
"""

import numpy as np

from groupreg import backend
from groupreg.errors import ShapeError

DEFAULT_EPS = 1e-5


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_children", "_backward", "_released")

    def __init__(self, data, requires_grad=False, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if not np.issubdtype(arr.dtype, np.floating):
            arr = arr.astype(np.float64)
        self.data = arr
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._children = ()
        self._backward = None
        self._released = False

    # -- plumbing ---------------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def numpy(self):
        return self.data

    def item(self):
        return float(self.data)

    def detach(self):
        return Tensor(self.data)

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}, requires_grad={self.requires_grad})"

    def backward(self, retain_graph=False):
        if self.data.size != 1:
            raise ValueError("backward() requires a scalar output")
        if self._released:
            raise RuntimeError("backward() called twice on a released graph; "
                               "pass retain_graph=True to keep it")
        topo = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for child in node._children:
                stack.append((child, False))
        # interior nodes get a fresh gradient every pass; only leaves
        # accumulate across calls
        for node in topo:
            if node._children:
                node.grad = None
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is not None:
                node._backward()
        if not retain_graph:
            for node in topo:
                if node._children:
                    node._backward = None
                    node._children = ()
                    node._released = True
        return self

    # -- operator sugar ---------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scalar_mul(self, other)
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return scalar_mul(self, -1.0)


def _accumulate(t, g):
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = g.copy() if isinstance(g, np.ndarray) else np.asarray(g)
    else:
        t.grad = t.grad + g


def _result(data, children, backward):
    out = Tensor(data)
    if any(c.requires_grad for c in children):
        out.requires_grad = True
        out._children = tuple(children)
        out._backward = backward
    return out


def _check_same_shape(a, b, op):
    if a.data.shape != b.data.shape:
        bad = [i for i, (x, y) in enumerate(zip(a.data.shape, b.data.shape)) if x != y]
        raise ShapeError(f"{op}: shapes {a.data.shape} vs {b.data.shape} "
                         f"differ on axes {bad or 'rank'}")


# -- elementwise ops -------------------------------------------------------

def add(a, b):
    _check_same_shape(a, b, "add")
    out = _result(a.data + b.data, (a, b), None)

    def _bw():
        _accumulate(a, out.grad)
        _accumulate(b, out.grad)

    out._backward = _bw if out.requires_grad else None
    return out


def sub(a, b):
    _check_same_shape(a, b, "sub")
    out = _result(a.data - b.data, (a, b), None)

    def _bw():
        _accumulate(a, out.grad)
        _accumulate(b, -out.grad)

    out._backward = _bw if out.requires_grad else None
    return out


def mul(a, b):
    _check_same_shape(a, b, "mul")
    out = _result(a.data * b.data, (a, b), None)

    def _bw():
        _accumulate(a, out.grad * b.data)
        _accumulate(b, out.grad * a.data)

    out._backward = _bw if out.requires_grad else None
    return out


def div(a, b):
    _check_same_shape(a, b, "div")
    out = _result(a.data / b.data, (a, b), None)

    def _bw():
        _accumulate(a, out.grad / b.data)
        _accumulate(b, -out.grad * a.data / (b.data * b.data))

    out._backward = _bw if out.requires_grad else None
    return out


def scalar_mul(a, s):
    s = float(s)
    out = _result(a.data * s, (a,), None)

    def _bw():
        _accumulate(a, out.grad * s)

    out._backward = _bw if out.requires_grad else None
    return out


def add_scalar(a, s):
    s = float(s)
    out = _result(a.data + s, (a,), None)

    def _bw():
        _accumulate(a, out.grad)

    out._backward = _bw if out.requires_grad else None
    return out


def square(a):
    out = _result(a.data * a.data, (a,), None)

    def _bw():
        _accumulate(a, out.grad * (2.0 * a.data))

    out._backward = _bw if out.requires_grad else None
    return out


def sqrt_eps(a, eps=DEFAULT_EPS):
    y = np.sqrt(a.data + eps)
    out = _result(y, (a,), None)

    def _bw():
        _accumulate(a, out.grad * (0.5 / y))

    out._backward = _bw if out.requires_grad else None
    return out


def sigmoid(a):
    from scipy.special import expit
    y = expit(a.data)
    out = _result(y, (a,), None)

    def _bw():
        _accumulate(a, out.grad * y * (1.0 - y))

    out._backward = _bw if out.requires_grad else None
    return out


def leaky_relu(a, slope=0.2):
    if not 0.0 <= slope < 1.0:
        raise ValueError(f"leaky_relu slope must be in [0,1), got {slope}")
    pos = a.data > 0
    out = _result(np.where(pos, a.data, slope * a.data), (a,), None)

    def _bw():
        one = np.asarray(1.0, dtype=a.data.dtype)
        slo = np.asarray(slope, dtype=a.data.dtype)
        _accumulate(a, out.grad * np.where(pos, one, slo))

    out._backward = _bw if out.requires_grad else None
    return out


def sum_all(a):
    out = _result(np.asarray(a.data.sum()), (a,), None)

    def _bw():
        _accumulate(a, np.broadcast_to(out.grad, a.data.shape).copy())

    out._backward = _bw if out.requires_grad else None
    return out


def mean_all(a):
    n = a.data.size
    out = _result(np.asarray(a.data.mean()), (a,), None)

    def _bw():
        _accumulate(a, np.broadcast_to(out.grad / n, a.data.shape).copy())

    out._backward = _bw if out.requires_grad else None
    return out


def concat_channels(*tensors):
    if len(tensors) < 2:
        raise ValueError("concat_channels needs at least two tensors")
    for t in tensors:
        if t.data.ndim != 4:
            raise ShapeError(f"concat_channels: expected 4-d N,C,H,W, got {t.data.shape}")
    base = tensors[0].data.shape
    for t in tensors[1:]:
        s = t.data.shape
        bad = [i for i in (0, 2, 3) if s[i] != base[i]]
        if bad:
            raise ShapeError(f"concat_channels: shapes {base} vs {s} differ on axes {bad}")
    out = _result(np.concatenate([t.data for t in tensors], axis=1), tensors, None)
    splits = np.cumsum([t.data.shape[1] for t in tensors])[:-1]

    def _bw():
        for t, g in zip(tensors, np.split(out.grad, splits, axis=1)):
            _accumulate(t, g)

    out._backward = _bw if out.requires_grad else None
    return out


def narrow(a, axis, start, length):
    """Contiguous slice along one axis; backward scatters into zeros."""
    idx = [slice(None)] * a.data.ndim
    idx[axis] = slice(start, start + length)
    idx = tuple(idx)
    out = _result(a.data[idx].copy(), (a,), None)

    def _bw():
        g = np.zeros_like(a.data)
        g[idx] = out.grad
        _accumulate(a, g)

    out._backward = _bw if out.requires_grad else None
    return out


def reshape(a, shape):
    out = _result(a.data.reshape(shape), (a,), None)

    def _bw():
        _accumulate(a, out.grad.reshape(a.data.shape))

    out._backward = _bw if out.requires_grad else None
    return out


# -- structured ops --------------------------------------------------------

def conv2d(x, kernel, bias, stride=1, padding=0):
    """Cross-correlation convolution over N,C,H,W with odd square kernels."""
    if x.data.ndim != 4 or kernel.data.ndim != 4:
        raise ShapeError(f"conv2d: input {x.data.shape} and kernel {kernel.data.shape} "
                         "must both be 4-d")
    N, C, H, W = x.data.shape
    F, Ck, kh, kw = kernel.data.shape
    if Ck != C:
        raise ShapeError(f"conv2d: input channel axis 1 has {C}, kernel expects {Ck}")
    if kh % 2 == 0 or kw % 2 == 0:
        raise ValueError(f"conv2d: kernel extents must be odd, got {kh}x{kw}")
    if padding < 0:
        raise ValueError("conv2d: padding must be >= 0")
    if bias.data.shape != (F,):
        raise ShapeError(f"conv2d: bias shape {bias.data.shape} != ({F},)")
    if (H + 2 * padding - kh) % stride or (W + 2 * padding - kw) % stride:
        raise ShapeError(f"conv2d: spatial axes (H={H}, W={W}) with padding {padding}, "
                         f"kernel {kh}x{kw}, stride {stride} give non-integral output")
    y = backend.conv2d_forward(x.data, kernel.data, bias.data, stride, padding)
    out = _result(y, (x, kernel, bias), None)

    def _bw():
        gx, gk, gb = backend.conv2d_backward(out.grad, x.data, kernel.data, stride, padding)
        _accumulate(x, gx)
        _accumulate(kernel, gk)
        _accumulate(bias, gb)

    out._backward = _bw if out.requires_grad else None
    return out


def upsample2x(x):
    """Nearest-neighbor 2x upsampling on the two trailing axes."""
    if x.data.ndim != 4:
        raise ShapeError(f"upsample2x: expected 4-d N,C,H,W, got {x.data.shape}")
    N, C, H, W = x.data.shape
    out = _result(x.data.repeat(2, axis=2).repeat(2, axis=3), (x,), None)

    def _bw():
        g = out.grad.reshape(N, C, H, 2, W, 2).sum(axis=(3, 5))
        _accumulate(x, g)

    out._backward = _bw if out.requires_grad else None
    return out


def avgpool2x(x):
    """2x2 mean pooling with stride 2; spatial extents must be even."""
    if x.data.ndim != 4:
        raise ShapeError(f"avgpool2x: expected 4-d N,C,H,W, got {x.data.shape}")
    N, C, H, W = x.data.shape
    if H % 2 or W % 2:
        raise ShapeError(f"avgpool2x: spatial axes must be even, got {H}x{W}")
    y = x.data.reshape(N, C, H // 2, 2, W // 2, 2).mean(axis=(3, 5))
    out = _result(y, (x,), None)

    def _bw():
        g = (out.grad * 0.25).repeat(2, axis=2).repeat(2, axis=3)
        _accumulate(x, g)

    out._backward = _bw if out.requires_grad else None
    return out


# -- verification ----------------------------------------------------------

def gradient_check(f, x, h=1e-5):
    """Worst relative error between the autodiff gradient of a scalar
    function and central finite differences, component by component."""
    x.zero_grad()
    x.requires_grad = True
    f(x).backward()
    g_ad = x.grad.copy()
    g_fd = np.empty_like(x.data)
    flat = x.data.reshape(-1)
    fd_flat = g_fd.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = f(x.detach()).item()
        flat[i] = orig - h
        fm = f(x.detach()).item()
        flat[i] = orig
        fd_flat[i] = (fp - fm) / (2.0 * h)
    denom = np.maximum(np.abs(g_ad) + np.abs(g_fd), 1e-6)
    return float(np.max(np.abs(g_ad - g_fd) / denom))
