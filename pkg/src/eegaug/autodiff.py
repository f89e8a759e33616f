"""Reverse-mode automatic differentiation over float64 numpy values.

A Tensor pairs an ndarray with the tape state needed to pull a scalar loss
back to parameters: an op tag, references to parent tensors and a closure
mapping the output gradient to parent gradients.  Op functions below build
the graph eagerly; values are always float64 and ops never mutate inputs, so
the graph is acyclic by construction.

Convolutions are expressed as a handful of shifted matmuls / einsums per
kernel tap rather than elementwise loops; at desk scale that keeps training
inside the acceptance time budgets while every derivative rule stays
hand-written and finite-difference checked.
"""

from __future__ import annotations

import builtins
from contextlib import contextmanager

import numpy as np

_grad_enabled = True


@contextmanager
def no_grad():
    """Disable tape recording inside the block (sampling, pure inference)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


class Tensor:
    """float64 array value plus tape state (op tag, parents, grad)."""

    __slots__ = ("data", "grad", "op", "parents", "requires_grad", "_vjp")

    def __init__(self, data, requires_grad=False, op="leaf", parents=(), vjp=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.op = op
        self.parents = tuple(parents)
        self.requires_grad = bool(requires_grad)
        self._vjp = vjp

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        backward(self)

    # operator sugar; scalars and arrays are wrapped as constants
    def __add__(self, other):
        return add(self, as_tensor(other))

    def __radd__(self, other):
        return add(as_tensor(other), self)

    def __sub__(self, other):
        return sub(self, as_tensor(other))

    def __rsub__(self, other):
        return sub(as_tensor(other), self)

    def __mul__(self, other):
        return mul(self, as_tensor(other))

    def __rmul__(self, other):
        return mul(as_tensor(other), self)

    def __truediv__(self, other):
        return mul(self, as_tensor(1.0 / float(other)))

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, as_tensor(other))

    def __repr__(self):
        return f"Tensor(shape={self.shape}, op={self.op!r}, requires_grad={self.requires_grad})"


def as_tensor(x) -> Tensor:
    """Wrap arrays/scalars as constant tensors; pass tensors through."""
    return x if isinstance(x, Tensor) else Tensor(x)


def parameter(data) -> Tensor:
    """A leaf tensor that accumulates gradients."""
    return Tensor(np.array(data, dtype=np.float64), requires_grad=True, op="param")


def _node(data, op, parents, vjp) -> Tensor:
    """Record a result on the tape iff grads are enabled and needed."""
    if _grad_enabled and builtins.any(p.requires_grad for p in parents):
        return Tensor(data, requires_grad=True, op=op, parents=parents, vjp=vjp)
    return Tensor(data, op=op)


def backward(root: Tensor) -> None:
    """Accumulate d(root)/d(node) into .grad for every reachable node.

    Repeated calls without zero_grad accumulate.  The per-call flow uses a
    scratch map so stale .grad values never feed the new pass.
    """
    if root.size != 1:
        raise ValueError(f"backward requires a scalar root, got shape {root.shape}")
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))

    flow: dict[int, np.ndarray] = {id(root): np.ones_like(root.data)}
    for node in reversed(order):
        g = flow.pop(id(node), None)
        if g is None:
            continue
        if node.requires_grad:
            node.grad = g if node.grad is None else node.grad + g
        if node._vjp is None:
            continue
        for parent, pg in zip(node.parents, node._vjp(g)):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            flow[key] = pg if key not in flow else flow[key] + pg


def zero_grad(params) -> None:
    for p in params.values() if isinstance(params, dict) else params:
        p.zero_grad()


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to `shape`."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


# ---------------------------------------------------------------------------
# elementwise / linear ops


def add(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data + b.data

    def vjp(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)

    return _node(out, "add", (a, b), vjp)


def sub(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data - b.data

    def vjp(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(-g, b.data.shape)

    return _node(out, "sub", (a, b), vjp)


def mul(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data * b.data

    def vjp(g):
        return (
            _unbroadcast(g * b.data, a.data.shape),
            _unbroadcast(g * a.data, b.data.shape),
        )

    return _node(out, "mul", (a, b), vjp)


def neg(a: Tensor) -> Tensor:
    a = as_tensor(a)
    return _node(-a.data, "neg", (a,), lambda g: (-g,))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2:
        raise ValueError(f"matmul expects 2-D operands, got {a.shape} @ {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul inner dimensions differ: {a.shape} @ {b.shape}")
    out = a.data @ b.data

    def vjp(g):
        return g @ b.data.T, a.data.T @ g

    return _node(out, "matmul", (a, b), vjp)


def transpose(a: Tensor) -> Tensor:
    a = as_tensor(a)
    if a.ndim != 2:
        raise ValueError(f"transpose expects a 2-D tensor, got shape {a.shape}")
    return _node(a.data.T.copy(), "transpose", (a,), lambda g: (g.T,))


def reshape(a: Tensor, shape) -> Tensor:
    a = as_tensor(a)
    old = a.data.shape
    return _node(a.data.reshape(shape), "reshape", (a,), lambda g: (g.reshape(old),))


def concat(tensors, axis: int = 0) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    out = np.concatenate([t.data for t in ts], axis=axis)
    sizes = [t.data.shape[axis] for t in ts]
    splits = np.cumsum(sizes)[:-1]

    def vjp(g):
        return tuple(np.split(g, splits, axis=axis))

    return _node(out, "concat", tuple(ts), vjp)


def rows(a: Tensor, start: int, stop: int) -> Tensor:
    """Slice along the leading axis with gradient scatter on the way back."""
    a = as_tensor(a)
    out = a.data[start:stop].copy()

    def vjp(g):
        full = np.zeros_like(a.data)
        full[start:stop] = g
        return (full,)

    return _node(out, "rows", (a,), vjp)


def tanh(a: Tensor) -> Tensor:
    a = as_tensor(a)
    out = np.tanh(a.data)
    return _node(out, "tanh", (a,), lambda g: (g * (1.0 - out * out),))


def sigmoid(a: Tensor) -> Tensor:
    a = as_tensor(a)
    out = _sigmoid(a.data)
    return _node(out, "sigmoid", (a,), lambda g: (g * out * (1.0 - out),))


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # split by sign so exp never overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def softplus(a: Tensor) -> Tensor:
    a = as_tensor(a)
    out = np.maximum(a.data, 0.0) + np.log1p(np.exp(-np.abs(a.data)))
    return _node(out, "softplus", (a,), lambda g: (g * _sigmoid(a.data),))


def relu(a: Tensor) -> Tensor:
    a = as_tensor(a)
    mask = a.data > 0
    return _node(a.data * mask, "relu", (a,), lambda g: (g * mask,))


def leaky_relu(a: Tensor, alpha: float = 0.4) -> Tensor:
    a = as_tensor(a)
    slope = np.where(a.data > 0, 1.0, alpha)
    return _node(a.data * slope, "leaky_relu", (a,), lambda g: (g * slope,))


def log(a: Tensor) -> Tensor:
    a = as_tensor(a)
    return _node(np.log(a.data), "log", (a,), lambda g: (g / a.data,))


def exp(a: Tensor) -> Tensor:
    a = as_tensor(a)
    out = np.exp(a.data)
    return _node(out, "exp", (a,), lambda g: (g * out,))


def softmax(a: Tensor) -> Tensor:
    """Numerically stable softmax over the last axis."""
    a = as_tensor(a)
    shifted = a.data - a.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=-1, keepdims=True)

    def vjp(g):
        dot = (g * out).sum(axis=-1, keepdims=True)
        return ((g - dot) * out,)

    return _node(out, "softmax", (a,), vjp)


def sum(a: Tensor) -> Tensor:  # noqa: A001 - mirrors numpy naming
    a = as_tensor(a)
    out = a.data.sum()

    def vjp(g):
        return (np.broadcast_to(g, a.data.shape).copy(),)

    return _node(out, "sum", (a,), vjp)


def mean(a: Tensor) -> Tensor:
    a = as_tensor(a)
    n = a.data.size
    out = a.data.mean()

    def vjp(g):
        return (np.broadcast_to(g / n, a.data.shape).copy(),)

    return _node(out, "mean", (a,), vjp)


def global_average_pool(a: Tensor) -> Tensor:
    """(C, L) -> (C,), the per-channel mean over time."""
    a = as_tensor(a)
    if a.ndim != 2:
        raise ValueError(f"global_average_pool expects (C, L), got shape {a.shape}")
    n = a.data.shape[-1]
    out = a.data.mean(axis=-1)

    def vjp(g):
        return (np.repeat(g[:, None] / n, n, axis=1),)

    return _node(out, "global_average_pool", (a,), vjp)


# ---------------------------------------------------------------------------
# convolutions


def conv1d(x: Tensor, w: Tensor, stride: int = 1, dilation: int = 1, pad: int = 0) -> Tensor:
    """Cross-correlate (C_in, L) with (C_out, C_in, K); symmetric zero pad.

    out[o, l] = sum_{i,k} w[o, i, k] * x[i, l*stride + k*dilation - pad]
    """
    x, w = as_tensor(x), as_tensor(w)
    if x.ndim != 2 or w.ndim != 3:
        raise ValueError(f"conv1d expects (C_in, L) and (C_out, C_in, K), got {x.shape}, {w.shape}")
    if w.shape[1] != x.shape[0]:
        raise ValueError(f"kernel expects {w.shape[1]} input channels, input has {x.shape[0]}")
    if stride < 1 or dilation < 1 or pad < 0:
        raise ValueError("stride and dilation must be >= 1, pad >= 0")
    c_out, c_in, k = w.shape
    length = x.shape[1]
    span = (k - 1) * dilation + 1
    if length + 2 * pad < span:
        raise ValueError(f"kernel span {span} exceeds padded length {length + 2 * pad}")
    l_out = (length + 2 * pad - span) // stride + 1
    xp = np.pad(x.data, ((0, 0), (pad, pad)))
    hi = (l_out - 1) * stride + 1
    taps = [xp[:, k_i * dilation : k_i * dilation + hi : stride] for k_i in range(k)]
    out = np.zeros((c_out, l_out))
    for k_i in range(k):
        out += w.data[:, :, k_i] @ taps[k_i]

    def vjp(g):
        gw = np.empty_like(w.data)
        gxp = np.zeros_like(xp)
        for k_i in range(k):
            gw[:, :, k_i] = g @ taps[k_i].T
            gxp[:, k_i * dilation : k_i * dilation + hi : stride] += w.data[:, :, k_i].T @ g
        gx = gxp[:, pad : pad + length] if pad else gxp
        return gx, gw

    return _node(out, "conv1d", (x, w), vjp)


def dilated_conv1d(x: Tensor, w: Tensor, dilation: int) -> Tensor:
    """Non-causal dilated convolution with same-length symmetric padding.

    The layer sees past and future samples alike; K must be odd so the pad
    (K-1)*dilation/2 is integral and output length equals input length.
    """
    w = as_tensor(w)
    if w.ndim != 3 or w.shape[2] % 2 == 0:
        raise ValueError(f"dilated_conv1d needs an odd kernel size, got shape {w.shape}")
    if dilation < 1:
        raise ValueError(f"dilation must be >= 1, got {dilation}")
    pad = (w.shape[2] - 1) * dilation // 2
    return conv1d(x, w, stride=1, dilation=dilation, pad=pad)


def _tconv2d_geometry(kf: int, kt: int, stride_f: int, stride_t: int) -> tuple[int, int]:
    # pad so the output extent is exactly input_extent * stride per axis;
    # kernels narrower than the stride scatter from offset 0 (pad clamps at 0)
    return max(0, (kf - stride_f) // 2), max(0, (kt - stride_t) // 2)


def transposed_conv2d(x: Tensor, w: Tensor, stride_f: int, stride_t: int) -> Tensor:
    """Adjoint of a strided 2-D convolution (see conv2d_strided).

    x: (C_in, F, T), w: (C_in, C_out, KF, KT) -> (C_out, F*stride_f, T*stride_t).
    out[o, fi*sf + kf - pad_f, ti*st + kt - pad_t] += w[i, o, kf, kt] * x[i, fi, ti]
    """
    x, w = as_tensor(x), as_tensor(w)
    if x.ndim != 3 or w.ndim != 4:
        raise ValueError(f"transposed_conv2d expects (C,F,T) and (Ci,Co,KF,KT), got {x.shape}, {w.shape}")
    if w.shape[0] != x.shape[0]:
        raise ValueError(f"kernel expects {w.shape[0]} input channels, input has {x.shape[0]}")
    if stride_f < 1 or stride_t < 1:
        raise ValueError(f"strides must be positive, got ({stride_f}, {stride_t})")
    c_in, f_in, t_in = x.shape
    _, c_out, kf, kt = w.shape
    pad_f, pad_t = _tconv2d_geometry(kf, kt, stride_f, stride_t)
    f_out, t_out = f_in * stride_f, t_in * stride_t

    def tap_range(offset: int, stride: int, n_in: int, n_out: int) -> tuple[int, int]:
        # input indices i whose output position offset + stride*i lands in [0, n_out)
        lo = max(0, (-offset + stride - 1) // stride)
        hi = min(n_in, (n_out - offset + stride - 1) // stride)
        return lo, hi

    out = np.zeros((c_out, f_out, t_out))
    for k_f in range(kf):
        off_f = k_f - pad_f
        f0, f1 = tap_range(off_f, stride_f, f_in, f_out)
        if f0 >= f1:
            continue
        for k_t in range(kt):
            off_t = k_t - pad_t
            t0, t1 = tap_range(off_t, stride_t, t_in, t_out)
            if t0 >= t1:
                continue
            contrib = np.einsum("io,ift->oft", w.data[:, :, k_f, k_t], x.data[:, f0:f1, t0:t1])
            out[
                :,
                off_f + stride_f * f0 : off_f + stride_f * (f1 - 1) + 1 : stride_f,
                off_t + stride_t * t0 : off_t + stride_t * (t1 - 1) + 1 : stride_t,
            ] += contrib

    def vjp(g):
        gx = np.zeros_like(x.data)
        gw = np.zeros_like(w.data)
        for k_f in range(kf):
            off_f = k_f - pad_f
            f0, f1 = tap_range(off_f, stride_f, f_in, f_out)
            if f0 >= f1:
                continue
            for k_t in range(kt):
                off_t = k_t - pad_t
                t0, t1 = tap_range(off_t, stride_t, t_in, t_out)
                if t0 >= t1:
                    continue
                g_sub = g[
                    :,
                    off_f + stride_f * f0 : off_f + stride_f * (f1 - 1) + 1 : stride_f,
                    off_t + stride_t * t0 : off_t + stride_t * (t1 - 1) + 1 : stride_t,
                ]
                gx[:, f0:f1, t0:t1] += np.einsum("io,oft->ift", w.data[:, :, k_f, k_t], g_sub)
                gw[:, :, k_f, k_t] += np.einsum("ift,oft->io", x.data[:, f0:f1, t0:t1], g_sub)
        return gx, gw

    return _node(out, "transposed_conv2d", (x, w), vjp)


def conv2d_strided(y: np.ndarray, w: np.ndarray, stride_f: int, stride_t: int) -> np.ndarray:
    """The strided convolution transposed_conv2d is adjoint to (plain arrays).

    y: (C_out, F*sf, T*st), w: (C_in, C_out, KF, KT) -> (C_in, F, T);
    z[i, fi, ti] = sum_{o,kf,kt} w[i, o, kf, kt] * y[o, fi*sf + kf - pad_f, ti*st + kt - pad_t]
    with out-of-range reads as zero.  Used for adjoint checks and as the
    forward partner in tests; not differentiable.
    """
    c_in, c_out, kf, kt = w.shape
    pad_f, pad_t = _tconv2d_geometry(kf, kt, stride_f, stride_t)
    f_out_total, t_out_total = y.shape[1], y.shape[2]
    if f_out_total % stride_f or t_out_total % stride_t:
        raise ValueError("conv2d_strided input extents must be multiples of the strides")
    f_in, t_in = f_out_total // stride_f, t_out_total // stride_t
    z = np.zeros((c_in, f_in, t_in))
    for k_f in range(kf):
        for k_t in range(kt):
            for fi in range(f_in):
                fo = fi * stride_f + k_f - pad_f
                if not (0 <= fo < f_out_total):
                    continue
                for ti in range(t_in):
                    to = ti * stride_t + k_t - pad_t
                    if not (0 <= to < t_out_total):
                        continue
                    z[:, fi, ti] += w[:, :, k_f, k_t] @ y[:, fo, to]
    return z


# ---------------------------------------------------------------------------
# optimizer


class Adam:
    """Adaptive-moment gradient descent with bias correction."""

    def __init__(self, params: dict[str, Tensor], lr: float = 2e-4,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = dict(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(p.data) for k, p in self.params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in self.params.items()}

    def step(self) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for key, p in self.params.items():
            if p.grad is None:
                continue
            g = p.grad
            self.m[key] = b1 * self.m[key] + (1 - b1) * g
            self.v[key] = b2 * self.v[key] + (1 - b2) * g * g
            m_hat = self.m[key] / (1 - b1 ** self.t)
            v_hat = self.v[key] / (1 - b2 ** self.t)
            p.data -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)

    def zero_grad(self) -> None:
        zero_grad(self.params)
