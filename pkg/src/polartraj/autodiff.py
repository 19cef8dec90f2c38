"""Dense float64 tensors with reverse-mode automatic differentiation.

Every operation records a backward closure on its output; calling
:meth:`Tensor.backward` on a scalar walks the recorded graph in reverse
topological order and accumulates gradients into ``.grad``. All data is
64-bit; every forward output is checked for NaN/Inf and a
:class:`NumericError` is raised immediately on overflow, so a diverging
computation fails loudly at the op that produced it.

Only the primitives needed by the model live here: elementwise math,
(batched) matmul, an N-d fused linear, layer normalization, masked softmax,
masked max-pooling, smooth-L1, and the polar-specific ``wrap_angle`` and
``atan2``. Gradients are hand-derived per primitive and validated against
central finite differences in the test suite.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import erf as _erf

TWO_PI = 2.0 * math.pi
_INV_SQRT2 = 1.0 / math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


class ShapeError(ValueError):
    """Operand shapes do not conform for the named primitive."""


class NumericError(ArithmeticError):
    """A forward operation produced NaN or Inf."""


def _check_finite(name, arr):
    if not np.isfinite(arr).all():
        raise NumericError(f"{name}: non-finite values in output (numeric overflow)")


class Tensor:
    """A float64 array plus the bookkeeping for reverse-mode differentiation."""

    __slots__ = ("data", "grad", "requires_grad", "_prev", "_backward")

    # make ndarray <op> Tensor defer to the reflected Tensor operators
    __array_ufunc__ = None

    def __init__(self, data, requires_grad=False):
        arr = np.asarray(data, dtype=np.float64)
        _check_finite("tensor", arr)
        self.data = arr
        self.grad = None
        self.requires_grad = requires_grad
        self._prev = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        """A constant view of this tensor, cut out of the graph."""
        return Tensor(self.data)

    def zero_grad(self):
        self.grad = None

    def backward(self, parameters=None):
        """Accumulate gradients of this scalar into every reachable tensor.

        ``parameters`` may be an iterable of tensors that must end up with a
        gradient; any of them not reachable from this loss receive zeros of
        their own shape.
        """
        if self.data.size != 1:
            raise ShapeError(f"backward: loss must be a scalar, got shape {self.data.shape}")
        topo = _toposort(self)
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is not None:
                node._backward(node.grad)
        if parameters is not None:
            for p in parameters:
                if p.grad is None:
                    p.grad = np.zeros_like(p.data)

    # --- operator sugar -------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, p):
        return power(self, p)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return getitem(self, key)

    def reshape(self, *shape):
        return reshape(self, *shape)

    def transpose(self, *axes):
        return transpose(self, axes if axes else None)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return tmean(self, axis, keepdims)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


def _toposort(root):
    topo = []
    visited = set()
    stack = [(root, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            topo.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node._prev:
            if id(p) not in visited:
                stack.append((p, False))
    return topo


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _result(name, data, inputs):
    _check_finite(name, data)
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out._backward = None
    if any(t.requires_grad for t in inputs):
        out.requires_grad = True
        out._prev = tuple(inputs)
    else:
        out.requires_grad = False
        out._prev = ()
    return out


def _acc(t, g):
    if t.grad is None:
        t.grad = g
    else:
        t.grad = t.grad + g


def _unbroadcast(g, shape):
    """Sum ``g`` down to ``shape`` (inverse of numpy broadcasting)."""
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


# --- elementwise arithmetic ----------------------------------------------


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    out = _result("add", a.data + b.data, (a, b))
    if out.requires_grad:
        def _bw(g):
            if a.requires_grad:
                _acc(a, _unbroadcast(g, a.data.shape))
            if b.requires_grad:
                _acc(b, _unbroadcast(g, b.data.shape))
        out._backward = _bw
    return out


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    out = _result("sub", a.data - b.data, (a, b))
    if out.requires_grad:
        def _bw(g):
            if a.requires_grad:
                _acc(a, _unbroadcast(g, a.data.shape))
            if b.requires_grad:
                _acc(b, _unbroadcast(-g, b.data.shape))
        out._backward = _bw
    return out


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    out = _result("mul", a.data * b.data, (a, b))
    if out.requires_grad:
        def _bw(g):
            if a.requires_grad:
                _acc(a, _unbroadcast(g * b.data, a.data.shape))
            if b.requires_grad:
                _acc(b, _unbroadcast(g * a.data, b.data.shape))
        out._backward = _bw
    return out


def div(a, b):
    a, b = as_tensor(a), as_tensor(b)
    with np.errstate(divide="ignore", invalid="ignore"):
        data = a.data / b.data
    out = _result("div", data, (a, b))
    if out.requires_grad:
        def _bw(g):
            if a.requires_grad:
                _acc(a, _unbroadcast(g / b.data, a.data.shape))
            if b.requires_grad:
                _acc(b, _unbroadcast(-g * a.data / (b.data * b.data), b.data.shape))
        out._backward = _bw
    return out


def neg(a):
    a = as_tensor(a)
    out = _result("neg", -a.data, (a,))
    if out.requires_grad:
        def _bw(g):
            _acc(a, -g)
        out._backward = _bw
    return out


def power(a, p):
    a = as_tensor(a)
    if isinstance(p, Tensor):
        raise ShapeError("power: only scalar exponents are supported")
    with np.errstate(divide="ignore", invalid="ignore"):
        data = a.data ** p
    out = _result("power", data, (a,))
    if out.requires_grad:
        def _bw(g):
            _acc(a, g * p * a.data ** (p - 1))
        out._backward = _bw
    return out


def texp(a):
    a = as_tensor(a)
    with np.errstate(over="ignore"):
        data = np.exp(a.data)
    out = _result("exp", data, (a,))
    if out.requires_grad:
        def _bw(g):
            _acc(a, g * out.data)
        out._backward = _bw
    return out


def tlog(a):
    a = as_tensor(a)
    with np.errstate(divide="ignore", invalid="ignore"):
        data = np.log(a.data)
    out = _result("log", data, (a,))
    if out.requires_grad:
        def _bw(g):
            _acc(a, g / a.data)
        out._backward = _bw
    return out


def tsqrt(a):
    a = as_tensor(a)
    with np.errstate(invalid="ignore"):
        data = np.sqrt(a.data)
    out = _result("sqrt", data, (a,))
    if out.requires_grad:
        def _bw(g):
            _acc(a, g * 0.5 / out.data)
        out._backward = _bw
    return out


def tsin(a):
    a = as_tensor(a)
    out = _result("sin", np.sin(a.data), (a,))
    if out.requires_grad:
        def _bw(g):
            _acc(a, g * np.cos(a.data))
        out._backward = _bw
    return out


def tcos(a):
    a = as_tensor(a)
    out = _result("cos", np.cos(a.data), (a,))
    if out.requires_grad:
        def _bw(g):
            _acc(a, -g * np.sin(a.data))
        out._backward = _bw
    return out


def ttanh(a):
    a = as_tensor(a)
    out = _result("tanh", np.tanh(a.data), (a,))
    if out.requires_grad:
        def _bw(g):
            _acc(a, g * (1.0 - out.data * out.data))
        out._backward = _bw
    return out


def sigmoid(a):
    a = as_tensor(a)
    # exact logistic, stable at both tails
    x = a.data
    with np.errstate(over="ignore"):
        data = np.where(x >= 0, 1.0 / (1.0 + np.exp(-x)), np.exp(x) / (1.0 + np.exp(x)))
    out = _result("sigmoid", data, (a,))
    if out.requires_grad:
        def _bw(g):
            _acc(a, g * out.data * (1.0 - out.data))
        out._backward = _bw
    return out


def relu(a):
    a = as_tensor(a)
    out = _result("relu", np.maximum(a.data, 0.0), (a,))
    if out.requires_grad:
        def _bw(g):
            _acc(a, g * (a.data > 0))
        out._backward = _bw
    return out


def softplus(a):
    a = as_tensor(a)
    out = _result("softplus", np.logaddexp(0.0, a.data), (a,))
    if out.requires_grad:
        def _bw(g):
            x = a.data
            with np.errstate(over="ignore"):
                s = np.where(x >= 0, 1.0 / (1.0 + np.exp(-x)), np.exp(x) / (1.0 + np.exp(x)))
            _acc(a, g * s)
        out._backward = _bw
    return out


def gelu(a):
    """Exact (erf-based) GELU: x * Phi(x)."""
    a = as_tensor(a)
    x = a.data
    phi_cdf = 0.5 * (1.0 + _erf(x * _INV_SQRT2))
    out = _result("gelu", x * phi_cdf, (a,))
    if out.requires_grad:
        def _bw(g):
            pdf = _INV_SQRT_2PI * np.exp(-0.5 * x * x)
            _acc(a, g * (phi_cdf + x * pdf))
        out._backward = _bw
    return out


def wrap_angle(a):
    """Wrap into (-pi, pi], boundary to +pi; gradient is identity a.e."""
    a = as_tensor(a)
    x = a.data
    w = x - TWO_PI * np.floor((x + math.pi) / TWO_PI)
    w = np.where(w <= -math.pi, w + TWO_PI, w)
    out = _result("wrap_angle", w, (a,))
    if out.requires_grad:
        def _bw(g):
            _acc(a, g)
        out._backward = _bw
    return out


def atan2(y, x):
    y, x = as_tensor(y), as_tensor(x)
    out = _result("atan2", np.arctan2(y.data, x.data), (y, x))
    if out.requires_grad:
        def _bw(g):
            d = y.data * y.data + x.data * x.data
            if y.requires_grad:
                _acc(y, _unbroadcast(g * x.data / d, y.data.shape))
            if x.requires_grad:
                _acc(x, _unbroadcast(-g * y.data / d, x.data.shape))
        out._backward = _bw
    return out


def smooth_l1(a, beta=1.0):
    """Elementwise smooth-L1: quadratic inside |x| < beta, linear outside."""
    a = as_tensor(a)
    x = a.data
    absx = np.abs(x)
    data = np.where(absx < beta, 0.5 * x * x / beta, absx - 0.5 * beta)
    out = _result("smooth_l1", data, (a,))
    if out.requires_grad:
        def _bw(g):
            _acc(a, g * np.where(absx < beta, x / beta, np.sign(x)))
        out._backward = _bw
    return out


# --- shape manipulation ----------------------------------------------------


def reshape(a, *shape):
    a = as_tensor(a)
    if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
        shape = tuple(shape[0])
    try:
        data = a.data.reshape(shape)
    except ValueError as e:
        raise ShapeError(f"reshape: cannot view {a.data.shape} as {shape}") from e
    out = _result("reshape", data, (a,))
    if out.requires_grad:
        def _bw(g):
            _acc(a, g.reshape(a.data.shape))
        out._backward = _bw
    return out


def transpose(a, axes=None):
    a = as_tensor(a)
    out = _result("transpose", np.transpose(a.data, axes), (a,))
    if out.requires_grad:
        inv = np.argsort(axes) if axes is not None else None
        def _bw(g):
            _acc(a, np.transpose(g, inv))
        out._backward = _bw
    return out


def broadcast_to(a, shape):
    a = as_tensor(a)
    try:
        data = np.broadcast_to(a.data, shape)
    except ValueError as e:
        raise ShapeError(f"broadcast_to: cannot broadcast {a.data.shape} to {shape}") from e
    out = _result("broadcast_to", data, (a,))
    if out.requires_grad:
        def _bw(g):
            _acc(a, _unbroadcast(g, a.data.shape))
        out._backward = _bw
    return out


def concat(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    base = list(tensors[0].data.shape)
    for t in tensors[1:]:
        other = list(t.data.shape)
        if len(other) != len(base) or any(
            i != (axis % len(base)) and other[i] != base[i] for i in range(len(base))
        ):
            raise ShapeError(
                f"concat: shapes {tensors[0].data.shape} and {t.data.shape} "
                f"differ off axis {axis}"
            )
    out = _result("concat", np.concatenate([t.data for t in tensors], axis=axis), tensors)
    if out.requires_grad:
        sizes = [t.data.shape[axis] for t in tensors]
        def _bw(g):
            start = 0
            for t, n in zip(tensors, sizes):
                if t.requires_grad:
                    sl = [slice(None)] * g.ndim
                    sl[axis] = slice(start, start + n)
                    _acc(t, g[tuple(sl)])
                start += n
        out._backward = _bw
    return out


def stack(tensors, axis=0):
    expanded = [reshape(t, t.data.shape[:axis] + (1,) + t.data.shape[axis:]) for t in tensors]
    return concat(expanded, axis=axis)


def getitem(a, key):
    """Basic (slice/integer) indexing only; fancy indexing is not recorded."""
    a = as_tensor(a)
    out = _result("getitem", a.data[key], (a,))
    if out.requires_grad:
        def _bw(g):
            g0 = np.zeros_like(a.data)
            g0[key] += g
            _acc(a, g0)
        out._backward = _bw
    return out


# --- reductions -------------------------------------------------------------


def _expand_reduced(g, shape, axis, keepdims):
    if axis is None:
        return np.broadcast_to(g, shape)
    if not keepdims:
        axes = axis if isinstance(axis, tuple) else (axis,)
        for ax in sorted(a % len(shape) for a in axes):
            g = np.expand_dims(g, ax)
    return np.broadcast_to(g, shape)


def tsum(a, axis=None, keepdims=False):
    a = as_tensor(a)
    out = _result("sum", np.sum(a.data, axis=axis, keepdims=keepdims), (a,))
    if out.requires_grad:
        def _bw(g):
            _acc(a, _expand_reduced(g, a.data.shape, axis, keepdims).copy())
        out._backward = _bw
    return out


def tmean(a, axis=None, keepdims=False):
    a = as_tensor(a)
    out = _result("mean", np.mean(a.data, axis=axis, keepdims=keepdims), (a,))
    if out.requires_grad:
        count = a.data.size / out.data.size
        def _bw(g):
            _acc(a, _expand_reduced(g, a.data.shape, axis, keepdims) / count)
        out._backward = _bw
    return out


def masked_max(a, mask, axis):
    """Max over ``axis`` counting only entries where ``mask`` is True.

    Rows with no valid entry produce 0.0 and receive no gradient; ties route
    the gradient to the first valid argmax (deterministic subgradient).
    """
    a = as_tensor(a)
    mask = np.broadcast_to(np.asarray(mask, dtype=bool), a.data.shape)
    masked = np.where(mask, a.data, -np.inf)
    raw = masked.max(axis=axis)
    any_valid = mask.any(axis=axis)
    out = _result("masked_max", np.where(any_valid, raw, 0.0), (a,))
    if out.requires_grad:
        idx = np.expand_dims(masked.argmax(axis=axis), axis)
        def _bw(g):
            g0 = np.zeros_like(a.data)
            np.put_along_axis(
                g0, idx, np.expand_dims(np.where(any_valid, g, 0.0), axis), axis
            )
            _acc(a, g0)
        out._backward = _bw
    return out


def masked_softmax(a, mask, axis):
    """Softmax over ``axis`` restricted to entries where ``mask`` is True.

    Masked entries get weight exactly 0; rows with no valid entry produce an
    all-zero row rather than NaN (callers treat that as "attend to nothing").
    A ``mask`` of None is a plain softmax.
    """
    a = as_tensor(a)
    x = a.data
    if mask is None:
        shifted = x - x.max(axis=axis, keepdims=True)
        e = np.exp(shifted)
        y = e / e.sum(axis=axis, keepdims=True)
    else:
        mask = np.broadcast_to(np.asarray(mask, dtype=bool), x.shape)
        xm = np.where(mask, x, -np.inf)
        rowmax = xm.max(axis=axis, keepdims=True)
        safe_max = np.where(np.isfinite(rowmax), rowmax, 0.0)
        with np.errstate(invalid="ignore"):
            e = np.exp(xm - safe_max)
        s = e.sum(axis=axis, keepdims=True)
        y = e / np.where(s > 0, s, 1.0)
    out = _result("masked_softmax", y, (a,))
    if out.requires_grad:
        def _bw(g):
            inner = (g * y).sum(axis=axis, keepdims=True)
            _acc(a, y * (g - inner))
        out._backward = _bw
    return out


def softmax(a, axis=-1):
    return masked_softmax(a, None, axis)


# --- linear algebra ---------------------------------------------------------


def matmul(a, b):
    """Matrix product with numpy stacking semantics (both operands >= 2-d)."""
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim < 2 or b.data.ndim < 2:
        raise ShapeError(
            f"matmul: operands must be at least 2-d, got {a.data.shape} and {b.data.shape}"
        )
    if a.data.shape[-1] != b.data.shape[-2]:
        raise ShapeError(
            f"matmul: inner dimensions differ: {a.data.shape} vs {b.data.shape}"
        )
    out = _result("matmul", np.matmul(a.data, b.data), (a, b))
    if out.requires_grad:
        def _bw(g):
            if a.requires_grad:
                ga = np.matmul(g, b.data.swapaxes(-1, -2))
                _acc(a, _unbroadcast(ga, a.data.shape))
            if b.requires_grad:
                gb = np.matmul(a.data.swapaxes(-1, -2), g)
                _acc(b, _unbroadcast(gb, b.data.shape))
        out._backward = _bw
    return out


def linear(x, w, b=None):
    """Fused affine map on the trailing axis: ``y[..., j] = x[..., i] w[i, j] + b[j]``."""
    x, w = as_tensor(x), as_tensor(w)
    if x.data.shape[-1] != w.data.shape[0]:
        raise ShapeError(
            f"linear: input features {x.data.shape} do not match weight {w.data.shape}"
        )
    data = x.data @ w.data
    if b is not None:
        b = as_tensor(b)
        data = data + b.data
    inputs = (x, w) if b is None else (x, w, b)
    out = _result("linear", data, inputs)
    if out.requires_grad:
        def _bw(g):
            if x.requires_grad:
                _acc(x, g @ w.data.T)
            if w.requires_grad:
                g2 = g.reshape(-1, w.data.shape[1])
                x2 = x.data.reshape(-1, w.data.shape[0])
                _acc(w, x2.T @ g2)
            if b is not None and b.requires_grad:
                _acc(b, g.reshape(-1, w.data.shape[1]).sum(axis=0))
        out._backward = _bw
    return out


def layer_norm(x, gain, bias, eps=1e-5):
    """Normalize the trailing axis to zero mean / unit variance, then affine."""
    x, gain, bias = as_tensor(x), as_tensor(gain), as_tensor(bias)
    n = x.data.shape[-1]
    if gain.data.shape != (n,) or bias.data.shape != (n,):
        raise ShapeError(
            f"layer_norm: gain/bias {gain.data.shape}/{bias.data.shape} "
            f"do not match trailing dim {n}"
        )
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = _result("layer_norm", xhat * gain.data + bias.data, (x, gain, bias))
    if out.requires_grad:
        def _bw(g):
            if x.requires_grad:
                gh = g * gain.data
                m1 = gh.mean(axis=-1, keepdims=True)
                m2 = (gh * xhat).mean(axis=-1, keepdims=True)
                _acc(x, inv * (gh - m1 - xhat * m2))
            if gain.requires_grad:
                _acc(gain, (g * xhat).reshape(-1, n).sum(axis=0))
            if bias.requires_grad:
                _acc(bias, g.reshape(-1, n).sum(axis=0))
        out._backward = _bw
    return out


def dropout(x, p, rng, training):
    """Inverted dropout; identity when not training or p == 0."""
    x = as_tensor(x)
    if not training or p <= 0.0:
        return x
    if rng is None:
        raise ValueError("dropout: rng required in training mode")
    keep = (rng.random(x.data.shape) >= p) / (1.0 - p)
    out = _result("dropout", x.data * keep, (x,))
    if out.requires_grad:
        def _bw(g):
            _acc(x, g * keep)
        out._backward = _bw
    return out
