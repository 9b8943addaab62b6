"""Dense float64 tensors with reverse-mode gradients for a fixed op set.

Not a general autograd: only the operations the recommender model needs are
implemented, each with an exact hand-written backward. Gradients accumulate
across uses of a tensor within one forward pass; parameter gradients are
cleared only by ``adam_step`` (or explicitly via ``ParamStore.zero_grads``).
"""

from __future__ import annotations

import math
from contextlib import contextmanager

import numpy as np

_GRAD_ENABLED = True


@contextmanager
def no_grad():
    """Disable graph construction (evaluation / finite-difference probes)."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


class Tensor:
    """A float64 ndarray node in the computation graph."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = bool(requires_grad) and _GRAD_ENABLED
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def item(self):
        return float(self.data)

    def detach(self):
        return Tensor(self.data.copy())

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # -- graph ----------------------------------------------------------

    def backward(self):
        """Reverse-mode pass from a scalar output."""
        if self.data.size != 1:
            raise ValueError(f"backward() needs a scalar, got shape {self.data.shape}")
        topo = _toposort(self)
        _accum(self, np.ones_like(self.data))
        for node in topo:
            if node._backward is not None:
                node._backward()
            # free graph edges as we go; leaf grads survive
            node._backward = None
            node._parents = ()

    # -- operators --------------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return add(self, mul(_lift(other), -1.0))

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


def _lift(x):
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float64))


def _toposort(root):
    order, visited, stack = [], set(), [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in visited:
                stack.append((p, False))
    order.reverse()
    return order


def _accum(t, g):
    if t.grad is None:
        t.grad = np.array(g)  # copy: g may view another grad buffer
    else:
        t.grad += g


def _unbroadcast(g, shape):
    """Sum gradient g down to `shape` after numpy broadcasting."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def _make(data, parents, backward):
    out = Tensor(data)
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward(out)
    return out


# -- elementwise -----------------------------------------------------------


def add(a, b):
    a, b = _lift(a), _lift(b)

    def bw(out):
        def run():
            if a.requires_grad:
                _accum(a, _unbroadcast(out.grad, a.shape))
            if b.requires_grad:
                _accum(b, _unbroadcast(out.grad, b.shape))
        return run

    return _make(a.data + b.data, (a, b), bw)


def mul(a, b):
    a, b = _lift(a), _lift(b)

    def bw(out):
        def run():
            if a.requires_grad:
                _accum(a, _unbroadcast(out.grad * b.data, a.shape))
            if b.requires_grad:
                _accum(b, _unbroadcast(out.grad * a.data, b.shape))
        return run

    return _make(a.data * b.data, (a, b), bw)


def relu(x):
    def bw(out):
        def run():
            if x.requires_grad:
                _accum(x, out.grad * (x.data > 0.0))
        return run

    return _make(np.maximum(x.data, 0.0), (x,), bw)


_SIG_EPS = 2.0 ** -53  # keeps outputs strictly inside (0, 1) at f64


def sigmoid(x):
    """Elementwise 1/(1+e^-x), overflow-safe on both tails."""
    z = np.exp(-np.abs(x.data))
    val = np.where(x.data >= 0.0, 1.0 / (1.0 + z), z / (1.0 + z))
    val = np.clip(val, _SIG_EPS, 1.0 - _SIG_EPS)

    def bw(out):
        def run():
            if x.requires_grad:
                _accum(x, out.grad * out.data * (1.0 - out.data))
        return run

    return _make(val, (x,), bw)


def exp(x):
    val = np.exp(x.data)

    def bw(out):
        def run():
            if x.requires_grad:
                _accum(x, out.grad * out.data)
        return run

    return _make(val, (x,), bw)


def log(x):
    def bw(out):
        def run():
            if x.requires_grad:
                _accum(x, out.grad / x.data)
        return run

    return _make(np.log(x.data), (x,), bw)


def clip(x, lo, hi):
    """Clamp values; gradient passes only strictly inside (lo, hi)."""
    inside = (x.data > lo) & (x.data < hi)

    def bw(out):
        def run():
            if x.requires_grad:
                _accum(x, out.grad * inside)
        return run

    return _make(np.clip(x.data, lo, hi), (x,), bw)


# -- linear algebra ----------------------------------------------------------


def matmul(a, b):
    a, b = _lift(a), _lift(b)
    if a.data.ndim < 2 or b.data.ndim < 2:
        raise ValueError(f"matmul needs rank >= 2, got {a.shape} @ {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ValueError(f"matmul shape mismatch: {a.shape} @ {b.shape}")

    def bw(out):
        def run():
            if a.requires_grad:
                da = out.grad @ np.swapaxes(b.data, -1, -2)
                _accum(a, _unbroadcast(da, a.shape))
            if b.requires_grad:
                db = np.swapaxes(a.data, -1, -2) @ out.grad
                _accum(b, _unbroadcast(db, b.shape))
        return run

    return _make(a.data @ b.data, (a, b), bw)


def transpose(x, axes):
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))

    def bw(out):
        def run():
            if x.requires_grad:
                _accum(x, np.transpose(out.grad, inv))
        return run

    return _make(np.transpose(x.data, axes), (x,), bw)


def reshape(x, shape):
    shape = tuple(shape)

    def bw(out):
        def run():
            if x.requires_grad:
                _accum(x, out.grad.reshape(x.shape))
        return run

    return _make(x.data.reshape(shape), (x,), bw)


def concat(tensors, axis=-1):
    tensors = [_lift(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def bw(out):
        def run():
            for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
                if t.requires_grad:
                    idx = [slice(None)] * out.grad.ndim
                    idx[axis] = slice(lo, hi)
                    _accum(t, out.grad[tuple(idx)])
        return run

    return _make(np.concatenate([t.data for t in tensors], axis=axis), tensors, bw)


def narrow(x, axis, start, length):
    """Contiguous slice along one axis."""
    idx = [slice(None)] * x.data.ndim
    idx[axis] = slice(start, start + length)
    idx = tuple(idx)

    def bw(out):
        def run():
            if x.requires_grad:
                g = np.zeros_like(x.data)
                g[idx] = out.grad
                _accum(x, g)
        return run

    return _make(x.data[idx].copy(), (x,), bw)


def index_rows(table, indices):
    """Gather rows of a 2-D table; backward scatter-adds into the table."""
    indices = np.asarray(indices)

    def bw(out):
        def run():
            if table.requires_grad:
                g = np.zeros_like(table.data)
                np.add.at(g, indices.reshape(-1), out.grad.reshape(-1, table.shape[-1]))
                _accum(table, g)
        return run

    return _make(table.data[indices], (table,), bw)


# -- reductions / row ops ------------------------------------------------


def tsum(x, axis=None, keepdims=False):
    def bw(out):
        def run():
            if x.requires_grad:
                g = out.grad
                if axis is not None and not keepdims:
                    g = np.expand_dims(g, axis)
                _accum(x, np.broadcast_to(g, x.shape))
        return run

    return _make(x.data.sum(axis=axis, keepdims=keepdims), (x,), bw)


def tmean(x, axis=None, keepdims=False):
    n = x.data.size if axis is None else x.shape[axis]
    return mul(tsum(x, axis=axis, keepdims=keepdims), 1.0 / n)


def mean_pool(x):
    """Mean over the row axis: [..., L, D] -> [..., D]. L must be >= 1."""
    if x.data.ndim < 2:
        raise ValueError(f"mean_pool needs rank >= 2, got shape {x.shape}")
    if x.shape[-2] == 0:
        raise ValueError("mean_pool on empty sequence (L = 0)")
    return tmean(x, axis=-2)


def masked_mean_rows(x, mask):
    """Mean over unmasked rows. x [..., L, D], mask [..., L] in {0,1}.

    Rows where the mask count is zero pool to zeros.
    """
    mask = np.asarray(mask, dtype=np.float64)
    count = mask.sum(axis=-1)
    inv = np.where(count > 0.0, 1.0 / np.maximum(count, 1.0), 0.0)
    s = tsum(mul(x, Tensor(mask[..., None])), axis=-2)
    return mul(s, Tensor(inv[..., None]))


def softmax_rows(x):
    """Row-stable softmax over the last axis."""
    shifted = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    val = e / e.sum(axis=-1, keepdims=True)

    def bw(out):
        def run():
            if x.requires_grad:
                dot = (out.grad * out.data).sum(axis=-1, keepdims=True)
                _accum(x, out.data * (out.grad - dot))
        return run

    return _make(val, (x,), bw)


def log_softmax_rows(x):
    shifted = x.data - x.data.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    val = shifted - lse

    def bw(out):
        def run():
            if x.requires_grad:
                soft = np.exp(out.data)
                _accum(x, out.grad - soft * out.grad.sum(axis=-1, keepdims=True))
        return run

    return _make(val, (x,), bw)


# -- parameters ------------------------------------------------------------


class ParamStore:
    """Named parameter tensors plus Adam moment state.

    Single writer: one training thread mutates values/grads; read-only
    evaluation may share the store freely between optimizer steps.
    """

    def __init__(self):
        self._entries = {}  # name -> [Tensor, m, v]
        self.step_count = 0

    def add(self, name, data):
        if name in self._entries:
            raise ValueError(f"duplicate parameter name '{name}'")
        t = Tensor(np.array(data, dtype=np.float64), requires_grad=True)
        t.requires_grad = True  # params are leaves even under no_grad
        self._entries[name] = [t, np.zeros_like(t.data), np.zeros_like(t.data)]
        return t

    def get(self, name):
        try:
            return self._entries[name][0]
        except KeyError:
            raise KeyError(f"missing parameter '{name}'") from None

    def has(self, name):
        return name in self._entries

    def names(self):
        return list(self._entries)

    def moments(self, name):
        _, m, v = self._entries[name]
        return m, v

    def set_moments(self, name, m, v):
        e = self._entries[name]
        e[1] = np.array(m, dtype=np.float64)
        e[2] = np.array(v, dtype=np.float64)

    def zero_grads(self):
        for e in self._entries.values():
            e[0].grad = None

    def n_scalars(self):
        return sum(e[0].data.size for e in self._entries.values())


def glorot(rng, fan_in, fan_out, shape=None):
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    shape = (fan_in, fan_out) if shape is None else shape
    return rng.uniform(-limit, limit, size=shape)


def add_mlp(params, prefix, dims, rng):
    """Register weights/biases for an MLP with layer widths `dims`."""
    for i, (d_in, d_out) in enumerate(zip(dims[:-1], dims[1:])):
        params.add(f"{prefix}.w{i}", glorot(rng, d_in, d_out))
        params.add(f"{prefix}.b{i}", np.zeros(d_out))


def mlp_forward(params, prefix, x):
    """Affine layers with ReLU in between; the final layer stays affine.

    Layers are read from `{prefix}.w0/b0`, `{prefix}.w1/b1`, ... until the
    next weight name is absent.
    """
    n_layers = 0
    while params.has(f"{prefix}.w{n_layers}"):
        n_layers += 1
    if n_layers == 0:
        raise KeyError(f"missing parameter '{prefix}.w0'")
    h = x
    for i in range(n_layers):
        w = params.get(f"{prefix}.w{i}")
        b = params.get(f"{prefix}.b{i}")
        h = add(matmul(h, w), b)
        if i < n_layers - 1:
            h = relu(h)
    return h


def adam_step(params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
    """Bias-corrected Adam over all entries; zeroes grads afterward."""
    params.step_count += 1
    t = params.step_count
    bc1 = 1.0 - beta1 ** t
    bc2 = 1.0 - beta2 ** t
    for entry in params._entries.values():
        p, m, v = entry
        g = p.grad if p.grad is not None else 0.0
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * np.square(g)
        p.data -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)
        p.grad = None


def grad_check(f, params, h=1e-5, *, denom_floor=1e-3, names=None):
    """Compare analytic grads of scalar f(params) against central differences.

    Returns the worst per-coordinate relative error, with the denominator
    floored at `denom_floor` so finite-difference noise on near-zero
    gradients does not dominate.
    """
    params.zero_grads()
    out = f(params)
    out.backward()
    check = names if names is not None else params.names()
    analytic = {}
    for name in check:
        p = params.get(name)
        analytic[name] = (p.grad if p.grad is not None else np.zeros_like(p.data)).copy()
    params.zero_grads()

    worst = 0.0
    with no_grad():
        for name in check:
            p = params.get(name)
            flat = p.data.reshape(-1)
            a_flat = analytic[name].reshape(-1)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + h
                fp = f(params).item()
                flat[i] = orig - h
                fm = f(params).item()
                flat[i] = orig
                numeric = (fp - fm) / (2.0 * h)
                denom = max(abs(a_flat[i]), abs(numeric), denom_floor)
                worst = max(worst, abs(a_flat[i] - numeric) / denom)
    return worst
