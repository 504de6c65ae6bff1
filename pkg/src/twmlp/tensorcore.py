"""A small dense tensor with reverse-mode automatic differentiation.

Only the operations the TW-MLP network and its losses need are provided.
Tensors wrap numpy arrays; 2-D arrays are (time, feature) and an optional
leading axis carries the mini-batch.

    >>> W = Tensor(np.eye(2), requires_grad=True)
    >>> loss = sum_all(matmul(W, Tensor(np.ones((2, 1)))))
    >>> backward(loss)
"""

import contextlib

import numpy as np

from .errors import ContractError, NonFiniteError, ShapeError

DEFAULT_DTYPE = np.float32

_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "op", "_parents", "_backward")

    def __init__(self, data, requires_grad=False, dtype=None):
        if isinstance(data, Tensor):
            data = data.data
        if dtype is None:
            dtype = data.dtype if isinstance(data, np.ndarray) and data.dtype.kind == "f" else DEFAULT_DTYPE
        self.data = np.asarray(data, dtype=dtype)
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self.op = "leaf"
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def ndim(self):
        return self.data.ndim

    def numpy(self):
        return self.data

    def item(self):
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else _not_scalar(self)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, op={self.op}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(_lift(other, self.dtype), self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)


def _not_scalar(t):
    raise ContractError(f"tensor of shape {t.shape} is not a scalar")


def _lift(x, dtype):
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=dtype))


def _make(data, parents, backward_fn, op):
    """Wrap an op result and record it in the graph when needed."""
    if not np.all(np.isfinite(data)):
        raise NonFiniteError(f"non-finite values produced by {op}")
    out = Tensor(data, dtype=data.dtype)
    out.op = op
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward_fn
    return out


def _unbroadcast(grad, shape):
    """Sum ``grad`` down to ``shape`` after numpy broadcasting."""
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _flat2(x):
    return x.reshape(-1, x.shape[-1])


# ---------------------------------------------------------------------------
# elementwise arithmetic


def add(a, b):
    a = _lift(a, getattr(b, "dtype", DEFAULT_DTYPE))
    b = _lift(b, a.dtype)
    sa, sb = a.shape, b.shape

    def bw(g):
        return _unbroadcast(g, sa), _unbroadcast(g, sb)

    return _make(a.data + b.data, (a, b), bw, "add")


def sub(a, b):
    a = _lift(a, getattr(b, "dtype", DEFAULT_DTYPE))
    b = _lift(b, a.dtype)
    sa, sb = a.shape, b.shape

    def bw(g):
        return _unbroadcast(g, sa), _unbroadcast(-g, sb)

    return _make(a.data - b.data, (a, b), bw, "sub")


def mul(a, b):
    a = _lift(a, getattr(b, "dtype", DEFAULT_DTYPE))
    b = _lift(b, a.dtype)
    ad, bd = a.data, b.data

    def bw(g):
        return _unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)

    return _make(ad * bd, (a, b), bw, "mul")


def exp(x):
    with np.errstate(over="ignore"):
        y = np.exp(x.data)
    return _make(y, (x,), lambda g: (g * y,), "exp")


def absolute(x):
    s = np.sign(x.data)
    return _make(np.abs(x.data), (x,), lambda g: (g * s,), "abs")


def sum_all(x):
    shape, dt = x.shape, x.dtype

    def bw(g):
        return (np.broadcast_to(g, shape).astype(dt),)

    return _make(np.asarray(x.data.sum(), dtype=dt), (x,), bw, "sum")


def mean_all(x):
    shape, dt, n = x.shape, x.dtype, x.data.size

    def bw(g):
        return (np.broadcast_to(g / n, shape).astype(dt),)

    return _make(np.asarray(x.data.sum() / n, dtype=dt), (x,), bw, "mean")


def square_sum(x):
    xd = x.data
    return _make(np.asarray(np.sum(xd * xd), dtype=xd.dtype), (x,), lambda g: (2.0 * g * xd,), "square_sum")


def silu(x):
    xd = x.data
    with np.errstate(over="ignore"):
        s = 1.0 / (1.0 + np.exp(-xd))
    s = s.astype(xd.dtype, copy=False)

    def bw(g):
        return (g * (s * (1.0 + xd * (1.0 - s))),)

    return _make(xd * s, (x,), bw, "silu")


# ---------------------------------------------------------------------------
# linear maps


def matmul(a, b):
    """(..., m, k) @ (k, n) or batched (..., k, n)."""
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul shapes {a.shape} and {b.shape} do not align")
    ad, bd = a.data, b.data

    def bw(g):
        ga = g @ np.swapaxes(bd, -1, -2)
        if bd.ndim == 2 and ad.ndim > 2:
            gb = _flat2(ad).T @ _flat2(g)
        else:
            gb = np.swapaxes(ad, -1, -2) @ g
        return _unbroadcast(ga, ad.shape), _unbroadcast(gb, bd.shape)

    return _make(ad @ bd, (a, b), bw, "matmul")


def _sequential_contract(x, w):
    # x (..., k), w (out, k); one multiply-add per contraction index, in order,
    # so each row's result is independent of how many rows are processed.
    acc = x[..., 0:1] * w[:, 0]
    for j in range(1, w.shape[1]):
        acc = acc + x[..., j : j + 1] * w[:, j]
    return acc


def linear(x, weight, bias=None, exact=False):
    """Per-row affine map ``x @ weight.T + bias`` with ``weight`` shaped (out, in).

    ``exact=True`` uses a fixed sequential summation order that gives
    bit-identical rows regardless of batch size, at some speed cost.
    """
    if weight.ndim != 2 or x.shape[-1] != weight.shape[1]:
        raise ShapeError(f"linear input {x.shape} does not match weight {weight.shape}")
    xd, wd = x.data, weight.data
    y = _sequential_contract(xd, wd) if exact else xd @ wd.T
    parents = (x, weight)
    if bias is not None:
        if bias.shape != (weight.shape[0],):
            raise ShapeError(f"bias {bias.shape} does not match weight {weight.shape}")
        y = y + bias.data
        parents = parents + (bias,)

    def bw(g):
        gx = g @ wd
        gw = _flat2(g).T @ _flat2(xd)
        if bias is None:
            return gx, gw
        return gx, gw, _flat2(g).sum(axis=0)

    return _make(y, parents, bw, "linear")


def time_mix(x, w):
    """Learned map along the time axis: out[i] = sum_j w[i, j] * x[j]."""
    if w.ndim != 2 or x.ndim < 2 or w.shape[1] != x.shape[-2]:
        raise ShapeError(f"time_mix weight {w.shape} does not match input {x.shape}")
    xd, wd = x.data, w.data

    def bw(g):
        gx = wd.T @ g
        gw = g @ np.swapaxes(xd, -1, -2)
        if gw.ndim > 2:
            gw = gw.reshape(-1, *gw.shape[-2:]).sum(axis=0)
        return gx, gw

    return _make(wd @ xd, (x, w), bw, "time_mix")


def layer_norm(x, gain, bias, eps=1e-5):
    """Standardize each row over the feature axis, then scale and shift."""
    d = x.shape[-1]
    if d < 2:
        raise ShapeError("layer_norm needs at least 2 features")
    if gain.shape != (d,) or bias.shape != (d,):
        raise ShapeError(f"layer_norm params {gain.shape}/{bias.shape} do not match width {d}")
    xd = x.data
    mu = xd.mean(axis=-1, keepdims=True)
    xc = xd - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    rstd = 1.0 / np.sqrt(var + eps)
    xhat = xc * rstd
    gd = gain.data

    def bw(g):
        dxhat = g * gd
        m1 = dxhat.mean(axis=-1, keepdims=True)
        m2 = (dxhat * xhat).mean(axis=-1, keepdims=True)
        gx = rstd * (dxhat - m1 - xhat * m2)
        return gx, _flat2(g * xhat).sum(axis=0), _flat2(g).sum(axis=0)

    return _make(xhat * gd + bias.data, (x, gain, bias), bw, "layer_norm")


# ---------------------------------------------------------------------------
# shape manipulation along the time / feature axes


def _concat(tensors, axis, name):
    tensors = list(tensors)
    if not tensors:
        raise ShapeError(f"{name} needs at least one tensor")
    ref = tensors[0].shape
    for t in tensors[1:]:
        other = list(t.shape)
        expect = list(ref)
        other[axis] = expect[axis] = 0
        if other != expect:
            raise ShapeError(f"{name}: shape {t.shape} incompatible with {ref}")
    if len(tensors) == 1:
        return tensors[0]
    sizes = [t.shape[axis] for t in tensors]
    bounds = np.cumsum(sizes)[:-1]

    def bw(g):
        return tuple(np.split(g, bounds, axis=axis))

    return _make(np.concatenate([t.data for t in tensors], axis=axis), tensors, bw, name)


def concat_time(tensors):
    """Stack along the time (row) axis in argument order."""
    return _concat(tensors, -2, "concat_time")


def concat_features(tensors):
    return _concat(tensors, -1, "concat_features")


def mean_time(x):
    """Mean over the time axis, keeping it as a single row."""
    n = x.shape[-2]
    shape = x.shape

    def bw(g):
        return (np.broadcast_to(g / n, shape).astype(x.dtype),)

    return _make(x.data.mean(axis=-2, keepdims=True), (x,), bw, "mean_time")


def broadcast_time(x, n):
    """Repeat a single-row tensor ``n`` times along the time axis."""
    if x.shape[-2] != 1:
        raise ShapeError(f"broadcast_time expects one row, got {x.shape}")
    shape = x.shape[:-2] + (n, x.shape[-1])
    return _make(np.broadcast_to(x.data, shape).copy(), (x,), lambda g: (g.sum(axis=-2, keepdims=True),), "broadcast_time")


def diff_time(x):
    """Forward differences x[t+1] - x[t] along the time axis."""
    if x.shape[-2] < 2:
        raise ShapeError("diff_time needs at least two rows")
    xd = x.data

    def bw(g):
        gx = np.zeros_like(xd)
        gx[..., 1:, :] += g
        gx[..., :-1, :] -= g
        return (gx,)

    return _make(xd[..., 1:, :] - xd[..., :-1, :], (x,), bw, "diff_time")


def take_time(x, index):
    """Select one time row, keeping the axis."""
    xd = x.data
    n = xd.shape[-2]
    idx = index % n

    def bw(g):
        gx = np.zeros_like(xd)
        gx[..., idx : idx + 1, :] = g
        return (gx,)

    return _make(xd[..., idx : idx + 1, :].copy(), (x,), bw, "take_time")


# ---------------------------------------------------------------------------
# reverse pass


def _topo_order(root):
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss, leaves=None, accumulate=False):
    """Reverse-mode sweep from scalar ``loss``.

    Gradients land in ``.grad`` of every leaf reached. Leaf gradients are
    reset first unless ``accumulate`` is set. When ``leaves`` is given they
    are all reset (so leaves the loss ignores read as zero) and their
    gradients are returned in order.
    """
    if loss.data.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    if leaves is not None and not accumulate:
        for leaf in leaves:
            leaf.grad = np.zeros_like(leaf.data)
    if loss.requires_grad:
        order = _topo_order(loss)
        if not accumulate:
            for node in order:
                if node._backward is None:
                    node.grad = np.zeros_like(node.data)
        grads = {id(loss): np.ones_like(loss.data)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                if node.grad is None:
                    node.grad = np.zeros_like(node.data)
                node.grad = node.grad + g.astype(node.data.dtype, copy=False)
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if not parent.requires_grad or pg is None:
                    continue
                key = id(parent)
                grads[key] = grads[key] + pg if key in grads else pg
    if leaves is not None:
        return [leaf.grad if leaf.grad is not None else np.zeros_like(leaf.data) for leaf in leaves]
    return None
