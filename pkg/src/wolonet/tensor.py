"""Dense float64 tensors with reverse-mode automatic differentiation.

Every differentiable op links its output to its inputs and records a
vector-Jacobian closure. ``Tensor.backward()`` builds a ``Tape`` (reverse
topological order over that graph) and accumulates gradients into ``.grad``
on every tensor that requires them. Correctness is preferred over zero-copy
cleverness: data is always float64 and views may copy.

Multiply-add instrumentation: inside a ``count_ops()`` block, matmul and the
convolution ops tally one count per multiply-accumulate pair, elementwise
add/sub/mul tally their result size, and data movement (reshape, transpose,
slicing, padding, unfold/fold/framing) and unary activations tally zero.
"""

from __future__ import annotations

import threading
from contextlib import contextmanager

import numpy as np

__all__ = [
    "Tensor", "Tape", "ShapeMismatchError", "NonFiniteError",
    "no_grad", "count_ops", "OpCounter", "grad_check",
    "add", "sub", "mul", "neg", "matmul", "reduce_sum", "reduce_mean",
    "absolute", "log", "sqrt", "sin", "tanh", "clamp_min", "softmax",
    "leaky_relu", "reshape", "transpose", "pad", "concat",
    "conv1d", "conv_transpose1d", "avg_pool1d",
    "unfold1d", "fold1d", "frame1d",
]

_state = threading.local()


def _grad_enabled():
    return getattr(_state, "grad_enabled", True)


def _counters():
    return getattr(_state, "counters", ())


class ShapeMismatchError(ValueError):
    """Raised when an op receives tensors whose shapes cannot combine."""

    def __init__(self, op, shapes, detail=""):
        self.op = op
        # entries are usually shape tuples but may be scalar counts
        self.shapes = tuple(tuple(s) if isinstance(s, (tuple, list)) else s
                            for s in shapes)
        msg = f"{op}: incompatible shapes {self.shapes}"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


class NonFiniteError(ValueError):
    """Raised when an op that demands finite input sees NaN or infinity."""

    def __init__(self, op, detail=""):
        self.op = op
        msg = f"{op}: non-finite values encountered"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


@contextmanager
def no_grad():
    """Disable graph construction inside the block (inference mode)."""
    prev = _grad_enabled()
    _state.grad_enabled = False
    try:
        yield
    finally:
        _state.grad_enabled = prev


class OpCounter:
    """Accumulates multiply-add counts from ops executed under count_ops()."""

    def __init__(self):
        self.macs = 0


@contextmanager
def count_ops():
    """Count multiply-add pairs executed by tensor ops in this thread."""
    counter = OpCounter()
    stack = getattr(_state, "counters", None)
    if stack is None:
        stack = []
        _state.counters = stack
    stack.append(counter)
    try:
        yield counter
    finally:
        stack.pop()


def _tally(n):
    for counter in _counters():
        counter.macs += int(n)


class Tensor:
    """A dense float64 array plus the autodiff bookkeeping to reach it."""

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_vjp")

    def __init__(self, data, requires_grad=False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._parents = ()
        self._vjp = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def item(self):
        return float(self.data.item())

    def detach(self):
        """A new leaf sharing this tensor's values, cut from the graph."""
        return Tensor(self.data, requires_grad=False)

    def zero_grad(self):
        self.grad = None

    def backward(self, seed=None):
        Tape(self).backward(seed)

    def sum(self, axis=None, keepdims=False):
        return reduce_sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return reduce_mean(self, axis=axis, keepdims=keepdims)

    def abs(self):
        return absolute(self)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if not axes:
            axes = None
        elif len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes)

    def __add__(self, other):
        return add(self, _as_tensor(other))

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, _as_tensor(other))

    def __rsub__(self, other):
        return sub(_as_tensor(other), self)

    def __mul__(self, other):
        return mul(self, _as_tensor(other))

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise TypeError("tensor division is only supported by scalars")
        return mul(self, _as_tensor(1.0 / float(other)))

    def __matmul__(self, other):
        return matmul(self, _as_tensor(other))

    def __getitem__(self, idx):
        return _slice(self, idx)

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.data.shape}{flag})"


def _as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data, op, parents, vjp):
    """Wrap an op result, wiring parents and the VJP if grads are live."""
    out = Tensor(data)
    if _grad_enabled() and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._vjp = vjp
    return out


class Tape:
    """Reverse topological walk over the graph that produced a tensor.

    ``nodes`` lists every tensor reachable from the root through parent
    links, with inputs preceding consumers. ``backward`` visits each node
    exactly once in reverse, accumulating parent gradients with +=.
    """

    def __init__(self, root):
        self.root = root
        order = []
        seen = {id(root)}
        stack = [(root, iter(root._parents))]
        while stack:
            node, parents = stack[-1]
            pushed = False
            for p in parents:
                if id(p) not in seen:
                    seen.add(id(p))
                    stack.append((p, iter(p._parents)))
                    pushed = True
                    break
            if not pushed:
                order.append(node)
                stack.pop()
        self.nodes = order

    def backward(self, seed=None):
        root = self.root
        if not root.requires_grad:
            raise ValueError("backward: root does not require grad")
        if seed is None:
            seed = np.ones_like(root.data)
        else:
            seed = np.asarray(seed, dtype=np.float64)
            if seed.shape != root.data.shape:
                raise ShapeMismatchError(
                    "backward", [seed.shape, root.data.shape], "seed vs root")
        if root.grad is None:
            root.grad = seed.copy()
        else:
            root.grad = root.grad + seed
        for node in reversed(self.nodes):
            if node._vjp is None or node.grad is None:
                continue
            grads = node._vjp(node.grad)
            for parent, g in zip(node._parents, grads):
                if g is None or not parent.requires_grad:
                    continue
                if parent.grad is None:
                    parent.grad = np.zeros_like(parent.data)
                parent.grad += g


def _unbroadcast(g, shape):
    """Sum a broadcast gradient back down to the original operand shape."""
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _check_broadcast(op, a, b):
    try:
        return np.broadcast_shapes(a.data.shape, b.data.shape)
    except ValueError:
        raise ShapeMismatchError(op, [a.data.shape, b.data.shape]) from None


# ---------------------------------------------------------------------------
# elementwise arithmetic

def add(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    _check_broadcast("add", a, b)
    data = a.data + b.data
    _tally(data.size)
    return _make(data, "add", (a, b), lambda g: (
        _unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)))


def sub(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    _check_broadcast("sub", a, b)
    data = a.data - b.data
    _tally(data.size)
    return _make(data, "sub", (a, b), lambda g: (
        _unbroadcast(g, a.data.shape), -_unbroadcast(g, b.data.shape)))


def mul(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    _check_broadcast("mul", a, b)
    data = a.data * b.data
    _tally(data.size)
    ad, bd = a.data, b.data
    return _make(data, "mul", (a, b), lambda g: (
        _unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)))


def neg(a):
    a = _as_tensor(a)
    return _make(-a.data, "neg", (a,), lambda g: (-g,))


def matmul(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeMismatchError(
            "matmul", [a.data.shape, b.data.shape], "operands must be >= 2-D")
    if a.data.shape[-1] != b.data.shape[-2]:
        raise ShapeMismatchError("matmul", [a.data.shape, b.data.shape])
    try:
        np.broadcast_shapes(a.data.shape[:-2], b.data.shape[:-2])
    except ValueError:
        raise ShapeMismatchError(
            "matmul", [a.data.shape, b.data.shape], "batch dims") from None
    data = a.data @ b.data
    _tally(data.size * a.data.shape[-1])
    ad, bd = a.data, b.data
    wants_a, wants_b = a.requires_grad, b.requires_grad

    def vjp(g):
        ga = _unbroadcast(g @ np.swapaxes(bd, -1, -2), ad.shape) if wants_a else None
        gb = _unbroadcast(np.swapaxes(ad, -1, -2) @ g, bd.shape) if wants_b else None
        return ga, gb

    return _make(data, "matmul", (a, b), vjp)


# ---------------------------------------------------------------------------
# reductions

def _norm_axes(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(sorted(a % ndim for a in axis))


def reduce_sum(x, axis=None, keepdims=False):
    x = _as_tensor(x)
    axes = _norm_axes(axis, x.ndim)
    data = x.data.sum(axis=axes, keepdims=keepdims)
    shape = x.data.shape

    def vjp(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, shape).copy(),)

    return _make(data, "sum", (x,), vjp)


def reduce_mean(x, axis=None, keepdims=False):
    x = _as_tensor(x)
    axes = _norm_axes(axis, x.ndim)
    count = 1
    for a in axes:
        count *= x.data.shape[a]
    if count == 0:
        raise ShapeMismatchError("mean", [x.data.shape], "empty reduction")
    data = x.data.mean(axis=axes, keepdims=keepdims)
    shape = x.data.shape

    def vjp(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g / count, shape).copy(),)

    return _make(data, "mean", (x,), vjp)


# ---------------------------------------------------------------------------
# unary math

def absolute(x):
    x = _as_tensor(x)
    xd = x.data
    return _make(np.abs(xd), "abs", (x,), lambda g: (g * np.sign(xd),))


def log(x):
    x = _as_tensor(x)
    if not np.all(np.isfinite(x.data)):
        raise NonFiniteError("log")
    if np.any(x.data <= 0.0):
        raise NonFiniteError("log", "input must be strictly positive")
    xd = x.data
    return _make(np.log(xd), "log", (x,), lambda g: (g / xd,))


def sqrt(x):
    """Elementwise square root; the gradient at exactly 0 is defined as 0."""
    x = _as_tensor(x)
    if np.any(x.data < 0.0):
        raise NonFiniteError("sqrt", "input must be nonnegative")
    data = np.sqrt(x.data)

    def vjp(g):
        out = np.zeros_like(data)
        nz = data > 0.0
        out[nz] = g[nz] * 0.5 / data[nz]
        return (out,)

    return _make(data, "sqrt", (x,), vjp)


def sin(x):
    x = _as_tensor(x)
    xd = x.data
    return _make(np.sin(xd), "sin", (x,), lambda g: (g * np.cos(xd),))


def tanh(x):
    x = _as_tensor(x)
    data = np.tanh(x.data)
    return _make(data, "tanh", (x,), lambda g: (g * (1.0 - data * data),))


def clamp_min(x, floor):
    x = _as_tensor(x)
    floor = float(floor)
    xd = x.data
    data = np.maximum(xd, floor)
    return _make(data, "clamp_min", (x,), lambda g: (g * (xd >= floor),))


def softmax(x, axis=-1):
    x = _as_tensor(x)
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    data = e / e.sum(axis=axis, keepdims=True)

    def vjp(g):
        inner = (g * data).sum(axis=axis, keepdims=True)
        return (data * (g - inner),)

    return _make(data, "softmax", (x,), vjp)


def leaky_relu(x, slope=0.1):
    x = _as_tensor(x)
    xd = x.data
    data = np.where(xd > 0.0, xd, slope * xd)
    return _make(data, "leaky_relu", (x,),
                 lambda g: (g * np.where(xd > 0.0, 1.0, slope),))


# ---------------------------------------------------------------------------
# shape ops

def reshape(x, shape):
    x = _as_tensor(x)
    shape = tuple(shape)
    try:
        data = x.data.reshape(shape)
    except ValueError:
        raise ShapeMismatchError("reshape", [x.data.shape, shape]) from None
    src = x.data.shape
    return _make(data.copy(), "reshape", (x,), lambda g: (g.reshape(src),))


def transpose(x, axes=None):
    x = _as_tensor(x)
    if axes is not None:
        axes = tuple(a % x.ndim for a in axes)
        if sorted(axes) != list(range(x.ndim)):
            raise ShapeMismatchError(
                "transpose", [x.data.shape], f"bad permutation {axes}")
        inv = tuple(np.argsort(axes))
    else:
        inv = None
    data = np.transpose(x.data, axes)
    return _make(data.copy(), "transpose", (x,),
                 lambda g: (np.transpose(g, inv),))


def _slice(x, idx):
    x = _as_tensor(x)
    try:
        data = x.data[idx]
    except IndexError:
        raise ShapeMismatchError("slice", [x.data.shape], repr(idx)) from None
    if not isinstance(data, np.ndarray):
        data = np.asarray(data)
    src_shape = x.data.shape

    def vjp(g):
        buf = np.zeros(src_shape)
        buf[idx] += g
        return (buf,)

    return _make(data.copy(), "slice", (x,), vjp)


def pad(x, pads, mode="zero"):
    """Pad with zeros (any axes) or by reflection (last axis only)."""
    x = _as_tensor(x)
    pads = tuple((int(b), int(a)) for b, a in pads)
    if len(pads) != x.ndim:
        raise ShapeMismatchError("pad", [x.data.shape], f"{len(pads)} pad pairs")
    if any(b < 0 or a < 0 for b, a in pads):
        raise ValueError("pad: negative pad widths are not supported")
    if mode == "zero":
        data = np.pad(x.data, pads)

        def vjp(g):
            idx = tuple(slice(b, g.shape[i] - a) for i, (b, a) in enumerate(pads))
            return (g[idx].copy(),)

        return _make(data, "pad", (x,), vjp)
    if mode == "reflect":
        if any(b or a for b, a in pads[:-1]):
            raise ValueError("pad: reflect mode only pads the last axis")
        left, right = pads[-1]
        t = x.data.shape[-1]
        if left >= t or right >= t:
            raise ShapeMismatchError(
                "pad", [x.data.shape], f"reflect pad ({left},{right}) too wide")
        data = np.pad(x.data, pads, mode="reflect")

        def vjp(g):
            gx = g[..., left:left + t].copy()
            if left:
                gx[..., 1:left + 1] += g[..., :left][..., ::-1]
            if right:
                gx[..., t - 1 - right:t - 1] += g[..., -right:][..., ::-1]
            return (gx,)

        return _make(data, "pad", (x,), vjp)
    raise ValueError(f"pad: unknown mode {mode!r}")


def concat(tensors, axis=0):
    tensors = [_as_tensor(t) for t in tensors]
    if not tensors:
        raise ValueError("concat: need at least one tensor")
    axis = axis % tensors[0].ndim
    base = list(tensors[0].data.shape)
    for t in tensors[1:]:
        other = list(t.data.shape)
        if len(other) != len(base) or any(
                i != axis and other[i] != base[i] for i in range(len(base))):
            raise ShapeMismatchError("concat", [t.data.shape for t in tensors])
    data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]

    def vjp(g):
        splits = np.split(g, np.cumsum(sizes)[:-1], axis=axis)
        return tuple(s.copy() for s in splits)

    return _make(data, "concat", tuple(tensors), vjp)


# ---------------------------------------------------------------------------
# convolution family

def _lift_conv_input(op, x, w):
    """Normalize conv inputs to (B, C, T) / 3-D weights; remember the rank."""
    if x.ndim == 1 and w.ndim == 1:
        return x.data[None, None, :], w.data[None, None, :], 1
    if x.ndim == 2 and w.ndim == 3:
        return x.data[None], w.data, 2
    if x.ndim == 3 and w.ndim == 3:
        return x.data, w.data, 3
    raise ShapeMismatchError(op, [x.data.shape, w.data.shape],
                             "expected (C,T) or (B,C,T) with 3-D weight")


def conv1d(x, w, b=None, stride=1, dilation=1, groups=1, padding="same"):
    """Grouped dilated 1-D convolution with zero padding.

    ``padding`` is "same" (stride 1 only, output length equals input) or an
    explicit per-side integer. Input is (T,), (C,T) or (B,C,T); weight is
    (C_out, C_in/groups, K); bias is (C_out,).
    """
    x, w = _as_tensor(x), _as_tensor(w)
    if b is not None:
        b = _as_tensor(b)
    xd, wd, rank = _lift_conv_input("conv1d", x, w)
    B, c_in, t_in = xd.shape
    c_out, c_in_pg, k = wd.shape
    if stride < 1 or dilation < 1 or groups < 1:
        raise ValueError("conv1d: stride, dilation, groups must be >= 1")
    if c_in % groups or c_out % groups or c_in_pg != c_in // groups:
        raise ShapeMismatchError(
            "conv1d", [x.data.shape, w.data.shape], f"groups={groups}")
    if b is not None and b.data.shape != (c_out,):
        raise ShapeMismatchError("conv1d", [w.data.shape, b.data.shape], "bias")
    span = dilation * (k - 1) + 1
    if padding == "same":
        if stride != 1:
            raise ValueError("conv1d: 'same' padding requires stride 1")
        left = (span - 1) // 2
        right = span - 1 - left
    else:
        left = right = int(padding)
        if left < 0:
            raise ValueError("conv1d: negative padding")
    t_pad = t_in + left + right
    t_out = (t_pad - span) // stride + 1
    if t_out < 1:
        raise ShapeMismatchError(
            "conv1d", [x.data.shape, w.data.shape],
            f"kernel span {span} exceeds padded length {t_pad}")
    xp = np.pad(xd, ((0, 0), (0, 0), (left, right)))
    xg = xp.reshape(B, groups, c_in_pg, t_pad)
    wg = wd.reshape(groups, c_out // groups, c_in_pg, k)
    depthwise = c_in_pg == 1 and c_out == groups
    hi = (t_out - 1) * stride + 1

    def gather_cols():
        """Window gather as (B, G, K*C_in_pg, T_out), tap-major blocks."""
        cols = np.empty((B, groups, k * c_in_pg, t_out))
        for tap in range(k):
            cols[:, :, tap * c_in_pg:(tap + 1) * c_in_pg, :] = \
                xg[:, :, :, tap * dilation:tap * dilation + hi:stride]
        return cols

    if depthwise:
        out = np.zeros((B, groups, 1, t_out))
        for tap in range(k):
            xs = xg[:, :, :, tap * dilation:tap * dilation + hi:stride]
            out += wg[None, :, :, 0, tap, None] * xs
    else:
        wf = wg.transpose(0, 1, 3, 2).reshape(groups, c_out // groups,
                                              k * c_in_pg)
        out = wf @ gather_cols()
    out = out.reshape(B, c_out, t_out)
    _tally(out.size * c_in_pg * k)
    if b is not None:
        out = out + b.data[:, None]
        _tally(out.size)
    if rank == 1:
        data = out[0, 0]
    elif rank == 2:
        data = out[0]
    else:
        data = out
    wants_x, wants_w = x.requires_grad, w.requires_grad

    def vjp(g):
        g3 = g.reshape(B, c_out, t_out)
        gg = g3.reshape(B, groups, c_out // groups, t_out)
        gx = gw = gb = None
        if wants_x:
            buf = np.zeros_like(xg)
            if depthwise:
                for tap in range(k):
                    sl = slice(tap * dilation, tap * dilation + hi, stride)
                    buf[:, :, :, sl] += wg[None, :, :, 0, tap, None] * gg
            else:
                gcols = np.swapaxes(wf, -1, -2) @ gg
                for tap in range(k):
                    sl = slice(tap * dilation, tap * dilation + hi, stride)
                    buf[:, :, :, sl] += \
                        gcols[:, :, tap * c_in_pg:(tap + 1) * c_in_pg, :]
            buf = buf.reshape(B, c_in, t_pad)
            gx = buf[:, :, left:t_pad - right]
            gx = gx.reshape(x.data.shape)
        if wants_w:
            if depthwise:
                gw = np.zeros_like(wd).reshape(groups, 1, c_in_pg, k)
                for tap in range(k):
                    xs = xg[:, :, :, tap * dilation:tap * dilation + hi:stride]
                    gw[:, :, :, tap] = (gg @ np.swapaxes(xs, -1, -2)).sum(axis=0)
            else:
                gwf = (gg @ np.swapaxes(gather_cols(), -1, -2)).sum(axis=0)
                gw = gwf.reshape(groups, c_out // groups, k, c_in_pg)
                gw = gw.transpose(0, 1, 3, 2)
            gw = np.ascontiguousarray(gw).reshape(wd.shape)
            if w.ndim == 1:
                gw = gw[0, 0]
        if b is not None and b.requires_grad:
            gb = g3.sum(axis=(0, 2))
        return (gx, gw, gb) if b is not None else (gx, gw)

    parents = (x, w, b) if b is not None else (x, w)
    return _make(data, "conv1d", parents, vjp)


def conv_transpose1d(x, w, b=None, stride=1, padding=0, output_padding=0):
    """Transposed 1-D convolution (fractionally strided upsampler).

    Input is (C,T) or (B,C,T); weight is (C_in, C_out, K); bias is (C_out,).
    Output length is (T-1)*stride - 2*padding + K + output_padding.
    """
    x, w = _as_tensor(x), _as_tensor(w)
    if b is not None:
        b = _as_tensor(b)
    if x.ndim == 2 and w.ndim == 3:
        xd, rank = x.data[None], 2
    elif x.ndim == 3 and w.ndim == 3:
        xd, rank = x.data, 3
    else:
        raise ShapeMismatchError(
            "conv_transpose1d", [x.data.shape, w.data.shape],
            "expected (C,T) or (B,C,T) with 3-D weight")
    wd = w.data
    B, c_in, t_in = xd.shape
    if wd.shape[0] != c_in:
        raise ShapeMismatchError("conv_transpose1d", [x.data.shape, wd.shape])
    _, c_out, k = wd.shape
    if stride < 1 or padding < 0 or output_padding < 0 or output_padding >= stride:
        raise ValueError("conv_transpose1d: bad stride/padding/output_padding")
    if b is not None and b.data.shape != (c_out,):
        raise ShapeMismatchError(
            "conv_transpose1d", [wd.shape, b.data.shape], "bias")
    t_full = (t_in - 1) * stride + k
    t_out = (t_in - 1) * stride - 2 * padding + k + output_padding
    if t_out < 1:
        raise ShapeMismatchError(
            "conv_transpose1d", [x.data.shape, wd.shape], "empty output")
    ext = max(0, padding + t_out - t_full)
    buf = np.zeros((B, c_out, t_full + ext))
    hi = (t_in - 1) * stride + 1
    for tap in range(k):
        buf[:, :, tap:tap + hi:stride] += wd[:, :, tap].T @ xd
    _tally(B * c_out * t_in * c_in * k)
    out = buf[:, :, padding:padding + t_out]
    if b is not None:
        out = out + b.data[:, None]
        _tally(out.size)
    data = out if rank == 3 else out[0]
    wants_x, wants_w = x.requires_grad, w.requires_grad

    def vjp(g):
        g3 = g.reshape(B, c_out, t_out)
        gfull = np.zeros((B, c_out, t_full + ext))
        gfull[:, :, padding:padding + t_out] = g3
        gx = gw = gb = None
        if wants_x:
            gx = np.zeros_like(xd)
            for tap in range(k):
                gx += wd[:, :, tap] @ gfull[:, :, tap:tap + hi:stride]
            gx = gx.reshape(x.data.shape)
        if wants_w:
            gw = np.zeros_like(wd)
            for tap in range(k):
                gs = gfull[:, :, tap:tap + hi:stride]
                gw[:, :, tap] = (xd @ np.swapaxes(gs, -1, -2)).sum(axis=0)
        if b is not None and b.requires_grad:
            gb = g3.sum(axis=(0, 2))
        return (gx, gw, gb) if b is not None else (gx, gw)

    parents = (x, w, b) if b is not None else (x, w)
    return _make(data, "conv_transpose1d", parents, vjp)


def avg_pool1d(x, kernel, stride=None, padding=0):
    """Average pooling along the last axis, zero padding included in counts."""
    x = _as_tensor(x)
    if x.ndim not in (2, 3):
        raise ShapeMismatchError("avg_pool1d", [x.data.shape], "(C,T) or (B,C,T)")
    if stride is None:
        stride = kernel
    channels = x.data.shape[-2]
    w = Tensor(np.full((channels, 1, kernel), 1.0 / kernel))
    return conv1d(x, w, stride=stride, groups=channels, padding=padding)


# ---------------------------------------------------------------------------
# unfold / fold / framing

def _check_window(op, k, dilation):
    if k < 1 or k % 2 == 0:
        raise ValueError(f"{op}: kernel size must be odd and positive, got {k}")
    if dilation < 1:
        raise ValueError(f"{op}: dilation must be >= 1, got {dilation}")


def unfold1d(x, k, dilation=1):
    """Gather sliding dilated windows: (..., C, T) -> (..., T, K, C).

    out[..., t, p, c] = x[..., c, t + (p - K//2) * dilation], zero outside.
    """
    x = _as_tensor(x)
    _check_window("unfold1d", k, dilation)
    if x.ndim < 2:
        raise ShapeMismatchError("unfold1d", [x.data.shape], "needs (..., C, T)")
    data = _unfold_data(x.data, k, dilation)
    return _make(data, "unfold1d", (x,),
                 lambda g: (_fold_data(g, k, dilation),))


def fold1d(a, k, dilation=1):
    """Scatter-add window entries back: (..., T, K, C) -> (..., C, T).

    Exact linear adjoint of unfold1d with the same kernel size and dilation:
    out[..., c, t'] sums a[..., t, p, c] over all (t, p) with
    t + (p - K//2) * dilation == t'.
    """
    a = _as_tensor(a)
    _check_window("fold1d", k, dilation)
    if a.ndim < 3 or a.data.shape[-2] != k:
        raise ShapeMismatchError(
            "fold1d", [a.data.shape], f"needs (..., T, K={k}, C)")
    data = _fold_data(a.data, k, dilation)
    return _make(data, "fold1d", (a,),
                 lambda g: (_unfold_data(g, k, dilation),))


def _unfold_data(xd, k, dilation):
    half = (k // 2) * dilation
    t = xd.shape[-1]
    lead = xd.shape[:-2]
    c = xd.shape[-2]
    pads = [(0, 0)] * (xd.ndim - 1) + [(half, half)]
    xp = np.pad(xd, pads)
    out = np.empty(lead + (t, k, c))
    for p in range(k):
        out[..., :, p, :] = np.swapaxes(xp[..., :, p * dilation:p * dilation + t], -1, -2)
    return out


def _fold_data(ad, k, dilation):
    half = (k // 2) * dilation
    t = ad.shape[-3]
    c = ad.shape[-1]
    lead = ad.shape[:-3]
    buf = np.zeros(lead + (c, t + 2 * half))
    for p in range(k):
        buf[..., :, p * dilation:p * dilation + t] += np.swapaxes(ad[..., :, p, :], -1, -2)
    return buf[..., :, half:half + t] if half else buf


def frame1d(x, frame, hop):
    """Strided window gather: (..., T) -> (..., F, frame), no padding.

    F = (T - frame) // hop + 1; frame f covers samples [f*hop, f*hop+frame).
    """
    x = _as_tensor(x)
    if frame < 1 or hop < 1:
        raise ValueError("frame1d: frame and hop must be >= 1")
    t = x.data.shape[-1]
    if t < frame:
        raise ShapeMismatchError(
            "frame1d", [x.data.shape], f"length {t} < frame {frame}")
    f = (t - frame) // hop + 1
    out = np.empty(x.data.shape[:-1] + (f, frame))
    for i in range(f):
        out[..., i, :] = x.data[..., i * hop:i * hop + frame]
    src_shape = x.data.shape

    def vjp(g):
        gx = np.zeros(src_shape)
        for i in range(f):
            gx[..., i * hop:i * hop + frame] += g[..., i, :]
        return (gx,)

    return _make(out, "frame1d", (x,), vjp)


# ---------------------------------------------------------------------------
# numerical gradient checking

def grad_check(f, params, h=1e-5):
    """Compare analytic gradients of ``f()`` against central differences.

    ``f`` must return a scalar Tensor and be deterministic; ``params`` are
    leaf tensors with requires_grad whose entries are perturbed in place by
    h_i = h * max(1, |theta_i|). Returns the worst relative error
    |a - n| / max(|a|, |n|, 1e-8) over all entries.
    """
    params = list(params)
    for p in params:
        if not p.requires_grad:
            raise ValueError("grad_check: every param must require grad")
        p.grad = None
    out = f()
    if out.size != 1:
        raise ShapeMismatchError("grad_check", [out.shape], "f must be scalar")
    if not np.isfinite(out.data).all():
        raise NonFiniteError("grad_check", "objective at base point")
    out.backward()
    analytic = [np.zeros_like(p.data) if p.grad is None else p.grad.copy()
                for p in params]
    worst = 0.0
    with no_grad():
        for p, ga in zip(params, analytic):
            gflat = ga.reshape(-1)
            for i in range(p.data.size):
                idx = np.unravel_index(i, p.data.shape)
                orig = p.data[idx]
                step = h * max(1.0, abs(orig))
                p.data[idx] = orig + step
                hi = float(f().data)
                p.data[idx] = orig - step
                lo = float(f().data)
                p.data[idx] = orig
                if not (np.isfinite(hi) and np.isfinite(lo)):
                    raise NonFiniteError("grad_check", f"probe at entry {i}")
                numeric = (hi - lo) / (2.0 * step)
                err = abs(gflat[i] - numeric) / max(abs(gflat[i]), abs(numeric), 1e-8)
                worst = max(worst, err)
    return worst
