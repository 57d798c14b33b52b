"""Location-variant dynamic-kernel attention and the residual WOLO block.

At every time step a pointwise predictor turns the feature column X_t into a
K x K mixing matrix plus a K-vector bias. The matrix is passed through the
activation (sine by default), applied channel-agnostically to the dilated
K-neighborhood of X_t, and the per-step results are overlap-added back onto
the time axis. A residual block wraps the attention between leaky ReLUs and
a channel-mixing pointwise convolution.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .tensor import (
    Tensor, ShapeMismatchError, fold1d, leaky_relu, matmul, reshape, sin,
    softmax, tanh, transpose, unfold1d,
)

__all__ = [
    "ACTIVATION_MODES", "LEAKY_SLOPE", "WoloParams", "DynamicKernels",
    "predict_kernels", "activate_kernel", "dynamic_kernels",
    "apply_dynamic_kernel", "wolo_attention", "wolo_attention_reference",
    "wolo_block",
]

ACTIVATION_MODES = ("sine", "tanh", "softmax")
LEAKY_SLOPE = 0.1


@dataclass
class WoloParams:
    """Learnable weights of one WOLO block.

    ``u`` ((K*K+K) x C) and ``v`` (K*K+K) predict the per-step kernel and
    bias; ``post_w`` (C x C) and ``post_b`` (C) are the channel-mixing
    pointwise convolution applied after the attention.
    """

    u: Tensor
    v: Tensor
    post_w: Tensor
    post_b: Tensor
    kernel_size: int
    dilation: int
    mode: str

    def __post_init__(self):
        k = self.kernel_size
        if k < 1 or k % 2 == 0:
            raise ValueError(f"WoloParams: kernel size must be odd, got {k}")
        if self.mode not in ACTIVATION_MODES:
            raise ValueError(f"WoloParams: unknown activation mode {self.mode!r}")
        rows = k * k + k
        c = self.u.shape[1] if self.u.ndim == 2 else -1
        if self.u.shape != (rows, c) or self.v.shape != (rows,):
            raise ShapeMismatchError(
                "WoloParams", [self.u.shape, self.v.shape],
                f"expected ({rows}, C) and ({rows},)")
        if self.post_w.shape != (c, c) or self.post_b.shape != (c,):
            raise ShapeMismatchError(
                "WoloParams", [self.post_w.shape, self.post_b.shape],
                f"expected ({c}, {c}) and ({c},)")

    @classmethod
    def create(cls, channels, kernel_size, dilation, mode, rng):
        """Initialize u, post_w ~ Normal(0, 0.01) and v, post_b = 0.

        Near-zero raw kernels keep the sine activation in its linear region
        at the start of training.
        """
        rows = kernel_size * kernel_size + kernel_size
        return cls(
            u=Tensor(rng.normal(0.0, 0.01, (rows, channels)), requires_grad=True),
            v=Tensor(np.zeros(rows), requires_grad=True),
            post_w=Tensor(rng.normal(0.0, 0.01, (channels, channels)),
                          requires_grad=True),
            post_b=Tensor(np.zeros(channels), requires_grad=True),
            kernel_size=kernel_size,
            dilation=dilation,
            mode=mode,
        )

    @property
    def channels(self):
        return self.u.shape[1]

    def tensors(self):
        """Named parameter tensors in a stable order."""
        return {"U": self.u, "V": self.v,
                "post_w": self.post_w, "post_b": self.post_b}

    def n_params(self):
        return sum(t.size for t in self.tensors().values())


@dataclass
class DynamicKernels:
    """Per-timestep activated kernels w (..., T, K, K) and biases b (..., T, K)."""

    w: Tensor
    b: Tensor


def predict_kernels(x, u, v):
    """Per-step kernel prediction: (w_raw, b) from columns of x.

    For each t, the (K*K+K) vector u @ x[:, t] + v splits into the first K*K
    entries, reshaped row-major to K x K (rows = output tap q, columns =
    input tap p), and the last K entries as the bias. K is inferred from
    u's row count. x may carry leading batch axes: (..., C, T).
    """
    if not isinstance(x, Tensor):
        x = Tensor(x)
    rows = u.shape[0]
    k = int((math.isqrt(4 * rows + 1) - 1) // 2)
    if k * k + k != rows or k % 2 == 0:
        raise ShapeMismatchError(
            "predict_kernels", [u.shape],
            f"{rows} rows is not K*K+K for odd K")
    if x.ndim < 2 or u.ndim != 2 or x.shape[-2] != u.shape[1]:
        raise ShapeMismatchError("predict_kernels", [x.shape, u.shape])
    if v.shape != (rows,):
        raise ShapeMismatchError("predict_kernels", [u.shape, v.shape], "bias")
    t = x.shape[-1]
    lead = x.shape[:-2]
    proj = matmul(u, x) + reshape(v, (rows, 1))
    axes = tuple(range(proj.ndim - 2)) + (proj.ndim - 1, proj.ndim - 2)
    proj = transpose(proj, axes)
    w_raw = reshape(proj[..., :, :k * k], lead + (t, k, k))
    b = proj[..., :, k * k:]
    return w_raw, b


def activate_kernel(w_raw, mode):
    """Activate raw kernels: sine/tanh elementwise, softmax across input taps."""
    if mode == "sine":
        return sin(w_raw)
    if mode == "tanh":
        return tanh(w_raw)
    if mode == "softmax":
        return softmax(w_raw, axis=-1)
    raise ValueError(f"activate_kernel: unknown mode {mode!r}")


def dynamic_kernels(x, params):
    """Predict and activate the per-step kernels for x under params."""
    w_raw, b = predict_kernels(x, params.u, params.v)
    return DynamicKernels(w=activate_kernel(w_raw, params.mode), b=b)


def apply_dynamic_kernel(w, b, y):
    """Per-step channel-agnostic mix: out[t] = w[t] @ y[t] + b[t][:, None].

    w is (..., T, K, K), b is (..., T, K), y is (..., T, K, C); the same
    K x K matrix multiplies every channel's window column and the bias is
    broadcast over channels.
    """
    if w.ndim < 3 or y.ndim < 3 or w.shape[-1] != y.shape[-2]:
        raise ShapeMismatchError("apply_dynamic_kernel", [w.shape, y.shape])
    if b.shape != w.shape[:-1]:
        raise ShapeMismatchError(
            "apply_dynamic_kernel", [w.shape, b.shape], "bias")
    return matmul(w, y) + reshape(b, b.shape + (1,))


def wolo_attention(x, params):
    """Dynamic-kernel attention over (..., C, T), preserving shape.

    Pipeline: predict kernels from x, activate, gather the dilated
    K-neighborhood (unfold), mix it per step, and overlap-add the windows
    back (fold).
    """
    kernels = dynamic_kernels(x, params)
    y = unfold1d(x, params.kernel_size, params.dilation)
    mixed = apply_dynamic_kernel(kernels.w, kernels.b, y)
    return fold1d(mixed, params.kernel_size, params.dilation)


def wolo_attention_reference(x, params):
    """Index-loop reference for wolo_attention on a (C, T) array.

    Computes every quantity with explicit scalar loops straight from the
    defining equations; shares no code with the optimized path. Returns a
    plain float64 array.
    """
    xd = np.asarray(x.data if isinstance(x, Tensor) else x, dtype=np.float64)
    if xd.ndim != 2:
        raise ShapeMismatchError("wolo_attention_reference", [xd.shape])
    c_n, t_n = xd.shape
    k = params.kernel_size
    d = params.dilation
    half = k // 2
    u = params.u.data
    v = params.v.data
    out = np.zeros((c_n, t_n))
    for t in range(t_n):
        proj = [sum(u[r, c] * xd[c, t] for c in range(c_n)) + v[r]
                for r in range(k * k + k)]
        raw = [[proj[q * k + p] for p in range(k)] for q in range(k)]
        bias = [proj[k * k + q] for q in range(k)]
        if params.mode == "sine":
            act = [[math.sin(w) for w in row] for row in raw]
        elif params.mode == "tanh":
            act = [[math.tanh(w) for w in row] for row in raw]
        elif params.mode == "softmax":
            act = []
            for row in raw:
                m = max(row)
                exps = [math.exp(w - m) for w in row]
                s = sum(exps)
                act.append([e / s for e in exps])
        else:
            raise ValueError(f"unknown activation mode {params.mode!r}")
        window = []
        for p in range(k):
            src = t + (p - half) * d
            if 0 <= src < t_n:
                window.append([xd[c, src] for c in range(c_n)])
            else:
                window.append([0.0] * c_n)
        for q in range(k):
            dst = t + (q - half) * d
            if not 0 <= dst < t_n:
                continue
            for c in range(c_n):
                val = sum(act[q][p] * window[p][c] for p in range(k))
                out[c, dst] += val + bias[q]
    return out


def wolo_block(x, params):
    """Residual block: x + pointwise(leaky(attention(leaky(x))))."""
    h = leaky_relu(x, LEAKY_SLOPE)
    h = wolo_attention(h, params)
    h = leaky_relu(h, LEAKY_SLOPE)
    mixed = matmul(params.post_w, h) + reshape(params.post_b,
                                               (params.channels, 1))
    return x + mixed
