"""Shared verification suites: finite-difference gradient checks and the
attention-block equivalence oracle.

Both the CLI (``gradcheck`` / ``oracle-check`` subcommands) and the test suite
call these so the two entry points can never drift apart.  Every suite returns
plain floats; callers decide tolerances and exit codes.

Gradcheck methodology: 64-bit central differences around deterministic scalar
objectives.  Objectives avoid non-differentiable points (|.| kinks, clamp
edges) by construction, and mix each output with fixed random weights so
every entry of every parameter influences the scalar.
"""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .dsp import MelConfig, log_mel_tensor
from .losses import adv_d_loss, adv_g_loss, feature_matching_loss, mel_loss
from .tensor import Tensor, grad_check
from .wolo import WoloParams, wolo_attention, wolo_attention_reference, wolo_block

GRAD_TOL = 1e-4
ORACLE_TOL = 1e-9


def _weight(rng, shape):
    return Tensor(rng.normal(size=shape))


def _smooth(y, rng):
    """Reduce any tensor to a scalar through fixed random weights."""
    w = Tensor(rng.normal(size=y.shape))
    return (y * w).sum()


def tensor_primitive_checks(seed: int = 0) -> dict:
    """Max relative gradient error per tensor primitive."""
    rng = np.random.default_rng(seed)

    def t(shape, scale=1.0, offset=0.0):
        return Tensor(rng.normal(size=shape) * scale + offset, requires_grad=True)

    results = {}

    a, b = t((3, 4)), t((3, 4))
    w = _weight(rng, (3, 4))
    results["add"] = grad_check(lambda: ((a + b) * w).sum(), [a, b])
    results["sub"] = grad_check(lambda: ((a - b) * w).sum(), [a, b])
    results["mul"] = grad_check(lambda: ((a * b) * w).sum(), [a, b])
    results["neg"] = grad_check(lambda: ((-a) * w).sum(), [a])

    bc_a, bc_b = t((3, 1, 4)), t((5, 1))
    w2 = _weight(rng, (3, 5, 4))
    results["add_broadcast"] = grad_check(
        lambda: ((bc_a + bc_b) * w2).sum(), [bc_a, bc_b])
    results["mul_broadcast"] = grad_check(
        lambda: ((bc_a * bc_b) * w2).sum(), [bc_a, bc_b])

    m1, m2 = t((2, 3, 4)), t((4, 5))
    wm = _weight(rng, (2, 3, 5))
    results["matmul"] = grad_check(lambda: ((m1 @ m2) * wm).sum(), [m1, m2])

    x = t((2, 3, 5))
    wx = _weight(rng, (2, 3, 5))
    results["sum"] = grad_check(lambda: ((x.sum(axis=1, keepdims=True)
                                          * _weight(np.random.default_rng(1), (2, 1, 5))).sum()), [x])
    results["mean"] = grad_check(lambda: ((x.mean(axis=(0, 2), keepdims=True)
                                           * _weight(np.random.default_rng(2), (1, 3, 1))).sum()), [x])
    x_off = t((2, 3, 5), offset=3.0)  # keep |x| away from the kink
    results["abs"] = grad_check(lambda: ((x_off.abs()) * wx).sum(), [x_off])

    pos = t((3, 4), scale=0.2, offset=2.0)
    wp = _weight(rng, (3, 4))
    results["log"] = grad_check(lambda: (T.log(pos) * wp).sum(), [pos], h=1e-6)
    results["sqrt"] = grad_check(lambda: (T.sqrt(pos) * wp).sum(), [pos], h=1e-6)
    results["sin"] = grad_check(lambda: (T.sin(a) * w).sum(), [a])
    results["tanh"] = grad_check(lambda: (T.tanh(a) * w).sum(), [a])
    results["softmax"] = grad_check(lambda: (T.softmax(a, axis=-1) * w).sum(), [a])
    off = t((3, 4), offset=2.0)  # stay off the clamp edge
    results["clamp_min"] = grad_check(lambda: (T.clamp_min(off, 1.0) * w).sum(), [off])
    off2 = t((3, 4), offset=1.0)
    results["leaky_relu"] = grad_check(
        lambda: (T.leaky_relu(off2, 0.1) * w).sum(), [off2])

    results["reshape"] = grad_check(
        lambda: (x.reshape(6, 5) * _weight(np.random.default_rng(3), (6, 5))).sum(), [x])
    results["transpose"] = grad_check(
        lambda: (x.transpose(2, 0, 1) * _weight(np.random.default_rng(4), (5, 2, 3))).sum(), [x])
    results["slice"] = grad_check(
        lambda: (x[:, 1:3, ::2] * _weight(np.random.default_rng(5), (2, 2, 3))).sum(), [x])
    pads3 = ((0, 0), (0, 0), (1, 2))
    results["pad_zero"] = grad_check(
        lambda: (T.pad(x, pads3) * _weight(np.random.default_rng(6), (2, 3, 8))).sum(), [x])
    pads3r = ((0, 0), (0, 0), (2, 1))
    results["pad_reflect"] = grad_check(
        lambda: (T.pad(x, pads3r, mode="reflect")
                 * _weight(np.random.default_rng(7), (2, 3, 8))).sum(), [x])
    results["concat"] = grad_check(
        lambda: (T.concat([x, x * 2.0], axis=1)
                 * _weight(np.random.default_rng(8), (2, 6, 5))).sum(), [x])

    cx, cw, cb = t((2, 4, 9)), t((3, 4, 3)), t((3,))
    wc = _weight(rng, (2, 3, 9))
    results["conv1d"] = grad_check(
        lambda: (T.conv1d(cx, cw, cb, padding="same") * wc).sum(), [cx, cw, cb])
    gw = t((4, 1, 3))
    wg = _weight(rng, (2, 4, 9))
    results["conv1d_depthwise"] = grad_check(
        lambda: (T.conv1d(cx, gw, None, padding="same", groups=4) * wg).sum(),
        [cx, gw])
    sw = t((3, 4, 4))
    ws = _weight(rng, (2, 3, 4))
    results["conv1d_strided"] = grad_check(
        lambda: (T.conv1d(cx, sw, None, stride=2, dilation=1, padding=1) * ws).sum(),
        [cx, sw])
    tw, tb = t((4, 3, 4)), t((3,))
    wt = _weight(rng, (2, 3, 20))
    results["conv_transpose1d"] = grad_check(
        lambda: (T.conv_transpose1d(cx, tw, tb, stride=2, padding=0) * wt).sum(),
        [cx, tw, tb])
    wa = _weight(rng, (2, 4, 4))
    results["avg_pool1d"] = grad_check(
        lambda: (T.avg_pool1d(cx, 4, 2, 1) * wa).sum(), [cx])

    ux = t((3, 7))
    wu = _weight(rng, (7, 3, 3))
    results["unfold1d"] = grad_check(
        lambda: (T.unfold1d(ux, 3, dilation=2) * wu).sum(), [ux])
    fa = t((7, 3, 3))
    wf = _weight(rng, (3, 7))
    results["fold1d"] = grad_check(
        lambda: (T.fold1d(fa, 3, dilation=2) * wf).sum(), [fa])
    fx = t((2, 20))
    wr = _weight(rng, (2, 4, 6))
    results["frame1d"] = grad_check(
        lambda: (T.frame1d(fx, 6, 4) * wr).sum(), [fx])
    return results


def wolo_checks(seed: int = 0) -> dict:
    """Gradient errors for the attention block w.r.t. input and every weight."""
    rng = np.random.default_rng(seed)
    results = {}
    for mode in ("sine", "tanh", "softmax"):
        params = WoloParams.create(6, 3, dilation=2, mode=mode,
                                   rng=np.random.default_rng(seed + 1))
        x = Tensor(rng.normal(size=(6, 11)), requires_grad=True)
        wy = _weight(rng, (6, 11))
        targets = [x, params.u, params.v, params.post_w, params.post_b]
        err = grad_check(lambda: (wolo_block(x, params) * wy).sum(), targets)
        results[f"wolo_block[{mode}]"] = err
    return results


def loss_checks(seed: int = 0) -> dict:
    """Gradient errors for each training loss."""
    rng = np.random.default_rng(seed)

    def outs(shift):
        s = Tensor(rng.normal(size=(2, 6)) + shift, requires_grad=True)
        f1 = Tensor(rng.normal(size=(2, 3, 4)) + shift, requires_grad=True)
        f2 = Tensor(rng.normal(size=(2, 2, 5)), requires_grad=True)
        return [(s, [f1, f2])], [s, f1, f2]

    real, p_real = outs(0.0)
    fake, p_fake = outs(2.5)  # shift keeps |real-fake| off the L1 kink
    results = {
        "adv_d_loss": grad_check(lambda: adv_d_loss(real, fake), p_real + p_fake),
        "adv_g_loss": grad_check(lambda: adv_g_loss(fake), p_fake),
        "feature_matching_loss": grad_check(
            lambda: feature_matching_loss(real, fake), p_real + p_fake),
    }
    base = rng.normal(size=(1536,)) * 0.3
    wr = Tensor(base, requires_grad=True)
    # 2x amplitude keeps every log-mel bin difference near ln 4, far from the
    # L1 kink where finite differences are meaningless
    wf = Tensor(2.0 * base + rng.normal(size=(1536,)) * 0.01, requires_grad=True)
    results["mel_loss"] = grad_check(lambda: mel_loss(wr, wf), [wr, wf], h=1e-6)
    return results


def dsp_checks(seed: int = 0) -> dict:
    """Gradient error of the log-mel analysis w.r.t. the waveform."""
    rng = np.random.default_rng(seed)
    cfg = MelConfig()
    x = Tensor(rng.normal(size=(1800,)) * 0.3, requires_grad=True)
    w = _weight(rng, (cfg.n_mels, -(-1800 // cfg.hop)))
    err = grad_check(lambda: (log_mel_tensor(x, cfg) * w).sum(), [x], h=1e-6)
    return {"log_mel": err}


SUITES = {
    "tensor": tensor_primitive_checks,
    "wolo": wolo_checks,
    "losses": loss_checks,
    "dsp": dsp_checks,
}


def gradcheck_suite(module: str = "all", seed: int = 0) -> dict:
    """Run one named suite or all of them; returns {check_name: max_rel_err}."""
    if module == "all":
        merged = {}
        for fn in SUITES.values():
            merged.update(fn(seed))
        return merged
    if module not in SUITES:
        raise ValueError(f"gradcheck_suite: unknown module {module!r}; "
                         f"choose from {sorted(SUITES)} or 'all'")
    return SUITES[module](seed)


def oracle_check(trials: int = 100, seed: int = 0) -> float:
    """Max |optimized - reference| for the attention op over random instances.

    Instances draw C <= 8, T <= 32, K in {1,3,5}, dilation in {1,2,3}, for
    every activation mode.
    """
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        c = int(rng.integers(1, 9))
        t_len = int(rng.integers(1, 33))
        k = int(rng.choice([1, 3, 5]))
        d = int(rng.integers(1, 4))
        x = Tensor(rng.normal(size=(c, t_len)))
        for mode in ("sine", "tanh", "softmax"):
            params = WoloParams.create(
                c, k, dilation=d, mode=mode,
                rng=np.random.default_rng(rng.integers(0, 2**31)))
            params.u.data *= 30.0  # push activations out of the linear region
            fast = wolo_attention(x, params).data
            slow = wolo_attention_reference(x, params).data
            worst = max(worst, float(np.max(np.abs(fast - slow))))
    return worst
