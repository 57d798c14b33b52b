"""Complexity accounting (multiply-add counts) and the mel-cepstral distortion metric.

The closed forms model one dynamic-attention block against one static
convolutional residual block at equal channel width C and kernel size K:

  attention block: kernel prediction (K^2+K)C + application (K^2+K)C
                   + pointwise mixing C^2 + C      = 2(K^2+K)C + C^2 + C
  static block:    K*C^2 (the widely quoted figure omits the +C bias term,
                   which ``madds_resblock_biased`` adds back)

``empirical_madds`` validates the attention closed form by running the real
ops under the instrumented counter at T=1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dsp import MelConfig, Waveform, log_mel
from .tensor import ShapeMismatchError, Tensor, conv1d, count_ops, no_grad
from .wolo import WoloParams, wolo_attention

MCD_ORDER = 13  # cepstral coefficients c1..c13; c0 (frame energy) excluded
_DB_FACTOR = 10.0 / np.log(10.0)


def _check_ck(c, k, op):
    if c < 1 or k < 1:
        raise ValueError(f"{op}: C and K must be >= 1, got C={c} K={k}")


def madds_wolo(c: int, k: int) -> int:
    """Multiply-adds of one dynamic-attention block per time step."""
    _check_ck(c, k, "madds_wolo")
    return 2 * (k * k + k) * c + c * c + c


def madds_resblock(c: int, k: int) -> int:
    """Multiply-adds of one static conv block per time step (no bias term)."""
    _check_ck(c, k, "madds_resblock")
    return k * c * c


def madds_resblock_biased(c: int, k: int) -> int:
    """The same count with the bias add included."""
    return madds_resblock(c, k) + c


def madds_ratio(c: int, k: int) -> float:
    """Static-block cost over dynamic-block cost."""
    return madds_resblock(c, k) / madds_wolo(c, k)


@dataclass(frozen=True)
class MAddsReport:
    channels: int
    kernel_size: int
    wolo_madds: int
    resblock_madds: int
    ratio: float

    def __post_init__(self):
        if self.wolo_madds <= 0 or self.resblock_madds <= 0:
            raise ValueError("MAddsReport: counts must be positive")


def madds_report(c: int, k: int) -> MAddsReport:
    return MAddsReport(c, k, madds_wolo(c, k), madds_resblock(c, k),
                       madds_ratio(c, k))


def report_table(channels=(8, 64, 512), kernels=(1, 3, 5)) -> str:
    """CSV table of counts over a (C, K) grid."""
    lines = ["C,K,wolo_madds,resblock_madds,ratio"]
    for c in channels:
        for k in kernels:
            r = madds_report(c, k)
            lines.append(f"{c},{k},{r.wolo_madds},{r.resblock_madds},{r.ratio:.6g}")
    return "\n".join(lines) + "\n"


def empirical_madds(c: int, k: int, mode: str = "sine", seed: int = 0) -> int:
    """Count multiply-adds actually executed by one attention block at T=1.

    Runs kernel prediction + application + the pointwise mix on a random
    (C, 1) input under the instrumented counter, then asserts the count
    matches the closed form within a bookkeeping slack of 3K^2+3K+2C
    (bias adds and activation conventions differ from the idealized model).
    """
    _check_ck(c, k, "empirical_madds")
    rng = np.random.default_rng(seed)
    params = WoloParams.create(c, k, dilation=1, mode=mode, rng=rng)
    x = Tensor(rng.normal(size=(c, 1)))
    with no_grad(), count_ops() as counter:
        y = wolo_attention(x, params)
        conv1d(y, params.post_w.reshape(c, c, 1), params.post_b)
    expected = madds_wolo(c, k)
    slack = 3 * k * k + 3 * k + 2 * c
    if abs(counter.macs - expected) > slack:
        raise AssertionError(
            f"empirical_madds: counted {counter.macs}, closed form {expected}, "
            f"difference exceeds slack {slack}")
    return counter.macs


def mel_cepstra(logmel: np.ndarray, order: int = MCD_ORDER) -> np.ndarray:
    """c1..c_order per frame via DCT-II of each (n_mels,) log-mel column.

    Input (n_mels, F), output (order, F).  c0 is computed and discarded.
    """
    logmel = np.asarray(logmel, dtype=np.float64)
    if logmel.ndim != 2:
        raise ShapeMismatchError("mel_cepstra", [logmel.shape],
                                 "expected (n_mels, frames)")
    m = logmel.shape[0]
    if order >= m:
        raise ValueError(f"mel_cepstra: order {order} needs more than {m} bands")
    n = np.arange(m, dtype=np.float64)
    i = np.arange(1, order + 1, dtype=np.float64)
    basis = np.cos(np.pi * np.outer(i, n + 0.5) / m)
    return basis @ logmel


def mcd_from_cepstra(c_ref: np.ndarray, c_syn: np.ndarray) -> float:
    """Frame-averaged (10/ln10) * sqrt(2 * sum_i (c_i - c'_i)^2), in dB."""
    c_ref = np.asarray(c_ref, dtype=np.float64)
    c_syn = np.asarray(c_syn, dtype=np.float64)
    if c_ref.shape != c_syn.shape:
        raise ShapeMismatchError("mcd_from_cepstra", [c_ref.shape, c_syn.shape],
                                 "cepstra shapes differ")
    diff = c_ref - c_syn
    per_frame = _DB_FACTOR * np.sqrt(2.0 * np.sum(diff * diff, axis=0))
    return float(np.mean(per_frame))


def mcd(ref: Waveform, syn: Waveform, cfg: MelConfig = MelConfig()) -> float:
    """Mel-cepstral distortion between two time-aligned waveforms, in dB."""
    if len(ref) != len(syn):
        raise ShapeMismatchError("mcd", [(len(ref),), (len(syn),)],
                                 "waveform lengths differ")
    if ref.sample_rate != syn.sample_rate:
        raise ValueError(
            f"mcd: sample rates differ ({ref.sample_rate} vs {syn.sample_rate})")
    c_ref = mel_cepstra(log_mel(ref, cfg).data)
    c_syn = mel_cepstra(log_mel(syn, cfg).data)
    return mcd_from_cepstra(c_ref, c_syn)
