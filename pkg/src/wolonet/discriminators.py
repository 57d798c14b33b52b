"""Multi-period and multi-scale waveform discriminators with feature capture.

The bank holds five period discriminators (periods 2, 3, 5, 7, 11) that view
the waveform as a (period x frames) map processed by stacked strided
convolutions, and three scale discriminators (raw, 2x average-pooled, 4x
average-pooled) of grouped wide convolutions. Every intermediate activation
map is captured for the feature-matching loss; the final convolution of each
stack is its score map.

Layer tables (full scale, ``channel_mult`` = 1; channels scale linearly and
round to at least 1):

  period stack:  (ch, k, stride) = (32,5,3) (128,5,3) (512,5,3) (1024,5,3)
                 (1024,5,1), then score conv (1,3,1); all kernels span the
                 frame axis only, padding k//2, leaky slope 0.1.
  scale stack:   (ch, k, stride, groups) = (128,15,1,1) (128,41,2,4)
                 (256,41,2,16) (512,41,4,16) (1024,41,4,16) (1024,41,1,16)
                 (1024,5,1,1), then score conv (1,3,1,1); padding k//2,
                 leaky slope 0.1. Pooling between scales: average kernel 4,
                 stride 2, padding 2.

Weight norm is deliberately omitted (plain weights); weights initialize
uniform +-1/sqrt(fan_in) so activations keep O(1) scale through the stacks.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import (
    Tensor, ShapeMismatchError, avg_pool1d, conv1d, leaky_relu, pad, reshape,
    transpose,
)
from .wolo import LEAKY_SLOPE

__all__ = ["PERIODS", "PERIOD_LAYERS", "SCALE_LAYERS", "N_SCALES",
           "DiscriminatorBank", "build_discriminators", "discriminate"]

PERIODS = (2, 3, 5, 7, 11)
PERIOD_LAYERS = ((32, 5, 3), (128, 5, 3), (512, 5, 3), (1024, 5, 3),
                 (1024, 5, 1))
PERIOD_SCORE_KERNEL = 3
SCALE_LAYERS = ((128, 15, 1, 1), (128, 41, 2, 4), (256, 41, 2, 16),
                (512, 41, 4, 16), (1024, 41, 4, 16), (1024, 41, 1, 16),
                (1024, 5, 1, 1))
SCALE_SCORE_KERNEL = 3
N_SCALES = 3
POOL = (4, 2, 2)


@dataclass
class _ConvLayer:
    w: Tensor
    b: Tensor
    stride: int
    groups: int


@dataclass
class _Stack:
    """One sub-discriminator: conv layers then a stride-1 score conv."""

    layers: list
    score: _ConvLayer


@dataclass
class DiscriminatorBank:
    """All eight sub-discriminators plus their scaled channel multiplier."""

    mpd: list
    msd: list
    channel_mult: float

    def named_parameters(self):
        params = {}
        for period, stack in zip(PERIODS, self.mpd):
            base = f"mpd.p{period}"
            for i, layer in enumerate(stack.layers, 1):
                params[f"{base}.conv{i}.w"] = layer.w
                params[f"{base}.conv{i}.b"] = layer.b
            params[f"{base}.out.w"] = stack.score.w
            params[f"{base}.out.b"] = stack.score.b
        for i, stack in enumerate(self.msd, 1):
            base = f"msd.s{i}"
            for j, layer in enumerate(stack.layers, 1):
                params[f"{base}.conv{j}.w"] = layer.w
                params[f"{base}.conv{j}.b"] = layer.b
            params[f"{base}.out.w"] = stack.score.w
            params[f"{base}.out.b"] = stack.score.b
        return params


def _scaled(channels, mult):
    return max(1, int(round(channels * mult)))


def _conv_layer(rng, c_out, c_in, k, stride, groups):
    if c_in % groups or c_out % groups:
        raise ValueError(
            f"discriminator layer: groups={groups} does not divide channels "
            f"{c_in}->{c_out}; pick a channel_mult that keeps them divisible")
    bound = 1.0 / np.sqrt((c_in // groups) * k)
    w = Tensor(rng.uniform(-bound, bound, (c_out, c_in // groups, k)),
               requires_grad=True)
    b = Tensor(np.zeros(c_out), requires_grad=True)
    return _ConvLayer(w=w, b=b, stride=stride, groups=groups)


def build_discriminators(seed, channel_mult=1.0):
    """Deterministically initialize the full bank at a given width."""
    if channel_mult <= 0:
        raise ValueError("build_discriminators: channel_mult must be > 0")
    rng = np.random.default_rng(seed)
    mpd = []
    for _ in PERIODS:
        layers = []
        c_in = 1
        for c_out, k, stride in PERIOD_LAYERS:
            c_out = _scaled(c_out, channel_mult)
            layers.append(_conv_layer(rng, c_out, c_in, k, stride, 1))
            c_in = c_out
        score = _conv_layer(rng, 1, c_in, PERIOD_SCORE_KERNEL, 1, 1)
        mpd.append(_Stack(layers=layers, score=score))
    msd = []
    for _ in range(N_SCALES):
        layers = []
        c_in = 1
        for c_out, k, stride, groups in SCALE_LAYERS:
            c_out = _scaled(c_out, channel_mult)
            layers.append(_conv_layer(rng, c_out, c_in, k, stride,
                                      groups if c_in > 1 else 1))
            c_in = c_out
        score = _conv_layer(rng, 1, c_in, SCALE_SCORE_KERNEL, 1, 1)
        msd.append(_Stack(layers=layers, score=score))
    return DiscriminatorBank(mpd=mpd, msd=msd, channel_mult=channel_mult)


def _period_forward(stack, x, period):
    """Score and features of one period discriminator on (B, 1, T) input.

    The waveform is reflect-padded to a multiple of the period and viewed as
    a (frames x period) map; every kernel spans the frame axis only, so each
    period column runs through the stack as an independent batch item.
    Captured maps are reshaped to (B, C, frames, period).
    """
    b_n, _, t_n = x.shape
    n_pad = (-t_n) % period
    if n_pad:
        x = pad(x, [(0, 0), (0, 0), (0, n_pad)], mode="reflect")
    frames = (t_n + n_pad) // period
    x = reshape(x, (b_n, 1, frames, period))
    x = transpose(x, (0, 3, 1, 2))
    h = reshape(x, (b_n * period, 1, frames))

    def capture(y):
        c_n, f_n = y.shape[-2], y.shape[-1]
        y = reshape(y, (b_n, period, c_n, f_n))
        return transpose(y, (0, 2, 3, 1))

    feats = []
    for layer in stack.layers:
        h = conv1d(h, layer.w, layer.b, stride=layer.stride,
                   padding=layer.w.shape[-1] // 2)
        h = leaky_relu(h, LEAKY_SLOPE)
        feats.append(capture(h))
    score = conv1d(h, stack.score.w, stack.score.b,
                   padding=stack.score.w.shape[-1] // 2)
    return capture(score), feats


def _scale_forward(stack, x):
    """Score and features of one scale discriminator on (B, 1, T) input."""
    h = x
    feats = []
    for layer in stack.layers:
        h = conv1d(h, layer.w, layer.b, stride=layer.stride,
                   groups=layer.groups, padding=layer.w.shape[-1] // 2)
        h = leaky_relu(h, LEAKY_SLOPE)
        feats.append(h)
    score = conv1d(h, stack.score.w, stack.score.b,
                   padding=stack.score.w.shape[-1] // 2)
    return score, feats


def discriminate(bank, x):
    """Run every sub-discriminator on a waveform batch.

    ``x`` is (B, 1, T), (1, T) or (T,) with T >= 11. Returns a list of
    (score_map, feature_maps) pairs ordered period 2, 3, 5, 7, 11, then
    scales raw, 2x-pooled, 4x-pooled; feature maps run outermost layer
    first and exclude the score map.
    """
    if not isinstance(x, Tensor):
        x = Tensor(x)
    if x.ndim == 1:
        x = reshape(x, (1, 1, x.shape[0]))
    elif x.ndim == 2:
        x = reshape(x, (1,) + x.shape)
    if x.ndim != 3 or x.shape[1] != 1:
        raise ShapeMismatchError("discriminate", [x.shape], "need (B, 1, T)")
    if x.shape[-1] < max(PERIODS):
        raise ShapeMismatchError(
            "discriminate", [x.shape],
            f"input shorter than max period {max(PERIODS)}")
    out = []
    for period, stack in zip(PERIODS, bank.mpd):
        out.append(_period_forward(stack, x, period))
    scaled = x
    for i, stack in enumerate(bank.msd):
        if i:
            scaled = avg_pool1d(scaled, POOL[0], POOL[1], POOL[2])
        out.append(_scale_forward(stack, scaled))
    return out
