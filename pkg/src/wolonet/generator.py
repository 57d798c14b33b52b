"""Mel-conditioned upsampling generator built from WOLO blocks.

A kernel-7 convolution lifts the mel input to ``base_channels``, each stage
then upsamples with a transposed convolution (channels halve) and averages
the outputs of its WOLO blocks (one per dilation), and a kernel-7
convolution plus tanh produces the waveform. The total upsampling factor
must equal the mel hop so frame counts map exactly to sample counts.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dsp import Waveform
from .tensor import (
    Tensor, ShapeMismatchError, conv1d, conv_transpose1d, leaky_relu,
    no_grad, tanh,
)
from .wolo import (
    ACTIVATION_MODES, LEAKY_SLOPE, WoloParams, dynamic_kernels, wolo_block,
)

__all__ = ["GeneratorConfig", "Generator", "build_generator", "synthesize",
           "param_count", "collect_dynamic_kernels"]


@dataclass(frozen=True)
class GeneratorConfig:
    """Architecture hyperparameters for the generator."""

    mel_bins: int = 80
    base_channels: int = 896
    upsample_strides: tuple = (8, 8, 2, 2)
    upsample_kernels: tuple = None
    wolo_per_stage: int = 3
    wolo_dilations: tuple = (1, 3, 5)
    wolo_kernel: int = 5
    activation_mode: str = "sine"
    pre_kernel: int = 7
    post_kernel: int = 7

    def __post_init__(self):
        object.__setattr__(self, "upsample_strides",
                           tuple(self.upsample_strides))
        kernels = (tuple(self.upsample_kernels) if self.upsample_kernels
                   else tuple(2 * s for s in self.upsample_strides))
        object.__setattr__(self, "upsample_kernels", kernels)
        object.__setattr__(self, "wolo_dilations", tuple(self.wolo_dilations))
        if len(self.upsample_kernels) != len(self.upsample_strides):
            raise ValueError("GeneratorConfig: one upsample kernel per stride")
        if len(self.wolo_dilations) != self.wolo_per_stage:
            raise ValueError(
                "GeneratorConfig: need one dilation per WOLO block, got "
                f"{self.wolo_dilations} for wolo_per_stage="
                f"{self.wolo_per_stage}")
        if self.wolo_kernel % 2 == 0 or self.pre_kernel % 2 == 0 \
                or self.post_kernel % 2 == 0:
            raise ValueError("GeneratorConfig: kernel sizes must be odd")
        n_stages = len(self.upsample_strides)
        if self.base_channels % (1 << n_stages):
            raise ValueError(
                f"GeneratorConfig: base_channels={self.base_channels} must "
                f"be divisible by 2^{n_stages} for per-stage halving")
        if self.activation_mode not in ACTIVATION_MODES:
            raise ValueError(
                f"GeneratorConfig: unknown activation mode "
                f"{self.activation_mode!r}")

    def stage_channels(self):
        """Output channels after each upsampling stage (halving rule)."""
        c = self.base_channels
        out = []
        for _ in self.upsample_strides:
            c //= 2
            out.append(c)
        return out

    def upsample_factor(self):
        factor = 1
        for s in self.upsample_strides:
            factor *= s
        return factor


@dataclass
class _Stage:
    up_w: Tensor
    up_b: Tensor
    blocks: list


@dataclass
class Generator:
    """Assembled generator: parameters plus the forward computation."""

    cfg: GeneratorConfig
    pre_w: Tensor
    pre_b: Tensor
    stages: list
    out_w: Tensor
    out_b: Tensor

    def forward(self, mel, tap=None):
        """Map (..., mel_bins, F) features to a (..., 1, F*hop) waveform.

        ``tap(stage_idx, block_idx, params, x)`` is called with each block's
        input right before the block runs (for kernel inspection).
        """
        if not isinstance(mel, Tensor):
            mel = Tensor(mel)
        if mel.ndim < 2 or mel.shape[-2] != self.cfg.mel_bins:
            raise ShapeMismatchError(
                "generator", [mel.shape],
                f"expected (..., {self.cfg.mel_bins}, F)")
        x = conv1d(mel, self.pre_w, self.pre_b, padding="same")
        for i, (stage, stride) in enumerate(
                zip(self.stages, self.cfg.upsample_strides)):
            x = leaky_relu(x, LEAKY_SLOPE)
            x = conv_transpose1d(
                x, stage.up_w, stage.up_b, stride=stride,
                padding=stride // 2 + stride % 2, output_padding=stride % 2)
            acc = None
            for j, blk in enumerate(stage.blocks):
                if tap is not None:
                    tap(i, j, blk, x)
                y = wolo_block(x, blk)
                acc = y if acc is None else acc + y
            x = acc / len(stage.blocks)
        x = leaky_relu(x, LEAKY_SLOPE)
        x = conv1d(x, self.out_w, self.out_b, padding="same")
        return tanh(x)

    def named_parameters(self):
        """Stable hierarchical name -> Tensor mapping (stages 1-indexed)."""
        params = {"pre.w": self.pre_w, "pre.b": self.pre_b}
        for i, stage in enumerate(self.stages, 1):
            params[f"stage{i}.up.w"] = stage.up_w
            params[f"stage{i}.up.b"] = stage.up_b
            for j, blk in enumerate(stage.blocks, 1):
                for name, tensor in blk.tensors().items():
                    params[f"stage{i}.block{j}.{name}"] = tensor
        params["out.w"] = self.out_w
        params["out.b"] = self.out_b
        return params


def build_generator(cfg, seed, hop=256):
    """Construct a generator with seed-deterministic initialization.

    Convolution weights draw from Normal(0, 0.01) with zero biases; WOLO
    blocks use their own init. The product of upsample strides must equal
    ``hop`` or mel frames would not map to an integer sample count.
    """
    if cfg.upsample_factor() != hop:
        raise ValueError(
            f"build_generator: upsample factor {cfg.upsample_factor()} != "
            f"hop {hop}")
    rng = np.random.default_rng(seed)

    def conv_param(c_out, c_in, k):
        return (Tensor(rng.normal(0.0, 0.01, (c_out, c_in, k)),
                       requires_grad=True),
                Tensor(np.zeros(c_out), requires_grad=True))

    pre_w, pre_b = conv_param(cfg.base_channels, cfg.mel_bins, cfg.pre_kernel)
    stages = []
    c_in = cfg.base_channels
    for c_out, kernel in zip(cfg.stage_channels(), cfg.upsample_kernels):
        up_w = Tensor(rng.normal(0.0, 0.01, (c_in, c_out, kernel)),
                      requires_grad=True)
        up_b = Tensor(np.zeros(c_out), requires_grad=True)
        blocks = [WoloParams.create(c_out, cfg.wolo_kernel, d,
                                    cfg.activation_mode, rng)
                  for d in cfg.wolo_dilations]
        stages.append(_Stage(up_w=up_w, up_b=up_b, blocks=blocks))
        c_in = c_out
    out_w, out_b = conv_param(1, c_in, cfg.post_kernel)
    return Generator(cfg=cfg, pre_w=pre_w, pre_b=pre_b, stages=stages,
                     out_w=out_w, out_b=out_b)


def synthesize(generator, mel, sample_rate=22050):
    """Run the generator on an (mel_bins, F) feature matrix -> Waveform."""
    mel = np.asarray(mel.data if isinstance(mel, Tensor) else mel,
                     dtype=np.float64)
    if mel.ndim != 2 or mel.shape[0] != generator.cfg.mel_bins:
        raise ShapeMismatchError(
            "synthesize", [mel.shape],
            f"expected ({generator.cfg.mel_bins}, F)")
    with no_grad():
        out = generator.forward(Tensor(mel))
    return Waveform(out.data[0], sample_rate)


def param_count(generator):
    """Exact number of learnable scalars in the generator."""
    return sum(t.size for t in generator.named_parameters().values())


def collect_dynamic_kernels(generator, mel):
    """Activated kernels each block produces while synthesizing a mel.

    Returns a list of (stage_idx, block_idx, w, b) with w (..., T, K, K) and
    b (..., T, K) as float64 arrays, mirroring what the attention op applied
    at every step of the forward pass.
    """
    collected = []

    def tap(i, j, params, x):
        kernels = dynamic_kernels(leaky_relu(x, LEAKY_SLOPE), params)
        collected.append((i, j, kernels.w.data, kernels.b.data))

    with no_grad():
        generator.forward(mel, tap=tap)
    return collected
