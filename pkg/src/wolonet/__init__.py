"""Desk-scale neural vocoder: dynamic per-step kernels on a from-scratch autodiff core.

Modules:
  tensor          dense float64 tensors with reverse-mode autodiff
  dsp             WAV I/O, STFT, log-mel analysis, MEL1 feature files
  wolo            dynamic-kernel attention block (sine/tanh/softmax)
  generator       mel -> waveform upsampling network
  discriminators  multi-period + multi-scale critics with feature capture
  losses          least-squares GAN, feature matching, mel reconstruction
  data            synthetic harmonic clips, WAV datasets, segment sampling
  trainer         alternating Adam optimization, checkpoints, exact resume
  evaluate        multiply-add accounting and mel-cepstral distortion
  checks          shared gradient-check and oracle-equivalence suites
  cli             the `wolonet` command
"""

from .dsp import MelConfig, Waveform, load_wav, log_mel, read_mel, save_wav, write_mel
from .data import Dataset, SyntheticConfig, sample_segment, synthetic_clip
from .evaluate import madds_ratio, madds_resblock, madds_wolo, mcd
from .generator import (GeneratorConfig, build_generator, param_count,
                        synthesize)
from .losses import LossWeights
from .tensor import Tensor, grad_check, no_grad
from .trainer import TrainConfig, Trainer, train
from .wolo import WoloParams, wolo_attention, wolo_block

__version__ = "0.1.0"

__all__ = [
    "MelConfig", "Waveform", "load_wav", "log_mel", "read_mel", "save_wav",
    "write_mel", "Dataset", "SyntheticConfig", "sample_segment",
    "synthetic_clip", "madds_ratio", "madds_resblock", "madds_wolo", "mcd",
    "GeneratorConfig", "build_generator", "param_count", "synthesize",
    "LossWeights", "Tensor", "grad_check", "no_grad", "TrainConfig",
    "Trainer", "train", "WoloParams", "wolo_attention", "wolo_block",
    "__version__",
]
