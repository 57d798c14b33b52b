"""GAN training losses: least-squares adversarial terms, feature matching, mel reconstruction.

All functions take `Tensor` inputs and return scalar `Tensor`s, differentiable
w.r.t. every tensor argument.  Discriminator outputs are passed as the list of
(score, feature_maps) pairs produced by `discriminators.discriminate`.

Conventions:
  - Least-squares GAN: real target 1, fake target 0, each score map reduced by
    mean, then summed over discriminators.
  - Feature matching: mean absolute difference per feature map, summed over all
    maps of all discriminators.  Score maps are not feature maps and are excluded.
  - Mel loss: mean absolute difference between log-mel spectrograms of the two
    waveforms, computed with the shared analysis settings.
"""

from __future__ import annotations

from dataclasses import dataclass

from .dsp import MelConfig, log_mel_tensor
from .tensor import ShapeMismatchError, Tensor

DiscOutputs = list  # list[tuple[Tensor, list[Tensor]]]


@dataclass(frozen=True)
class LossWeights:
    """Scalar weights for the composite generator loss."""

    lambda_fm: float = 2.0
    lambda_mel: float = 45.0


def _check_outputs(outs, name):
    if not outs:
        raise ShapeMismatchError(name, (), "empty discriminator output list")


def adv_d_loss(real_outs: DiscOutputs, fake_outs: DiscOutputs) -> Tensor:
    """Discriminator objective: sum over discriminators of
    mean[(score_real - 1)^2] + mean[score_fake^2]."""
    _check_outputs(real_outs, "adv_d_loss")
    if len(real_outs) != len(fake_outs):
        raise ShapeMismatchError(
            "adv_d_loss",
            (len(real_outs), len(fake_outs)),
            "real/fake discriminator output counts differ",
        )
    total = None
    for (s_real, _), (s_fake, _) in zip(real_outs, fake_outs):
        term = ((s_real - 1.0) * (s_real - 1.0)).mean() + (s_fake * s_fake).mean()
        total = term if total is None else total + term
    return total


def adv_g_loss(fake_outs: DiscOutputs) -> Tensor:
    """Generator adversarial objective: sum over discriminators of
    mean[(1 - score_fake)^2]."""
    _check_outputs(fake_outs, "adv_g_loss")
    total = None
    for s_fake, _ in fake_outs:
        term = ((s_fake - 1.0) * (s_fake - 1.0)).mean()
        total = term if total is None else total + term
    return total


def feature_matching_loss(real_outs: DiscOutputs, fake_outs: DiscOutputs) -> Tensor:
    """Sum over discriminators and layers of mean |real_feat - fake_feat|.

    Differentiable w.r.t. both branches; the trainer computes the real branch
    without gradient tracking, which is what makes it a constant there.
    """
    _check_outputs(real_outs, "feature_matching_loss")
    if len(real_outs) != len(fake_outs):
        raise ShapeMismatchError(
            "feature_matching_loss",
            (len(real_outs), len(fake_outs)),
            "real/fake discriminator output counts differ",
        )
    total = None
    for (_, feats_real), (_, feats_fake) in zip(real_outs, fake_outs):
        if len(feats_real) != len(feats_fake):
            raise ShapeMismatchError(
                "feature_matching_loss",
                (len(feats_real), len(feats_fake)),
                "feature map counts differ between real and fake branches",
            )
        for fr, ff in zip(feats_real, feats_fake):
            if fr.shape != ff.shape:
                raise ShapeMismatchError(
                    "feature_matching_loss", (fr.shape, ff.shape),
                    "feature map shapes differ",
                )
            term = (fr - ff).abs().mean()
            total = term if total is None else total + term
    return total


def mel_loss(real_wave: Tensor, fake_wave: Tensor, cfg: MelConfig = MelConfig()) -> Tensor:
    """Mean absolute difference between log-mel spectrograms of two waveforms.

    Both arguments are (..., T) waveform tensors with matching shapes.
    """
    if real_wave.shape != fake_wave.shape:
        raise ShapeMismatchError(
            "mel_loss", (real_wave.shape, fake_wave.shape), "waveform shapes differ"
        )
    mel_real = log_mel_tensor(real_wave, cfg)
    mel_fake = log_mel_tensor(fake_wave, cfg)
    return (mel_real - mel_fake).abs().mean()


def total_d_loss(real_outs: DiscOutputs, fake_outs: DiscOutputs) -> Tensor:
    """Full discriminator loss (adversarial only)."""
    return adv_d_loss(real_outs, fake_outs)


def total_g_loss(
    fake_outs: DiscOutputs,
    real_outs: DiscOutputs,
    real_wave: Tensor,
    fake_wave: Tensor,
    weights: LossWeights = LossWeights(),
    cfg: MelConfig = MelConfig(),
):
    """Composite generator loss and its components.

    Returns (total, parts) where parts is a dict with float values for
    'adv', 'fm', 'mel'.
    """
    adv = adv_g_loss(fake_outs)
    fm = feature_matching_loss(real_outs, fake_outs)
    mel = mel_loss(real_wave, fake_wave, cfg)
    total = adv + weights.lambda_fm * fm + weights.lambda_mel * mel
    parts = {"adv": adv.item(), "fm": fm.item(), "mel": mel.item()}
    return total, parts
