"""Alternating GAN training with Adam, a halving lr schedule, and exact resumability.

Per step: the discriminator updates on the least-squares objective against a
detached generator sample, then the generator updates on adversarial +
feature-matching + mel terms against the freshly updated discriminator.

Determinism contract: given identical configs, seed and dataset, two runs
produce bit-identical loss traces, and a run resumed from a checkpoint
continues exactly where the uninterrupted run would be.  Everything the next
step depends on (parameters, Adam moments, step counters, RNG state) is
serialized in the checkpoint; the companion ``config.json`` captures the
configs needed to rebuild the models.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .checkpoint import CheckpointFormatError, read_tensors, write_tensors
from .data import Dataset, sample_batch
from .discriminators import build_discriminators, discriminate
from .dsp import MelConfig, Waveform, log_mel
from .generator import GeneratorConfig, build_generator
from .losses import LossWeights, total_d_loss, total_g_loss
from .tensor import NonFiniteError, Tensor, no_grad


class TrainingAborted(RuntimeError):
    """Raised when a loss goes NaN; a diagnostic dump is written first."""


@dataclass(frozen=True)
class TrainConfig:
    """Optimization schedule and data plumbing knobs.

    Defaults mirror the full-scale recipe (lr 2e-4 halving on a schedule,
    Adam (0.8, 0.99), batch 16, 8192-sample segments), with the halving
    period and total steps scaled to desk-size runs.
    """

    lr: float = 2e-4
    lr_halve_every: int = 1000
    beta1: float = 0.8
    beta2: float = 0.99
    adam_eps: float = 1e-8
    batch_size: int = 16
    segment_samples: int = 8192
    total_steps: int = 2000
    seed: int = 0
    checkpoint_every: int = 500
    validate_every: int = 100
    n_validation_clips: int = 4
    disc_channel_mult: float = 1.0
    lambda_fm: float = 2.0
    lambda_mel: float = 45.0

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("TrainConfig: batch_size must be >= 1")
        if self.segment_samples % 256 != 0:
            raise ValueError("TrainConfig: segment_samples must divide by hop 256")
        if self.lr_halve_every < 1 or self.total_steps < 1:
            raise ValueError("TrainConfig: schedule fields must be >= 1")

    def weights(self):
        return LossWeights(lambda_fm=self.lambda_fm, lambda_mel=self.lambda_mel)


def lr_at(cfg: TrainConfig, step: int) -> float:
    """Learning rate used for (1-indexed) step: lr0 * 2^-(step // halve_every)."""
    return cfg.lr * 2.0 ** (-(step // cfg.lr_halve_every))


class AdamState:
    """First/second moments plus step and skipped-step counters."""

    def __init__(self, params: dict):
        self.m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.step = 0
        self.skipped = 0


def adam_step(params: dict, state: AdamState, lr: float,
              beta1: float = 0.8, beta2: float = 0.99, eps: float = 1e-8) -> bool:
    """One bias-corrected Adam update in place, reading each param's .grad.

    If any gradient entry is non-finite the whole step is skipped (parameters
    and moments untouched, skip counter incremented).  Returns True if the
    update was applied.
    """
    grads = {}
    for name, p in params.items():
        g = p.grad
        if g is None:
            g = np.zeros_like(p.data)
        if not np.all(np.isfinite(g)):
            state.skipped += 1
            return False
        grads[name] = g
    t = state.step + 1
    c1 = 1.0 - beta1 ** t
    c2 = 1.0 - beta2 ** t
    for name, p in params.items():
        g = grads[name]
        m = state.m[name]
        v = state.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        p.data -= lr * (m / c1) / (np.sqrt(v / c2) + eps)
    state.step = t
    return True


def _zero_grads(params: dict):
    for p in params.values():
        p.grad = None


def _rng_state_tensors(rng: np.random.Generator) -> dict:
    """PCG64 state as exact float64 payloads (u32 limbs, little-endian)."""
    st = rng.bit_generator.state
    if st["bit_generator"] != "PCG64":
        raise ValueError("trainer: RNG must be PCG64")

    def limbs(value):
        return np.array([(value >> (32 * i)) & 0xFFFFFFFF for i in range(4)],
                        dtype=np.float64)

    return {
        "rng.state": limbs(st["state"]["state"]),
        "rng.inc": limbs(st["state"]["inc"]),
        "rng.has_uint32": np.array(float(st["has_uint32"])),
        "rng.uinteger": np.array(float(st["uinteger"])),
    }


def _rng_from_tensors(payload: dict) -> np.random.Generator:
    def unlimbs(arr):
        return sum(int(x) << (32 * i) for i, x in enumerate(arr))

    rng = np.random.default_rng(0)
    rng.bit_generator.state = {
        "bit_generator": "PCG64",
        "state": {"state": unlimbs(payload["rng.state"]),
                  "inc": unlimbs(payload["rng.inc"])},
        "has_uint32": int(payload["rng.has_uint32"]),
        "uinteger": int(payload["rng.uinteger"]),
    }
    return rng


class Trainer:
    """Owns generator, discriminators, optimizer states and the sampling RNG."""

    def __init__(self, cfg: TrainConfig, gen_cfg: GeneratorConfig,
                 dataset: Dataset, mel_cfg: MelConfig = MelConfig(),
                 val_clips=None):
        self.cfg = cfg
        self.gen_cfg = gen_cfg
        self.mel_cfg = mel_cfg
        self.dataset = dataset
        self.val_clips = val_clips
        self.gen = build_generator(gen_cfg, seed=cfg.seed, hop=mel_cfg.hop)
        self.disc = build_discriminators(seed=cfg.seed + 1,
                                         channel_mult=cfg.disc_channel_mult)
        self.g_params = self.gen.named_parameters()
        self.d_params = self.disc.named_parameters()
        self.g_state = AdamState(self.g_params)
        self.d_state = AdamState(self.d_params)
        self.rng = np.random.default_rng(cfg.seed)
        self.step = 0
        self.weights = cfg.weights()

    # -- half-steps ---------------------------------------------------------

    def d_step(self, real: Tensor, fake_detached: Tensor, lr: float) -> float:
        """Discriminator update; returns the scalar loss value."""
        d_real = discriminate(self.disc, real)
        d_fake = discriminate(self.disc, fake_detached)
        loss = total_d_loss(d_real, d_fake)
        _zero_grads(self.d_params)
        loss.backward()
        adam_step(self.d_params, self.d_state, lr,
                  self.cfg.beta1, self.cfg.beta2, self.cfg.adam_eps)
        return loss.item()

    def g_step(self, real: Tensor, fake: Tensor, lr: float):
        """Generator update against the current discriminator.

        Returns (total, parts) with parts holding 'adv', 'fm', 'mel' floats.
        """
        with no_grad():
            d_real = discriminate(self.disc, real)
        d_fake = discriminate(self.disc, fake)
        loss, parts = total_g_loss(
            d_fake, d_real,
            real.reshape(real.shape[0], real.shape[-1]),
            fake.reshape(fake.shape[0], fake.shape[-1]),
            self.weights, self.mel_cfg)
        _zero_grads(self.g_params)
        loss.backward()
        adam_step(self.g_params, self.g_state, lr,
                  self.cfg.beta1, self.cfg.beta2, self.cfg.adam_eps)
        return loss.item(), parts

    def train_step(self, mels: np.ndarray, waves: np.ndarray):
        """One full D-then-G step on a prepared batch; returns the log row."""
        self.step += 1
        lr = lr_at(self.cfg, self.step)
        real = Tensor(waves[:, None, :])
        fake = self.gen.forward(Tensor(mels))
        loss_d = self.d_step(real, fake.detach(), lr)
        loss_g, parts = self.g_step(real, fake, lr)
        return {"step": self.step, "loss_d": loss_d, "loss_g": loss_g,
                "loss_mel": parts["mel"], "loss_fm": parts["fm"], "lr": lr}

    # -- validation ---------------------------------------------------------

    def validation_clips(self):
        """Hop-trimmed clips used for the periodic mel-L1 check.

        A held-out set passed at construction is preferred; without one, the
        tail of the training dataset serves as a proxy.
        """
        n = self.cfg.n_validation_clips
        hop = self.mel_cfg.hop
        source = self.val_clips if self.val_clips is not None \
            else self.dataset.clips[-n:]
        return [c[: (c.size // hop) * hop] for c in source[:n]]

    def validate(self) -> float:
        """Mean mel-L1 between each validation clip and its resynthesis."""
        total = 0.0
        clips = self.validation_clips()
        for clip in clips:
            mel = log_mel(Waveform(clip, self.dataset.sample_rate), self.mel_cfg)
            with no_grad():
                fake = self.gen.forward(mel.detach())
            fake_mel = log_mel(Waveform(np.clip(fake.data[0], -1.0, 1.0),
                                        self.dataset.sample_rate), self.mel_cfg)
            total += float(np.mean(np.abs(mel.data - fake_mel.data)))
        return total / len(clips)

    # -- checkpointing ------------------------------------------------------

    def state_tensors(self) -> dict:
        out = {}
        for name, p in self.g_params.items():
            out[f"gen.{name}"] = p.data
        for name, p in self.d_params.items():
            out[f"disc.{name}"] = p.data
        for tag, state in (("adam_g", self.g_state), ("adam_d", self.d_state)):
            for name, arr in state.m.items():
                out[f"{tag}.m.{name}"] = arr
            for name, arr in state.v.items():
                out[f"{tag}.v.{name}"] = arr
            out[f"{tag}.step"] = np.array(float(state.step))
            out[f"{tag}.skipped"] = np.array(float(state.skipped))
        out["meta.step"] = np.array(float(self.step))
        out.update(_rng_state_tensors(self.rng))
        return out

    def save_checkpoint(self, path):
        write_tensors(path, self.state_tensors())
        sidecar = Path(path).with_name("config.json")
        sidecar.write_text(json.dumps({
            "train": dataclasses.asdict(self.cfg),
            "generator": dataclasses.asdict(self.gen_cfg),
            "mel": dataclasses.asdict(self.mel_cfg),
        }, indent=2))

    def load_checkpoint(self, path):
        """Restore params, moments, counters and RNG; all-or-nothing."""
        payload = read_tensors(path)
        param_plan, moment_plan, counter_plan = [], [], []
        try:
            for prefix, params in (("gen", self.g_params), ("disc", self.d_params)):
                for name, p in params.items():
                    arr = payload[f"{prefix}.{name}"]
                    if arr.shape != p.data.shape:
                        raise CheckpointFormatError(
                            f"{path}: shape {arr.shape} for {prefix}.{name}, "
                            f"expected {p.data.shape}")
                    param_plan.append((p, arr))
            for tag, state in (("adam_g", self.g_state), ("adam_d", self.d_state)):
                for name in state.m:
                    moment_plan.append(
                        (state, name,
                         payload[f"{tag}.m.{name}"], payload[f"{tag}.v.{name}"]))
                counter_plan.append(
                    (state, int(payload[f"{tag}.step"]),
                     int(payload[f"{tag}.skipped"])))
            step = int(payload["meta.step"])
            rng = _rng_from_tensors(payload)
        except KeyError as exc:
            raise CheckpointFormatError(f"{path}: missing entry {exc}") from None
        for p, arr in param_plan:
            p.data = arr
        for state, name, m, v in moment_plan:
            state.m[name] = m
            state.v[name] = v
        for state, adam_t, skipped in counter_plan:
            state.step = adam_t
            state.skipped = skipped
        self.step = step
        self.rng = rng


def train(cfg: TrainConfig, gen_cfg: GeneratorConfig, dataset: Dataset,
          out_dir, mel_cfg: MelConfig = MelConfig(), val_clips=None,
          resume=None, progress=None) -> Trainer:
    """Run the full loop, writing train_log.csv, validation.csv and checkpoints.

    ``resume`` names a checkpoint file to restore before continuing; steps
    already completed are not rerun.  ``progress`` is an optional callable
    receiving each log row (used by the CLI for console output).
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    trainer = Trainer(cfg, gen_cfg, dataset, mel_cfg, val_clips=val_clips)
    log_path = out_dir / "train_log.csv"
    val_path = out_dir / "validation.csv"
    if resume is not None:
        trainer.load_checkpoint(resume)
    if resume is None or not log_path.exists():
        log_path.write_text("step,loss_d,loss_g,loss_mel,loss_fm,lr\n")
    if resume is None or not val_path.exists():
        val_path.write_text("step,val_mel_l1\n")
    with open(log_path, "a") as log_f, open(val_path, "a") as val_f:
        while trainer.step < cfg.total_steps:
            mels, waves = sample_batch(dataset, trainer.rng, cfg.batch_size,
                                       cfg.segment_samples, mel_cfg)
            try:
                row = trainer.train_step(mels, waves)
            except NonFiniteError as exc:
                # an op caught the blow-up mid-step; same failure class as a
                # non-finite loss value, so dump the batch and abort
                dump = out_dir / f"nan_dump_step{trainer.step}.npz"
                np.savez(dump, mels=mels, waves=waves, step=trainer.step)
                raise TrainingAborted(
                    f"non-finite values at step {trainer.step} ({exc}); "
                    f"batch dumped to {dump}") from exc
            if not all(np.isfinite(v) for v in row.values()):
                dump = out_dir / f"nan_dump_step{row['step']}.npz"
                np.savez(dump, mels=mels, waves=waves,
                         step=row["step"],
                         loss_d=row["loss_d"], loss_g=row["loss_g"])
                raise TrainingAborted(
                    f"non-finite loss at step {row['step']}; batch dumped to {dump}")
            log_f.write("%d,%.10g,%.10g,%.10g,%.10g,%.10g\n" % (
                row["step"], row["loss_d"], row["loss_g"],
                row["loss_mel"], row["loss_fm"], row["lr"]))
            log_f.flush()
            if progress is not None:
                progress(row)
            if trainer.step % cfg.validate_every == 0:
                val = trainer.validate()
                val_f.write("%d,%.10g\n" % (trainer.step, val))
                val_f.flush()
            if trainer.step % cfg.checkpoint_every == 0 \
                    or trainer.step == cfg.total_steps:
                trainer.save_checkpoint(
                    out_dir / f"checkpoint_{trainer.step:06d}.ckpt")
    return trainer
