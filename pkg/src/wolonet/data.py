"""Training data: synthetic harmonic clips, WAV-directory datasets, segment sampling.

The bundled synthetic generator produces 1-second 22050 Hz clips made of a
random fundamental with 3-8 harmonics under slow amplitude modulation plus a
low level of white noise, peak-normalized with headroom.  This keeps the
training and acceptance workflows self-contained: no external corpus needed.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dsp import MelConfig, Waveform, load_wav, log_mel, save_wav


class DataError(ValueError):
    """Raised for unusable datasets (empty, or no clip long enough)."""


@dataclass(frozen=True)
class SyntheticConfig:
    """Knobs for the bundled harmonic-clip generator."""

    sample_rate: int = 22050
    duration_s: float = 1.0
    f0_low: float = 80.0
    f0_high: float = 400.0
    min_harmonics: int = 3
    max_harmonics: int = 8
    noise_level: float = 0.003
    peak: float = 0.95


def synthetic_clip(rng: np.random.Generator, cfg: SyntheticConfig = SyntheticConfig()) -> np.ndarray:
    """One random harmonic clip as float64 samples with |x| <= cfg.peak."""
    n = int(round(cfg.sample_rate * cfg.duration_s))
    t = np.arange(n, dtype=np.float64) / cfg.sample_rate
    f0 = rng.uniform(cfg.f0_low, cfg.f0_high)
    n_harm = int(rng.integers(cfg.min_harmonics, cfg.max_harmonics + 1))
    x = np.zeros(n, dtype=np.float64)
    for h in range(1, n_harm + 1):
        amp = rng.uniform(0.3, 1.0) / h
        phase = rng.uniform(0.0, 2.0 * np.pi)
        am_rate = rng.uniform(0.5, 6.0)
        am_depth = rng.uniform(0.0, 0.6)
        am_phase = rng.uniform(0.0, 2.0 * np.pi)
        env = 1.0 - am_depth * 0.5 * (1.0 + np.cos(2.0 * np.pi * am_rate * t + am_phase))
        x += amp * env * np.sin(2.0 * np.pi * h * f0 * t + phase)
    x += cfg.noise_level * rng.normal(size=n)
    x *= cfg.peak / max(np.max(np.abs(x)), 1e-9)
    return x


class Dataset:
    """A list of mono clips sharing one sample rate."""

    def __init__(self, clips: list[np.ndarray], sample_rate: int):
        if not clips:
            raise DataError("Dataset: no clips")
        self.clips = [np.asarray(c, dtype=np.float64) for c in clips]
        self.sample_rate = int(sample_rate)

    def __len__(self):
        return len(self.clips)

    @classmethod
    def synthetic(cls, n_clips: int, seed: int, cfg: SyntheticConfig = SyntheticConfig()) -> "Dataset":
        """n_clips generated clips; clip i depends only on (seed, i)."""
        if n_clips < 1:
            raise DataError("Dataset.synthetic: need at least one clip")
        clips = [synthetic_clip(np.random.default_rng((seed, i)), cfg)
                 for i in range(n_clips)]
        return cls(clips, cfg.sample_rate)

    @classmethod
    def from_dir(cls, path, min_samples: int = 1) -> "Dataset":
        """Load every .wav in a directory (sorted by name).

        Clips shorter than min_samples are skipped with a warning; an empty
        result raises DataError.
        """
        path = Path(path)
        clips = []
        rate = None
        for wav_path in sorted(path.glob("*.wav")):
            wf = load_wav(wav_path)
            if rate is None:
                rate = wf.sample_rate
            elif wf.sample_rate != rate:
                raise DataError(
                    f"Dataset.from_dir: {wav_path.name} has rate {wf.sample_rate}, "
                    f"expected {rate}")
            if len(wf) < min_samples:
                warnings.warn(
                    f"Dataset.from_dir: skipping {wav_path.name} "
                    f"({len(wf)} < {min_samples} samples)")
                continue
            clips.append(wf.samples)
        if not clips:
            raise DataError(f"Dataset.from_dir: no usable clips in {path}")
        return cls(clips, rate)

    def write_dir(self, path):
        """Write clips as clip_0000.wav ... under path (created if needed)."""
        path = Path(path)
        path.mkdir(parents=True, exist_ok=True)
        for i, c in enumerate(self.clips):
            save_wav(path / f"clip_{i:04d}.wav", Waveform(c, self.sample_rate))


def sample_segment(dataset: Dataset, rng: np.random.Generator, segment_samples: int,
                   mel_cfg: MelConfig = MelConfig()):
    """Random hop-aligned crop: returns (mel (n_mels, F), wave (segment_samples,)).

    The mel is computed from exactly the cropped samples, so mel frame t
    covers samples [t*hop, t*hop + n_fft) of the returned wave.  Clips
    shorter than segment_samples are never selected; if none is long enough,
    raises DataError.
    """
    hop = mel_cfg.hop
    if segment_samples % hop != 0:
        raise DataError(
            f"sample_segment: segment {segment_samples} not divisible by hop {hop}")
    eligible = [i for i, c in enumerate(dataset.clips) if c.size >= segment_samples]
    if not eligible:
        raise DataError(
            f"sample_segment: no clip has >= {segment_samples} samples")
    idx = eligible[int(rng.integers(0, len(eligible)))]
    clip = dataset.clips[idx]
    max_off = (clip.size - segment_samples) // hop
    off = int(rng.integers(0, max_off + 1)) * hop
    wave = clip[off:off + segment_samples].copy()
    mel = log_mel(Waveform(wave, dataset.sample_rate), mel_cfg).data
    return mel, wave


def sample_batch(dataset: Dataset, rng: np.random.Generator, batch_size: int,
                 segment_samples: int, mel_cfg: MelConfig = MelConfig()):
    """Stack batch_size segments: returns (mels (B, n_mels, F), waves (B, T))."""
    mels, waves = [], []
    for _ in range(batch_size):
        m, w = sample_segment(dataset, rng, segment_samples, mel_cfg)
        mels.append(m)
        waves.append(w)
    return np.stack(mels), np.stack(waves)
