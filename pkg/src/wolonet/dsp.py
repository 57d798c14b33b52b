"""Audio I/O and log-mel-spectrogram feature extraction.

The analysis chain is reflect-centered magnitude STFT (Hann window, DFT as a
cosine/sine basis matmul so it stays differentiable), HTK-scale triangular
mel filters, then a natural log with an amplitude floor. Waveforms travel as
PCM-16 mono WAV files; mel features travel as MEL1 files (magic "MEL1",
u32 n_mels, u32 n_frames, then 32-bit little-endian floats, frame-major).
"""

from __future__ import annotations

import functools
import struct
import wave
from dataclasses import dataclass

import numpy as np

from .tensor import (
    Tensor, clamp_min, frame1d, log, matmul, mul, pad, sqrt, transpose,
)

__all__ = [
    "MelConfig", "Waveform", "WavFormatError", "MelFormatError",
    "load_wav", "save_wav", "hz_to_mel", "mel_to_hz", "mel_filterbank",
    "mel_center_frequencies", "stft_magnitude", "log_mel", "log_mel_tensor",
    "write_mel", "read_mel",
]

PCM_SCALE = 32768


class WavFormatError(ValueError):
    """Raised for WAV files this package cannot read or write."""


class MelFormatError(ValueError):
    """Raised for malformed MEL1 feature files."""


@dataclass(frozen=True)
class MelConfig:
    """STFT and mel-filterbank settings shared by analysis and the mel loss."""

    sample_rate: int = 22050
    n_fft: int = 1024
    hop: int = 256
    win_length: int = 1024
    n_mels: int = 80
    fmin: float = 80.0
    fmax: float = 7600.0
    log_floor: float = 1e-5

    def __post_init__(self):
        if not (1 <= self.hop <= self.win_length <= self.n_fft):
            raise ValueError(
                f"MelConfig: need 1 <= hop <= win_length <= n_fft, got "
                f"hop={self.hop} win={self.win_length} n_fft={self.n_fft}")
        if not (0 <= self.fmin < self.fmax <= self.sample_rate / 2):
            raise ValueError(
                f"MelConfig: need 0 <= fmin < fmax <= sr/2, got "
                f"fmin={self.fmin} fmax={self.fmax} sr={self.sample_rate}")
        if self.n_mels < 1:
            raise ValueError("MelConfig: n_mels must be >= 1")
        if self.log_floor <= 0:
            raise ValueError("MelConfig: log_floor must be > 0")


@dataclass
class Waveform:
    """Mono audio: float64 samples in [-1, 1] plus a sample rate."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1:
            raise ValueError(f"Waveform: samples must be 1-D, got shape "
                             f"{self.samples.shape}")
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("Waveform: samples must be finite")

    def __len__(self):
        return self.samples.size


def load_wav(path):
    """Read a PCM-16 mono RIFF/WAVE file; samples decode as int/32768."""
    try:
        with wave.open(str(path), "rb") as f:
            channels = f.getnchannels()
            width = f.getsampwidth()
            comp = f.getcomptype()
            rate = f.getframerate()
            raw = f.readframes(f.getnframes())
    except (wave.Error, EOFError) as exc:
        raise WavFormatError(f"{path}: malformed WAV ({exc})") from None
    if comp != "NONE":
        raise WavFormatError(f"{path}: unsupported codec {comp!r}")
    if channels != 1:
        raise WavFormatError(f"{path}: expected mono, got {channels} channels")
    if width != 2:
        raise WavFormatError(f"{path}: expected 16-bit PCM, got {8 * width}-bit")
    ints = np.frombuffer(raw, dtype="<i2")
    return Waveform(ints.astype(np.float64) / PCM_SCALE, rate)


def save_wav(path, waveform):
    """Write PCM-16 mono; floats clamp to [-1, 1] and quantize by rounding.

    The round trip satisfies |x - load(save(x))| <= 1/32768 per sample,
    including the positive clip at exactly +1.
    """
    x = np.clip(waveform.samples, -1.0, 1.0)
    ints = np.clip(np.round(x * PCM_SCALE), -PCM_SCALE, PCM_SCALE - 1)
    with wave.open(str(path), "wb") as f:
        f.setnchannels(1)
        f.setsampwidth(2)
        f.setframerate(waveform.sample_rate)
        f.writeframes(ints.astype("<i2").tobytes())


def hz_to_mel(hz):
    return 2595.0 * np.log10(1.0 + np.asarray(hz, dtype=np.float64) / 700.0)


def mel_to_hz(mel):
    return 700.0 * (10.0 ** (np.asarray(mel, dtype=np.float64) / 2595.0) - 1.0)


def mel_center_frequencies(cfg):
    """Triangle peak frequencies in Hz, linearly spaced on the HTK mel scale."""
    mels = np.linspace(hz_to_mel(cfg.fmin), hz_to_mel(cfg.fmax), cfg.n_mels + 2)
    return mel_to_hz(mels)[1:-1]


def mel_filterbank(cfg):
    """Triangular HTK-mel filters as an (n_mels, n_fft//2 + 1) array."""
    n_bins = cfg.n_fft // 2 + 1
    freqs = np.arange(n_bins) * cfg.sample_rate / cfg.n_fft
    mels = np.linspace(hz_to_mel(cfg.fmin), hz_to_mel(cfg.fmax), cfg.n_mels + 2)
    hz = mel_to_hz(mels)
    lower = (freqs[None, :] - hz[:-2, None]) / (hz[1:-1] - hz[:-2])[:, None]
    upper = (hz[2:, None] - freqs[None, :]) / (hz[2:] - hz[1:-1])[:, None]
    fb = np.maximum(0.0, np.minimum(lower, upper))
    if np.any(fb.sum(axis=1) == 0.0):
        raise ValueError(
            "mel_filterbank: a filter row is empty; n_fft too small for this "
            "mel spacing")
    return fb


@functools.lru_cache(maxsize=8)
def _analysis_arrays(cfg):
    """Window, DFT bases, and filterbank for a config, computed once."""
    window = 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(cfg.win_length)
                                / cfg.win_length)
    if cfg.win_length < cfg.n_fft:
        lpad = (cfg.n_fft - cfg.win_length) // 2
        padded = np.zeros(cfg.n_fft)
        padded[lpad:lpad + cfg.win_length] = window
        window = padded
    n_bins = cfg.n_fft // 2 + 1
    n = np.arange(cfg.n_fft)[:, None]
    k = np.arange(n_bins)[None, :]
    angle = 2.0 * np.pi * n * k / cfg.n_fft
    return window, np.cos(angle), -np.sin(angle), mel_filterbank(cfg)


def _frame_count(n_samples, hop):
    return -(-n_samples // hop)


def stft_magnitude(x, cfg):
    """Centered magnitude STFT of (..., T) samples -> (..., F, n_fft//2+1).

    F = ceil(T / hop); frame f is windowed from reflect-padded samples
    starting at f*hop. Differentiable; the gradient of a zero-magnitude
    cell is defined as zero.
    """
    x = x if isinstance(x, Tensor) else Tensor(x)
    t = x.shape[-1]
    if t < cfg.win_length:
        raise ValueError(
            f"stft_magnitude: input length {t} < win_length {cfg.win_length}")
    window, cos_b, sin_b, _ = _analysis_arrays(cfg)
    half = cfg.n_fft // 2
    pads = [(0, 0)] * (x.ndim - 1) + [(half, half)]
    padded = pad(x, pads, mode="reflect")
    frames = frame1d(padded, cfg.n_fft, cfg.hop)
    n_frames = _frame_count(t, cfg.hop)
    frames = frames[..., :n_frames, :]
    windowed = mul(frames, Tensor(window))
    re = matmul(windowed, Tensor(cos_b))
    im = matmul(windowed, Tensor(sin_b))
    return sqrt(mul(re, re) + mul(im, im))


def log_mel_tensor(x, cfg):
    """Log-mel of (..., T) samples -> (..., n_mels, F), natural log, floored."""
    x = x if isinstance(x, Tensor) else Tensor(x)
    _, _, _, fb = _analysis_arrays(cfg)
    mag = stft_magnitude(x, cfg)
    mel = matmul(mag, Tensor(fb.T))
    axes = tuple(range(mel.ndim - 2)) + (mel.ndim - 1, mel.ndim - 2)
    mel = transpose(mel, axes)
    return log(clamp_min(mel, cfg.log_floor))


def log_mel(waveform, cfg):
    """Log-mel features of a Waveform as an (n_mels, F) tensor."""
    if waveform.sample_rate != cfg.sample_rate:
        raise ValueError(
            f"log_mel: waveform rate {waveform.sample_rate} != config rate "
            f"{cfg.sample_rate}")
    return log_mel_tensor(Tensor(waveform.samples), cfg)


def write_mel(path, mel):
    """Write an (n_mels, F) array as a MEL1 file (f32, frame-major)."""
    mel = np.asarray(mel, dtype=np.float64)
    if mel.ndim != 2:
        raise MelFormatError(f"write_mel: expected 2-D array, got {mel.shape}")
    n_mels, n_frames = mel.shape
    with open(path, "wb") as f:
        f.write(b"MEL1")
        f.write(struct.pack("<II", n_mels, n_frames))
        f.write(np.ascontiguousarray(mel.T, dtype="<f4").tobytes())


def read_mel(path):
    """Read a MEL1 file back to a float64 (n_mels, F) array."""
    with open(path, "rb") as f:
        blob = f.read()
    if len(blob) < 12 or blob[:4] != b"MEL1":
        raise MelFormatError(f"{path}: not a MEL1 file")
    n_mels, n_frames = struct.unpack("<II", blob[4:12])
    expected = 12 + 4 * n_mels * n_frames
    if len(blob) != expected:
        raise MelFormatError(
            f"{path}: size {len(blob)} != expected {expected} for "
            f"{n_mels}x{n_frames}")
    data = np.frombuffer(blob, dtype="<f4", offset=12)
    return data.reshape(n_frames, n_mels).T.astype(np.float64)
