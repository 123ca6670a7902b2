"""Spectrogram features: STFT magnitude in dB, [0,1] normalization, images.

The feature contract: a segment of W + (F-1)*H samples turns into an
(W/2+1) x F matrix of values in [0, 1], where 0 is -80 dB relative to the
segment's peak magnitude and 1 is the peak itself.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .audio_io import AudioBuffer

DB_FLOOR = -80.0


@dataclass(frozen=True)
class StftConfig:
    """STFT analysis parameters: window size W (power of two) and hop H."""

    fft_size: int = 1024
    hop: int = 256
    window: str = "hann"

    def __post_init__(self):
        w = self.fft_size
        if w <= 0 or (w & (w - 1)) != 0:
            raise ValueError(f"fft_size must be a power of two, got {w}")
        if not 0 < self.hop <= w:
            raise ValueError(f"hop must be in (0, {w}], got {self.hop}")
        if self.window != "hann":
            raise ValueError(f"unsupported window {self.window!r}")

    @property
    def n_bins(self) -> int:
        return self.fft_size // 2 + 1


@dataclass(frozen=True)
class Spectrogram:
    """Normalized frequency x time feature matrix, values in [0, 1]."""

    values: np.ndarray  # (n_bins, n_frames) float32
    fft_size: int
    hop: int
    sample_rate: int

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float32)
        object.__setattr__(self, "values", v)
        if v.ndim != 2:
            raise ValueError(f"values must be 2-D, got shape {v.shape}")
        if v.shape[0] != self.fft_size // 2 + 1:
            raise ValueError(
                f"{v.shape[0]} rows inconsistent with fft_size {self.fft_size}"
            )
        if v.size and (not np.all(np.isfinite(v)) or v.min() < 0 or v.max() > 1):
            raise ValueError("values must be finite and in [0, 1]")

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape


def frame_count(n_samples: int, cfg: StftConfig) -> int:
    """Number of full STFT frames: 1 + floor((len - W) / H), no padding."""
    if n_samples < cfg.fft_size:
        return 0
    return 1 + (n_samples - cfg.fft_size) // cfg.hop


def _hann(n: int) -> np.ndarray:
    # periodic Hann, the standard STFT taper
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


def stft_magnitude(buf: AudioBuffer, cfg: StftConfig) -> np.ndarray:
    """Hann-windowed STFT magnitudes, shape (n_bins, n_frames)."""
    n = frame_count(len(buf), cfg)
    if n == 0:
        raise ValueError(
            f"buffer of {len(buf)} samples shorter than window {cfg.fft_size}"
        )
    w, h = cfg.fft_size, cfg.hop
    idx = np.arange(w)[None, :] + h * np.arange(n)[:, None]
    frames = buf.samples[idx] * _hann(w)[None, :]
    return np.abs(np.fft.rfft(frames, axis=1)).T


def stft_db(buf: AudioBuffer, cfg: StftConfig) -> np.ndarray:
    """STFT magnitude in dB relative to the segment's own peak.

    Values land in [-80, 0]: 0 dB at the peak magnitude, floored at -80.
    Digital silence (all-zero input) maps to a uniform -80 matrix.
    """
    mag = stft_magnitude(buf, cfg)
    peak = mag.max()
    if peak == 0.0:
        return np.full(mag.shape, DB_FLOOR)
    db = 20.0 * np.log10(np.maximum(mag, peak * 1e-12) / peak)
    return np.maximum(db, DB_FLOOR)


def normalize_db(db_matrix: np.ndarray, cfg: StftConfig,
                 sample_rate: int) -> Spectrogram:
    """Map dB values in [-80, 0] linearly onto [0, 1] (x/80 + 1)."""
    db = np.asarray(db_matrix, dtype=np.float64)
    if db.size and (db.min() < DB_FLOOR - 1e-9 or db.max() > 1e-9):
        raise ValueError(
            f"dB entries outside [-80, 0]: range [{db.min():.3f}, {db.max():.3f}]"
        )
    values = np.clip(db / 80.0 + 1.0, 0.0, 1.0).astype(np.float32)
    return Spectrogram(values, cfg.fft_size, cfg.hop, sample_rate)


def hz_to_mel(f):
    """HTK mel scale: 2595 * log10(1 + f/700)."""
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(spec_power: np.ndarray, n_mels: int,
                   sample_rate: int) -> np.ndarray:
    """Apply a triangular HTK-mel filterbank over the frequency axis.

    Filters are evaluated in mel space, so adjacent triangles sum to one
    between the first and last centers (interior energy is conserved).
    Legacy comparison path only; the main pipeline stays on the linear
    frequency axis.
    """
    spec_power = np.asarray(spec_power, dtype=np.float64)
    m = spec_power.shape[0]
    if n_mels < 2:
        raise ValueError(f"n_mels must be >= 2, got {n_mels}")
    if n_mels > m:
        raise ValueError(f"n_mels {n_mels} exceeds {m} frequency bins")

    bin_hz = np.arange(m) * sample_rate / (2.0 * (m - 1))
    bin_mel = hz_to_mel(bin_hz)
    anchors = np.linspace(hz_to_mel(0.0), hz_to_mel(sample_rate / 2.0), n_mels + 2)

    weights = np.zeros((n_mels, m))
    for i in range(n_mels):
        lo, center, hi = anchors[i], anchors[i + 1], anchors[i + 2]
        rise = (bin_mel - lo) / (center - lo)
        fall = (hi - bin_mel) / (hi - center)
        weights[i] = np.clip(np.minimum(rise, fall), 0.0, None)
    return weights @ spec_power


def mel_center_frequencies(n_mels: int, sample_rate: int) -> np.ndarray:
    """Center frequency (Hz) of each mel band."""
    anchors = np.linspace(hz_to_mel(0.0), hz_to_mel(sample_rate / 2.0), n_mels + 2)
    return mel_to_hz(anchors[1:-1])


def _write_pnm(path, magic: bytes, width: int, height: int, pixels: bytes) -> None:
    header = magic + b"\n%d %d\n255\n" % (width, height)
    Path(path).write_bytes(header + pixels)


def matrix_to_gray(values: np.ndarray) -> np.ndarray:
    """[0,1] matrix -> uint8 image rows, low frequencies at the bottom."""
    v = np.clip(np.asarray(values, dtype=np.float64), 0.0, 1.0)
    return (v * 255.0).astype(np.uint8)[::-1, :]


def spectrogram_to_image(spec: Spectrogram | np.ndarray, path) -> None:
    """Write a spectrogram as an 8-bit binary PGM (P5).

    Rows are frequency (lowest at the bottom of the image), columns are
    time; 255 corresponds to a value of 1.0.
    """
    values = spec.values if isinstance(spec, Spectrogram) else spec
    img = matrix_to_gray(values)
    _write_pnm(path, b"P5", img.shape[1], img.shape[0], img.tobytes())
