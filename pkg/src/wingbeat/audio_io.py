"""WAV decode/encode and audio standardization (low-pass + resample).

All functions are pure: they take an AudioBuffer and return a new one.
WAV support is deliberately narrow - RIFF/WAVE, PCM 16-bit or IEEE
float 32-bit, mono or stereo, 8-48 kHz - which covers every recording
source this pipeline ingests.
"""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

logger = logging.getLogger(__name__)

DEFAULT_RATE = 8000

# 255-tap Hamming-windowed sinc: odd length gives an integer group delay,
# so centered convolution removes it exactly.
FIR_TAPS = 255


class WavFormatError(ValueError):
    """Raised for malformed or unsupported WAV files."""


@dataclass(frozen=True)
class AudioBuffer:
    """Mono PCM audio: samples in [-1, 1] plus the sample rate in Hz."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        object.__setattr__(self, "samples", samples)
        if samples.ndim != 1:
            raise ValueError(f"samples must be 1-D, got shape {samples.shape}")
        if self.sample_rate <= 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        if samples.size and not np.all(np.isfinite(samples)):
            raise ValueError("samples contain non-finite values")

    def __len__(self) -> int:
        return self.samples.size

    @property
    def duration_s(self) -> float:
        return self.samples.size / self.sample_rate


def _read_fmt_chunk(body: bytes) -> tuple[int, int, int, int]:
    if len(body) < 16:
        raise WavFormatError("fmt chunk too short")
    codec, channels, rate, _byte_rate, _block_align, bits = struct.unpack(
        "<HHIIHH", body[:16]
    )
    if codec == 0xFFFE and len(body) >= 40:  # WAVE_FORMAT_EXTENSIBLE
        codec = struct.unpack("<H", body[24:26])[0]
    return codec, channels, rate, bits


def read_wav(path) -> AudioBuffer:
    """Decode a WAV file to a mono AudioBuffer.

    Stereo is downmixed by channel mean.  16-bit samples are scaled by
    1/32768; float samples outside [-1, 1] are clamped (with a logged
    count) rather than rejected.
    """
    return decode_wav(Path(path).read_bytes(), name=str(path))


def decode_wav(raw: bytes, name: str = "<bytes>") -> AudioBuffer:
    """Decode in-memory WAV bytes; see read_wav for the supported subset."""
    path = name
    if len(raw) < 12 or raw[:4] != b"RIFF" or raw[8:12] != b"WAVE":
        raise WavFormatError(f"{path}: not a RIFF/WAVE file")

    fmt = None
    data = None
    pos = 12
    while pos + 8 <= len(raw):
        cid = raw[pos : pos + 4]
        size = struct.unpack("<I", raw[pos + 4 : pos + 8])[0]
        body = raw[pos + 8 : pos + 8 + size]
        if cid == b"fmt ":
            fmt = _read_fmt_chunk(body)
        elif cid == b"data":
            if len(body) < size:
                raise WavFormatError(f"{path}: truncated data chunk")
            data = body
        pos += 8 + size + (size & 1)  # chunks are word-aligned

    if fmt is None:
        raise WavFormatError(f"{path}: missing fmt chunk")
    if data is None:
        raise WavFormatError(f"{path}: missing data chunk")
    if len(data) == 0:
        raise WavFormatError(f"{path}: zero-length data chunk")

    codec, channels, rate, bits = fmt
    if channels not in (1, 2):
        raise WavFormatError(f"{path}: {channels} channels unsupported")
    if not 8000 <= rate <= 48000:
        raise WavFormatError(f"{path}: sample rate {rate} outside 8-48 kHz")

    if codec == 1 and bits == 16:
        x = np.frombuffer(data, dtype="<i2").astype(np.float64) / 32768.0
    elif codec == 3 and bits == 32:
        x = np.frombuffer(data, dtype="<f4").astype(np.float64)
        clipped = int(np.count_nonzero(np.abs(x) > 1.0))
        if clipped:
            logger.warning("%s: clamped %d out-of-range float samples", path, clipped)
            x = np.clip(x, -1.0, 1.0)
    else:
        raise WavFormatError(f"{path}: codec {codec}/{bits}-bit unsupported")

    if channels == 2:
        if x.size % 2:
            raise WavFormatError(f"{path}: odd sample count for stereo data")
        x = x.reshape(-1, 2).mean(axis=1)

    return AudioBuffer(x, rate)


def encode_wav(buf: AudioBuffer) -> bytes:
    """Encode an AudioBuffer as PCM 16-bit mono WAV bytes.

    Samples must already be in [-1, 1]; out-of-range values are an error
    (encode does not clamp silently).
    """
    x = buf.samples
    if x.size and (np.max(x) > 1.0 or np.min(x) < -1.0):
        raise ValueError(f"sample out of range [-1, 1]: peak {np.max(np.abs(x)):.4f}")
    pcm = np.clip(np.round(x * 32767.0), -32768, 32767).astype("<i2")
    data = pcm.tobytes()

    hdr = b"RIFF" + struct.pack("<I", 36 + len(data)) + b"WAVE"
    hdr += b"fmt " + struct.pack("<IHHIIHH", 16, 1, 1, buf.sample_rate,
                                 buf.sample_rate * 2, 2, 16)
    hdr += b"data" + struct.pack("<I", len(data))
    return hdr + data


def write_wav(buf: AudioBuffer, path) -> None:
    """Encode an AudioBuffer as a PCM 16-bit mono WAV file."""
    Path(path).write_bytes(encode_wav(buf))


def _sinc_kernel(cutoff_hz: float, sample_rate: int, taps: int = FIR_TAPS) -> np.ndarray:
    mid = taps // 2
    n = np.arange(taps) - mid
    fc = cutoff_hz / sample_rate
    h = 2.0 * fc * np.sinc(2.0 * fc * n)
    h *= np.hamming(taps)
    return h / h.sum()  # exact unit DC gain


def lowpass_fir(buf: AudioBuffer, cutoff_hz: float) -> AudioBuffer:
    """Zero-phase low-pass via a 255-tap Hamming-windowed sinc FIR.

    Centered convolution keeps the output aligned with the input (the
    symmetric kernel's group delay cancels), and output length equals
    input length.
    """
    if not 0 < cutoff_hz < buf.sample_rate / 2:
        raise ValueError(
            f"cutoff {cutoff_hz} Hz outside (0, {buf.sample_rate / 2}) for "
            f"rate {buf.sample_rate}"
        )
    if len(buf) == 0:
        return AudioBuffer(buf.samples.copy(), buf.sample_rate)
    h = _sinc_kernel(cutoff_hz, buf.sample_rate)
    y = np.convolve(buf.samples, h, mode="same")
    return AudioBuffer(np.clip(y, -1.0, 1.0), buf.sample_rate)


def resample(buf: AudioBuffer, target_rate: int) -> AudioBuffer:
    """Linear-interpolation resampling to target_rate.

    The caller is responsible for band-limiting below target_rate/2 when
    downsampling (standardize_audio does this).
    """
    if target_rate <= 0:
        raise ValueError(f"target_rate must be positive, got {target_rate}")
    if target_rate == buf.sample_rate:
        return AudioBuffer(buf.samples.copy(), buf.sample_rate)
    n_out = int(round(len(buf) * target_rate / buf.sample_rate))
    if n_out == 0 or len(buf) == 0:
        return AudioBuffer(np.zeros(0), target_rate)
    t_out = np.arange(n_out) / target_rate
    t_in = np.arange(len(buf)) / buf.sample_rate
    y = np.interp(t_out, t_in, buf.samples)
    return AudioBuffer(y, target_rate)


def standardize_audio(buf: AudioBuffer, target_rate: int = DEFAULT_RATE) -> AudioBuffer:
    """Band-limit to target_rate/2 and resample to target_rate.

    The low-pass stage only runs when actually downsampling; at or below
    the target rate there is nothing above the new Nyquist to remove, and
    skipping it makes the operation idempotent.
    """
    if buf.sample_rate == target_rate:
        return AudioBuffer(buf.samples.copy(), buf.sample_rate)
    out = buf
    if buf.sample_rate > target_rate:
        out = lowpass_fir(out, target_rate / 2)
    return resample(out, target_rate)
