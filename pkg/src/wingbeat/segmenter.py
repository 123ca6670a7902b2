"""Sliding-window segmentation of standardized audio.

Segment length is defined in samples as W + (F-1)*H so that each segment
yields exactly F STFT frames; the window advances by half a segment.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .audio_io import AudioBuffer
from .dsp import StftConfig


@dataclass(frozen=True)
class SegmentSpec:
    """Segment geometry: F spectrogram frames per segment, 50% slide."""

    frames_per_feature: int
    stft: StftConfig

    def __post_init__(self):
        if self.frames_per_feature < 1:
            raise ValueError(
                f"frames_per_feature must be >= 1, got {self.frames_per_feature}"
            )

    @property
    def segment_len(self) -> int:
        return self.stft.fft_size + (self.frames_per_feature - 1) * self.stft.hop

    @property
    def slide(self) -> int:
        return self.segment_len // 2


def segment(buf: AudioBuffer, spec: SegmentSpec) -> list[AudioBuffer]:
    """Split audio into overlapping segments of spec.segment_len samples.

    Full windows advance by spec.slide.  A trailing shorter remainder is
    kept (zero-padded to full length) only when it is at least half a
    segment long AND extends past the last full window; a remainder whose
    samples are all already covered adds nothing.
    """
    length, seg_len, slide = len(buf), spec.segment_len, spec.slide
    x = buf.samples
    out: list[AudioBuffer] = []

    offset = 0
    covered = 0
    while length - offset >= seg_len:
        out.append(AudioBuffer(x[offset : offset + seg_len].copy(), buf.sample_rate))
        covered = offset + seg_len
        offset += slide

    rem = length - offset
    if 2 * rem >= seg_len and length > covered:
        padded = np.zeros(seg_len)
        padded[:rem] = x[offset:]
        out.append(AudioBuffer(padded, buf.sample_rate))
    return out
