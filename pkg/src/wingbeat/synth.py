"""Synthetic wingbeat and noise audio for desk-scale experiments.

Wingbeats are harmonic stacks with a slow random walk on the fundamental;
noise comes in white, pink, and babble-like tonal flavors.  Everything is
deterministic per seed, so generated datasets are byte-reproducible.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .audio_io import AudioBuffer, write_wav

NOISE_KINDS = ("white", "pink", "babble")


@dataclass(frozen=True)
class WingbeatProfile:
    """Harmonic stack description for one mosquito-like source."""

    fundamental_hz: float
    n_harmonics: int = 3
    harmonic_decay: float = 0.7
    freq_jitter_hz: float = 5.0
    amplitude: float = 0.8

    def __post_init__(self):
        if self.fundamental_hz <= 0 or self.n_harmonics < 1:
            raise ValueError("fundamental_hz and n_harmonics must be positive")
        if not 0 < self.harmonic_decay <= 1:
            raise ValueError(f"harmonic_decay must be in (0,1], got {self.harmonic_decay}")
        if not 0 <= self.amplitude <= 1:
            raise ValueError(f"amplitude must be in [0,1], got {self.amplitude}")


# Defaults: fundamentals placed so the first harmonics land near the
# 450/900 Hz bands where trained models concentrate attention.
MALE_AEGYPTI = WingbeatProfile(fundamental_hz=600.0)
FEMALE_AEGYPTI = WingbeatProfile(fundamental_hz=450.0)
OFF_TARGET = WingbeatProfile(fundamental_hz=300.0, harmonic_decay=0.6)


def synth_wingbeat(profile: WingbeatProfile, duration_s: float, seed: int,
                   sample_rate: int = 8000) -> AudioBuffer:
    """Render a wingbeat: n_harmonics sinusoids at k*f0, decaying amplitudes.

    The fundamental performs a seeded random walk with steps of
    freq_jitter_hz std-dev per 100 ms, linearly interpolated per sample;
    harmonics track it phase-continuously.  Peak is scaled to
    profile.amplitude exactly.
    """
    top = profile.fundamental_hz * profile.n_harmonics
    if top >= sample_rate / 2:
        raise ValueError(
            f"harmonic at {top} Hz violates Nyquist for rate {sample_rate}"
        )
    n = int(round(duration_s * sample_rate))
    if n == 0 or profile.amplitude == 0.0:
        return AudioBuffer(np.zeros(n), sample_rate)

    rng = np.random.default_rng(seed)
    step = max(1, sample_rate // 10)  # 100 ms control grid
    n_ctrl = n // step + 2
    walk = np.cumsum(rng.normal(0.0, profile.freq_jitter_hz, n_ctrl))
    f0 = profile.fundamental_hz + np.interp(
        np.arange(n), np.arange(n_ctrl) * step, walk
    )
    f0 = np.clip(f0, 1.0, (sample_rate / 2 - 1) / profile.n_harmonics)

    phase = 2.0 * np.pi * np.cumsum(f0) / sample_rate
    x = np.zeros(n)
    for k in range(1, profile.n_harmonics + 1):
        x += profile.harmonic_decay ** (k - 1) * np.sin(k * phase)
    x *= profile.amplitude / np.max(np.abs(x))
    return AudioBuffer(x, sample_rate)


def _pink(rng: np.random.Generator, n: int) -> np.ndarray:
    # shape white gaussian noise by 1/sqrt(f): -3 dB/octave power slope
    white = rng.normal(0.0, 1.0, n)
    spec = np.fft.rfft(white)
    f = np.fft.rfftfreq(n)
    scale = np.zeros_like(f)
    scale[1:] = 1.0 / np.sqrt(f[1:])
    return np.fft.irfft(spec * scale, n)


def _babble(rng: np.random.Generator, n: int, sample_rate: int) -> np.ndarray:
    # a handful of wandering tones plus a light broadband floor
    x = np.zeros(n)
    t = np.arange(n) / sample_rate
    for _ in range(8):
        f = rng.uniform(150.0, 3500.0)
        env_pts = rng.uniform(0.2, 1.0, max(2, n // sample_rate + 2))
        env = np.interp(t, np.linspace(0, max(t[-1], 1e-9), env_pts.size), env_pts)
        x += env * np.sin(2 * np.pi * f * t + rng.uniform(0, 2 * np.pi))
    x += 0.1 * rng.normal(0.0, 1.0, n)
    return x


def synth_noise(kind: str, duration_s: float, seed: int, amplitude: float = 0.5,
                sample_rate: int = 8000) -> AudioBuffer:
    """Seeded noise of the requested spectral shape.

    White noise is uniform in [-amplitude, amplitude]; pink and babble are
    peak-normalized to amplitude.
    """
    if kind not in NOISE_KINDS:
        raise ValueError(f"unknown noise kind {kind!r}, expected one of {NOISE_KINDS}")
    if not 0 <= amplitude <= 1:
        raise ValueError(f"amplitude must be in [0,1], got {amplitude}")
    n = int(round(duration_s * sample_rate))
    rng = np.random.default_rng(seed)
    if n == 0 or amplitude == 0.0:
        return AudioBuffer(np.zeros(n), sample_rate)
    if kind == "white":
        x = rng.uniform(-amplitude, amplitude, n)
    else:
        x = _pink(rng, n) if kind == "pink" else _babble(rng, n, sample_rate)
        x *= amplitude / np.max(np.abs(x))
    return AudioBuffer(x, sample_rate)


def mix_at_snr(signal: AudioBuffer, noise: AudioBuffer, snr_db: float) -> AudioBuffer:
    """Mix noise into signal at the requested full-clip RMS SNR.

    If the sum clips, both components are scaled down together, which
    preserves the SNR while keeping |sample| <= 1.
    """
    if signal.sample_rate != noise.sample_rate:
        raise ValueError("sample rates differ")
    if len(signal) != len(noise):
        raise ValueError("lengths differ")
    rms_s = np.sqrt(np.mean(signal.samples**2))
    rms_n = np.sqrt(np.mean(noise.samples**2))
    if rms_s == 0.0 or rms_n == 0.0:
        raise ValueError("cannot mix silent signal or noise at a finite SNR")
    gain = rms_s / (rms_n * 10.0 ** (snr_db / 20.0))
    mixed = signal.samples + gain * noise.samples
    peak = np.max(np.abs(mixed))
    if peak > 1.0:
        mixed = mixed / peak
    return AudioBuffer(mixed, signal.sample_rate)


@dataclass(frozen=True)
class DatasetRecipe:
    """Recipe for one synthetic labeled dataset."""

    n_pos: int = 200
    n_neg: int = 200
    seed: int = 7
    snr_db: float | None = 10.0
    duration_s: float = 2.0
    sample_rate: int = 8000
    pos_profiles: tuple[WingbeatProfile, ...] = (MALE_AEGYPTI, FEMALE_AEGYPTI)
    neg_kinds: tuple[str, ...] = ("white", "pink", "babble", "offtarget",
                                  "white", "pink")
    off_target: WingbeatProfile = OFF_TARGET


def synth_dataset(recipe: DatasetRecipe, out_dir) -> Path:
    """Write the recipe's WAV files plus a manifest.csv; returns its path.

    Positives are wingbeats (optionally mixed with white/pink noise at
    recipe.snr_db); negatives cycle through noise kinds and an off-target
    wingbeat profile.  Each file forms its own group.  Output is
    byte-identical for identical (recipe, seed).
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = []

    for i in range(recipe.n_pos):
        profile = recipe.pos_profiles[i % len(recipe.pos_profiles)]
        buf = synth_wingbeat(profile, recipe.duration_s,
                             seed=_entry_seed(recipe.seed, "pos", i),
                             sample_rate=recipe.sample_rate)
        if recipe.snr_db is not None:
            kind = "white" if i % 2 == 0 else "pink"
            noise = synth_noise(kind, recipe.duration_s,
                                seed=_entry_seed(recipe.seed, "posnoise", i),
                                amplitude=0.5, sample_rate=recipe.sample_rate)
            buf = mix_at_snr(buf, noise, recipe.snr_db)
        name = f"pos_{i:04d}.wav"
        write_wav(buf, out / name)
        rows.append((name, "positive", f"pos_{i:04d}"))

    for i in range(recipe.n_neg):
        kind = recipe.neg_kinds[i % len(recipe.neg_kinds)]
        if kind == "offtarget":
            buf = synth_wingbeat(recipe.off_target, recipe.duration_s,
                                 seed=_entry_seed(recipe.seed, "neg", i),
                                 sample_rate=recipe.sample_rate)
        else:
            buf = synth_noise(kind, recipe.duration_s,
                              seed=_entry_seed(recipe.seed, "neg", i),
                              amplitude=0.6, sample_rate=recipe.sample_rate)
        name = f"neg_{i:04d}.wav"
        write_wav(buf, out / name)
        rows.append((name, "negative", f"neg_{i:04d}"))

    manifest = out / "manifest.csv"
    with open(manifest, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["path", "label", "group"])
        writer.writerows(rows)
    return manifest


def _entry_seed(base: int, tag: str, index: int) -> list[int]:
    # stable per-entry seed material for default_rng
    return [base, sum(tag.encode()), index]
