"""Manifest ingestion, feature building, fold planning, batch sampling.

A manifest is a CSV with header ``path,label,group``.  Features are built
per file (standardize -> segment -> STFT -> normalize) and every segment
inherits its file's label and group.  Folds are stratified by label and
grouped by recording so overlapping segments never straddle a train/test
boundary.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .audio_io import AudioBuffer, read_wav, standardize_audio
from .dsp import Spectrogram, StftConfig, normalize_db, stft_db
from .segmenter import SegmentSpec, segment

LABELS = {"positive": 1, "negative": 0}
CACHE_MAGIC = b"WBFT"
CACHE_VERSION = 1


class ManifestError(ValueError):
    """Raised for malformed manifests or unreadable entries."""


@dataclass(frozen=True)
class ManifestEntry:
    path: Path
    label: int  # 1 positive, 0 negative
    group_id: str


@dataclass(frozen=True)
class PipelineConfig:
    """End-to-end feature extraction parameters."""

    target_rate: int = 8000
    stft: StftConfig = field(default_factory=StftConfig)
    frames_per_feature: int = 60

    @property
    def segment_spec(self) -> SegmentSpec:
        return SegmentSpec(self.frames_per_feature, self.stft)

    @property
    def feature_shape(self) -> tuple[int, int]:
        return (self.stft.n_bins, self.frames_per_feature)


@dataclass
class FeatureSet:
    """Stacked features with parallel labels and group ids."""

    features: np.ndarray  # (n, m, F) float32
    labels: np.ndarray  # (n,) uint8
    groups: list[str]

    def __post_init__(self):
        if not (len(self.features) == len(self.labels) == len(self.groups)):
            raise ValueError("features, labels, groups must have equal lengths")

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def feature_shape(self) -> tuple[int, int]:
        return self.features.shape[1:]


@dataclass(frozen=True)
class FoldPlan:
    k: int
    assignments: np.ndarray  # (n,) fold index per feature
    class_weights: np.ndarray  # (2,) indexed by label value

    def train_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignments != fold)

    def test_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignments == fold)


def load_manifest(path) -> list[ManifestEntry]:
    """Parse a ``path,label,group`` CSV; relative paths resolve against it."""
    path = Path(path)
    if not path.exists():
        raise ManifestError(f"manifest not found: {path}")
    entries: list[ManifestEntry] = []
    seen: set[str] = set()
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["path", "label", "group"]:
            raise ManifestError(f"{path}: expected header 'path,label,group'")
        for lineno, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != 3:
                raise ManifestError(f"{path}:{lineno}: expected 3 columns, got {len(row)}")
            raw_path, raw_label, group = (c.strip() for c in row)
            if raw_label not in LABELS:
                raise ManifestError(
                    f"{path}:{lineno}: unknown label {raw_label!r} "
                    f"(expected 'positive' or 'negative')"
                )
            if raw_path in seen:
                raise ManifestError(f"{path}:{lineno}: duplicate path {raw_path!r}")
            seen.add(raw_path)
            resolved = Path(raw_path)
            if not resolved.is_absolute():
                resolved = path.parent / resolved
            entries.append(ManifestEntry(resolved, LABELS[raw_label], group))
    return entries


def features_from_buffer(buf: AudioBuffer, cfg: PipelineConfig) -> list[Spectrogram]:
    """standardize -> segment -> STFT dB -> normalize, for one clip."""
    std = standardize_audio(buf, cfg.target_rate)
    out = []
    for seg in segment(std, cfg.segment_spec):
        db = stft_db(seg, cfg.stft)
        out.append(normalize_db(db, cfg.stft, cfg.target_rate))
    return out


def build_features(entries: list[ManifestEntry], cfg: PipelineConfig) -> FeatureSet:
    """Build the full FeatureSet for a manifest, in manifest order.

    Any unreadable or unprocessable file aborts the build with the file
    name attached.
    """
    feats: list[np.ndarray] = []
    labels: list[int] = []
    groups: list[str] = []
    for entry in entries:
        try:
            buf = read_wav(entry.path)
            specs = features_from_buffer(buf, cfg)
        except Exception as exc:
            raise ManifestError(f"{entry.path}: {exc}") from exc
        for spec in specs:
            feats.append(spec.values)
            labels.append(entry.label)
            groups.append(entry.group_id)
    m, f = cfg.feature_shape
    stacked = (np.stack(feats) if feats
               else np.zeros((0, m, f), dtype=np.float32))
    return FeatureSet(stacked, np.asarray(labels, dtype=np.uint8), groups)


def plan_folds(fs: FeatureSet, k: int = 10, seed: int = 0,
               group_folds: bool = True) -> FoldPlan:
    """Stratified fold assignment, grouped by recording.

    All segments of one group land in the same fold; within each class,
    groups are dealt to the fold currently holding the fewest samples of
    that class (seeded shuffle breaks ties), which keeps every fold's
    class mix close to the global one.  ``group_folds=False`` falls back
    to segment-level stratification.
    """
    n = len(fs)
    counts = np.bincount(fs.labels, minlength=2)
    if counts[0] == 0 or counts[1] == 0:
        raise ValueError(
            f"both classes must be present, got {counts[1]} positive / "
            f"{counts[0]} negative"
        )
    if k < 2 or k > counts.min():
        raise ValueError(f"k={k} must be in [2, min class count {counts.min()}]")

    rng = np.random.default_rng(seed)
    assignments = np.full(n, -1, dtype=np.int64)

    if group_folds:
        units: dict[str, list[int]] = {}
        for i, g in enumerate(fs.groups):
            units.setdefault(g, []).append(i)
        unit_label = {g: int(np.round(fs.labels[idx].mean() + 1e-9))
                      for g, idx in units.items()}
    else:
        units = {f"#{i}": [i] for i in range(n)}
        unit_label = {f"#{i}": int(fs.labels[i]) for i in range(n)}

    for label in (1, 0):
        names = sorted(g for g in units if unit_label[g] == label)
        rng.shuffle(names)
        names.sort(key=lambda g: -len(units[g]))  # big groups placed first
        fill = np.zeros(k, dtype=np.int64)
        order = rng.permutation(k)  # randomize which folds fill first
        for g in names:
            fold = order[np.argmin(fill[order])]
            assignments[units[g]] = fold
            fill[fold] += len(units[g])

    total = counts.sum()
    weights = np.array([total / (2.0 * counts[0]), total / (2.0 * counts[1])])
    return FoldPlan(k, assignments, weights)


def weighted_batches(fs: FeatureSet, plan: FoldPlan, fold: int,
                     batch_size: int = 32, seed: int = 0):
    """Infinite stream of class-rebalanced training batches.

    Samples are drawn with replacement from all folds except ``fold``,
    each with probability proportional to its class weight, so the
    expected batch composition is 50/50 regardless of the raw imbalance.
    Yields (features (b, m, F, 1) float32, one-hot labels (b, 2) float32).
    """
    if not 0 <= fold < plan.k:
        raise ValueError(f"fold {fold} outside [0, {plan.k})")
    train_idx = plan.train_indices(fold)
    if train_idx.size == 0:
        raise ValueError("no training samples outside the held-out fold")
    probs = plan.class_weights[fs.labels[train_idx]]
    probs = probs / probs.sum()
    rng = np.random.default_rng(seed)
    while True:
        chosen = rng.choice(train_idx, size=batch_size, replace=True, p=probs)
        x = fs.features[chosen][..., None].astype(np.float32)
        y = np.zeros((batch_size, 2), dtype=np.float32)
        y[np.arange(batch_size), fs.labels[chosen]] = 1.0
        yield x, y


def save_features(fs: FeatureSet, path) -> None:
    """Write the documented WBFT cache: header, f32 data, labels, groups."""
    n, m, f = fs.features.shape
    blob = bytearray()
    blob += CACHE_MAGIC
    blob += struct.pack("<IIII", CACHE_VERSION, n, m, f)
    blob += fs.features.astype("<f4").tobytes()
    blob += fs.labels.astype(np.uint8).tobytes()
    for g in fs.groups:
        enc = g.encode("utf-8")
        blob += struct.pack("<I", len(enc)) + enc
    Path(path).write_bytes(bytes(blob))


def load_features(path) -> FeatureSet:
    raw = Path(path).read_bytes()
    if len(raw) < 20 or raw[:4] != CACHE_MAGIC:
        raise ValueError(f"{path}: not a WBFT feature cache")
    version, n, m, f = struct.unpack("<IIII", raw[4:20])
    if version != CACHE_VERSION:
        raise ValueError(f"{path}: unsupported cache version {version}")
    pos = 20
    need = n * m * f * 4
    if len(raw) < pos + need + n:
        raise ValueError(f"{path}: truncated feature cache")
    feats = np.frombuffer(raw[pos : pos + need], dtype="<f4").reshape(n, m, f)
    pos += need
    labels = np.frombuffer(raw[pos : pos + n], dtype=np.uint8).copy()
    pos += n
    groups = []
    for _ in range(n):
        (ln,) = struct.unpack("<I", raw[pos : pos + 4])
        pos += 4
        groups.append(raw[pos : pos + ln].decode("utf-8"))
        pos += ln
    return FeatureSet(feats.copy(), labels, groups)
