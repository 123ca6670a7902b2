"""Grad-CAM heatmaps over the last residual block.

The class score (pre-softmax logit) is backpropagated to the last residual
block's output; channel weights are the spatial means of those gradients,
and the weighted, ReLU'd activation sum is upsampled to input resolution
and max-normalized.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import tensor as T
from .dsp import Spectrogram, matrix_to_gray
from .model import Model
from .tensor import Tensor


@dataclass(frozen=True)
class Heatmap:
    values: np.ndarray  # (m, F) in [0, 1]
    target_class: int

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float32)
        object.__setattr__(self, "values", v)
        if v.size and (v.min() < 0 or v.max() > 1):
            raise ValueError("heatmap values must be in [0, 1]")


def bilinear_upsample(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Align-corners bilinear resize of a 2-D map."""
    h, w = img.shape
    ys = np.linspace(0.0, h - 1.0, out_h) if h > 1 else np.zeros(out_h)
    xs = np.linspace(0.0, w - 1.0, out_w) if w > 1 else np.zeros(out_w)
    y0 = np.floor(ys).astype(int)
    x0 = np.floor(xs).astype(int)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    wy = (ys - y0)[:, None]
    wx = (xs - x0)[None, :]
    top = img[np.ix_(y0, x0)] * (1 - wx) + img[np.ix_(y0, x1)] * wx
    bot = img[np.ix_(y1, x0)] * (1 - wx) + img[np.ix_(y1, x1)] * wx
    return top * (1 - wy) + bot * wy


def grad_cam(model: Model, feature, target_class: int) -> Heatmap:
    """Class-activation heatmap for one spectrogram feature.

    feature: Spectrogram or (m, F) array matching the model input shape.
    """
    if target_class not in (0, 1):
        raise ValueError(f"target_class must be 0 or 1, got {target_class}")
    values = feature.values if isinstance(feature, Spectrogram) else feature
    values = np.asarray(values, dtype=np.float32)
    m, f = model.config.input_shape
    if values.shape != (m, f):
        raise ValueError(
            f"feature shape {values.shape} != model input shape {(m, f)}"
        )

    x = Tensor(values[None, :, :, None])
    _, logits, last_block = model.forward_full(x, train=False)
    onehot = np.zeros((1, 2), dtype=np.float32)
    onehot[0, target_class] = 1.0
    score = T.tsum(T.mul(logits, Tensor(onehot)))
    T.backward(score)

    acts = last_block.data[0]  # (h, w, C)
    grads = last_block.grad[0]
    weights = grads.mean(axis=(0, 1))
    cam = np.maximum((acts * weights).sum(axis=-1), 0.0)
    cam = bilinear_upsample(cam, m, f)
    peak = cam.max()
    if peak > 0:
        cam = cam / peak
    return Heatmap(np.clip(cam, 0.0, 1.0), target_class)


def render_overlay(heatmap: Heatmap, spec) -> bytes:
    """Render a color PPM: spectrogram in gray, heatmap as a warm wash.

    A zero heatmap leaves a pure grayscale image; a saturated heatmap
    paints every pixel fully warm.
    """
    values = spec.values if isinstance(spec, Spectrogram) else np.asarray(spec)
    if values.shape != heatmap.values.shape:
        raise ValueError(
            f"spectrogram {values.shape} and heatmap {heatmap.values.shape} differ"
        )
    gray = np.clip(values.astype(np.float64), 0.0, 1.0)
    heat = heatmap.values.astype(np.float64)
    r = gray * (1.0 - heat) + heat
    g = gray * (1.0 - heat) + 0.5 * heat
    b = gray * (1.0 - heat)
    rgb = np.stack([r, g, b], axis=-1)[::-1, :, :]  # low frequencies at bottom
    pixels = (np.clip(rgb, 0.0, 1.0) * 255.0).astype(np.uint8)
    header = b"P6\n%d %d\n255\n" % (pixels.shape[1], pixels.shape[0])
    return header + pixels.tobytes()


def heatmap_overlay(heatmap: Heatmap, spec, path) -> None:
    """Write the overlay PPM to disk; see render_overlay."""
    Path(path).write_bytes(render_overlay(heatmap, spec))


def harmonic_band_mass(heatmap: Heatmap, fundamental_hz: float,
                       n_harmonics: int, sample_rate: int,
                       fft_size: int, tolerance: float = 0.2) -> float:
    """Fraction of heatmap mass inside rows covering the harmonic bands
    k*f0*(1 +/- tolerance), k = 1..n_harmonics."""
    m = heatmap.values.shape[0]
    bin_hz = sample_rate / fft_size
    rows = np.zeros(m, dtype=bool)
    for k in range(1, n_harmonics + 1):
        lo = int(np.floor(0.999 * (1 - tolerance) * k * fundamental_hz / bin_hz))
        hi = int(np.ceil(1.001 * (1 + tolerance) * k * fundamental_hz / bin_hz))
        rows[max(lo, 0) : min(hi + 1, m)] = True
    total = heatmap.values.sum()
    if total == 0:
        return 0.0
    return float(heatmap.values[rows, :].sum() / total)
