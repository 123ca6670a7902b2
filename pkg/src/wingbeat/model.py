"""Residual CNN topology: build, count, save/load, quantize.

The network is B repetitions of [residual block -> 2x2 maxpool -> dropout]
followed by a classification head [flatten -> dense+relu -> dense -> softmax].
A residual block is conv-BN-relu-conv-BN on the main path, an identity (or
1x1 conv when the channel count changes) on the skip path, summed and
passed through a final relu.

Inputs are spectrogram batches shaped (N, m, F, 1), channels last.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import tensor as T
from .tensor import BnState, Tensor

MODEL_MAGIC = b"WBNN"
QUANT_MAGIC = b"WBNQ"
FORMAT_VERSION = 1


class ModelFormatError(ValueError):
    """Raised for unreadable or incompatible model files."""


@dataclass(frozen=True)
class ModelConfig:
    """Topology hyperparameters."""

    kernel: tuple[int, int] = (5, 5)
    blocks: int = 5
    filters: int = 32
    dense_width: int = 256
    input_shape: tuple[int, int] = (513, 60)  # (frequency bins, frames)
    dropout_p: float = 0.2
    bn_eps: float = 1e-3
    bn_momentum: float = 0.99

    def __post_init__(self):
        kh, kw = self.kernel
        if kh % 2 == 0 or kw % 2 == 0 or kh < 1 or kw < 1:
            raise ValueError(f"kernel dims must be odd and positive, got {self.kernel}")
        if self.blocks < 1 or self.filters < 1 or self.dense_width < 1:
            raise ValueError("blocks, filters, dense_width must be >= 1")
        if not 0 <= self.dropout_p < 1:
            raise ValueError(f"dropout_p must be in [0, 1), got {self.dropout_p}")
        self.spatial_plan()  # raises on collapse

    def spatial_plan(self) -> list[tuple[int, int]]:
        """Spatial size after each block's pool; raises on collapse."""
        h, w = self.input_shape
        plan = []
        for b in range(self.blocks):
            h, w = h // 2, w // 2
            if h < 1 or w < 1:
                raise ValueError(
                    f"spatial collapse: block {b} pools to {h}x{w} "
                    f"for input {self.input_shape}"
                )
            plan.append((h, w))
        return plan

    @property
    def flat_width(self) -> int:
        h, w = self.spatial_plan()[-1]
        return h * w * self.filters


class Model:
    """Parameterized network: ordered parameter tensors plus BN state."""

    def __init__(self, config: ModelConfig, dtype=np.float32):
        self.config = config
        self.dtype = dtype
        self.params: dict[str, Tensor] = {}
        self.bn_states: dict[str, BnState] = {}
        kh, kw = config.kernel
        c_in = 1
        for i in range(config.blocks):
            p = config.filters
            self._add_conv(f"block{i}.conv1", kh, kw, c_in, p)
            self._add_bn(f"block{i}.bn1", p)
            self._add_conv(f"block{i}.conv2", kh, kw, p, p)
            self._add_bn(f"block{i}.bn2", p)
            if c_in != p:
                self._add_conv(f"block{i}.skip", 1, 1, c_in, p)
            c_in = p
        self._add_dense("head.dense1", config.flat_width, config.dense_width)
        self._add_dense("head.dense2", config.dense_width, 2)

    def _add_conv(self, name, kh, kw, cin, cout):
        self.params[f"{name}.w"] = Tensor(
            np.zeros((kh, kw, cin, cout), dtype=self.dtype), requires_grad=True)
        self.params[f"{name}.b"] = Tensor(
            np.zeros(cout, dtype=self.dtype), requires_grad=True)

    def _add_bn(self, name, c):
        self.params[f"{name}.gamma"] = Tensor(
            np.ones(c, dtype=self.dtype), requires_grad=True)
        self.params[f"{name}.beta"] = Tensor(
            np.zeros(c, dtype=self.dtype), requires_grad=True)
        self.bn_states[name] = BnState(c, dtype=self.dtype)

    def _add_dense(self, name, d, m):
        self.params[f"{name}.w"] = Tensor(
            np.zeros((d, m), dtype=self.dtype), requires_grad=True)
        self.params[f"{name}.b"] = Tensor(
            np.zeros(m, dtype=self.dtype), requires_grad=True)

    def init_weights(self, seed: int) -> None:
        """He-uniform for conv/dense kernels; biases zero, BN affine identity."""
        rng = np.random.default_rng(seed)
        for name, p in self.params.items():
            if name.endswith(".w"):
                shape = p.data.shape
                fan_in = int(np.prod(shape[:-1])) if len(shape) == 4 else shape[0]
                limit = np.sqrt(6.0 / fan_in)
                p.data[...] = rng.uniform(-limit, limit, shape).astype(self.dtype)

    def trainable(self) -> list[Tensor]:
        return list(self.params.values())

    def _bn(self, name, x, train):
        return T.batchnorm2d(
            x, self.params[f"{name}.gamma"], self.params[f"{name}.beta"],
            self.bn_states[name], eps=self.config.bn_eps,
            momentum=self.config.bn_momentum, train=train)

    def forward_full(self, x, train: bool = False,
                     rng: np.random.Generator | None = None):
        """Run the network; returns (probs, logits, last block pre-pool)."""
        if not isinstance(x, Tensor):
            x = Tensor(np.asarray(x, dtype=self.dtype))
        m, f = self.config.input_shape
        if x.data.ndim != 4 or x.shape[1:] != (m, f, 1):
            raise ValueError(
                f"input shape {x.shape} incompatible with model input ({m}, {f}, 1)"
            )
        last_block = None
        for i in range(self.config.blocks):
            h = T.conv2d(x, self.params[f"block{i}.conv1.w"],
                         self.params[f"block{i}.conv1.b"])
            h = T.relu(self._bn(f"block{i}.bn1", h, train))
            h = T.conv2d(h, self.params[f"block{i}.conv2.w"],
                         self.params[f"block{i}.conv2.b"])
            h = self._bn(f"block{i}.bn2", h, train)
            if f"block{i}.skip.w" in self.params:
                skip = T.conv2d(x, self.params[f"block{i}.skip.w"],
                                self.params[f"block{i}.skip.b"])
            else:
                skip = x
            block_out = T.relu(T.add(h, skip))
            last_block = block_out
            x = T.maxpool2d(block_out)
            x = T.dropout(x, self.config.dropout_p, train, rng)
        flat = T.flatten(x)
        hidden = T.relu(T.dense(flat, self.params["head.dense1.w"],
                                self.params["head.dense1.b"]))
        logits = T.dense(hidden, self.params["head.dense2.w"],
                         self.params["head.dense2.b"])
        return T.softmax(logits), logits, last_block

    def forward(self, x, train: bool = False,
                rng: np.random.Generator | None = None) -> Tensor:
        return self.forward_full(x, train=train, rng=rng)[0]


def build(config: ModelConfig, seed: int = 0) -> Model:
    model = Model(config)
    model.init_weights(seed)
    return model


def count_params(model: Model) -> int:
    """Trainable parameter count (running statistics excluded)."""
    return sum(p.data.size for p in model.params.values())


# ---------------------------------------------------------------------------
# serialization

def _pack_config(cfg: ModelConfig) -> bytes:
    kh, kw = cfg.kernel
    m, f = cfg.input_shape
    return struct.pack("<7I3f", kh, kw, cfg.blocks, cfg.filters,
                       cfg.dense_width, m, f, cfg.dropout_p, cfg.bn_eps,
                       cfg.bn_momentum)


_CONFIG_BYTES = struct.calcsize("<7I3f")


def _unpack_config(body: bytes) -> ModelConfig:
    kh, kw, blocks, filters, dense_width, m, f, p, eps, mom = struct.unpack(
        "<7I3f", body)
    return ModelConfig(kernel=(kh, kw), blocks=blocks, filters=filters,
                       dense_width=dense_width, input_shape=(m, f),
                       dropout_p=round(p, 6), bn_eps=round(eps, 9),
                       bn_momentum=round(mom, 6))


def _pack_array(name: str, arr: np.ndarray) -> bytes:
    enc = name.encode("utf-8")
    out = struct.pack("<I", len(enc)) + enc
    out += struct.pack("<I", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape)
    out += arr.astype("<f4").tobytes()
    return out


class _Reader:
    def __init__(self, raw: bytes, path):
        self.raw = raw
        self.pos = 0
        self.path = path

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.raw):
            raise ModelFormatError(f"{self.path}: truncated file")
        out = self.raw[self.pos : self.pos + n]
        self.pos += n
        return out

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def named_f4(self) -> tuple[str, np.ndarray]:
        name = self.take(self.u32()).decode("utf-8")
        shape = tuple(self.u32() for _ in range(self.u32()))
        count = int(np.prod(shape)) if shape else 1
        data = np.frombuffer(self.take(4 * count), dtype="<f4").reshape(shape)
        return name, data.copy()


def save(model: Model, path) -> None:
    """Write the WBNN container: config header plus named f32 tensors."""
    blob = bytearray()
    blob += MODEL_MAGIC + struct.pack("<I", FORMAT_VERSION)
    blob += _pack_config(model.config)
    arrays: list[tuple[str, np.ndarray]] = [
        (name, p.data) for name, p in model.params.items()
    ]
    for name, st in model.bn_states.items():
        arrays.append((f"{name}.running_mean", st.mean))
        arrays.append((f"{name}.running_var", st.var))
    blob += struct.pack("<I", len(arrays))
    for name, arr in arrays:
        blob += _pack_array(name, arr)
    Path(path).write_bytes(bytes(blob))


def load(path) -> Model:
    raw = Path(path).read_bytes()
    rd = _Reader(raw, path)
    if rd.take(4) != MODEL_MAGIC:
        raise ModelFormatError(f"{path}: bad magic (not a WBNN model file)")
    version = rd.u32()
    if version != FORMAT_VERSION:
        raise ModelFormatError(
            f"{path}: unsupported version {version} (expected {FORMAT_VERSION})"
        )
    cfg = _unpack_config(rd.take(_CONFIG_BYTES))
    model = Model(cfg)
    expected = {name: p.data.shape for name, p in model.params.items()}
    for name, st in model.bn_states.items():
        expected[f"{name}.running_mean"] = st.mean.shape
        expected[f"{name}.running_var"] = st.var.shape
    seen = set()
    for _ in range(rd.u32()):
        name, data = rd.named_f4()
        if name not in expected:
            raise ModelFormatError(f"{path}: unexpected tensor {name!r}")
        if data.shape != expected[name]:
            raise ModelFormatError(
                f"{path}: tensor {name!r} shape {data.shape} != {expected[name]}"
            )
        seen.add(name)
        if name.endswith(".running_mean"):
            model.bn_states[name[: -len(".running_mean")]].mean[:] = data
        elif name.endswith(".running_var"):
            model.bn_states[name[: -len(".running_var")]].var[:] = data
        else:
            model.params[name].data[...] = data
    missing = set(expected) - seen
    if missing:
        raise ModelFormatError(f"{path}: missing tensors {sorted(missing)}")
    return model


# ---------------------------------------------------------------------------
# batchnorm folding and dynamic-range quantization

@dataclass
class FoldedLayer:
    w: np.ndarray
    b: np.ndarray


@dataclass
class FoldedModel:
    """BN-free float equivalent of an eval-mode Model."""

    config: ModelConfig
    blocks: list[tuple[FoldedLayer, FoldedLayer, FoldedLayer | None]]
    dense1: FoldedLayer
    dense2: FoldedLayer


def fold_batchnorm(model: Model) -> FoldedModel:
    """Fold eval-mode BN into the preceding conv (float64 arithmetic)."""
    cfg = model.config
    blocks = []
    for i in range(cfg.blocks):
        folded = []
        for j in (1, 2):
            w = model.params[f"block{i}.conv{j}.w"].data.astype(np.float64)
            b = model.params[f"block{i}.conv{j}.b"].data.astype(np.float64)
            st = model.bn_states[f"block{i}.bn{j}"]
            gamma = model.params[f"block{i}.bn{j}.gamma"].data.astype(np.float64)
            beta = model.params[f"block{i}.bn{j}.beta"].data.astype(np.float64)
            scale = gamma / np.sqrt(st.var.astype(np.float64) + cfg.bn_eps)
            folded.append(FoldedLayer(
                (w * scale).astype(np.float32),
                ((b - st.mean.astype(np.float64)) * scale + beta).astype(np.float32),
            ))
        skip = None
        if f"block{i}.skip.w" in model.params:
            skip = FoldedLayer(model.params[f"block{i}.skip.w"].data.copy(),
                               model.params[f"block{i}.skip.b"].data.copy())
        blocks.append((folded[0], folded[1], skip))
    d1 = FoldedLayer(model.params["head.dense1.w"].data.copy(),
                     model.params["head.dense1.b"].data.copy())
    d2 = FoldedLayer(model.params["head.dense2.w"].data.copy(),
                     model.params["head.dense2.b"].data.copy())
    return FoldedModel(cfg, blocks, d1, d2)


@dataclass
class QuantizedLayer:
    q: np.ndarray  # int8, same shape as the float weight
    scales: np.ndarray  # (out_channels,) float32
    b: np.ndarray  # float32 bias

    @property
    def w(self) -> np.ndarray:
        return self.q.astype(np.float32) * self.scales

    def payload_bytes(self) -> int:
        return self.q.nbytes + self.scales.nbytes


def _quantize_layer(layer: FoldedLayer) -> QuantizedLayer:
    w = layer.w.astype(np.float32)
    absmax = np.abs(w).max(axis=tuple(range(w.ndim - 1)))
    scales = (absmax / 127.0).astype(np.float32)
    safe = np.where(scales > 0, scales, 1.0)
    q = np.clip(np.round(w / safe), -127, 127).astype(np.int8)
    q[..., scales == 0] = 0
    return QuantizedLayer(q, scales, layer.b.astype(np.float32))


@dataclass
class QuantizedModel:
    """Weight-only int8 model; activations stay float32."""

    config: ModelConfig
    blocks: list[tuple[QuantizedLayer, QuantizedLayer, QuantizedLayer | None]]
    dense1: QuantizedLayer
    dense2: QuantizedLayer

    def payload_bytes(self) -> int:
        total = 0
        for c1, c2, skip in self.blocks:
            total += c1.payload_bytes() + c2.payload_bytes()
            if skip is not None:
                total += skip.payload_bytes()
        return total + self.dense1.payload_bytes() + self.dense2.payload_bytes()


def float_weight_payload_bytes(model: Model) -> int:
    """Bytes of conv/dense weight tensors in the float model."""
    return sum(p.data.size * 4 for name, p in model.params.items()
               if name.endswith(".w"))


def quantize_dynamic(model: Model) -> QuantizedModel:
    """Fold BN, then store conv/dense weights as int8 with per-output-channel
    scales s_c = max|w_c| / 127 (zero channels keep scale 0)."""
    folded = fold_batchnorm(model)
    blocks = [
        (_quantize_layer(c1), _quantize_layer(c2),
         _quantize_layer(skip) if skip is not None else None)
        for c1, c2, skip in folded.blocks
    ]
    return QuantizedModel(folded.config, blocks,
                          _quantize_layer(folded.dense1),
                          _quantize_layer(folded.dense2))


# ---------------------------------------------------------------------------
# lean inference path (shared by folded-float and quantized models)

def _conv_raw(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Same-padding stride-1 conv on plain arrays, no graph recording."""
    n, hh, ww, cin = x.shape
    kh, kw, _, cout = w.shape
    ph, pw = kh // 2, kw // 2
    xf = x.reshape(-1, cin)
    out = np.zeros((n, hh, ww, cout), dtype=np.float32)
    scratch = np.empty((n * hh * ww, cout), dtype=np.float32)
    sview = scratch.reshape(n, hh, ww, cout)
    for dy in range(kh):
        for dx in range(kw):
            np.matmul(xf, w[dy, dx], out=scratch)
            oy0, oy1 = max(0, ph - dy), min(hh, hh + ph - dy)
            ox0, ox1 = max(0, pw - dx), min(ww, ww + pw - dx)
            iy0, ix0 = oy0 + dy - ph, ox0 + dx - pw
            out[:, oy0:oy1, ox0:ox1, :] += sview[
                :, iy0 : iy0 + (oy1 - oy0), ix0 : ix0 + (ox1 - ox0), :
            ]
    out += b
    return out


def _pool_raw(x: np.ndarray) -> np.ndarray:
    n, h, w, c = x.shape
    h2, w2 = h // 2, w // 2
    return (x[:, : 2 * h2, : 2 * w2, :]
            .reshape(n, h2, 2, w2, 2, c)
            .max(axis=(2, 4)))


def _softmax_raw(z: np.ndarray) -> np.ndarray:
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def _infer_layers(blocks, dense1, dense2, batch: np.ndarray,
                  return_logits: bool = False) -> np.ndarray:
    x = np.asarray(batch, dtype=np.float32)
    for c1, c2, skip in blocks:
        h = np.maximum(_conv_raw(x, c1.w, c1.b), 0.0)
        h = _conv_raw(h, c2.w, c2.b)
        s = _conv_raw(x, skip.w, skip.b) if skip is not None else x
        x = _pool_raw(np.maximum(h + s, 0.0))
    flat = x.reshape(x.shape[0], -1)
    hidden = np.maximum(flat @ dense1.w + dense1.b, 0.0)
    logits = hidden @ dense2.w + dense2.b
    return logits if return_logits else _softmax_raw(logits)


def infer_folded(folded: FoldedModel, batch: np.ndarray,
                 return_logits: bool = False) -> np.ndarray:
    """Forward through the BN-folded float model."""
    return _infer_layers(folded.blocks, folded.dense1, folded.dense2, batch,
                         return_logits)


def infer_quantized(qm: QuantizedModel, batch: np.ndarray) -> np.ndarray:
    """Forward through the quantized model: dequantized int8 weights,
    float activations.  Returns class probabilities (N, 2)."""
    cached = getattr(qm, "_dequant", None)
    if cached is None:
        # dequantize once; repeated inference reuses the float weights
        cached = FoldedModel(
            qm.config,
            [(FoldedLayer(c1.w, c1.b), FoldedLayer(c2.w, c2.b),
              FoldedLayer(s.w, s.b) if s is not None else None)
             for c1, c2, s in qm.blocks],
            FoldedLayer(qm.dense1.w, qm.dense1.b),
            FoldedLayer(qm.dense2.w, qm.dense2.b),
        )
        qm._dequant = cached
    return _infer_layers(cached.blocks, cached.dense1, cached.dense2, batch)


def save_quantized(qm: QuantizedModel, path) -> None:
    """Write the WBNQ container: config, then per-layer int8 + scales + bias."""
    blob = bytearray()
    blob += QUANT_MAGIC + struct.pack("<I", FORMAT_VERSION)
    blob += _pack_config(qm.config)

    def put(name: str, layer: QuantizedLayer | None):
        if layer is None:
            return
        enc = name.encode()
        blob.extend(struct.pack("<I", len(enc)) + enc)
        blob.extend(struct.pack("<I", layer.q.ndim)
                    + struct.pack(f"<{layer.q.ndim}I", *layer.q.shape))
        blob.extend(layer.q.tobytes())
        blob.extend(layer.scales.astype("<f4").tobytes())
        blob.extend(struct.pack("<I", layer.b.size)
                    + layer.b.astype("<f4").tobytes())

    names = []
    for i, (c1, c2, skip) in enumerate(qm.blocks):
        names += [(f"block{i}.conv1", c1), (f"block{i}.conv2", c2)]
        if skip is not None:
            names.append((f"block{i}.skip", skip))
    names += [("dense1", qm.dense1), ("dense2", qm.dense2)]
    blob.extend(struct.pack("<I", len(names)))
    for name, layer in names:
        put(name, layer)
    Path(path).write_bytes(bytes(blob))


def load_quantized(path) -> QuantizedModel:
    raw = Path(path).read_bytes()
    rd = _Reader(raw, path)
    if rd.take(4) != QUANT_MAGIC:
        raise ModelFormatError(f"{path}: bad magic (not a WBNQ model file)")
    version = rd.u32()
    if version != FORMAT_VERSION:
        raise ModelFormatError(
            f"{path}: unsupported version {version} (expected {FORMAT_VERSION})"
        )
    cfg = _unpack_config(rd.take(_CONFIG_BYTES))
    layers: dict[str, QuantizedLayer] = {}
    for _ in range(rd.u32()):
        name = rd.take(rd.u32()).decode()
        shape = tuple(rd.u32() for _ in range(rd.u32()))
        q = np.frombuffer(rd.take(int(np.prod(shape))), dtype=np.int8)
        q = q.reshape(shape).copy()
        scales = np.frombuffer(rd.take(4 * shape[-1]), dtype="<f4").copy()
        bsize = rd.u32()
        b = np.frombuffer(rd.take(4 * bsize), dtype="<f4").copy()
        layers[name] = QuantizedLayer(q, scales, b)
    blocks = []
    for i in range(cfg.blocks):
        blocks.append((layers[f"block{i}.conv1"], layers[f"block{i}.conv2"],
                       layers.get(f"block{i}.skip")))
    return QuantizedModel(cfg, blocks, layers["dense1"], layers["dense2"])


def detect_model_kind(path) -> str:
    """'float' for WBNN files, 'quantized' for WBNQ."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
    if magic == MODEL_MAGIC:
        return "float"
    if magic == QUANT_MAGIC:
        return "quantized"
    raise ModelFormatError(f"{path}: unrecognized model file")
