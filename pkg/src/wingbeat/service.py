"""FastAPI service wrapping the classifier for live, multi-client use.

The service mirrors the deployment story of the toolkit: train offline
with the CLI, then serve a frozen model.  Endpoints accept raw WAV bytes
(the same subset read_wav supports) and return per-segment probabilities,
Grad-CAM overlays, or synthesized test clips.
"""

from __future__ import annotations

from typing import Literal

import numpy as np
from fastapi import FastAPI, HTTPException, Request, Response
from pydantic import BaseModel, Field

from . import model as M
from .audio_io import WavFormatError, decode_wav, encode_wav
from .dataset import PipelineConfig, features_from_buffer
from .explain import grad_cam, render_overlay
from .synth import NOISE_KINDS, WingbeatProfile, synth_noise, synth_wingbeat
from .trainer import predict


class HealthResponse(BaseModel):
    status: str = "ok"
    model_loaded: bool


class ModelInfo(BaseModel):
    kernel: tuple[int, int]
    blocks: int
    filters: int
    dense_width: int
    input_shape: tuple[int, int]
    param_count: int
    sample_rate: int


class SegmentScore(BaseModel):
    index: int
    probability: float = Field(ge=0.0, le=1.0)


class InferResponse(BaseModel):
    segments: list[SegmentScore]
    aggregate: float = Field(ge=0.0, le=1.0)
    label: Literal["positive", "negative"]


class SynthRequest(BaseModel):
    kind: Literal["wingbeat", "white", "pink", "babble"] = "wingbeat"
    fundamental_hz: float = Field(600.0, gt=0)
    n_harmonics: int = Field(3, ge=1)
    duration_s: float = Field(2.0, gt=0, le=30)
    seed: int = 0
    amplitude: float = Field(0.8, ge=0.0, le=1.0)
    sample_rate: int = Field(8000, ge=8000, le=48000)


def create_app(model_path=None, pipeline: PipelineConfig | None = None) -> FastAPI:
    pipeline = pipeline or PipelineConfig()
    app = FastAPI(title="wingbeat", version="0.1.0")
    state = {"model": M.load(model_path) if model_path else None}

    def require_model() -> M.Model:
        net = state["model"]
        if net is None:
            raise HTTPException(status_code=409, detail="no model loaded")
        return net

    async def read_audio(request: Request):
        raw = await request.body()
        try:
            return decode_wav(raw, name="<upload>")
        except WavFormatError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc

    def extract(buf):
        feats = features_from_buffer(buf, pipeline)
        if not feats:
            raise HTTPException(
                status_code=400,
                detail=f"clip too short: needs >= {pipeline.segment_spec.slide} "
                       f"samples at {pipeline.target_rate} Hz",
            )
        return feats

    @app.get("/health", response_model=HealthResponse)
    def health():
        return HealthResponse(model_loaded=state["model"] is not None)

    @app.get("/model", response_model=ModelInfo)
    def model_info():
        net = require_model()
        cfg = net.config
        return ModelInfo(kernel=cfg.kernel, blocks=cfg.blocks,
                         filters=cfg.filters, dense_width=cfg.dense_width,
                         input_shape=cfg.input_shape,
                         param_count=M.count_params(net),
                         sample_rate=pipeline.target_rate)

    @app.post("/infer", response_model=InferResponse)
    async def infer(request: Request):
        net = require_model()
        feats = extract(await read_audio(request))
        stack = np.stack([s.values for s in feats])
        probs = predict(net, stack)
        aggregate = float(probs.max())
        return InferResponse(
            segments=[SegmentScore(index=i, probability=float(p))
                      for i, p in enumerate(probs)],
            aggregate=aggregate,
            label="positive" if aggregate >= 0.5 else "negative",
        )

    @app.post("/gradcam")
    async def gradcam(request: Request, segment: int = 0,
                      target: Literal["positive", "negative"] = "positive"):
        net = require_model()
        feats = extract(await read_audio(request))
        if not 0 <= segment < len(feats):
            raise HTTPException(
                status_code=400,
                detail=f"segment {segment} out of range (clip has {len(feats)})",
            )
        heat = grad_cam(net, feats[segment], 1 if target == "positive" else 0)
        data = render_overlay(heat, feats[segment])
        return Response(content=data, media_type="image/x-portable-pixmap")

    @app.post("/synth")
    def synth(req: SynthRequest):
        if req.kind == "wingbeat":
            profile = WingbeatProfile(fundamental_hz=req.fundamental_hz,
                                      n_harmonics=req.n_harmonics,
                                      amplitude=req.amplitude)
            buf = synth_wingbeat(profile, req.duration_s, req.seed,
                                 req.sample_rate)
        else:
            buf = synth_noise(req.kind, req.duration_s, req.seed,
                              req.amplitude, req.sample_rate)
        return Response(content=encode_wav(buf), media_type="audio/wav")

    return app
