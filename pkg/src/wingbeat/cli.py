"""Command-line entry point: synth, features, train, evaluate, sweep,
gradcam, quantize, infer, bench, serve.

Exit codes: 0 success, 2 usage/config error, 3 data error, 4 numeric
divergence.  All file outputs are written atomically (temp file + rename)
and every subcommand is deterministic under --seed (bench timings aside).
"""

from __future__ import annotations

import os

# Cap math-library threads before numpy comes in.
_threads = os.environ.get("WINGBEAT_THREADS")
if _threads:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(_var, _threads)

import argparse
import json
import statistics
import sys
import time
import urllib.request
from pathlib import Path

import numpy as np

from . import model as M
from .audio_io import WavFormatError, read_wav
from .dataset import (FeatureSet, ManifestError, PipelineConfig,
                      build_features, features_from_buffer, load_features,
                      load_manifest, plan_folds, save_features)
from .dsp import StftConfig, mel_filterbank, spectrogram_to_image, stft_magnitude
from .evaluator import SweepPlan, confusion_render, greedy_sweep, metrics
from .explain import grad_cam, heatmap_overlay
from .model import ModelConfig, ModelFormatError
from .segmenter import segment
from .synth import DatasetRecipe, synth_dataset, synth_wingbeat, MALE_AEGYPTI
from .trainer import (DivergenceError, TrainConfig, aggregate_reports,
                      cross_validate, evaluate_confusion, predict)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


class ConfigError(ValueError):
    """Raised for invalid run configuration."""


# ---------------------------------------------------------------------------
# run configuration: one JSON document, strict keys, CLI overrides

DEFAULT_CONFIG = {
    "pipeline": {"sample_rate": 8000, "fft_size": 1024, "hop": 256, "frames": 60},
    "model": {"kernel": 5, "blocks": 5, "filters": 32, "dense_width": 256,
              "dropout": 0.2},
    "train": {"epochs": 2, "batch_size": 32, "lr": 1e-3, "folds": 10,
              "seed": 0, "group_folds": True},
}

_SCHEMA = {
    "pipeline": {"sample_rate": int, "fft_size": int, "hop": int, "frames": int},
    "model": {"kernel": int, "blocks": int, "filters": int, "dense_width": int,
              "dropout": float},
    "train": {"epochs": int, "batch_size": int, "lr": float, "folds": int,
              "seed": int, "group_folds": bool},
}


def _check_section(name: str, section: dict, schema: dict) -> None:
    unknown = set(section) - set(schema)
    if unknown:
        raise ConfigError(f"unknown keys in {name!r}: {sorted(unknown)}")
    for key, value in section.items():
        want = schema[key]
        ok = isinstance(value, bool) if want is bool else (
            isinstance(value, (int, float)) if want is float
            else isinstance(value, int) and not isinstance(value, bool))
        if not ok:
            raise ConfigError(f"{name}.{key}: expected {want.__name__}, "
                              f"got {type(value).__name__}")


def load_run_config(path=None, overrides: dict | None = None) -> dict:
    """Merge defaults <- JSON file <- CLI overrides, rejecting unknown keys."""
    cfg = {sec: dict(vals) for sec, vals in DEFAULT_CONFIG.items()}
    if path is not None:
        try:
            doc = json.loads(Path(path).read_text())
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}")
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})")
        if not isinstance(doc, dict):
            raise ConfigError(f"{path}: top level must be an object")
        unknown = set(doc) - set(_SCHEMA)
        if unknown:
            raise ConfigError(f"{path}: unknown sections {sorted(unknown)}")
        for sec, vals in doc.items():
            if not isinstance(vals, dict):
                raise ConfigError(f"{path}: section {sec!r} must be an object")
            _check_section(sec, vals, _SCHEMA[sec])
            cfg[sec].update(vals)
    for dotted, value in (overrides or {}).items():
        if value is None:
            continue
        sec, key = dotted.split(".", 1)
        cfg[sec][key] = value
    for sec, vals in cfg.items():
        _check_section(sec, vals, _SCHEMA[sec])
    return cfg


def pipeline_from(cfg: dict) -> PipelineConfig:
    p = cfg["pipeline"]
    return PipelineConfig(target_rate=p["sample_rate"],
                          stft=StftConfig(p["fft_size"], p["hop"]),
                          frames_per_feature=p["frames"])


def model_from(cfg: dict) -> ModelConfig:
    p, m = cfg["pipeline"], cfg["model"]
    k = m["kernel"]
    return ModelConfig(kernel=(k, k), blocks=m["blocks"], filters=m["filters"],
                       dense_width=m["dense_width"],
                       input_shape=(p["fft_size"] // 2 + 1, p["frames"]),
                       dropout_p=m["dropout"])


def train_from(cfg: dict) -> TrainConfig:
    t = cfg["train"]
    return TrainConfig(epochs=t["epochs"], batch_size=t["batch_size"],
                       lr=t["lr"], seed=t["seed"], folds=t["folds"])


# ---------------------------------------------------------------------------
# atomic output helpers

def atomic_write_bytes(path, data: bytes) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path)


def atomic_write_text(path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def atomic_json(path, obj) -> None:
    atomic_write_text(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def atomic_save(save_fn, obj, path) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    save_fn(obj, tmp)
    os.replace(tmp, path)


# ---------------------------------------------------------------------------
# subcommands

def cmd_synth(args) -> int:
    recipe = DatasetRecipe(n_pos=args.pos, n_neg=args.neg, seed=args.seed,
                           snr_db=args.snr_db, duration_s=args.duration,
                           sample_rate=args.sample_rate)
    manifest = synth_dataset(recipe, args.out)
    print(f"wrote {args.pos + args.neg} clips, manifest: {manifest}")
    return EXIT_OK


def _load_featureset(args, pcfg: PipelineConfig) -> FeatureSet:
    if getattr(args, "features", None):
        return load_features(args.features)
    entries = load_manifest(args.manifest)
    return build_features(entries, pcfg)


def cmd_features(args) -> int:
    cfg = load_run_config(args.config, _pipeline_overrides(args))
    pcfg = pipeline_from(cfg)
    entries = load_manifest(args.manifest)
    fs = build_features(entries, pcfg)
    atomic_save(save_features, fs, args.out)
    print(f"cached {len(fs)} features of shape {fs.feature_shape} -> {args.out}")

    if args.images_dir:
        img_dir = Path(args.images_dir)
        img_dir.mkdir(parents=True, exist_ok=True)
        for i in range(min(len(fs), args.max_images)):
            spectrogram_to_image(fs.features[i], img_dir / f"feature_{i:04d}.pgm")
        if args.legacy_mel:
            # comparison path: mel-warped versions of the same features
            for i, entry in enumerate(entries[: args.max_images]):
                buf = read_wav(entry.path)
                segs = segment(buf, pcfg.segment_spec)
                if not segs:
                    continue
                power = stft_magnitude(segs[0], pcfg.stft) ** 2
                melspec = mel_filterbank(power, args.legacy_mel, pcfg.target_rate)
                db = 10.0 * np.log10(np.maximum(melspec, melspec.max() * 1e-12)
                                     / max(melspec.max(), 1e-30))
                img = np.clip(db / 80.0 + 1.0, 0.0, 1.0)
                spectrogram_to_image(img, img_dir / f"legacy_mel_{i:04d}.pgm")
        print(f"wrote images to {img_dir}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = load_run_config(args.config, _train_overrides(args))
    pcfg, mcfg, tcfg = pipeline_from(cfg), model_from(cfg), train_from(cfg)
    fs = _load_featureset(args, pcfg)
    plan = plan_folds(fs, k=tcfg.folds, seed=tcfg.seed,
                      group_folds=cfg["train"]["group_folds"])
    reports, models = cross_validate(fs, plan, mcfg, tcfg)

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    fold_metrics = [metrics(r.confusion) for r in reports]
    best = max(range(len(reports)), key=lambda i: (fold_metrics[i].f1, -i))
    atomic_save(M.save, models[best], out_dir / "model.wbnn")

    lines = [json.dumps(r.as_dict(), sort_keys=True) for r in reports]
    atomic_write_text(out_dir / "folds.jsonl", "\n".join(lines) + "\n")

    summary = {
        "config": cfg,
        "n_features": len(fs),
        "feature_shape": list(fs.feature_shape),
        "param_count": M.count_params(models[best]),
        "best_fold": best,
        "metrics": aggregate_reports(reports),
    }
    atomic_json(out_dir / "summary.json", summary)

    agg = summary["metrics"]
    print(f"{tcfg.folds}-fold CV on {len(fs)} features: "
          f"acc {agg['accuracy']['mean']:.3f} +/- {agg['accuracy']['std']:.3f}, "
          f"f1 {agg['f1']['mean']:.3f} +/- {agg['f1']['std']:.3f}")
    print(f"artifacts in {out_dir}: model.wbnn folds.jsonl summary.json")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    cfg = load_run_config(args.config, _pipeline_overrides(args))
    pcfg = pipeline_from(cfg)
    net = M.load(args.model)
    fs = _load_featureset(args, pcfg)
    confusion = evaluate_confusion(net, fs.features, fs.labels)
    rep = metrics(confusion)
    text, csv_text = confusion_render(confusion)
    print(text)
    print(f"accuracy {rep.accuracy:.4f}  precision {rep.precision:.4f}  "
          f"recall {rep.recall:.4f}  f1 {rep.f1:.4f}")
    if args.out:
        tp, fp, fn, tn = confusion
        atomic_json(args.out, {
            "confusion": {"tp": tp, "fp": fp, "fn": fn, "tn": tn},
            "metrics": rep.as_dict(),
        })
    if args.csv:
        atomic_write_text(args.csv, csv_text)
    return EXIT_OK


SWEEP_AXES = {
    "K": (3, 5, 7),
    "B": (3, 4, 5),
    "P": (16, 32, 64),
    "W": (256, 512, 1024),
    "H": (128, 256, 512),
    "F": (50, 60, 70),
}
SWEEP_BASELINE = {"K": 5, "B": 4, "P": 32, "W": 512, "H": 256, "F": 60}


def cmd_sweep(args) -> int:
    axis_names = [a.strip() for a in args.axes.split(",") if a.strip()]
    for name in axis_names:
        if name not in SWEEP_AXES:
            raise ConfigError(f"unknown sweep axis {name!r}; "
                              f"choose from {sorted(SWEEP_AXES)}")
    if not axis_names:
        raise ConfigError("no sweep axes given")
    cfg = load_run_config(args.config, None)
    entries = load_manifest(args.manifest)
    tcfg = TrainConfig(epochs=args.epochs, lr=cfg["train"]["lr"],
                       seed=args.seed, folds=args.folds)
    feature_cache: dict[tuple, FeatureSet] = {}

    def run(sweep_cfg: dict):
        key = (sweep_cfg["W"], sweep_cfg["H"], sweep_cfg["F"])
        if key not in feature_cache:
            pcfg = PipelineConfig(cfg["pipeline"]["sample_rate"],
                                  StftConfig(sweep_cfg["W"], sweep_cfg["H"]),
                                  sweep_cfg["F"])
            feature_cache[key] = build_features(entries, pcfg)
        fs = feature_cache[key]
        mcfg = _sweep_model(sweep_cfg)
        plan = plan_folds(fs, k=tcfg.folds, seed=tcfg.seed)
        reports, _ = cross_validate(fs, plan, mcfg, tcfg)
        agg = aggregate_reports(reports)
        from .evaluator import MetricsReport
        return MetricsReport(agg["accuracy"]["mean"], agg["precision"]["mean"],
                             agg["recall"]["mean"], agg["f1"]["mean"])

    def _sweep_model(sweep_cfg: dict) -> ModelConfig:
        return ModelConfig(kernel=(sweep_cfg["K"], sweep_cfg["K"]),
                           blocks=sweep_cfg["B"], filters=sweep_cfg["P"],
                           input_shape=(sweep_cfg["W"] // 2 + 1, sweep_cfg["F"]))

    def size_of(sweep_cfg: dict) -> int:
        return M.count_params(M.Model(_sweep_model(sweep_cfg)))

    plan = SweepPlan(tuple((n, SWEEP_AXES[n]) for n in axis_names),
                     dict(SWEEP_BASELINE))
    log = greedy_sweep(plan, run, size_of=size_of)
    doc = {
        "best_config": log.best_config,
        "evaluations": [
            {"axis": e.axis, "candidate": e.candidate, "config": e.config,
             "metrics": e.report.as_dict()}
            for e in log.entries
        ],
    }
    atomic_json(args.out, doc)
    print(f"{len(log.entries)} evaluations; best {log.best_config} -> {args.out}")
    return EXIT_OK


def cmd_gradcam(args) -> int:
    cfg = load_run_config(args.config, _pipeline_overrides(args))
    pcfg = pipeline_from(cfg)
    net = M.load(args.model)
    buf = read_wav(args.input)
    feats = features_from_buffer(buf, pcfg)
    if not feats:
        raise ManifestError(f"{args.input}: clip too short to segment")
    target = 1 if args.target == "pos" else 0
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    bin_hz = pcfg.target_rate / pcfg.stft.fft_size
    for i, feat in enumerate(feats):
        heat = grad_cam(net, feat, target)
        path = out_dir / f"gradcam_{i:03d}.ppm"
        heatmap_overlay(heat, feat, path)
        row_mass = heat.values.sum(axis=1)
        peak_row = int(row_mass.argmax())
        print(f"segment {i}: peak activation near {peak_row * bin_hz:.0f} Hz "
              f"-> {path}")
    return EXIT_OK


def cmd_quantize(args) -> int:
    net = M.load(args.model)
    qm = M.quantize_dynamic(net)
    atomic_save(M.save_quantized, qm, args.out)
    float_bytes = M.float_weight_payload_bytes(net)
    quant_bytes = qm.payload_bytes()
    doc = {"float_weight_bytes": float_bytes,
           "quantized_weight_bytes": quant_bytes,
           "payload_ratio": quant_bytes / float_bytes,
           "out": str(args.out)}
    print(json.dumps(doc, indent=2, sort_keys=True))
    return EXIT_OK


def cmd_infer(args) -> int:
    if args.server:
        return _infer_remote(args)
    cfg = load_run_config(args.config, _pipeline_overrides(args))
    pcfg = pipeline_from(cfg)
    kind = M.detect_model_kind(args.model)
    buf = read_wav(args.input)
    feats = features_from_buffer(buf, pcfg)
    if not feats:
        raise ManifestError(f"{args.input}: clip too short to segment")
    stack = np.stack([f.values for f in feats])
    if kind == "float":
        probs = predict(M.load(args.model), stack)
    else:
        qm = M.load_quantized(args.model)
        probs = M.infer_quantized(qm, stack[..., None])[:, 1]
    aggregate = float(np.max(probs))
    label = "positive" if aggregate >= 0.5 else "negative"
    if args.json:
        print(json.dumps({
            "segments": [{"index": i, "probability": float(p)}
                         for i, p in enumerate(probs)],
            "aggregate": aggregate, "label": label}, sort_keys=True))
    else:
        for i, p in enumerate(probs):
            print(f"segment {i}: p(positive) = {p:.4f}")
        print(f"aggregate: {aggregate:.4f} ({label})")
    return EXIT_OK


def _infer_remote(args) -> int:
    raw = Path(args.input).read_bytes()
    url = args.server.rstrip("/") + "/infer"
    req = urllib.request.Request(url, data=raw,
                                 headers={"Content-Type": "audio/wav"})
    with urllib.request.urlopen(req) as resp:
        doc = json.loads(resp.read())
    if args.json:
        print(json.dumps(doc, sort_keys=True))
    else:
        for seg in doc["segments"]:
            print(f"segment {seg['index']}: p(positive) = {seg['probability']:.4f}")
        print(f"aggregate: {doc['aggregate']:.4f} ({doc['label']})")
    return EXIT_OK


def cmd_bench(args) -> int:
    if args.n < 1:
        raise ConfigError(f"--n must be >= 1, got {args.n}")
    net = M.load(args.model)
    qm = M.quantize_dynamic(net)
    m, f = net.config.input_shape
    w = 2 * (m - 1)
    buf = synth_wingbeat(MALE_AEGYPTI, duration_s=(w + (f - 1) * (w // 4)) / 8000
                         + 0.1, seed=args.seed)
    pcfg = PipelineConfig(8000, StftConfig(w, w // 4), f)
    feats = features_from_buffer(buf, pcfg)
    x = feats[0].values[None, :, :, None].astype(np.float32)

    def timeit(fn):
        fn()  # warm-up
        samples = []
        for _ in range(args.n):
            t0 = time.perf_counter()
            fn()
            samples.append(time.perf_counter() - t0)
        samples.sort()
        return {"mean_ms": 1e3 * statistics.fmean(samples),
                "p50_ms": 1e3 * samples[len(samples) // 2],
                "p95_ms": 1e3 * samples[min(len(samples) - 1,
                                            int(0.95 * len(samples)))]}

    float_stats = timeit(lambda: net.forward(x, train=False))
    quant_stats = timeit(lambda: M.infer_quantized(qm, x))
    doc = {"n": args.n, "float": float_stats, "quantized": quant_stats,
           "speedup_ratio": quant_stats["mean_ms"] / float_stats["mean_ms"]}
    print(json.dumps(doc, indent=2, sort_keys=True))
    return EXIT_OK


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    cfg = load_run_config(args.config, _pipeline_overrides(args))
    app = create_app(model_path=args.model, pipeline=pipeline_from(cfg))
    uvicorn.run(app, host=args.host, port=args.port)
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument wiring

def _pipeline_overrides(args) -> dict:
    return {
        "pipeline.sample_rate": getattr(args, "sample_rate", None),
        "pipeline.fft_size": getattr(args, "fft_size", None),
        "pipeline.hop": getattr(args, "hop", None),
        "pipeline.frames": getattr(args, "frames", None),
    }


def _train_overrides(args) -> dict:
    over = _pipeline_overrides(args)
    over.update({
        "model.kernel": args.kernel,
        "model.blocks": args.blocks,
        "model.filters": args.filters,
        "train.epochs": args.epochs,
        "train.batch_size": args.batch_size,
        "train.lr": args.lr,
        "train.folds": args.folds,
        "train.seed": args.seed,
        "train.group_folds": False if args.no_group_folds else None,
    })
    return over


def _add_pipeline_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON run-config file")
    p.add_argument("--sample-rate", type=int, dest="sample_rate")
    p.add_argument("--fft-size", type=int, dest="fft_size")
    p.add_argument("--hop", type=int)
    p.add_argument("--frames", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="wingbeat",
                                     description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a labeled synthetic dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--pos", type=int, default=200)
    p.add_argument("--neg", type=int, default=200)
    p.add_argument("--snr-db", type=float, default=10.0, dest="snr_db")
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--duration", type=float, default=2.0)
    p.add_argument("--sample-rate", type=int, default=8000, dest="sample_rate")
    p.set_defaults(fn=cmd_synth)

    p = sub.add_parser("features", help="build and cache features")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--images-dir", dest="images_dir")
    p.add_argument("--max-images", type=int, default=16, dest="max_images")
    p.add_argument("--legacy-mel", type=int, default=0, dest="legacy_mel",
                   help="also render mel-warped comparison images (band count)")
    _add_pipeline_flags(p)
    p.set_defaults(fn=cmd_features)

    p = sub.add_parser("train", help="k-fold cross-validated training")
    p.add_argument("--manifest")
    p.add_argument("--features", help="WBFT cache instead of a manifest")
    p.add_argument("--out-dir", required=True, dest="out_dir")
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int, dest="batch_size")
    p.add_argument("--lr", type=float)
    p.add_argument("--folds", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--kernel", type=int)
    p.add_argument("--blocks", type=int)
    p.add_argument("--filters", type=int)
    p.add_argument("--no-group-folds", action="store_true",
                   dest="no_group_folds")
    _add_pipeline_flags(p)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("evaluate", help="metrics for a model on a manifest")
    p.add_argument("--model", required=True)
    p.add_argument("--manifest")
    p.add_argument("--features")
    p.add_argument("--out", help="JSON report path")
    p.add_argument("--csv", help="confusion CSV path")
    _add_pipeline_flags(p)
    p.set_defaults(fn=cmd_evaluate)

    p = sub.add_parser("sweep", help="greedy parameter sensitivity sweep")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--axes", required=True,
                   help="comma-separated axis order, e.g. K,B,F,W,P,H")
    p.add_argument("--folds", type=int, default=3)
    p.add_argument("--epochs", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config")
    p.set_defaults(fn=cmd_sweep)

    p = sub.add_parser("gradcam", help="Grad-CAM overlays for a clip")
    p.add_argument("--model", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--class", dest="target", choices=("pos", "neg"),
                   default="pos")
    p.add_argument("--out-dir", default="gradcam", dest="out_dir")
    _add_pipeline_flags(p)
    p.set_defaults(fn=cmd_gradcam)

    p = sub.add_parser("quantize", help="int8 dynamic-range quantization")
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_quantize)

    p = sub.add_parser("infer", help="classify one WAV clip")
    p.add_argument("--model")
    p.add_argument("--input", required=True)
    p.add_argument("--json", action="store_true")
    p.add_argument("--server", help="POST to a running wingbeat service")
    _add_pipeline_flags(p)
    p.set_defaults(fn=cmd_infer)

    p = sub.add_parser("bench", help="float vs quantized inference latency")
    p.add_argument("--model", required=True)
    p.add_argument("--n", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_bench)

    p = sub.add_parser("serve", help="run the FastAPI inference service")
    p.add_argument("--model")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    _add_pipeline_flags(p)
    p.set_defaults(fn=cmd_serve)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "infer" and not args.server and not args.model:
        parser.error("infer needs --model (or --server)")
    if args.command in ("train", "evaluate") and not (
            getattr(args, "manifest", None) or getattr(args, "features", None)):
        parser.error(f"{args.command} needs --manifest or --features")
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        if isinstance(exc, (ManifestError, WavFormatError, ModelFormatError)):
            print(f"data error: {exc}", file=sys.stderr)
            return EXIT_DATA
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except DivergenceError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
