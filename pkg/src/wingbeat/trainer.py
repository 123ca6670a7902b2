"""Training orchestration: per-fold training and k-fold cross-validation.

Each fold trains a fresh model on class-rebalanced batches drawn from the
other folds, then evaluates on the held-out fold with argmax decisions.
Everything is deterministic given the master seed: fold i uses seed ^ i.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import model as M
from . import tensor as T
from .dataset import FeatureSet, FoldPlan, weighted_batches
from .evaluator import Confusion, metrics
from .model import Model, ModelConfig

logger = logging.getLogger(__name__)

EVAL_BATCH = 32


class DivergenceError(RuntimeError):
    """Raised when the training loss goes non-finite."""


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 2
    batch_size: int = 32
    lr: float = 1e-3
    seed: int = 0
    folds: int = 10
    early_stop_patience: int | None = None

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.folds < 2:
            raise ValueError(f"folds must be >= 2, got {self.folds}")
        if self.batch_size < 1 or self.lr <= 0:
            raise ValueError("batch_size must be >= 1 and lr > 0")


@dataclass
class FoldReport:
    fold: int
    confusion: Confusion
    loss_curve: list[float] = field(default_factory=list)

    def as_dict(self) -> dict:
        rep = metrics(self.confusion)
        tp, fp, fn, tn = self.confusion
        return {"fold": self.fold,
                "confusion": {"tp": tp, "fp": fp, "fn": fn, "tn": tn},
                "loss_curve": self.loss_curve,
                "metrics": rep.as_dict()}


def predict(model: Model, features: np.ndarray,
            batch_size: int = EVAL_BATCH) -> np.ndarray:
    """Eval-mode positive-class probabilities for (n, m, F) features."""
    probs = np.empty(len(features), dtype=np.float64)
    for lo in range(0, len(features), batch_size):
        chunk = features[lo : lo + batch_size][..., None].astype(np.float32)
        out = model.forward(chunk, train=False)
        probs[lo : lo + len(chunk)] = out.data[:, 1]
    return probs


def evaluate_confusion(model: Model, features: np.ndarray,
                       labels: np.ndarray) -> Confusion:
    probs = predict(model, features)
    pred = (probs >= 0.5).astype(np.uint8)
    tp = int(np.sum((pred == 1) & (labels == 1)))
    fp = int(np.sum((pred == 1) & (labels == 0)))
    fn = int(np.sum((pred == 0) & (labels == 1)))
    tn = int(np.sum((pred == 0) & (labels == 0)))
    return (tp, fp, fn, tn)


def train_one(fs: FeatureSet, plan: FoldPlan, fold: int, mcfg: ModelConfig,
              tcfg: TrainConfig) -> tuple[Model, FoldReport]:
    """Train one model on all folds except ``fold``; report held-out results."""
    fold_seed = tcfg.seed ^ fold
    net = M.build(mcfg, seed=fold_seed)
    opt = T.Adam(net.trainable(), lr=tcfg.lr)
    dropout_rng = np.random.default_rng(fold_seed + 1)

    train_size = plan.train_indices(fold).size
    steps = math.ceil(train_size / tcfg.batch_size)
    batches = weighted_batches(fs, plan, fold, tcfg.batch_size, seed=fold_seed)

    curve: list[float] = []
    best = math.inf
    stale = 0
    for epoch in range(tcfg.epochs):
        total = 0.0
        for _ in range(steps):
            x, y = next(batches)
            probs = net.forward(x, train=True, rng=dropout_rng)
            loss = T.cross_entropy_loss(probs, y)
            value = float(loss.data)
            if not math.isfinite(value):
                raise DivergenceError(
                    f"fold {fold}: non-finite loss at epoch {epoch}"
                )
            T.backward(loss)
            opt.step()
            total += value
        mean_loss = total / steps
        curve.append(mean_loss)
        logger.debug("fold %d epoch %d loss %.4f", fold, epoch, mean_loss)
        if tcfg.early_stop_patience is not None:
            if mean_loss < best - 1e-4:
                best = mean_loss
                stale = 0
            else:
                stale += 1
                if stale > tcfg.early_stop_patience:
                    break

    test_idx = plan.test_indices(fold)
    confusion = evaluate_confusion(net, fs.features[test_idx],
                                   fs.labels[test_idx])
    return net, FoldReport(fold, confusion, curve)


def cross_validate(fs: FeatureSet, plan: FoldPlan, mcfg: ModelConfig,
                   tcfg: TrainConfig) -> tuple[list[FoldReport], list[Model]]:
    """k independent trainings from fresh initializations, one per fold."""
    counts = np.bincount(fs.labels, minlength=2)
    if counts[0] == 0 or counts[1] == 0:
        raise ValueError("cross-validation needs both classes present")
    reports: list[FoldReport] = []
    models: list[Model] = []
    for fold in range(plan.k):
        net, report = train_one(fs, plan, fold, mcfg, tcfg)
        reports.append(report)
        models.append(net)
        rep = metrics(report.confusion)
        logger.info("fold %d: acc %.3f f1 %.3f", fold, rep.accuracy, rep.f1)
    return reports, models


def aggregate_reports(reports: list[FoldReport]) -> dict:
    """Mean and standard deviation of each metric across folds."""
    names = ("accuracy", "precision", "recall", "f1")
    table = {name: [] for name in names}
    for report in reports:
        rep = metrics(report.confusion)
        for name in names:
            table[name].append(getattr(rep, name))
    out = {}
    for name in names:
        values = np.asarray(table[name])
        out[name] = {"mean": float(values.mean()), "std": float(values.std())}
    return out
