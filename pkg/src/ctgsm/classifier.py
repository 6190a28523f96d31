"""Focal-loss feed-forward intrusion classifier (binary or multiclass)."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import nn
from .ctgan import TrainingDivergence
from .data import DataError, Dataset

BINARY_NAMES = ("Benign", "Attack")


@dataclass(frozen=True)
class ClassifierConfig:
    hidden: tuple = (128, 64)
    dropout: float = 0.4
    epochs: int = 30
    batch_size: int = 512
    loss: str = "focal"
    focal_alpha: float = 1.0
    focal_gamma: float = 2.0
    mode: str = "multiclass"
    lr: float = 1e-3
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(self.hidden))
        if self.loss not in ("focal", "ce"):
            raise ValueError(f"loss must be 'focal' or 'ce', got {self.loss!r}")
        if self.mode not in ("binary", "multiclass"):
            raise ValueError(f"mode must be 'binary' or 'multiclass', got {self.mode!r}")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be positive")


def binary_labels(labels) -> np.ndarray:
    """Benign (class 0) stays 0, every attack class becomes 1."""
    return (np.asarray(labels) != 0).astype(np.int64)


def to_binary(data: Dataset) -> Dataset:
    return replace(data, labels=binary_labels(data.labels), class_names=BINARY_NAMES)


def prepare(data: Dataset, mode: str) -> Dataset:
    return to_binary(data) if mode == "binary" else data


@dataclass
class Classifier:
    net: nn.Mlp
    config: ClassifierConfig
    class_names: tuple
    history: dict = field(default_factory=lambda: {"loss": [], "accuracy": []})

    def to_dict(self) -> dict:
        cfg = asdict(self.config)
        cfg["hidden"] = list(cfg["hidden"])
        return {
            "mode": self.config.mode,
            "class_names": list(self.class_names),
            "config": cfg,
            "history": self.history,
            "network": self.net.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Classifier":
        return cls(nn.Mlp.from_dict(d["network"]), ClassifierConfig(**d["config"]),
                   tuple(d["class_names"]), d.get("history", {"loss": [], "accuracy": []}))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), sort_keys=True) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "Classifier":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def _loss(cfg: ClassifierConfig, probs, targets):
    if cfg.loss == "focal":
        return nn.focal_loss(probs, targets, nn.FocalLossConfig(cfg.focal_alpha, cfg.focal_gamma))
    return nn.cross_entropy_loss(probs, targets)


def fit(train: Dataset, cfg: ClassifierConfig = ClassifierConfig(), log=None) -> Classifier:
    """Mini-batch Adam training for a fixed number of epochs (no early stopping).

    Weight init and epoch shuffling use independent streams derived from ``cfg.seed``.
    History holds the per-epoch mean training loss and accuracy over batches.
    """
    data = prepare(train, cfg.mode)
    counts = data.class_counts()
    if cfg.mode == "multiclass" and np.any(counts == 0):
        empty = [data.class_names[c] for c in np.flatnonzero(counts == 0)]
        raise DataError(f"classes without training rows: {empty}")
    if len(data) == 0:
        raise DataError("empty training set")
    init_seed, shuffle_seed = (int(s) for s in np.random.SeedSequence(cfg.seed).generate_state(2))
    net = nn.build_mlp([data.features.shape[1], *cfg.hidden, data.n_classes], "relu", "softmax",
                       dropout=cfg.dropout, seed=init_seed)
    opt = nn.AdamState.for_params(net, lr=cfg.lr)
    rng = np.random.default_rng(shuffle_seed)
    model = Classifier(net, cfg, data.class_names)
    X, y = data.features, data.labels
    n = len(data)
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        loss_sum = correct = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            probs, cache = nn.forward(net, X[idx], training=True, rng=rng)
            loss, grad = _loss(cfg, probs, y[idx])
            grads, _ = nn.backward(net, cache, grad, wrt_logits=True)
            nn.adam_step(net, grads, opt)
            loss_sum += loss * idx.size
            correct += float((probs.argmax(axis=1) == y[idx]).sum())
        mean_loss = loss_sum / n
        if not np.isfinite(mean_loss):
            raise TrainingDivergence(f"classifier loss became non-finite at epoch {epoch}")
        model.history["loss"].append(mean_loss)
        model.history["accuracy"].append(correct / n)
        if log is not None:
            log(epoch, mean_loss, correct / n)
    return model


def predict_proba(model: Classifier, data) -> np.ndarray:
    X = data.features if isinstance(data, Dataset) else np.asarray(data, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != model.net.in_dim:
        raise ValueError(f"model expects {model.net.in_dim} features, got shape {X.shape}")
    return nn.forward(model.net, X)[0]


def predict(model: Classifier, data) -> np.ndarray:
    """Row argmax; np.argmax already resolves ties to the lowest class id."""
    return predict_proba(model, data).argmax(axis=1)
