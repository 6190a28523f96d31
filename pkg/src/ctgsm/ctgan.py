"""Conditional tabular GAN for synthesizing rows of chosen (rare) classes.

Continuous features go through mode-specific normalization; the class label
is the single discrete column and doubles as the conditional vector.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import nn
from .data import DataError, Dataset
from .gmm import ALPHA_SCALE, Gmm, encode_modes, fit_gmm


class TrainingDivergence(RuntimeError):
    """A GAN or classifier loss became non-finite."""


@dataclass(frozen=True, eq=False)
class RowCodec:
    """Layout per feature: ``[alpha, mode one-hot (K)]``; then the label one-hot.

    All features share the same component count K.
    """

    gmms: tuple
    class_names: tuple
    feature_names: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "gmms", tuple(self.gmms))
        object.__setattr__(self, "class_names", tuple(self.class_names))
        ks = {g.K for g in self.gmms}
        if len(ks) > 1:
            raise ValueError("all feature mixtures must have the same K")
        K = ks.pop() if ks else 0
        d = len(self.gmms)
        block = np.arange(d)[:, None] * (K + 1)
        object.__setattr__(self, "K", K)
        object.__setattr__(self, "_alpha_idx", block[:, 0].copy())
        object.__setattr__(self, "_mode_idx", block + 1 + np.arange(K)[None, :])
        object.__setattr__(self, "_means", np.array([g.means for g in self.gmms]).reshape(d, K))
        object.__setattr__(self, "_stds", np.array([g.stds for g in self.gmms]).reshape(d, K))

    @property
    def n_features(self) -> int:
        return len(self.gmms)

    @property
    def n_classes(self) -> int:
        return len(self.class_names)

    def feature_span(self, j: int) -> tuple[int, int]:
        start = j * (self.K + 1)
        return start, start + self.K + 1

    @property
    def label_start(self) -> int:
        return self.n_features * (self.K + 1)

    @property
    def width(self) -> int:
        return self.label_start + self.n_classes

    def alpha_slots(self) -> np.ndarray:
        return self._alpha_idx

    def mode_slots(self) -> np.ndarray:
        """Column indices of the mode one-hots, shape (n_features, K)."""
        return self._mode_idx

    def softmax_groups(self) -> list[tuple[int, int]]:
        groups = [(s + 1, s + 1 + self.K) for s in self._alpha_idx]
        groups.append((self.label_start, self.width))
        return groups

    def encode(self, features, labels, rng=None, argmax: bool = False) -> np.ndarray:
        features = np.asarray(features, dtype=np.float64)
        labels = np.asarray(labels, dtype=np.int64)
        n = features.shape[0]
        if features.shape[1] != self.n_features:
            raise ValueError(f"codec expects {self.n_features} features, got {features.shape[1]}")
        out = np.zeros((n, self.width))
        for j, g in enumerate(self.gmms):
            start, _ = self.feature_span(j)
            modes, alpha = encode_modes(g, features[:, j], rng=rng, argmax=argmax)
            out[:, start] = alpha
            out[np.arange(n), start + 1 + modes] = 1.0
        out[np.arange(n), self.label_start + labels] = 1.0
        return out

    def decode(self, encoded) -> tuple[np.ndarray, np.ndarray]:
        """Modes by argmax of each mode group, labels by argmax of the label group."""
        encoded = np.asarray(encoded, dtype=np.float64)
        modes = encoded[:, self._mode_idx].argmax(axis=2)
        alpha = np.clip(encoded[:, self._alpha_idx], -1.0, 1.0)
        cols = np.arange(self.n_features)
        feats = self._means[cols, modes] + ALPHA_SCALE * self._stds[cols, modes] * alpha
        labels = encoded[:, self.label_start:].argmax(axis=1)
        return feats, labels

    def to_dict(self) -> dict:
        return {
            "gmms": [g.to_dict() for g in self.gmms],
            "class_names": list(self.class_names),
            "feature_names": list(self.feature_names),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RowCodec":
        return cls(tuple(Gmm.from_dict(g) for g in d["gmms"]), tuple(d["class_names"]),
                   tuple(d.get("feature_names", ())))


def fit_codec(train: Dataset, K: int = 10, seed: int = 0, tol: float = 1e-6, max_iter: int = 200) -> RowCodec:
    """One mixture per continuous feature, fitted on training values only."""
    if len(train) < K:
        raise DataError(f"need at least K={K} rows to fit the codec")
    ss = np.random.SeedSequence(seed)
    seeds = ss.generate_state(train.features.shape[1])
    gmms = tuple(
        fit_gmm(train.features[:, j], K=K, tol=tol, max_iter=max_iter, seed=int(seeds[j]))
        for j in range(train.features.shape[1])
    )
    return RowCodec(gmms, train.class_names, tuple(train.feature_names))


# -- conditional sampling ----------------------------------------------------

def cond_probabilities(labels, n_classes: int, strategy: str = "log-frequency", classes=None) -> np.ndarray:
    counts = np.bincount(np.asarray(labels, dtype=np.int64), minlength=n_classes).astype(np.float64)
    if strategy == "log-frequency":
        w = np.log1p(counts)
    elif strategy == "uniform":
        if classes is None:
            classes = np.flatnonzero(counts)
        w = np.zeros(n_classes)
        w[list(classes)] = 1.0
    else:
        raise ValueError(f"unknown conditioning strategy {strategy!r}")
    if classes is not None:
        for c in classes:
            if counts[c] == 0:
                raise DataError(f"class {c} has no rows to condition on")
    if w.sum() <= 0:
        raise DataError("no class available for conditioning")
    return w / w.sum()


class CondSampler:
    """Training-by-sampling: class draws plus a uniform real row of the drawn class."""

    def __init__(self, labels, n_classes: int | None = None, strategy: str = "log-frequency", classes=None):
        labels = np.asarray(labels, dtype=np.int64)
        self.n_classes = int(labels.max()) + 1 if n_classes is None else n_classes
        self.probs = cond_probabilities(labels, self.n_classes, strategy, classes)
        self._order = np.argsort(labels, kind="stable")
        self._counts = np.bincount(labels, minlength=self.n_classes)
        self._starts = np.concatenate([[0], np.cumsum(self._counts)[:-1]])

    def sample(self, rng, size: int = 1):
        cls = rng.choice(self.n_classes, size=size, p=self.probs)
        offs = (rng.random(size) * self._counts[cls]).astype(np.int64)
        return cls, self._order[self._starts[cls] + offs]


def sample_cond(labels, rng, size: int = 1, strategy: str = "log-frequency", classes=None,
                n_classes: int | None = None):
    """Returns ``(class_ids, row_indices)``; see ``CondSampler``."""
    return CondSampler(labels, n_classes, strategy, classes).sample(rng, size)


def cond_vector(class_ids, n_classes: int) -> np.ndarray:
    class_ids = np.atleast_1d(np.asarray(class_ids, dtype=np.int64))
    out = np.zeros((class_ids.size, n_classes))
    out[np.arange(class_ids.size), class_ids] = 1.0
    return out


# -- generator head ----------------------------------------------------------

def _group_softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _apply_head(codec: RowCodec, raw: np.ndarray) -> np.ndarray:
    """tanh on alpha slots, softmax within every one-hot group."""
    out = np.empty_like(raw)
    a, m, ls = codec.alpha_slots(), codec.mode_slots(), codec.label_start
    out[:, a] = np.tanh(raw[:, a])
    out[:, m] = _group_softmax(raw[:, m])
    out[:, ls:] = _group_softmax(raw[:, ls:])
    return out


def _head_backward(codec: RowCodec, out: np.ndarray, g: np.ndarray) -> np.ndarray:
    graw = np.empty_like(g)
    a, m, ls = codec.alpha_slots(), codec.mode_slots(), codec.label_start
    graw[:, a] = g[:, a] * (1.0 - out[:, a] ** 2)
    for idx in (m, np.s_[ls:]):
        p, gg = out[:, idx], g[:, idx]
        graw[:, idx] = p * (gg - (gg * p).sum(axis=-1, keepdims=True))
    return graw


@dataclass(frozen=True)
class CtganConfig:
    noise_dim: int = 128
    generator_hidden: tuple = (256, 256)
    discriminator_hidden: tuple = (256, 256)
    discriminator_dropout: float = 0.5
    epochs: int = 700
    batch_size: int = 64
    steps_per_epoch: int | None = None
    cond_strategy: str = "log-frequency"
    cond_loss_weight: float = 1.0
    train_generator: bool = True
    K: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.batch_size < 2:
            raise ValueError("batch_size must be >= 2")
        object.__setattr__(self, "generator_hidden", tuple(self.generator_hidden))
        object.__setattr__(self, "discriminator_hidden", tuple(self.discriminator_hidden))


@dataclass
class Ctgan:
    codec: RowCodec
    generator: nn.Mlp
    discriminator: nn.Mlp
    config: CtganConfig
    history: dict = field(default_factory=lambda: {"d_loss": [], "g_loss": []})

    def to_dict(self) -> dict:
        cfg = asdict(self.config)
        cfg["generator_hidden"] = list(cfg["generator_hidden"])
        cfg["discriminator_hidden"] = list(cfg["discriminator_hidden"])
        return {
            "codec": self.codec.to_dict(),
            "generator": self.generator.to_dict(),
            "discriminator": self.discriminator.to_dict(),
            "config": cfg,
            "history": self.history,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Ctgan":
        return cls(
            RowCodec.from_dict(d["codec"]),
            nn.Mlp.from_dict(d["generator"]),
            nn.Mlp.from_dict(d["discriminator"]),
            CtganConfig(**d["config"]),
            d.get("history", {"d_loss": [], "g_loss": []}),
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), sort_keys=True) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "Ctgan":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def init_ctgan(codec: RowCodec, cfg: CtganConfig) -> Ctgan:
    ss = np.random.SeedSequence(cfg.seed)
    g_seed, d_seed = (int(s) for s in ss.generate_state(2))
    C = codec.n_classes
    gen = nn.build_mlp([cfg.noise_dim + C, *cfg.generator_hidden, codec.width], "relu", "identity", seed=g_seed)
    disc = nn.build_mlp([codec.width + C, *cfg.discriminator_hidden, 1], "leaky_relu", "sigmoid",
                        dropout=cfg.discriminator_dropout, seed=d_seed)
    return Ctgan(codec, gen, disc, cfg)


def _generate_encoded(model: Ctgan, cond: np.ndarray, rng, training=False):
    z = rng.standard_normal((cond.shape[0], model.config.noise_dim))
    raw, cache = nn.forward(model.generator, np.hstack([z, cond]), training=training, rng=rng)
    return _apply_head(model.codec, raw), raw, cache


def _bce_parts(d_out: np.ndarray, target: float):
    p = np.clip(d_out[:, 0], nn.PROB_FLOOR, 1.0 - nn.PROB_FLOOR)
    loss = -np.log(p) if target == 1.0 else -np.log(1.0 - p)
    grad_logit = (d_out[:, 0] - target)[:, None] / d_out.shape[0]
    return float(loss.mean()), grad_logit


def train_ctgan(train: Dataset, codec: RowCodec, cfg: CtganConfig = CtganConfig(), model: Ctgan | None = None,
                log=None) -> Ctgan:
    """Adversarial training with conditional vectors and training-by-sampling.

    The discriminator minimizes real-vs-fake binary cross-entropy. The
    generator minimizes -log D(fake) plus a cross-entropy term tying its
    label group to the condition. One Adam step for each network per batch.
    """
    if len(train) < 2:
        raise DataError("need at least two rows to train the GAN")
    model = model or init_ctgan(codec, cfg)
    rng = np.random.default_rng([cfg.seed, 7])
    encoded = codec.encode(train.features, train.labels, rng=rng)
    C = codec.n_classes
    g_opt = nn.AdamState.for_gan(model.generator)
    d_opt = nn.AdamState.for_gan(model.discriminator)
    sampler = CondSampler(train.labels, C, cfg.cond_strategy)
    steps = cfg.steps_per_epoch or max(1, len(train) // cfg.batch_size)
    label_s = codec.label_start
    for epoch in range(cfg.epochs):
        d_losses, g_losses = [], []
        for _ in range(steps):
            cls, rows = sampler.sample(rng, cfg.batch_size)
            cond = cond_vector(cls, C)

            fake, _, _ = _generate_encoded(model, cond, rng, training=True)
            d_real, cache_r = nn.forward(model.discriminator, np.hstack([encoded[rows], cond]), True, rng)
            d_fake, cache_f = nn.forward(model.discriminator, np.hstack([fake, cond]), True, rng)
            lr_, gr = _bce_parts(d_real, 1.0)
            lf_, gf = _bce_parts(d_fake, 0.0)
            grads_r, _ = nn.backward(model.discriminator, cache_r, gr, wrt_logits=True)
            grads_f, _ = nn.backward(model.discriminator, cache_f, gf, wrt_logits=True)
            nn.adam_step(model.discriminator, [a + b for a, b in zip(grads_r, grads_f)], d_opt)
            d_losses.append(lr_ + lf_)

            if cfg.train_generator:
                fake, raw, g_cache = _generate_encoded(model, cond, rng, training=True)
                d_out, d_cache = nn.forward(model.discriminator, np.hstack([fake, cond]), True, rng)
                adv, g_logit = _bce_parts(d_out, 1.0)
                _, g_in = nn.backward(model.discriminator, d_cache, g_logit, wrt_logits=True)
                g_raw = _head_backward(codec, fake, g_in[:, :codec.width])
                probs = fake[:, label_s:]
                ce, ce_grad = nn.cross_entropy_loss(probs, cls)
                g_raw[:, label_s:] += cfg.cond_loss_weight * ce_grad
                g_grads, _ = nn.backward(model.generator, g_cache, g_raw)
                nn.adam_step(model.generator, g_grads, g_opt)
                g_losses.append(adv + cfg.cond_loss_weight * ce)
        d_mean = float(np.mean(d_losses))
        g_mean = float(np.mean(g_losses)) if g_losses else float("nan")
        if not np.isfinite(d_mean) or (cfg.train_generator and not np.isfinite(g_mean)):
            raise TrainingDivergence(f"GAN loss became non-finite at epoch {epoch}")
        model.history["d_loss"].append(d_mean)
        model.history["g_loss"].append(g_mean)
        if log is not None:
            log(epoch, d_mean, g_mean)
    return model


def generate_encoded(model: Ctgan, class_id: int, n: int, rng) -> np.ndarray:
    """Generator output rows (activated, before decoding) conditioned on ``class_id``."""
    if not 0 <= class_id < model.codec.n_classes:
        raise DataError(f"unknown class id {class_id}")
    if n == 0:
        return np.empty((0, model.codec.width))
    out, _, _ = _generate_encoded(model, cond_vector(np.full(n, class_id), model.codec.n_classes), rng)
    return out


def generate(model: Ctgan, class_id: int, n: int, rng, template: Dataset | None = None,
             clip: tuple[float, float] | None = None) -> Dataset:
    """``n`` synthetic rows of class ``class_id``; the label comes from the condition, not the generator."""
    enc = generate_encoded(model, class_id, n, rng)
    feats, _ = model.codec.decode(enc) if n else (np.empty((0, model.codec.n_features)), None)
    if clip is not None:
        feats = np.clip(feats, *clip)
    labels = np.full(n, class_id, dtype=np.int64)
    if template is not None:
        return template.with_rows(feats, labels)
    return Dataset(feats, labels, model.codec.class_names)


def discriminator_accuracy(model: Ctgan, data: Dataset, rng, n: int = 1000) -> float:
    """Real-vs-fake accuracy of the discriminator (threshold 0.5) on n real and n generated rows."""
    C = model.codec.n_classes
    cls, rows = sample_cond(data.labels, rng, n, model.config.cond_strategy, n_classes=C)
    cond = cond_vector(cls, C)
    real = model.codec.encode(data.features[rows], data.labels[rows], rng=rng)
    fake, _, _ = _generate_encoded(model, cond, rng)
    d_real, _ = nn.forward(model.discriminator, np.hstack([real, cond]))
    d_fake, _ = nn.forward(model.discriminator, np.hstack([fake, cond]))
    return float(((d_real[:, 0] > 0.5).sum() + (d_fake[:, 0] <= 0.5).sum()) / (2 * n))
