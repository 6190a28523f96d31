"""End-to-end CTGSM-DNN runs: preprocess, GAN augmentation, SMOTEENN, training, evaluation.

Per-stage seeds come from the master seed through ``stage_seed``: stage ``s``
gets ``SeedSequence(master, spawn_key=(STAGE_IDS[s],))``. Turning a stage
off therefore never shifts the randomness of another stage.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import time
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import classifier as clf
from . import metrics
from .ctgan import Ctgan, CtganConfig, fit_codec, generate, train_ctgan
from .data import (
    DataError,
    Dataset,
    MinMaxScaler,
    apply_scaler,
    clean,
    fit_scaler,
    load_csv,
    save_dataset,
    stratified_kfold,
    stratified_split,
)
from .resampling import EnnParams, SmoteParams, enn_filter, minority_classes, smote

log = logging.getLogger(__name__)

STAGE_IDS = {"split": 1, "codec": 2, "ctgan": 3, "generate": 4, "smote": 5, "cv": 6, "classifier": 7, "benchmark": 8}


class ConfigError(ValueError):
    pass


def stage_seed(master: int, stage: str, *extra: int) -> int:
    ss = np.random.SeedSequence(master, spawn_key=(STAGE_IDS[stage], *extra))
    return int(ss.generate_state(1)[0])


# -- synthetic benchmark -----------------------------------------------------

@dataclass(frozen=True)
class ClassSpec:
    name: str
    count: int
    distance: float
    std: float


DEFAULT_CLASSES = (
    ClassSpec("Benign", 20_000, 0.0, 1.0),
    ClassSpec("DoS attacks-Hulk", 2_000, 5.0, 1.0),
    ClassSpec("Bot", 1_500, 5.0, 1.0),
    ClassSpec("Brute Force -XSS", 30, 3.5, 0.8),
    ClassSpec("SQL Injection", 20, 3.5, 0.8),
)
RARE_DEFAULT = ("Brute Force -XSS", "SQL Injection")


@dataclass(frozen=True)
class BenchmarkSpec:
    """Gaussian clusters; class c sits at ``distance_c * u_c`` for a unit vector u_c.

    The directions come from ``layout_seed`` so the geometry is fixed while the
    sample seed varies.
    """

    classes: tuple = DEFAULT_CLASSES
    n_features: int = 20
    layout_seed: int = 2018

    def __post_init__(self):
        classes = tuple(c if isinstance(c, ClassSpec) else ClassSpec(**c) for c in self.classes)
        object.__setattr__(self, "classes", classes)
        if self.n_features < 1 or not classes:
            raise ConfigError("benchmark needs at least one feature and one class")
        for c in classes:
            if c.count < 1 or c.std <= 0:
                raise ConfigError(f"invalid class spec {c}")
        if len({c.name for c in classes}) != len(classes):
            raise ConfigError("duplicate class names in benchmark spec")

    def means(self) -> np.ndarray:
        rng = np.random.default_rng(self.layout_seed)
        u = rng.standard_normal((len(self.classes), self.n_features))
        u /= np.linalg.norm(u, axis=1, keepdims=True)
        return u * np.array([c.distance for c in self.classes])[:, None]


def make_benchmark(spec: BenchmarkSpec = BenchmarkSpec(), seed: int = 0) -> Dataset:
    rng = np.random.default_rng(seed)
    means = spec.means()
    feats, labels = [], []
    for i, c in enumerate(spec.classes):
        feats.append(means[i] + c.std * rng.standard_normal((c.count, spec.n_features)))
        labels.append(np.full(c.count, i))
    order = rng.permutation(sum(c.count for c in spec.classes))
    X = np.vstack(feats)[order]
    y = np.concatenate(labels)[order]
    return Dataset(X, y, tuple(c.name for c in spec.classes))


def write_benchmark_csv(data: Dataset, path) -> None:
    """CSV in the same layout as flow-record input: feature columns, then ``Label``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(data.feature_names + ["Label"])
        for feats, lab in zip(data.features, data.labels):
            w.writerow([repr(float(v)) for v in feats] + [data.class_names[lab]])


# -- PCA projection ----------------------------------------------------------

def pca_basis(X: np.ndarray, n_components: int = 2):
    """Leading covariance eigenvectors; each column's largest-magnitude loading made positive."""
    if X.shape[1] < n_components:
        raise DataError(f"need at least {n_components} features for a projection")
    mean = X.mean(axis=0)
    cov = np.cov(X - mean, rowvar=False).reshape(X.shape[1], X.shape[1])
    vals, vecs = np.linalg.eigh(cov)
    order = np.argsort(vals)[::-1]
    vals, vecs = vals[order], vecs[:, order]
    big = np.abs(vecs).argmax(axis=0)
    vecs = vecs * np.sign(vecs[big, np.arange(vecs.shape[1])])
    total = vals.sum()
    ratio = vals / total if total > 0 else np.zeros_like(vals)
    return mean, vecs[:, :n_components], ratio


def emit_projection(before: Dataset, after: Dataset, out_dir=None, n_components: int = 2):
    """Project both datasets on one PCA basis fitted on their union."""
    union = np.vstack([before.features, after.features])
    mean, basis, ratio = pca_basis(union, n_components)
    proj = [(d.features - mean) @ basis for d in (before, after)]
    if out_dir is not None:
        for name, d, p in (("before", before, proj[0]), ("after", after, proj[1])):
            _write_projection(Path(out_dir) / f"projection_{name}.csv", d, p)
    return proj[0], proj[1], ratio


def _write_projection(path: Path, data: Dataset, coords: np.ndarray) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"pc{i + 1}" for i in range(coords.shape[1])] + ["label_id", "label"])
        for row, lab in zip(coords, data.labels):
            w.writerow([repr(float(v)) for v in row] + [int(lab), data.class_names[lab]])


# -- configuration -----------------------------------------------------------

@dataclass
class PipelineConfig:
    inputs: list = field(default_factory=list)
    label_column: str = "Label"
    benchmark: dict | None = None
    rare_classes: list | None = None
    mode: str = "multiclass"
    skip_ctgan: bool = False
    ctgan: dict = field(default_factory=dict)
    samples_per_rare_class: int = 1000
    ctgan_fit_on: str = "full"
    resampler: str = "smoteenn"
    smote_k: int = 5
    enn_k: int = 3
    smote_targets: str = "rare"
    smote_strategy: object = "balance"
    classifier: dict = field(default_factory=dict)
    train_fraction: float = 0.7
    folds: int = 5
    seed: int = 0
    out_dir: str | None = None
    persist_stages: bool = True

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise ConfigError("train_fraction must lie in (0, 1)")
        if self.mode not in ("binary", "multiclass"):
            raise ConfigError(f"unknown mode {self.mode!r}")
        if self.resampler not in ("smoteenn", "smote", "none"):
            raise ConfigError(f"unknown resampler {self.resampler!r}")
        if self.smote_targets not in ("minority", "rare"):
            raise ConfigError(f"unknown smote_targets {self.smote_targets!r}")
        if self.ctgan_fit_on not in ("full", "rare"):
            raise ConfigError(f"unknown ctgan_fit_on {self.ctgan_fit_on!r}")
        if self.folds == 1 or self.folds < 0:
            raise ConfigError("folds must be 0 (no CV) or >= 2")
        if self.samples_per_rare_class < 0:
            raise ConfigError("samples_per_rare_class must be >= 0")
        try:
            self.ctgan_config()
            self.classifier_config()
            if self.benchmark is not None:
                BenchmarkSpec(**self.benchmark)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from None

    @property
    def skip_smoteenn(self) -> bool:
        return self.resampler == "none"

    def ctgan_config(self, seed: int = 0) -> CtganConfig:
        return CtganConfig(**{**self.ctgan, "seed": seed})

    def classifier_config(self, seed: int = 0) -> clf.ClassifierConfig:
        return clf.ClassifierConfig(**{**self.classifier, "mode": self.mode, "seed": seed})

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_json(cls, path) -> "PipelineConfig":
        try:
            d = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        return cls.from_dict(d)

    def to_dict(self) -> dict:
        return asdict(self)


def desk_config(**overrides) -> PipelineConfig:
    """Settings sized for the synthetic benchmark on a laptop CPU."""
    base = dict(
        ctgan={"epochs": 10, "generator_hidden": [128, 128], "discriminator_hidden": [128, 128], "noise_dim": 64},
        samples_per_rare_class=1000,
        folds=0,
    )
    base.update(overrides)
    return PipelineConfig(**base)


# -- stages ------------------------------------------------------------------

def load_input(cfg: PipelineConfig) -> Dataset:
    if cfg.inputs:
        return clean(load_csv(cfg.inputs, label_column=cfg.label_column))
    spec = BenchmarkSpec(**(cfg.benchmark or {}))
    return make_benchmark(spec, stage_seed(cfg.seed, "benchmark"))


def rare_class_ids(data: Dataset, cfg: PipelineConfig) -> list[int]:
    """Configured rare classes, or else whichever of the two default rare labels the data carries."""
    names = cfg.rare_classes
    if names is None:
        names = [n for n in RARE_DEFAULT if n in data.class_names]
    missing = [n for n in names if n not in data.class_names]
    if missing:
        raise ConfigError(f"rare classes not present in data: {missing}")
    return [data.class_names.index(n) for n in names]


def augment(train: Dataset, rare: list[int], cfg: PipelineConfig, seed: int):
    """Fit the GAN on training rows and append generated rows for each rare class."""
    if cfg.skip_ctgan or not rare or cfg.samples_per_rare_class == 0:
        return train, None
    fit_rows = train
    if cfg.ctgan_fit_on == "rare":
        fit_rows = train.subset(np.isin(train.labels, rare))
    gcfg = cfg.ctgan_config(seed)
    codec = fit_codec(fit_rows, K=gcfg.K, seed=seed)
    model = train_ctgan(fit_rows, codec, gcfg)
    rng = np.random.default_rng([seed, STAGE_IDS["generate"]])
    out = train
    for c in rare:
        out = out.concat(generate(model, c, cfg.samples_per_rare_class, rng, template=train, clip=(0.0, 1.0)))
    return out, model


def resample(data: Dataset, rare: list[int], cfg: PipelineConfig, seed: int) -> Dataset:
    if cfg.resampler == "none":
        return data
    targets = frozenset(rare) if cfg.smote_targets == "rare" else minority_classes(data)
    strategy = cfg.smote_strategy
    params = SmoteParams(strategy, cfg.smote_k, targets, seed)
    out = data.concat(smote(data, params))
    if cfg.resampler == "smoteenn":
        out = enn_filter(out, EnnParams(cfg.enn_k))
    return out


def process_training(train: Dataset, rare, cfg: PipelineConfig, ctgan_seed: int, smote_seed: int):
    augmented, model = augment(train, rare, cfg, ctgan_seed)
    return augmented, resample(augmented, rare, cfg, smote_seed), model


def evaluate(model: clf.Classifier, test: Dataset, rare_names=()) -> dict:
    data = clf.prepare(test, model.config.mode)
    probs = clf.predict_proba(model, data)
    pred = probs.argmax(axis=1)
    cm = metrics.confusion(data.labels, pred, data.n_classes, data.class_names)
    report = metrics.per_class_metrics(cm)
    curves = metrics.roc_one_vs_rest(probs, data.labels, data.class_names)
    report["auc"] = {name: c.auc for name, c in curves.items()}
    rare = [n for n in rare_names if n in report["per_class"]]
    report["rare_recall"] = float(np.mean([report["per_class"][n]["recall"] for n in rare])) if rare else None
    report["n_test"] = len(data)
    return {"report": report, "confusion": cm, "roc": curves}


def cross_validate(train: Dataset, cfg: PipelineConfig, k: int | None = None) -> dict:
    """Stratified k-fold CV; augmentation and resampling are refitted on each fold's training part."""
    k = cfg.folds if k is None else k
    rare = rare_class_ids(train, cfg)
    rare_names = [train.class_names[c] for c in rare]
    rows = []
    for f, (tr, va) in enumerate(stratified_kfold(train, k, stage_seed(cfg.seed, "cv"))):
        assert not np.intersect1d(tr, va).size
        fold_train = train.subset(tr)
        _, processed, _ = process_training(
            fold_train, rare, cfg, stage_seed(cfg.seed, "ctgan", f + 1), stage_seed(cfg.seed, "smote", f + 1)
        )
        model = clf.fit(processed, cfg.classifier_config(stage_seed(cfg.seed, "classifier", f + 1)))
        rep = evaluate(model, train.subset(va), rare_names)["report"]
        rows.append({
            "fold": f,
            "n_train": int(tr.size),
            "n_validation": int(va.size),
            "accuracy": rep["accuracy"],
            "macro_precision": rep["macro"]["precision"],
            "macro_recall": rep["macro"]["recall"],
            "macro_f1": rep["macro"]["f1"],
            "rare_recall": rep["rare_recall"],
        })
    summary = {}
    for key in ("accuracy", "macro_precision", "macro_recall", "macro_f1", "rare_recall"):
        vals = np.array([r[key] for r in rows if r[key] is not None], dtype=np.float64)
        if vals.size:
            summary[key] = {"mean": float(vals.mean()), "std": float(vals.std(ddof=1)) if vals.size > 1 else 0.0}
    return {"folds": rows, "summary": summary}


# -- manifest & reporting ----------------------------------------------------

def row_digests(data: Dataset) -> list[str]:
    return [
        hashlib.sha256(f.tobytes() + int(l).to_bytes(8, "little")).hexdigest()[:16]
        for f, l in zip(data.features, data.labels)
    ]


def file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


@dataclass
class RunManifest:
    config: dict
    seeds: dict = field(default_factory=dict)
    row_counts: dict = field(default_factory=dict)
    class_counts: dict = field(default_factory=dict)
    stages: list = field(default_factory=list)
    timing: dict = field(default_factory=dict)
    artifacts: dict = field(default_factory=dict)
    status: str = "running"
    error: str | None = None

    def record(self, stage: str, data: Dataset | None = None, seconds: float = 0.0) -> None:
        self.stages.append(stage)
        self.timing[stage] = round(seconds, 3)
        if data is not None:
            self.row_counts[stage] = len(data)
            self.class_counts[stage] = {n: int(c) for n, c in zip(data.class_names, data.class_counts())}

    def to_dict(self) -> dict:
        return asdict(self)

    def write(self, out_dir) -> None:
        path = Path(out_dir) / "manifest.json"
        path.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _safe_name(name: str) -> str:
    return "".join(ch if ch.isalnum() or ch in "-_" else "_" for ch in name)


def write_curves(history: dict, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "loss", "accuracy"])
        for e, (l, a) in enumerate(zip(history["loss"], history["accuracy"]), start=1):
            w.writerow([e, repr(float(l)), repr(float(a))])


def write_report_bundle(out_dir, evaluation: dict, model: clf.Classifier, extra: dict | None = None) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    cm_path = out / "confusion.csv"
    evaluation["confusion"].to_csv(cm_path)
    written.append(cm_path)
    report = dict(evaluation["report"])
    report["class_names"] = list(evaluation["confusion"].class_names)
    report["mode"] = model.config.mode
    report["loss"] = model.config.loss
    if extra:
        report.update(extra)
    m_path = out / "metrics.json"
    metrics.write_metrics_json(report, m_path)
    written.append(m_path)
    for name, curve in evaluation["roc"].items():
        p = out / f"roc_{_safe_name(name)}.csv"
        curve.to_csv(p)
        written.append(p)
    c_path = out / "curves.csv"
    write_curves(model.history, c_path)
    written.append(c_path)
    return written


def run_pipeline(cfg: PipelineConfig, out_dir=None) -> tuple[RunManifest, dict]:
    """Run every stage and write the report bundle to ``out_dir`` (or ``cfg.out_dir``)."""
    out_dir = Path(out_dir or cfg.out_dir or "ctgsm-run")
    out_dir.mkdir(parents=True, exist_ok=True)
    config = cfg.to_dict()
    config.pop("out_dir")
    manifest = RunManifest(config=config)
    manifest.seeds = {s: stage_seed(cfg.seed, s) for s in STAGE_IDS}
    stages_dir = out_dir / "stages"
    try:
        result = _run(cfg, out_dir, stages_dir, manifest)
    except Exception as exc:
        manifest.status = "failed"
        manifest.error = f"{type(exc).__name__}: {exc}"
        manifest.write(out_dir)
        raise
    manifest.status = "complete"
    manifest.write(out_dir)
    return manifest, result


def _persist(cfg, manifest, stages_dir: Path, name: str, data: Dataset, scaler=None):
    if not cfg.persist_stages:
        return
    for p in save_dataset(data, stages_dir / name, scaler):
        manifest.artifacts[str(p.relative_to(stages_dir.parent))] = file_digest(p)


def _run(cfg: PipelineConfig, out_dir: Path, stages_dir: Path, manifest: RunManifest) -> dict:
    t0 = time.perf_counter()
    log.info("stage %s", "ingest")
    data = load_input(cfg)
    rare = rare_class_ids(data, cfg)
    rare_names = [data.class_names[c] for c in rare]
    manifest.record("ingest", data, time.perf_counter() - t0)

    t0 = time.perf_counter()
    log.info("stage %s", "split")
    train_raw, test_raw = stratified_split(data, cfg.train_fraction, manifest.seeds["split"])
    scaler = fit_scaler(train_raw)
    train, test = apply_scaler(scaler, train_raw), apply_scaler(scaler, test_raw)
    manifest.record("split", train, time.perf_counter() - t0)
    manifest.row_counts["test"] = len(test)
    _persist(cfg, manifest, stages_dir, "train", train, scaler)
    _persist(cfg, manifest, stages_dir, "test", test, scaler)

    t0 = time.perf_counter()
    log.info("stage %s", "augment")
    augmented, gan = augment(train, rare, cfg, manifest.seeds["ctgan"])
    manifest.record("augment", augmented, time.perf_counter() - t0)
    _persist(cfg, manifest, stages_dir, "augmented", augmented, scaler)
    if gan is not None and cfg.persist_stages:
        gan.save(stages_dir / "ctgan.json")
        manifest.artifacts["stages/ctgan.json"] = file_digest(stages_dir / "ctgan.json")

    t0 = time.perf_counter()
    log.info("stage %s", "resample")
    processed = resample(augmented, rare, cfg, manifest.seeds["smote"])
    manifest.record("resample", processed, time.perf_counter() - t0)
    _persist(cfg, manifest, stages_dir, "resampled", processed, scaler)

    cv = None
    if cfg.folds:
        t0 = time.perf_counter()
        log.info("stage %s", "cross_validate")
        cv = cross_validate(train, cfg)
        manifest.record("cross_validate", None, time.perf_counter() - t0)

    t0 = time.perf_counter()
    log.info("stage %s", "train")
    model = clf.fit(processed, cfg.classifier_config(manifest.seeds["classifier"]))
    manifest.record("train", processed, time.perf_counter() - t0)
    if cfg.persist_stages:
        model.save(stages_dir / "classifier.json")
        manifest.artifacts["stages/classifier.json"] = file_digest(stages_dir / "classifier.json")

    t0 = time.perf_counter()
    log.info("stage %s", "evaluate")
    evaluation = evaluate(model, test, rare_names)
    extra = {"rare_classes": rare_names}
    if cv is not None:
        extra["cross_validation"] = cv
    written = write_report_bundle(out_dir, evaluation, model, extra)
    emit_projection(train, processed, out_dir)
    written += [out_dir / "projection_before.csv", out_dir / "projection_after.csv"]

    digests = {
        "test": row_digests(test),
        "train": row_digests(train),
        "augmented": row_digests(augmented),
        "resampled": row_digests(processed),
    }
    dpath = out_dir / "row_digests.json"
    dpath.write_text(json.dumps(digests, sort_keys=True) + "\n", encoding="utf-8")
    written.append(dpath)
    test_set = set(digests["test"])
    manifest.row_counts["test_rows_in_training_inputs"] = sum(
        len(test_set.intersection(digests[k])) for k in ("train", "augmented", "resampled")
    )
    for p in written:
        manifest.artifacts[p.name] = file_digest(p)
    manifest.record("evaluate", test, time.perf_counter() - t0)
    return {
        "report": evaluation["report"],
        "cv": cv,
        "model": model,
        "ctgan": gan,
        "train": train,
        "test": test,
        "processed": processed,
        "scaler": scaler,
    }


def compare_methods(cfg: PipelineConfig, out_dir) -> dict:
    """Macro precision/recall/F1 for the proposed pipeline and its three comparators.

    Every variant shares the split, seeds and classifier settings; only the
    augmentation stages and the loss change.
    """
    variants = {
        "proposed": {},
        "ce_ablation": {"classifier": {**cfg.classifier, "loss": "ce"}},
        "dnn": {"skip_ctgan": True, "resampler": "none"},
        "dnn_smote": {"skip_ctgan": True, "resampler": "smote"},
    }
    table = {}
    for name, override in variants.items():
        _, result = run_pipeline(replace(cfg, **override), Path(out_dir) / name)
        rep = result["report"]
        table[name] = {**rep["macro"], "accuracy": rep["accuracy"], "rare_recall": rep["rare_recall"]}
    Path(out_dir, "comparison.json").write_text(json.dumps(table, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return table
