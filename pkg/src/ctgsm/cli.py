"""Command-line entry point: ``ctgsm <subcommand> [options]``.

Stage subcommands read and write dataset snapshots (``<stem>.csv`` plus
``<stem>.json``) so any stage can be rerun on its own. Each stage draws its
seed from the master ``--seed`` exactly as ``run`` does, so chaining the
stage commands reproduces a full run.

Exit codes: 0 success, 1 configuration error, 2 data error, 3 training divergence.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import classifier as clf
from .ctgan import TrainingDivergence
from .data import DataError, SchemaError, apply_scaler, fit_scaler, load_dataset, save_dataset, stratified_split
from .pipeline import (
    BenchmarkSpec,
    ConfigError,
    PipelineConfig,
    augment,
    compare_methods,
    desk_config,
    emit_projection,
    evaluate,
    load_input,
    rare_class_ids,
    make_benchmark,
    resample,
    run_pipeline,
    stage_seed,
    write_benchmark_csv,
    write_report_bundle,
)

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_DIVERGENCE = 0, 1, 2, 3

log = logging.getLogger("ctgsm")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON file with PipelineConfig fields")
    p.add_argument("--preset", choices=("desk", "paper"), default="paper",
                   help="base settings that --config and flags then override")
    p.add_argument("--seed", type=int, help="master seed")
    p.add_argument("--out", help="output directory (file path for 'benchmark')")
    p.add_argument("--skip-ctgan", action="store_true", help="bypass GAN augmentation")
    p.add_argument("--skip-smoteenn", action="store_true", help="bypass SMOTE + ENN resampling")
    p.add_argument("--loss", choices=("focal", "ce"))
    p.add_argument("--mode", choices=("binary", "multiclass"))
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ctgsm", description="GAN + SMOTEENN augmented intrusion classifier")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="load and clean CSV flow records into a snapshot")
    _common(p)
    p.add_argument("inputs", nargs="*", help="CSV files; without them the synthetic benchmark is used")

    p = sub.add_parser("preprocess", help="stratified split + min-max scaling")
    _common(p)
    p.add_argument("--input", required=True, help="snapshot stem from 'ingest'")

    for name, text in (("augment", "fit the GAN and append rare-class rows"),
                       ("resample", "SMOTE the rare classes, then ENN-clean"),
                       ("train", "fit the classifier")):
        p = sub.add_parser(name, help=text)
        _common(p)
        p.add_argument("--input", required=True, help="training snapshot stem")

    p = sub.add_parser("evaluate", help="score a trained classifier on a test snapshot")
    _common(p)
    p.add_argument("--model", required=True, help="classifier JSON from 'train'")
    p.add_argument("--input", required=True, help="test snapshot stem")

    p = sub.add_parser("run", help="full pipeline with report bundle")
    _common(p)
    p.add_argument("inputs", nargs="*", help="CSV files; without them the synthetic benchmark is used")
    p.add_argument("--compare", action="store_true",
                   help="also run the cross-entropy, plain-DNN and DNN+SMOTE comparators")

    p = sub.add_parser("benchmark", help="write the synthetic benchmark as CSV")
    _common(p)

    p = sub.add_parser("project", help="2-D PCA coordinates before and after augmentation")
    _common(p)
    p.add_argument("--before", required=True, help="snapshot stem")
    p.add_argument("--after", required=True, help="snapshot stem")
    return parser


def load_config(args) -> PipelineConfig:
    cfg = desk_config() if args.preset == "desk" else PipelineConfig()
    if args.config:
        cfg = _overlay(cfg, args.config)
    updates = {}
    if args.seed is not None:
        updates["seed"] = args.seed
    if args.skip_ctgan:
        updates["skip_ctgan"] = True
    if args.skip_smoteenn:
        updates["resampler"] = "none"
    if args.loss:
        updates["classifier"] = {**cfg.classifier, "loss": args.loss}
    if args.mode:
        updates["mode"] = args.mode
    if getattr(args, "inputs", None):
        updates["inputs"] = list(args.inputs)
    try:
        return replace(cfg, **updates)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def _overlay(base: PipelineConfig, path) -> PipelineConfig:
    """Keys present in the JSON file replace the preset's values."""
    try:
        d = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    merged = base.to_dict()
    merged.update(d)
    return PipelineConfig.from_dict(merged)


def _out(args, default: str) -> Path:
    out = Path(args.out or default)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _emit(summary: dict) -> None:
    print(json.dumps(summary, indent=2, sort_keys=True))


def cmd_ingest(args, cfg):
    data = load_input(cfg)
    out = _out(args, "ctgsm-stages")
    save_dataset(data, out / "ingested")
    _emit({"rows": len(data), "classes": dict(zip(data.class_names, map(int, data.class_counts())))})


def cmd_preprocess(args, cfg):
    data, _ = load_dataset(args.input)
    train_raw, test_raw = stratified_split(data, cfg.train_fraction, stage_seed(cfg.seed, "split"))
    scaler = fit_scaler(train_raw)
    out = _out(args, "ctgsm-stages")
    save_dataset(apply_scaler(scaler, train_raw), out / "train", scaler)
    save_dataset(apply_scaler(scaler, test_raw), out / "test", scaler)
    _emit({"train": len(train_raw), "test": len(test_raw)})


def cmd_augment(args, cfg):
    train, scaler = load_dataset(args.input)
    out_data, model = augment(train, rare_class_ids(train, cfg), cfg, stage_seed(cfg.seed, "ctgan"))
    out = _out(args, "ctgsm-stages")
    save_dataset(out_data, out / "augmented", scaler)
    if model is not None:
        model.save(out / "ctgan.json")
    _emit({"rows_in": len(train), "rows_out": len(out_data)})


def cmd_resample(args, cfg):
    data, scaler = load_dataset(args.input)
    out_data = resample(data, rare_class_ids(data, cfg), cfg, stage_seed(cfg.seed, "smote"))
    save_dataset(out_data, _out(args, "ctgsm-stages") / "resampled", scaler)
    _emit({"rows_in": len(data), "rows_out": len(out_data)})


def cmd_train(args, cfg):
    data, _ = load_dataset(args.input)
    model = clf.fit(data, cfg.classifier_config(stage_seed(cfg.seed, "classifier")),
                    log=lambda e, l, a: log.info("epoch %d loss %.5f acc %.4f", e + 1, l, a))
    model.save(_out(args, "ctgsm-stages") / "classifier.json")
    _emit({"final_loss": model.history["loss"][-1], "final_accuracy": model.history["accuracy"][-1]})


def cmd_evaluate(args, cfg):
    try:
        model = clf.Classifier.load(args.model)
    except (OSError, json.JSONDecodeError, KeyError) as exc:
        raise DataError(f"cannot read model {args.model}: {exc}") from None
    test, _ = load_dataset(args.input)
    rare_names = [test.class_names[c] for c in rare_class_ids(test, cfg)]
    evaluation = evaluate(model, test, rare_names)
    write_report_bundle(_out(args, "ctgsm-report"), evaluation, model, {"rare_classes": rare_names})
    rep = evaluation["report"]
    _emit({"accuracy": rep["accuracy"], "macro": rep["macro"], "rare_recall": rep["rare_recall"]})


def cmd_run(args, cfg):
    out = _out(args, cfg.out_dir or "ctgsm-run")
    if args.compare:
        _emit(compare_methods(cfg, out))
        return
    manifest, result = run_pipeline(cfg, out)
    rep = result["report"]
    _emit({"accuracy": rep["accuracy"], "macro": rep["macro"], "rare_recall": rep["rare_recall"],
           "out": str(out), "status": manifest.status})


def cmd_benchmark(args, cfg):
    spec = BenchmarkSpec(**(cfg.benchmark or {}))
    data = make_benchmark(spec, stage_seed(cfg.seed, "benchmark"))
    path = Path(args.out or "benchmark.csv")
    write_benchmark_csv(data, path)
    _emit({"path": str(path), "rows": len(data),
           "classes": dict(zip(data.class_names, map(int, data.class_counts())))})


def cmd_project(args, cfg):
    before, _ = load_dataset(args.before)
    after, _ = load_dataset(args.after)
    _, _, ratio = emit_projection(before, after, _out(args, "ctgsm-report"))
    _emit({"explained_variance_ratio": [float(r) for r in ratio[:2]]})


COMMANDS = {
    "ingest": cmd_ingest,
    "preprocess": cmd_preprocess,
    "augment": cmd_augment,
    "resample": cmd_resample,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "run": cmd_run,
    "benchmark": cmd_benchmark,
    "project": cmd_project,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(levelname)s %(message)s", stream=sys.stderr)
    try:
        cfg = load_config(args)
        COMMANDS[args.command](args, cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except TrainingDivergence as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except (DataError, SchemaError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
