"""Batch entry point: ``vadbnet <command> [options]``.

Exit codes: 0 success, 1 runtime or I/O failure, 2 invalid configuration or
usage, 3 training diverged (diagnostics written to the run directory).

The data root (``annotations.jsonl`` and ``frames/<video_id>.npz`` or
``frames/<video_id>/*.png``) defaults to ``$VADBNET_DATA_ROOT``.
"""

from __future__ import annotations

import argparse
import datetime
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np
import torch

from .ablation import ABLATIONS, ConfigDrift, run_ablation
from .agreement import agreement_report, render_agreement
from .checkpoint import ConfigMismatch, load_checkpoint, save_checkpoint
from .config import ConfigError, RunConfig, load_config
from .dataset import CleanVideoEntry, clean_dataset, ingest_annotations, split_train_val, write_annotations
from .frames import load_clip
from .metrics import PairedSample
from .model import ScoreRegressor, build_model, parameter_hash
from .report import MetricsReport, build_report, render_significance, render_table
from .text import build_vocab, tag_text
from .training import (
    PretrainSample,
    ScoredClip,
    TrainingDiverged,
    finetune,
    predict_scores,
    pretrain,
)

DATA_ROOT_ENV = "VADBNET_DATA_ROOT"
EXIT_OK, EXIT_FAILURE, EXIT_CONFIG, EXIT_DIVERGED = 0, 1, 2, 3
SCORE_RANGE = (1.0, 10.0)

log = logging.getLogger("vadbnet")


class UsageError(Exception):
    pass


# ------------------------------------------------------------------ helpers


def _write_json(path: Path, obj) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(obj, indent=2, ensure_ascii=False) + "\n")


def _read_json(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def _config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    if args.seed is not None:
        cfg = cfg.replace(seed=args.seed)
    return cfg


def _data_root(cfg: RunConfig) -> Path:
    root = cfg.paths.data_root or os.environ.get(DATA_ROOT_ENV, "")
    if not root:
        raise UsageError(f"no data root: set paths.data_root or ${DATA_ROOT_ENV}")
    return Path(root)


def _run_dir(out: str, cfg: RunConfig, command: str) -> Path:
    stamp = datetime.datetime.now().strftime("%Y%m%d-%H%M%S-%f")
    base = Path(out) / f"{stamp}-{cfg.hash}"
    path, k = base, 1
    while path.exists():
        path, k = Path(f"{base}-{k}"), k + 1
    path.mkdir(parents=True)
    cfg.save(path / "config.json")
    _write_json(path / "command.json", {"command": command, "config_hash": cfg.hash})
    return path


def _cleaned_dir(args, cfg: RunConfig) -> Path:
    d = args.cleaned or cfg.paths.cleaned
    if not d:
        raise UsageError("no cleaned dataset: pass --cleaned or set paths.cleaned")
    return Path(d)


def load_cleaned(directory: Path, cfg: RunConfig) -> dict:
    doc = _read_json(directory / "cleaned.json")
    if doc["config_hash"] != cfg.hash:
        raise ConfigMismatch(
            f"{directory} was cleaned under config {doc['config_hash']}, current config is {cfg.hash}"
        )
    doc["entries"] = [CleanVideoEntry.from_json(e) for e in doc["entries"]]
    return doc


def _clip(cfg: RunConfig, root: Path, video_id: str):
    return load_clip(root / "frames", video_id, cfg.data.fps, cfg.encoder.max_frames,
                     cfg.encoder.frame_size, cfg.data.source_fps)


def _scored(cfg: RunConfig, root: Path, entries: list[CleanVideoEntry]) -> list[ScoredClip]:
    return [ScoredClip(e.video_id, _clip(cfg, root, e.video_id), dict(e.mean_scores)) for e in entries]


def _split(doc: dict, name: str) -> list[CleanVideoEntry]:
    by_id = {e.video_id: e for e in doc["entries"]}
    return [by_id[v] for v in doc[name]]


def _pretrained_model(cfg: RunConfig, path) -> tuple:
    ckpt = load_checkpoint(path, expected_hash=cfg.hash, kind="pretrain")
    model = build_model(cfg.encoder, cfg.fusion, cfg.seed)
    model.load_state_dict(ckpt.params)
    return model, ckpt


def _regressor(cfg: RunConfig, path) -> tuple[ScoreRegressor, dict]:
    ckpt = load_checkpoint(path, expected_hash=cfg.hash, kind="finetune")
    encoder = build_model(cfg.encoder, cfg.fusion, cfg.seed).video
    model = ScoreRegressor(encoder, ckpt.extra["dimensions"], ckpt.extra["head_kind"])
    model.load_state_dict(ckpt.params)
    model.freeze_encoder()
    return model, ckpt.extra


def clamp_scores(pred: np.ndarray) -> tuple[np.ndarray, int]:
    lo, hi = SCORE_RANGE
    outside = int(np.count_nonzero((pred < lo) | (pred > hi)))
    return np.clip(pred, lo, hi), outside


def _predictions_doc(ids, dims, pred) -> dict:
    return {vid: {d: float(pred[i, j]) for j, d in enumerate(dims)} for i, vid in enumerate(ids)}


def _report_samples(dims, predictions: dict, entries: list[CleanVideoEntry]) -> list[PairedSample]:
    samples = []
    for d in dims:
        pairs = [(predictions[e.video_id][d], e.mean_scores[d]) for e in entries
                 if d in e.mean_scores and e.video_id in predictions and d in predictions[e.video_id]]
        if len(pairs) >= 2:
            p, t = zip(*pairs)
            samples.append(PairedSample(np.array(p), np.array(t), d))
    return samples


def _emit_report(run: Path, report: MetricsReport, stem: str = "report") -> None:
    report.save(run / f"{stem}.json", run / f"{stem}.txt")
    (run / f"{stem}_significance.txt").write_text(render_significance(report), encoding="utf-8")


# ----------------------------------------------------------------- commands


def cmd_clean(args) -> int:
    cfg = _config(args)
    source = args.input or cfg.paths.annotations
    if not source and (cfg.paths.data_root or os.environ.get(DATA_ROOT_ENV)):
        source = str(_data_root(cfg) / "annotations.jsonl")
    if not source:
        raise UsageError("no input: pass --input, set paths.annotations or the data root")
    if not args.out:
        raise UsageError("--out is required")
    records, rejects = ingest_annotations(source)
    if not records:
        log.warning("no valid annotation records in %s", source)
    cleaned = clean_dataset(records, cfg.cleaning)
    scored = [e.video_id for e in cleaned.score_entries()]
    if len(scored) >= 5:
        train, val = split_train_val(scored, cfg.seed, cfg.data.train_fraction)
    else:
        if scored:
            log.warning("only %d videos with valid scores; all assigned to the training split", len(scored))
        train, val = sorted(scored), []
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "cleaned.json", {
        "config_hash": cfg.hash,
        "entries": [e.to_json() for e in cleaned.entries],
        "train": train,
        "val": val,
    })
    _write_json(out / "exclusions.json", {
        "config_hash": cfg.hash, "exclusions": [x.to_json() for x in cleaned.exclusions]})
    with open(out / "rejects.jsonl", "w", encoding="utf-8") as fh:
        for r in rejects:
            fh.write(json.dumps({"line": r.line, "reason": r.reason, "raw": r.raw}) + "\n")
    write_annotations(out / "cleaned_annotations.jsonl", cleaned.records)
    rows = agreement_report(cleaned.records)
    _write_json(out / "agreement.json", {
        "config_hash": cfg.hash,
        "alpha": {r.dimension: {"alpha": r.alpha, "items": r.items, "raters": r.raters} for r in rows}})
    (out / "agreement.txt").write_text(render_agreement(rows) if rows else "", encoding="utf-8")
    print(f"retained {len(cleaned.entries)} videos ({len(scored)} with scores; "
          f"train {len(train)}, val {len(val)}); {len(cleaned.exclusions)} exclusions, {len(rejects)} rejected lines")
    return EXIT_OK


def pretrain_samples_from(cfg: RunConfig, root: Path, entries: list[CleanVideoEntry]) -> list[PretrainSample]:
    samples = []
    for e in entries:
        if not e.comments:
            continue
        clip = _clip(cfg, root, e.video_id)
        tags = tag_text(e.tags)
        samples.extend(PretrainSample(e.video_id, clip, c, tags) for c in e.comments)
    return samples


def cmd_pretrain(args) -> int:
    cfg = _config(args)
    doc = load_cleaned(_cleaned_dir(args, cfg), cfg)
    held_out = set(doc["val"])
    entries = [e for e in doc["entries"] if e.video_id not in held_out]
    root = _data_root(cfg)
    samples = pretrain_samples_from(cfg, root, entries)
    corpus = [s.comment for s in samples] + [s.tags for s in samples]
    vocab = build_vocab(corpus, cfg.encoder.vocab_size - 4)
    run = _run_dir(args.out, cfg, "pretrain")
    vocab.save(run / "vocab.txt")
    model = build_model(cfg.encoder, cfg.fusion, cfg.seed)
    try:
        result = pretrain(model, samples, vocab, cfg.pretrain, seed=cfg.seed, checkpoint_dir=run / "checkpoints",
                          log_path=run / "pretrain_log.jsonl", config_hash=cfg.hash)
    except TrainingDiverged as exc:
        _write_json(run / "diagnostics.json", exc.diagnostics())
        print(f"training diverged; diagnostics in {run / 'diagnostics.json'}", file=sys.stderr)
        return EXIT_DIVERGED
    final = save_checkpoint(run / "pretrain.npz", result.model, config_hash=cfg.hash, kind="pretrain",
                            step=len(result.log), epoch=cfg.pretrain.epochs, extra={"vocab": vocab.tokens})
    print(f"pretrained {len(result.log)} steps; final loss {result.log[-1]['loss']:.4f}; checkpoint {final}")
    print(run)
    return EXIT_OK


def _encoder_for(cfg: RunConfig, checkpoint):
    if cfg.finetune.encoder_init == "random":
        return build_model(cfg.encoder, cfg.fusion, cfg.seed).video
    if not checkpoint:
        raise UsageError("finetune.encoder_init is 'pretrained' but no --checkpoint was given")
    return _pretrained_model(cfg, checkpoint)[0].video


def cmd_finetune(args) -> int:
    cfg = _config(args)
    doc = load_cleaned(_cleaned_dir(args, cfg), cfg)
    root = _data_root(cfg)
    train = _scored(cfg, root, _split(doc, "train"))
    val = _scored(cfg, root, _split(doc, "val"))
    encoder = _encoder_for(cfg, args.checkpoint)
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(cfg.seed)
        model = ScoreRegressor(encoder, cfg.finetune.dimensions, cfg.finetune.head_kind)
    run = _run_dir(args.out, cfg, "finetune")
    result = finetune(model, train, val, cfg.finetune, seed=cfg.seed, log_path=run / "finetune_log.jsonl")
    path = save_checkpoint(run / "finetune.npz", result.model, config_hash=cfg.hash, kind="finetune",
                           step=result.steps, epoch=result.best_epoch + 1, extra={
                               "dimensions": list(model.dimensions),
                               "head_kind": model.head_kind,
                               "encoder_hash": result.encoder_hash_after,
                               "best_val_loss": result.best_val_loss,
                           })
    print(f"best epoch {result.best_epoch + 1}, val loss {result.best_val_loss:.4f}; checkpoint {path}")
    print(run)
    return EXIT_OK


def _predict(cfg, model, root, ids) -> tuple[np.ndarray, int]:
    clips = [_clip(cfg, root, v) for v in ids]
    raw = predict_scores(model, clips) if clips else np.zeros((0, len(model.dimensions)))
    return clamp_scores(raw)


def cmd_predict(args) -> int:
    cfg = _config(args)
    if not args.checkpoint:
        raise UsageError("--checkpoint is required")
    model, _ = _regressor(cfg, args.checkpoint)
    root = _data_root(cfg)
    ids = list(args.videos or [])
    if not ids:
        doc = load_cleaned(_cleaned_dir(args, cfg), cfg)
        ids = list(doc[args.split])
    pred, outside = _predict(cfg, model, root, ids)
    if outside:
        log.warning("%d predicted scores fell outside [1, 10] and were clamped", outside)
    run = _run_dir(args.out, cfg, "predict")
    _write_json(run / "predictions.json", {
        "config_hash": cfg.hash,
        "clamped": outside,
        "predictions": _predictions_doc(ids, model.dimensions, pred),
    })
    print(run)
    return EXIT_OK


def cmd_evaluate(args) -> int:
    cfg = _config(args)
    doc = load_cleaned(_cleaned_dir(args, cfg), cfg)
    entries = _split(doc, args.split)
    meta = {"config_hash": cfg.hash, "split": args.split}
    if args.predictions:
        given = _read_json(args.predictions)
        predictions = given.get("predictions", given)
        dims = list(cfg.finetune.dimensions)
        outside = 0
    else:
        if not args.checkpoint:
            raise UsageError("pass --checkpoint or --predictions")
        model, extra = _regressor(cfg, args.checkpoint)
        ids = [e.video_id for e in entries]
        pred, outside = _predict(cfg, model, _data_root(cfg), ids)
        dims = list(model.dimensions)
        predictions = _predictions_doc(ids, dims, pred)
        meta["encoder_hash"] = extra["encoder_hash"]
        meta["head_hash"] = parameter_hash(model.heads)
    meta["clamped"] = outside
    samples = _report_samples(dims, predictions, entries)
    if not samples:
        raise UsageError(f"fewer than 2 scored videos in the {args.split} split")
    report = build_report(samples, cfg.evaluation, meta)
    run = _run_dir(args.out, cfg, "evaluate")
    _write_json(run / "predictions.json", {"config_hash": cfg.hash, "clamped": outside, "predictions": predictions})
    _emit_report(run, report)
    print(render_table(report), end="")
    print(run)
    return EXIT_OK


def cmd_ablation(args) -> int:
    cfg = _config(args)
    doc = load_cleaned(_cleaned_dir(args, cfg), cfg)
    root = _data_root(cfg)
    train = _scored(cfg, root, _split(doc, "train"))
    val = _scored(cfg, root, _split(doc, "val"))
    if not args.checkpoint:
        raise UsageError("ablation needs the pretrained --checkpoint")
    pretrained = _pretrained_model(cfg, args.checkpoint)[0].video
    random_init = build_model(cfg.encoder, cfg.fusion, cfg.seed).video
    result = run_ablation(args.which, pretrained, random_init, train, val, cfg.finetune, cfg.evaluation, cfg.seed)
    run = _run_dir(args.out, cfg, f"ablation:{args.which}")
    for arm in (result.full, result.ablated):
        arm.report.meta.update(config_hash=cfg.hash, encoder_hash=arm.encoder_hash)
        _emit_report(run, arm.report, f"report_{arm.arm.name}")
    table = result.table()
    (run / "ablation.txt").write_text(table, encoding="utf-8")
    print(table, end="")
    print(run)
    return EXIT_OK


def cmd_report(args) -> int:
    report = MetricsReport.load(args.report)
    if args.format == "table":
        print(render_table(report), end="")
    elif args.format == "significance":
        print(render_significance(report), end="")
    else:
        print(report.dumps(), end="")
    return EXIT_OK


# ------------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vadbnet", description=__doc__.split("\n")[0])
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="run configuration (JSON)")
    common.add_argument("--seed", type=int, help="override the configured seed")
    common.add_argument("--out", help="output directory (run directories are created inside it)")
    common.add_argument("--threads", type=int, help="torch intra-op threads")
    common.add_argument("--deterministic", action="store_true",
                        help="single thread and deterministic kernels")
    common.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("clean", parents=[common], help="clean raw annotations")
    p.add_argument("--input", help="annotation JSONL file")
    p.set_defaults(func=cmd_clean)

    for name, func, text in (
        ("pretrain", cmd_pretrain, "contrastive pretraining"),
        ("finetune", cmd_finetune, "train score heads on a frozen encoder"),
        ("evaluate", cmd_evaluate, "metrics, intervals and p-values on a split"),
        ("predict", cmd_predict, "scores for videos, clamped to [1, 10]"),
        ("ablation", cmd_ablation, "full model against one ablated arm"),
    ):
        p = sub.add_parser(name, parents=[common], help=text)
        p.add_argument("--cleaned", help="directory written by `clean`")
        p.add_argument("--checkpoint", help="checkpoint file")
        p.set_defaults(func=func)
        if name in ("evaluate", "predict"):
            p.add_argument("--split", choices=("train", "val"), default="val")
        if name == "evaluate":
            p.add_argument("--predictions", help="evaluate a predictions JSON instead of a checkpoint")
        if name == "predict":
            p.add_argument("--videos", nargs="*", help="video ids (default: the chosen split)")
        if name == "ablation":
            p.add_argument("--which", choices=ABLATIONS, required=True)

    p = sub.add_parser("report", parents=[common], help="render a saved report")
    p.add_argument("report", help="report JSON")
    p.add_argument("--format", choices=("table", "significance", "json"), default="table")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.deterministic:
        torch.set_num_threads(1)
        torch.use_deterministic_algorithms(True)
    elif args.threads:
        torch.set_num_threads(args.threads)
    if args.command not in ("clean", "report") and not args.out:
        args.out = "runs"
    try:
        return args.func(args)
    except ConfigError as exc:
        for msg in exc.errors:
            print(f"config error: {msg}", file=sys.stderr)
        return EXIT_CONFIG
    except (UsageError, ConfigMismatch, ConfigDrift) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
