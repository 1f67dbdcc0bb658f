"""Command-line experiment runner.

    s2g <generate|train|evaluate|render|all> --config FILE [--seed N] [--out DIR] [--dry-run]

Exit status is 0 on success, 1 when the config or arguments are invalid and 2
when the run itself fails (I/O, corrupt cache, numeric trouble).

Output directory layout::

    out/cache/<hash>/{manifest.json,train,val,test .jsonl.gz}   (or <cache>/<hash>/)
    out/model.ckpt
    out/metrics.csv
    out/training_curves.png
    out/summary.json
    out/renders/sample_XX_{truth,compare}.svg   (Delaunay only)
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import sys
import time
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .config import ConfigError, ExperimentConfig, parse_config, with_seed
from .data import GENERATOR_VERSION, Sample, generate_split, read_jsonl, write_jsonl
from .metrics import MetricsRecord, predict_edges
from .models import build_model, load_checkpoint, parameter_count, save_checkpoint
from .plotting import plot_training_curves
from .render import render_triangulation_svg
from .train import evaluate, predict, train

log = logging.getLogger("set2graph")

COMMANDS = ("generate", "train", "evaluate", "render", "all")
CSV_FIELDS = ("epoch", "split", "loss", "f1", "precision", "recall", "accuracy", "ri", "ari", "auc")
SPLITS = ("train", "val", "test")


class RunError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# dataset cache


def dataset_key(cfg: ExperimentConfig) -> dict:
    d = cfg.data
    key = {
        "task": cfg.task,
        "sizes": d.sizes(),
        "n_range": list(d.n_range),
        "seed": cfg.seed,
        "generator_version": GENERATOR_VERSION,
    }
    if cfg.task.startswith("hull"):
        key["knn_k"] = d.knn_k
    if cfg.task == "partition":
        key.update(cluster_range=list(d.cluster_range), d_in=d.d_in, spread=d.spread)
    return key


def dataset_hash(key: dict) -> str:
    blob = json.dumps(key, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _file_digest(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def cache_dir(cfg: ExperimentConfig, out: Path) -> Path:
    root = Path(cfg.cache) if cfg.cache else out / "cache"
    return root / dataset_hash(dataset_key(cfg))


def load_or_generate(cfg: ExperimentConfig, out: Path) -> dict[str, list[Sample]]:
    """Datasets for all three splits, generated once per content hash."""
    key = dataset_key(cfg)
    digest = dataset_hash(key)
    root = cache_dir(cfg, out)
    manifest_path = root / "manifest.json"
    if manifest_path.exists():
        manifest = json.loads(manifest_path.read_text())
        if manifest.get("hash") != digest or manifest.get("key") != key:
            raise RunError(f"cache hash mismatch in {root}")
        splits = {}
        for split in SPLITS:
            path = root / manifest["files"][split]["name"]
            if not path.exists() or _file_digest(path) != manifest["files"][split]["sha256"]:
                raise RunError(f"cache hash mismatch for {path}")
            splits[split] = read_jsonl(path)
        log.info("reusing cached datasets %s", digest)
        return splits

    log.info("generating datasets %s", digest)
    root.mkdir(parents=True, exist_ok=True)
    splits, files = {}, {}
    for split, size in cfg.data.sizes().items():
        t0 = time.perf_counter()
        samples = generate_split(cfg.task, cfg.data, cfg.seed, split, size, workers=cfg.workers)
        path = root / f"{split}.jsonl.gz"
        write_jsonl(path, samples)
        # round trip through the file so every run sees identical float bytes
        splits[split] = read_jsonl(path)
        files[split] = {"name": path.name, "count": size, "sha256": _file_digest(path)}
        log.info("  %s: %d sets in %.1fs", split, size, time.perf_counter() - t0)
    manifest = {"hash": digest, "key": key, "files": files}
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return splits


# ---------------------------------------------------------------------------
# metrics table


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def metrics_csv(records: Sequence[MetricsRecord]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_FIELDS)
    for r in records:
        row = r.as_dict()
        writer.writerow([_cell(row[f]) for f in CSV_FIELDS])
    return buf.getvalue()


def read_metrics_csv(path: Path) -> list[MetricsRecord]:
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            vals = {k: (float(v) if v != "" else None) for k, v in row.items() if k not in ("epoch", "split")}
            out.append(MetricsRecord(epoch=int(row["epoch"]), split=row["split"], **vals))
    return out


# ---------------------------------------------------------------------------
# steps


def step_train(cfg: ExperimentConfig, out: Path, data: dict[str, list[Sample]]):
    model = build_model(cfg.model)
    log.info("training %s (%d parameters)", cfg.model.variant, parameter_count(model))
    result = train(model, data["train"], data["val"], cfg.train)
    save_checkpoint(model, out / "model.ckpt")
    (out / "metrics.csv").write_text(metrics_csv(result.history))
    plot_training_curves(result.history, out / "training_curves.png", title=f"{cfg.task} / {cfg.model.variant}")
    return model, result


def step_evaluate(cfg: ExperimentConfig, out: Path, data: dict[str, list[Sample]], wall_start: float, model=None, best_epoch=None):
    if model is None:
        model = load_checkpoint(out / "model.ckpt")
    history = read_metrics_csv(out / "metrics.csv") if (out / "metrics.csv").exists() else []
    history = [r for r in history if r.split != "test"]
    if best_epoch is None:
        best_epoch = _best_epoch(history, cfg.train.select_metric)
    test = evaluate(model, data["test"], epoch=best_epoch, split="test", weights=cfg.train.loss_weights)
    (out / "metrics.csv").write_text(metrics_csv(history + [test]))
    summary = {
        "task": cfg.task,
        "variant": cfg.model.variant,
        "seed": cfg.seed,
        "dataset_hash": dataset_hash(dataset_key(cfg)),
        "parameter_count": parameter_count(model),
        "best_epoch": best_epoch,
        "epochs_run": max((r.epoch for r in history), default=0),
        "test": test.as_dict(),
        "wall_time_s": round(time.perf_counter() - wall_start, 3),
    }
    if cfg.task.startswith("hull"):
        summary["candidate_recall"] = float(np.mean([s.recall for s in data["test"]]))
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    log.info("test: %s", {k: v for k, v in test.as_dict().items() if v is not None})
    return test


def _best_epoch(history: Sequence[MetricsRecord], metric: str) -> int:
    best, best_score = 0, None
    for r in history:
        score = getattr(r, metric)
        if r.split == "val" and score is not None and (best_score is None or score > best_score):
            best, best_score = r.epoch, score
    return best


def step_render(cfg: ExperimentConfig, out: Path, data: dict[str, list[Sample]], model=None) -> int:
    if cfg.task != "delaunay" or cfg.render_count == 0:
        return 0
    if model is None:
        model = load_checkpoint(out / "model.ckpt")
    samples = data["test"][: cfg.render_count]
    outputs, _ = predict(model, samples, cfg.train.loss_weights)
    rdir = out / "renders"
    rdir.mkdir(exist_ok=True)
    for k, (s, logits) in enumerate(outputs):
        truth = render_triangulation_svg(s.points, s.adjacency, s.adjacency)
        compare = render_triangulation_svg(s.points, s.adjacency, predict_edges(logits))
        (rdir / f"sample_{k:02d}_truth.svg").write_text(truth)
        (rdir / f"sample_{k:02d}_compare.svg").write_text(compare)
    return len(outputs)


def plan(cfg: ExperimentConfig, command: str, out: Path) -> str:
    d = cfg.data
    lines = [
        f"command: {command}",
        f"task: {cfg.task}  seed: {cfg.seed}",
        f"data: train={d.train_size} val={d.val_size} test={d.test_size} n_range={d.n_range}",
        f"cache: {cache_dir(cfg, out)}",
        f"model: {cfg.model.variant} pooling={cfg.model.pooling} phi={cfg.model.phi_widths} "
        f"d1={cfg.model.d1} psi={cfg.model.psi_widths}",
        f"train: lr={cfg.train.learning_rate} batch={cfg.train.batch_size} "
        f"max_epochs={cfg.train.max_epochs} patience={cfg.train.patience} select={cfg.train.select_metric}",
        f"out: {out}",
    ]
    return "\n".join(lines) + "\n"


def run_experiment(cfg: ExperimentConfig, command: str = "all", out: Optional[Path] = None, dry_run: bool = False) -> int:
    """Run one subcommand for ``cfg``; returns the process exit status."""
    if command not in COMMANDS:
        raise ConfigError(f"unknown command {command!r}")
    out = Path(out if out is not None else cfg.out)
    if dry_run:
        sys.stdout.write(plan(cfg, command, out))
        return 0
    wall_start = time.perf_counter()
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise RunError(f"cannot create output directory {out}: {exc}") from exc
    data = load_or_generate(cfg, out)
    if command == "generate":
        return 0
    model = best_epoch = None
    if command in ("train", "all"):
        model, result = step_train(cfg, out, data)
        best_epoch = result.best_epoch
    if command in ("evaluate", "all"):
        step_evaluate(cfg, out, data, wall_start, model, best_epoch)
    if command in ("render", "all"):
        step_render(cfg, out, data, model)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="s2g", description="Set-to-graph experiments.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", required=True, help="JSON experiment config")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.add_argument("--out", default=None, help="override the output directory")
    p.add_argument("--dry-run", action="store_true", help="validate and print the plan only")
    p.add_argument("-q", "--quiet", action="store_true")
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 1
    logging.basicConfig(
        level=logging.WARNING if args.quiet else logging.INFO,
        format="%(asctime)s %(message)s",
        datefmt="%H:%M:%S",
        stream=sys.stderr,
    )
    try:
        cfg = parse_config(args.config)
        if args.seed is not None:
            cfg = with_seed(cfg, args.seed)
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    try:
        return run_experiment(cfg, args.command, Path(args.out) if args.out else None, args.dry_run)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - any failure past validation is a runtime error
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
