"""Command-line entry point wiring synthesis, training, scoring, evaluation,
ablation sweeps, and report emission.

Exit codes: 0 success, 2 configuration error, 3 I/O or data error, 4 numeric
abort (non-finite training loss).
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .clipio import TEST_SPLIT, load_manifest, load_video, load_video_labels
from .config import load_synth_config, load_train_config, train_config_from_dict
from .errors import ContractError, IngestError, IoError, NumericError
from .model import VARIANT_C3DSU, VARIANT_UNET_BASELINE, load_checkpoint
from .report import render_panel, render_sigma_trace
from .scoring import (
    DEFAULT_MEDIAN_WINDOW,
    DEFAULT_PATCH,
    evaluate_scores,
    frame_score,
    pixel_error_map,
    read_scores_csv,
    reconstruct_video,
    score_video,
    write_eval_json,
    write_scores_csv,
)
from .synth import SynthConfig, synth_dataset
from .training import MODE_DDL, MODE_NONE, MODE_SDL, MODES, describe_run, fit

THREADS_ENV = "DDL_VAD_THREADS"


def _threads() -> int:
    raw = os.environ.get(THREADS_ENV)
    if raw is None:
        return os.cpu_count() or 1
    try:
        value = int(raw)
    except ValueError:
        raise ContractError(f"{THREADS_ENV} must be an integer, got {raw!r}")
    if value < 1:
        raise ContractError(f"{THREADS_ENV} must be >= 1, got {value}")
    return value


def cmd_synth(args) -> int:
    if args.config:
        cfg, cfg_seed = load_synth_config(args.config)
    else:
        cfg, cfg_seed = SynthConfig(), None
    seed = args.seed if args.seed is not None else (cfg_seed if cfg_seed is not None else 7)
    manifest = synth_dataset(cfg, seed, args.out)
    print(manifest.root / "manifest.json")
    return 0


def cmd_train(args) -> int:
    cfg = load_train_config(args.config) if args.config else train_config_from_dict({})
    updates = {}
    if args.mode:
        updates["mode"] = args.mode
    if args.data:
        updates["data"] = args.data
    if args.out:
        updates["out_dir"] = args.out
    if args.seed is not None:
        updates["seed"] = args.seed
    if updates:
        cfg = dataclasses.replace(cfg, **updates)
    if cfg.data is None:
        raise ContractError("no dataset given: pass --data or set 'data' in the config")
    if cfg.out_dir is None:
        raise ContractError("no output dir given: pass --out or set 'out_dir' in the config")
    result = fit(cfg)
    print(result.final_checkpoint)
    return 0


def _score_one(model_path, manifest, entry, clip_len, patch, median_window, out_dir):
    # one model per worker: eval-mode modules are read-only but cheap to clone
    model, _ = load_checkpoint(model_path)
    seq = load_video(manifest, TEST_SPLIT, entry)
    scores = score_video(model, seq, clip_len, patch=patch, median_window=median_window)
    write_scores_csv(scores, out_dir / entry.video_id / "scores.csv")
    return entry.video_id


def cmd_score(args) -> int:
    if args.median % 2 == 0 or args.median < 1:
        raise ContractError(f"--median must be an odd positive integer, got {args.median}")
    if args.patch < 1:
        raise ContractError(f"--patch must be >= 1, got {args.patch}")
    model, _ = load_checkpoint(args.checkpoint)
    clip_len = model.config.clip_len
    manifest = load_manifest(args.data)
    entries = manifest.videos(TEST_SPLIT)
    if not entries:
        raise IngestError(f"manifest {args.data} has no test videos")
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    workers = min(len(entries), _threads())
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            jobs = [
                pool.submit(
                    _score_one, args.checkpoint, manifest, e, clip_len,
                    args.patch, args.median, out_dir,
                )
                for e in entries
            ]
            for job in jobs:
                job.result()
    else:
        for e in entries:
            _score_one(args.checkpoint, manifest, e, clip_len, args.patch, args.median, out_dir)
    (out_dir / "score_config.json").write_text(
        json.dumps(
            {
                "checkpoint": str(args.checkpoint),
                "clip_len": clip_len,
                "patch": args.patch,
                "median_window": args.median,
                "normalize": args.normalize == "on",
            },
            indent=2,
            sort_keys=True,
        )
        + "\n"
    )
    print(out_dir)
    return 0


def _collect_eval(scores_dir: Path, data: str, scene_map_path=None) -> dict:
    manifest = load_manifest(data)
    meta_path = scores_dir / "score_config.json"
    normalize = True
    if meta_path.exists():
        normalize = bool(json.loads(meta_path.read_text()).get("normalize", True))
    scores_by_video, labels_by_video = {}, {}
    for entry in manifest.videos(TEST_SPLIT):
        csv_path = scores_dir / entry.video_id / "scores.csv"
        if not csv_path.exists():
            raise IngestError(f"missing scores for video {entry.video_id}: {csv_path}")
        scores = read_scores_csv(csv_path)
        scores_by_video[entry.video_id] = scores.normalized if normalize else scores.filtered
        labels_by_video[entry.video_id] = load_video_labels(manifest, entry).labels
    scene_map = None
    if scene_map_path:
        try:
            scene_map = json.loads(Path(scene_map_path).read_text())
        except OSError as exc:
            raise IngestError(f"cannot read scene map {scene_map_path}: {exc}") from exc
    return evaluate_scores(scores_by_video, labels_by_video, scene_map)


def cmd_eval(args) -> int:
    result = _collect_eval(Path(args.scores), args.data, args.scene_map)
    out_path = write_eval_json(result, Path(args.scores) / "eval.json")
    print(out_path)
    print(f"dataset AUC: {result['dataset_auc']:.4f}")
    if "scene_median_auc" in result:
        print(f"scene-median AUC: {result['scene_median_auc']:.4f}")
    return 0


ABLATION_MODES = [(MODE_NONE, "without DDL"), (MODE_SDL, "with SDL"), (MODE_DDL, "with DDL")]
ABLATION_VARIANTS = [(VARIANT_UNET_BASELINE, "UNet"), (VARIANT_C3DSU, "C3DSU")]


def cmd_ablate(args) -> int:
    base = load_train_config(args.config) if args.config else train_config_from_dict({})
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    cells: dict[tuple[str, str], float] = {}
    for variant, row_name in ABLATION_VARIANTS:
        for mode, col_name in ABLATION_MODES:
            run_dir = out_dir / f"{variant}_{mode}"
            cfg = dataclasses.replace(
                base,
                mode=mode,
                data=args.data,
                out_dir=str(run_dir),
                model=dataclasses.replace(base.model, variant=variant),
            )
            result = fit(cfg)
            score_args = argparse.Namespace(
                checkpoint=str(result.final_checkpoint),
                data=args.data,
                out=str(run_dir / "scores"),
                patch=DEFAULT_PATCH,
                median=DEFAULT_MEDIAN_WINDOW,
                normalize="on",
            )
            cmd_score(score_args)
            eval_result = _collect_eval(run_dir / "scores", args.data)
            cells[(row_name, col_name)] = eval_result["dataset_auc"]
            print(f"{row_name} {col_name}: AUC {eval_result['dataset_auc']:.4f}")
    table_path = out_dir / "ablation_table.csv"
    with table_path.open("w", newline="") as fh:
        fh.write("model," + ",".join(col for _, col in ABLATION_MODES) + "\n")
        for _, row_name in ABLATION_VARIANTS:
            cols = ",".join(f"{cells[(row_name, col)]:.6f}" for _, col in ABLATION_MODES)
            fh.write(f"{row_name},{cols}\n")
    print(table_path)
    return 0


def cmd_report(args) -> int:
    run_dir = Path(args.run)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    summary = describe_run(run_dir)
    cfg_payload = json.loads((run_dir / "run_config.json").read_text())
    data = cfg_payload.get("data")
    if not data:
        raise IngestError(f"run config in {run_dir} has no dataset path")
    ckpt = run_dir / "checkpoint_final.pt"
    if not ckpt.exists():
        raise IngestError(f"missing final checkpoint: {ckpt}")
    model, _ = load_checkpoint(ckpt)
    manifest = load_manifest(data)
    entries = manifest.videos(TEST_SPLIT)
    if not entries:
        raise IngestError(f"manifest {data} has no test videos to report on")
    seq = load_video(manifest, TEST_SPLIT, entries[0])
    recons = reconstruct_video(model, seq, model.config.clip_len)
    maps = {
        idx: pixel_error_map(seq.frames[:, idx], rec, idx, seq.video_id)
        for idx, rec in recons
    }
    raw = {idx: frame_score(m) for idx, m in maps.items()}
    recon_by_idx = dict(recons)
    picks = [max(raw, key=raw.get), min(raw, key=raw.get)]
    for idx in picks:
        render_panel(
            seq.frames[:, idx].numpy(),
            recon_by_idx[idx].numpy(),
            maps[idx].values,
            out_dir / f"panel_{seq.video_id}_{idx:06d}.png",
            title=f"{seq.video_id} frame {idx} (score {raw[idx]:.4f})",
        )
    if summary.mode in (MODE_DDL, MODE_SDL):
        render_sigma_trace(run_dir / "sigma_trace.csv", out_dir / "sigma_trace.png")
    lines = [
        f"mode: {summary.mode}",
        f"epochs: {summary.epochs}",
        f"steps: {summary.steps}",
        f"final_sigma: {summary.final_sigma}",
        f"final_losses: {summary.final_losses}",
    ]
    (out_dir / "summary.txt").write_text("\n".join(lines) + "\n")
    print(out_dir)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="distinctvad",
        description="Video anomaly detection with pseudo-anomaly training and a distinction loss.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate the synthetic sprite corpus")
    p.add_argument("--config", help="generator config JSON")
    p.add_argument("--out", required=True, help="dataset root to create")
    p.add_argument("--seed", type=int, help="generator seed (default 7)")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train a model")
    p.add_argument("--config", help="training config JSON")
    p.add_argument("--mode", choices=MODES, help="override the config mode")
    p.add_argument("--data", help="dataset manifest path")
    p.add_argument("--out", help="run output directory")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("score", help="score the test split of a dataset")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--patch", type=int, default=DEFAULT_PATCH)
    p.add_argument("--median", type=int, default=DEFAULT_MEDIAN_WINDOW)
    p.add_argument("--normalize", choices=["on", "off"], default="on")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("eval", help="compute frame-level AUC from written scores")
    p.add_argument("--scores", required=True, help="directory written by `score`")
    p.add_argument("--data", required=True)
    p.add_argument("--scene-map", help="JSON mapping scene id -> list of video ids")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="run the 2x3 architecture/mode sweep")
    p.add_argument("--config", help="training config JSON shared by all runs")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("report", help="emit error-map panels and the weight trace")
    p.add_argument("--run", required=True, help="run output directory")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 0
    try:
        return args.func(args)
    except ContractError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (IngestError, IoError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except NumericError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
