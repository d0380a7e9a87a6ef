"""Inference-time anomaly scoring.

The protocol per video: reconstruct every sliding window's middle frame,
compute a per-pixel Euclidean error map, take the max patch mean over a 16x16
grid as the frame score, replicate scores onto the uncovered edge frames,
median-filter the series (window 17), min-max normalize per video, then score
frame-level ROC-AUC against the ground truth labels.
"""
from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import torch

from .clipio import FrameSequence, sliding_windows
from .errors import ContractError
from .model import TemporalSkipUNet

STAGE_RAW = "raw"
STAGE_FILTERED = "filtered"
STAGE_NORMALIZED = "normalized"

DEFAULT_PATCH = 16
DEFAULT_MEDIAN_WINDOW = 17


@dataclass
class ErrorMap:
    values: np.ndarray            # (H, W), >= 0
    frame_index: int
    video_id: str


@dataclass
class ScoreSeries:
    scores: np.ndarray
    video_id: str
    stage: str


def reconstruct_video(
    model: TemporalSkipUNet,
    seq: FrameSequence,
    clip_len: int,
    batch_size: int = 16,
) -> list[tuple[int, torch.Tensor]]:
    """Reconstruct the middle frame of every stride-1 window, in eval mode.

    Covered frame indices run from (T-1)/2 to F-1-(T-1)/2.
    """
    if seq.num_frames < clip_len:
        raise ContractError(
            f"video {seq.video_id} has {seq.num_frames} frames, needs >= {clip_len}"
        )
    windows = sliding_windows(seq, clip_len)
    model.eval()
    outputs: list[tuple[int, torch.Tensor]] = []
    with torch.no_grad():
        for start in range(0, len(windows), batch_size):
            chunk = windows[start : start + batch_size]
            batch = torch.stack([w.data for w in chunk])
            recon = model(batch)
            for w, rec in zip(chunk, recon):
                outputs.append((w.center_index, rec[:, 0]))
    return outputs


def pixel_error_map(frame, recon, frame_index: int = 0, video_id: str = "") -> ErrorMap:
    """Per-pixel Euclidean distance across channels between frame and reconstruction."""
    x = np.asarray(frame.detach() if isinstance(frame, torch.Tensor) else frame, dtype=np.float64)
    y = np.asarray(recon.detach() if isinstance(recon, torch.Tensor) else recon, dtype=np.float64)
    if x.shape != y.shape:
        raise ContractError(f"shape mismatch: {x.shape} vs {y.shape}")
    values = np.sqrt(((x - y) ** 2).sum(axis=0))
    return ErrorMap(values=values, frame_index=frame_index, video_id=video_id)


def frame_score(error_map, patch: int = DEFAULT_PATCH) -> float:
    """Max mean over a non-overlapping patch grid anchored at the origin.

    Boundary remainder patches are averaged over their actual pixels, so
    border anomalies still count.
    """
    values = error_map.values if isinstance(error_map, ErrorMap) else np.asarray(error_map)
    if patch < 1:
        raise ContractError(f"patch must be >= 1, got {patch}")
    h, w = values.shape
    best = -np.inf
    for i in range(0, h, patch):
        for j in range(0, w, patch):
            best = max(best, float(values[i : i + patch, j : j + patch].mean()))
    return best


def _as_scores(series) -> np.ndarray:
    arr = series.scores if isinstance(series, ScoreSeries) else series
    return np.asarray(arr, dtype=np.float64)


def median_filter(series, window: int = DEFAULT_MEDIAN_WINDOW):
    """Centered sliding median with replicate padding; output length unchanged."""
    if window < 1 or window % 2 == 0:
        raise ContractError(f"median window must be odd and >= 1, got {window}")
    scores = _as_scores(series)
    half = (window - 1) // 2
    padded = np.pad(scores, half, mode="edge")
    windows = np.lib.stride_tricks.sliding_window_view(padded, window)
    filtered = np.median(windows, axis=-1)
    if isinstance(series, ScoreSeries):
        return ScoreSeries(scores=filtered, video_id=series.video_id, stage=STAGE_FILTERED)
    return filtered


def normalize_per_video(series):
    """Min-max normalize to [0, 1]; a constant series maps to all zeros."""
    if isinstance(series, ScoreSeries) and series.stage != STAGE_FILTERED:
        raise ContractError(f"normalize expects a filtered series, got stage {series.stage!r}")
    scores = _as_scores(series)
    lo, hi = scores.min(), scores.max()
    normalized = np.zeros_like(scores) if hi == lo else (scores - lo) / (hi - lo)
    if isinstance(series, ScoreSeries):
        return ScoreSeries(scores=normalized, video_id=series.video_id, stage=STAGE_NORMALIZED)
    return normalized


def align_scores(scores, num_frames: int, clip_len: int):
    """Fill the uncovered leading/trailing frames with the nearest covered score."""
    covered = _as_scores(scores)
    half = (clip_len - 1) // 2
    expected = num_frames - clip_len + 1
    if len(covered) != expected:
        raise ContractError(
            f"expected {expected} covered scores for F={num_frames}, T={clip_len}, "
            f"got {len(covered)}"
        )
    full = np.concatenate([np.full(half, covered[0]), covered, np.full(half, covered[-1])])
    if isinstance(scores, ScoreSeries):
        return ScoreSeries(scores=full, video_id=scores.video_id, stage=scores.stage)
    return full


def roc_auc(scores: Sequence[float], labels: Sequence[int]) -> float:
    """Probability that a random positive outscores a random negative (ties 1/2).

    Computed via average ranks, equivalent to the trapezoidal ROC area.
    """
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    if s.shape != y.shape or s.ndim != 1:
        raise ContractError(f"scores and labels must be equal-length 1D, got {s.shape} vs {y.shape}")
    n_pos = int((y == 1).sum())
    n_neg = int((y == 0).sum())
    if n_pos + n_neg != len(y):
        raise ContractError("labels must be binary")
    if n_pos == 0 or n_neg == 0:
        raise ContractError("both classes must be present to compute AUC")
    order = np.argsort(s, kind="mergesort")
    ranks = np.empty(len(s), dtype=np.float64)
    i = 0
    while i < len(s):
        j = i
        while j + 1 < len(s) and s[order[j + 1]] == s[order[i]]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0   # average rank, 1-based
        i = j + 1
    pos_rank_sum = ranks[y == 1].sum()
    return float((pos_rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def aggregate_scene_auc(per_scene_aucs: Sequence[float]) -> float:
    """Median of per-scene AUCs (mean of the central pair for even counts)."""
    if len(per_scene_aucs) == 0:
        raise ContractError("need at least one scene AUC")
    return float(np.median(np.asarray(per_scene_aucs, dtype=np.float64)))


@dataclass
class VideoScores:
    """All scoring stages for one video, each of full frame length."""

    video_id: str
    frame_indices: np.ndarray
    raw: np.ndarray
    filtered: np.ndarray
    normalized: np.ndarray


def score_video(
    model: TemporalSkipUNet,
    seq: FrameSequence,
    clip_len: int,
    patch: int = DEFAULT_PATCH,
    median_window: int = DEFAULT_MEDIAN_WINDOW,
) -> VideoScores:
    """Run the full scoring pipeline on one video."""
    recons = reconstruct_video(model, seq, clip_len)
    raw_covered = np.array(
        [
            frame_score(pixel_error_map(seq.frames[:, idx], rec, idx, seq.video_id), patch)
            for idx, rec in recons
        ]
    )
    raw = align_scores(
        ScoreSeries(raw_covered, seq.video_id, STAGE_RAW), seq.num_frames, clip_len
    )
    filtered = median_filter(raw, median_window)
    normalized = normalize_per_video(filtered)
    return VideoScores(
        video_id=seq.video_id,
        frame_indices=np.arange(seq.num_frames),
        raw=raw.scores,
        filtered=filtered.scores,
        normalized=normalized.scores,
    )


def write_scores_csv(scores: VideoScores, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["frame_index", "raw", "filtered", "normalized"])
        for i in range(len(scores.frame_indices)):
            writer.writerow(
                [
                    int(scores.frame_indices[i]),
                    repr(float(scores.raw[i])),
                    repr(float(scores.filtered[i])),
                    repr(float(scores.normalized[i])),
                ]
            )
    return path


def read_scores_csv(path: str | Path) -> VideoScores:
    path = Path(path)
    rows = list(csv.DictReader(path.open()))
    return VideoScores(
        video_id=path.parent.name,
        frame_indices=np.array([int(r["frame_index"]) for r in rows]),
        raw=np.array([float(r["raw"]) for r in rows]),
        filtered=np.array([float(r["filtered"]) for r in rows]),
        normalized=np.array([float(r["normalized"]) for r in rows]),
    )


def evaluate_scores(
    scores_by_video: dict[str, np.ndarray],
    labels_by_video: dict[str, np.ndarray],
    scene_map: Optional[dict[str, list[str]]] = None,
) -> dict:
    """Frame-level AUC per video, over the whole dataset, and per-scene median.

    Videos whose labels contain a single class are skipped for per-video AUC
    (with a warning) but still contribute to the concatenated dataset AUC.
    """
    per_video: dict[str, Optional[float]] = {}
    skipped: list[str] = []
    all_scores, all_labels = [], []
    for vid, scores in scores_by_video.items():
        labels = labels_by_video[vid]
        if len(labels) != len(scores):
            raise ContractError(
                f"video {vid}: {len(scores)} scores vs {len(labels)} labels"
            )
        all_scores.append(scores)
        all_labels.append(labels)
        if len(set(labels.tolist())) < 2:
            warnings.warn(f"video {vid} has single-class labels; per-video AUC skipped")
            per_video[vid] = None
            skipped.append(vid)
        else:
            per_video[vid] = roc_auc(scores, labels)
    dataset_auc = roc_auc(np.concatenate(all_scores), np.concatenate(all_labels))
    result = {
        "per_video_auc": per_video,
        "dataset_auc": dataset_auc,
        "skipped_videos": skipped,
    }
    if scene_map is not None:
        scene_aucs = {}
        for scene, vids in scene_map.items():
            scene_scores = np.concatenate([scores_by_video[v] for v in vids])
            scene_labels = np.concatenate([labels_by_video[v] for v in vids])
            scene_aucs[scene] = roc_auc(scene_scores, scene_labels)
        result["per_scene_auc"] = scene_aucs
        result["scene_median_auc"] = aggregate_scene_auc(list(scene_aucs.values()))
    return result


def write_eval_json(result: dict, path: str | Path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(result, indent=2, sort_keys=True) + "\n")
    return path
