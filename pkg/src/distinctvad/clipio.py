"""Frame/label ingestion, dataset manifests, and sliding-window extraction.

Dataset layout on disk:

    <root>/<split>/<video_id>/frames/%06d.png
    <root>/<split>/<video_id>/labels.txt
    <root>/<split>/<video_id>/tracks.jsonl
    <root>/manifest.json

All pixel math downstream happens on float tensors in [0, 1]; frames are
stored as 8-bit PNG.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import torch
from PIL import Image

from .errors import ContractError, IngestError

IMAGE_EXTENSIONS = (".png", ".jpg", ".jpeg", ".bmp")

TRAIN_SPLIT = "train"
TEST_SPLIT = "test"
SPLITS = (TRAIN_SPLIT, TEST_SPLIT)


@dataclass
class FrameSequence:
    """A whole video as a (c, F, H, W) float tensor with values in [0, 1]."""

    frames: torch.Tensor
    video_id: str
    fps: Optional[float] = None

    def __post_init__(self):
        if self.frames.ndim != 4:
            raise ContractError(
                f"frames must be (c, F, H, W), got shape {tuple(self.frames.shape)}"
            )
        lo, hi = float(self.frames.min()), float(self.frames.max())
        if lo < 0.0 or hi > 1.0:
            raise ContractError(f"pixel values must lie in [0, 1], got [{lo}, {hi}]")

    @property
    def num_frames(self) -> int:
        return self.frames.shape[1]

    @property
    def frame_size(self) -> tuple[int, int]:
        return self.frames.shape[2], self.frames.shape[3]


@dataclass
class ClipWindow:
    """A (c, T, H, W) slice of a video, centered on frame ``center_index``."""

    data: torch.Tensor
    center_index: int
    video_id: str

    @property
    def clip_len(self) -> int:
        return self.data.shape[1]

    def frame_range(self) -> range:
        half = (self.clip_len - 1) // 2
        return range(self.center_index - half, self.center_index + half + 1)


@dataclass
class GroundTruthLabels:
    """Per-frame binary anomaly labels for one video."""

    labels: np.ndarray
    video_id: str


@dataclass
class VideoEntry:
    video_id: str
    num_frames: int
    frames_dir: str
    labels_path: str
    tracks_path: Optional[str] = None


@dataclass
class DatasetManifest:
    """Index of a dataset root: per-split video entries plus generator metadata."""

    root: Path
    frame_size: tuple[int, int]
    channels: int
    splits: dict[str, list[VideoEntry]] = field(default_factory=dict)
    seed: Optional[int] = None

    def videos(self, split: str) -> list[VideoEntry]:
        if split not in SPLITS:
            raise ContractError(f"unknown split {split!r}, expected one of {SPLITS}")
        return self.splits.get(split, [])

    def video_dir(self, split: str, entry: VideoEntry) -> Path:
        return self.root / split / entry.video_id


def _parse_frame_index(path: Path) -> int:
    try:
        return int(path.stem)
    except ValueError:
        raise IngestError(f"frame file name is not a zero-padded index: {path.name}")


def load_frame_dir(
    path: str | Path,
    target_size: Optional[tuple[int, int]] = None,
    channels: Optional[int] = None,
    video_id: Optional[str] = None,
) -> FrameSequence:
    """Load an indexed image directory into a FrameSequence.

    Files must be named with zero-padded integer indices forming a consecutive
    run (e.g. 000000.png, 000001.png, ...). ``target_size`` is (H, W);
    ``channels`` forces 1 (grayscale) or 3 (RGB), default keeps the native
    channel count of the first image.
    """
    path = Path(path)
    if not path.is_dir():
        raise IngestError(f"not a directory: {path}")
    files = [p for p in path.iterdir() if p.suffix.lower() in IMAGE_EXTENSIONS]
    if not files:
        raise IngestError(f"no image files in {path}")

    indexed = sorted((_parse_frame_index(p), p) for p in files)
    indices = [i for i, _ in indexed]
    if len(set(indices)) != len(indices):
        dupes = sorted({i for i in indices if indices.count(i) > 1})
        raise IngestError(f"duplicate frame indices {dupes} in {path}")
    first, last = indices[0], indices[-1]
    if indices != list(range(first, last + 1)):
        missing = sorted(set(range(first, last + 1)) - set(indices))
        raise IngestError(f"missing frame indices {missing[:10]} in {path}")

    if channels not in (None, 1, 3):
        raise ContractError(f"channels must be 1 or 3, got {channels}")

    arrays = []
    native_size = None
    for _, p in indexed:
        try:
            with Image.open(p) as img:
                img.load()
                if native_size is None:
                    native_size = img.size
                elif img.size != native_size:
                    raise IngestError(
                        f"frame {p.name} has size {img.size}, expected {native_size}"
                    )
                mode_channels = channels if channels is not None else (1 if img.mode in ("L", "I;16", "1") else 3)
                img = img.convert("L" if mode_channels == 1 else "RGB")
                if target_size is not None:
                    h, w = target_size
                    img = img.resize((w, h), Image.BILINEAR)
                arr = np.asarray(img, dtype=np.float32) / 255.0
        except IngestError:
            raise
        except Exception as exc:
            raise IngestError(f"cannot decode {p}: {exc}") from exc
        if arr.ndim == 2:
            arr = arr[None, :, :]
        else:
            arr = arr.transpose(2, 0, 1)
        arrays.append(arr)

    frames = torch.from_numpy(np.stack(arrays, axis=1))
    return FrameSequence(frames=frames, video_id=video_id or path.parent.name)


def sliding_windows(seq: FrameSequence, clip_len: int) -> list[ClipWindow]:
    """Cut stride-1 windows of odd length ``clip_len`` out of a video.

    Returns F - clip_len + 1 windows whose ``data`` are views (not copies) of
    the source tensor.
    """
    if clip_len % 2 == 0:
        raise ContractError(f"window length must be odd, got {clip_len}")
    if clip_len < 1:
        raise ContractError(f"window length must be >= 1, got {clip_len}")
    num = seq.num_frames
    if clip_len > num:
        raise ContractError(f"window length {clip_len} exceeds video length {num}")
    half = (clip_len - 1) // 2
    return [
        ClipWindow(
            data=seq.frames[:, start : start + clip_len],
            center_index=start + half,
            video_id=seq.video_id,
        )
        for start in range(num - clip_len + 1)
    ]


def load_labels(path: str | Path, expected_len: int, video_id: Optional[str] = None) -> GroundTruthLabels:
    """Read per-frame 0/1 labels: one token per line, or one comma-separated line."""
    path = Path(path)
    try:
        text = path.read_text().strip()
    except OSError as exc:
        raise IngestError(f"cannot read labels file {path}: {exc}") from exc
    if not text:
        tokens = []
    elif "," in text:
        tokens = [t.strip() for t in text.split(",")]
    else:
        tokens = text.split()
    for tok in tokens:
        if tok not in ("0", "1"):
            raise IngestError(f"invalid label token {tok!r} in {path}")
    if len(tokens) != expected_len:
        raise IngestError(
            f"{path} has {len(tokens)} labels, expected {expected_len}"
        )
    labels = np.array([int(t) for t in tokens], dtype=np.int64)
    return GroundTruthLabels(labels=labels, video_id=video_id or path.parent.name)


def save_manifest(manifest: DatasetManifest, path: Optional[Path] = None) -> Path:
    path = path or manifest.root / "manifest.json"
    payload = {
        "frame_size": list(manifest.frame_size),
        "channels": manifest.channels,
        "seed": manifest.seed,
        "splits": {
            split: [
                {
                    "video_id": e.video_id,
                    "num_frames": e.num_frames,
                    "frames_dir": e.frames_dir,
                    "labels_path": e.labels_path,
                    "tracks_path": e.tracks_path,
                }
                for e in entries
            ]
            for split, entries in manifest.splits.items()
        },
    }
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return path


def load_manifest(path: str | Path) -> DatasetManifest:
    path = Path(path)
    if path.is_dir():
        path = path / "manifest.json"
    try:
        payload = json.loads(path.read_text())
    except OSError as exc:
        raise IngestError(f"cannot read manifest {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise IngestError(f"manifest {path} is not valid JSON: {exc}") from exc
    try:
        splits = {
            split: [VideoEntry(**entry) for entry in entries]
            for split, entries in payload["splits"].items()
        }
        manifest = DatasetManifest(
            root=path.parent,
            frame_size=tuple(payload["frame_size"]),
            channels=int(payload["channels"]),
            splits=splits,
            seed=payload.get("seed"),
        )
    except (KeyError, TypeError) as exc:
        raise IngestError(f"manifest {path} is missing fields: {exc}") from exc
    return manifest


def load_video(manifest: DatasetManifest, split: str, entry: VideoEntry) -> FrameSequence:
    """Load one manifest entry's frames at the manifest's channel count."""
    frames_dir = manifest.root / entry.frames_dir
    seq = load_frame_dir(frames_dir, channels=manifest.channels, video_id=entry.video_id)
    if seq.num_frames != entry.num_frames:
        raise IngestError(
            f"video {entry.video_id}: manifest says {entry.num_frames} frames, "
            f"found {seq.num_frames}"
        )
    return seq


def load_video_labels(manifest: DatasetManifest, entry: VideoEntry) -> GroundTruthLabels:
    return load_labels(
        manifest.root / entry.labels_path, entry.num_frames, video_id=entry.video_id
    )
