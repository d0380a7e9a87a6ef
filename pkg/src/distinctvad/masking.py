"""Binary mask sequences that localize pseudo-anomalies to one tracked object.

Tracks come from a JSONL file (one ``{"frame": int, "object_id": int, "box":
[x0, y0, x1, y1]}`` object per line, box ends exclusive); any detector/tracker
can produce them offline, and the synthetic corpus writes ground-truth ones.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import torch

from .errors import IngestError

Box = tuple[int, int, int, int]


@dataclass
class TrackedObjectSet:
    """Per-frame object boxes for one video, keyed by frame index."""

    frame_size: tuple[int, int]
    boxes: dict[int, list[tuple[int, Box]]] = field(default_factory=dict)

    def boxes_at(self, frame: int) -> list[tuple[int, Box]]:
        return self.boxes.get(frame, [])

    def object_ids_in(self, frames: Sequence[int]) -> list[int]:
        """Sorted ids of objects appearing in at least one of the frames."""
        ids = {obj_id for f in frames for obj_id, _ in self.boxes_at(f)}
        return sorted(ids)


@dataclass
class MaskSequence:
    """A (c, T, H, W) binary tensor; ``object_id`` is None for the full-frame fallback."""

    mask: torch.Tensor
    object_id: Optional[int]


def load_tracks(path: str | Path, frame_size: tuple[int, int]) -> TrackedObjectSet:
    """Parse a JSONL track file, clamping boxes to the frame bounds."""
    path = Path(path)
    h, w = frame_size
    tracks = TrackedObjectSet(frame_size=frame_size)
    try:
        lines = path.read_text().splitlines()
    except OSError as exc:
        raise IngestError(f"cannot read track file {path}: {exc}") from exc
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            frame = int(rec["frame"])
            obj_id = int(rec["object_id"])
            x0, y0, x1, y1 = (int(v) for v in rec["box"])
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise IngestError(f"{path}:{lineno}: malformed track line: {exc}") from exc
        if obj_id < 0:
            raise IngestError(f"{path}:{lineno}: negative object_id {obj_id}")
        box = (max(0, x0), max(0, y0), min(w, x1), min(h, y1))
        tracks.boxes.setdefault(frame, []).append((obj_id, box))
    return tracks


def full_frame_fallback(shape: tuple[int, int, int, int]) -> MaskSequence:
    """All-ones mask used when a window contains no tracked objects."""
    return MaskSequence(mask=torch.ones(shape), object_id=None)


def random_object_mask(
    tracks: TrackedObjectSet,
    window: Sequence[int],
    channels: int,
    rng: np.random.Generator,
) -> MaskSequence:
    """Pick one object uniformly among those visible in the window and
    rasterize its boxes into a binary (c, T, H, W) mask.

    Frames where the chosen object is untracked get a zero mask slice. When no
    object appears anywhere in the window, falls back to an all-ones mask.
    """
    frames = list(window)
    h, w = tracks.frame_size
    ids = tracks.object_ids_in(frames)
    if not ids:
        return full_frame_fallback((channels, len(frames), h, w))
    chosen = ids[int(rng.integers(len(ids)))]
    mask = torch.zeros((channels, len(frames), h, w))
    for i, f in enumerate(frames):
        for obj_id, (x0, y0, x1, y1) in tracks.boxes_at(f):
            if obj_id == chosen and x1 > x0 and y1 > y0:
                mask[:, i, y0:y1, x0:x1] = 1.0
    return MaskSequence(mask=mask, object_id=chosen)
