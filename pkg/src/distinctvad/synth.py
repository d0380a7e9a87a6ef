"""Deterministic synthetic video corpus: moving sprites with labeled anomalies.

Normal videos contain disk sprites drifting with constant per-video velocities
and bouncing elastically off the frame edges. Test videos additionally carry
one anomalous event each, either a square sprite (a shape never seen in
training) or a disk whose speed is multiplied by a factor (unusual motion),
spanning a contiguous labeled frame range.

The renderer simulates a peak-hold exposure: every sprite is drawn as the
maximum coverage over sub-positions along its path since the previous frame,
so fast movers leave a bright motion streak. Ground-truth bounding boxes for
every sprite are written to per-video track files, standing in for an object
detector + tracker.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from PIL import Image

from .clipio import DatasetManifest, VideoEntry, save_manifest, TRAIN_SPLIT, TEST_SPLIT
from .errors import ContractError, IoError


@dataclass
class SynthConfig:
    """Knobs for the generator; defaults define the desk-scale corpus."""

    frame_size: tuple[int, int] = (64, 64)
    channels: int = 1
    train_videos: int = 5
    test_videos: int = 4
    frames_per_video: int = 80
    sprites: int = 3
    radius_range: tuple[float, float] = (3.0, 7.0)
    speed_range: tuple[float, float] = (0.8, 2.2)
    brightness_range: tuple[float, float] = (0.45, 1.0)
    anomaly_fraction_range: tuple[float, float] = (0.1, 0.4)
    anomaly_speed_multiplier: float = 4.0
    square_half_side: float = 5.0


@dataclass
class _Sprite:
    pos: np.ndarray          # float (x, y)
    vel: np.ndarray          # float (vx, vy)
    radius: float
    brightness: float
    shape: str = "disk"      # "disk" | "square"
    active: bool = True
    trail: list = field(default_factory=list)  # sub-positions for the current frame


def _coverage(shape: str, h: int, w: int, cx: float, cy: float, extent: float) -> np.ndarray:
    """Soft-edged analytic coverage of a sprite footprint on the pixel grid."""
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    if shape == "disk":
        dist = np.sqrt((xx - cx) ** 2 + (yy - cy) ** 2)
    else:
        dist = np.maximum(np.abs(xx - cx), np.abs(yy - cy))
    return np.clip(extent + 0.5 - dist, 0.0, 1.0)


def _advance(sprite: _Sprite, bounds: tuple[int, int], substeps: int = 8) -> None:
    """Move one frame forward with wall bounces, recording sub-positions."""
    h, w = bounds
    r = sprite.radius
    sprite.trail = []
    step = sprite.vel / substeps
    for _ in range(substeps):
        sprite.pos = sprite.pos + step
        # reflect component-wise; keep centers at least r inside the frame
        for axis, limit in ((0, w), (1, h)):
            lo, hi = r, limit - 1 - r
            if sprite.pos[axis] < lo:
                sprite.pos[axis] = 2 * lo - sprite.pos[axis]
                sprite.vel[axis] = -sprite.vel[axis]
                step[axis] = -step[axis]
            elif sprite.pos[axis] > hi:
                sprite.pos[axis] = 2 * hi - sprite.pos[axis]
                sprite.vel[axis] = -sprite.vel[axis]
                step[axis] = -step[axis]
        sprite.trail.append(sprite.pos.copy())


def _render_frame(sprites: list[_Sprite], frame_size: tuple[int, int]) -> np.ndarray:
    h, w = frame_size
    canvas = np.zeros((h, w), dtype=np.float64)
    for s in sprites:
        if not s.active:
            continue
        positions = s.trail or [s.pos]
        layer = np.zeros((h, w), dtype=np.float64)
        for (cx, cy) in positions:
            np.maximum(layer, _coverage(s.shape, h, w, cx, cy, s.radius), out=layer)
        canvas = np.maximum(canvas, layer * s.brightness)
    return np.clip(canvas, 0.0, 1.0)


def _bounding_box(sprite: _Sprite, frame_size: tuple[int, int]) -> Optional[list[int]]:
    """Integer [x0, y0, x1, y1] box (exclusive ends) covering the frame's smear."""
    if not sprite.active:
        return None
    h, w = frame_size
    positions = np.array(sprite.trail or [sprite.pos])
    ext = sprite.radius + 1.0
    x0 = int(math.floor(positions[:, 0].min() - ext))
    x1 = int(math.ceil(positions[:, 0].max() + ext)) + 1
    y0 = int(math.floor(positions[:, 1].min() - ext))
    y1 = int(math.ceil(positions[:, 1].max() + ext)) + 1
    x0, y0 = max(0, x0), max(0, y0)
    x1, y1 = min(w, x1), min(h, y1)
    if x0 >= x1 or y0 >= y1:
        return None
    return [x0, y0, x1, y1]


def _spawn_sprite(rng: np.random.Generator, cfg: SynthConfig, shape: str = "disk") -> _Sprite:
    h, w = cfg.frame_size
    radius = rng.uniform(*cfg.radius_range) if shape == "disk" else cfg.square_half_side
    speed = rng.uniform(*cfg.speed_range)
    angle = rng.uniform(0.0, 2.0 * math.pi)
    pos = np.array(
        [rng.uniform(radius + 1, w - 2 - radius), rng.uniform(radius + 1, h - 2 - radius)]
    )
    vel = speed * np.array([math.cos(angle), math.sin(angle)])
    return _Sprite(
        pos=pos,
        vel=vel,
        radius=radius,
        brightness=rng.uniform(*cfg.brightness_range),
        shape=shape,
    )


def _write_video(
    root: Path,
    split: str,
    video_id: str,
    frames: np.ndarray,
    labels: np.ndarray,
    tracks: list[dict],
    channels: int,
) -> VideoEntry:
    video_dir = root / split / video_id
    frames_dir = video_dir / "frames"
    try:
        frames_dir.mkdir(parents=True, exist_ok=True)
        for i, frame in enumerate(frames):
            img8 = np.round(frame * 255.0).astype(np.uint8)
            if channels == 3:
                img8 = np.stack([img8] * 3, axis=-1)
            Image.fromarray(img8).save(frames_dir / f"{i:06d}.png")
        labels_path = video_dir / "labels.txt"
        labels_path.write_text("".join(f"{int(v)}\n" for v in labels))
        tracks_path = video_dir / "tracks.jsonl"
        with tracks_path.open("w") as fh:
            for rec in tracks:
                fh.write(json.dumps(rec, sort_keys=True) + "\n")
    except OSError as exc:
        raise IoError(f"cannot write video {video_id} under {root}: {exc}") from exc
    return VideoEntry(
        video_id=video_id,
        num_frames=len(frames),
        frames_dir=str(Path(split) / video_id / "frames"),
        labels_path=str(Path(split) / video_id / "labels.txt"),
        tracks_path=str(Path(split) / video_id / "tracks.jsonl"),
    )


def _generate_video(
    cfg: SynthConfig,
    rng: np.random.Generator,
    with_anomaly: bool,
    video_index: int,
) -> tuple[np.ndarray, np.ndarray, list[dict]]:
    num_frames = cfg.frames_per_video
    sprites = [_spawn_sprite(rng, cfg) for _ in range(cfg.sprites)]

    event_range: range = range(0)
    event_kind = "none"
    square: Optional[_Sprite] = None
    fast_idx = 0
    base_speed = 0.0
    if with_anomaly:
        lo = max(1, math.ceil(cfg.anomaly_fraction_range[0] * num_frames))
        hi = max(lo, math.floor(cfg.anomaly_fraction_range[1] * num_frames))
        # sample from the middle of the configured range: events must outlast
        # the score median filter to stay detectable at the frame level
        mid_lo = min(max(lo, round(0.20 * num_frames)), hi)
        mid_hi = max(min(hi, round(0.35 * num_frames)), mid_lo)
        length = int(rng.integers(mid_lo, mid_hi + 1))
        margin = max(1, num_frames // 8)
        start = int(rng.integers(margin, max(margin + 1, num_frames - length - margin + 1)))
        event_range = range(start, start + length)
        # alternate event kinds so both always appear in a default split
        event_kind = "shape" if video_index % 2 == 0 else "motion"
        if event_kind == "shape":
            square = _spawn_sprite(rng, cfg, shape="square")
            square.active = False
            sprites.append(square)
        else:
            fast_idx = int(rng.integers(len(sprites)))
            base_speed = float(np.linalg.norm(sprites[fast_idx].vel))

    frames = np.zeros((num_frames, *cfg.frame_size), dtype=np.float64)
    labels = np.zeros(num_frames, dtype=np.int64)
    tracks: list[dict] = []

    for t in range(num_frames):
        in_event = t in event_range
        if event_kind == "shape" and square is not None:
            square.active = in_event
        if event_kind == "motion":
            sprite = sprites[fast_idx]
            speed = float(np.linalg.norm(sprite.vel))
            target = base_speed * (cfg.anomaly_speed_multiplier if in_event else 1.0)
            if speed > 0:
                sprite.vel = sprite.vel * (target / speed)
        for sprite in sprites:
            if sprite.active:
                _advance(sprite, cfg.frame_size)
        frames[t] = _render_frame(sprites, cfg.frame_size)
        labels[t] = 1 if in_event else 0
        for obj_id, sprite in enumerate(sprites):
            box = _bounding_box(sprite, cfg.frame_size)
            if box is not None:
                tracks.append({"frame": t, "object_id": obj_id, "box": box})
    return frames, labels, tracks


def synth_dataset(cfg: SynthConfig, seed: int, root: str | Path) -> DatasetManifest:
    """Generate the corpus under ``root`` and return its manifest.

    Fully deterministic given (cfg, seed): frame PNGs are byte-identical
    across runs. The train split never contains an anomalous frame.
    """
    if cfg.sprites < 1:
        raise ContractError("at least one sprite must be configured")
    if cfg.channels not in (1, 3):
        raise ContractError(f"channels must be 1 or 3, got {cfg.channels}")
    h, w = cfg.frame_size
    if h < 8 or w < 8:
        raise ContractError(f"frame size too small: {cfg.frame_size}")

    root = Path(root)
    try:
        root.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoError(f"cannot create dataset root {root}: {exc}") from exc

    rng = np.random.default_rng(seed)
    manifest = DatasetManifest(
        root=root, frame_size=cfg.frame_size, channels=cfg.channels, seed=seed
    )
    for split, count, with_anomaly in (
        (TRAIN_SPLIT, cfg.train_videos, False),
        (TEST_SPLIT, cfg.test_videos, True),
    ):
        entries = []
        for i in range(count):
            frames, labels, tracks = _generate_video(cfg, rng, with_anomaly, i)
            entries.append(
                _write_video(root, split, f"{split}_{i:03d}", frames, labels, tracks, cfg.channels)
            )
        manifest.splits[split] = entries
    save_manifest(manifest)
    return manifest
