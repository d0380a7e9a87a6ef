"""Training loop: clip sampling, pseudo-anomaly construction, dual-branch
forward passes, and joint optimization of the model and the anomaly weight.

Three modes:

* ``ddl``  — pseudo branch on, anomaly weight trained by backprop
* ``sdl``  — pseudo branch on, anomaly weight frozen at 0.5
* ``none`` — plain reconstruction training, no pseudo branch

Every run is deterministic given its config: data order, mask selection, and
noise come from independent streams derived from the run seed.
"""
from __future__ import annotations

import csv
import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import torch

from .clipio import (
    ClipWindow,
    DatasetManifest,
    TRAIN_SPLIT,
    load_manifest,
    load_video,
    load_video_labels,
    sliding_windows,
)
from .errors import ContractError, IngestError, IoError, NumericError
from .losses import LossBreakdown, LossConfig, total_loss
from .masking import TrackedObjectSet, load_tracks, random_object_mask
from .model import ModelConfig, TemporalSkipUNet, build_model, save_checkpoint
from .pseudo import AnomalyWeight, blend_noise, compose_pseudo, sample_noise

MODE_DDL = "ddl"
MODE_SDL = "sdl"
MODE_NONE = "none"
MODES = (MODE_DDL, MODE_SDL, MODE_NONE)

TRAIN_LOG_COLUMNS = ["step", "recon", "P", "N", "dist", "total", "sigma"]
SIGMA_TRACE_COLUMNS = ["step", "ell", "sigma"]


@dataclass
class TrainConfig:
    mode: str = MODE_DDL
    epochs: int = 10
    batch_size: int = 8
    learning_rate: float = 1e-3
    anomaly_lr: Optional[float] = None    # learning rate for the anomaly logit; None = same
    seed: int = 7
    clip_len: int = 3
    loss: LossConfig = field(default_factory=LossConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    data: Optional[str] = None            # dataset manifest path
    out_dir: Optional[str] = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise ContractError(f"unknown mode {self.mode!r}, expected one of {MODES}")
        if self.epochs < 0 or self.batch_size < 1:
            raise ContractError("epochs must be >= 0 and batch_size >= 1")
        if self.learning_rate <= 0:
            raise ContractError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.clip_len < 1 or self.clip_len % 2 == 0:
            raise ContractError(f"clip_len must be odd and >= 1, got {self.clip_len}")


@dataclass
class TraceRecord:
    step: int
    logit: float
    sigma: float


class TrainState:
    """Everything the loop mutates: model, weight, optimizer, rng streams."""

    def __init__(
        self,
        model: TemporalSkipUNet,
        weight: Optional[AnomalyWeight],
        optimizer: torch.optim.Optimizer,
        tracks: dict[str, TrackedObjectSet],
        mask_rng: np.random.Generator,
        noise_gen: torch.Generator,
    ):
        self.model = model
        self.weight = weight
        self.optimizer = optimizer
        self.tracks = tracks
        self.mask_rng = mask_rng
        self.noise_gen = noise_gen
        self.step = 0
        self.trace: list[TraceRecord] = []


def init_train_state(cfg: TrainConfig, tracks: dict[str, TrackedObjectSet]) -> TrainState:
    model_cfg = cfg.model
    if model_cfg.seed is None:
        model_cfg = dataclasses.replace(model_cfg, seed=cfg.seed)
    model = build_model(model_cfg)
    weight = None
    param_groups = [{"params": list(model.parameters()), "lr": cfg.learning_rate}]
    if cfg.mode in (MODE_DDL, MODE_SDL):
        weight = AnomalyWeight(initial_logit=0.0, trainable=(cfg.mode == MODE_DDL))
        if weight.trainable:
            ell_lr = cfg.anomaly_lr if cfg.anomaly_lr is not None else cfg.learning_rate
            param_groups.append({"params": weight.parameters(), "lr": ell_lr})
    optimizer = torch.optim.Adam(param_groups)
    return TrainState(
        model=model,
        weight=weight,
        optimizer=optimizer,
        tracks=tracks,
        mask_rng=np.random.default_rng([cfg.seed, 2]),
        noise_gen=torch.Generator().manual_seed(cfg.seed * 1_000_003 + 3),
    )


def train_step(
    state: TrainState,
    batch: list[ClipWindow],
    cfg: TrainConfig,
    window_labels: Optional[list[int]] = None,
) -> tuple[TrainState, LossBreakdown]:
    """One optimizer step on a batch of train-split windows."""
    if window_labels is not None and any(window_labels):
        bad = [w.video_id for w, l in zip(batch, window_labels) if l]
        raise ContractError(f"anomalous-labeled frames in training batch: {sorted(set(bad))}")

    clips = torch.stack([w.data for w in batch])          # (B, c, T, H, W)
    clip_len = clips.shape[2]
    mid = (clip_len - 1) // 2
    state.model.train()
    state.optimizer.zero_grad()

    if cfg.mode == MODE_NONE:
        recon = state.model(clips)
        breakdown = total_loss(clips[:, :, mid], recon[:, :, 0], cfg=cfg.loss)
    else:
        masks = torch.stack(
            [
                random_object_mask(
                    state.tracks[w.video_id], w.frame_range(), clips.shape[1], state.mask_rng
                ).mask
                for w in batch
            ]
        )
        noise = sample_noise(tuple(clips.shape), state.noise_gen)
        blended = blend_noise(clips, noise.data, state.weight.value())
        pseudo = compose_pseudo(clips, blended, masks)
        recon = state.model(clips)
        pseudo_recon = state.model(pseudo)
        breakdown = total_loss(
            clips[:, :, mid],
            recon[:, :, 0],
            pseudo[:, :, mid],
            pseudo_recon[:, :, 0],
            masks[:, :, mid],
            cfg=cfg.loss,
        )

    if not torch.isfinite(breakdown.total):
        err = NumericError(f"non-finite loss at step {state.step}")
        err.batch_info = [
            {"video_id": w.video_id, "center_index": w.center_index} for w in batch
        ]
        raise err

    breakdown.total.backward()
    state.optimizer.step()
    state.step += 1
    if state.weight is not None:
        state.trace.append(
            TraceRecord(step=state.step, logit=float(state.weight.logit.detach()), sigma=state.weight.sigma())
        )
    return state, breakdown


@dataclass
class FitResult:
    out_dir: Path
    final_checkpoint: Path
    train_log: Path
    sigma_trace: Optional[Path]
    steps: int
    final_losses: Optional[dict]


def _log_row(step: int, breakdown: LossBreakdown, sigma: Optional[float]) -> list:
    rec = breakdown.as_record()
    fmt = lambda v: "" if v is None else repr(v)
    return [
        step,
        fmt(rec["recon"]),
        fmt(rec["restore_err"]),
        fmt(rec["retain_err"]),
        fmt(rec["dist"]),
        fmt(rec["total"]),
        fmt(sigma),
    ]


def resolve_config(cfg: TrainConfig) -> TrainConfig:
    """Concretize derived fields so the run_config.json echo stands alone."""
    model_cfg = cfg.model
    clip_len = 1 if model_cfg.variant == "unet_baseline" else cfg.clip_len
    if model_cfg.seed is None or model_cfg.clip_len != clip_len:
        model_cfg = dataclasses.replace(
            model_cfg,
            seed=cfg.seed if model_cfg.seed is None else model_cfg.seed,
            clip_len=clip_len,
        )
    return dataclasses.replace(
        cfg,
        clip_len=clip_len,
        model=model_cfg,
        anomaly_lr=cfg.anomaly_lr if cfg.anomaly_lr is not None else cfg.learning_rate,
    )


def fit(cfg: TrainConfig) -> FitResult:
    """Train per the config and write all run artifacts to the output dir."""
    if cfg.data is None or cfg.out_dir is None:
        raise ContractError("TrainConfig.data and TrainConfig.out_dir are required for fit()")
    cfg = resolve_config(cfg)
    manifest = load_manifest(cfg.data)
    out_dir = Path(cfg.out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoError(f"cannot create output dir {out_dir}: {exc}") from exc

    from .config import dump_train_config  # deferred: config depends on this module

    (out_dir / "run_config.json").write_text(
        json.dumps(dump_train_config(cfg), indent=2, sort_keys=True) + "\n"
    )

    entries = manifest.videos(TRAIN_SPLIT)
    if not entries:
        raise IngestError(f"manifest {cfg.data} has no train videos")
    clip_len = cfg.clip_len

    videos, labels, tracks = {}, {}, {}
    for entry in entries:
        videos[entry.video_id] = load_video(manifest, TRAIN_SPLIT, entry)
        labels[entry.video_id] = load_video_labels(manifest, entry).labels
        if entry.tracks_path:
            tracks[entry.video_id] = load_tracks(
                manifest.root / entry.tracks_path, manifest.frame_size
            )
        else:
            tracks[entry.video_id] = TrackedObjectSet(frame_size=manifest.frame_size)

    windows: list[ClipWindow] = []
    for entry in entries:
        windows.extend(sliding_windows(videos[entry.video_id], clip_len))

    state = init_train_state(cfg, tracks)
    data_rng = np.random.default_rng([cfg.seed, 1])

    log_path = out_dir / "train_log.csv"
    trace_path = out_dir / "sigma_trace.csv" if cfg.mode != MODE_NONE else None
    final_losses = None
    try:
        with open(log_path, "w", newline="") as log_fh:
            log_writer = csv.writer(log_fh)
            log_writer.writerow(TRAIN_LOG_COLUMNS)
            trace_fh = open(trace_path, "w", newline="") if trace_path else None
            trace_writer = None
            if trace_fh:
                trace_writer = csv.writer(trace_fh)
                trace_writer.writerow(SIGMA_TRACE_COLUMNS)
            try:
                for epoch in range(1, cfg.epochs + 1):
                    order = data_rng.permutation(len(windows))
                    for start in range(0, len(order), cfg.batch_size):
                        batch = [windows[i] for i in order[start : start + cfg.batch_size]]
                        batch_labels = [
                            int(labels[w.video_id][list(w.frame_range())].max()) for w in batch
                        ]
                        try:
                            state, breakdown = train_step(state, batch, cfg, batch_labels)
                        except NumericError as err:
                            (out_dir / "nan_dump.json").write_text(
                                json.dumps(
                                    {"step": state.step, "batch": getattr(err, "batch_info", [])},
                                    indent=2,
                                )
                                + "\n"
                            )
                            raise
                        sigma = state.weight.sigma() if state.weight is not None else None
                        log_writer.writerow(_log_row(state.step, breakdown, sigma))
                        if trace_writer and state.weight is not None:
                            trace_writer.writerow(
                                [state.step, repr(float(state.weight.logit.detach())), repr(sigma)]
                            )
                        final_losses = breakdown.as_record()
                    ell = state.weight.logit.detach() if state.weight is not None else None
                    save_checkpoint(
                        state.model,
                        out_dir / f"checkpoint_epoch_{epoch}.pt",
                        anomaly_logit=None if ell is None else float(ell),
                    )
            finally:
                if trace_fh:
                    trace_fh.close()
    except OSError as exc:
        raise IoError(f"cannot write run artifacts under {out_dir}: {exc}") from exc

    ell = state.weight.logit.detach() if state.weight is not None else None
    final_ckpt = save_checkpoint(
        state.model,
        out_dir / "checkpoint_final.pt",
        anomaly_logit=None if ell is None else float(ell),
    )
    return FitResult(
        out_dir=out_dir,
        final_checkpoint=final_ckpt,
        train_log=log_path,
        sigma_trace=trace_path,
        steps=state.step,
        final_losses=final_losses,
    )


@dataclass
class RunSummary:
    mode: str
    epochs: int
    steps: int
    final_sigma: Optional[float]
    final_losses: Optional[dict]


def describe_run(out_dir: str | Path) -> RunSummary:
    """Summarize a finished run from its artifacts."""
    out_dir = Path(out_dir)
    cfg_path = out_dir / "run_config.json"
    log_path = out_dir / "train_log.csv"
    if not cfg_path.exists():
        raise IngestError(f"missing run_config.json in {out_dir}")
    if not log_path.exists():
        raise IngestError(f"missing train_log.csv in {out_dir}")
    run_cfg = json.loads(cfg_path.read_text())
    mode = run_cfg.get("mode")
    rows = list(csv.DictReader(log_path.open()))
    final_losses = None
    if rows:
        last = rows[-1]
        final_losses = {
            k: (float(last[k]) if last[k] else None)
            for k in ("recon", "P", "N", "dist", "total")
        }
    final_sigma = None
    if mode in (MODE_DDL, MODE_SDL):
        trace_path = out_dir / "sigma_trace.csv"
        if not trace_path.exists():
            raise IngestError(f"missing sigma_trace.csv for {mode} run in {out_dir}")
        trace_rows = list(csv.DictReader(trace_path.open()))
        if trace_rows:
            final_sigma = float(trace_rows[-1]["sigma"])
    return RunSummary(
        mode=mode,
        epochs=int(run_cfg.get("epochs", 0)),
        steps=len(rows),
        final_sigma=final_sigma,
        final_losses=final_losses,
    )


def save_train_state(state: TrainState, cfg: TrainConfig, path: str | Path) -> Path:
    """Serialize the full mutable training state (resume reproduces the next
    step bit-exactly)."""
    path = Path(path)
    payload = {
        "model_config": dataclasses.asdict(state.model.config),
        "params": state.model.state_dict(),
        "optimizer": state.optimizer.state_dict(),
        "mode": cfg.mode,
        "weight_logit": None if state.weight is None else float(state.weight.logit.detach()),
        "step": state.step,
        "mask_rng_state": state.mask_rng.bit_generator.state,
        "noise_gen_state": state.noise_gen.get_state(),
        "trace": [(r.step, r.logit, r.sigma) for r in state.trace],
    }
    torch.save(payload, path)
    return path


def load_train_state(
    path: str | Path, cfg: TrainConfig, tracks: dict[str, TrackedObjectSet]
) -> TrainState:
    payload = torch.load(path, map_location="cpu", weights_only=False)
    model = TemporalSkipUNet(ModelConfig(**payload["model_config"]))
    model.load_state_dict(payload["params"])
    weight = None
    param_groups = [{"params": list(model.parameters()), "lr": cfg.learning_rate}]
    if payload["mode"] in (MODE_DDL, MODE_SDL):
        weight = AnomalyWeight(payload["weight_logit"], trainable=(payload["mode"] == MODE_DDL))
        if weight.trainable:
            ell_lr = cfg.anomaly_lr if cfg.anomaly_lr is not None else cfg.learning_rate
            param_groups.append({"params": weight.parameters(), "lr": ell_lr})
    optimizer = torch.optim.Adam(param_groups)
    optimizer.load_state_dict(payload["optimizer"])
    mask_rng = np.random.default_rng()
    mask_rng.bit_generator.state = payload["mask_rng_state"]
    noise_gen = torch.Generator()
    noise_gen.set_state(payload["noise_gen_state"])
    state = TrainState(
        model=model,
        weight=weight,
        optimizer=optimizer,
        tracks=tracks,
        mask_rng=mask_rng,
        noise_gen=noise_gen,
    )
    state.step = payload["step"]
    state.trace = [TraceRecord(*row) for row in payload["trace"]]
    return state
