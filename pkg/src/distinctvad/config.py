"""Config-file handling: JSON files mirroring the config dataclasses.

Unknown keys are rejected by name so typos fail fast. The fully-resolved
training config is echoed to ``run_config.json``, and that echo is itself a
valid config file, so any run can be reproduced from its output directory.
"""
from __future__ import annotations

import dataclasses
import json
from pathlib import Path

from .errors import ContractError, IngestError
from .losses import LossConfig
from .model import ModelConfig
from .synth import SynthConfig
from .training import TrainConfig


def _read_json(path: str | Path) -> dict:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except OSError as exc:
        raise IngestError(f"cannot read config file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise IngestError(f"config file {path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ContractError(f"config file {path} must contain a JSON object")
    return data


def _build(cls, data: dict, context: str):
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ContractError(f"unknown config key(s) in {context}: {', '.join(unknown)}")
    converted = dict(data)
    for key in ("frame_size", "radius_range", "speed_range", "brightness_range",
                "anomaly_fraction_range"):
        if key in converted and isinstance(converted[key], list):
            converted[key] = tuple(converted[key])
    return cls(**converted)


def train_config_from_dict(data: dict, context: str = "train config") -> TrainConfig:
    data = dict(data)
    loss = _build(LossConfig, data.pop("loss", {}) or {}, f"{context}.loss")
    model = _build(ModelConfig, data.pop("model", {}) or {}, f"{context}.model")
    known = {f.name for f in dataclasses.fields(TrainConfig)} - {"loss", "model"}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ContractError(f"unknown config key(s) in {context}: {', '.join(unknown)}")
    return TrainConfig(**data, loss=loss, model=model)


def load_train_config(path: str | Path) -> TrainConfig:
    return train_config_from_dict(_read_json(path), context=str(path))


def dump_train_config(cfg: TrainConfig) -> dict:
    payload = dataclasses.asdict(cfg)
    payload["out_dir"] = None if cfg.out_dir is None else str(cfg.out_dir)
    payload["data"] = None if cfg.data is None else str(cfg.data)
    return payload


def load_synth_config(path: str | Path) -> tuple[SynthConfig, int | None]:
    """Read a generator config; an optional top-level "seed" key is returned
    separately (the CLI --seed flag overrides it)."""
    data = _read_json(path)
    seed = data.pop("seed", None)
    cfg = _build(SynthConfig, data, context=str(path))
    return cfg, seed
