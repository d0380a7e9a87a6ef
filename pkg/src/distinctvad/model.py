"""Reconstruction models: a per-frame 2D UNet whose skip connections fuse the
temporal window through 3D convolutions, collapsing a T-frame clip into a
reconstruction of its middle frame.

Two variants share the same block code:

* ``c3dsu``           — frames pass the encoder/decoder as independent images
                        (time folded into the batch axis); every skip
                        connection runs through a Conv3d with temporal kernel
                        extent T and no temporal padding, so the decoder only
                        ever sees middle-frame-aligned features.
* ``unet_baseline``   — single-frame UNet: clip length is forced to 1 and the
                        skip fusion is the identity.

Encoder blocks use a four-headed 3x3 convolution (outputs concatenated along
channels), batch norm, ReLU, a space-to-depth rearrangement that halves H and
W, and a final 3x3 convolution back to the block width. Decoder blocks mirror
this with depth-to-space upsampling and no downscaling step. The output head
is linear; values are clamped to [0, 1] only for visualization.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, asdict
from pathlib import Path
from typing import Optional

import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import ContractError, IngestError

VARIANT_C3DSU = "c3dsu"
VARIANT_UNET_BASELINE = "unet_baseline"
VARIANTS = (VARIANT_C3DSU, VARIANT_UNET_BASELINE)

CHECKPOINT_VERSION = 1


@dataclass
class ModelConfig:
    variant: str = VARIANT_C3DSU
    in_channels: int = 1
    clip_len: int = 3
    base_channels: int = 32
    depth: int = 4
    seed: Optional[int] = None    # resolved to the run seed (or 0) when building

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ContractError(f"unknown variant {self.variant!r}, expected one of {VARIANTS}")
        if self.variant == VARIANT_UNET_BASELINE:
            self.clip_len = 1
        if self.clip_len < 1 or self.clip_len % 2 == 0:
            raise ContractError(f"clip_len must be odd and >= 1, got {self.clip_len}")
        if self.depth < 1:
            raise ContractError(f"depth must be >= 1, got {self.depth}")
        if self.base_channels < 4 or self.base_channels % 4 != 0:
            raise ContractError(
                f"base_channels must be a positive multiple of 4, got {self.base_channels}"
            )
        if self.in_channels < 1:
            raise ContractError(f"in_channels must be >= 1, got {self.in_channels}")

    @property
    def channel_schedule(self) -> list[int]:
        return [self.base_channels * 2**i for i in range(self.depth)]


class EncoderBlock(nn.Module):
    """(N, c_in, H, W) -> (N, c_out, H/2, W/2) with a 4-headed conv stack."""

    def __init__(self, c_in: int, c_out: int):
        super().__init__()
        self.heads = nn.ModuleList(
            [nn.Conv2d(c_in, c_out // 4, kernel_size=3, padding=1) for _ in range(4)]
        )
        self.norm1 = nn.BatchNorm2d(c_out)
        self.reduce = nn.Conv2d(4 * c_out, c_out, kernel_size=3, padding=1)
        self.norm2 = nn.BatchNorm2d(c_out)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.shape[-1] % 2 or x.shape[-2] % 2:
            raise ContractError(f"spatial dims must be even, got {tuple(x.shape[-2:])}")
        x = torch.cat([head(x) for head in self.heads], dim=1)
        x = F.relu(self.norm1(x))
        x = F.pixel_unshuffle(x, 2)   # space-to-depth: (4k, H/2, W/2)
        return F.relu(self.norm2(self.reduce(x)))


class DecoderBlock(nn.Module):
    """((N, c_in, h, w), (N, c_skip, 2h, 2w)) -> (N, c_out, 2h, 2w)."""

    def __init__(self, c_in: int, c_skip: int, c_out: int):
        super().__init__()
        if c_in % 4:
            raise ContractError(f"decoder input channels must be divisible by 4, got {c_in}")
        merged = c_in // 4 + c_skip
        self.heads = nn.ModuleList(
            [nn.Conv2d(merged, c_out // 4, kernel_size=3, padding=1) for _ in range(4)]
        )
        self.norm1 = nn.BatchNorm2d(c_out)
        self.post = nn.Conv2d(c_out, c_out, kernel_size=3, padding=1)
        self.norm2 = nn.BatchNorm2d(c_out)

    def forward(self, x: torch.Tensor, skip: torch.Tensor) -> torch.Tensor:
        x = F.pixel_shuffle(x, 2)     # depth-to-space upsampling
        if x.shape[-2:] != skip.shape[-2:]:
            raise ContractError(
                f"skip spatial dims {tuple(skip.shape[-2:])} do not match "
                f"upsampled features {tuple(x.shape[-2:])}"
            )
        x = torch.cat([x, skip], dim=1)
        x = torch.cat([head(x) for head in self.heads], dim=1)
        x = F.relu(self.norm1(x))
        return F.relu(self.norm2(self.post(x)))


class TemporalFuse(nn.Module):
    """(B, k, T, H, W) -> (B, k, 1, H, W): one Conv3d with temporal extent T."""

    def __init__(self, channels: int, clip_len: int):
        super().__init__()
        self.clip_len = clip_len
        self.conv = nn.Conv3d(
            channels, channels, kernel_size=(clip_len, 3, 3), padding=(0, 1, 1)
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.shape[2] != self.clip_len:
            raise ContractError(
                f"temporal size {x.shape[2]} does not match fuse extent {self.clip_len}"
            )
        return self.conv(x)


class _IdentityFuse(nn.Module):
    """Baseline skip: pass the single frame through untouched."""

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.shape[2] != 1:
            raise ContractError(f"baseline skips require T == 1, got {x.shape[2]}")
        return x


class TemporalSkipUNet(nn.Module):
    """The reconstruction function: clip (c, T, H, W) -> middle frame (c, 1, H, W)."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        chans = config.channel_schedule
        fused = config.variant == VARIANT_C3DSU

        self.encoders = nn.ModuleList()
        c_prev = config.in_channels
        for k in chans:
            self.encoders.append(EncoderBlock(c_prev, k))
            c_prev = k

        def make_fuse(k):
            return TemporalFuse(k, config.clip_len) if fused else _IdentityFuse()

        self.input_fuse = make_fuse(config.in_channels)
        self.skip_fuses = nn.ModuleList(make_fuse(k) for k in chans)

        self.decoders = nn.ModuleList()
        for j in range(config.depth):
            if j < config.depth - 1:
                c_in, c_skip = chans[config.depth - 1 - j], chans[config.depth - 2 - j]
                c_out = c_skip
            else:
                c_in, c_skip, c_out = chans[0], config.in_channels, config.base_channels
            self.decoders.append(DecoderBlock(c_in, c_skip, c_out))

        self.head = nn.Conv2d(config.base_channels, config.in_channels, kernel_size=3, padding=1)

    def _validate(self, x: torch.Tensor) -> None:
        cfg = self.config
        b, c, t, h, w = x.shape
        if c != cfg.in_channels:
            raise ContractError(f"expected {cfg.in_channels} channels, got {c}")
        if t != cfg.clip_len:
            raise ContractError(f"expected clip length {cfg.clip_len}, got {t}")
        div = 2**cfg.depth
        if h % div or w % div:
            raise ContractError(f"H and W must be divisible by {div}, got {(h, w)}")
        if not torch.isfinite(x).all():
            raise ContractError("input contains non-finite values")

    def forward(self, clip: torch.Tensor) -> torch.Tensor:
        single = clip.dim() == 4
        x = clip.unsqueeze(0) if single else clip
        if x.dim() != 5:
            raise ContractError(f"expected a (c, T, H, W) or (B, c, T, H, W) tensor, got {clip.dim()}D")
        self._validate(x)

        skips = [self.input_fuse(x)]
        feats = x
        for enc, fuse in zip(self.encoders, self.skip_fuses):
            b, k, t, h, w = feats.shape
            per_frame = feats.permute(0, 2, 1, 3, 4).reshape(b * t, k, h, w)
            per_frame = enc(per_frame)
            feats = per_frame.reshape(b, t, *per_frame.shape[1:]).permute(0, 2, 1, 3, 4)
            skips.append(fuse(feats))

        y = skips.pop().squeeze(2)          # fused bottleneck, (B, k, h, w)
        for dec in self.decoders:
            y = dec(y, skips.pop().squeeze(2))
        out = self.head(y).unsqueeze(2)     # (B, c, 1, H, W)
        return out.squeeze(0) if single else out


def _deterministic_init(model: nn.Module, seed: int) -> None:
    """Fan-in-scaled uniform init for convs, identity for norms, from one seeded stream."""
    gen = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        for module in model.modules():
            if isinstance(module, (nn.Conv2d, nn.Conv3d)):
                fan_in = module.in_channels * math.prod(module.kernel_size)
                bound = 1.0 / math.sqrt(fan_in)
                module.weight.uniform_(-bound, bound, generator=gen)
                if module.bias is not None:
                    module.bias.uniform_(-bound, bound, generator=gen)
            elif isinstance(module, (nn.BatchNorm2d, nn.BatchNorm3d)):
                module.weight.fill_(1.0)
                module.bias.fill_(0.0)
                module.running_mean.fill_(0.0)
                module.running_var.fill_(1.0)


def build_model(config: ModelConfig) -> TemporalSkipUNet:
    """Construct and deterministically initialize a model from its config."""
    model = TemporalSkipUNet(config)
    _deterministic_init(model, config.seed if config.seed is not None else 0)
    return model


def save_checkpoint(
    model: TemporalSkipUNet, path: str | Path, anomaly_logit: Optional[float] = None
) -> Path:
    """Write a self-describing checkpoint (format documented in the README)."""
    path = Path(path)
    payload = {
        "format_version": CHECKPOINT_VERSION,
        "config": asdict(model.config),
        "params": model.state_dict(),
        "anomaly_logit": None if anomaly_logit is None else float(anomaly_logit),
    }
    torch.save(payload, path)
    return path


def load_checkpoint(path: str | Path) -> tuple[TemporalSkipUNet, Optional[float]]:
    """Restore a model (eval outputs bit-identical to the saved one) plus the
    anomaly-weight logit if the checkpoint carries one."""
    path = Path(path)
    try:
        payload = torch.load(path, map_location="cpu", weights_only=True)
    except Exception as exc:
        raise IngestError(f"cannot read checkpoint {path}: {exc}") from exc
    if not isinstance(payload, dict) or payload.get("format_version") != CHECKPOINT_VERSION:
        raise IngestError(
            f"checkpoint {path} has unsupported format version "
            f"{payload.get('format_version') if isinstance(payload, dict) else '<none>'}"
        )
    try:
        config = ModelConfig(**payload["config"])
        model = TemporalSkipUNet(config)
        model.load_state_dict(payload["params"])
    except (KeyError, TypeError, RuntimeError) as exc:
        raise IngestError(f"checkpoint {path} is corrupt: {exc}") from exc
    return model, payload.get("anomaly_logit")
