"""Reconstruction loss, distinction loss, and their weighted combination.

All norms are RMS (L2 normalized by element count; masked count for the
distinction terms), which keeps the loss weights independent of resolution
and mask size. The distinction loss is the ratio

    dist = (restore_err + eps) / (retain_err + eps)

where ``restore_err`` measures how far the reconstruction of a pseudo-
anomalous frame is from the *normal* frame inside the mask, and
``retain_err`` how far it is from the anomalous input itself. Minimizing the
ratio pulls reconstructions of corrupted regions back toward normality
instead of copying the corruption.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import torch

from .errors import ContractError


@dataclass
class LossConfig:
    dist_weight: float = 0.1      # multiplier on the distinction term
    epsilon: float = 1e-6         # guards the ratio against division by zero

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ContractError(f"epsilon must be positive, got {self.epsilon}")
        if self.dist_weight < 0:
            raise ContractError(f"dist_weight must be >= 0, got {self.dist_weight}")


@dataclass
class LossBreakdown:
    """Scalar tensors; the pseudo-branch fields are None in plain-recon mode."""

    recon: torch.Tensor
    restore_err: Optional[torch.Tensor]
    retain_err: Optional[torch.Tensor]
    dist: Optional[torch.Tensor]
    total: torch.Tensor

    def as_record(self) -> dict:
        opt = lambda t: None if t is None else float(t.detach())
        return {
            "recon": float(self.recon.detach()),
            "restore_err": opt(self.restore_err),
            "retain_err": opt(self.retain_err),
            "dist": opt(self.dist),
            "total": float(self.total.detach()),
        }


def recon_loss(target: torch.Tensor, output: torch.Tensor) -> torch.Tensor:
    """Root-mean-square difference over all elements."""
    if target.shape != output.shape:
        raise ContractError(
            f"shape mismatch: target {tuple(target.shape)} vs output {tuple(output.shape)}"
        )
    return torch.sqrt(torch.mean((target - output) ** 2))


def _masked_rms(diff: torch.Tensor, mask: torch.Tensor, count: torch.Tensor) -> torch.Tensor:
    return torch.sqrt(torch.sum((mask * diff) ** 2) / count)


def distinction_loss(
    normal_frame: torch.Tensor,
    pseudo_frame: torch.Tensor,
    pseudo_recon: torch.Tensor,
    mask: torch.Tensor,
    epsilon: float = 1e-6,
) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """Masked-RMS distinction terms for (possibly batched) middle frames.

    Returns (restore_err, retain_err, dist). With an empty mask both errors
    are 0 and dist is exactly 1, contributing no useful gradient.
    """
    shapes = {tuple(t.shape) for t in (normal_frame, pseudo_frame, pseudo_recon, mask)}
    if len(shapes) != 1:
        raise ContractError(f"all frames and mask must share a shape, got {sorted(shapes)}")
    if not torch.all((mask == 0) | (mask == 1)):
        raise ContractError("mask must be binary (entries exactly 0 or 1)")
    count = mask.sum()
    if count == 0:
        zero = torch.zeros((), dtype=normal_frame.dtype)
        return zero, zero.clone(), torch.ones((), dtype=normal_frame.dtype)
    restore_err = _masked_rms(normal_frame - pseudo_recon, mask, count)
    retain_err = _masked_rms(pseudo_frame - pseudo_recon, mask, count)
    dist = (restore_err + epsilon) / (retain_err + epsilon)
    return restore_err, retain_err, dist


def total_loss(
    normal_frame: torch.Tensor,
    normal_recon: torch.Tensor,
    pseudo_frame: Optional[torch.Tensor] = None,
    pseudo_recon: Optional[torch.Tensor] = None,
    mask: Optional[torch.Tensor] = None,
    cfg: Optional[LossConfig] = None,
) -> LossBreakdown:
    """Reconstruction loss plus, when the pseudo branch is given, the weighted
    distinction loss. Omitting the pseudo branch yields plain reconstruction
    training (total == recon)."""
    cfg = cfg or LossConfig()
    recon = recon_loss(normal_frame, normal_recon)
    pseudo_args = (pseudo_frame, pseudo_recon, mask)
    if all(a is None for a in pseudo_args):
        return LossBreakdown(recon=recon, restore_err=None, retain_err=None, dist=None, total=recon)
    if any(a is None for a in pseudo_args):
        raise ContractError("pseudo_frame, pseudo_recon, and mask must be given together")
    restore_err, retain_err, dist = distinction_loss(
        normal_frame, pseudo_frame, pseudo_recon, mask, cfg.epsilon
    )
    total = recon + cfg.dist_weight * dist
    return LossBreakdown(
        recon=recon, restore_err=restore_err, retain_err=retain_err, dist=dist, total=total
    )
