"""Pseudo-anomaly creation: weighted noise blending under an object mask.

A clip is corrupted in two steps: the whole clip is first blended with a
uniform noise tensor at a learnable weight, then the blend is pasted back over
the original strictly inside the mask. The weight is the sigmoid of a single
trainable scalar, so it always lies in (0, 1) and can be adjusted by
backpropagation.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import torch

from .errors import ContractError
from .masking import MaskSequence


@dataclass
class NoiseTensor:
    """A uniform [0, 1] noise clip plus the seed of the generator that made it."""

    data: torch.Tensor
    seed: int


class AnomalyWeight:
    """The trainable scalar behind the noise weight sigma(logit) in (0, 1).

    With ``trainable=False`` (static mode) the logit is frozen at its initial
    value and never registered with an optimizer.
    """

    def __init__(self, initial_logit: float = 0.0, trainable: bool = True):
        if not math.isfinite(initial_logit):
            raise ContractError(f"initial logit must be finite, got {initial_logit}")
        self.trainable = trainable
        self.logit = torch.tensor(float(initial_logit), dtype=torch.float32, requires_grad=trainable)

    def value(self) -> torch.Tensor:
        """Differentiable weight in (0, 1)."""
        return torch.sigmoid(self.logit)

    def sigma(self) -> float:
        return float(torch.sigmoid(self.logit.detach()))

    def parameters(self) -> list[torch.Tensor]:
        return [self.logit] if self.trainable else []


def sigmoid_weight(logit):
    """1 / (1 + exp(-logit)); accepts a float or a tensor."""
    if isinstance(logit, torch.Tensor):
        if not torch.isfinite(logit).all():
            raise ContractError("logit must be finite")
        return torch.sigmoid(logit)
    if not math.isfinite(logit):
        raise ContractError(f"logit must be finite, got {logit}")
    return 1.0 / (1.0 + math.exp(-logit))


def sample_noise(shape: tuple[int, ...], rng: torch.Generator) -> NoiseTensor:
    """Draw i.i.d. uniform [0, 1] noise; resampled fresh every training batch."""
    if any(d <= 0 for d in shape):
        raise ContractError(f"noise shape must be positive, got {shape}")
    data = torch.rand(shape, generator=rng)
    return NoiseTensor(data=data, seed=rng.initial_seed())


def blend_noise(clip: torch.Tensor, noise: torch.Tensor, weight) -> torch.Tensor:
    """Convex blend (1 - w) * clip + w * noise, element-wise."""
    if clip.shape != noise.shape:
        raise ContractError(f"shape mismatch: clip {tuple(clip.shape)} vs noise {tuple(noise.shape)}")
    return (1.0 - weight) * clip + weight * noise


def compose_pseudo(clip: torch.Tensor, blended: torch.Tensor, mask) -> torch.Tensor:
    """Paste the blended clip over the original inside the binary mask."""
    mask_t = mask.mask if isinstance(mask, MaskSequence) else mask
    if clip.shape != blended.shape or clip.shape != mask_t.shape:
        raise ContractError(
            f"shape mismatch: clip {tuple(clip.shape)}, blended {tuple(blended.shape)}, "
            f"mask {tuple(mask_t.shape)}"
        )
    if not torch.all((mask_t == 0) | (mask_t == 1)):
        raise ContractError("mask must be binary (entries exactly 0 or 1)")
    return (1.0 - mask_t) * clip + mask_t * blended
