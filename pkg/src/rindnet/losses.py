"""Edge loss, focal attention loss and their weighted total.

Both losses sum over pixels and average over the batch.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch

from rindnet.dataio import IGNORE
from rindnet.errors import ContractError

EPS = 1e-6


@dataclass(frozen=True)
class EdgeLossParams:
    beta: float = 4.0
    gamma1: float = 0.5

    def __post_init__(self):
        if self.beta <= 0 or self.gamma1 <= 0:
            raise ValueError("beta and gamma1 must be positive")


@dataclass(frozen=True)
class FocalLossParams:
    alpha2: float = 0.5
    gamma2: float = 2.0

    def __post_init__(self):
        if not 0.0 < self.alpha2 < 1.0 or self.gamma2 < 0:
            raise ValueError("alpha2 must lie in (0, 1) and gamma2 must be >= 0")


def _check_probabilities(y: torch.Tensor, name: str):
    # NaN passes through on purpose: the trainer reports it with the sample id
    finite = y[torch.isfinite(y)]
    if finite.numel() and (finite.min() < 0 or finite.max() > 1):
        raise ValueError(f"{name} must lie in [0, 1] (got range [{finite.min().item():.4g}, {finite.max().item():.4g}])")


def edge_loss_maps(Y: torch.Tensor, E: torch.Tensor, params: EdgeLossParams = EdgeLossParams()) -> torch.Tensor:
    """Per-map edge loss over the last two axes; returns a tensor of shape ``Y.shape[:-2]``.

    The class-balance weight alpha (fraction of non-edge pixels) is computed
    separately for every map.
    """
    _check_probabilities(Y, "Y")
    E = E.to(Y.dtype)
    y = Y.clamp(EPS, 1.0 - EPS)
    n = E.shape[-2] * E.shape[-1]
    alpha = (1.0 - E).sum(dim=(-2, -1), keepdim=True) / n
    beta = torch.as_tensor(params.beta, dtype=Y.dtype)
    pos = E * alpha * beta.pow((1.0 - y).pow(params.gamma1)) * torch.log(y)
    neg = (1.0 - E) * (1.0 - alpha) * beta.pow(y.pow(params.gamma1)) * torch.log(1.0 - y)
    return -(pos + neg).sum(dim=(-2, -1))


def edge_loss_single(Y: torch.Tensor, E: torch.Tensor, params: EdgeLossParams = EdgeLossParams()) -> torch.Tensor:
    """Loss of one [H,W] prediction against its binary label map."""
    return edge_loss_maps(Y, E, params)


def edge_loss(Y: torch.Tensor, E: torch.Tensor, params: EdgeLossParams = EdgeLossParams()) -> torch.Tensor:
    """Sum over the edge-type planes of [.., K, H, W]; batch mean if a batch axis is present."""
    per_plane = edge_loss_maps(Y, E, params)
    total = per_plane.sum(dim=-1)
    return total.mean() if total.dim() else total


def focal_loss_maps(A: torch.Tensor, T: torch.Tensor, params: FocalLossParams = FocalLossParams(),
                    check_normalized: bool = True) -> torch.Tensor:
    """Per-sample focal loss summed over channels and valid pixels; shape ``A.shape[:-3]``.

    Entries whose target is 255 are excluded. ``A`` must be a softmax output
    along the channel axis (-3).
    """
    if A.shape != T.shape:
        raise ContractError(f"attention {tuple(A.shape)} and target {tuple(T.shape)} differ in shape")
    _check_probabilities(A, "A")
    if check_normalized and A.numel():
        dev = (A.sum(dim=-3) - 1.0).abs().max()
        if dev > 1e-3:
            raise ContractError(f"attention maps are not normalized across channels (max deviation {dev.item():.3g})")
    valid = T != IGNORE
    t = torch.where(valid, T, torch.zeros_like(T)).to(A.dtype)
    a = A.clamp(EPS, 1.0 - EPS)
    pos = t * params.alpha2 * (1.0 - a).pow(params.gamma2) * torch.log(a)
    neg = (1.0 - t) * (1.0 - params.alpha2) * a.pow(params.gamma2) * torch.log(1.0 - a)
    per_entry = torch.where(valid, -(pos + neg), torch.zeros_like(a))
    return per_entry.sum(dim=(-3, -2, -1))


def focal_attention_loss(A: torch.Tensor, T: torch.Tensor, params: FocalLossParams = FocalLossParams(),
                         check_normalized: bool = True) -> torch.Tensor:
    per_sample = focal_loss_maps(A, T, params, check_normalized)
    return per_sample.mean() if per_sample.dim() else per_sample


def total_loss(edge: torch.Tensor | float, attention: torch.Tensor | float, lam: float = 0.1):
    return lam * edge + (1.0 - lam) * attention
