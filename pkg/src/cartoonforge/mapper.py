"""The trainable MLP that fuses pose and identity embeddings into a latent w."""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F

from .core import LATENT_DIM
from .errors import DimensionError

DEFAULT_HIDDEN = (2048, 1024, 1024, 512)


@dataclass(frozen=True)
class MapperConfig:
    pose_dim: int
    identity_dim: int
    hidden_layers: tuple[int, ...] = DEFAULT_HIDDEN
    negative_slope: float = 0.2
    normalize_blocks: bool = False  # optional per-block L2 normalization
    output_dim: int = LATENT_DIM

    def __post_init__(self):
        if self.output_dim != LATENT_DIM:
            raise DimensionError(f"mapper output dimension is fixed at {LATENT_DIM}")
        if self.pose_dim <= 0 or self.identity_dim <= 0:
            raise DimensionError("embedding dimensions must be positive")

    @property
    def input_dim(self) -> int:
        return self.pose_dim + self.identity_dim


def fuse(cfg: MapperConfig, pose: torch.Tensor, ident: torch.Tensor) -> torch.Tensor:
    """Concatenate pose block first, identity block second."""
    if pose.shape[-1] != cfg.pose_dim:
        raise DimensionError(f"pose embedding has dim {pose.shape[-1]}, expected {cfg.pose_dim}")
    if ident.shape[-1] != cfg.identity_dim:
        raise DimensionError(
            f"identity embedding has dim {ident.shape[-1]}, expected {cfg.identity_dim}"
        )
    if cfg.normalize_blocks:
        pose = F.normalize(pose, dim=-1)
        ident = F.normalize(ident, dim=-1)
    return torch.cat([pose, ident], dim=-1)


class MapperMLP(nn.Module):
    """Plain fully-connected net, leaky-rectifier activations, no normalization."""

    def __init__(self, cfg: MapperConfig, seed: int | None = None):
        super().__init__()
        self.cfg = cfg
        gen = None
        if seed is not None:
            gen = torch.Generator().manual_seed(seed)
        dims = [cfg.input_dim, *cfg.hidden_layers, cfg.output_dim]
        layers = []
        for d_in, d_out in zip(dims[:-1], dims[1:]):
            layer = nn.Linear(d_in, d_out)
            if gen is not None:
                with torch.no_grad():
                    bound = 1.0 / d_in**0.5
                    layer.weight.copy_((torch.rand(d_out, d_in, generator=gen) * 2 - 1) * bound)
                    layer.bias.copy_((torch.rand(d_out, generator=gen) * 2 - 1) * bound)
            layers.append(layer)
        self.layers = nn.ModuleList(layers)

    def forward(self, fused: torch.Tensor) -> torch.Tensor:
        if fused.shape[-1] != self.cfg.input_dim:
            raise DimensionError(
                f"fused vector has dim {fused.shape[-1]}, expected {self.cfg.input_dim}"
            )
        h = fused
        for layer in self.layers[:-1]:
            h = F.leaky_relu(layer(h), self.cfg.negative_slope)
        return self.layers[-1](h)
