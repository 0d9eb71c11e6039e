"""Shared tensor conventions and validation.

Images are torch tensors shaped (3, H, W) or batched (N, 3, H, W), square,
with values in [-1, 1]. The [0, 1] range appears only at the MS-SSIM and
file-I/O boundaries. Latents are 512-d vectors; landmarks are (68, 2) points
in [0, 1] normalized coordinates.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch

from .errors import DimensionError, RangeError

LATENT_DIM = 512
NUM_LANDMARKS = 68


@dataclass(frozen=True)
class LossWeights:
    """Weights of the total objective plus the optional adversarial path.

    lambda_adv = 0 disables the adversarial term; gamma_r1 scales the
    gradient penalty on real latents.
    """

    lambda_id: float = 1.0
    lambda_lnd: float = 1.0
    lambda_rec: float = 0.001
    alpha: float = 0.84
    lambda_adv: float = 0.0
    gamma_r1: float = 10.0

    def __post_init__(self):
        for name in ("lambda_id", "lambda_lnd", "lambda_rec", "lambda_adv", "gamma_r1"):
            if getattr(self, name) < 0:
                raise RangeError(f"{name} must be >= 0, got {getattr(self, name)}")
        if not 0.0 <= self.alpha <= 1.0:
            raise RangeError(f"alpha must be in [0, 1], got {self.alpha}")


def validate_image(img: torch.Tensor) -> torch.Tensor:
    """Check the (N,)3,H,W / square / [-1,1] / finite contract; return input unchanged."""
    if img.dim() == 3:
        c, h, w = img.shape
    elif img.dim() == 4:
        _, c, h, w = img.shape
    else:
        raise DimensionError(f"expected (3,H,W) or (N,3,H,W), got shape {tuple(img.shape)}")
    if c != 3:
        raise DimensionError(f"expected 3 channels, got {c}")
    if h != w:
        raise DimensionError(f"expected square image, got {h}x{w}")
    if not torch.isfinite(img).all():
        raise RangeError("image contains non-finite values")
    if img.min() < -1.0 or img.max() > 1.0:
        raise RangeError(
            f"image values outside [-1, 1]: min={float(img.min()):.4g} max={float(img.max()):.4g}"
        )
    return img


def to_unit_range(img: torch.Tensor) -> torch.Tensor:
    """Affine map [-1, 1] -> [0, 1]."""
    return (img + 1.0) / 2.0


def from_unit_range(img: torch.Tensor) -> torch.Tensor:
    """Inverse of :func:`to_unit_range`."""
    return img * 2.0 - 1.0


def validate_latent(v: torch.Tensor, dim: int = LATENT_DIM) -> torch.Tensor:
    if v.dim() == 1:
        d = v.shape[0]
    elif v.dim() == 2:
        d = v.shape[1]
    else:
        raise DimensionError(f"expected 1-d or 2-d latent, got shape {tuple(v.shape)}")
    if d != dim:
        raise DimensionError(f"expected latent dimension {dim}, got {d}")
    if not torch.isfinite(v).all():
        raise RangeError("latent contains non-finite values")
    return v


def validate_landmarks(pts: torch.Tensor) -> torch.Tensor:
    """Landmarks are (68, 2) or (N, 68, 2), coordinates in [0, 1]."""
    shape = tuple(pts.shape)
    if pts.dim() == 2:
        n, d = shape
    elif pts.dim() == 3:
        _, n, d = shape
    else:
        raise DimensionError(f"expected (68,2) or (N,68,2), got {shape}")
    if n != NUM_LANDMARKS or d != 2:
        raise DimensionError(f"expected {NUM_LANDMARKS} (x,y) points, got {shape}")
    if not torch.isfinite(pts).all():
        raise RangeError("landmarks contain non-finite values")
    if pts.min() < 0.0 or pts.max() > 1.0:
        raise RangeError("landmark coordinates outside [0, 1]")
    return pts
