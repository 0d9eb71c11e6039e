"""The image-to-image cartooniser network.

U-Net-like: 4 downsampling blocks (each two conv-BN-ReLU units, first conv
stride 2), a bottleneck of 4 residual blocks, and 4 upsampling blocks (two
stride-1 conv-BN-ReLU units around a 2x upsample). Concatenative skip
connections between matching-resolution encoder/decoder stages, toggleable.
3x3 kernels with padding 1 throughout; final 3-channel conv + tanh pins the
output to [-1, 1].
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn as nn

from .core import validate_image
from .errors import DimensionError

NUM_STAGES = 4


@dataclass(frozen=True)
class CartooniserConfig:
    base_channels: int = 32
    channel_mults: tuple[int, ...] = (1, 2, 4, 8)
    num_residual_blocks: int = 4
    skip_connections: bool = True
    upsample_mode: str = "nearest"  # or "bilinear"

    def __post_init__(self):
        if len(self.channel_mults) != NUM_STAGES:
            raise DimensionError("exactly 4 down/up stages are required")
        if self.num_residual_blocks != 4:
            raise DimensionError("bottleneck must contain exactly 4 residual blocks")


def stage_shapes(cfg: CartooniserConfig, input_res: int) -> tuple[list[int], list[int]]:
    """Spatial sizes along the encoder (halving) and decoder (doubling) paths."""
    if input_res % 16 != 0 or input_res <= 0:
        raise DimensionError(f"input resolution must be divisible by 16, got {input_res}")
    down = [input_res // 2 ** (i + 1) for i in range(NUM_STAGES)]
    up = [down[-1] * 2 ** (i + 1) for i in range(NUM_STAGES)]
    return down, up


class ConvBNRelu(nn.Module):
    def __init__(self, in_ch: int, out_ch: int, stride: int):
        super().__init__()
        self.conv = nn.Conv2d(in_ch, out_ch, 3, stride=stride, padding=1)
        self.bn = nn.BatchNorm2d(out_ch)
        self.relu = nn.ReLU(inplace=True)

    def forward(self, x):
        return self.relu(self.bn(self.conv(x)))


class DownBlock(nn.Module):
    """Two conv-BN-ReLU units; the first conv has stride 2, the second stride 1."""

    def __init__(self, in_ch: int, out_ch: int):
        super().__init__()
        self.unit1 = ConvBNRelu(in_ch, out_ch, stride=2)
        self.unit2 = ConvBNRelu(out_ch, out_ch, stride=1)

    def forward(self, x):
        return self.unit2(self.unit1(x))


class ResidualBlock(nn.Module):
    """conv-BN-ReLU-conv-BN branch added back onto the input."""

    def __init__(self, channels: int):
        super().__init__()
        self.conv1 = nn.Conv2d(channels, channels, 3, padding=1)
        self.bn1 = nn.BatchNorm2d(channels)
        self.relu = nn.ReLU(inplace=True)
        self.conv2 = nn.Conv2d(channels, channels, 3, padding=1)
        self.bn2 = nn.BatchNorm2d(channels)

    def forward(self, x):
        branch = self.bn2(self.conv2(self.relu(self.bn1(self.conv1(x)))))
        return x + branch


class UpBlock(nn.Module):
    """conv-BN-ReLU, 2x upsample, conv-BN-ReLU; all convs stride 1."""

    def __init__(self, in_ch: int, out_ch: int, mode: str):
        super().__init__()
        self.unit1 = ConvBNRelu(in_ch, out_ch, stride=1)
        self.upsample = nn.Upsample(scale_factor=2, mode=mode)
        self.unit2 = ConvBNRelu(out_ch, out_ch, stride=1)

    def forward(self, x):
        return self.unit2(self.upsample(self.unit1(x)))


class Cartooniser(nn.Module):
    def __init__(self, cfg: CartooniserConfig | None = None):
        super().__init__()
        cfg = cfg or CartooniserConfig()
        self.cfg = cfg
        chans = [cfg.base_channels * m for m in cfg.channel_mults]

        downs, in_ch = [], 3
        for out_ch in chans:
            downs.append(DownBlock(in_ch, out_ch))
            in_ch = out_ch
        self.down_blocks = nn.ModuleList(downs)

        self.res_blocks = nn.ModuleList(
            ResidualBlock(chans[-1]) for _ in range(cfg.num_residual_blocks)
        )

        # decoder consumes the bottleneck plus (optionally) the skip feature at
        # its working resolution, producing the next-coarser encoder width
        ups = []
        up_out = chans[-2::-1] + [chans[0]]  # e.g. [128, 64, 32, 32]
        cur = chans[-1]
        for skip_ch, out_ch in zip(chans[::-1], up_out):
            in_ch = cur + (skip_ch if cfg.skip_connections else 0)
            ups.append(UpBlock(in_ch, out_ch, cfg.upsample_mode))
            cur = out_ch
        self.up_blocks = nn.ModuleList(ups)

        self.out_conv = nn.Conv2d(up_out[-1], 3, 3, padding=1)
        self.out_act = nn.Tanh()

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        squeeze = x.dim() == 3
        if squeeze:
            x = x.unsqueeze(0)
        if x.shape[-1] % 16 != 0 or x.shape[-2] != x.shape[-1]:
            raise DimensionError(
                f"cartooniser input must be square with resolution divisible by 16, "
                f"got {tuple(x.shape[-2:])}"
            )
        skips = []
        h = x
        for block in self.down_blocks:
            h = block(h)
            skips.append(h)
        for block in self.res_blocks:
            h = block(h)
        for block, skip in zip(self.up_blocks, skips[::-1]):
            if self.cfg.skip_connections:
                h = torch.cat([h, skip], dim=1)
            h = block(h)
        out = self.out_act(self.out_conv(h))
        return out.squeeze(0) if squeeze else out


def cartoonise(model: Cartooniser, img: torch.Tensor) -> torch.Tensor:
    """Forward a validated [-1,1] image; output has the same spatial size."""
    validate_image(img)
    return model(img)
