"""Adapters around the four pretrained networks plus a deterministic toy backend.

Every handle wraps a torch module with a uniform calling convention. The toy
backend builds small fixed-seed networks (64x64 pipeline) so the whole test
suite runs without external weights; the pretrained backend loads TorchScript
exports from the paths given in config. Identity, landmark, generator,
mapping and cartooniser weights are frozen; only the pose encoder exposes a
trainable tail (its last two fully-connected layers).
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from pathlib import Path

import torch
import torch.nn as nn
import torch.nn.functional as F

from .cartooniser import Cartooniser, CartooniserConfig
from .core import LATENT_DIM, NUM_LANDMARKS, validate_image, validate_latent
from .errors import BackendError

TOY_RESOLUTION = 64
TOY_IDENTITY_DIM = 64
TOY_POSE_DIM = 128


@dataclass
class EncoderHandle:
    kind: str  # identity | pose | landmark
    module: nn.Module
    output_dim: int
    trainable_tail: bool = False


@dataclass
class GeneratorHandle:
    module: nn.Module
    resolution: int
    latent_dim: int = LATENT_DIM


@dataclass
class MappingNetworkHandle:
    module: nn.Module
    latent_dim: int = LATENT_DIM


@dataclass
class BackendHandles:
    identity: EncoderHandle
    pose: EncoderHandle
    landmark: EncoderHandle
    generator: GeneratorHandle
    mapping: MappingNetworkHandle
    cartooniser: Cartooniser
    resolution: int

    @property
    def identity_dim(self) -> int:
        return self.identity.output_dim

    @property
    def pose_dim(self) -> int:
        return self.pose.output_dim


def _seeded_linear(in_f: int, out_f: int, gen: torch.Generator) -> nn.Linear:
    layer = nn.Linear(in_f, out_f)
    with torch.no_grad():
        bound = 1.0 / in_f**0.5
        layer.weight.copy_((torch.rand(out_f, in_f, generator=gen) * 2 - 1) * bound)
        layer.bias.copy_((torch.rand(out_f, generator=gen) * 2 - 1) * bound)
    return layer


def _seed_module(module: nn.Module, seed: int) -> nn.Module:
    gen = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        for p in module.parameters():
            fan_in = p.shape[-1] if p.dim() > 1 else max(p.numel(), 1)
            bound = 1.0 / fan_in**0.5
            p.copy_((torch.rand(p.shape, generator=gen) * 2 - 1) * bound)
    return module


class ToyIdentityEncoder(nn.Module):
    """Average-pool to 8x8, then two linear layers. Trivial to re-implement
    outside torch, which the oracle tests exploit."""

    def __init__(self, out_dim: int = TOY_IDENTITY_DIM, seed: int = 101):
        super().__init__()
        self.pool = nn.AdaptiveAvgPool2d(8)
        gen = torch.Generator().manual_seed(seed)
        self.fc1 = _seeded_linear(3 * 8 * 8, 128, gen)
        self.fc2 = _seeded_linear(128, out_dim, gen)

    def forward(self, x):
        squeeze = x.dim() == 3
        if squeeze:
            x = x.unsqueeze(0)
        h = self.pool(x).flatten(1)
        out = self.fc2(torch.tanh(self.fc1(h)))
        return out.squeeze(0) if squeeze else out


class ToyPoseEncoder(nn.Module):
    """Frozen pooled-linear body plus a two-layer trainable tail."""

    def __init__(self, out_dim: int = TOY_POSE_DIM, seed: int = 202):
        super().__init__()
        self.pool = nn.AdaptiveAvgPool2d(8)
        gen = torch.Generator().manual_seed(seed)
        self.body = _seeded_linear(3 * 8 * 8, 128, gen)
        self.tail1 = _seeded_linear(128, 128, gen)
        self.tail2 = _seeded_linear(128, out_dim, gen)

    def forward(self, x):
        squeeze = x.dim() == 3
        if squeeze:
            x = x.unsqueeze(0)
        h = torch.tanh(self.body(self.pool(x).flatten(1)))
        out = self.tail2(torch.tanh(self.tail1(h)))
        return out.squeeze(0) if squeeze else out

    def tail_modules(self) -> list[nn.Module]:
        return [self.tail1, self.tail2]


class ToyLandmarkEncoder(nn.Module):
    """Pointwise (1x1) conv heatmap head with spatial soft-argmax.

    Pointwise convolutions commute with horizontal flips, and the coordinate
    grid is symmetric, so a mirrored input yields x -> 1 - x exactly.
    """

    def __init__(self, num_points: int = NUM_LANDMARKS, seed: int = 303):
        super().__init__()
        gen = torch.Generator().manual_seed(seed)
        self.conv1 = nn.Conv2d(3, 16, 1)
        self.conv2 = nn.Conv2d(16, num_points, 1)
        with torch.no_grad():
            for p in list(self.conv1.parameters()) + list(self.conv2.parameters()):
                p.copy_((torch.rand(p.shape, generator=gen) * 2 - 1) * 0.5)

    def forward(self, x):
        squeeze = x.dim() == 3
        if squeeze:
            x = x.unsqueeze(0)
        n, _, h, w = x.shape
        logits = self.conv2(torch.tanh(self.conv1(x)))  # (n, 68, h, w)
        probs = torch.softmax(logits.flatten(2), dim=-1).view(n, -1, h, w)
        # pixel-center grids keep the soft-argmax flip-symmetric
        xs = (torch.arange(w, dtype=x.dtype) + 0.5) / w
        ys = (torch.arange(h, dtype=x.dtype) + 0.5) / h
        px = (probs * xs.view(1, 1, 1, w)).sum(dim=(2, 3))
        py = (probs * ys.view(1, 1, h, 1)).sum(dim=(2, 3))
        pts = torch.stack([px, py], dim=-1)  # (n, 68, 2)
        return pts.squeeze(0) if squeeze else pts


class ToyMappingNetwork(nn.Module):
    """Two-layer MLP standing in for the generator's z -> w mapping."""

    def __init__(self, dim: int = LATENT_DIM, seed: int = 404):
        super().__init__()
        gen = torch.Generator().manual_seed(seed)
        self.fc1 = _seeded_linear(dim, dim, gen)
        self.fc2 = _seeded_linear(dim, dim, gen)

    def forward(self, z):
        return self.fc2(F.leaky_relu(self.fc1(z), 0.2))


class ToyGenerator(nn.Module):
    """4x4 seed feature map upsampled through four conv stages to 64x64."""

    def __init__(self, resolution: int = TOY_RESOLUTION, seed: int = 505):
        super().__init__()
        if resolution != 64:
            raise BackendError("toy generator is fixed at 64x64")
        self.resolution = resolution
        chans = [64, 32, 16, 8]
        self.fc = nn.Linear(LATENT_DIM, chans[0] * 4 * 4)
        convs = []
        in_ch = chans[0]
        for out_ch in chans[1:] + [chans[-1]]:
            convs.append(nn.Conv2d(in_ch, out_ch, 3, padding=1))
            in_ch = out_ch
        self.convs = nn.ModuleList(convs)
        self.out_conv = nn.Conv2d(in_ch, 3, 3, padding=1)
        _seed_module(self, seed)

    def forward(self, w):
        squeeze = w.dim() == 1
        if squeeze:
            w = w.unsqueeze(0)
        h = self.fc(w).view(w.shape[0], -1, 4, 4)
        for conv in self.convs:
            h = F.interpolate(h, scale_factor=2, mode="nearest")
            h = F.leaky_relu(conv(h), 0.2)
        img = torch.tanh(self.out_conv(h))
        return img.squeeze(0) if squeeze else img


def _freeze(module: nn.Module) -> nn.Module:
    for p in module.parameters():
        p.requires_grad_(False)
    module.eval()
    return module


def parameter_checksum(module: nn.Module) -> str:
    """Digest over all parameters and buffers, used by freeze-contract tests."""
    digest = hashlib.sha256()
    for name, t in sorted(list(module.state_dict().items())):
        digest.update(name.encode())
        digest.update(t.detach().cpu().contiguous().numpy().tobytes())
    return digest.hexdigest()


class ScriptedEncoder(nn.Module):
    """Wraps a TorchScript export; resizes input to the backbone's native size."""

    def __init__(self, path: str, input_res: int | None = None):
        super().__init__()
        try:
            self.net = torch.jit.load(path, map_location="cpu")
        except Exception as exc:  # torch.jit raises a grab-bag of types
            raise BackendError(f"failed to load scripted backbone from {path}: {exc}") from exc
        self.input_res = input_res

    def forward(self, x):
        if self.input_res is not None and x.shape[-1] != self.input_res:
            batched = x if x.dim() == 4 else x.unsqueeze(0)
            batched = F.interpolate(batched, size=self.input_res, mode="bilinear",
                                    align_corners=False)
            x = batched if x.dim() == 4 else batched.squeeze(0)
        return self.net(x)


def load_toy_backend(seed: int = 0) -> BackendHandles:
    """Fixed-seed 64x64 pipeline; `seed` offsets every sub-network seed so tests
    can instantiate distinct-but-deterministic backends."""
    id_enc = _freeze(ToyIdentityEncoder(seed=101 + seed))
    pose = ToyPoseEncoder(seed=202 + seed)
    for p in pose.parameters():
        p.requires_grad_(False)
    for m in pose.tail_modules():
        for p in m.parameters():
            p.requires_grad_(True)
    pose.eval()
    lnd = _freeze(ToyLandmarkEncoder(seed=303 + seed))
    mapping = _freeze(ToyMappingNetwork(seed=404 + seed))
    gen = _freeze(ToyGenerator(seed=505 + seed))
    cart_cfg = CartooniserConfig(base_channels=8)
    cart = Cartooniser(cart_cfg)
    _seed_module(cart, 606 + seed)
    _freeze(cart)
    return BackendHandles(
        identity=EncoderHandle("identity", id_enc, TOY_IDENTITY_DIM),
        pose=EncoderHandle("pose", pose, TOY_POSE_DIM, trainable_tail=True),
        landmark=EncoderHandle("landmark", lnd, NUM_LANDMARKS * 2),
        generator=GeneratorHandle(gen, TOY_RESOLUTION),
        mapping=MappingNetworkHandle(mapping),
        cartooniser=cart,
        resolution=TOY_RESOLUTION,
    )


def load_pretrained_backend(config: dict) -> BackendHandles:
    """Build handles from TorchScript checkpoints named in config.

    Expected keys: backend.identity.path, backend.pose.path,
    backend.landmark.path, backend.generator.path, backend.cartooniser.path.
    Weight acquisition is out-of-band; nothing is downloaded here.
    """
    resolution = int(config.get("resolution", 256))

    def _path(key: str) -> str:
        p = config.get(key, "")
        if not p or not Path(p).exists():
            raise BackendError(f"checkpoint for {key} not found: {p!r}")
        return p

    id_enc = _freeze(ScriptedEncoder(_path("backend.identity.path")))
    pose = ScriptedEncoder(_path("backend.pose.path"))
    params = list(pose.parameters())
    for p in params:
        p.requires_grad_(False)
    # tail = last two FC layers of the export (weight + bias each)
    for p in params[-4:]:
        p.requires_grad_(True)
    pose.eval()
    lnd = _freeze(ScriptedEncoder(_path("backend.landmark.path")))
    gen = _freeze(ScriptedEncoder(_path("backend.generator.path")))
    cart = _freeze(ScriptedEncoder(_path("backend.cartooniser.path")))

    d_id = int(config.get("backend.identity.dim", 512))
    d_p = int(config.get("backend.pose.dim", 4096))
    mapping = gen.net.mapping if hasattr(gen.net, "mapping") else None
    if mapping is None:
        raise BackendError("generator export must expose a `mapping` submodule (z -> w)")
    return BackendHandles(
        identity=EncoderHandle("identity", id_enc, d_id),
        pose=EncoderHandle("pose", pose, d_p, trainable_tail=True),
        landmark=EncoderHandle("landmark", lnd, NUM_LANDMARKS * 2),
        generator=GeneratorHandle(gen, resolution),
        mapping=MappingNetworkHandle(mapping),
        cartooniser=cart,
        resolution=resolution,
    )


def load_backend(config: dict) -> BackendHandles:
    kind = config.get("backend.kind", "toy")
    if kind == "toy":
        return load_toy_backend(int(config.get("backend.toy_seed", 0)))
    if kind == "pretrained":
        return load_pretrained_backend(config)
    raise BackendError(f"unknown backend kind {kind!r}")


def encode_identity(h: EncoderHandle, img: torch.Tensor) -> torch.Tensor:
    if h.kind != "identity":
        raise BackendError(f"expected identity handle, got {h.kind}")
    validate_image(img)
    return h.module(img)


def encode_pose(h: EncoderHandle, img: torch.Tensor, train_mode: bool = False) -> torch.Tensor:
    if h.kind != "pose":
        raise BackendError(f"expected pose handle, got {h.kind}")
    validate_image(img)
    if train_mode:
        return h.module(img)
    with torch.no_grad():
        return h.module(img)


def encode_landmarks(h: EncoderHandle, img: torch.Tensor) -> torch.Tensor:
    if h.kind != "landmark":
        raise BackendError(f"expected landmark handle, got {h.kind}")
    validate_image(img)
    return h.module(img)


def generate(g: GeneratorHandle, w: torch.Tensor) -> torch.Tensor:
    validate_latent(w, g.latent_dim)
    return g.module(w)


def map_z_to_w(m: MappingNetworkHandle, z: torch.Tensor) -> torch.Tensor:
    validate_latent(z, m.latent_dim)
    return m.module(z)
