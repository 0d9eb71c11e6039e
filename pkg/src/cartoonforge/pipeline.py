"""End-to-end generator composition: embeddings -> mapper -> G -> C."""

from __future__ import annotations

import torch

from .backbones import (BackendHandles, encode_identity, encode_pose, generate)
from .cartooniser import cartoonise
from .core import validate_image
from .mapper import MapperMLP, fuse


def synthesize(id_img: torch.Tensor, pose_img: torch.Tensor, handles: BackendHandles,
               mapper: MapperMLP, train_mode: bool = False
               ) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """Run the full stack; returns (w, raw generator image, cartoonised output)."""
    validate_image(id_img)
    validate_image(pose_img)
    e_id = encode_identity(handles.identity, id_img)
    e_p = encode_pose(handles.pose, pose_img, train_mode=train_mode)
    w = mapper(fuse(mapper.cfg, e_p, e_id))
    raw = generate(handles.generator, w)
    out = cartoonise(handles.cartooniser, raw)
    return w, raw, out


def infer_from_w(w: torch.Tensor, handles: BackendHandles) -> torch.Tensor:
    """C(G(w)) for an already-known latent; used by interpolation and dataset tools."""
    raw = generate(handles.generator, w)
    return cartoonise(handles.cartooniser, raw)
