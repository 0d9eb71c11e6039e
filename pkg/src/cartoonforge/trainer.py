"""Mapper optimization with the 1-in-3 reconstruction schedule.

Every `recon_period`-th iteration feeds the same image into both input slots
(reconstruction / inversion mode); the rest disentangle identity from pose.
Only the mapper and the pose-encoder tail receive gradient updates. Training
is deterministic given (config, seed, backend weights), checkpoints carry the
full RNG discipline, and a resumed run reproduces the uninterrupted one
bit-for-bit.
"""

from __future__ import annotations

import dataclasses
import hashlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .backbones import (BackendHandles, encode_identity, encode_landmarks,
                        parameter_checksum)
from .cartooniser import cartoonise
from .core import LATENT_DIM, LossWeights
from .dataset import DatasetManifest, sample_pair
from .errors import IoError, NumericalError
from .losses import (LossReport, adv_d_loss, adv_g_loss, append_report,
                     r1_penalty_terms, rec_loss, write_csv_header)
from .mapper import DEFAULT_HIDDEN, MapperConfig, MapperMLP
from .pipeline import synthesize
from . import losses as L


@dataclass
class TrainConfig:
    learning_rate: float = 5e-5
    weights: LossWeights = field(default_factory=LossWeights)
    batch_size: int = 8
    max_iterations: int = 100
    recon_period: int = 3
    seed: int = 0
    adversarial: bool = False
    lnd_dropout_after: int | None = None
    checkpoint_every: int = 50
    pose_lr_mult: float = 1.0
    rec_target: str = "cartoonised_input"  # or raw_input
    mapper_hidden: tuple[int, ...] = DEFAULT_HIDDEN

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")
        if self.recon_period < 1:
            raise ValueError("recon_period must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


def iteration_mode(i: int, recon_period: int) -> str:
    """'reconstruct' on every recon_period-th iteration (1-indexed)."""
    return "reconstruct" if i % recon_period == 0 else "disentangle"


class LatentDiscriminator(nn.Module):
    """Three-layer MLP on 512-d latents, sigmoid output."""

    def __init__(self, dim: int = LATENT_DIM, width: int = 512, seed: int = 0):
        super().__init__()
        gen = torch.Generator().manual_seed(seed)
        dims = [dim, width, width, 1]
        layers = []
        for d_in, d_out in zip(dims[:-1], dims[1:]):
            layer = nn.Linear(d_in, d_out)
            with torch.no_grad():
                bound = 1.0 / d_in**0.5
                layer.weight.copy_((torch.rand(d_out, d_in, generator=gen) * 2 - 1) * bound)
                layer.bias.copy_((torch.rand(d_out, generator=gen) * 2 - 1) * bound)
            layers.append(layer)
        self.layers = nn.ModuleList(layers)

    def forward(self, w):
        h = w
        for layer in self.layers[:-1]:
            h = F.leaky_relu(layer(h), 0.2)
        return torch.sigmoid(self.layers[-1](h)).squeeze(-1)


def checkpoint_digest(path: Path) -> str:
    """Content hash over the checkpoint's tensors and scalars (zip metadata
    such as timestamps is excluded by construction)."""
    payload = torch.load(path, map_location="cpu", weights_only=False)
    digest = hashlib.sha256()

    def _feed(obj):
        if isinstance(obj, torch.Tensor):
            digest.update(b"T")
            digest.update(obj.detach().contiguous().numpy().tobytes())
        elif isinstance(obj, dict):
            digest.update(b"D")
            for key in sorted(obj, key=repr):
                digest.update(repr(key).encode())
                _feed(obj[key])
        elif isinstance(obj, (list, tuple)):
            digest.update(b"L")
            for item in obj:
                _feed(item)
        elif isinstance(obj, np.ndarray):
            digest.update(b"A")
            digest.update(obj.tobytes())
        else:
            digest.update(repr(obj).encode())

    _feed(payload)
    return digest.hexdigest()


class Trainer:
    def __init__(self, cfg: TrainConfig, manifest: DatasetManifest,
                 handles: BackendHandles, out_dir: Path):
        self.cfg = cfg
        self.manifest = manifest
        self.handles = handles
        self.out_dir = Path(out_dir)
        self.ckpt_dir = self.out_dir / "checkpoints"
        self.samples_dir = self.out_dir / "samples"
        self.csv_path = self.out_dir / "losses.csv"
        for d in (self.out_dir, self.ckpt_dir, self.samples_dir):
            d.mkdir(parents=True, exist_ok=True)

        torch.manual_seed(cfg.seed)
        mapper_cfg = MapperConfig(pose_dim=handles.pose_dim,
                                  identity_dim=handles.identity_dim,
                                  hidden_layers=tuple(cfg.mapper_hidden))
        self.mapper = MapperMLP(mapper_cfg, seed=cfg.seed)
        self.pose_tail = [p for p in handles.pose.module.parameters() if p.requires_grad]
        self.optimizer = torch.optim.Adam(
            [{"params": self.mapper.parameters(), "lr": cfg.learning_rate},
             {"params": self.pose_tail, "lr": cfg.learning_rate * cfg.pose_lr_mult}],
            betas=(0.9, 0.999))
        self.pair_rng = np.random.default_rng(cfg.seed + 1)

        self.discriminator = None
        self.d_optimizer = None
        if cfg.adversarial:
            self.discriminator = LatentDiscriminator(seed=cfg.seed + 7)
            self.d_optimizer = torch.optim.Adam(self.discriminator.parameters(),
                                                lr=cfg.learning_rate, betas=(0.9, 0.999))
        self.iteration = 0
        self._image_cache: dict[int, torch.Tensor] = {}
        self._frozen_checksums = self._compute_frozen_checksums()

    # -- helpers -----------------------------------------------------------

    def _compute_frozen_checksums(self) -> dict[str, str]:
        h = self.handles
        return {
            "identity": parameter_checksum(h.identity.module),
            "landmark": parameter_checksum(h.landmark.module),
            "generator": parameter_checksum(h.generator.module),
            "mapping": parameter_checksum(h.mapping.module),
            "cartooniser": parameter_checksum(h.cartooniser),
        }

    def frozen_backbones_intact(self) -> bool:
        return self._compute_frozen_checksums() == self._frozen_checksums

    def _entry_image(self, entry) -> torch.Tensor:
        if entry.index not in self._image_cache:
            self._image_cache[entry.index] = self.manifest.entry_image(entry)
        return self._image_cache[entry.index]

    def _sample_batch(self, same: bool):
        ids, poses, w_real = [], [], []
        for _ in range(self.cfg.batch_size):
            id_entry, pose_entry = sample_pair(self.manifest, same, self.pair_rng)
            ids.append(self._entry_image(id_entry))
            poses.append(self._entry_image(pose_entry))
            if self.cfg.adversarial:
                w_real.append(torch.from_numpy(self.manifest.entry_w(id_entry)))
        w_real_t = torch.stack(w_real) if w_real else None
        return torch.stack(ids), torch.stack(poses), w_real_t

    def effective_weights(self, i: int) -> LossWeights:
        w = self.cfg.weights
        if self.cfg.lnd_dropout_after is not None and i > self.cfg.lnd_dropout_after:
            w = dataclasses.replace(w, lambda_lnd=0.0)
        return w

    # -- optimization ------------------------------------------------------

    def adversarial_step(self, w_fake: torch.Tensor, w_real: torch.Tensor) -> float:
        """One discriminator update on real manifest latents vs mapper output."""
        gamma = self.cfg.weights.gamma_r1
        d_real = self.discriminator(w_real)
        d_fake = self.discriminator(w_fake.detach())
        r1 = r1_penalty_terms(self.discriminator, w_real)
        d_loss = adv_d_loss(d_real, d_fake, r1, gamma)
        self.d_optimizer.zero_grad()
        d_loss.backward()
        self.d_optimizer.step()
        return float(d_loss.detach())

    def step(self, i: int) -> LossReport:
        mode = iteration_mode(i, self.cfg.recon_period)
        same = mode == "reconstruct"
        weights = self.effective_weights(i)
        id_batch, pose_batch, w_real = self._sample_batch(same)

        with torch.no_grad():
            cart_id = cartoonise(self.handles.cartooniser, id_batch)
            e_ref = encode_identity(self.handles.identity, cart_id)
            cart_pose = cart_id if same else cartoonise(self.handles.cartooniser, pose_batch)
            lnd_ref = encode_landmarks(self.handles.landmark, cart_pose)

        w, raw, out = synthesize(id_batch, pose_batch, self.handles, self.mapper,
                                 train_mode=True)
        l_id = L.identity_loss(e_ref, encode_identity(self.handles.identity, out))
        l_lnd = L.landmark_loss(lnd_ref, encode_landmarks(self.handles.landmark, out))
        target = cart_id if self.cfg.rec_target == "cartoonised_input" else id_batch
        l_rec = rec_loss(out, target, same, weights.alpha)

        l_adv_g_t, l_adv_d = None, None
        if self.cfg.adversarial:
            l_adv_d = self.adversarial_step(w, w_real)
            l_adv_g_t = adv_g_loss(self.discriminator(w))

        total = L.total_loss(l_id, l_lnd, l_rec, weights, l_adv_g_t)
        if not torch.isfinite(total):
            raise NumericalError(f"non-finite total loss at iteration {i}")
        self.optimizer.zero_grad()
        total.backward()
        self.optimizer.step()

        report = LossReport(
            iteration=i, mode=mode,
            l_id=float(l_id.detach()), l_lnd=float(l_lnd.detach()),
            l_rec=float(l_rec.detach()),
            l_adv_g=None if l_adv_g_t is None else float(l_adv_g_t.detach()),
            l_adv_d=l_adv_d,
            l_total=0.0,
            lambda_id=weights.lambda_id, lambda_lnd=weights.lambda_lnd,
            lambda_rec=weights.lambda_rec, lambda_adv=weights.lambda_adv,
        )
        # the logged total is recomputed from the logged components so the
        # weighted-sum identity holds exactly in the CSV
        report.l_total = report.weighted_sum()
        self.iteration = i
        return report

    # -- checkpointing -----------------------------------------------------

    def save_checkpoint(self, path: Path | None = None) -> Path:
        path = path or (self.ckpt_dir / f"ckpt_{self.iteration:06d}.pt")
        payload = {
            "iteration": self.iteration,
            "config": dataclasses.asdict(self.cfg),
            "mapper_cfg": dataclasses.asdict(self.mapper.cfg),
            "mapper_state": self.mapper.state_dict(),
            "pose_state": self.handles.pose.module.state_dict(),
            "optimizer_state": self.optimizer.state_dict(),
            "pair_rng_state": self.pair_rng.bit_generator.state,
            "torch_rng_state": torch.get_rng_state(),
            "discriminator_state": (None if self.discriminator is None
                                    else self.discriminator.state_dict()),
            "d_optimizer_state": (None if self.d_optimizer is None
                                  else self.d_optimizer.state_dict()),
        }
        torch.save(payload, path)
        return path

    def load_checkpoint(self, path: Path):
        if not Path(path).exists():
            raise IoError(f"checkpoint not found: {path}")
        payload = torch.load(path, map_location="cpu", weights_only=False)
        self.iteration = payload["iteration"]
        self.mapper.load_state_dict(payload["mapper_state"])
        self.handles.pose.module.load_state_dict(payload["pose_state"])
        self.optimizer.load_state_dict(payload["optimizer_state"])
        self.pair_rng.bit_generator.state = payload["pair_rng_state"]
        torch.set_rng_state(payload["torch_rng_state"])
        if self.discriminator is not None and payload["discriminator_state"] is not None:
            self.discriminator.load_state_dict(payload["discriminator_state"])
            self.d_optimizer.load_state_dict(payload["d_optimizer_state"])

    def _truncate_csv(self, upto_iteration: int):
        if not self.csv_path.exists():
            write_csv_header(self.csv_path)
            return
        with open(self.csv_path) as fh:
            lines = fh.readlines()
        kept = [lines[0]] if lines else []
        for line in lines[1:]:
            it = int(line.split(",", 1)[0])
            if it <= upto_iteration:
                kept.append(line)
        with open(self.csv_path, "w") as fh:
            fh.writelines(kept)

    def run(self, resume: Path | None = None) -> Path:
        """Train to max_iterations; returns the final checkpoint path."""
        if resume is not None:
            self.load_checkpoint(resume)
            self._truncate_csv(self.iteration)
        else:
            write_csv_header(self.csv_path)
            self.save_checkpoint()
        last_ckpt = None
        for i in range(self.iteration + 1, self.cfg.max_iterations + 1):
            report = self.step(i)
            append_report(self.csv_path, report)
            if self.cfg.checkpoint_every and i % self.cfg.checkpoint_every == 0:
                last_ckpt = self.save_checkpoint()
        final = self.ckpt_dir / "ckpt_final.pt"
        self.save_checkpoint(final)
        return final


def train(cfg: TrainConfig, manifest: DatasetManifest, handles: BackendHandles,
          out_dir: Path, resume: Path | None = None) -> Path:
    return Trainer(cfg, manifest, handles, out_dir).run(resume=resume)


def load_mapper_from_checkpoint(path: Path, seed: int = 0) -> MapperMLP:
    """Rebuild the mapper (architecture + weights) stored in a checkpoint."""
    if not Path(path).exists():
        raise IoError(f"checkpoint not found: {path}")
    payload = torch.load(path, map_location="cpu", weights_only=False)
    cfg_dict = dict(payload["mapper_cfg"])
    cfg_dict["hidden_layers"] = tuple(cfg_dict["hidden_layers"])
    mapper = MapperMLP(MapperConfig(**cfg_dict), seed=seed)
    mapper.load_state_dict(payload["mapper_state"])
    mapper.eval()
    return mapper
