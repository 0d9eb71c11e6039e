"""Evaluation protocols: latent interpolation, identity-loss increment,
t-SNE export of latent distributions, and the repeated-inference flicker probe.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from .backbones import BackendHandles, encode_identity
from .core import validate_latent
from .errors import LengthError, ParameterError, RangeError
from .losses import identity_loss
from .mapper import MapperMLP
from .pipeline import infer_from_w, synthesize

# published comparison rows (before, after) mean identity losses; kept as
# constants for report rendering and metric-arithmetic checks only
PUBLISHED_BASELINES = {
    "pSp": (0.1548, 0.5092, 0.3544),
    "R&R": (0.3010, 0.5797, 0.2787),
    "OSTeC": (0.2326, 0.5710, 0.3384),
    "FaceID": (0.3441, 0.7046, 0.3605),
    "Ours": (0.4903, 0.6117, 0.1213),
}


def interpolate_w(w1: torch.Tensor, w2: torch.Tensor, k: int, n: int = 8) -> torch.Tensor:
    """w1 + (w2 - w1) * k / n; k = 0 gives w1 exactly, k = n gives w2 exactly."""
    validate_latent(w1)
    validate_latent(w2)
    if n < 1:
        raise RangeError(f"n must be >= 1, got {n}")
    if not 0 <= k <= n:
        raise RangeError(f"k must be in [0, {n}], got {k}")
    if k == 0:
        return w1.clone()
    if k == n:
        return w2.clone()
    return w1 + (w2 - w1) * (k / n)


def interpolation_strip(img_a: torch.Tensor, img_b: torch.Tensor, mode: str,
                        handles: BackendHandles, mapper: MapperMLP,
                        n_frames: int = 8) -> tuple[list[torch.Tensor], torch.Tensor, torch.Tensor]:
    """Render images along the line between two mapped latents.

    mode 'pose_varies' keeps image a as identity and moves the pose input from
    a to b; 'identity_varies' keeps the pose fixed at a and moves the identity.
    Endpoints of the strip equal direct inference on the two configurations.
    """
    if mode == "pose_varies":
        pairs = ((img_a, img_a), (img_a, img_b))
    elif mode == "identity_varies":
        pairs = ((img_a, img_a), (img_b, img_a))
    else:
        raise ParameterError(f"unknown interpolation mode {mode!r}")
    with torch.no_grad():
        w1, _, _ = synthesize(pairs[0][0], pairs[0][1], handles, mapper)
        w2, _, _ = synthesize(pairs[1][0], pairs[1][1], handles, mapper)
        frames = [infer_from_w(interpolate_w(w1, w2, k, n_frames - 1), handles)
                  for k in range(n_frames)]
    return frames, w1, w2


def identity_increment(before_losses: list[float], after_losses: list[float]
                       ) -> tuple[float, float, float]:
    """Mean identity loss before/after cartoonisation and their difference."""
    if len(before_losses) != len(after_losses) or not before_losses:
        raise LengthError(
            f"need equal-length non-empty lists, got {len(before_losses)}/{len(after_losses)}")
    mean_before = float(np.mean(before_losses))
    mean_after = float(np.mean(after_losses))
    return mean_before, mean_after, mean_after - mean_before


@dataclass
class IdentityIncrementReport:
    before: list[float]
    after: list[float]
    mean_before: float
    mean_after: float
    increment: float

    def write_csv(self, path: Path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["index", "l_id_before", "l_id_after"])
            for i, (b, a) in enumerate(zip(self.before, self.after)):
                writer.writerow([i, repr(b), repr(a)])
            writer.writerow(["mean", repr(self.mean_before), repr(self.mean_after)])
            writer.writerow(["increment", "", repr(self.increment)])


def identity_increment_pipeline(images: list[torch.Tensor], handles: BackendHandles,
                                mapper: MapperMLP) -> IdentityIncrementReport:
    """Self-driven evaluation: each image fills both input slots, then the
    identity loss against the raw generator image (before) and the cartoonised
    one (after) is aggregated."""
    if not images:
        raise LengthError("empty evaluation set")
    before, after = [], []
    with torch.no_grad():
        for img in images:
            w, raw, out = synthesize(img, img, handles, mapper)
            e_x = encode_identity(handles.identity, img)
            before.append(float(identity_loss(e_x, encode_identity(handles.identity, raw))))
            after.append(float(identity_loss(e_x, encode_identity(handles.identity, out))))
    mean_b, mean_a, inc = identity_increment(before, after)
    return IdentityIncrementReport(before, after, mean_b, mean_a, inc)


def tsne_export(ws_original: list[np.ndarray], ws_mapped: list[np.ndarray],
                dims: int = 2, perplexity: float = 30.0, seed: int = 0
                ) -> tuple[np.ndarray, list[str]]:
    """Joint t-SNE embedding of the two latent populations.

    Returns (points, labels) where labels mark each row 'original' or 'mapped'.
    Stochastic method: seeded for reproducibility, no geometric exactness claims.
    """
    from sklearn.manifold import TSNE

    if not ws_original or not ws_mapped:
        raise ParameterError("both latent lists must be non-empty")
    if dims not in (2, 3):
        raise ParameterError(f"dims must be 2 or 3, got {dims}")
    total = len(ws_original) + len(ws_mapped)
    if perplexity >= (total - 1) / 3:
        raise ParameterError(
            f"perplexity {perplexity} too large for {total} points (need < {(total - 1) / 3:.1f})")
    data = np.vstack([np.stack(ws_original), np.stack(ws_mapped)]).astype(np.float64)
    labels = ["original"] * len(ws_original) + ["mapped"] * len(ws_mapped)
    embedded = TSNE(n_components=dims, perplexity=perplexity, random_state=seed,
                    init="pca").fit_transform(data)
    return embedded, labels


def write_tsne_outputs(points: np.ndarray, labels: list[str], out_dir: Path):
    """CSV of embedded coordinates plus a rendered scatter image."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    dims = points.shape[1]
    with open(out_dir / "tsne.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["label"] + [f"dim{i}" for i in range(dims)])
        for label, row in zip(labels, points):
            writer.writerow([label] + [repr(float(v)) for v in row])

    fig = plt.figure(figsize=(6, 6))
    ax = fig.add_subplot(projection="3d" if dims == 3 else None)
    for name, color in (("original", "tab:blue"), ("mapped", "tab:orange")):
        mask = np.array([lbl == name for lbl in labels])
        ax.scatter(*points[mask].T, s=8, alpha=0.7, label=name, color=color)
    ax.legend()
    fig.savefig(out_dir / "tsne.png", dpi=150)
    plt.close(fig)


def flicker_probe(img: torch.Tensor, runs: int, handles: BackendHandles,
                  mapper: MapperMLP, noise_sigma: float = 0.0, seed: int = 0
                  ) -> tuple[list[torch.Tensor], dict]:
    """Repeated inference on one input; reports pairwise pixel-difference stats.

    With deterministic backends and noise_sigma = 0 the differences are exactly
    zero; a nonzero sigma perturbs the latent per run to quantify flicker.
    """
    if runs < 2:
        raise ParameterError(f"need runs >= 2, got {runs}")
    gen = torch.Generator().manual_seed(seed)
    outputs = []
    with torch.no_grad():
        for _ in range(runs):
            w, _, _ = synthesize(img, img, handles, mapper)
            if noise_sigma > 0:
                w = w + noise_sigma * torch.randn(w.shape, generator=gen)
            outputs.append(infer_from_w(w, handles))
    diffs = []
    for i in range(runs):
        for j in range(i + 1, runs):
            diffs.append((outputs[i] - outputs[j]).abs())
    stacked = torch.stack(diffs)
    stats = {
        "max_abs_diff": float(stacked.max()),
        "mean_abs_diff": float(stacked.mean()),
        "runs": runs,
    }
    return outputs, stats
