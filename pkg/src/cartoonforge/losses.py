"""Scalar objectives for mapper training.

Identity: L1 cycle-consistency between identity embeddings of the cartoonised
identity image and the output. Landmark: sparse L2 between landmark sets.
Reconstruction: an alpha-weighted mix of (1 - MS-SSIM) and mean L1, gated to
iterations where the identity and pose inputs coincide. The optional
adversarial pair (non-saturating cross-entropy with an R1 gradient penalty on
real latents) exists for ablation runs only.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import torch
import torch.nn.functional as F

from .core import LossWeights, to_unit_range
from .errors import DimensionError, NumericalError, ScaleError

# standard multi-scale exponent weights, coarsest scale last
MSSSIM_WEIGHTS = (0.0448, 0.2856, 0.3001, 0.2363, 0.1333)
MSSSIM_WINDOW = 11
MSSSIM_SIGMA = 1.5
LOG_CLAMP = 1e-7

CSV_FIELDS = (
    "iteration", "mode", "l_id", "l_lnd", "l_rec", "l_adv_g", "l_adv_d", "l_total",
    "lambda_id", "lambda_lnd", "lambda_rec", "lambda_adv",
)


@dataclass
class LossReport:
    iteration: int
    mode: str  # reconstruct | disentangle
    l_id: float
    l_lnd: float
    l_rec: float
    l_total: float
    l_adv_g: float | None = None
    l_adv_d: float | None = None
    lambda_id: float = 1.0
    lambda_lnd: float = 1.0
    lambda_rec: float = 0.001
    lambda_adv: float = 0.0

    def weighted_sum(self) -> float:
        total = (self.lambda_id * self.l_id + self.lambda_lnd * self.l_lnd
                 + self.lambda_rec * self.l_rec)
        if self.l_adv_g is not None:
            total += self.lambda_adv * self.l_adv_g
        return total


def _check_same_shape(a: torch.Tensor, b: torch.Tensor):
    if a.shape != b.shape:
        raise DimensionError(f"shape mismatch: {tuple(a.shape)} vs {tuple(b.shape)}")


def identity_loss(e_ref: torch.Tensor, e_out: torch.Tensor) -> torch.Tensor:
    """Sum of absolute embedding differences; batch inputs are averaged."""
    _check_same_shape(e_ref, e_out)
    diff = (e_ref - e_out).abs().sum(dim=-1)
    return diff.mean() if diff.dim() > 0 else diff


def landmark_loss(l_ref: torch.Tensor, l_out: torch.Tensor) -> torch.Tensor:
    """Euclidean norm of the flattened 136-d landmark difference."""
    _check_same_shape(l_ref, l_out)
    if l_ref.shape[-2:] != (68, 2):
        raise DimensionError(f"expected (..., 68, 2) landmarks, got {tuple(l_ref.shape)}")
    diff = (l_ref - l_out).flatten(-2)
    norms = diff.norm(dim=-1)
    return norms.mean() if norms.dim() > 0 else norms


def _gaussian_window(dtype, device) -> torch.Tensor:
    coords = torch.arange(MSSSIM_WINDOW, dtype=dtype, device=device) - (MSSSIM_WINDOW - 1) / 2
    g = torch.exp(-(coords**2) / (2 * MSSSIM_SIGMA**2))
    g = g / g.sum()
    return g.outer(g)


def _ssim_terms(a: torch.Tensor, b: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
    """Mean luminance and contrast-structure terms over one scale (valid conv)."""
    c = a.shape[1]
    win = _gaussian_window(a.dtype, a.device).expand(c, 1, -1, -1)
    mu_a = F.conv2d(a, win, groups=c)
    mu_b = F.conv2d(b, win, groups=c)
    var_a = F.conv2d(a * a, win, groups=c) - mu_a**2
    var_b = F.conv2d(b * b, win, groups=c) - mu_b**2
    cov = F.conv2d(a * b, win, groups=c) - mu_a * mu_b
    c1, c2 = 0.01**2, 0.03**2  # dynamic range L = 1
    lum = (2 * mu_a * mu_b + c1) / (mu_a**2 + mu_b**2 + c1)
    cs = (2 * cov + c2) / (var_a + var_b + c2)
    return lum.mean(), cs.mean()


def feasible_scales(height: int, width: int) -> int:
    """Largest scale count such that the coarsest scale still fits the window."""
    m = 0
    size = min(height, width)
    while size >= MSSSIM_WINDOW and m < len(MSSSIM_WEIGHTS):
        m += 1
        size //= 2
    return m


def ms_ssim(a: torch.Tensor, b: torch.Tensor, scales: int | None = None) -> torch.Tensor:
    """Multi-scale structural similarity of two [0, 1] images.

    Luminance enters only at the coarsest scale; contrast-structure terms
    multiply across scales with the standard exponent weights (renormalized
    when the image supports fewer than five scales).
    """
    _check_same_shape(a, b)
    if a.dim() == 3:
        a, b = a.unsqueeze(0), b.unsqueeze(0)
    elif a.dim() != 4:
        raise DimensionError(f"expected image tensors, got shape {tuple(a.shape)}")
    h, w = a.shape[-2:]
    max_scales = feasible_scales(h, w)
    if max_scales == 0:
        raise ScaleError(f"image {h}x{w} smaller than the {MSSSIM_WINDOW}-pixel window")
    if scales is None:
        scales = max_scales
    elif scales > max_scales or scales < 1:
        raise ScaleError(f"{scales} scales infeasible for {h}x{w} (max {max_scales})")
    weights = torch.tensor(MSSSIM_WEIGHTS[:scales], dtype=a.dtype, device=a.device)
    if scales < len(MSSSIM_WEIGHTS):
        weights = weights / weights.sum()

    value = torch.ones((), dtype=a.dtype, device=a.device)
    for level in range(scales):
        lum, cs = _ssim_terms(a, b)
        if level == scales - 1:
            value = value * (lum * cs).clamp(min=LOG_CLAMP) ** weights[level]
        else:
            value = value * cs.clamp(min=LOG_CLAMP) ** weights[level]
            a = F.avg_pool2d(a, 2)
            b = F.avg_pool2d(b, 2)
    return value


def mix_loss(out: torch.Tensor, target: torch.Tensor, alpha: float,
             scales: int | None = None) -> torch.Tensor:
    """alpha * (1 - MS-SSIM) + (1 - alpha) * mean absolute error.

    Inputs are [-1, 1] images; MS-SSIM is computed on their [0, 1] mapping,
    the L1 term directly on the given tensors.
    """
    _check_same_shape(out, target)
    similarity = ms_ssim(to_unit_range(out), to_unit_range(target), scales=scales)
    l1 = (out - target).abs().mean()
    return alpha * (1 - similarity) + (1 - alpha) * l1


def rec_loss(out: torch.Tensor, target: torch.Tensor, same_inputs: bool, alpha: float,
             scales: int | None = None) -> torch.Tensor:
    """mix_loss when identity and pose inputs coincide, otherwise exactly 0
    (detached, so it contributes no gradient)."""
    if not same_inputs:
        return torch.zeros((), dtype=out.dtype)
    return mix_loss(out, target, alpha, scales=scales)


def total_loss(l_id: torch.Tensor, l_lnd: torch.Tensor, l_rec: torch.Tensor,
               weights: LossWeights, l_adv_g: torch.Tensor | None = None) -> torch.Tensor:
    total = (weights.lambda_id * l_id + weights.lambda_lnd * l_lnd
             + weights.lambda_rec * l_rec)
    if l_adv_g is not None:
        total = total + weights.lambda_adv * l_adv_g
    return total


def _clamp_probs(p: torch.Tensor) -> torch.Tensor:
    if not torch.isfinite(p).all():
        raise NumericalError("discriminator output is non-finite")
    return p.clamp(LOG_CLAMP, 1 - LOG_CLAMP)


def adv_d_loss(d_real: torch.Tensor, d_fake: torch.Tensor,
               grad_real_norm_sq: torch.Tensor, gamma: float) -> torch.Tensor:
    """Cross-entropy discriminator loss plus the R1 penalty on real latents."""
    d_real = _clamp_probs(d_real)
    d_fake = _clamp_probs(d_fake)
    ce = -torch.log(d_real).mean() - torch.log(1 - d_fake).mean()
    return ce + (gamma / 2) * grad_real_norm_sq.mean()


def adv_g_loss(d_fake: torch.Tensor) -> torch.Tensor:
    """Non-saturating generator-side loss: -E[log D(fake)]."""
    return -torch.log(_clamp_probs(d_fake)).mean()


def r1_penalty_terms(discriminator, w_real: torch.Tensor) -> torch.Tensor:
    """Per-sample squared gradient norms ||d D(w)/d w||^2, with graph retained."""
    w = w_real.detach().requires_grad_(True)
    scores = discriminator(w)
    grads = torch.autograd.grad(scores.sum(), w, create_graph=True)[0]
    return grads.flatten(1).pow(2).sum(dim=1)


# ---------------------------------------------------------------------------
# loss CSV log

def write_csv_header(path: Path):
    with open(path, "w", newline="") as fh:
        csv.writer(fh).writerow(CSV_FIELDS)


def append_report(path: Path, report: LossReport):
    row = [report.iteration, report.mode,
           repr(report.l_id), repr(report.l_lnd), repr(report.l_rec),
           "" if report.l_adv_g is None else repr(report.l_adv_g),
           "" if report.l_adv_d is None else repr(report.l_adv_d),
           repr(report.l_total),
           repr(report.lambda_id), repr(report.lambda_lnd),
           repr(report.lambda_rec), repr(report.lambda_adv)]
    with open(path, "a", newline="") as fh:
        csv.writer(fh).writerow(row)


def read_reports(path: Path) -> list[LossReport]:
    reports = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            reports.append(LossReport(
                iteration=int(row["iteration"]),
                mode=row["mode"],
                l_id=float(row["l_id"]),
                l_lnd=float(row["l_lnd"]),
                l_rec=float(row["l_rec"]),
                l_total=float(row["l_total"]),
                l_adv_g=float(row["l_adv_g"]) if row["l_adv_g"] else None,
                l_adv_d=float(row["l_adv_d"]) if row["l_adv_d"] else None,
                lambda_id=float(row["lambda_id"]),
                lambda_lnd=float(row["lambda_lnd"]),
                lambda_rec=float(row["lambda_rec"]),
                lambda_adv=float(row["lambda_adv"]),
            ))
    return reports
