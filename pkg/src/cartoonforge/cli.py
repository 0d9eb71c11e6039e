"""Single entry point dispatching to dataset, train, infer, interpolate,
eval-id, tsne, flicker, and plot-losses subcommands."""

from __future__ import annotations

import argparse
import hashlib
import sys
from pathlib import Path

import numpy as np
import torch

from . import dataset as ds
from .backbones import load_backend
from .config import run_config, write_config_echo
from .core import LossWeights
from .errors import CartoonForgeError, ConfigError, IoError
from .evalkit import (flicker_probe, identity_increment_pipeline,
                      interpolation_strip, tsne_export, write_tsne_outputs)
from .losses import read_reports
from .pipeline import synthesize
from .trainer import TrainConfig, Trainer, load_mapper_from_checkpoint
from .config import mapper_hidden_layers


def _add_backend_flags(p: argparse.ArgumentParser):
    p.add_argument("--backend", choices=["toy", "pretrained"], default=None,
                   help="backend kind (overrides config; env CARTOONFORGE_BACKEND wins)")
    p.add_argument("--config", type=Path, default=None, help="flat key=value config file")


def _config_from(args) -> dict:
    overrides = {}
    if getattr(args, "backend", None):
        overrides["backend.kind"] = args.backend
    return run_config(getattr(args, "config", None), overrides)


def _require_checkpoint(path: Path) -> Path:
    if path is None or not Path(path).exists():
        raise ConfigError(f"checkpoint not found: {path}")
    return Path(path)


def _w_hash(w: torch.Tensor) -> str:
    return hashlib.sha256(w.detach().numpy().astype("<f4").tobytes()).hexdigest()


def cmd_dataset(args) -> int:
    config = _config_from(args)
    handles = load_backend(config)
    manifest = ds.forge(args.count, args.seed, handles, args.out,
                        backend_kind=config["backend.kind"])
    print(f"forged {manifest.count} entries into {args.out}")
    return 0


def _train_config(config: dict, max_iterations: int | None = None) -> TrainConfig:
    return TrainConfig(
        learning_rate=config["learning_rate"],
        weights=LossWeights(lambda_id=config["lambda_id"], lambda_lnd=config["lambda_lnd"],
                            lambda_rec=config["lambda_rec"], alpha=config["alpha"],
                            lambda_adv=config["lambda_adv"], gamma_r1=config["gamma_r1"]),
        batch_size=config["batch_size"],
        max_iterations=max_iterations if max_iterations is not None else config["max_iterations"],
        recon_period=config["recon_period"],
        seed=config["seed"],
        adversarial=config["adversarial"],
        lnd_dropout_after=config["lnd_dropout_after"],
        checkpoint_every=config["checkpoint_every"],
        pose_lr_mult=config["pose_lr_mult"],
        rec_target=config["rec_target"],
        mapper_hidden=mapper_hidden_layers(config),
    )


def cmd_train(args) -> int:
    config = _config_from(args)
    handles = load_backend(config)
    manifest = ds.DatasetManifest.load(args.dataset)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_config_echo(config, out_dir / "config.echo")
    trainer = Trainer(_train_config(config), manifest, handles, out_dir)
    final = trainer.run(resume=args.resume)
    print(f"final checkpoint: {final}")
    return 0


def cmd_infer(args) -> int:
    config = _config_from(args)
    handles = load_backend(config)
    mapper = load_mapper_from_checkpoint(_require_checkpoint(args.ckpt))
    id_img = ds.load_image_png(args.identity)
    pose_img = ds.load_image_png(args.pose)
    if id_img.shape[-1] != handles.resolution or pose_img.shape[-1] != handles.resolution:
        raise ConfigError(
            f"input resolution must be {handles.resolution}, got "
            f"{id_img.shape[-1]} / {pose_img.shape[-1]}")
    with torch.no_grad():
        w, _, out = synthesize(id_img, pose_img, handles, mapper)
    ds.save_image_png(args.out, out)
    print(f"w sha256: {_w_hash(w)}")
    print(f"wrote {args.out}")
    return 0


def cmd_interpolate(args) -> int:
    config = _config_from(args)
    handles = load_backend(config)
    mapper = load_mapper_from_checkpoint(_require_checkpoint(args.ckpt))
    img_a = ds.load_image_png(args.a)
    img_b = ds.load_image_png(args.b)
    mode = {"pose": "pose_varies", "identity": "identity_varies"}[args.mode]
    frames, _, _ = interpolation_strip(img_a, img_b, mode, handles, mapper)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    for k, frame in enumerate(frames):
        ds.save_image_png(out_dir / f"interp_{k:02d}.png", frame)
    print(f"wrote {len(frames)} frames to {out_dir}")
    return 0


def cmd_eval_id(args) -> int:
    config = _config_from(args)
    handles = load_backend(config)
    mapper = load_mapper_from_checkpoint(_require_checkpoint(args.ckpt))
    image_paths = sorted(Path(args.set).glob("*.png"))
    if not image_paths:
        raise IoError(f"no PNG images found in {args.set}")
    images = [ds.load_image_png(p) for p in image_paths]
    report = identity_increment_pipeline(images, handles, mapper)
    report.write_csv(args.out)
    print(f"mean before {report.mean_before:.4f}, after {report.mean_after:.4f}, "
          f"increment {report.increment:.4f}")
    return 0


def _load_vectors(directory: Path) -> list[np.ndarray]:
    paths = sorted(Path(directory).glob("w_*.vec")) or sorted(Path(directory).glob("*.vec"))
    if not paths:
        raise IoError(f"no vector files found in {directory}")
    return [ds.read_vector(p) for p in paths]


def cmd_tsne(args) -> int:
    points, labels = tsne_export(_load_vectors(args.original), _load_vectors(args.mapped),
                                 dims=args.dims, perplexity=args.perplexity, seed=args.seed)
    write_tsne_outputs(points, labels, args.out)
    print(f"wrote t-SNE outputs to {args.out}")
    return 0


def cmd_flicker(args) -> int:
    config = _config_from(args)
    handles = load_backend(config)
    mapper = load_mapper_from_checkpoint(_require_checkpoint(args.ckpt))
    img = ds.load_image_png(args.img)
    _, stats = flicker_probe(img, args.runs, handles, mapper,
                             noise_sigma=args.noise_sigma)
    print(f"max abs diff {stats['max_abs_diff']:.6g}, "
          f"mean abs diff {stats['mean_abs_diff']:.6g} over {args.runs} runs")
    return 0


def cmd_plot_losses(args) -> int:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    reports = read_reports(args.csv)
    if not reports:
        raise IoError(f"no loss rows in {args.csv}")
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    iters = [r.iteration for r in reports]
    terms = {
        "l_id": [r.l_id for r in reports],
        "l_lnd": [r.l_lnd for r in reports],
        "l_rec": [r.l_rec for r in reports],
        "l_total": [r.l_total for r in reports],
    }
    if any(r.l_adv_g is not None for r in reports):
        terms["l_adv_g"] = [r.l_adv_g or 0.0 for r in reports]
        terms["l_adv_d"] = [r.l_adv_d or 0.0 for r in reports]
    for name, values in terms.items():
        fig, ax = plt.subplots(figsize=(6, 4))
        ax.plot(iters, values, linewidth=1)
        ax.set_xlabel("iteration")
        ax.set_ylabel(name)
        ax.set_title(name)
        fig.tight_layout()
        fig.savefig(out_dir / f"{name}.png", dpi=120)
        plt.close(fig)
    print(f"wrote {len(terms)} plots to {out_dir}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cartoonforge",
        description="Identity/pose face cartoonisation: dataset synthesis, "
                    "mapper training, inference, and evaluation tools.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("dataset", help="synthesize a (z, w, image) training corpus")
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, required=True)
    _add_backend_flags(p)
    p.set_defaults(func=cmd_dataset)

    p = sub.add_parser("train", help="optimize the mapper on a forged dataset")
    p.add_argument("--config", type=Path, default=None)
    p.add_argument("--dataset", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--resume", type=Path, default=None)
    p.add_argument("--backend", choices=["toy", "pretrained"], default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("infer", help="cartoonise one identity/pose image pair")
    p.add_argument("--identity", type=Path, required=True)
    p.add_argument("--pose", type=Path, required=True)
    p.add_argument("--ckpt", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    _add_backend_flags(p)
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("interpolate", help="render a latent interpolation strip")
    p.add_argument("--a", type=Path, required=True)
    p.add_argument("--b", type=Path, required=True)
    p.add_argument("--mode", choices=["pose", "identity"], required=True)
    p.add_argument("--ckpt", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    _add_backend_flags(p)
    p.set_defaults(func=cmd_interpolate)

    p = sub.add_parser("eval-id", help="identity-loss increment over an image set")
    p.add_argument("--set", type=Path, required=True)
    p.add_argument("--ckpt", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    _add_backend_flags(p)
    p.set_defaults(func=cmd_eval_id)

    p = sub.add_parser("tsne", help="t-SNE export of two latent distributions")
    p.add_argument("--original", type=Path, required=True)
    p.add_argument("--mapped", type=Path, required=True)
    p.add_argument("--dims", type=int, choices=[2, 3], default=2)
    p.add_argument("--perplexity", type=float, default=30.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_tsne)

    p = sub.add_parser("flicker", help="repeated-inference flicker probe")
    p.add_argument("--img", type=Path, required=True)
    p.add_argument("--runs", type=int, required=True)
    p.add_argument("--ckpt", type=Path, required=True)
    p.add_argument("--noise-sigma", type=float, default=0.0)
    _add_backend_flags(p)
    p.set_defaults(func=cmd_flicker)

    p = sub.add_parser("plot-losses", help="render per-term loss curves from a CSV log")
    p.add_argument("--csv", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_plot_losses)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CartoonForgeError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
