#!/usr/bin/env python3
"""End-to-end demo on the deterministic toy backend.

Forges a small latent/image corpus, trains the latent mapper for a few
hundred iterations, then runs inference, an interpolation strip, the
identity-increment report, the flicker probe, and loss-curve plots — all
through the installed ``cartoonforge`` CLI. Everything lands under the
--out directory (default ./demo_run) and completes in a couple of minutes
on CPU.
"""

import argparse
import sys
from pathlib import Path

from cartoonforge.cli import main as cli


def run(argv):
    print("+ cartoonforge " + " ".join(argv))
    code = cli(argv)
    if code != 0:
        sys.exit(code)


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", type=Path, default=Path("demo_run"))
    parser.add_argument("--count", type=int, default=24)
    parser.add_argument("--iterations", type=int, default=300)
    args = parser.parse_args()

    root = args.out
    root.mkdir(parents=True, exist_ok=True)
    cfg = root / "train.cfg"
    cfg.write_text(
        "# demo settings: small mapper + raised learning rate so descent\n"
        "# is visible within a few hundred toy iterations\n"
        "learning_rate = 0.001\n"
        "batch_size = 2\n"
        f"max_iterations = {args.iterations}\n"
        "checkpoint_every = 100\n"
        "mapper.hidden = 128,128\n")

    run(["dataset", "--count", str(args.count), "--seed", "0",
         "--out", str(root / "data")])
    run(["train", "--config", str(cfg), "--dataset", str(root / "data"),
         "--out", str(root / "run")])

    ckpt = root / "run" / "checkpoints" / "ckpt_final.pt"
    data = root / "data"
    run(["infer", "--identity", str(data / "img_000000.png"),
         "--pose", str(data / "img_000001.png"),
         "--ckpt", str(ckpt), "--out", str(root / "inferred.png")])
    run(["interpolate", "--a", str(data / "img_000000.png"),
         "--b", str(data / "img_000002.png"), "--mode", "pose",
         "--ckpt", str(ckpt), "--out", str(root / "strip")])
    run(["eval-id", "--set", str(data), "--ckpt", str(ckpt),
         "--out", str(root / "identity_increment.csv")])
    run(["flicker", "--img", str(data / "img_000000.png"), "--runs", "5",
         "--ckpt", str(ckpt)])
    # t-SNE requires perplexity < (points - 1) / 3 over the 2*count vectors
    perplexity = min(5.0, (2 * args.count - 1) / 3 - 0.5)
    run(["tsne", "--original", str(data), "--mapped", str(data),
         "--perplexity", str(perplexity), "--out", str(root / "tsne")])
    run(["plot-losses", "--csv", str(root / "run" / "losses.csv"),
         "--out", str(root / "plots")])
    print(f"\ndemo artifacts written under {root}/")


if __name__ == "__main__":
    main()
