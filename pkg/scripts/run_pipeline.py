#!/usr/bin/env python3
"""End-to-end desk-scale run: data -> autoencoder -> predictors -> reports -> panel.

Produces every artifact the explorer UI needs under --workdir, then prints
the serve command. Roughly 10 minutes on two cores with default settings.
"""

import argparse
import sys
from pathlib import Path

from calintro import data
from calintro.cli import main as cli


def sh(args):
    print("+ calintro " + " ".join(args), flush=True)
    code = cli(args)
    if code != 0:
        sys.exit(code)


def run(workdir: Path, n: int, seed: int, vae_epochs: int, predictor_epochs: int):
    workdir.mkdir(parents=True, exist_ok=True)
    datadir = workdir / "data"
    latents = workdir / "latents.csv"

    sh(["gen-data", "--n", str(n), "--classes", "7", "--size", "32",
        "--seed", str(seed), "--out", str(datadir)])
    sh(["train-vae", "--data", str(datadir), "--d", "10",
        "--epochs", str(vae_epochs), "--seed", str(seed + 1),
        "--out", str(workdir / "vae.json"),
        "--latents-out", str(latents),
        "--stats-out", str(workdir / "latent_stats.json")])
    sh(["train-predictor", "--latents", str(latents),
        "--alpha", "0.7", "--tau", "0.05",
        "--epochs", str(predictor_epochs), "--seed", str(seed + 2),
        "--split-seed", str(seed + 3),
        "--out", str(workdir / "pred.json")])
    sh(["train-baseline", "--latents", str(latents),
        "--epochs", "150", "--seed", str(seed + 2),
        "--split-seed", str(seed + 3),
        "--out", str(workdir / "base.json")])
    sh(["eval", "--model", str(workdir / "pred.json"),
        "--baseline", str(workdir / "base.json"),
        "--latents", str(latents), "--out", str(workdir / "report")])

    ids, _, _ = data.load_latent_csv(latents)
    sh(["counterfact", "--model", str(workdir / "pred.json"),
        "--vae", str(workdir / "vae.json"), "--latents", str(latents),
        "--id", ids[0], "--eta2", "0.5", "--eta3", "0.2",
        "--dump", "pgm", "--out", str(workdir / "panel")])

    print("\nall artifacts written; to explore interactively run:")
    print(f"  calintro serve --vae {workdir / 'vae.json'} "
          f"--model calibrated={workdir / 'pred.json'} "
          f"--model baseline={workdir / 'base.json'} "
          f"--latents {latents} --data {datadir} --port 8080")


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--workdir", type=Path, default=Path("runs/default"))
    ap.add_argument("--n", type=int, default=2000)
    ap.add_argument("--seed", type=int, default=20240)
    ap.add_argument("--vae-epochs", type=int, default=60)
    ap.add_argument("--predictor-epochs", type=int, default=600)
    args = ap.parse_args()
    run(args.workdir, args.n, args.seed, args.vae_epochs, args.predictor_epochs)
