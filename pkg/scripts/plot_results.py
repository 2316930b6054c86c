#!/usr/bin/env python3
"""Render the deferral curves and an evidence panel from pipeline artifacts.

Needs matplotlib (pip install 'calintro[plots]'). Reads the artifact layout
written by scripts/run_pipeline.py.
"""

import argparse
import json
from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from calintro.evaluation import curve_from_csv


def plot_curves(report_dir: Path, out: Path):
    fig, ax = plt.subplots(figsize=(6, 4))
    for csv_path in sorted(report_dir.glob("curve_*.csv")):
        curve = curve_from_csv(csv_path.read_text(), predictor_id=csv_path.stem[6:])
        ax.plot(np.array(curve.fractions) * 100, curve.accuracies,
                marker="o", markersize=3, label=curve.predictor_id)
    ax.set_xlabel("% samples deferred to expert")
    ax.set_ylabel("combined accuracy")
    ax.set_title("Deferral reliability")
    ax.grid(alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(out, dpi=150)
    print(f"wrote {out}")


def _load_f32(path: Path, shape):
    return np.frombuffer(path.read_bytes(), dtype="<f4").reshape(shape)


def plot_panel(panel_dir: Path, out: Path):
    anchor = json.loads((panel_dir / "anchor.json").read_text())
    columns = json.loads((panel_dir / "panel.json").read_text())
    k = len(anchor["rho"])
    n_cols = 1 + len(columns)
    fig, axes = plt.subplots(2, n_cols, figsize=(2.2 * n_cols, 4.6))

    entries = [dict(anchor, title=f"anchor {anchor['id']}")] + [
        dict(col, title=f"eta1={col['eta1']:g}") for col in columns]
    for j, entry in enumerate(entries):
        img = _load_f32(panel_dir / entry["image_ref"], entry["image_shape"])
        axes[0, j].imshow(np.clip(img, 0, 1))
        axes[0, j].set_title(entry["title"], fontsize=9)
        axes[0, j].axis("off")
        color = "green" if entry["correct"] else "red"
        bars = axes[1, j].bar(range(k), entry["rho"], color="lightgray")
        bars[entry["predicted"]].set_color(color)
        axes[1, j].set_ylim(0, 1)
        axes[1, j].set_xticks(range(k))
        axes[1, j].tick_params(labelsize=6)
        if "ssim" in entry:
            axes[1, j].set_xlabel(
                f"AE(z)={entry['ae_z']:.3f}\nSSIM={entry['ssim']:.3f}", fontsize=7)
    fig.tight_layout()
    fig.savefig(out, dpi=150)
    print(f"wrote {out}")


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--workdir", type=Path, default=Path("runs/default"))
    ap.add_argument("--outdir", type=Path, default=None)
    args = ap.parse_args()
    outdir = args.outdir or args.workdir
    plot_curves(args.workdir / "report", outdir / "reliability.png")
    if (args.workdir / "panel" / "panel.json").exists():
        plot_panel(args.workdir / "panel", outdir / "panel.png")
