"""
Plot Training Losses (Protocol 3)
=================================

Plots one or more `losses.csv` files written by `run_cdr.py train`: the four loss
components and the total per epoch, with validation MRR on a second axis.

Usage:
    python 3_Plot_Losses.py runs/seed1/losses.csv runs/seed2/losses.csv --no-show
"""

from __future__ import annotations

import argparse
from pathlib import Path

import pandas as pd
import matplotlib.pyplot as plt


COMPONENT_COLUMNS = ("L_m", "L_d", "L_u_source", "L_u_target", "total")


def _load_losses(path: Path) -> pd.DataFrame:
    df = pd.read_csv(path)
    if df.empty:
        raise ValueError(f"CSV is empty: {path}")
    missing = [c for c in ("epoch",) + COMPONENT_COLUMNS if c not in df.columns]
    if missing:
        raise ValueError(f"{path} is missing columns {missing}")
    return df


def plot_losses(paths: list[Path], *, title: str | None = None, save_path: Path | None = None, show: bool = True):
    fig, axes = plt.subplots(2, 3, figsize=(14, 7), sharex=True)
    panels = list(COMPONENT_COLUMNS) + ["val_mrr"]
    for path in paths:
        df = _load_losses(path)
        label = path.parent.name or path.stem
        for ax, column in zip(axes.flat, panels):
            if column not in df.columns:
                continue
            series = df[["epoch", column]].dropna()
            ax.plot(series["epoch"], series[column], marker=".", label=label)
    for ax, column in zip(axes.flat, panels):
        ax.set_title(column)
        ax.grid(True, alpha=0.3)
    for ax in axes[-1]:
        ax.set_xlabel("epoch")
    axes.flat[0].legend(fontsize=8)
    fig.suptitle(title or "Training losses")
    fig.tight_layout()

    if save_path is not None:
        fig.savefig(save_path, dpi=160)
        print(f"Saved plot: {save_path}")
    if show:
        plt.show()
    else:
        plt.close(fig)


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(description="Plot losses.csv files")
    parser.add_argument("csv_files", nargs="+", type=str, help="One or more losses.csv files")
    parser.add_argument("--title", type=str, default=None, help="Optional plot title")
    parser.add_argument("--no-show", action="store_true", help="Do not show an interactive window")
    parser.add_argument("--save", type=str, default=None, help="Write the figure to this path")
    args = parser.parse_args(argv)

    paths = [Path(p) for p in args.csv_files]
    plot_losses(paths, title=args.title, save_path=Path(args.save) if args.save else None, show=not args.no_show)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
