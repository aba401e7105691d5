"""
Plot Ablation Results (Protocol 4)
==================================

Grouped bar plot of an `ablation_<timestamp>.csv` written by 4_Ablation_Study.py: one
panel per transfer direction, one bar group per metric, one bar per variant, with the
standard deviation over seeds as error bars.

Usage:
    python 4_Plot_Ablation.py data/test_protocol/4_ablation/ablation_<timestamp>.csv --no-show
"""

from __future__ import annotations

import argparse
from pathlib import Path

import numpy as np
import pandas as pd
import matplotlib.pyplot as plt


MODEL_ORDER = ("popularity", "A", "B", "C", "D", "full")
DEFAULT_METRICS = ("hr@10", "ndcg@10", "mrr")


def _load_results(path: Path, metrics: tuple[str, ...]) -> pd.DataFrame:
    df = pd.read_csv(path)
    if df.empty:
        raise ValueError(f"CSV is empty: {path}")
    missing = [c for c in ("seed", "direction", "model") + tuple(metrics) if c not in df.columns]
    if missing:
        raise ValueError(f"{path} is missing columns {missing}")
    return df


def plot_ablation(csv_file: Path, *, metrics: tuple[str, ...] = DEFAULT_METRICS, title: str | None = None,
                  save_path: Path | None = None, show: bool = True) -> Path | None:
    df = _load_results(csv_file, metrics)
    directions = list(dict.fromkeys(df["direction"]))
    models = [m for m in MODEL_ORDER if m in set(df["model"])]
    models += sorted(set(df["model"]) - set(models))

    fig, axes = plt.subplots(1, len(directions), figsize=(6.5 * len(directions), 5), sharey=True, squeeze=False)
    width = 0.8 / len(models)
    positions = np.arange(len(metrics))
    for ax, direction in zip(axes[0], directions):
        stats = df[df["direction"] == direction].groupby("model")[list(metrics)].agg(["mean", "std"])
        for k, model in enumerate(models):
            if model not in stats.index:
                continue
            means = [stats.loc[model, (m, "mean")] for m in metrics]
            errors = np.nan_to_num([stats.loc[model, (m, "std")] for m in metrics])
            ax.bar(positions + (k - (len(models) - 1) / 2) * width, means, width, yerr=errors,
                   capsize=3, label=model)
        ax.set_xticks(positions)
        ax.set_xticklabels([m.upper() for m in metrics])
        ax.set_title(direction.replace("_", " "))
        ax.grid(True, axis="y", alpha=0.3)
    axes[0][0].set_ylabel(f"mean over {df['seed'].nunique()} seed(s)")
    axes[0][-1].legend(fontsize=8)
    fig.suptitle(title or f"Ablation - {csv_file.stem}")
    fig.tight_layout()

    if save_path is None:
        save_path = csv_file.with_suffix(".png")
    fig.savefig(save_path, dpi=160)
    print(f"Saved plot: {save_path}")
    if show:
        plt.show()
    else:
        plt.close(fig)
    return save_path


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(description="Plot an ablation CSV as grouped bars")
    parser.add_argument("csv_file", type=str, help="ablation_<timestamp>.csv from 4_Ablation_Study.py")
    parser.add_argument("--metrics", nargs="+", default=list(DEFAULT_METRICS),
                        help="columns to plot (default: hr@10 ndcg@10 mrr)")
    parser.add_argument("--title", type=str, default=None, help="Optional plot title")
    parser.add_argument("--no-show", action="store_true", help="Do not show an interactive window")
    parser.add_argument("--save", type=str, default=None, help="Write the figure here instead of next to the CSV")
    args = parser.parse_args(argv)

    plot_ablation(Path(args.csv_file), metrics=tuple(args.metrics), title=args.title,
                  save_path=Path(args.save) if args.save else None, show=not args.no_show)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
