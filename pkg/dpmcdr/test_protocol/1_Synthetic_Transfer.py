"""
Synthetic Cold-Start Transfer (Protocol 1)
==========================================

Trains the full model and ablation variant C on the clustered two-domain generator
(500 users / 200 items per domain, 8 clusters, affinity 0.6, noise 0.02, strict
non-overlapping training) for several seeds, and compares their test HR@10 with the
popularity ranking of the target domain.

Expected direction:
- full model HR@10 at least 20% (relative) above popularity, averaged over seeds
- full model above variant C on every seed

The script prints whether each condition is met and never fails on a miss. Each trained
row also carries the share of constant score rows and the mean query-vector norm, so a
collapsed user representation is visible next to its metrics.

Usage:
    python 1_Synthetic_Transfer.py --seeds 1 2 3 4 5 --epochs 20
    python 1_Synthetic_Transfer.py --seeds 1 2 3 --beta 0.1 --no-cross-block-negatives

Outputs (in --output):
    - transfer_<timestamp>.csv     one row per (seed, model) with MRR / HR@K / NDCG@K and diagnostics
    - transfer_summary_<timestamp>.csv   mean and std over seeds
    - transfer_verdict_<timestamp>.json  lift, per-seed margin over C and the settings used
"""

from datetime import datetime
from pathlib import Path
import argparse
import json
import sys
import time

import pandas as pd

sys.path.insert(0, str(Path(__file__).parent.parent))
from classes.CLI import build_loggers, load_domain_pair
from classes.Config import TrainConfig
from classes.Evaluator import Evaluator, score_diagnostics, transfer_verdict
from classes.Trainer import Trainer


OUTPUT_DIR = "data/test_protocol/1_synthetic_transfer"
MODELS = ("full", "C")
MIN_LIFT = 0.2


def build_config(seed: int, epochs: int, group_size: int, shared: float, beta: float = 1.0,
                 cross_block_negatives: bool = True, mean_activation: str = "leaky_relu") -> TrainConfig:
    config = TrainConfig.from_dict({
        "data": {"synthetic": {"overlap_fraction": shared}},
        "model": {"seed": seed, "group_size": group_size, "beta": beta},
        "train": {"max_epochs": epochs, "cross_block_negatives": cross_block_negatives},
        "ablation": {"mean_activation": mean_activation},
    })
    return config.validate()


def report_row(seed: int, model: str, report, seconds: float, diagnostics: dict | None = None) -> dict:
    row = {"seed": seed, "model": model, "users": report.users, "mrr": report.mrr, "seconds": seconds}
    row.update({f"hr@{k}": v for k, v in report.hr.items()})
    row.update({f"ndcg@{k}": v for k, v in report.ndcg.items()})
    diagnostics = diagnostics or {}
    row["constant_rows"] = diagnostics.get("constant_rows", float("nan"))
    row["user_norm"] = diagnostics.get("user_norm", float("nan"))
    return row


def run_protocol(seeds: list[int], epochs: int, group_size: int, shared: float, output_dir: str,
                 beta: float = 1.0, cross_block_negatives: bool = True, mean_activation: str = "leaky_relu",
                 verbose: bool = False) -> tuple[pd.DataFrame, dict]:
    loggers = build_loggers(verbose)
    rows = []
    for seed in seeds:
        config = build_config(seed, epochs, group_size, shared, beta, cross_block_negatives, mean_activation)
        pair = load_domain_pair(config, loggers["Data"])
        test = pair.eval_set("test")
        evaluator = Evaluator(loggers["Evaluator"], config.eval.ks, config.eval.workers)
        rows.append(report_row(seed, "popularity", evaluator.popularity_baseline(test, seed), 0.0))

        for variant in MODELS:
            config.ablation.variant = variant
            start = time.perf_counter()
            result = Trainer(loggers["Trainer"], config, evaluator).train(pair)
            report = evaluator.evaluate(result.model, test, seed)
            diagnostics = score_diagnostics(result.model, test)
            rows.append(report_row(seed, variant, report, time.perf_counter() - start, diagnostics))
            print(f"seed {seed} {variant:>10}: {report.summary()} "
                  f"constant rows {diagnostics['constant_rows']:.2f}, user norm {diagnostics['user_norm']:.3g}")

    df = pd.DataFrame(rows)
    summary = df.groupby("model").agg(["mean", "std"]).drop(columns=["seed"], level=0)
    verdict = transfer_verdict(df, "hr@10", "full", "popularity", "C", MIN_LIFT)
    verdict["settings"] = {"seeds": seeds, "epochs": epochs, "group_size": group_size, "shared": shared,
                           "beta": beta, "cross_block_negatives": cross_block_negatives,
                           "mean_activation": mean_activation}

    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    stamp = datetime.now().strftime("%Y%m%d_%H%M%S")
    df.to_csv(out / f"transfer_{stamp}.csv", index=False)
    summary.to_csv(out / f"transfer_summary_{stamp}.csv")
    (out / f"transfer_verdict_{stamp}.json").write_text(json.dumps(verdict, indent=2), encoding="utf-8")

    print(f"\n{'=' * 70}")
    for model in ("popularity",) + MODELS:
        hr = df.loc[df["model"] == model, "hr@10"]
        print(f"{model:>10}: HR@10 = {hr.mean():.4f} +/- {hr.std(ddof=1) if len(hr) > 1 else 0.0:.4f}")
    print(f"relative HR@10 lift over popularity: {verdict['lift'] * 100:.1f}% "
          f"(expected >= {MIN_LIFT * 100:.0f}%): {'met' if verdict['lift_met'] else 'NOT met'}")
    print(f"full model above variant C on every seed (smallest margin {verdict['rival_margin']:+.4f}): "
          f"{'met' if verdict['beats_rival'] else 'NOT met'}")
    collapsed = df.loc[df["model"].isin(MODELS), "constant_rows"].max()
    if collapsed > 0:
        print(f"warning: up to {collapsed:.0%} of score rows are constant; the user representation collapsed")
    print(f"{'=' * 70}\n")
    return df, verdict


if __name__ == "__main__":
    parser = argparse.ArgumentParser(description="Synthetic cold-start transfer: full model vs variant C vs popularity")
    parser.add_argument("--seeds", type=int, nargs="+", default=[1, 2, 3, 4, 5])
    parser.add_argument("--epochs", type=int, default=20, help="max epochs per run (default: 20)")
    parser.add_argument("--group-size", type=int, default=256, help="users per domain group N (default: 256)")
    parser.add_argument("--shared", type=float, default=0.2,
                        help="share of generated users existing in both domains (default: 0.2)")
    parser.add_argument("--beta", type=float, default=1.0, help="compression multiplier of every KL term (default: 1.0)")
    parser.add_argument("--no-cross-block-negatives", action="store_true",
                        help="draw level-2 negatives from the group's own domain only")
    parser.add_argument("--mean-activation", choices=["leaky_relu", "relu"], default="leaky_relu",
                        help="mean heads of level 2 and of the matcher (default: leaky_relu)")
    parser.add_argument("--output", type=str, default=OUTPUT_DIR)
    parser.add_argument("--verbose", action="store_true")
    args = parser.parse_args()

    run_protocol(args.seeds, args.epochs, args.group_size, args.shared, args.output, args.beta,
                 not args.no_cross_block_negatives, args.mean_activation, args.verbose)
