"""
Ablation Study (Protocol 4)
===========================

Trains every ablation variant (A: encoder only, B: + level-1 identifier, C: matching
loss only, D: all but the domain objective, full) on the same synthetic domain pair for
each seed, and evaluates them next to the popularity ranking. Both transfer directions
are reported.

Usage:
    python 4_Ablation_Study.py --seeds 1 2 3 --epochs 20
    python 4_Plot_Ablation.py data/test_protocol/4_ablation/ablation_<timestamp>.csv

Outputs (in --output):
    - ablation_<timestamp>.csv           one row per (seed, direction, variant)
    - ablation_summary_<timestamp>.csv   mean and std over seeds per (direction, variant)
"""

from datetime import datetime
from pathlib import Path
import argparse
import sys
import time

import pandas as pd

sys.path.insert(0, str(Path(__file__).parent.parent))
from classes.CLI import build_loggers, load_domain_pair
from classes.Config import VARIANTS, TrainConfig
from classes.Evaluator import Evaluator, score_diagnostics
from classes.Trainer import Trainer


OUTPUT_DIR = "data/test_protocol/4_ablation"
DIRECTIONS = ("source_to_target", "target_to_source")


def build_config(seed: int, epochs: int, group_size: int, shared: float, beta: float) -> TrainConfig:
    config = TrainConfig.from_dict({
        "data": {"synthetic": {"overlap_fraction": shared}},
        "model": {"seed": seed, "group_size": group_size, "beta": beta},
        "train": {"max_epochs": epochs},
    })
    return config.validate()


def result_row(seed: int, direction: str, variant: str, report, seconds: float, diagnostics: dict | None) -> dict:
    row = {"seed": seed, "direction": direction, "model": variant, "users": report.users,
           "mrr": report.mrr, "seconds": seconds}
    row.update({f"hr@{k}": v for k, v in report.hr.items()})
    row.update({f"ndcg@{k}": v for k, v in report.ndcg.items()})
    diagnostics = diagnostics or {}
    row["constant_rows"] = diagnostics.get("constant_rows", float("nan"))
    row["user_norm"] = diagnostics.get("user_norm", float("nan"))
    return row


def run_ablation(seeds: list[int], variants: list[str], epochs: int, group_size: int, shared: float,
                 beta: float, output_dir: str, verbose: bool = False) -> pd.DataFrame:
    loggers = build_loggers(verbose)
    rows = []
    for seed in seeds:
        config = build_config(seed, epochs, group_size, shared, beta)
        pair = load_domain_pair(config, loggers["Data"])
        evaluator = Evaluator(loggers["Evaluator"], config.eval.ks, config.eval.workers)
        for direction in DIRECTIONS:
            test = pair.eval_set("test", direction)
            rows.append(result_row(seed, direction, "popularity", evaluator.popularity_baseline(test, seed), 0.0, None))

        for variant in variants:
            config.ablation.variant = variant
            start = time.perf_counter()
            result = Trainer(loggers["Trainer"], config, evaluator).train(pair)
            seconds = time.perf_counter() - start
            for direction in DIRECTIONS:
                test = pair.eval_set("test", direction)
                report = evaluator.evaluate(result.model, test, seed)
                rows.append(result_row(seed, direction, variant, report, seconds,
                                       score_diagnostics(result.model, test)))
                print(f"seed {seed} {variant:>5} {direction}: {report.summary()}")

    df = pd.DataFrame(rows)
    metrics = [c for c in df.columns if c not in ("seed", "direction", "model")]
    summary = df.groupby(["direction", "model"], sort=False)[metrics].agg(["mean", "std"])

    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    stamp = datetime.now().strftime("%Y%m%d_%H%M%S")
    csv_path = out / f"ablation_{stamp}.csv"
    df.to_csv(csv_path, index=False)
    summary.to_csv(out / f"ablation_summary_{stamp}.csv")

    print(f"\n{'=' * 70}")
    for direction in DIRECTIONS:
        print(direction)
        part = df[df["direction"] == direction]
        for model in ["popularity"] + list(variants):
            values = part.loc[part["model"] == model]
            print(f"  {model:>10}: HR@10 = {values['hr@10'].mean():.4f}  NDCG@10 = {values['ndcg@10'].mean():.4f}  "
                  f"MRR = {values['mrr'].mean():.4f}")
    print(f"Results saved to: {csv_path}")
    print(f"{'=' * 70}\n")
    return df


if __name__ == "__main__":
    parser = argparse.ArgumentParser(description="Ablation study: every variant on the synthetic domain pair")
    parser.add_argument("--seeds", type=int, nargs="+", default=[1, 2, 3])
    parser.add_argument("--variants", nargs="+", choices=list(VARIANTS), default=["A", "B", "C", "D", "full"])
    parser.add_argument("--epochs", type=int, default=20, help="max epochs per run (default: 20)")
    parser.add_argument("--group-size", type=int, default=256, help="users per domain group N (default: 256)")
    parser.add_argument("--shared", type=float, default=0.2,
                        help="share of generated users existing in both domains (default: 0.2)")
    parser.add_argument("--beta", type=float, default=1.0, help="compression multiplier of every KL term (default: 1.0)")
    parser.add_argument("--output", type=str, default=OUTPUT_DIR)
    parser.add_argument("--verbose", action="store_true")
    args = parser.parse_args()

    run_ablation(args.seeds, args.variants, args.epochs, args.group_size, args.shared, args.beta,
                 args.output, args.verbose)
