import argparse
import json
import logging
import sys
from pathlib import Path

import pandas as pd

from .Config import ConfigError, TrainConfig, VARIANTS
from .Evaluator import Evaluator
from .Interactions import load_interactions
from .Model import DPMCDRModel, full_model_grad_check
from .Splits import DomainPair, make_splits
from .Synthetic import SyntheticConfig, generate_corpus
from .Trainer import Trainer


GRADCHECK_TOLERANCE = 1e-4

# --flag -> (config key, type); every flag overrides the loaded config when given.
FLAG_KEYS = {
    "layers": ("model.layers", int),
    "dim": ("model.dim", int),
    "group-size": ("model.group_size", int),
    "beta": ("model.beta", float),
    "heads": ("model.heads", int),
    "dropout": ("model.dropout", float),
    "warmup": ("model.warmup", int),
    "lr": ("model.lr", float),
    "weight-decay": ("model.weight_decay", float),
    "batch-size": ("model.batch_size", int),
    "negatives": ("model.negatives", int),
    "source": ("data.source", str),
    "target": ("data.target", str),
    "overlap-fraction": ("data.overlap_fraction", float),
    "eval-fraction": ("data.eval_fraction", float),
    "min-user-interactions": ("data.min_user_interactions", int),
    "min-item-interactions": ("data.min_item_interactions", int),
    "normalization": ("data.normalization", str),
    "max-epochs": ("train.max_epochs", int),
    "patience": ("train.patience", int),
    "eval-every": ("train.eval_every", int),
    "output-dir": ("train.output_dir", str),
    "workers": ("eval.workers", int),
    "variant": ("ablation.variant", str),
    "sigma1-activation": ("ablation.sigma1_activation", str),
    "sigma1-scale": ("ablation.sigma1_scale", float),
    "mean-activation": ("ablation.mean_activation", str),
}
SWITCH_KEYS = {
    "exact-reconstruction": ("train.exact_reconstruction", True),
    "no-cross-block-negatives": ("train.cross_block_negatives", False),
    "reaggregate-per-layer": ("ablation.reaggregate_per_layer", True),
    "learned-prior": ("ablation.learned_prior", True),
    "unidirectional": ("eval.bidirectional", False),
}


def build_loggers(verbose: bool = False) -> dict[str, logging.Logger]:
    """One named logger per component, sharing a console handler."""
    console_handler = logging.StreamHandler()
    console_handler.setLevel(logging.DEBUG)
    formatter = logging.Formatter('%(asctime)s - %(name)s - %(levelname)s - %(message)s')
    console_handler.setFormatter(formatter)

    loggers = {}
    for name in ("Data", "Model", "Trainer", "Evaluator"):
        logger = logging.getLogger(name)
        logger.setLevel(logging.DEBUG if verbose else logging.INFO)
        logger.handlers.clear()
        logger.addHandler(console_handler)
        logger.propagate = False
        loggers[name] = logger
    return loggers


def _add_config_flags(parser: argparse.ArgumentParser):
    parser.add_argument("--config", type=str, default=None, help="JSON config file")
    for flag, (key, kind) in FLAG_KEYS.items():
        choices = VARIANTS if flag == "variant" else None
        parser.add_argument(f"--{flag}", type=kind, default=None, choices=choices, help=f"overrides {key}")
    for flag, (key, _) in SWITCH_KEYS.items():
        parser.add_argument(f"--{flag}", action="store_true", help=f"sets {key}")
    parser.add_argument("--synthetic", action="store_true",
                        help="use the synthetic generator with default settings as data")


def resolve_config(args: argparse.Namespace) -> TrainConfig:
    config = TrainConfig.from_json(args.config) if args.config else TrainConfig()
    for flag, (key, _) in FLAG_KEYS.items():
        value = getattr(args, flag.replace("-", "_"))
        if value is not None:
            config.override(key, value)
    for flag, (key, value) in SWITCH_KEYS.items():
        if getattr(args, flag.replace("-", "_")):
            config.override(key, value)
    if getattr(args, "synthetic", False):
        config.override("data.synthetic", {})
    if getattr(args, "seed", None) is not None:
        config.override("model.seed", args.seed)
    return config.validate()


def load_domain_pair(config: TrainConfig, logger: logging.Logger) -> DomainPair:
    """Read or generate both domains and apply the cold-start split of the config."""
    data = config.data
    seed = config.model.seed if config.model.seed is not None else 0
    if data.synthetic is not None:
        synthetic = dict(data.synthetic)
        synthetic.setdefault("min_user_interactions", data.min_user_interactions)
        synthetic.setdefault("min_item_interactions", data.min_item_interactions)
        try:
            corpus = generate_corpus(SyntheticConfig(**synthetic), seed)
        except TypeError as error:
            raise ConfigError("data.synthetic", str(error)) from None
        return corpus.to_domain_pair(data.eval_fraction, data.overlap_fraction, data.normalization, logger,
                                     bidirectional=config.eval.bidirectional)
    source = load_interactions(data.source, logger, data.delimiter)
    target = load_interactions(data.target, logger, data.delimiter)
    return make_splits(
        source, target, overlap_fraction=data.overlap_fraction, eval_fraction=data.eval_fraction, seed=seed,
        min_user_interactions=data.min_user_interactions, min_item_interactions=data.min_item_interactions,
        normalization=data.normalization, bidirectional=config.eval.bidirectional, logger=logger,
    )


def _write_reports(evaluator: Evaluator, model: DPMCDRModel, pair: DomainPair, config: TrainConfig,
                   output_dir: Path, logger: logging.Logger):
    split = config.eval.split
    report = evaluator.evaluate(model, pair.eval_set(split, "source_to_target"), config.model.seed)
    report.write_json(output_dir / "metrics.json")
    logger.info(f"[Evaluator] {split}: {report.summary()}")
    if config.eval.bidirectional and ("target_to_source", split) in pair.eval_sets:
        reverse = evaluator.evaluate(model, pair.eval_set(split, "target_to_source"), config.model.seed)
        reverse.write_json(output_dir / "metrics_reverse.json")
        logger.info(f"[Evaluator] {split}: {reverse.summary()}")


def cmd_train(args, loggers) -> int:
    config = resolve_config(args)
    output_dir = Path(config.train.output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    pair = load_domain_pair(config, loggers["Data"])
    pair.write_manifest(output_dir / "splits.json")
    (output_dir / "config.json").write_text(json.dumps(config.to_dict(), indent=2), encoding="utf-8")

    evaluator = Evaluator(loggers["Evaluator"], config.eval.ks, config.eval.workers)
    result = Trainer(loggers["Trainer"], config, evaluator).train(pair)
    result.model.save(output_dir / "model.bin")
    result.losses.to_csv(output_dir / "losses.csv", index=False)
    _write_reports(evaluator, result.model, pair, config, output_dir, loggers["Evaluator"])
    return 0


def cmd_evaluate(args, loggers) -> int:
    config = resolve_config(args)
    output_dir = Path(args.output_dir) if args.output_dir else Path(args.model).parent
    pair = load_domain_pair(config, loggers["Data"])
    model = DPMCDRModel(loggers["Model"], config.model, pair.source, pair.target, config.ablation, config.train)
    model.load(args.model)
    evaluator = Evaluator(loggers["Evaluator"], config.eval.ks, config.eval.workers)
    _write_reports(evaluator, model, pair, config, output_dir, loggers["Evaluator"])
    return 0


def cmd_synth(args, loggers) -> int:
    config = SyntheticConfig(
        users_per_domain=args.users, items_per_domain=args.items, clusters=args.clusters,
        affinity=args.affinity, noise=args.noise, overlap_fraction=args.overlap, cluster_skew=args.skew,
    )
    corpus = generate_corpus(config, args.seed)
    paths = corpus.write(args.output_dir)
    loggers["Data"].info(
        f"[Data] wrote {len(corpus.source_records)} source and {len(corpus.target_records)} target records, "
        f"{len(corpus.overlap_ids)} shared users, to {paths['source'].parent}"
    )
    return 0


def interaction_stats(paths: list[str], delimiter: str = ",", logger: logging.Logger | None = None) -> pd.DataFrame:
    rows = []
    for path in paths:
        records = load_interactions(path, logger, delimiter)
        frame = pd.DataFrame([(r.user_id, r.item_id) for r in records], columns=["user_id", "item_id"])
        users = frame["user_id"].nunique()
        rows.append({
            "dataset": Path(path).stem,
            "users": users,
            "items": frame["item_id"].nunique(),
            "interactions": len(frame),
            "avg_length": len(frame) / users,
        })
    return pd.DataFrame(rows, columns=["dataset", "users", "items", "interactions", "avg_length"])


def cmd_stats(args, loggers) -> int:
    table = interaction_stats(args.paths, args.delimiter, loggers["Data"])
    print(table.to_string(index=False))
    return 0


def cmd_gradcheck(args, loggers) -> int:
    users, items = (6, 5) if args.toy else (10, 8)
    error = full_model_grad_check(loggers["Model"], args.seed, users, items, args.variant)
    print(f"max relative error: {error:.3e}")
    return 0 if error < GRADCHECK_TOLERANCE else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="run_cdr", description="Non-overlapping cross-domain recommendation")
    parser.add_argument("--verbose", action="store_true", help="debug logging")
    commands = parser.add_subparsers(dest="command", required=True)

    train = commands.add_parser("train", help="train a model and evaluate it on the test split")
    _add_config_flags(train)
    train.add_argument("--seed", type=int, required=True)

    evaluate = commands.add_parser("evaluate", help="evaluate a saved model")
    _add_config_flags(evaluate)
    evaluate.add_argument("--seed", type=int, required=True, help="seed the model was trained with")
    evaluate.add_argument("--model", type=str, required=True, help="model.bin written by train")

    synth = commands.add_parser("synth", help="write a synthetic two-domain corpus")
    synth.add_argument("--output-dir", type=str, required=True)
    synth.add_argument("--seed", type=int, default=0)
    synth.add_argument("--users", type=int, default=500, help="users per domain")
    synth.add_argument("--items", type=int, default=200, help="items per domain")
    synth.add_argument("--clusters", type=int, default=8)
    synth.add_argument("--affinity", type=float, default=0.6)
    synth.add_argument("--noise", type=float, default=0.02)
    synth.add_argument("--overlap", type=float, default=0.2, help="share of users existing in both domains")
    synth.add_argument("--skew", type=float, default=0.5, help="decay of user cluster weights")

    stats = commands.add_parser("stats", help="print user/item/interaction counts of interaction files")
    stats.add_argument("paths", nargs="+")
    stats.add_argument("--delimiter", type=str, default=",")

    gradcheck = commands.add_parser("gradcheck", help="finite-difference check of the full model")
    gradcheck.add_argument("--seed", type=int, default=1)
    gradcheck.add_argument("--toy", action="store_true", help="6 users / 5 items per domain")
    gradcheck.add_argument("--variant", type=str, default="full", choices=VARIANTS)
    return parser


COMMANDS = {
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "synth": cmd_synth,
    "stats": cmd_stats,
    "gradcheck": cmd_gradcheck,
}


def run_cli(argv: list[str] | None = None) -> int:
    """Parse ``argv``, run one subcommand and return its exit status (2 for usage errors)."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exit_request:
        return int(exit_request.code or 0)
    loggers = build_loggers(args.verbose)
    try:
        return COMMANDS[args.command](args, loggers)
    except (ValueError, OSError, RuntimeError, KeyError) as error:
        print(f"error: {error}", file=sys.stderr)
        return 1
