import logging
import math
import time
from dataclasses import dataclass

import numpy as np
import pandas as pd

from .Config import TrainConfig
from .Evaluator import Evaluator, RankingReport
from .Model import DOMAINS, DPMCDRModel
from .Objectives import CSV_COLUMNS, COMPONENTS, NonFiniteLossError
from .Optimizer import Adam
from .RandomStreams import RandomStreams
from .Splits import DomainPair
from .Tensor import NonFiniteError, backward


LOSS_COLUMNS = ["epoch", "L_m", "L_d", "L_u_source", "L_u_target", "total", "val_mrr"]


class TrainingDivergedError(RuntimeError):
    """Training produced a non-finite loss."""

    def __init__(self, component: str, epoch: int):
        self.component = component
        self.epoch = epoch
        super().__init__(f"training diverged at epoch {epoch}: '{component}' is not finite")


@dataclass
class TrainResult:
    model: DPMCDRModel
    losses: pd.DataFrame
    best_report: RankingReport | None
    best_epoch: int


def epoch_batches(pair: DomainPair, batch_size: int, rng: np.random.Generator):
    """
    Shuffled edge minibatches of both domains for one epoch. The epoch has
    ceil(max(|E_S|, |E_T|) / batch_size) steps; the smaller domain wraps around.
    """
    edges = {domain: getattr(pair, domain).edges() for domain in DOMAINS}
    orders = {domain: rng.permutation(edges[domain][0].size) for domain in DOMAINS}
    longest = max(order.size for order in orders.values())
    steps = math.ceil(longest / batch_size)
    for step in range(steps):
        batch = {}
        for domain in DOMAINS:
            order = orders[domain]
            positions = np.arange(step * batch_size, min((step + 1) * batch_size, longest)) % order.size
            chosen = order[positions]
            batch[domain] = (edges[domain][0][chosen], edges[domain][1][chosen])
        yield batch


class Trainer:
    """
    Minibatch training with validation-based model selection.

    :param logger: logging.Logger instance for logging messages.
    :param config: Validated run configuration; ``config.model.seed`` must be set.
    :param evaluator: Evaluator used for the validation split.
    """

    def __init__(self, logger: logging.Logger, config: TrainConfig, evaluator: Evaluator):
        if config.model.seed is None:
            raise ValueError("training needs model.seed")
        self.logger = logger
        self.config = config
        self.evaluator = evaluator

    def build_model(self, pair: DomainPair) -> DPMCDRModel:
        model = DPMCDRModel(self.logger, self.config.model, pair.source, pair.target,
                            self.config.ablation, self.config.train)
        model.check_group_size()
        return model

    def _step(self, model: DPMCDRModel, optimizer: Adam, batch, epoch: int, streams: RandomStreams):
        try:
            breakdown = model.training_losses(batch, epoch, streams, training=True)
        except NonFiniteLossError as error:
            raise TrainingDivergedError(error.component, epoch) from error
        except NonFiniteError as error:
            raise TrainingDivergedError(error.op, epoch) from error
        optimizer.zero_grad()
        backward(breakdown.objective, optimizer.params)
        optimizer.step()
        return breakdown

    def train(self, pair: DomainPair) -> TrainResult:
        hyper = self.config.model
        settings = self.config.train
        streams = RandomStreams(hyper.seed)
        model = self.build_model(pair)
        optimizer = Adam(self.logger, model.parameters(), hyper.lr, hyper.weight_decay)
        validation = pair.eval_set("validation")
        if len(validation) == 0:
            raise ValueError("the validation split has no queries; raise data.eval_fraction")

        rows = []
        best_mrr, best_epoch, best_report = -1.0, -1, None
        best_values = model.snapshot()
        evaluations_without_gain = 0

        for epoch in range(settings.max_epochs):
            start = time.perf_counter()
            sums = dict.fromkeys(COMPONENTS, 0.0)
            total, steps = 0.0, 0
            for batch in epoch_batches(pair, hyper.batch_size, streams.get("sampling")):
                breakdown = self._step(model, optimizer, batch, epoch, streams)
                for name in COMPONENTS:
                    sums[name] += getattr(breakdown, name)
                total += breakdown.total
                steps += 1
            row = {"epoch": epoch}
            row.update({CSV_COLUMNS[name]: sums[name] / steps for name in COMPONENTS})
            row["total"] = total / steps
            row["val_mrr"] = float("nan")

            if (epoch + 1) % settings.eval_every == 0:
                report = self.evaluator.evaluate(model, validation, hyper.seed)
                row["val_mrr"] = report.mrr
                if report.mrr > best_mrr:
                    best_mrr, best_epoch, best_report = report.mrr, epoch, report
                    best_values = model.snapshot()
                    evaluations_without_gain = 0
                else:
                    evaluations_without_gain += 1
            rows.append(row)
            self.logger.info(
                f"[Trainer] epoch {epoch} total={row['total']:.4f} L_m={row['L_m']:.4f} L_d={row['L_d']:.4f} "
                f"L_u=({row['L_u_source']:.4f}, {row['L_u_target']:.4f}) val_mrr={row['val_mrr']:.4f} "
                f"[{time.perf_counter() - start:.1f}s]"
            )
            if evaluations_without_gain >= settings.patience:
                self.logger.info(f"[Trainer] early stop at epoch {epoch}, best epoch {best_epoch} (MRR {best_mrr:.4f})")
                break

        if best_epoch >= 0:
            model.restore(best_values)
        losses = pd.DataFrame(rows, columns=LOSS_COLUMNS)
        return TrainResult(model, losses, best_report, best_epoch)
