import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

from .Interactions import BipartiteGraph, InteractionRecord, filter_edges
from .RandomStreams import RandomStreams


SPLITS = ("train", "validation", "test")
DIRECTIONS = ("source_to_target", "target_to_source")


@dataclass(frozen=True)
class EvalInstance:
    """
    One cold-start ranking query.

    :param user: Row of the user in the inference graph of the domain it is represented from.
    :param history: Item indices of the visible history in that domain.
    :param held_out: The single ground-truth item index in the ranked domain.
    :param excluded: Ranked-domain items removed from the candidate list.
    """
    user: int
    history: tuple[int, ...]
    held_out: int
    excluded: tuple[int, ...] = ()
    user_id: str = ""

    def __post_init__(self):
        if self.held_out in self.excluded:
            raise ValueError(f"held-out item {self.held_out} is also in the exclusion set")


@dataclass(frozen=True)
class EvalSet:
    """
    Evaluation queries of one split in one transfer direction.

    ``graph`` is the training graph of the represented domain with the evaluation users
    appended after its ``n_trained_users`` training rows; ``candidates`` is the training
    graph of the ranked domain.
    """
    direction: str
    split: str
    graph: BipartiteGraph
    candidates: BipartiteGraph
    n_trained_users: int
    instances: tuple[EvalInstance, ...]

    def __len__(self) -> int:
        return len(self.instances)


@dataclass
class DomainPair:
    """
    Training graphs of both domains plus the cold-start evaluation protocol.

    :param overlap: (source index, target index) of users present in BOTH training graphs;
                    empty when training is strictly non-overlapping.
    :param overlap_ids: Every identity shared by the raw domains, evaluation users included.
    :param assignments: Split of every shared identity ('train', 'validation' or 'test').
    :param placement: Training side of each 'train' identity ('both', 'source' or 'target').
    :param labels: Ground-truth cluster labels by id, when the pair is synthetic.
    """
    source: BipartiteGraph
    target: BipartiteGraph
    overlap: list[tuple[int, int]]
    overlap_ids: tuple[str, ...]
    assignments: dict[str, str]
    placement: dict[str, str] = field(default_factory=dict)
    eval_sets: dict[tuple[str, str], EvalSet] = field(default_factory=dict)
    seed: int = 0
    labels: dict[str, dict[str, int]] = field(default_factory=dict)

    @property
    def is_strict(self) -> bool:
        return not self.overlap

    def users_in(self, split: str) -> list[str]:
        if split not in SPLITS:
            raise ValueError(f"split must be one of {SPLITS}, got '{split}'")
        return sorted(u for u, s in self.assignments.items() if s == split)

    def eval_set(self, split: str, direction: str = "source_to_target") -> EvalSet:
        key = (direction, split)
        if key not in self.eval_sets:
            raise KeyError(f"no evaluation set for split '{split}' in direction '{direction}'")
        return self.eval_sets[key]

    def held_out_edges(self) -> list[dict]:
        edges = []
        for (direction, split), eval_set in sorted(self.eval_sets.items()):
            domain = "target" if direction == "source_to_target" else "source"
            for instance in eval_set.instances:
                edges.append({
                    "user": instance.user_id,
                    "item": eval_set.candidates.item_ids[instance.held_out],
                    "domain": domain,
                    "split": split,
                })
        return edges

    def manifest(self) -> dict:
        return {
            "seed": self.seed,
            "overlap_users": list(self.overlap_ids),
            "val_users": self.users_in("validation"),
            "test_users": self.users_in("test"),
            "held_out_edges": self.held_out_edges(),
        }

    def write_manifest(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.manifest(), indent=2), encoding="utf-8")
        return path


def _ordered_history(records: Iterable[InteractionRecord], kept: set[tuple[str, str]]) -> dict[str, list[str]]:
    """Items per user in interaction order: by timestamp when every record has one, else input order."""
    per_user: dict[str, list[tuple]] = {}
    for position, record in enumerate(records):
        if (record.user_id, record.item_id) in kept:
            per_user.setdefault(record.user_id, []).append((record.timestamp, position, record.item_id))
    ordered = {}
    for user, events in per_user.items():
        if all(ts is not None for ts, _, _ in events):
            events.sort(key=lambda e: (e[0], e[1]))
        else:
            events.sort(key=lambda e: e[1])
        seen: dict[str, None] = {}
        for _, _, item in events:
            seen.pop(item, None)
            seen[item] = None
        ordered[user] = list(seen)
    return ordered


def _build_eval_set(direction: str, split: str, users: list[str], represented: BipartiteGraph,
                    ranked: BipartiteGraph, represented_history: dict[str, list[str]],
                    ranked_history: dict[str, list[str]], logger: logging.Logger) -> EvalSet:
    histories = {}
    held_out = {}
    for user in users:
        known = [i for i in ranked_history.get(user, []) if i in ranked.item_index]
        visible = [i for i in represented_history.get(user, []) if i in represented.item_index]
        if not known or not visible:
            logger.warning(f"[Data] {direction}/{split}: user '{user}' has no usable history or held-out item, dropped")
            continue
        histories[user] = visible
        held_out[user] = known[-1]

    graph = represented.with_extra_users(histories) if histories else represented
    instances = []
    for user in sorted(histories):
        row = graph.user_index[user]
        item = ranked.item_index[held_out[user]]
        excluded = ()
        if user in ranked.user_index:
            excluded = tuple(int(i) for i in ranked.positives(ranked.user_index[user]) if i != item)
        instances.append(EvalInstance(
            user=row,
            history=tuple(int(i) for i in graph.positives(row)),
            held_out=item,
            excluded=excluded,
            user_id=user,
        ))
    return EvalSet(direction, split, graph, ranked, represented.n_users, tuple(instances))


def make_splits(source_records: Iterable[InteractionRecord], target_records: Iterable[InteractionRecord], *,
                overlap_fraction: float = 0.0, eval_fraction: float = 0.2, seed: int = 0,
                min_user_interactions: int = 5, min_item_interactions: int = 10,
                normalization: str = "symmetric", bidirectional: bool = True,
                logger: logging.Logger | None = None) -> DomainPair:
    """
    Cold-start split of two domains that share user identities.

    A fraction ``eval_fraction`` of the shared users becomes validation/test users (split
    evenly): all of their edges leave both training graphs, and each keeps its source history
    visible while its last target interaction becomes the held-out item. Of the remaining
    shared users, ``overlap_fraction`` stay in both domains; every other one is kept in a
    single randomly chosen domain, so ``overlap_fraction = 0`` gives disjoint training sets.

    :param source_records: Raw source-domain interactions.
    :param target_records: Raw target-domain interactions.
    :param overlap_fraction: Share of non-evaluation shared users kept in both domains, in [0, 1].
    :param eval_fraction: Share of shared users held out for evaluation, in (0, 1) (default: 0.2).
    :param seed: Root seed; the split only draws from the 'splits' stream.
    :param bidirectional: Also build target-to-source evaluation sets (default: True).
    """
    if not 0.0 <= overlap_fraction <= 1.0:
        raise ValueError(f"overlap_fraction must be in [0, 1], got {overlap_fraction}")
    if not 0.0 < eval_fraction < 1.0:
        raise ValueError(f"eval_fraction must be in (0, 1), got {eval_fraction}")
    logger = logger or logging.getLogger("Data")
    source_records = list(source_records)
    target_records = list(target_records)

    source_edges = filter_edges(source_records, min_user_interactions, min_item_interactions, logger)
    target_edges = filter_edges(target_records, min_user_interactions, min_item_interactions, logger)
    shared = sorted({u for u, _ in source_edges} & {u for u, _ in target_edges})
    if len(shared) < 2:
        raise ValueError(f"need at least 2 users present in both domains for evaluation, found {len(shared)}")

    rng = RandomStreams(seed).get("splits")
    order = [shared[k] for k in rng.permutation(len(shared))]
    n_eval = min(len(shared), max(2, int(round(eval_fraction * len(shared)))))
    n_val = n_eval // 2
    assignments = {u: "validation" for u in order[:n_val]}
    assignments.update({u: "test" for u in order[n_val:n_eval]})

    remaining = order[n_eval:]
    n_both = int(round(overlap_fraction * len(remaining)))
    placement = {u: "both" for u in remaining[:n_both]}
    sides = rng.random(len(remaining) - n_both)
    for user, draw in zip(remaining[n_both:], sides):
        placement[user] = "source" if draw < 0.5 else "target"
    assignments.update({u: "train" for u in remaining})

    evaluation_users = {u for u, s in assignments.items() if s != "train"}
    source_train = {
        (u, i) for u, i in source_edges
        if u not in evaluation_users and placement.get(u, "source") in ("both", "source")
    }
    target_train = {
        (u, i) for u, i in target_edges
        if u not in evaluation_users and placement.get(u, "target") in ("both", "target")
    }
    source = BipartiteGraph.from_edges(source_train, normalization)
    target = BipartiteGraph.from_edges(target_train, normalization)
    overlap = [
        (source.user_index[u], target.user_index[u])
        for u in sorted(placement) if placement[u] == "both"
        if u in source.user_index and u in target.user_index
    ]

    source_history = _ordered_history(source_records, source_edges)
    target_history = _ordered_history(target_records, target_edges)
    pair = DomainPair(source, target, overlap, tuple(shared), assignments, placement, seed=seed)
    for split in ("validation", "test"):
        users = sorted(u for u in evaluation_users if assignments[u] == split)
        pair.eval_sets[("source_to_target", split)] = _build_eval_set(
            "source_to_target", split, users, source, target, source_history, target_history, logger)
        if bidirectional:
            pair.eval_sets[("target_to_source", split)] = _build_eval_set(
                "target_to_source", split, users, target, source, target_history, source_history, logger)

    logger.info(
        f"[Data] splits: source {source.n_users}x{source.n_items} ({source.n_edges} edges), "
        f"target {target.n_users}x{target.n_items} ({target.n_edges} edges), "
        f"{len(shared)} shared users, {len(overlap)} kept in both domains, "
        f"{len(pair.eval_set('validation'))} validation / {len(pair.eval_set('test'))} test queries"
    )
    return pair
