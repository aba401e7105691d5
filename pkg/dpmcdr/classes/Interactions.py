import logging
import os
from collections import Counter
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from .SparseMatrix import SparseMatrix


HEADER = ("user_id", "item_id", "timestamp")
NORMALIZATIONS = ("symmetric", "row", "none")


class InteractionFormatError(ValueError):
    """A line of an interaction file cannot be read at all."""

    def __init__(self, line_number: int, message: str):
        self.line_number = line_number
        super().__init__(f"line {line_number}: {message}")


class EmptyGraphError(ValueError):
    """No edges are left to build a graph from."""


@dataclass(frozen=True)
class InteractionRecord:
    user_id: str
    item_id: str
    timestamp: int | None = None

    def __post_init__(self):
        if not self.user_id or not self.item_id:
            raise ValueError("user_id and item_id must be non-empty")


@dataclass
class InteractionLog:
    """Parsed records in input order, plus the line numbers that were skipped as malformed."""
    records: list[InteractionRecord]
    malformed_lines: list[int] = field(default_factory=list)

    @property
    def malformed(self) -> int:
        return len(self.malformed_lines)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self) -> Iterator[InteractionRecord]:
        return iter(self.records)

    def __getitem__(self, index):
        return self.records[index]


def _read_lines(source) -> Iterable[str]:
    if isinstance(source, (str, os.PathLike)):
        path = Path(source)
        if not path.is_file():
            raise FileNotFoundError(f"interaction file not found: {path}")
        return path.read_text(encoding="utf-8").splitlines()
    return source


def load_interactions(source, logger: logging.Logger | None = None, delimiter: str = ",") -> InteractionLog:
    """
    Read ``user_id,item_id[,timestamp]`` records.

    Blank lines and lines starting with '#' are ignored, as is a leading header row.
    Lines with an empty id, extra columns or a non-integer timestamp are skipped and counted.

    :param source: Path to a UTF-8 file, or any iterable of text lines.
    :param logger: logging.Logger instance for logging messages.
    :param delimiter: Column separator (default: ',').
    """
    logger = logger or logging.getLogger("Data")
    records: list[InteractionRecord] = []
    malformed: list[int] = []
    seen_data = False

    for number, raw in enumerate(_read_lines(source), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        fields = [part.strip() for part in line.split(delimiter)]
        if not seen_data and tuple(fields) in (HEADER, HEADER[:2]):
            seen_data = True
            continue
        seen_data = True
        if len(fields) < 2:
            raise InteractionFormatError(number, "missing required column item_id")
        if len(fields) > 3 or not fields[0] or not fields[1]:
            malformed.append(number)
            continue
        timestamp = None
        if len(fields) == 3 and fields[2]:
            try:
                timestamp = int(fields[2])
            except ValueError:
                malformed.append(number)
                continue
        records.append(InteractionRecord(fields[0], fields[1], timestamp))

    if not records:
        raise ValueError("interaction input contains no records")
    if malformed:
        logger.warning(f"[Data] skipped {len(malformed)} malformed line(s), first at line {malformed[0]}")
    logger.debug(f"[Data] loaded {len(records)} interaction records")
    return InteractionLog(records, malformed)


def normalize_adjacency(adjacency: SparseMatrix, mode: str = "symmetric") -> SparseMatrix:
    """
    Degree-normalize a binary user-item adjacency.

    ``symmetric``: D_u^{-1/2} A D_v^{-1/2}; ``row``: D_u^{-1} A; ``none``: A unchanged.
    """
    if mode not in NORMALIZATIONS:
        raise ValueError(f"normalization must be one of {NORMALIZATIONS}, got '{mode}'")
    user_degree = adjacency.row_degrees()
    item_degree = adjacency.col_degrees()
    if np.any(user_degree == 0) or np.any(item_degree == 0):
        raise ValueError("adjacency has an empty row or column; every node needs at least one edge")
    if mode == "none":
        return adjacency
    rows, cols, values = adjacency.coordinates()
    if mode == "row":
        return adjacency.with_values(values / user_degree[rows])
    user_scale = 1.0 / np.sqrt(user_degree.astype(np.float64))
    item_scale = 1.0 / np.sqrt(item_degree.astype(np.float64))
    return adjacency.with_values((user_scale[rows] * values) * item_scale[cols])


@dataclass(frozen=True)
class BipartiteGraph:
    """
    User-item interaction graph of one domain with dense indices in sorted id order
    (rows appended by with_extra_users keep their insertion order).

    :param user_ids: Opaque user ids; position is the dense user index.
    :param item_ids: Opaque item ids; position is the dense item index.
    :param adjacency: Binary |U| x |V| adjacency A.
    :param normalized: Normalized adjacency with the sparsity pattern of A.
    :param normalization: Name of the normalization used.
    """
    user_ids: tuple[str, ...]
    item_ids: tuple[str, ...]
    adjacency: SparseMatrix
    normalized: SparseMatrix
    normalization: str = "symmetric"

    def __post_init__(self):
        if self.adjacency.shape != (len(self.user_ids), len(self.item_ids)):
            raise ValueError(
                f"adjacency shape {self.adjacency.shape} does not match "
                f"{len(self.user_ids)} users x {len(self.item_ids)} items"
            )
        if self.normalized.shape != self.adjacency.shape:
            raise ValueError("normalized adjacency must have the shape of the adjacency")

    @classmethod
    def from_edges(cls, edges: Iterable[tuple[str, str]], normalization: str = "symmetric",
                   user_order: list[str] | None = None) -> "BipartiteGraph":
        edges = set(edges)
        if not edges:
            raise EmptyGraphError("cannot build a graph without edges")
        users = user_order if user_order is not None else sorted({u for u, _ in edges})
        items = sorted({i for _, i in edges})
        user_index = {u: k for k, u in enumerate(users)}
        item_index = {i: k for k, i in enumerate(items)}
        rows = [user_index[u] for u, _ in edges]
        cols = [item_index[i] for _, i in edges]
        adjacency = SparseMatrix(len(users), len(items), rows, cols, np.ones(len(rows)))
        return cls(tuple(users), tuple(items), adjacency,
                   normalize_adjacency(adjacency, normalization), normalization)

    @property
    def n_users(self) -> int:
        return len(self.user_ids)

    @property
    def n_items(self) -> int:
        return len(self.item_ids)

    @property
    def n_edges(self) -> int:
        return self.adjacency.nnz

    @cached_property
    def user_index(self) -> dict[str, int]:
        return {u: k for k, u in enumerate(self.user_ids)}

    @cached_property
    def item_index(self) -> dict[str, int]:
        return {i: k for k, i in enumerate(self.item_ids)}

    @cached_property
    def normalized_transpose(self) -> SparseMatrix:
        return self.normalized.transpose()

    @cached_property
    def edge_codes(self) -> np.ndarray:
        rows, cols, _ = self.adjacency.coordinates()
        return rows * self.n_items + cols

    def edges(self) -> tuple[np.ndarray, np.ndarray]:
        rows, cols, _ = self.adjacency.coordinates()
        return rows, cols

    def edge_set(self) -> set[tuple[str, str]]:
        rows, cols = self.edges()
        return {(self.user_ids[r], self.item_ids[c]) for r, c in zip(rows, cols)}

    def positives(self, user: int) -> np.ndarray:
        return self.adjacency.row(user)

    def has_edges(self, users: np.ndarray, items: np.ndarray) -> np.ndarray:
        """Vectorized membership test of (user, item) pairs; out-of-range items are never edges."""
        users = np.asarray(users, dtype=np.int64)
        items = np.asarray(items, dtype=np.int64)
        inside = (items >= 0) & (items < self.n_items)
        codes = users * self.n_items + np.where(inside, items, 0)
        position = np.searchsorted(self.edge_codes, codes)
        position = np.minimum(position, self.edge_codes.size - 1)
        return inside & (self.edge_codes[position] == codes)

    def with_extra_users(self, extra: dict[str, list[str]]) -> "BipartiteGraph":
        """
        Append users (in sorted id order) after the existing rows; existing indices are
        unchanged. Items unknown to the graph are dropped, as are users left without items.
        """
        rows, cols = self.edges()
        rows, cols = list(rows), list(cols)
        new_ids = []
        for user_id in sorted(extra):
            if user_id in self.user_index:
                raise ValueError(f"user '{user_id}' is already part of the graph")
            known = sorted({self.item_index[i] for i in extra[user_id] if i in self.item_index})
            if not known:
                continue
            row = self.n_users + len(new_ids)
            new_ids.append(user_id)
            rows.extend([row] * len(known))
            cols.extend(known)
        adjacency = SparseMatrix(self.n_users + len(new_ids), self.n_items, rows, cols, np.ones(len(rows)))
        return BipartiteGraph(self.user_ids + tuple(new_ids), self.item_ids, adjacency,
                              normalize_adjacency(adjacency, self.normalization), self.normalization)


def filter_edges(records: Iterable[InteractionRecord], min_user_interactions: int = 5,
                 min_item_interactions: int = 10,
                 logger: logging.Logger | None = None) -> set[tuple[str, str]]:
    """Deduplicate (user, item) pairs and drop edges until both degree thresholds hold (fixpoint)."""
    if min_user_interactions < 1 or min_item_interactions < 1:
        raise ValueError("interaction thresholds must be >= 1")
    logger = logger or logging.getLogger("Data")
    edges = {(r.user_id, r.item_id) for r in records}
    rounds = 0
    while True:
        user_degree = Counter(u for u, _ in edges)
        item_degree = Counter(i for _, i in edges)
        kept = {
            (u, i) for u, i in edges
            if user_degree[u] >= min_user_interactions and item_degree[i] >= min_item_interactions
        }
        if len(kept) == len(edges):
            break
        edges = kept
        rounds += 1
    logger.debug(f"[Data] filtering reached a fixpoint after {rounds} round(s), {len(edges)} edges kept")
    return edges


def build_graph(records: Iterable[InteractionRecord], min_user_interactions: int = 5,
                min_item_interactions: int = 10, normalization: str = "symmetric",
                logger: logging.Logger | None = None) -> BipartiteGraph:
    """
    Build a filtered, normalized bipartite graph from raw records.

    :param records: Interaction records; duplicate (user, item) pairs collapse into one edge.
    :param min_user_interactions: Minimum distinct items per user (default: 5).
    :param min_item_interactions: Minimum distinct users per item (default: 10).
    :param normalization: 'symmetric' (default), 'row' or 'none'.
    """
    edges = filter_edges(records, min_user_interactions, min_item_interactions, logger)
    if not edges:
        raise EmptyGraphError(
            f"graph is empty after filtering with thresholds "
            f"(users >= {min_user_interactions}, items >= {min_item_interactions})"
        )
    return BipartiteGraph.from_edges(edges, normalization)


def sample_negatives(graph: BipartiteGraph, user: int, count: int, rng: np.random.Generator) -> np.ndarray:
    """Uniformly sample ``count`` distinct items the user has no training edge with."""
    if count < 1:
        raise ValueError("count must be >= 1")
    positives = graph.positives(user)
    if positives.size >= graph.n_items:
        raise ValueError(f"user {user} interacted with every item; no negatives exist")
    candidates = np.setdiff1d(np.arange(graph.n_items), positives, assume_unique=True)
    if count > candidates.size:
        raise ValueError(f"user {user} has only {candidates.size} non-interacted items, {count} requested")
    return rng.choice(candidates, size=count, replace=False)


def sample_negative_batch(graph: BipartiteGraph, users: np.ndarray, count: int, rng: np.random.Generator,
                          n_candidates: int | None = None, offset: int = 0,
                          max_rounds: int = 100) -> tuple[np.ndarray, np.ndarray]:
    """
    ``count`` uniform negatives for every entry of ``users`` (with replacement across entries),
    drawn from item indices [0, n_candidates). The graph's own items sit at
    [offset, offset + n_items); candidates outside that block are never positives.

    :return: (repeated users, negative item indices).
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    n_candidates = graph.n_items if n_candidates is None else int(n_candidates)
    users = np.repeat(np.asarray(users, dtype=np.int64), count)
    if users.size == 0:
        return users, users.copy()
    degrees = graph.adjacency.row_degrees()[users]
    if np.any(degrees >= n_candidates):
        raise ValueError("a user interacted with every candidate item; no negatives exist")
    items = rng.integers(0, n_candidates, size=users.size)
    for _ in range(max_rounds):
        rejected = graph.has_edges(users, items - offset)
        if not rejected.any():
            return users, items
        items[rejected] = rng.integers(0, n_candidates, size=int(rejected.sum()))
    raise RuntimeError("negative sampling did not converge; the graph is too dense")
