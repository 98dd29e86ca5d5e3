"""Indexed triple store with inverse-edge augmentation and per-relation tasks.

Entities and relations are interned to dense integer ids in first-seen
order. With augmentation on (the default), every stored edge (h, r, t)
also yields (t, r_inv, h) where ``r_inv`` is a distinct relation whose
name carries the ``_inv`` suffix; applying the suffix rule twice returns
the original name, so chains may traverse any edge backwards.
"""

from __future__ import annotations

import logging
import math
import os
from collections import deque
from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence

import numpy as np

from .errors import DataError
from .util import STREAM_DOWNSAMPLE, STREAM_SPLIT, stream_rng

log = logging.getLogger(__name__)

INVERSE_SUFFIX = "_inv"

# Sentinel distance for entities that cannot reach the BFS source.
UNREACHABLE = np.iinfo(np.int32).max


def inverse_name(name: str) -> str:
    """Name of the inverse relation; involutive (stripping undoes suffixing)."""
    if name.endswith(INVERSE_SUFFIX):
        return name[: -len(INVERSE_SUFFIX)]
    return name + INVERSE_SUFFIX


@dataclass(frozen=True)
class Triple:
    head: int
    relation: int
    tail: int


class KnowledgeGraph:
    """Immutable after construction; safe for unlimited concurrent readers."""

    def __init__(self) -> None:
        self._entity_ids: dict[str, int] = {}
        self._entity_names: list[str] = []
        self._relation_ids: dict[str, int] = {}
        self._relation_names: list[str] = []
        self._adj: list[list[tuple[int, int]]] = []
        self._radj: list[list[tuple[int, int]]] = []
        self._edges: set[tuple[int, int, int]] = set()
        self._originals: list[Triple] = []
        self._inverse_ids: list[int] | None = None

    @classmethod
    def from_triples(
        cls, triples: Iterable[tuple[str, str, str]], add_inverses: bool = True
    ) -> "KnowledgeGraph":
        graph = cls()
        duplicates = 0
        count = 0
        for head, rel, tail in triples:
            count += 1
            h = graph._intern_entity(head)
            r = graph._intern_relation(rel, add_inverses)
            t = graph._intern_entity(tail)
            if not graph._add_edge(h, r, t):
                duplicates += 1
                continue
            graph._originals.append(Triple(h, r, t))
            if add_inverses:
                graph._add_edge(t, graph.inverse_relation_id(r), h)
        if count == 0:
            raise DataError("no triples")
        if duplicates:
            log.info("deduplicated %d duplicate triples", duplicates)
        return graph

    # -- symbol tables -------------------------------------------------

    def _intern_entity(self, name: str) -> int:
        eid = self._entity_ids.get(name)
        if eid is None:
            eid = len(self._entity_names)
            self._entity_ids[name] = eid
            self._entity_names.append(name)
            self._adj.append([])
            self._radj.append([])
        return eid

    def _intern_relation(self, name: str, with_inverse: bool) -> int:
        rid = self._relation_ids.get(name)
        if rid is None:
            rid = len(self._relation_names)
            self._relation_ids[name] = rid
            self._relation_names.append(name)
            self._inverse_ids = None
            if with_inverse:
                # Intern the partner right away so inverse ids are assigned
                # in first-seen order alongside their originals.
                self._intern_relation(inverse_name(name), False)
        return rid

    def entity_id(self, name: str) -> int:
        eid = self._entity_ids.get(name)
        if eid is None:
            raise DataError(f"unknown entity: {name!r}")
        return eid

    def relation_id(self, name: str) -> int:
        rid = self._relation_ids.get(name)
        if rid is None:
            raise DataError(f"unknown relation: {name!r}")
        return rid

    def entity_name(self, eid: int) -> str:
        self.check_entity(eid)
        return self._entity_names[eid]

    def relation_name(self, rid: int) -> str:
        if not 0 <= rid < len(self._relation_names):
            raise DataError(f"unknown relation id: {rid}")
        return self._relation_names[rid]

    def has_entity(self, name: str) -> bool:
        return name in self._entity_ids

    def check_entity(self, eid: int) -> None:
        if not 0 <= eid < len(self._entity_names):
            raise DataError(f"unknown entity id: {eid}")

    def inverse_relation_id(self, rid: int) -> int:
        """Id of the name-level inverse, or -1 if it was never interned."""
        if self._inverse_ids is None or len(self._inverse_ids) != len(self._relation_names):
            self._inverse_ids = [
                self._relation_ids.get(inverse_name(name), -1)
                for name in self._relation_names
            ]
        if not 0 <= rid < len(self._inverse_ids):
            raise DataError(f"unknown relation id: {rid}")
        return self._inverse_ids[rid]

    # -- edges ----------------------------------------------------------

    def _add_edge(self, h: int, r: int, t: int) -> bool:
        key = (h, r, t)
        if key in self._edges:
            return False
        self._edges.add(key)
        self._adj[h].append((r, t))
        self._radj[t].append((r, h))
        return True

    def neighbors(self, eid: int) -> list[tuple[int, int]]:
        """Outgoing (relation-id, entity-id) pairs in stable insertion order."""
        self.check_entity(eid)
        return self._adj[eid]

    def distance_to(self, target: int, cap: int) -> np.ndarray:
        """Shortest hop count from every entity to ``target``, capped by BFS depth.

        Runs backwards over incoming edges; entities further than ``cap``
        (or unreachable) get UNREACHABLE. Used to prune path enumeration.
        """
        self.check_entity(target)
        dist = np.full(self.n_entities, UNREACHABLE, dtype=np.int64)
        dist[target] = 0
        queue = deque([target])
        while queue:
            node = queue.popleft()
            d = dist[node]
            if d >= cap:
                continue
            for _, prev in self._radj[node]:
                if dist[prev] > d + 1:
                    dist[prev] = d + 1
                    queue.append(prev)
        return dist

    @property
    def n_entities(self) -> int:
        return len(self._entity_names)

    @property
    def n_relations(self) -> int:
        return len(self._relation_names)

    @property
    def n_edges(self) -> int:
        return len(self._edges)

    @property
    def n_triples(self) -> int:
        """Count of stored input triples (excludes augmented inverse edges)."""
        return len(self._originals)

    def edges(self) -> Iterator[tuple[str, str, str]]:
        """All directed edges (including augmented ones) as name triples."""
        for h in range(self.n_entities):
            for r, t in self._adj[h]:
                yield (self._entity_names[h], self._relation_names[r], self._entity_names[t])

    def original_triples(self) -> Iterator[tuple[str, str, str]]:
        for tr in self._originals:
            yield (
                self._entity_names[tr.head],
                self._relation_names[tr.relation],
                self._entity_names[tr.tail],
            )


def load_triples(path: str, add_inverses: bool = True) -> KnowledgeGraph:
    """Load a tab-separated triples file (head TAB relation TAB tail).

    Lines starting with ``#`` are ignored. A malformed line aborts with an
    error naming the line number; a file with no triples is an error.
    """
    if not os.path.exists(path):
        raise DataError(f"triples file not found: {path}")

    def parse() -> Iterator[tuple[str, str, str]]:
        with open(path, encoding="utf-8") as fh:
            for lineno, raw in enumerate(fh, start=1):
                line = raw.rstrip("\n")
                if not line or line.startswith("#"):
                    continue
                fields = line.split("\t")
                if len(fields) != 3 or not all(fields):
                    raise DataError(f"{path}:{lineno}: expected 3 tab-separated fields")
                yield (fields[0], fields[1], fields[2])

    try:
        return KnowledgeGraph.from_triples(parse(), add_inverses=add_inverses)
    except DataError as err:
        if str(err) == "no triples":
            raise DataError(f"no triples in {path}") from None
        raise


def write_triples(graph: KnowledgeGraph, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for h, r, t in graph.original_triples():
            fh.write(f"{h}\t{r}\t{t}\n")


@dataclass
class LabeledPair:
    head: str
    tail: str
    label: int


@dataclass
class TaskDataset:
    target: int
    relation: str
    train: list[LabeledPair]
    dev: list[LabeledPair]
    test: list[LabeledPair]


def split_train_dev(
    pairs: Sequence[LabeledPair], ratio: float, rng: np.random.Generator
) -> tuple[list[LabeledPair], list[LabeledPair]]:
    """Seeded shuffle then prefix split; train gets floor(ratio * n) pairs."""
    if not 0 < ratio <= 1:
        raise ValueError("split ratio must be in (0, 1]")
    perm = rng.permutation(len(pairs))
    cut = int(math.floor(ratio * len(pairs)))
    train = [pairs[i] for i in perm[:cut]]
    dev = [pairs[i] for i in perm[cut:]]
    return train, dev


def _read_pairs(path: str) -> list[LabeledPair]:
    if not os.path.exists(path):
        raise DataError(f"pairs file not found: {path}")
    pairs = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            fields = line.split("\t")
            if len(fields) != 3 or not all(fields):
                raise DataError(f"{path}:{lineno}: expected head TAB tail TAB label")
            if fields[2] not in ("0", "1"):
                raise DataError(f"{path}:{lineno}: label must be '0' or '1', got {fields[2]!r}")
            pairs.append(LabeledPair(fields[0], fields[1], int(fields[2])))
    return pairs


def load_task(
    tasks_dir: str,
    relation: str,
    graph: KnowledgeGraph,
    split_ratio: float = 0.8,
    seed: int = 0,
) -> TaskDataset:
    """Load ``<tasks_dir>/<relation>/{train,test}.pairs`` and apply the dev split.

    The split shuffles with a per-task stream seeded by the global seed plus
    the relation id, then cuts at ``split_ratio``.
    """
    rel_id = graph.relation_id(relation)
    task_dir = os.path.join(tasks_dir, relation)
    if not os.path.isdir(task_dir):
        raise DataError(f"task directory not found: {task_dir}")
    pool = _read_pairs(os.path.join(task_dir, "train.pairs"))
    test = _read_pairs(os.path.join(task_dir, "test.pairs"))
    rng = stream_rng(seed + rel_id, STREAM_SPLIT)
    train, dev = split_train_dev(pool, split_ratio, rng)
    return TaskDataset(target=rel_id, relation=relation, train=train, dev=dev, test=test)


def downsample_negatives(pairs: Sequence, ratio: float, seed: int) -> list:
    """Keep all positives; sample negatives down to ceil(ratio * #positives).

    Works on any sequence of objects with a 0/1 ``label`` attribute and
    preserves the original relative order. If there are fewer negatives
    than the target, all are kept.
    """
    if ratio <= 0:
        raise ValueError("ratio must be positive")
    n_pos = sum(1 for p in pairs if p.label == 1)
    neg_idx = [i for i, p in enumerate(pairs) if p.label != 1]
    target = math.ceil(ratio * n_pos)
    if len(neg_idx) <= target:
        return list(pairs)
    rng = stream_rng(seed, STREAM_DOWNSAMPLE)
    chosen = set(rng.choice(len(neg_idx), size=target, replace=False).tolist())
    keep = {neg_idx[i] for i in chosen}
    return [p for i, p in enumerate(pairs) if p.label == 1 or i in keep]
