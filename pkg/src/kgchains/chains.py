"""Relation-chain enumeration, per-relation vocabularies, binary encodings.

A relation chain is the ordered label sequence of some entity path between
a head and a tail; intermediate entities are discarded. Chains are the
feature space for everything downstream: an instance is encoded as the
0/1 availability vector over the task vocabulary.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import DataError
from .graph import KnowledgeGraph, TaskDataset


@dataclass(frozen=True, order=True)
class RelationChain:
    """Ordered relation-id sequence; equality and hashing by the full tuple."""

    relations: tuple[int, ...]

    def __len__(self) -> int:
        return len(self.relations)

    def names(self, graph: KnowledgeGraph) -> str:
        return "->".join(graph.relation_name(r) for r in self.relations)


def enumerate_paths(
    graph: KnowledgeGraph,
    head: int,
    tail: int,
    max_hops: int,
    exclude: int | None = None,
    simple_paths: bool = False,
) -> set[RelationChain]:
    """Distinct relation-label sequences of entity paths head -> tail, length <= max_hops.

    Walks may revisit entities except for the immediate backtrack (taking an
    edge and then its inverse straight back); set ``simple_paths`` to forbid
    revisiting any entity. A length-1 path labeled ``exclude`` or its inverse
    between exactly this pair is omitted (leakage guard for the target
    relation). Two entity paths with the same label sequence yield one chain.

    The search is depth-first, pruned by the exact hop distance to the tail,
    so only prefixes that can still complete are expanded.
    """
    graph.check_entity(head)
    graph.check_entity(tail)
    if max_hops < 1:
        raise ValueError("max_hops must be >= 1")

    excluded: set[int] = set()
    if exclude is not None:
        excluded.add(exclude)
        inv = graph.inverse_relation_id(exclude)
        if inv >= 0:
            excluded.add(inv)

    dist = graph.distance_to(tail, max_hops)
    found: set[tuple[int, ...]] = set()
    labels: list[int] = []
    visited = {head}

    def walk(node: int, prev_node: int, banned_rel: int, depth: int) -> None:
        hops_left = max_hops - depth - 1
        for rel, nxt in graph.neighbors(node):
            if nxt == prev_node and rel == banned_rel:
                continue
            if simple_paths and nxt in visited and nxt != tail:
                continue
            if nxt != tail and dist[nxt] > hops_left:
                continue
            labels.append(rel)
            if nxt == tail:
                if depth > 0 or rel not in excluded:
                    found.add(tuple(labels))
            descend = hops_left > 0 and not (simple_paths and nxt == tail)
            if descend:
                if simple_paths:
                    visited.add(nxt)
                walk(nxt, node, graph.inverse_relation_id(rel), depth + 1)
                if simple_paths:
                    visited.discard(nxt)
            labels.pop()

    walk(head, -1, -1, 0)
    return {RelationChain(seq) for seq in found}


@dataclass
class ChainVocabulary:
    """Indexed candidate chain set for one target relation.

    Chains are unique and ordered by decreasing positive-pair support with
    ties broken by first occurrence; indices 0..D-1 are stable and persisted.
    """

    target: int
    max_hops: int
    chains: list[RelationChain]
    supports: list[int]
    index: dict[RelationChain, int] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self.index = {chain: j for j, chain in enumerate(self.chains)}
        if len(self.index) != len(self.chains):
            raise DataError("vocabulary chains are not unique")

    @property
    def size(self) -> int:
        return len(self.chains)


def build_vocabulary(
    graph: KnowledgeGraph,
    positives: Sequence[tuple[int, int]],
    target: int,
    max_hops: int = 3,
    max_size: int = 10000,
) -> ChainVocabulary:
    """Union of enumerate_paths over positive pairs, filtered to ``max_size``.

    Support of a chain is the number of positive pairs realizing it. When
    the union exceeds ``max_size``, chains are kept in decreasing support
    (ties by earlier first occurrence); indices are assigned in that order.
    """
    if not positives:
        raise DataError("no positive pairs to build a vocabulary from")
    support: dict[RelationChain, int] = {}
    first_seen: dict[RelationChain, int] = {}
    counter = 0
    for head, tail in positives:
        for chain in sorted(enumerate_paths(graph, head, tail, max_hops, exclude=target)):
            if chain not in support:
                support[chain] = 0
                first_seen[chain] = counter
                counter += 1
            support[chain] += 1
    if not support:
        raise DataError("no candidate chains")
    order = sorted(support, key=lambda c: (-support[c], first_seen[c]))
    kept = order[:max_size]
    return ChainVocabulary(
        target=target,
        max_hops=max_hops,
        chains=kept,
        supports=[support[c] for c in kept],
    )


@dataclass
class Instance:
    """One query pair with its 0/1 chain-availability vector over the vocabulary."""

    head: int | str
    tail: int | str
    label: int
    availability: np.ndarray

    @property
    def n_available(self) -> int:
        return int(self.availability.sum())


@dataclass
class SelectionMask:
    """Disjoint selected/complement split of an instance's available chains."""

    selected: np.ndarray
    complement: np.ndarray

    @property
    def n_selected(self) -> int:
        return int(self.selected.sum())

    @property
    def n_available(self) -> int:
        return int(self.selected.sum() + self.complement.sum())


def mask_from_selected(availability: np.ndarray, selected: np.ndarray) -> SelectionMask:
    selected = selected * availability
    return SelectionMask(selected=selected, complement=availability * (1.0 - selected))


def encode_instance(
    vocab: ChainVocabulary,
    graph: KnowledgeGraph,
    head: int,
    tail: int,
    label: int,
) -> Instance:
    """Availability bit j is 1 iff vocabulary chain j connects head to tail."""
    availability = np.zeros(vocab.size, dtype=np.float64)
    for chain in enumerate_paths(graph, head, tail, vocab.max_hops, exclude=vocab.target):
        j = vocab.index.get(chain)
        if j is not None:
            availability[j] = 1.0
    return Instance(head=head, tail=tail, label=label, availability=availability)


def chain_statistics(
    vocab: ChainVocabulary, instances: Sequence[Instance]
) -> tuple[int, float]:
    """(total vocabulary chains, mean distinct chains realized per instance)."""
    if not instances:
        raise DataError("no instances to compute chain statistics on")
    mean = float(np.mean([inst.n_available for inst in instances]))
    return vocab.size, mean


@dataclass
class EncodedTask:
    """A task dataset with every pair encoded against one vocabulary."""

    relation: str
    size: int
    train: list[Instance]
    dev: list[Instance]
    test: list[Instance]


def encode_task(vocab: ChainVocabulary, graph: KnowledgeGraph, task: TaskDataset) -> EncodedTask:
    def encode_split(pairs) -> list[Instance]:
        return [
            encode_instance(vocab, graph, graph.entity_id(p.head), graph.entity_id(p.tail), p.label)
            for p in pairs
        ]

    return EncodedTask(
        relation=task.relation,
        size=vocab.size,
        train=encode_split(task.train),
        dev=encode_split(task.dev),
        test=encode_split(task.test),
    )


# -- persistence ---------------------------------------------------------


def write_vocabulary(path: str, vocab: ChainVocabulary, graph: KnowledgeGraph) -> None:
    """One line per chain: index TAB support TAB names joined by ``->``."""
    with open(path, "w", encoding="utf-8") as fh:
        for j, chain in enumerate(vocab.chains):
            fh.write(f"{j}\t{vocab.supports[j]}\t{chain.names(graph)}\n")


def read_vocabulary(
    path: str, graph: KnowledgeGraph, target: int, max_hops: int
) -> ChainVocabulary:
    if not os.path.exists(path):
        raise DataError(f"vocabulary file not found: {path}")
    chains: list[RelationChain] = []
    supports: list[int] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line:
                continue
            fields = line.split("\t")
            if len(fields) != 3:
                raise DataError(f"{path}:{lineno}: expected index TAB support TAB chain")
            if int(fields[0]) != len(chains):
                raise DataError(f"{path}:{lineno}: indices must be contiguous from 0")
            rel_ids = tuple(graph.relation_id(name) for name in fields[2].split("->"))
            chains.append(RelationChain(rel_ids))
            supports.append(int(fields[1]))
    if not chains:
        raise DataError(f"empty vocabulary file: {path}")
    return ChainVocabulary(target=target, max_hops=max_hops, chains=chains, supports=supports)


def read_vocabulary_names(path: str) -> tuple[list[str], list[int]]:
    """Chain display names and supports without needing the graph (for reports)."""
    if not os.path.exists(path):
        raise DataError(f"vocabulary file not found: {path}")
    names: list[str] = []
    supports: list[int] = []
    with open(path, encoding="utf-8") as fh:
        for raw in fh:
            line = raw.rstrip("\n")
            if not line:
                continue
            fields = line.split("\t")
            if len(fields) != 3:
                raise DataError(f"malformed vocabulary file: {path}")
            names.append(fields[2])
            supports.append(int(fields[1]))
    return names, supports


def write_instances(path: str, instances: Sequence[Instance], graph: KnowledgeGraph | None) -> None:
    """head TAB tail TAB label TAB availability bits as a 0/1 string."""

    def name(value: int | str) -> str:
        if isinstance(value, str):
            return value
        assert graph is not None, "graph required to name integer entity ids"
        return graph.entity_name(value)

    with open(path, "w", encoding="utf-8") as fh:
        for inst in instances:
            bits = "".join("1" if b else "0" for b in inst.availability > 0)
            fh.write(f"{name(inst.head)}\t{name(inst.tail)}\t{inst.label}\t{bits}\n")


def read_instances(path: str, expected_size: int | None = None) -> list[Instance]:
    """Reload an instance cache; heads and tails come back as names."""
    if not os.path.exists(path):
        raise DataError(f"instance cache not found: {path}")
    instances: list[Instance] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line:
                continue
            fields = line.split("\t")
            if len(fields) != 4 or fields[2] not in ("0", "1"):
                raise DataError(f"{path}:{lineno}: malformed instance line")
            if set(fields[3]) - {"0", "1"}:
                raise DataError(f"{path}:{lineno}: availability must be a 0/1 string")
            if expected_size is not None and len(fields[3]) != expected_size:
                raise DataError(
                    f"{path}:{lineno}: availability length {len(fields[3])} != vocabulary size {expected_size}"
                )
            availability = np.array([float(c) for c in fields[3]], dtype=np.float64)
            instances.append(
                Instance(head=fields[0], tail=fields[1], label=int(fields[2]), availability=availability)
            )
    return instances
