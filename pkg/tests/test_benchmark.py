import numpy as np
import pytest

from kgchains.benchmark import BenchmarkSpec, make_benchmark, write_benchmark
from kgchains.chains import RelationChain, enumerate_paths
from kgchains.errors import DataError


def chain_names(graph, head, tail, max_hops, exclude):
    found = enumerate_paths(
        graph, graph.entity_id(head), graph.entity_id(tail), max_hops, exclude=exclude
    )
    return {c.names(graph) for c in found}


def planted_names(spec):
    return {"->".join(chain) for chain in spec.chains()}


def test_conjunction_labels_exactly_match_chains():
    spec = BenchmarkSpec(rule="conjunction", seed=5, train_groups=8, test_groups=4)
    graph, task = make_benchmark(spec)
    target = graph.relation_id(spec.target_name)
    planted = planted_names(spec)
    for pair in task.train + task.dev + task.test:
        found = chain_names(graph, pair.head, pair.tail, spec.max_hops, target)
        has_both = planted <= found
        assert has_both == (pair.label == 1), (pair, found)


def test_single_rule_labels():
    spec = BenchmarkSpec(rule="single", seed=2, train_groups=6, test_groups=3)
    graph, task = make_benchmark(spec)
    target = graph.relation_id(spec.target_name)
    planted = planted_names(spec)
    for pair in task.train + task.dev + task.test:
        found = chain_names(graph, pair.head, pair.tail, spec.max_hops, target)
        assert (planted <= found) == (pair.label == 1)


def test_noisy_weak_rates_differ_by_class():
    spec = BenchmarkSpec(rule="noisy_weak", seed=4, relations=9, train_groups=30, test_groups=10)
    graph, task = make_benchmark(spec)
    target = graph.relation_id(spec.target_name)
    planted = planted_names(spec)
    counts = {1: [], 0: []}
    for pair in task.train + task.dev + task.test:
        found = chain_names(graph, pair.head, pair.tail, spec.max_hops, target)
        counts[pair.label].append(len(planted & found))
    assert np.mean(counts[1]) > np.mean(counts[0]) + 1.0


def test_noise_flips_labels():
    base = BenchmarkSpec(rule="conjunction", seed=5, train_groups=8, test_groups=4)
    noisy = BenchmarkSpec(rule="conjunction", seed=5, train_groups=8, test_groups=4, noise=0.3)
    _, clean_task = make_benchmark(base)
    graph, noisy_task = make_benchmark(noisy)
    target = graph.relation_id(noisy.target_name)
    planted = planted_names(noisy)
    flips = 0
    for pair in noisy_task.train + noisy_task.dev + noisy_task.test:
        found = chain_names(graph, pair.head, pair.tail, noisy.max_hops, target)
        if (planted <= found) != (pair.label == 1):
            flips += 1
    assert flips > 0


def test_same_spec_same_seed_identical():
    spec = BenchmarkSpec(rule="conjunction", seed=9, train_groups=5, test_groups=2)
    g1, t1 = make_benchmark(spec)
    g2, t2 = make_benchmark(spec)
    assert set(g1.edges()) == set(g2.edges())
    assert [(p.head, p.tail, p.label) for p in t1.train] == [
        (p.head, p.tail, p.label) for p in t2.train
    ]


def test_infeasible_chain_length_rejected():
    spec = BenchmarkSpec(
        rule="single", planted_chains=[("a", "b", "c", "d")], max_hops=3
    )
    with pytest.raises(DataError, match="max_hops"):
        make_benchmark(spec)


def test_target_in_planted_chain_rejected():
    spec = BenchmarkSpec(rule="single", planted_chains=[("target",)])
    with pytest.raises(DataError):
        make_benchmark(spec)


def test_conjunction_needs_two_chains():
    spec = BenchmarkSpec(rule="conjunction", planted_chains=[("a",)])
    with pytest.raises(DataError):
        make_benchmark(spec)


def test_distractor_count_meets_budget():
    spec = BenchmarkSpec(rule="conjunction", relations=26)
    assert spec.n_distractors >= 20


def test_instance_counts():
    spec = BenchmarkSpec(rule="conjunction", seed=0)
    _, task = make_benchmark(spec)
    assert len(task.train) + len(task.dev) == 200
    assert len(task.test) == 100


def test_write_benchmark_layout(tmp_path):
    spec = BenchmarkSpec(rule="conjunction", seed=1, train_groups=4, test_groups=2)
    graph_path, tasks_dir = write_benchmark(spec, str(tmp_path))
    assert (tmp_path / "graph.tsv").exists()
    assert (tmp_path / "tasks" / "target" / "train.pairs").exists()
    assert (tmp_path / "tasks" / "target" / "test.pairs").exists()
    lines = (tmp_path / "tasks" / "target" / "train.pairs").read_text().splitlines()
    assert len(lines) == 16


def test_single_rule_d1_game_reaches_high_map():
    from kgchains import chains as chains_mod
    from kgchains import evaluate, game

    spec = BenchmarkSpec(rule="single", seed=6, train_groups=30, test_groups=15)
    graph, task = make_benchmark(spec)
    positives = [
        (graph.entity_id(p.head), graph.entity_id(p.tail)) for p in task.train if p.label == 1
    ]
    vocab = chains_mod.build_vocabulary(graph, positives, task.target, spec.max_hops)
    data = chains_mod.encode_task(vocab, graph, task)
    res = evaluate.run_mode(data, game.TrainConfig(epochs=120, seed=1, lr=0.01), "game_mlp", 1)
    assert res.test_map >= 0.95
