import numpy as np
import pytest

from kgchains.chains import EncodedTask, Instance
from kgchains.errors import DataError
from kgchains.evaluate import (
    ALL_MODES,
    evaluate_task,
    group_aps,
    run_mode,
    train_mode,
    train_single_chain_gen,
)
from kgchains.game import GameModel, TrainConfig, build_model
from kgchains.neural import DenseParams


def scripted_model(score_of):
    """GameModel whose predict() is driven by a hand-made linear predictor."""
    # identity trick: availability dot weights -> logit gap
    d = len(score_of)
    w = np.zeros((2, d))
    w[1] = np.array(score_of)
    return GameModel(
        input_dim=d,
        d=d,
        lambda_s=0.0,
        predictor_arch="linear",
        mode="d_all",
        predictor=DenseParams(layers=[[w, np.zeros(2)]]),
    )


def inst(head, label, bits, d=4):
    avail = np.zeros(d)
    for b in bits:
        avail[b] = 1.0
    return Instance(head=head, tail=0, label=label, availability=avail)


def test_perfect_scorer_gives_map_one():
    model = scripted_model([5.0, 0.0, 0.0, 0.0])  # bit 0 decides
    instances = [
        inst("a", 1, [0]), inst("a", 0, [1]), inst("b", 1, [0, 2]), inst("b", 0, [3]),
    ]
    report = evaluate_task(model, instances)
    assert report.map == 1.0
    assert report.skipped == 0
    assert len(group_aps(report)) == 2


def test_constant_scorer_matches_stable_order_oracle():
    model = scripted_model([0.0, 0.0, 0.0, 0.0])
    instances = [
        inst("a", 0, [1]), inst("a", 1, [0]),
        inst("b", 1, [2]), inst("b", 0, [3]), inst("b", 1, [1]),
    ]
    report = evaluate_task(model, instances)
    # constant scores keep input order: group a has its positive second,
    # group b has positives at ranks 1 and 3
    expected_a = 1 / 2
    expected_b = (1 / 1 + 2 / 3) / 2
    assert report.map == pytest.approx((expected_a + expected_b) / 2)


def test_groups_without_positives_are_skipped_and_counted():
    model = scripted_model([1.0, 0.0, 0.0, 0.0])
    instances = [inst("a", 1, [0]), inst("b", 0, [1]), inst("b", 0, [2])]
    report = evaluate_task(model, instances)
    assert report.skipped == 1
    assert report.map == 1.0


def test_empty_test_set_errors():
    model = scripted_model([1.0, 0.0, 0.0, 0.0])
    with pytest.raises(DataError, match="empty test set"):
        evaluate_task(model, [])


def test_global_grouping():
    model = scripted_model([1.0, 0.0, 0.0, 0.0])
    instances = [inst("a", 1, [0]), inst("b", 0, [1])]
    report = evaluate_task(model, instances, group_by="global")
    assert len(report.groups) == 1
    assert report.map == 1.0


def make_task(seed=0, n=120, d_input=8):
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n):
        label = int(rng.random() < 0.5)
        avail = (rng.random(d_input) < 0.4).astype(float)
        avail[0] = float(label)
        out.append(Instance(head=i // 4, tail=i, label=label, availability=avail))
    return EncodedTask("synthetic", d_input, out[:72], out[72:96], out[96:])


def test_unknown_mode_rejected():
    data = make_task()
    with pytest.raises(DataError, match="unknown run mode"):
        train_mode(data, TrainConfig(epochs=1, seed=0), "bogus", 2)


@pytest.mark.parametrize("mode", ALL_MODES)
def test_all_modes_run_and_evaluate(mode):
    data = make_task()
    result = run_mode(data, TrainConfig(epochs=2, seed=1), mode, 2)
    assert 0.0 <= result.test_map <= 1.0
    assert result.mode == mode
    if mode == "d_all":
        assert result.model.generator is None
    else:
        assert result.model.generator is not None


def test_single_chain_gen_freezes_stage_one_generator():
    data = make_task()
    cfg = TrainConfig(epochs=3, seed=2)
    from kgchains.game import train_task

    stage_one = train_task(data, cfg, d=1)
    combined = train_single_chain_gen(data, cfg, d=2)
    for (w1, _), (w2, _) in zip(
        stage_one.model.generator.layers, combined.model.generator.layers
    ):
        assert np.array_equal(w1, w2)
    assert combined.model.complement is None
    assert combined.model.d == 2
