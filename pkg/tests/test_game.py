import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kgchains.chains import EncodedTask, Instance, SelectionMask, mask_from_selected
from kgchains.errors import DataError
from kgchains.game import (
    GameModel,
    TrainConfig,
    build_model,
    dev_map,
    generator_probs,
    instance_reward,
    predict,
    sample_mask,
    select_top_d,
    selection_grad,
    selection_log_prob,
    sparsity_loss,
    train_predictor_only,
    train_task,
)
from kgchains.neural import DenseParams, forward
from kgchains.util import STREAM_SAMPLE, stream_rng


def instance(avail, label=1, head=0, tail=1):
    return Instance(head=head, tail=tail, label=label, availability=np.array(avail, dtype=float))


def zero_generator_model(d_input, d=2, lambda_s=1.0):
    model = build_model(d_input, d, lambda_s, "mlp", seed=0)
    for w, b in model.generator.layers:
        w[:] = 0.0
        b[:] = 0.0
    return model


def test_generator_probs_masking():
    model = zero_generator_model(4)
    inst = instance([1, 1, 0, 1])
    probs = generator_probs(model, inst)
    assert probs.tolist() == [0.5, 0.5, 0.0, 0.5]


def test_generator_probs_zero_availability():
    model = zero_generator_model(4)
    probs = generator_probs(model, instance([0, 0, 0, 0]))
    assert not probs.any()


def test_generator_probs_bounded_by_availability():
    model = build_model(6, 2, 1.0, "mlp", seed=3)
    inst = instance([1, 0, 1, 0, 1, 1])
    probs = generator_probs(model, inst)
    assert ((probs > 0) <= (inst.availability > 0)).all()
    assert (probs <= 1.0).all()


def test_sample_mask_extremes():
    avail = np.array([1.0, 0.0, 1.0])
    rng = stream_rng(0, STREAM_SAMPLE)
    all_in = sample_mask(np.array([1.0, 0.0, 1.0]), avail, rng)
    assert np.array_equal(all_in.selected, avail)
    none = sample_mask(np.zeros(3), avail, rng)
    assert not none.selected.any()
    assert np.array_equal(none.complement, avail)


def test_sample_mask_monte_carlo_frequency():
    avail = np.array([1.0])
    probs = np.array([0.3])
    rng = stream_rng(1, STREAM_SAMPLE)
    draws = 100_000
    hits = sum(sample_mask(probs, avail, rng).n_selected for _ in range(draws))
    assert abs(hits / draws - 0.3) < 0.01


def test_sparsity_loss_grid():
    # (selected, d, available) -> expected, including clamp cases
    cases = [
        (7, 5, 20, 0.1),
        (5, 5, 20, 0.0),
        (2, 5, 4, 0.0),
        (4, 1, 4, 0.75),
        (1, 1, 1, 0.0),
        (0, 3, 5, 0.0),
    ]
    for n_sel, d, n_avail, expected in cases:
        avail = np.zeros(25)
        avail[:n_avail] = 1.0
        sel = np.zeros(25)
        sel[:n_sel] = 1.0
        mask = mask_from_selected(avail, sel)
        assert sparsity_loss(mask, d) == pytest.approx(expected)


def test_sparsity_loss_empty_availability():
    mask = mask_from_selected(np.zeros(4), np.zeros(4))
    assert sparsity_loss(mask, 1) == 0.0


def test_select_top_d_examples():
    avail = np.ones(4)
    mask = select_top_d(np.array([0.9, 0.1, 0.8, 0.4]), avail, 2)
    assert np.flatnonzero(mask.selected).tolist() == [0, 2]

    avail = np.array([1.0, 1.0, 0.0, 1.0])
    mask = select_top_d(np.array([0.2, 0.3, 0.0, 0.1]), avail, 5)
    assert np.array_equal(mask.selected, avail)

    mask = select_top_d(np.array([0.5, 0.5, 0.5]), np.ones(3), 2)
    assert np.flatnonzero(mask.selected).tolist() == [0, 1]


def test_reward_definition():
    model = zero_generator_model(4, d=2, lambda_s=1.0)
    avail = np.ones(4)
    mask = mask_from_selected(avail, np.array([1.0, 1.0, 0.0, 0.0]))
    assert instance_reward(model, mask, 1, 0) == 1.0
    assert instance_reward(model, mask, 1, 1) == 0.0
    over = mask_from_selected(avail, np.ones(4))
    assert instance_reward(model, over, 1, 1) == pytest.approx(-0.5)


def test_reward_bounds_property():
    rng = np.random.default_rng(0)
    model = build_model(6, 2, 1.0, "mlp", seed=1)
    for _ in range(200):
        avail = (rng.random(6) < 0.6).astype(float)
        sel = (rng.random(6) < 0.5).astype(float)
        mask = mask_from_selected(avail, sel)
        r = instance_reward(model, mask, int(rng.integers(2)), int(rng.integers(2)))
        assert -1.0 - model.lambda_s <= r <= 1.0


def test_mask_validity_property():
    rng_np = np.random.default_rng(2)
    model = build_model(8, 3, 1.0, "mlp", seed=2)
    rng = stream_rng(2, STREAM_SAMPLE)
    for _ in range(100):
        avail = (rng_np.random(8) < 0.5).astype(float)
        inst = instance(avail)
        probs = generator_probs(model, inst)
        for mask in (sample_mask(probs, avail, rng), select_top_d(probs, avail, 3)):
            assert ((mask.selected > 0) <= (avail > 0)).all()
            assert not (mask.selected * mask.complement).any()
            assert np.array_equal(mask.selected + mask.complement, avail)


def test_selection_log_prob_matches_manual():
    model = build_model(5, 2, 1.0, "mlp", seed=4)
    inst = instance([1, 1, 0, 1, 0])
    probs = generator_probs(model, inst)
    mask = mask_from_selected(inst.availability, np.array([1.0, 0.0, 0.0, 1.0, 0.0]))
    manual = np.log(probs[0]) + np.log(1 - probs[1]) + np.log(probs[3])
    assert selection_log_prob(probs, inst.availability, mask) == pytest.approx(manual)


def test_selection_grad_matches_finite_differences():
    model = build_model(6, 2, 1.0, "mlp", seed=5)
    inst = instance([1, 0, 1, 1, 0, 1])
    rng = stream_rng(5, STREAM_SAMPLE)
    probs = generator_probs(model, inst)
    mask = sample_mask(probs, inst.availability, rng)
    grads, _ = selection_grad(model, inst, mask)
    h = 1e-6
    for li, (w, _) in enumerate(model.generator.layers):
        flat = w.reshape(-1)
        for k in range(0, flat.size, max(1, flat.size // 7)):
            old = flat[k]
            flat[k] = old + h
            up = selection_log_prob(
                generator_probs(model, inst), inst.availability, mask
            )
            flat[k] = old - h
            down = selection_log_prob(
                generator_probs(model, inst), inst.availability, mask
            )
            flat[k] = old
            numeric = -(up - down) / (2 * h)  # selection_grad returns d(-log pi)
            assert grads[li][0].reshape(-1)[k] == pytest.approx(numeric, rel=1e-4, abs=1e-8)


def test_predict_zero_weights_gives_half():
    model = zero_generator_model(4)
    for w, b in model.predictor.layers:
        w[:] = 0.0
        b[:] = 0.0
    assert predict(model, instance([1, 0, 1, 0])) == 0.5


def test_predict_zero_availability_is_constant():
    model = build_model(4, 2, 1.0, "mlp", seed=6)
    empty1 = predict(model, instance([0, 0, 0, 0], head=1))
    empty2 = predict(model, instance([0, 0, 0, 0], head=2))
    assert empty1 == empty2


def make_planted_task(seed=0, n=160, d_input=8):
    """Chain 0 carries the label; the rest is noise."""
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n):
        label = int(rng.random() < 0.5)
        avail = (rng.random(d_input) < 0.4).astype(float)
        avail[0] = float(label)
        out.append(Instance(head=i // 4, tail=i, label=label, availability=avail))
    return EncodedTask("planted", d_input, out[: n // 2], out[n // 2 : n // 2 + n // 4], out[-n // 4 :])


def test_zero_epochs_returns_initial_model():
    data = make_planted_task()
    result = train_task(data, TrainConfig(epochs=0, seed=1), d=1)
    assert result.log == []
    assert result.best_epoch == 0
    fresh = build_model(data.size, 1, 1.0, "mlp", seed=1)
    for (w1, _), (w2, _) in zip(result.model.predictor.layers, fresh.predictor.layers):
        assert np.array_equal(w1, w2)
    assert result.best_dev_map == pytest.approx(dev_map(fresh, data.dev, group_by="global"))


def test_training_is_deterministic():
    data = make_planted_task()
    a = train_task(data, TrainConfig(epochs=4, seed=3), d=1)
    b = train_task(data, TrainConfig(epochs=4, seed=3), d=1)
    assert [s.as_line() for s in a.log] == [s.as_line() for s in b.log]
    for (w1, _), (w2, _) in zip(a.model.predictor.layers, b.model.predictor.layers):
        assert np.array_equal(w1, w2)


def test_first_batch_loss_is_ln2_with_zero_predictors():
    data = make_planted_task()
    model = build_model(data.size, 1, 1.0, "mlp", seed=0)
    for net in (model.predictor, model.complement):
        for w, b in net.layers:
            w[:] = 0.0
            b[:] = 0.0
    from kgchains.game import predictor_step
    from kgchains.neural import AdamState

    batch = []
    rng = stream_rng(0, STREAM_SAMPLE)
    for inst in data.train[:20]:
        probs = generator_probs(model, inst)
        batch.append((inst, sample_mask(probs, inst.availability, rng)))
    lp, lc, acc_p, acc_c = predictor_step(
        model, batch, AdamState.for_params(model.predictor), AdamState.for_params(model.complement)
    )
    assert lp == pytest.approx(np.log(2), abs=1e-12)
    assert lc == pytest.approx(np.log(2), abs=1e-12)


def test_game_learns_planted_signal():
    data = make_planted_task()
    result = train_task(data, TrainConfig(epochs=120, seed=2, lr=0.01), d=1)
    scores_pos = [predict(result.model, i) for i in data.test if i.label == 1]
    scores_neg = [predict(result.model, i) for i in data.test if i.label == 0]
    assert np.mean(scores_pos) > np.mean(scores_neg) + 0.1


def test_predictor_only_mode():
    data = make_planted_task()
    result = train_predictor_only(data, TrainConfig(epochs=60, seed=2, lr=0.01))
    assert result.model.generator is None
    scores_pos = [predict(result.model, i) for i in data.test if i.label == 1]
    scores_neg = [predict(result.model, i) for i in data.test if i.label == 0]
    assert np.mean(scores_pos) > np.mean(scores_neg) + 0.2


def test_single_class_training_set_rejected():
    data = make_planted_task()
    only_pos = EncodedTask(
        "bad", data.size, [i for i in data.train if i.label == 1], data.dev, data.test
    )
    with pytest.raises(DataError):
        train_task(only_pos, TrainConfig(epochs=1, seed=0), d=1)


def test_sparsity_pressure_reduces_selection():
    data = make_planted_task()
    result = train_task(data, TrainConfig(epochs=6, seed=4, lr=0.01), d=1, lambda_s=4.0)
    sizes = [s.mean_selected for s in result.log]
    assert sizes[-1] <= sizes[0] + 0.2
