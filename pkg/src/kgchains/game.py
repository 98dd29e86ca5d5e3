"""Three-player selection game: generator, predictor, complement predictor.

Per training step the generator samples a hard chain subset for each
instance; both predictors take one cross-entropy Adam step on the selected
and complement encodings; the generator then takes a policy-gradient step
on the bounded reward

    R = acc_predictor - acc_complement - lambda_s * sparsity

with an exponential-moving-average baseline for variance reduction. At
inference the generator's top-d chains feed the predictor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .chains import EncodedTask, Instance, SelectionMask, mask_from_selected
from .errors import DataError, NumericError
from .metrics import group_results, map_score
from .neural import (
    AdamState,
    DenseParams,
    adam_step,
    add_grads,
    backward,
    clone_params,
    cross_entropy,
    forward,
    init_dense,
    linear_dims,
    mlp_dims,
    scale_grads,
    softmax,
    zero_grads,
)
from .util import STREAM_INIT, STREAM_SAMPLE, STREAM_SHUFFLE, batches, stream_rng

ARCH_MLP = "mlp"
ARCH_LINEAR = "linear"
MODE_GAME = "game"
MODE_ALL_CHAINS = "d_all"


@dataclass
class GameModel:
    input_dim: int
    d: int
    lambda_s: float
    predictor_arch: str
    mode: str
    predictor: DenseParams
    generator: DenseParams | None = None
    complement: DenseParams | None = None


@dataclass
class TrainConfig:
    epochs: int
    batch_size: int = 20
    lr: float = 0.001
    seed: int = 0
    baseline_momentum: float = 0.9
    mc_samples_per_instance: int = 1
    split_ratio: float = 0.8
    # Grouping for the per-epoch dev ranking used to pick the checkpoint.
    # Instance-level splitting scatters head groups, leaving mostly
    # singletons whose AP is 1 regardless of the model; a global ranking
    # keeps the selection signal informative.
    dev_group_by: str = "global"

    def __post_init__(self) -> None:
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not 0 <= self.baseline_momentum < 1:
            raise ValueError("baseline_momentum must be in [0, 1)")
        if self.mc_samples_per_instance < 1:
            raise ValueError("mc_samples_per_instance must be >= 1")


@dataclass
class EpochStats:
    epoch: int
    loss_p: float
    loss_c: float
    mean_reward: float
    mean_selected: float
    dev_map: float

    def as_line(self) -> str:
        return (
            f"{self.epoch}\t{self.loss_p:.6f}\t{self.loss_c:.6f}"
            f"\t{self.mean_reward:.6f}\t{self.mean_selected:.6f}\t{self.dev_map:.6f}"
        )


@dataclass
class TrainResult:
    model: GameModel
    log: list[EpochStats] = field(default_factory=list)
    best_epoch: int = 0
    best_dev_map: float = 0.0


def _predictor_dims(arch: str, input_dim: int) -> list[int]:
    if arch == ARCH_MLP:
        return mlp_dims(input_dim, 2)
    if arch == ARCH_LINEAR:
        return linear_dims(input_dim, 2)
    raise ValueError(f"unknown predictor architecture: {arch!r}")


def build_model(
    input_dim: int,
    d: int,
    lambda_s: float,
    predictor_arch: str = ARCH_MLP,
    seed: int = 0,
    mode: str = MODE_GAME,
) -> GameModel:
    """Fresh model; init draws happen generator, predictor, complement in order."""
    if input_dim < 1:
        raise DataError("empty vocabulary: cannot build a model")
    if d < 1:
        raise ValueError("d must be >= 1")
    if lambda_s < 0:
        raise ValueError("lambda_s must be >= 0")
    rng = stream_rng(seed, STREAM_INIT)
    generator = complement = None
    if mode == MODE_GAME:
        generator = init_dense(mlp_dims(input_dim, 2 * input_dim), rng)
    predictor = init_dense(_predictor_dims(predictor_arch, input_dim), rng)
    if mode == MODE_GAME:
        complement = init_dense(_predictor_dims(predictor_arch, input_dim), rng)
    return GameModel(
        input_dim=input_dim,
        d=d,
        lambda_s=lambda_s,
        predictor_arch=predictor_arch,
        mode=mode,
        predictor=predictor,
        generator=generator,
        complement=complement,
    )


def clone_model(model: GameModel) -> GameModel:
    return GameModel(
        input_dim=model.input_dim,
        d=model.d,
        lambda_s=model.lambda_s,
        predictor_arch=model.predictor_arch,
        mode=model.mode,
        predictor=clone_params(model.predictor),
        generator=clone_params(model.generator) if model.generator else None,
        complement=clone_params(model.complement) if model.complement else None,
    )


# -- generator ------------------------------------------------------------


def _generator_forward(model: GameModel, availability: np.ndarray):
    """Per-chain selection probabilities plus what backward needs.

    The generator maps the availability vector to 2*D logits, viewed as one
    (keep-out, select) pair per chain; the selection probability is the
    two-way softmax of each pair, forced to 0 where the chain is unavailable.
    """
    assert model.generator is not None
    out, cache = forward(model.generator, availability)
    rows = out.reshape(model.input_dim, 2)
    shifted = rows - rows.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    row_softmax = exp / exp.sum(axis=1, keepdims=True)
    probs = np.where(availability > 0, row_softmax[:, 1], 0.0)
    return probs, row_softmax, cache


def generator_probs(model: GameModel, instance: Instance) -> np.ndarray:
    probs, _, _ = _generator_forward(model, instance.availability)
    return probs


def sample_mask(
    probs: np.ndarray, availability: np.ndarray, rng: np.random.Generator
) -> SelectionMask:
    """Independent Bernoulli draw per position; unavailable chains stay 0."""
    draws = rng.random(len(probs))
    selected = ((draws < probs) & (availability > 0)).astype(np.float64)
    return mask_from_selected(availability, selected)


def select_top_d(probs: np.ndarray, availability: np.ndarray, d: int) -> SelectionMask:
    """Top-d available positions by probability, ties resolved to lower index."""
    avail_idx = np.flatnonzero(availability > 0)
    selected = np.zeros_like(availability)
    if len(avail_idx) <= d:
        selected[avail_idx] = 1.0
    else:
        order = np.argsort(-probs[avail_idx], kind="stable")
        selected[avail_idx[order[:d]]] = 1.0
    return mask_from_selected(availability, selected)


def sparsity_loss(mask: SelectionMask, d: int) -> float:
    """max{(|selected| - d) / |available|, 0}; 0 for instances with no chains."""
    available = mask.n_available
    if available == 0:
        return 0.0
    return max((mask.n_selected - d) / available, 0.0)


def selection_log_prob(probs: np.ndarray, availability: np.ndarray, mask: SelectionMask) -> float:
    """log pi(mask | probs) summed over available positions."""
    total = 0.0
    for j in np.flatnonzero(availability > 0):
        p = probs[j]
        total += math.log(p) if mask.selected[j] > 0 else math.log(1.0 - p)
    return total


def selection_grad(model: GameModel, instance: Instance, mask: SelectionMask):
    """Gradient of -log pi(mask) wrt the generator parameters.

    Each available chain contributes the two-way softmax cross-entropy
    gradient for its (keep-out, select) logit pair; unavailable chains
    contribute nothing, matching their forced zero probability.
    """
    probs, row_softmax, cache = _generator_forward(model, instance.availability)
    dout = np.zeros((model.input_dim, 2))
    for j in np.flatnonzero(instance.availability > 0):
        choice = 1 if mask.selected[j] > 0 else 0
        dout[j] = row_softmax[j]
        dout[j, choice] -= 1.0
    assert model.generator is not None
    return backward(model.generator, cache, dout.reshape(-1)), probs


# -- training steps --------------------------------------------------------


def predictor_step(
    model: GameModel,
    batch: list[tuple[Instance, SelectionMask]],
    state_p: AdamState,
    state_c: AdamState,
) -> tuple[float, float, list[int], list[int]]:
    """One Adam step for each predictor on its side of the masks.

    Returns batch-mean losses and per-instance 0/1 accuracy bits (argmax
    logit equals label), evaluated before the update.
    """
    assert model.complement is not None
    grads_p = zero_grads(model.predictor)
    grads_c = zero_grads(model.complement)
    loss_p = loss_c = 0.0
    acc_p: list[int] = []
    acc_c: list[int] = []
    for instance, mask in batch:
        logits, cache = forward(model.predictor, mask.selected)
        loss, dlogits = cross_entropy(logits, instance.label)
        loss_p += loss
        acc_p.append(int(int(np.argmax(logits)) == instance.label))
        add_grads(grads_p, backward(model.predictor, cache, dlogits))

        logits_c, cache_c = forward(model.complement, mask.complement)
        loss, dlogits_c = cross_entropy(logits_c, instance.label)
        loss_c += loss
        acc_c.append(int(int(np.argmax(logits_c)) == instance.label))
        add_grads(grads_c, backward(model.complement, cache_c, dlogits_c))
    n = len(batch)
    scale_grads(grads_p, 1.0 / n)
    scale_grads(grads_c, 1.0 / n)
    adam_step(model.predictor, grads_p, state_p)
    adam_step(model.complement, grads_c, state_c)
    return loss_p / n, loss_c / n, acc_p, acc_c


def instance_reward(model: GameModel, mask: SelectionMask, acc_p: int, acc_c: int) -> float:
    return acc_p - acc_c - model.lambda_s * sparsity_loss(mask, model.d)


def generator_step(
    model: GameModel,
    batch: list[tuple[Instance, SelectionMask]],
    acc_p: list[int],
    acc_c: list[int],
    baseline: float,
    state_g: AdamState,
    momentum: float,
) -> tuple[float, float]:
    """REINFORCE step on the generator; returns (updated baseline, mean reward).

    The estimator is -mean_i (R_i - baseline) * grad log pi(mask_i); the
    baseline is updated afterwards as an EMA of the batch-mean reward.
    """
    assert model.generator is not None
    total = zero_grads(model.generator)
    rewards = []
    for (instance, mask), ap, ac in zip(batch, acc_p, acc_c):
        reward = instance_reward(model, mask, ap, ac)
        rewards.append(reward)
        advantage = reward - baseline
        if advantage == 0.0:
            continue
        grads, _ = selection_grad(model, instance, mask)
        # selection_grad returns d(-log pi); the loss is -A * log pi.
        add_grads(total, grads, scale=advantage)
    scale_grads(total, 1.0 / len(batch))
    adam_step(model.generator, total, state_g)
    mean_reward = float(np.mean(rewards))
    new_baseline = momentum * baseline + (1.0 - momentum) * mean_reward
    return new_baseline, mean_reward


# -- inference -------------------------------------------------------------


def predict(model: GameModel, instance: Instance, d: int | None = None) -> float:
    """Positive-class confidence from the predictor on the top-d selection.

    In all-chains mode the predictor scores the full availability vector.
    """
    if model.mode == MODE_ALL_CHAINS or model.generator is None:
        selected = instance.availability
    else:
        probs = generator_probs(model, instance)
        selected = select_top_d(probs, instance.availability, model.d if d is None else d).selected
    logits, _ = forward(model.predictor, selected)
    return float(softmax(logits)[1])


def dev_map(
    model: GameModel,
    instances: list[Instance],
    d: int | None = None,
    group_by: str = "head",
) -> float:
    """MAP over dev groups; 0.0 when no group has a positive."""
    if not instances:
        return 0.0
    scores = [predict(model, inst, d) for inst in instances]
    groups = group_results([i.head for i in instances], scores, [i.label for i in instances], group_by)
    try:
        return map_score(groups)
    except DataError:
        return 0.0


def _dev_quality(
    model: GameModel, instances: list[Instance], group_by: str
) -> tuple[float, float]:
    """(dev MAP, -dev cross-entropy) for checkpoint selection.

    Small dev rankings saturate quickly, so exact MAP ties are common; the
    cross-entropy of the predictor on its inference-time inputs keeps
    discriminating between equally-ranked checkpoints.
    """
    if not instances:
        return 0.0, 0.0
    total = 0.0
    for inst in instances:
        if model.mode == MODE_ALL_CHAINS or model.generator is None:
            selected = inst.availability
        else:
            probs = generator_probs(model, inst)
            selected = select_top_d(probs, inst.availability, model.d).selected
        logits, _ = forward(model.predictor, selected)
        loss, _ = cross_entropy(logits, inst.label)
        total += loss
    return dev_map(model, instances, group_by=group_by), -total / len(instances)


# -- training loops ---------------------------------------------------------


def _check_trainable(train: list[Instance]) -> None:
    labels = {inst.label for inst in train}
    if not train or labels != {0, 1}:
        raise DataError("training set must contain at least one positive and one negative")


def train_task(
    data: EncodedTask,
    config: TrainConfig,
    d: int,
    predictor_arch: str = ARCH_MLP,
    lambda_s: float = 1.0,
) -> TrainResult:
    """Full three-player training; returns the best-dev-MAP checkpoint.

    Per epoch: shuffle, then for each mini-batch sample masks from the
    generator, update both predictors, update the generator. Ties in dev
    MAP keep the earlier epoch.
    """
    _check_trainable(data.train)
    model = build_model(data.size, d, lambda_s, predictor_arch, config.seed, MODE_GAME)
    state_p = AdamState.for_params(model.predictor, config.lr)
    state_c = AdamState.for_params(model.complement, config.lr)
    state_g = AdamState.for_params(model.generator, config.lr)
    rng_shuffle = stream_rng(config.seed, STREAM_SHUFFLE)
    rng_sample = stream_rng(config.seed, STREAM_SAMPLE)

    baseline = 0.0
    best = clone_model(model)
    best_quality = _dev_quality(model, data.dev, config.dev_group_by)
    best_epoch = 0
    log: list[EpochStats] = []

    for epoch in range(1, config.epochs + 1):
        order = rng_shuffle.permutation(len(data.train))
        sum_lp = sum_lc = sum_reward = sum_selected = 0.0
        n_steps = n_samples = 0
        for batch_idx in batches(order.tolist(), config.batch_size):
            batch: list[tuple[Instance, SelectionMask]] = []
            for i in batch_idx:
                instance = data.train[i]
                probs = generator_probs(model, instance)
                for _ in range(config.mc_samples_per_instance):
                    mask = sample_mask(probs, instance.availability, rng_sample)
                    batch.append((instance, mask))
            lp, lc, acc_p, acc_c = predictor_step(model, batch, state_p, state_c)
            if not (np.isfinite(lp) and np.isfinite(lc)):
                raise NumericError(f"non-finite predictor loss at epoch {epoch}")
            baseline, mean_reward = generator_step(
                model, batch, acc_p, acc_c, baseline, state_g, config.baseline_momentum
            )
            sum_lp += lp
            sum_lc += lc
            sum_reward += mean_reward
            sum_selected += sum(mask.n_selected for _, mask in batch)
            n_steps += 1
            n_samples += len(batch)
        quality = _dev_quality(model, data.dev, config.dev_group_by)
        log.append(
            EpochStats(
                epoch=epoch,
                loss_p=sum_lp / n_steps,
                loss_c=sum_lc / n_steps,
                mean_reward=sum_reward / n_steps,
                mean_selected=sum_selected / n_samples,
                dev_map=quality[0],
            )
        )
        if quality > best_quality:
            best = clone_model(model)
            best_quality = quality
            best_epoch = epoch
    return TrainResult(model=best, log=log, best_epoch=best_epoch, best_dev_map=best_quality[0])


def train_predictor_only(data: EncodedTask, config: TrainConfig) -> TrainResult:
    """All-chains mode: supervised predictor on full availability, no game."""
    _check_trainable(data.train)
    model = build_model(data.size, 1, 0.0, ARCH_MLP, config.seed, MODE_ALL_CHAINS)
    state_p = AdamState.for_params(model.predictor, config.lr)
    rng_shuffle = stream_rng(config.seed, STREAM_SHUFFLE)

    best = clone_model(model)
    best_quality = _dev_quality(model, data.dev, config.dev_group_by)
    best_epoch = 0
    log: list[EpochStats] = []

    for epoch in range(1, config.epochs + 1):
        order = rng_shuffle.permutation(len(data.train))
        sum_lp = 0.0
        sum_avail = 0.0
        n_steps = 0
        for batch_idx in batches(order.tolist(), config.batch_size):
            grads = zero_grads(model.predictor)
            loss_sum = 0.0
            for i in batch_idx:
                instance = data.train[i]
                logits, cache = forward(model.predictor, instance.availability)
                loss, dlogits = cross_entropy(logits, instance.label)
                loss_sum += loss
                sum_avail += instance.n_available
                add_grads(grads, backward(model.predictor, cache, dlogits))
            scale_grads(grads, 1.0 / len(batch_idx))
            adam_step(model.predictor, grads, state_p)
            lp = loss_sum / len(batch_idx)
            if not np.isfinite(lp):
                raise NumericError(f"non-finite predictor loss at epoch {epoch}")
            sum_lp += lp
            n_steps += 1
        quality = _dev_quality(model, data.dev, config.dev_group_by)
        log.append(
            EpochStats(
                epoch=epoch,
                loss_p=sum_lp / n_steps,
                loss_c=0.0,
                mean_reward=0.0,
                mean_selected=sum_avail / len(data.train),
                dev_map=quality[0],
            )
        )
        if quality > best_quality:
            best = clone_model(model)
            best_quality = quality
            best_epoch = epoch
    return TrainResult(model=best, log=log, best_epoch=best_epoch, best_dev_map=best_quality[0])


def train_fixed_generator(
    data: EncodedTask,
    config: TrainConfig,
    generator: DenseParams,
    d: int,
    predictor_arch: str = ARCH_MLP,
) -> TrainResult:
    """Train a fresh predictor on deterministic top-d selections from a frozen generator."""
    _check_trainable(data.train)
    rng = stream_rng(config.seed, STREAM_INIT, 2)
    model = GameModel(
        input_dim=data.size,
        d=d,
        lambda_s=0.0,
        predictor_arch=predictor_arch,
        mode=MODE_GAME,
        predictor=init_dense(_predictor_dims(predictor_arch, data.size), rng),
        generator=clone_params(generator),
        complement=None,
    )
    state_p = AdamState.for_params(model.predictor, config.lr)
    rng_shuffle = stream_rng(config.seed, STREAM_SHUFFLE, 2)

    selections = [
        select_top_d(generator_probs(model, inst), inst.availability, d).selected
        for inst in data.train
    ]

    best = clone_model(model)
    best_quality = _dev_quality(model, data.dev, config.dev_group_by)
    best_epoch = 0
    log: list[EpochStats] = []

    for epoch in range(1, config.epochs + 1):
        order = rng_shuffle.permutation(len(data.train))
        sum_lp = 0.0
        sum_sel = 0.0
        n_steps = 0
        for batch_idx in batches(order.tolist(), config.batch_size):
            grads = zero_grads(model.predictor)
            loss_sum = 0.0
            for i in batch_idx:
                instance = data.train[i]
                logits, cache = forward(model.predictor, selections[i])
                loss, dlogits = cross_entropy(logits, instance.label)
                loss_sum += loss
                sum_sel += float(selections[i].sum())
                add_grads(grads, backward(model.predictor, cache, dlogits))
            scale_grads(grads, 1.0 / len(batch_idx))
            adam_step(model.predictor, grads, state_p)
            lp = loss_sum / len(batch_idx)
            if not np.isfinite(lp):
                raise NumericError(f"non-finite predictor loss at epoch {epoch}")
            sum_lp += lp
            n_steps += 1
        quality = _dev_quality(model, data.dev, config.dev_group_by)
        log.append(
            EpochStats(
                epoch=epoch,
                loss_p=sum_lp / n_steps,
                loss_c=0.0,
                mean_reward=0.0,
                mean_selected=sum_sel / len(data.train),
                dev_map=quality[0],
            )
        )
        if quality > best_quality:
            best = clone_model(model)
            best_quality = quality
            best_epoch = epoch
    return TrainResult(model=best, log=log, best_epoch=best_epoch, best_dev_map=best_quality[0])
