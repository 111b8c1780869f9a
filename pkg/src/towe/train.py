"""Optimization loop: masked cross-entropy, Adam, early stopping, multi-seed runs.

Training is single-example (no batching).  One seed drives two independent
random streams derived from numpy's SeedSequence: parameter initialization
and the per-epoch shuffle; nothing else is random.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np

from .encoding import EncodedInput
from .errors import NumericsError, ToweError
from .evaluate import EvalReport, decode_spans, micro_f1
from .model import (
    Hyperparameters,
    Parameters,
    backward,
    features_for,
    forward,
    init_parameters,
    predict_word_labels,
    sequence_loss,
)

Pair = tuple  # (SentenceExample, EncodedInput)


def cross_entropy_loss(trace, enc: EncodedInput) -> float:
    """Mean -log p(true label) over loss-masked positions; 0 with none labeled."""
    return sequence_loss(trace, enc)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    max_epochs: int = 50
    patience: int = 5
    eval_every: int = 1
    seeds: tuple[int, ...] = (1, 2, 3, 4, 5)
    variant: str = "SA"
    mask_aspect: bool = False

    def __post_init__(self) -> None:
        if self.learning_rate <= 0:
            raise ToweError("learning rate must be > 0")
        if self.patience < 1:
            raise ToweError("patience must be >= 1")
        if self.max_epochs < 1 or self.eval_every < 1:
            raise ToweError("max_epochs and eval_every must be >= 1")
        if not self.seeds:
            raise ToweError("at least one seed is required")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ToweError("betas must lie in [0, 1)")


@dataclass
class AdamState:
    m: Parameters
    v: Parameters

    @classmethod
    def init(cls, params: Parameters) -> "AdamState":
        return cls(m=Parameters.zeros_like(params), v=Parameters.zeros_like(params))


def adam_step(
    params: Parameters,
    grads: Parameters,
    state: AdamState,
    config: TrainConfig,
    t: int,
) -> tuple[Parameters, AdamState]:
    """One bias-corrected Adam update.  Pure: inputs are left untouched."""
    if t < 1:
        raise ToweError("Adam step index t must be >= 1")
    if not grads.all_finite():
        raise NumericsError(f"non-finite gradient at step {t}")
    b1, b2 = config.beta1, config.beta2
    lr, eps = config.learning_rate, config.epsilon
    new_p, new_m, new_v = {}, {}, {}
    for name, p in params.arrays():
        g = getattr(grads, name)
        m = b1 * getattr(state.m, name) + (1 - b1) * g
        v = b2 * getattr(state.v, name) + (1 - b2) * g * g
        m_hat = m / (1 - b1**t)
        v_hat = v / (1 - b2**t)
        new_p[name] = p - lr * m_hat / (np.sqrt(v_hat) + eps)
        new_m[name] = m
        new_v[name] = v
    updated = Parameters(**new_p)
    if not updated.all_finite():
        raise NumericsError(f"non-finite parameter after step {t}")
    return updated, AdamState(m=Parameters(**new_m), v=Parameters(**new_v))


@dataclass
class TrainHistory:
    train_loss: list[float] = field(default_factory=list)
    eval_epochs: list[int] = field(default_factory=list)
    dev_f1: list[float] = field(default_factory=list)
    best_epoch: int = 0
    best_dev_f1: float = -1.0
    checkpoint_path: str | None = None

    def as_dict(self) -> dict:
        return {
            "train_loss": self.train_loss,
            "eval_epochs": self.eval_epochs,
            "dev_f1": self.dev_f1,
            "best_epoch": self.best_epoch,
            "best_dev_f1": self.best_dev_f1,
            "checkpoint_path": self.checkpoint_path,
        }


def evaluate_model(
    pairs: Sequence[Pair],
    params: Parameters,
    hp: Hyperparameters,
    features: Mapping[str, np.ndarray] | None = None,
) -> EvalReport:
    """Predict every example, decode spans, and score against the gold spans."""
    predictions, gold, ids = [], [], []
    for example, enc in pairs:
        feats = features_for(features, example.id, enc, hp)
        labels = predict_word_labels(enc, params, hp, feats)
        predictions.append(decode_spans(labels))
        gold.append(list(example.opinion_spans))
        ids.append(example.id)
    return micro_f1(predictions, gold, ids=ids, gold_ids=ids)


def _epoch_order(rng: np.random.Generator, n: int) -> list[int]:
    return [int(i) for i in rng.permutation(n)]


def train_one(
    train_pairs: Sequence[Pair],
    dev_pairs: Sequence[Pair],
    hp: Hyperparameters,
    config: TrainConfig,
    seed: int,
    features: Mapping[str, np.ndarray] | None = None,
    log=None,
) -> tuple[Parameters, TrainHistory]:
    """Train on one seed, early-stopping on dev micro-F1.

    The seed feeds two SeedSequence-derived streams: parameter init (the
    root) and epoch shuffling (spawn key 1).  Evaluation happens every
    ``eval_every`` epochs and at the final epoch; the best-dev parameters
    are returned.
    """
    if not train_pairs or not dev_pairs:
        raise ToweError("train and dev sets must be non-empty")
    params = init_parameters(replace(hp, seed=seed))
    shuffle_rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(1,)))
    state = AdamState.init(params)
    history = TrainHistory()
    best_params = params.copy()
    stale = 0
    t_step = 0

    feats_cache = [
        features_for(features, ex.id, enc, hp) for ex, enc in train_pairs
    ]
    for epoch in range(1, config.max_epochs + 1):
        order = _epoch_order(shuffle_rng, len(train_pairs))
        total = 0.0
        for idx in order:
            _, enc = train_pairs[idx]
            trace = forward(enc, params, hp, feats_cache[idx])
            total += cross_entropy_loss(trace, enc)
            grads = backward(trace, enc, params, hp)
            t_step += 1
            try:
                params, state = adam_step(params, grads, state, config, t_step)
            except NumericsError as exc:
                raise NumericsError(
                    f"seed {seed}, epoch {epoch}, example {train_pairs[idx][0].id!r}: {exc}"
                ) from exc
        epoch_loss = total / len(train_pairs)
        history.train_loss.append(epoch_loss)

        if epoch % config.eval_every == 0 or epoch == config.max_epochs:
            report = evaluate_model(dev_pairs, params, hp, features)
            history.eval_epochs.append(epoch)
            history.dev_f1.append(report.f1)
            if log is not None:
                log({"epoch": epoch, "train_loss": epoch_loss, "dev_f1": report.f1})
            if report.f1 > history.best_dev_f1:
                history.best_dev_f1 = report.f1
                history.best_epoch = epoch
                best_params = params.copy()
                stale = 0
            else:
                stale += 1
                if stale >= config.patience:
                    break
        elif log is not None:
            log({"epoch": epoch, "train_loss": epoch_loss})
    return best_params, history


@dataclass
class RunResult:
    seed: int
    params: Parameters
    history: TrainHistory
    test_report: EvalReport | None = None


@dataclass
class MultiRunResult:
    runs: list[RunResult]

    @property
    def test_f1s(self) -> list[float]:
        return [r.test_report.f1 for r in self.runs if r.test_report is not None]

    @property
    def mean_test_f1(self) -> float:
        f1s = self.test_f1s
        if not f1s:
            raise ToweError("no test evaluations recorded")
        return sum(f1s) / len(f1s)


def train_multi(
    train_pairs: Sequence[Pair],
    dev_pairs: Sequence[Pair],
    test_pairs: Sequence[Pair] | None,
    hp: Hyperparameters,
    config: TrainConfig,
    features: Mapping[str, np.ndarray] | None = None,
    log=None,
) -> MultiRunResult:
    """Run train_one per seed; any seed's failure aborts the whole protocol."""
    runs = []
    for seed in config.seeds:
        seed_log = None
        if log is not None:
            seed_log = lambda record, _s=seed: log({"seed": _s, **record})
        params, history = train_one(
            train_pairs, dev_pairs, hp, config, seed, features=features, log=seed_log
        )
        report = None
        if test_pairs:
            report = evaluate_model(test_pairs, params, hp, features)
        runs.append(RunResult(seed=seed, params=params, history=history, test_report=report))
    return MultiRunResult(runs=runs)
