"""Candidate evaluation (quick training) and final training of the winner."""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from ..archmodel import Architecture, expand
from ..dataio import Dataset, augment, split
from .model import Adam, Network, backward, retained_bytes

ShouldStop = Optional[Callable[[], object]]


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 3
    val_split: float = 0.3
    batch_size: int = 16
    learning_rate: float = 1e-3
    seed: int = 0
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-7
    augment: bool = False
    rotate: bool = False
    checkpoint_on_val: bool = True
    bn_momentum: float = 0.99
    bn_eps: float = 1e-3

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if not 0 < self.val_split < 1:
            raise ValueError(f"val_split must be in (0, 1), got {self.val_split}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if not self.learning_rate > 0:
            raise ValueError(f"learning_rate must be > 0, got {self.learning_rate}")

    def with_(self, **changes) -> "TrainConfig":
        return replace(self, **changes)


# Candidate scoring: 3 epochs for images, 50 for time series.
QUICK_IMAGE = TrainConfig(epochs=3, val_split=0.3, batch_size=16, learning_rate=1e-3)
QUICK_TIMESERIES = QUICK_IMAGE.with_(epochs=50)
# Winner training with validation checkpointing.
FINAL_IMAGE = TrainConfig(epochs=100, val_split=0.1, batch_size=128, learning_rate=1e-2,
                          augment=True, rotate=True, checkpoint_on_val=True)
FINAL_TIMESERIES = FINAL_IMAGE.with_(epochs=500, augment=False, rotate=False)


@dataclass(frozen=True)
class EvalResult:
    val_accuracy: float
    train_seconds: float
    peak_mem_bytes: int
    epochs_completed: int = 0
    aborted: bool = False
    history: tuple = ()

    def __post_init__(self):
        if not 0.0 <= self.val_accuracy <= 1.0:
            raise ValueError(f"accuracy out of range: {self.val_accuracy}")


@dataclass
class FinalResult:
    network: Network
    best_val_accuracy: float
    best_epoch: int
    test_accuracy: Optional[float]
    history: list = field(default_factory=list)
    train_seconds: float = 0.0
    aborted: bool = False


def accuracy(net: Network, data: Dataset, batch_size: int = 256) -> float:
    if not len(data):
        raise ValueError("cannot score an empty dataset")
    probs = net.predict(data.x, batch_size)
    return float(np.mean(probs.argmax(axis=1) == data.y))


def _fit(net: Network, train: Dataset, val: Dataset, cfg: TrainConfig,
         should_stop: ShouldStop, clock):
    opt = Adam(net.params, cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps)
    order_rng = np.random.default_rng([cfg.seed, 1])
    aug_rng = np.random.default_rng([cfg.seed, 2])
    lo = train.value_range[0]
    param_bytes = sum(p.nbytes for p in net.params.values())
    static_bytes = 2 * param_bytes + opt.state_bytes() + sum(s.nbytes for s in net.state.values())
    peak = static_bytes
    history, best_acc, best_epoch, best_net = [], -1.0, 0, None
    aborted = False
    t0 = clock()
    for epoch in range(1, cfg.epochs + 1):
        perm = order_rng.permutation(len(train))
        for start in range(0, len(perm), cfg.batch_size):
            if should_stop is not None and should_stop():
                aborted = True
                break
            idx = perm[start:start + cfg.batch_size]
            xb = train.x[idx].astype(net.dtype)
            if cfg.augment:
                xb = augment(xb, flip=True, rotate=cfg.rotate, rng=aug_rng, fill=lo)
            _, cache = net.forward(xb, train=True)
            _, grads = backward(net.topology, cache, train.y[idx])
            live = retained_bytes(cache, net.params)
            upstream = max(c[3].nbytes for c in cache["caches"])
            peak = max(peak, static_bytes + live + upstream)
            del cache
            opt.step(net.params, grads)
        if aborted:
            break
        acc = accuracy(net, val)
        history.append(acc)
        if acc > best_acc:
            best_acc, best_epoch = acc, epoch
            if cfg.checkpoint_on_val:
                best_net = net.copy()
    return {
        "history": history,
        "best_acc": max(best_acc, 0.0),
        "best_epoch": best_epoch,
        "best_net": best_net,
        "peak": int(peak),
        "aborted": aborted,
        "seconds": clock() - t0,
    }


def quick_evaluate(arch: Architecture, dataset: Dataset, cfg: TrainConfig = QUICK_IMAGE,
                   should_stop: ShouldStop = None, clock=time.perf_counter) -> EvalResult:
    """Train briefly and report the best validation accuracy seen across epochs.

    If ``should_stop`` fires at a batch boundary the result is marked
    ``aborted`` and carries the best accuracy of the completed epochs.
    """
    train, val = split(dataset, cfg.val_split, cfg.seed)
    topo = expand(arch, dataset.shape, dataset.num_classes)
    net = Network.init(topo, dataset.value_range, cfg.seed,
                       bn_momentum=cfg.bn_momentum, bn_eps=cfg.bn_eps)
    fit = _fit(net, train, val, cfg, should_stop, clock)
    return EvalResult(
        val_accuracy=fit["best_acc"],
        train_seconds=fit["seconds"],
        peak_mem_bytes=fit["peak"],
        epochs_completed=len(fit["history"]),
        aborted=fit["aborted"],
        history=tuple(fit["history"]),
    )


def final_train(arch: Architecture, dataset: Dataset, cfg: TrainConfig = FINAL_IMAGE,
                test: Optional[Dataset] = None, should_stop: ShouldStop = None,
                clock=time.perf_counter) -> FinalResult:
    train, val = split(dataset, cfg.val_split, cfg.seed)
    topo = expand(arch, dataset.shape, dataset.num_classes)
    net = Network.init(topo, dataset.value_range, cfg.seed,
                       bn_momentum=cfg.bn_momentum, bn_eps=cfg.bn_eps)
    fit = _fit(net, train, val, cfg, should_stop, clock)
    chosen = fit["best_net"] if fit["best_net"] is not None else net
    test_acc = accuracy(chosen, test) if test is not None and len(test) else None
    return FinalResult(
        network=chosen,
        best_val_accuracy=fit["best_acc"],
        best_epoch=fit["best_epoch"],
        test_accuracy=test_acc,
        history=fit["history"],
        train_seconds=fit["seconds"],
        aborted=fit["aborted"],
    )


class TrainingEvaluator:
    """Callable evaluator backed by :func:`quick_evaluate`."""

    def __init__(self, dataset: Dataset, cfg: TrainConfig = QUICK_IMAGE, clock=time.perf_counter):
        self.dataset = dataset
        self.cfg = cfg
        self.clock = clock
        self.calls = 0

    @property
    def seed(self) -> int:
        return self.cfg.seed

    def __call__(self, arch: Architecture, should_stop: ShouldStop = None) -> EvalResult:
        self.calls += 1
        return quick_evaluate(arch, self.dataset, self.cfg, should_stop, self.clock)
