"""Bi-level derivative-free search over a (cropped) search space.

The inner level scans c for a fixed k; the outer level proposes
``k_bar = k + floor(k / 2**beta)`` from the last confirmed k, with beta
growing by one after every rejection once the first rejection happened.
The search stops when that increment reaches zero or the watchdog fires.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

from .archmodel import Architecture
from .budget import wh
from .spacegen import SearchSpace

log = logging.getLogger(__name__)

INCREMENT_ZERO = "increment_zero"
STOP_REASONS = (INCREMENT_ZERO, "time_budget", "energy_budget")


class BudgetStop(Exception):
    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason


class EvalCache:
    """Memoized evaluation results keyed by (k, c, seed)."""

    def __init__(self, enabled: bool = True):
        self.enabled = enabled
        self._store: dict = {}
        self.hits = 0
        self.misses = 0

    def get(self, arch: Architecture, seed):
        if not self.enabled:
            return None
        return self._store.get((arch.k, arch.c, seed))

    def put(self, arch: Architecture, seed, result) -> None:
        if self.enabled and not result.aborted:
            self._store[(arch.k, arch.c, seed)] = result

    def __len__(self) -> int:
        return len(self._store)


@dataclass(frozen=True)
class Evaluation:
    arch: Architecture
    score: float
    wall_seconds: float
    energy_wh: float
    aborted: bool = False

    def to_dict(self) -> dict:
        return {"k": self.arch.k, "c": self.arch.c, "score": self.score,
                "wall_seconds": self.wall_seconds, "energy_wh": self.energy_wh,
                "aborted": self.aborted}


@dataclass
class SearchTrace:
    evaluations: list = field(default_factory=list)
    confirmations: list = field(default_factory=list)
    proposals: list = field(default_factory=list)
    outer_iterations: int = 0
    first_rejection_iteration: Optional[int] = None
    stop_reason: Optional[str] = None
    seed: Optional[int] = None
    # proposals whose (k_bar, 0) was not in the space, counted as rejections
    outside_proposals: int = 0
    space_exhausted: bool = False

    @property
    def completed(self) -> list:
        return [e for e in self.evaluations if not e.aborted]

    def distinct_evaluated(self) -> set:
        return {e.arch for e in self.completed}

    def explored_fraction(self, space: SearchSpace) -> Optional[float]:
        return len(self.distinct_evaluated()) / len(space) if len(space) else None

    def to_dict(self) -> dict:
        return {
            "evaluations": [e.to_dict() for e in self.evaluations],
            "confirmations": [{"k": a.k, "c": a.c, "score": s} for a, s in self.confirmations],
            "proposals": list(self.proposals),
            "outer_iterations": self.outer_iterations,
            "first_rejection_iteration": self.first_rejection_iteration,
            "stop_reason": self.stop_reason,
            "seed": self.seed,
            "outside_proposals": self.outside_proposals,
            "space_exhausted": self.space_exhausted,
        }


def evaluate_cached(arch: Architecture, evaluator, cache: Optional[EvalCache],
                    should_stop=None):
    """Return (result, fresh) where ``fresh`` is False on a cache hit."""
    seed = getattr(evaluator, "seed", None)
    if cache is not None:
        hit = cache.get(arch, seed)
        if hit is not None:
            cache.hits += 1
            return hit, False
        cache.misses += 1
    result = evaluator(arch, should_stop) if should_stop is not None else evaluator(arch)
    if cache is not None:
        cache.put(arch, seed, result)
    return result, True


class _Runner:
    def __init__(self, space, evaluator, watchdog, cache, power_watts, trace):
        self.space = space
        self.evaluator = evaluator
        self.watchdog = watchdog
        self.cache = cache
        self.power = power_watts
        self.trace = trace
        self.scores: dict = {}

    def poll(self) -> Optional[str]:
        return self.watchdog.poll() if self.watchdog is not None else None

    def score(self, arch: Architecture) -> float:
        reason = self.poll()
        if reason is not None:
            raise BudgetStop(reason)
        if self.watchdog is not None:
            self.watchdog.log_status(f"eval {arch}")
        result, fresh = evaluate_cached(arch, self.evaluator, self.cache,
                                        self.poll if self.watchdog is not None else None)
        if fresh:
            self.trace.evaluations.append(Evaluation(
                arch, result.val_accuracy, result.train_seconds,
                wh(result.train_seconds, self.power) if self.power else 0.0, result.aborted,
            ))
        if result.aborted:
            raise BudgetStop(self.poll() or "time_budget")
        self.scores[arch] = result.val_accuracy
        return result.val_accuracy


def inner_scan(k_bar: int, space: SearchSpace, evaluator, cache=None, watchdog=None,
               _runner: Optional[_Runner] = None, _partial: Optional[list] = None):
    """Best c for a fixed k_bar: scan c = 0, 1, ... while (k_bar, c) is in the space.

    Ties keep the smaller c. On a budget stop the best point scanned so far
    is left in ``_partial`` and :class:`BudgetStop` propagates.
    """
    if Architecture(k_bar, 0) not in space:
        raise ValueError(f"({k_bar},0) is not in the search space")
    runner = _runner or _Runner(space, evaluator, watchdog, cache, 0.0, SearchTrace())
    best_c = 0
    best = runner.score(Architecture(k_bar, 0))
    if _partial is not None:
        _partial[:] = [best_c, best]
    c = 0
    while Architecture(k_bar, c + 1) in space:
        s = runner.score(Architecture(k_bar, c + 1))
        if s > best:
            best_c, best = c + 1, s
            if _partial is not None:
                _partial[:] = [best_c, best]
        c += 1
    return best_c, best


def run_search(space: SearchSpace, evaluator, watchdog=None, cache: Optional[EvalCache] = None,
               power_watts: float = 0.0) -> tuple[Architecture, SearchTrace]:
    if Architecture(1, 0) not in space:
        raise ValueError("search space must contain (1,0)")
    trace = SearchTrace(seed=getattr(evaluator, "seed", None))
    runner = _Runner(space, evaluator, watchdog, EvalCache() if cache is None else cache,
                     power_watts, trace)
    k, c = 1, 0
    best: Optional[float] = None
    beta, gamma = 0, 0
    k_bar = k
    try:
        while True:
            trace.outer_iterations += 1
            trace.proposals.append(k_bar)
            if Architecture(k_bar, 0) in space:
                partial: list = []
                try:
                    c_star, s = inner_scan(k_bar, space, evaluator, _runner=runner,
                                           _partial=partial)
                except BudgetStop:
                    if partial and (best is None or partial[1] > best):
                        k, c, best = k_bar, partial[0], partial[1]
                        trace.confirmations.append((Architecture(k, c), best))
                    raise
                if best is None:
                    # the starting point (1,0) is scored by the first scan
                    best = runner.scores[Architecture(1, 0)]
                    trace.confirmations.append((Architecture(1, 0), best))
                improved = s > best
            else:
                trace.outside_proposals += 1
                improved = False
            if improved:
                k, c, best = k_bar, c_star, s
                trace.confirmations.append((Architecture(k, c), best))
                log.info("confirmed %s score=%.6f", Architecture(k, c), best)
            else:
                if not gamma:
                    trace.first_rejection_iteration = trace.outer_iterations
                gamma = 1
            beta += gamma
            increment = k >> beta
            k_bar = k + increment
            if increment == 0:
                trace.stop_reason = INCREMENT_ZERO
                break
    except BudgetStop as stop:
        trace.stop_reason = stop.reason
        log.info("search stopped by %s", stop.reason)
    trace.space_exhausted = len(trace.distinct_evaluated()) == len(space)
    return Architecture(k, c), trace
