"""Deterministic stand-in for candidate training, for search and budget tests."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Union

import numpy as np

from ..archmodel import Architecture
from .train import EvalResult

Seconds = Union[float, Callable[[Architecture], float]]


@dataclass
class SurrogateSpec:
    """Score surface over the (k, c) plane.

    ``table`` maps (k, c) to a score; points missing from it score
    ``default``. ``noise`` adds a seeded uniform perturbation in
    [-noise, noise] that is fixed per (seed, k, c). ``seconds`` is the fake
    duration of one evaluation, constant or a function of the architecture.
    """

    table: dict = field(default_factory=dict)
    default: float = 0.0
    noise: float = 0.0
    seed: int = 0
    seconds: Seconds = 0.0
    steps: int = 1
    function: Optional[Callable[[int, int], float]] = None

    def score(self, arch: Architecture) -> float:
        if self.function is not None:
            base = float(self.function(arch.k, arch.c))
        else:
            base = float(self.table.get((arch.k, arch.c), self.default))
        if self.noise:
            rng = np.random.default_rng([self.seed, arch.k, arch.c])
            base += rng.uniform(-self.noise, self.noise)
        return min(1.0, max(0.0, base))

    def duration(self, arch: Architecture) -> float:
        return float(self.seconds(arch)) if callable(self.seconds) else float(self.seconds)

    @classmethod
    def from_json(cls, source) -> "SurrogateSpec":
        """Load ``{"default": .., "noise": .., "seconds": .., "scores": [[k, c, s], ..]}``."""
        if isinstance(source, (str, Path)) and Path(source).exists():
            doc = json.loads(Path(source).read_text())
        elif isinstance(source, dict):
            doc = source
        else:
            doc = json.loads(source)
        table = {(int(k), int(c)): float(s) for k, c, s in doc.get("scores", [])}
        return cls(
            table=table,
            default=float(doc.get("default", 0.0)),
            noise=float(doc.get("noise", 0.0)),
            seed=int(doc.get("seed", 0)),
            seconds=float(doc.get("seconds", 0.0)),
            steps=int(doc.get("steps", 1)),
        )


def surrogate_evaluate(arch: Architecture, surface: SurrogateSpec, clock=None,
                       should_stop=None) -> EvalResult:
    """Score ``arch`` from the surface, advancing ``clock`` by the fake duration.

    The duration is consumed in ``surface.steps`` equal slices with a stop
    check between slices, mimicking batch-boundary aborts of real training.
    """
    total = surface.duration(arch)
    steps = max(1, surface.steps)
    for i in range(steps):
        if i and should_stop is not None and should_stop():
            return EvalResult(0.0, total * i / steps, 0, epochs_completed=0, aborted=True)
        if clock is not None and total:
            clock.advance(total / steps)
    return EvalResult(surface.score(arch), total, 0, epochs_completed=1)


class SurrogateEvaluator:
    def __init__(self, surface: SurrogateSpec, clock=None):
        self.surface = surface
        self.clock = clock
        self.calls = 0

    @property
    def seed(self) -> int:
        return self.surface.seed

    def __call__(self, arch: Architecture, should_stop=None) -> EvalResult:
        self.calls += 1
        return surrogate_evaluate(arch, self.surface, self.clock, should_stop)
