"""Search-space generation: the extensive edge-feasible space and its budget crop."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace
from typing import Iterable, Iterator, Optional

from .archmodel import Architecture, InputShape, expand, max_cells
from .budget import Clock, wh
from .costmodel import OverheadConfig, ResourceProfile, profile


class InfeasibleCalibration(RuntimeError):
    """The largest candidate cannot be trained within the gateway memory bound."""


@dataclass(frozen=True)
class ConstraintSet:
    xi_ram_bytes: float = math.inf
    xi_flash_bytes: float = math.inf
    xi_mac: float = math.inf
    xi_mem_bytes: float = math.inf
    xi_time_seconds: float = math.inf
    xi_energy_wh: float = math.inf
    w_bar_watts: float = 1.0

    def __post_init__(self):
        for name in ("xi_ram_bytes", "xi_flash_bytes", "xi_mac", "xi_mem_bytes",
                     "xi_time_seconds", "xi_energy_wh"):
            value = getattr(self, name)
            if math.isnan(value) or value < 0:
                raise ValueError(f"{name} must be >= 0, got {value}")
        if not self.w_bar_watts > 0:
            raise ValueError(f"w_bar_watts must be > 0, got {self.w_bar_watts}")

    @property
    def edge_bounded(self) -> bool:
        return any(
            math.isfinite(v)
            for v in (self.xi_ram_bytes, self.xi_flash_bytes, self.xi_mac, self.xi_mem_bytes)
        )

    def admits(self, prof: ResourceProfile) -> bool:
        return (
            prof.ram_bytes <= self.xi_ram_bytes
            and prof.flash_bytes <= self.xi_flash_bytes
            and prof.macs <= self.xi_mac
            and prof.train_mem_bytes <= self.xi_mem_bytes
        )

    def to_dict(self) -> dict:
        return {name: getattr(self, name) for name in self.__dataclass_fields__}


@dataclass(frozen=True)
class SearchSpace:
    members: tuple[Architecture, ...]
    t_bar_seconds: float = 0.0
    e_bar_wh: float = 0.0
    _index: dict = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        index = {}
        for i, arch in enumerate(self.members):
            if arch in index:
                raise ValueError(f"duplicate member {arch}")
            index[arch] = i
        object.__setattr__(self, "_index", index)

    def __len__(self) -> int:
        return len(self.members)

    def __iter__(self) -> Iterator[Architecture]:
        return iter(self.members)

    def __contains__(self, item) -> bool:
        if isinstance(item, tuple):
            item = Architecture(*item)
        return item in self._index

    def index(self, arch: Architecture) -> int:
        return self._index[arch]

    @property
    def calibrated(self) -> bool:
        return self.t_bar_seconds > 0

    def with_bounds(self, t_bar_seconds: float, e_bar_wh: float) -> "SearchSpace":
        return replace(self, t_bar_seconds=t_bar_seconds, e_bar_wh=e_bar_wh)

    def tuples(self) -> list[tuple[int, int]]:
        return [a.as_tuple() for a in self.members]

    @classmethod
    def from_tuples(cls, pairs: Iterable[tuple[int, int]], **kw) -> "SearchSpace":
        return cls(tuple(Architecture(k, c) for k, c in pairs), **kw)


def is_feasible(
    arch: Architecture,
    constraints: ConstraintSet,
    shape: InputShape,
    classes: int,
    batch: int = 16,
    cfg: OverheadConfig = OverheadConfig(),
) -> bool:
    if arch.c > max_cells(shape):
        return False
    return constraints.admits(profile(arch, shape, classes, batch, cfg))


def build_extensive_space(
    constraints: ConstraintSet,
    shape: InputShape,
    classes: int,
    batch: int = 16,
    cfg: OverheadConfig = OverheadConfig(),
) -> SearchSpace:
    """Enumerate (k, c) k-major: grow c until infeasible, stop once (k, 0) is infeasible."""
    if not constraints.edge_bounded:
        raise ValueError("at least one of the RAM/Flash/MAC/MEM bounds must be finite")
    members = []
    k = 1
    while is_feasible(Architecture(k, 0), constraints, shape, classes, batch, cfg):
        c = 0
        while is_feasible(Architecture(k, c), constraints, shape, classes, batch, cfg):
            members.append(Architecture(k, c))
            c += 1
        k += 1
    return SearchSpace(tuple(members))


def max_param_member(space: SearchSpace, shape: InputShape, classes: int) -> Architecture:
    """Member with the most trainable parameters; ties go to the later member."""
    if not len(space):
        raise ValueError("empty search space")
    best, best_params = None, -1
    for arch in space:
        n = expand(arch, shape, classes).trainable_param_count()
        if n >= best_params:
            best, best_params = arch, n
    return best


def calibrate_bounds(
    space: SearchSpace,
    evaluator,
    w_bar_watts: float,
    shape: InputShape,
    classes: int,
    xi_mem_bytes: float = math.inf,
    clock: Clock = time.monotonic,
    cache=None,
) -> tuple[float, float, Architecture]:
    """Time one evaluation of the largest member; return (t_bar, e_bar_wh, A*).

    When ``cache`` is given the calibration result is stored in it so the
    search does not pay for the same architecture twice.
    """
    target = max_param_member(space, shape, classes)
    t0 = clock()
    result = evaluator(target)
    t_bar = clock() - t0
    if result.peak_mem_bytes > xi_mem_bytes:
        raise InfeasibleCalibration(
            f"{target} used {result.peak_mem_bytes} B > xi_MEM {xi_mem_bytes:g} B"
        )
    if cache is not None and not result.aborted:
        cache.put(target, getattr(evaluator, "seed", None), result)
    return t_bar, wh(t_bar, w_bar_watts), target


def crop_size(n: int, t_bar: float, e_bar: float, xi_time: float, xi_energy: float,
              literal: bool = False) -> int:
    """Number of leading members that fit both budgets.

    The default checks the count *after* insertion, so the estimated cost never
    exceeds the budget. ``literal=True`` reproduces the pre-insertion check,
    which admits one evaluation beyond the budget.
    """
    if not t_bar > 0:
        raise ValueError("space is not calibrated (t_bar must be > 0)")
    size = 0
    while size < n:
        count = size if literal else size + 1
        if count * t_bar <= xi_time and count * e_bar <= xi_energy:
            size += 1
        else:
            break
    return size


def crop_space(space: SearchSpace, constraints: ConstraintSet, literal: bool = False) -> SearchSpace:
    size = crop_size(
        len(space), space.t_bar_seconds, space.e_bar_wh,
        constraints.xi_time_seconds, constraints.xi_energy_wh, literal=literal,
    )
    return SearchSpace(space.members[:size], space.t_bar_seconds, space.e_bar_wh)


def crop_ratio(cropped: SearchSpace, extensive: SearchSpace) -> Optional[float]:
    return len(cropped) / len(extensive) if len(extensive) else None
