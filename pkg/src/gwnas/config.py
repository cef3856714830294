"""Run configuration: hardware presets, named profiles and JSON config files."""

from __future__ import annotations

import json
import math
import os
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Optional

from .archmodel import ArchitectureError, InputShape
from .costmodel import OverheadConfig
from .nnengine.train import (
    FINAL_IMAGE, FINAL_TIMESERIES, QUICK_IMAGE, QUICK_TIMESERIES, TrainConfig,
)
from .spacegen import ConstraintSet

KIB = 1024
GIB = 1024 ** 3
OUTPUT_ENV = "GWNAS_OUTPUT_DIR"


class ConfigError(ValueError):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


@dataclass(frozen=True)
class McuTarget:
    ram_bytes: float
    flash_bytes: float
    mac: float = math.inf
    coremark: Optional[int] = None


@dataclass(frozen=True)
class Gateway:
    mem_bytes: float
    watts: float


MCU_PRESETS = {
    "L010RBT6": McuTarget(20 * KIB, 128 * KIB, coremark=75),
    "U083RCT6": McuTarget(32 * KIB, 256 * KIB, coremark=134),
    "L412KBU3": McuTarget(40 * KIB, 128 * KIB, coremark=273),
}

GATEWAY_PRESETS = {
    "rpi4": Gateway(4 * GIB, 5.6),
    "rpi3": Gateway(1 * GIB, 4.3),
    "rpiz2": Gateway(GIB // 2, 2.8),
}

TRAIN_PROFILES = {
    "quick-image": QUICK_IMAGE,
    "quick-timeseries": QUICK_TIMESERIES,
    "final-image": FINAL_IMAGE,
    "final-timeseries": FINAL_TIMESERIES,
}

# Named run profiles, applied before the config file and flags.
RUN_PROFILES = {
    "vww": {
        "target": "L412KBU3", "gateway": "rpiz2",
        "time_budget_s": "9:51", "energy_budget_wh": 16.5,
        "search_fraction": 0.1, "quick": "quick-image", "final": "final-image",
        "dataset_options": {"shape": "50x50x3"},
    },
    "cifar10": {
        "target": "L010RBT6", "gateway": "rpi4",
        "quick": "quick-image", "final": "final-image",
    },
    "cwru": {
        "target": "L010RBT6", "gateway": "rpi4",
        "quick": "quick-timeseries", "final": "final-timeseries",
    },
    "desk": {
        "target": "L010RBT6", "gateway": "rpiz2",
        "dataset": "synthetic:separable-blobs",
        "dataset_options": {"n": 400, "shape": "16x16x1", "seed": 0},
        "test_dataset": "synthetic:separable-blobs",
        "test_dataset_options": {"n": 200, "shape": "16x16x1", "seed": 1},
    },
}


def parse_duration(value, path="time") -> float:
    """Seconds from a number or an ``H:MM`` / ``H:MM:SS`` string."""
    if value is None:
        return math.inf
    if isinstance(value, (int, float)):
        return float(value)
    if isinstance(value, str):
        text = value.strip()
        if text.lower() in ("inf", "unbounded", ""):
            return math.inf
        parts = text.split(":")
        try:
            nums = [float(p) for p in parts]
        except ValueError:
            raise ConfigError(path, f"not a duration: {value!r}") from None
        if len(nums) == 1:
            return nums[0]
        if len(nums) in (2, 3):
            h, m = nums[0], nums[1]
            s = nums[2] if len(nums) == 3 else 0.0
            return h * 3600 + m * 60 + s
    raise ConfigError(path, f"not a duration: {value!r}")


def _number(value, path, allow_none=True) -> float:
    if value is None and allow_none:
        return math.inf
    if isinstance(value, str) and value.lower() in ("inf", "unbounded"):
        return math.inf
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(path, f"expected a number, got {value!r}")
    return float(value)


@dataclass
class RunConfig:
    target: Any = "L010RBT6"
    xi_mac: Any = None
    gateway: Any = "rpiz2"
    time_budget_s: Any = None
    energy_budget_wh: Any = None
    dataset: Optional[str] = None
    dataset_options: dict = field(default_factory=dict)
    test_dataset: Optional[str] = None
    test_dataset_options: dict = field(default_factory=dict)
    search_fraction: float = 1.0
    quick: Any = "quick-image"
    final: Any = "final-image"
    final_train: bool = False
    seed: int = 0
    overheads: dict = field(default_factory=dict)
    evaluator: str = "real"
    surrogate: Any = None
    t_bar_seconds: Optional[float] = None
    literal_crop: bool = False
    batch_size: Optional[int] = None
    output_dir: Optional[str] = None

    # -- construction ---------------------------------------------------------

    @classmethod
    def from_dict(cls, doc: dict, base: Optional["RunConfig"] = None) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(doc) - known - {"profile"})
        if unknown:
            raise ConfigError(unknown[0], "unknown configuration field")
        cfg = base or cls()
        if "profile" in doc:
            cfg = cfg.apply_profile(doc["profile"])
        merged = {}
        for key, value in doc.items():
            if key == "profile":
                continue
            if key.endswith("_options") and isinstance(value, dict):
                value = {**getattr(cfg, key), **value}
            merged[key] = value
        cfg = replace(cfg, **merged)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path, base: Optional["RunConfig"] = None) -> "RunConfig":
        try:
            doc = json.loads(Path(path).read_text())
        except FileNotFoundError:
            raise ConfigError("config", f"file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError("config", f"invalid JSON: {exc}") from None
        if not isinstance(doc, dict):
            raise ConfigError("config", "top level must be an object")
        return cls.from_dict(doc, base)

    def apply_profile(self, name: str) -> "RunConfig":
        if name not in RUN_PROFILES:
            raise ConfigError("profile", f"unknown profile {name!r}; choose from {sorted(RUN_PROFILES)}")
        return RunConfig.from_dict(RUN_PROFILES[name], self)

    # -- resolved views -------------------------------------------------------

    def mcu(self) -> McuTarget:
        t = self.target
        if isinstance(t, str):
            if t not in MCU_PRESETS:
                raise ConfigError("target", f"unknown MCU preset {t!r}; choose from {sorted(MCU_PRESETS)}")
            base = MCU_PRESETS[t]
        elif isinstance(t, dict):
            extra = set(t) - {"ram_bytes", "flash_bytes", "mac"}
            if extra:
                raise ConfigError(f"target.{sorted(extra)[0]}", "unknown field")
            base = McuTarget(
                _number(t.get("ram_bytes"), "target.ram_bytes"),
                _number(t.get("flash_bytes"), "target.flash_bytes"),
                _number(t.get("mac"), "target.mac"),
            )
        else:
            raise ConfigError("target", "expected a preset name or an object")
        if self.xi_mac is not None:
            base = replace(base, mac=_number(self.xi_mac, "xi_mac"))
        return base

    def gateway_spec(self) -> Gateway:
        g = self.gateway
        if isinstance(g, str):
            if g not in GATEWAY_PRESETS:
                raise ConfigError("gateway", f"unknown gateway preset {g!r}; choose from {sorted(GATEWAY_PRESETS)}")
            return GATEWAY_PRESETS[g]
        if isinstance(g, dict):
            extra = set(g) - {"mem_bytes", "watts"}
            if extra:
                raise ConfigError(f"gateway.{sorted(extra)[0]}", "unknown field")
            return Gateway(_number(g.get("mem_bytes"), "gateway.mem_bytes"),
                           _number(g.get("watts"), "gateway.watts", allow_none=False))
        raise ConfigError("gateway", "expected a preset name or an object")

    def train_config(self, which: str) -> TrainConfig:
        spec = getattr(self, which)
        if isinstance(spec, str):
            if spec not in TRAIN_PROFILES:
                raise ConfigError(which, f"unknown training profile {spec!r}")
            cfg = TRAIN_PROFILES[spec]
        elif isinstance(spec, dict):
            spec = dict(spec)
            base = TRAIN_PROFILES.get(spec.pop("profile", f"{which}-image"), QUICK_IMAGE)
            allowed = {f.name for f in fields(TrainConfig)}
            bad = sorted(set(spec) - allowed)
            if bad:
                raise ConfigError(f"{which}.{bad[0]}", "unknown training field")
            try:
                cfg = replace(base, **spec)
            except (TypeError, ValueError) as exc:
                raise ConfigError(which, str(exc)) from None
        else:
            raise ConfigError(which, "expected a profile name or an object")
        return replace(cfg, seed=self.seed)

    def overhead_config(self) -> OverheadConfig:
        try:
            return OverheadConfig(**self.overheads)
        except (TypeError, ValueError) as exc:
            raise ConfigError("overheads", str(exc)) from None

    def constraints(self) -> ConstraintSet:
        mcu, gw = self.mcu(), self.gateway_spec()
        try:
            return ConstraintSet(
                xi_ram_bytes=mcu.ram_bytes,
                xi_flash_bytes=mcu.flash_bytes,
                xi_mac=mcu.mac,
                xi_mem_bytes=gw.mem_bytes,
                xi_time_seconds=parse_duration(self.time_budget_s, "time_budget_s"),
                xi_energy_wh=_number(self.energy_budget_wh, "energy_budget_wh"),
                w_bar_watts=gw.watts,
            )
        except ValueError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError("constraints", str(exc)) from None

    def search_batch(self) -> int:
        return self.batch_size or self.train_config("quick").batch_size

    def resolve_output_dir(self, flag: Optional[str] = None) -> Optional[Path]:
        """Flag, then environment, then config file; None when no directory was named."""
        named = flag or os.environ.get(OUTPUT_ENV) or self.output_dir
        return Path(named) if named else None

    def validate(self) -> None:
        self.mcu()
        self.gateway_spec()
        self.constraints()
        self.train_config("quick")
        self.train_config("final")
        self.overhead_config()
        if not isinstance(self.search_fraction, (int, float)) or not 0 < self.search_fraction <= 1:
            raise ConfigError("search_fraction", "must be in (0, 1]")
        if self.evaluator not in ("real", "surrogate"):
            raise ConfigError("evaluator", "must be 'real' or 'surrogate'")
        if self.evaluator == "surrogate" and self.surrogate is None:
            raise ConfigError("surrogate", "surrogate evaluator needs a surface")
        if self.t_bar_seconds is not None:
            if _number(self.t_bar_seconds, "t_bar_seconds", allow_none=False) <= 0:
                raise ConfigError("t_bar_seconds", "must be > 0")
        if self.batch_size is not None and (not isinstance(self.batch_size, int) or self.batch_size < 1):
            raise ConfigError("batch_size", "must be a positive integer")
        opts = self.dataset_options
        if "shape" in opts:
            try:
                InputShape.parse(str(opts["shape"]))
            except ArchitectureError as exc:
                raise ConfigError("dataset_options.shape", str(exc)) from None

    def to_dict(self) -> dict:
        return asdict(self)
