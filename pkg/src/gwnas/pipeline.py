"""End-to-end driver: extensive space -> calibration -> crop -> search -> final training."""

from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional

import numpy as np

from .archmodel import Architecture, InputShape, expand
from .budget import ENERGY_BUDGET, TIME_BUDGET, BudgetLedger, FakeClock, Watchdog, wh
from .config import ConfigError, RunConfig
from .costmodel import profile
from .dataio import (
    Dataset, DataFormatError, load_cifar10_binary, load_raw_tensor, load_timeseries_csv,
    make_synthetic,
)
from .nnengine import SurrogateEvaluator, SurrogateSpec, TrainingEvaluator, final_train, save_params
from .searchcore import EvalCache, SearchTrace, run_search
from .spacegen import SearchSpace, build_extensive_space, calibrate_bounds, crop_space

log = logging.getLogger(__name__)

REPORT_SCHEMA = "gwnas.report/1"
# Fields that depend on the wall clock of the host; excluded from determinism checks.
WALL_CLOCK_FIELDS = (
    "space.t_bar_seconds", "space.e_bar_wh", "cost.elapsed_seconds", "cost.energy_wh",
    "final.train_seconds", "search.evaluations[].wall_seconds", "search.evaluations[].energy_wh",
)


class NoFeasibleArchitecture(RuntimeError):
    pass


# -- datasets -----------------------------------------------------------------

def load_dataset(descriptor: str, options: Optional[dict] = None) -> Dataset:
    """Resolve ``kind:path`` (cifar10, gwt1, csv) or ``synthetic:<generator>``."""
    options = dict(options or {})
    if not descriptor or ":" not in descriptor:
        raise ConfigError("dataset", f"expected <kind>:<path>, got {descriptor!r}")
    kind, _, target = descriptor.partition(":")
    kind = kind.lower()
    if kind == "synthetic":
        shape = InputShape.parse(str(options.get("shape", "16x16x1")))
        return make_synthetic(target, int(options.get("n", 200)), shape,
                              int(options.get("seed", 0)), int(options.get("classes", 2)))
    try:
        if kind == "cifar10":
            return load_cifar10_binary(target.split(","))
        if kind == "gwt1":
            return load_raw_tensor(target)
        if kind == "csv":
            if "window" not in options or "reshape" not in options:
                raise ConfigError("dataset_options", "csv datasets need 'window' and 'reshape'")
            return load_timeseries_csv(target, int(options["window"]), options["reshape"])
    except FileNotFoundError as exc:
        raise DataFormatError(f"cannot read dataset: {exc}") from None
    raise ConfigError("dataset", f"unknown dataset kind {kind!r}")


def subsample(ds: Dataset, fraction: float, seed: int) -> Dataset:
    if fraction >= 1.0:
        return ds
    n = max(2, int(round(len(ds) * fraction)))
    idx = np.sort(np.random.default_rng([seed, 7]).permutation(len(ds))[:n])
    return ds.subset(idx)


def builtin_surface(name: str) -> dict:
    text = resources.files("gwnas").joinpath(f"data/{name}_surface.json").read_text()
    return json.loads(text)


def make_surrogate(spec, clock) -> SurrogateEvaluator:
    if isinstance(spec, str) and not Path(spec).exists():
        try:
            spec = builtin_surface(spec)
        except FileNotFoundError:
            raise ConfigError("surrogate", f"no surface file or builtin named {spec!r}") from None
    try:
        surface = SurrogateSpec.from_json(spec)
    except (ValueError, TypeError, KeyError) as exc:
        raise ConfigError("surrogate", f"invalid surface: {exc}") from None
    return SurrogateEvaluator(surface, clock)


# -- report -------------------------------------------------------------------

@dataclass
class Report:
    chosen: Optional[dict]
    profile: Optional[dict]
    space: dict
    search: dict
    cost: dict
    stop_reason: Optional[str]
    final: Optional[dict] = None
    config: dict = field(default_factory=dict)
    schema: str = REPORT_SCHEMA

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, allow_nan=True)

    @classmethod
    def from_dict(cls, doc: dict) -> "Report":
        if doc.get("schema") != REPORT_SCHEMA:
            raise ValueError(f"not a {REPORT_SCHEMA} document")
        return cls(**doc)

    @classmethod
    def from_json(cls, text: str) -> "Report":
        return cls.from_dict(json.loads(text))

    def text(self) -> str:
        s, q, c = self.space, self.search, self.cost
        lines = []
        if self.chosen:
            lines.append(f"chosen architecture  (k,c) = ({self.chosen['k']},{self.chosen['c']})")
        if self.profile:
            p = self.profile
            lines.append(
                f"  RAM {p['ram_bytes'] / 1024:.1f} kiB  Flash {p['flash_bytes'] / 1024:.1f} kiB  "
                f"MAC {p['macs'] / 1e6:.2f} MM  train-mem {p['train_mem_bytes'] / 1024:.0f} kiB"
            )
        lines.append(
            f"search space  extensive={s['extensive_size']}  cropped={s['cropped_size']}  "
            f"crop={_pct(s.get('crop_fraction'))}  t_bar={s.get('t_bar_seconds', 0):.3f}s  "
            f"e_bar={s.get('e_bar_wh', 0):.6f}Wh"
        )
        if q:
            lines.append(
                f"search        evaluations={q['distinct_evaluations']}  "
                f"explored={_pct(q.get('explored_fraction'))}  stop={self.stop_reason}"
            )
        if c:
            lines.append(f"cost          {c['elapsed_seconds']:.2f} s  {c['energy_wh']:.6f} Wh")
        if self.final:
            f = self.final
            acc = f.get("test_accuracy")
            lines.append(
                f"final train   best_val={f['best_val_accuracy']:.4f} (epoch {f['best_epoch']})  "
                f"test={'n/a' if acc is None else f'{acc:.4f}'}"
            )
        return "\n".join(lines)


def _pct(x) -> str:
    return "n/a" if x is None else f"{100 * x:.0f}%"


def strip_wall_clock(doc: dict) -> dict:
    """Copy of a report dict with every wall-clock field removed."""
    doc = json.loads(json.dumps(doc))
    for path in WALL_CLOCK_FIELDS:
        head, _, leaf = path.rpartition(".")
        parts = head.split(".")
        nodes = [doc]
        for part in parts:
            nxt = []
            for node in nodes:
                if not isinstance(node, dict):
                    continue
                if part.endswith("[]"):
                    nxt.extend(node.get(part[:-2]) or [])
                elif node.get(part) is not None:
                    nxt.append(node[part])
            nodes = nxt
        for node in nodes:
            if isinstance(node, dict):
                node.pop(leaf, None)
    return doc


# -- driver -------------------------------------------------------------------

@dataclass
class SpaceResult:
    extensive: SearchSpace
    cropped: SearchSpace
    calibration_arch: Optional[Architecture]


@dataclass
class RunContext:
    cfg: RunConfig
    dataset: Dataset
    search_data: Dataset
    test_data: Optional[Dataset]
    clock: object
    evaluator: object
    cache: EvalCache
    ledger: BudgetLedger


def prepare(cfg: RunConfig, clock=None) -> RunContext:
    if cfg.dataset is None:
        raise ConfigError("dataset", "a dataset descriptor is required")
    dataset = load_dataset(cfg.dataset, cfg.dataset_options)
    if len(dataset) < 2:
        raise DataFormatError("dataset needs at least 2 samples")
    test = load_dataset(cfg.test_dataset, cfg.test_dataset_options) if cfg.test_dataset else None
    if test is not None and test.shape != dataset.shape:
        raise DataFormatError(f"test shape {test.shape} != train shape {dataset.shape}")
    if clock is None:
        clock = FakeClock() if cfg.evaluator == "surrogate" else time.monotonic
    if cfg.evaluator == "surrogate":
        evaluator = make_surrogate(cfg.surrogate, clock)
    else:
        evaluator = TrainingEvaluator(subsample(dataset, cfg.search_fraction, cfg.seed),
                                      cfg.train_config("quick"), clock=clock)
    cons = cfg.constraints()
    ledger = BudgetLedger(cons.w_bar_watts, cons.xi_time_seconds, cons.xi_energy_wh, clock)
    search_data = evaluator.dataset if isinstance(evaluator, TrainingEvaluator) else dataset
    return RunContext(cfg, dataset, search_data, test, clock, evaluator, EvalCache(), ledger)


def build_spaces(ctx: RunContext, calibrate: bool = True) -> SpaceResult:
    cfg = ctx.cfg
    cons = cfg.constraints()
    shape, classes = ctx.dataset.shape, ctx.dataset.num_classes
    extensive = build_extensive_space(cons, shape, classes, cfg.search_batch(), cfg.overhead_config())
    if not len(extensive):
        raise NoFeasibleArchitecture(
            f"no architecture fits the edge/gateway bounds for input {shape}"
        )
    target = None
    if cfg.t_bar_seconds is not None:
        t_bar = float(cfg.t_bar_seconds)
        e_bar = wh(t_bar, cons.w_bar_watts)
    elif calibrate:
        if ctx.ledger.started_at is None:
            ctx.ledger.start()
        t_bar, e_bar, target = calibrate_bounds(
            extensive, ctx.evaluator, cons.w_bar_watts, shape, classes,
            cons.xi_mem_bytes, ctx.clock, ctx.cache,
        )
    else:
        return SpaceResult(extensive, extensive, None)
    extensive = extensive.with_bounds(t_bar, e_bar)
    return SpaceResult(extensive, crop_space(extensive, cons, cfg.literal_crop), target)


def space_section(res: SpaceResult) -> dict:
    ext, crop = res.extensive, res.cropped
    return {
        "extensive_size": len(ext),
        "cropped_size": len(crop),
        "crop_fraction": len(crop) / len(ext) if len(ext) else None,
        "t_bar_seconds": ext.t_bar_seconds,
        "e_bar_wh": ext.e_bar_wh,
        "calibration_arch": None if res.calibration_arch is None else list(res.calibration_arch.as_tuple()),
        "extensive": [list(t) for t in ext.tuples()],
        "cropped": [list(t) for t in crop.tuples()],
    }


def search_section(trace: SearchTrace, space: SearchSpace) -> dict:
    doc = trace.to_dict()
    doc["distinct_evaluations"] = len(trace.distinct_evaluated())
    doc["explored_fraction"] = trace.explored_fraction(space)
    return doc


def run(cfg: RunConfig, clock=None, out_dir: Optional[Path] = None,
        monitor_interval: Optional[float] = None) -> Report:
    """Full search. Budget exhaustion is a normal outcome recorded in ``stop_reason``."""
    ctx = prepare(cfg, clock)
    cons = cfg.constraints()
    ctx.ledger.start()
    spaces = build_spaces(ctx)
    space = spaces.cropped
    shape, classes = ctx.dataset.shape, ctx.dataset.num_classes
    with Watchdog(ctx.ledger) as dog:
        if monitor_interval:
            dog.start_thread(monitor_interval)
        if len(space) and Architecture(1, 0) in space:
            arch, trace = run_search(space, ctx.evaluator, dog, ctx.cache, cons.w_bar_watts)
        else:
            # not even one evaluation fits the budget: fall back to the smallest candidate
            arch, trace = Architecture(1, 0), SearchTrace(seed=cfg.seed)
            over_time = spaces.extensive.t_bar_seconds > cons.xi_time_seconds
            trace.stop_reason = TIME_BUDGET if over_time else ENERGY_BUDGET
    elapsed, energy = ctx.ledger.elapsed_and_energy()
    prof = profile(arch, shape, classes, cfg.search_batch(), cfg.overhead_config())
    final = None
    if cfg.final_train:
        result = final_train(arch, ctx.dataset, cfg.train_config("final"), ctx.test_data)
        final = {
            "best_val_accuracy": result.best_val_accuracy,
            "best_epoch": result.best_epoch,
            "test_accuracy": result.test_accuracy,
            "history": list(result.history),
            "train_seconds": result.train_seconds,
        }
        if out_dir is not None:
            out_dir.mkdir(parents=True, exist_ok=True)
            save_params(out_dir / "params.gwnn", result.network.tensors())
    report = Report(
        chosen={"k": arch.k, "c": arch.c},
        profile=prof.to_dict(),
        space=space_section(spaces),
        search=search_section(trace, space),
        cost={"elapsed_seconds": elapsed, "energy_wh": energy},
        stop_reason=trace.stop_reason,
        final=final,
        config=_config_summary(cfg),
    )
    if out_dir is not None:
        write_outputs(out_dir, report, expand(arch, shape, classes), trace)
    return report


def _config_summary(cfg: RunConfig) -> dict:
    cons = cfg.constraints()
    return {
        "seed": cfg.seed,
        "dataset": cfg.dataset,
        "evaluator": cfg.evaluator,
        "constraints": {k: (None if isinstance(v, float) and math.isinf(v) else v)
                        for k, v in cons.to_dict().items()},
        "search_fraction": cfg.search_fraction,
        "quick": asdict(cfg.train_config("quick")),
        "final": asdict(cfg.train_config("final")) if cfg.final_train else None,
    }


def write_outputs(out_dir: Path, report: Report, topology, trace: SearchTrace) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "report.json").write_text(report.to_json() + "\n")
    (out_dir / "report.txt").write_text(report.text() + "\n")
    (out_dir / "trace.json").write_text(json.dumps(trace.to_dict(), indent=2) + "\n")
    (out_dir / "topology.json").write_text(topology.to_json() + "\n")
