"""Command line entry point.

    gwnas estimate K C --shape 50x50x3 --classes 2
    gwnas space    --config run.json [--t-bar 60]
    gwnas calibrate --config run.json
    gwnas search   --config run.json [--final]
    gwnas train    K C --config run.json

Exit codes: 0 success (budget-stopped searches included), 2 configuration
error, 3 data error, 4 no feasible architecture.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .archmodel import Architecture, ArchitectureError, InputShape, expand, max_cells
from .config import OUTPUT_ENV, ConfigError, RunConfig
from .costmodel import OverheadConfig, profile
from .dataio import DataFormatError
from .nnengine import final_train, save_params
from .pipeline import (
    NoFeasibleArchitecture, build_spaces, prepare, run, space_section,
)

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_INFEASIBLE = 0, 2, 3, 4


def _add_run_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON run configuration")
    p.add_argument("--profile", help="named profile applied before the config file")
    p.add_argument("--target", help="MCU preset (L010RBT6, U083RCT6, L412KBU3)")
    p.add_argument("--gateway", help="gateway preset (rpi4, rpi3, rpiz2)")
    p.add_argument("--xi-mac", type=float, help="MAC bound for the MCU")
    p.add_argument("--dataset", help="<kind>:<path>, kind in cifar10|gwt1|csv|synthetic")
    p.add_argument("--test-dataset", help="held-out dataset for final test accuracy")
    p.add_argument("--time-budget", help="seconds or H:MM")
    p.add_argument("--energy-budget", type=float, help="Wh")
    p.add_argument("--seed", type=int)
    p.add_argument("--evaluator", choices=("real", "surrogate"))
    p.add_argument("--surrogate", help="surface JSON file or builtin name (walkthrough)")
    p.add_argument("--t-bar", type=float, help="per-evaluation seconds; skips calibration")
    p.add_argument("--search-fraction", type=float)
    p.add_argument("--literal-crop", action="store_true", default=None,
                   help="pre-insertion budget check (may overshoot by one evaluation)")
    p.add_argument("--out", help="output directory (overrides $GWNAS_OUTPUT_DIR)")
    p.add_argument("--json", action="store_true", help="print the machine-readable form")


def load_config(args) -> RunConfig:
    cfg = RunConfig()
    if args.profile:
        cfg = cfg.apply_profile(args.profile)
    if args.config:
        cfg = RunConfig.load(args.config, cfg)
    overrides = {
        "target": args.target, "gateway": args.gateway, "xi_mac": args.xi_mac,
        "dataset": args.dataset, "test_dataset": args.test_dataset,
        "time_budget_s": args.time_budget, "energy_budget_wh": args.energy_budget,
        "seed": args.seed, "evaluator": args.evaluator, "surrogate": args.surrogate,
        "t_bar_seconds": args.t_bar, "search_fraction": args.search_fraction,
        "literal_crop": args.literal_crop,
    }
    if getattr(args, "final", None):
        overrides["final_train"] = True
    overrides = {k: v for k, v in overrides.items() if v is not None}
    if overrides.get("surrogate") and "evaluator" not in overrides:
        overrides["evaluator"] = "surrogate"
    return RunConfig.from_dict(overrides, cfg) if overrides else cfg


def cmd_estimate(args) -> int:
    shape = InputShape.parse(args.shape)
    arch = Architecture(args.k, args.c)
    limit = max_cells(shape)
    if arch.c > limit:
        print(f"error: c={arch.c} exceeds the pooling limit max_cells={limit} for {shape}",
              file=sys.stderr)
        return EXIT_CONFIG
    cfg = OverheadConfig(args.ram_overhead, args.flash_overhead)
    prof = profile(arch, shape, args.classes, args.batch, cfg)
    topo = expand(arch, shape, args.classes)
    if args.json:
        print(json.dumps({"arch": [arch.k, arch.c], "shape": str(shape), "classes": args.classes,
                          "profile": prof.to_dict(), "layers": topo.to_records()}, indent=2))
    else:
        print(f"architecture {arch} on {shape}, {args.classes} classes")
        print(f"  RAM   {prof.ram_bytes:>10,d} B  ({prof.ram_bytes / 1024:.1f} kiB)")
        print(f"  Flash {prof.flash_bytes:>10,d} B  ({prof.flash_bytes / 1024:.1f} kiB)")
        print(f"  MAC   {prof.macs:>10,d}    ({prof.macs / 1e6:.2f} MM)")
        print(f"  train {prof.train_mem_bytes:>10,d} B  (batch {args.batch})")
        print(topo.table())
    return EXIT_OK


def cmd_space(args) -> int:
    cfg = load_config(args)
    ctx = prepare(cfg)
    res = build_spaces(ctx, calibrate=True)
    doc = space_section(res)
    if args.json:
        print(json.dumps(doc, indent=2))
    else:
        print(f"extensive space: {doc['extensive_size']} members")
        print("  " + " ".join(f"({k},{c})" for k, c in doc["extensive"]))
        print(f"t_bar = {doc['t_bar_seconds']:.3f} s   e_bar = {doc['e_bar_wh']:.6f} Wh")
        print(f"cropped space: {doc['cropped_size']} members "
              f"({100 * doc['crop_fraction']:.0f}% of extensive)")
        print("  " + " ".join(f"({k},{c})" for k, c in doc["cropped"]))
    return EXIT_OK


def cmd_calibrate(args) -> int:
    cfg = load_config(args)
    ctx = prepare(cfg)
    res = build_spaces(ctx, calibrate=True)
    doc = {
        "calibration_arch": None if res.calibration_arch is None else list(res.calibration_arch.as_tuple()),
        "t_bar_seconds": res.extensive.t_bar_seconds,
        "e_bar_wh": res.extensive.e_bar_wh,
    }
    print(json.dumps(doc, indent=2) if args.json else
          f"A* = {doc['calibration_arch']}  t_bar = {doc['t_bar_seconds']:.3f} s  "
          f"e_bar = {doc['e_bar_wh']:.6f} Wh")
    return EXIT_OK


def cmd_search(args) -> int:
    cfg = load_config(args)
    out = cfg.resolve_output_dir(args.out)
    report = run(cfg, out_dir=out, monitor_interval=1.0 if cfg.evaluator == "real" else None)
    print(report.to_json() if args.json else report.text())
    if out is not None:
        print(f"outputs written to {out}", file=sys.stderr)
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = load_config(args)
    out = cfg.resolve_output_dir(args.out)
    if out is None:
        raise ConfigError("out", f"train needs an output directory (--out or ${OUTPUT_ENV})")
    ctx = prepare(cfg)
    arch = Architecture(args.k, args.c)
    result = final_train(arch, ctx.dataset, cfg.train_config("final"), ctx.test_data)
    out.mkdir(parents=True, exist_ok=True)
    save_params(out / "params.gwnn", result.network.tensors())
    (out / "topology.json").write_text(result.network.topology.to_json() + "\n")
    doc = {"arch": [arch.k, arch.c], "best_val_accuracy": result.best_val_accuracy,
           "best_epoch": result.best_epoch, "test_accuracy": result.test_accuracy,
           "train_seconds": result.train_seconds}
    print(json.dumps(doc, indent=2))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gwnas", description=__doc__.split("\n\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("estimate", help="resource profile and layer table of one (k, c)")
    p.add_argument("k", type=int)
    p.add_argument("c", type=int)
    p.add_argument("--shape", default="50x50x3")
    p.add_argument("--classes", type=int, default=2)
    p.add_argument("--batch", type=int, default=16)
    p.add_argument("--ram-overhead", type=int, default=OverheadConfig.ram_overhead_bytes)
    p.add_argument("--flash-overhead", type=int, default=OverheadConfig.flash_overhead_bytes)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_estimate)

    for name, func, text in (
        ("space", cmd_space, "print the extensive and cropped search spaces"),
        ("calibrate", cmd_calibrate, "time one evaluation of the largest candidate"),
        ("search", cmd_search, "run the full search and write a report"),
    ):
        p = sub.add_parser(name, help=text)
        _add_run_options(p)
        if name == "search":
            p.add_argument("--final", action="store_true", help="final-train the winner")
        p.set_defaults(func=func)

    p = sub.add_parser("train", help="final-train one (k, c) and export its parameters")
    p.add_argument("k", type=int)
    p.add_argument("c", type=int)
    _add_run_options(p)
    p.set_defaults(func=cmd_train)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ArchitectureError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataFormatError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NoFeasibleArchitecture as exc:
        print(f"no feasible architecture: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE


if __name__ == "__main__":
    sys.exit(main())
