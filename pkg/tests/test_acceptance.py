"""Acceptance criteria, one test each; every test prints a single PASS/FAIL line.

The lines are repeated in the terminal summary (see conftest.py).
"""

import json
import math
import random
import time

import numpy as np
import pytest

from gwnas.archmodel import Architecture, InputShape, expand
from gwnas.budget import ENERGY_BUDGET, TIME_BUDGET, BudgetLedger, FakeClock, Watchdog
from gwnas.config import RunConfig
from gwnas.costmodel import estimate_flash, estimate_macs, estimate_ram, profile
from gwnas.nnengine import SurrogateEvaluator, SurrogateSpec
from gwnas.pipeline import builtin_surface, run, strip_wall_clock
from gwnas.searchcore import INCREMENT_ZERO, run_search
from gwnas.spacegen import (
    ConstraintSet, SearchSpace, build_extensive_space, crop_size, crop_space,
)

import conftest
from gradcheck import batch, fd_check, net64
from oracles import extensive_ref

KIB = 1024


def verdict(capsys, n, title, ok, detail):
    line = f"criterion {n:>2} {'PASS' if ok else 'FAIL'}  {title}: {detail}"
    conftest.ACCEPTANCE[n] = (bool(ok), line)
    with capsys.disabled():
        print("\n" + line)
    assert ok, line


# (dataset, (k, c), input side, classes, RAM kiB, Flash kiB, MAC MM) per deployed model
DEPLOYED = [
    ("VWW", (3, 4), 50, 2, 19.0, 10.8, 0.4),
    ("VWW", (5, 5), 50, 2, 24.5, 22.7, 0.9),
    ("VWW", (8, 3), 50, 2, 31.0, 18.8, 2.0),
    ("Melanoma", (3, 5), 50, 2, 18.5, 8.1, 0.4),
    ("Melanoma", (6, 4), 50, 2, 26.5, 20.4, 1.3),
    ("Melanoma", (9, 4), 50, 2, 34.0, 35.7, 2.6),
    ("CIFAR-10", (6, 5), 32, 10, 14.0, 28.7, 0.5),
    ("CIFAR-10", (9, 4), 32, 10, 17.0, 36.0, 1.1),
    ("CIFAR-10", (13, 4), 32, 10, 21.5, 65.2, 2.1),
]


def deployed_topologies():
    for name, (k, c), side, classes, ram, flash, mac in DEPLOYED:
        topo = expand(Architecture(k, c), InputShape(side, side, 3), classes)
        yield f"{name} ({k},{c})", topo, ram, flash, mac


def test_criterion_01_mac_cross_check(capsys):
    t0 = time.perf_counter()
    errs = {name: estimate_macs(t) / 1e6 - mac for name, t, _, _, mac in deployed_topologies()}
    dt = time.perf_counter() - t0
    worst = max(errs, key=lambda n: abs(errs[n]))
    ok = all(abs(e) <= 0.1 + 1e-12 for e in errs.values()) and dt < 1
    verdict(capsys, 1, "MAC within 0.1 MM", ok,
            f"9 rows, worst {worst} {errs[worst]:+.3f} MM, {1e3 * dt:.1f} ms")


def test_criterion_02_ram_cross_check(capsys):
    t0 = time.perf_counter()
    errs = {name: estimate_ram(t) / KIB - ram for name, t, ram, _, _ in deployed_topologies()}
    dt = time.perf_counter() - t0
    worst = max(errs, key=lambda n: abs(errs[n]))
    ok = all(abs(e) <= 2 for e in errs.values()) and dt < 1
    verdict(capsys, 2, "RAM within 2 kiB", ok,
            f"9 rows, worst {worst} {errs[worst]:+.2f} kiB, {1e3 * dt:.1f} ms")


def test_criterion_03_flash_cross_check(capsys):
    t0 = time.perf_counter()
    rel = {name: estimate_flash(t) / KIB / flash - 1 for name, t, _, flash, _ in deployed_topologies()}
    dt = time.perf_counter() - t0
    bad = {n: e for n, e in rel.items() if abs(e) > 0.25}
    ok = not bad and dt < 1
    worst = max(rel, key=lambda n: abs(rel[n]))
    detail = f"{9 - len(bad)}/9 rows within 25%, worst {worst} {100 * rel[worst]:+.1f}%"
    if bad:
        detail += " (out of tolerance: " + ", ".join(f"{n} {100 * e:+.1f}%" for n, e in bad.items()) + ")"
    verdict(capsys, 3, "Flash within 25%", ok, detail)


def _random_bounds(rng, shape, classes):
    base = profile(Architecture(1, 0), shape, classes)
    pick = lambda v: rng.choice([math.inf, v * rng.uniform(1.0, 6.0)])
    b = dict(ram=pick(base.ram_bytes), flash=pick(base.flash_bytes),
             mac=pick(base.macs), mem=pick(base.train_mem_bytes))
    if all(math.isinf(v) for v in b.values()):
        b["mac"] = base.macs * rng.uniform(1.0, 40.0)
    return b


def test_criterion_04_extensive_space_equals_brute_force(capsys):
    rng = random.Random(2024)
    cases, elapsed, mismatches = 24, 0.0, 0
    for _ in range(cases):
        shape = InputShape(rng.randint(2, 16), rng.randint(2, 16), rng.randint(1, 3))
        classes = rng.randint(2, 5)
        b = _random_bounds(rng, shape, classes)
        cons = ConstraintSet(xi_ram_bytes=b["ram"], xi_flash_bytes=b["flash"], xi_mac=b["mac"],
                             xi_mem_bytes=b["mem"])
        t0 = time.perf_counter()
        space = build_extensive_space(cons, shape, classes)
        elapsed += time.perf_counter() - t0
        order, feasible = extensive_ref(shape.height, shape.width, shape.channels, classes, b,
                                        c_max=6)
        mismatches += space.tuples() != order or set(order) != feasible
    ok = mismatches == 0 and elapsed < 1
    verdict(capsys, 4, "extensive space equals grid enumeration", ok,
            f"{cases - mismatches}/{cases} constraint sets, generator time {elapsed:.3f} s")


def test_criterion_05_crop_formula(capsys):
    rng = random.Random(99)
    cases, failures = 60, []
    t0 = time.perf_counter()
    for i in range(cases):
        n = rng.randint(1, 120)
        space = SearchSpace.from_tuples([(k, 0) for k in range(1, n + 1)])
        t_bar = rng.uniform(0.5, 120.0)
        w_bar = rng.choice([1.0, 2.8, 4.3, 5.6])
        e_bar = t_bar * w_bar / 3600
        xi_t = rng.choice([math.inf, rng.uniform(0, 1.5 * n * t_bar)])
        xi_e = rng.choice([math.inf, rng.uniform(0, 1.5 * n * e_bar)])
        if i % 7 == 0:
            xi_e = xi_t * w_bar / 3600 if math.isfinite(xi_t) else xi_e  # budgets coincide
        expected = min(n, math.floor(xi_t / t_bar) if math.isfinite(xi_t) else n,
                       math.floor(xi_e / e_bar) if math.isfinite(xi_e) else n)
        cons = ConstraintSet(xi_time_seconds=xi_t, xi_energy_wh=xi_e, w_bar_watts=w_bar)
        cropped = crop_space(space.with_bounds(t_bar, e_bar), cons)
        got = len(cropped)
        exact = got == expected
        prefix = cropped.members == space.members[:got]
        halved = crop_size(n, t_bar, e_bar, xi_t / 2, xi_e / 2)
        if not (exact and prefix and halved <= got):
            failures.append((n, t_bar, xi_t, xi_e, got, expected))
    # the full -> two thirds -> one third pattern shrinks monotonically
    pattern = [crop_size(66, 320.0, 320.0 * 2.8 / 3600, (9 * 3600 + 51 * 60) * f, 16.5 * f)
               for f in (1, 2 / 3, 1 / 3)]
    dt = time.perf_counter() - t0
    ok = not failures and pattern[0] >= pattern[1] >= pattern[2] and dt < 1
    verdict(capsys, 5, "crop size, prefix and halving", ok,
            f"{cases - len(failures)}/{cases} tuples, budget thirds give "
            f"{'/'.join(str(round(100 * p / 66)) + '%' for p in pattern)}, {1e3 * dt:.0f} ms")


WALK_SPACE = SearchSpace.from_tuples([(k, c) for k in range(1, 11) for c in range(6)])


def test_criterion_06_walkthrough_replay(capsys):
    t0 = time.perf_counter()
    surface = SurrogateSpec.from_json(builtin_surface("walkthrough"))
    arch, trace = run_search(WALK_SPACE, SurrogateEvaluator(surface))
    dt = time.perf_counter() - t0
    ok = trace.proposals == [1, 2, 4, 8, 6, 7] and arch == Architecture(7, 3)
    verdict(capsys, 6, "walk-through surface replay", ok,
            f"proposals {trace.proposals} -> {arch}, {1e3 * dt:.1f} ms")


def random_surface(rng):
    n_k = rng.randint(1, 24)
    tops = sorted((rng.randint(0, 5) for _ in range(n_k)), reverse=True)
    members = [(k, c) for k, top in enumerate(tops, 1) for c in range(top + 1)]
    space = SearchSpace.from_tuples(members[:rng.randint(1, len(members))])
    levels = rng.randint(2, 12)
    table = {kc: rng.randint(0, levels) / levels for kc in members}
    return space, SurrogateSpec(table=table, noise=rng.choice([0.0, 0.0, 0.01]),
                                seed=rng.randint(0, 3))


def search_invariant_failures(space, surface):
    arch, trace = run_search(space, SurrogateEvaluator(surface))
    scores = {e.arch: e.score for e in trace.completed}
    problems = []
    if scores[arch] != max(scores.values()):
        problems.append("returned score is not the max")
    confirmed = [s for _, s in trace.confirmations]
    if not all(b > a for a, b in zip(confirmed, confirmed[1:])):
        problems.append("confirmations not strictly increasing")
    if len(trace.distinct_evaluated()) > len(space) or any(a not in space for a in scores):
        problems.append("evaluated outside or beyond the space")
    if trace.first_rejection_iteration is not None:
        if trace.outer_iterations - trace.first_rejection_iteration > math.ceil(math.log2(arch.k)) + 1:
            problems.append("too many iterations after first rejection")
    arch2, trace2 = run_search(space, SurrogateEvaluator(surface))
    if arch2 != arch or json.dumps(trace2.to_dict()) != json.dumps(trace.to_dict()):
        problems.append("not deterministic")
    return problems


def test_criterion_07_search_invariants(capsys):
    rng = random.Random(7)
    cases, bad = 220, 0
    t0 = time.perf_counter()
    for _ in range(cases):
        bad += bool(search_invariant_failures(*random_surface(rng)))
    dt = time.perf_counter() - t0
    ok = bad == 0 and dt < 5
    verdict(capsys, 7, "search invariants on random surfaces", ok,
            f"{cases - bad}/{cases} surfaces, {dt:.2f} s")


def test_criterion_08_watchdog(capsys):
    rng = random.Random(8)
    cases, bad, stops = 150, 0, {}
    t0 = time.perf_counter()
    for _ in range(cases):
        space, surface = random_surface(rng)
        surface.seconds = rng.uniform(0.5, 5.0)
        surface.steps = rng.choice([1, 4])
        watts = rng.choice([2.8, 4.3, 5.6])
        xi_t = rng.choice([math.inf, rng.uniform(0, 60)])
        xi_e = rng.choice([math.inf, rng.uniform(0, 60) * watts / 3600])
        clock = FakeClock()
        ledger = BudgetLedger(watts, xi_t, xi_e + 0.0, clock).start()
        arch, trace = run_search(space, SurrogateEvaluator(surface, clock), Watchdog(ledger))
        t, e = ledger.elapsed_and_energy()
        one_eval_wh = surface.seconds * watts / 3600
        valid = arch in space and trace.stop_reason is not None
        # overshoot past a budget is at most one evaluation
        valid &= t <= xi_t + surface.seconds + 1e-9 and e <= xi_e + one_eval_wh + 1e-12
        if trace.stop_reason == TIME_BUDGET:
            valid &= t >= xi_t
        elif trace.stop_reason == ENERGY_BUDGET:
            valid &= e >= xi_e and t < xi_t
        else:
            valid &= trace.stop_reason == INCREMENT_ZERO
        stops[trace.stop_reason] = stops.get(trace.stop_reason, 0) + 1
        bad += not valid
    dt = time.perf_counter() - t0
    ok = bad == 0 and dt < 1 and len(stops) == 3
    verdict(capsys, 8, "watchdog stops with fake clock", ok,
            f"{cases - bad}/{cases} runs valid, stops {dict(sorted(stops.items()))}, {dt:.2f} s")


def test_criterion_09_gradients(capsys):
    t0 = time.perf_counter()
    results, tried = [], 0
    for k in (1, 2, 3):
        for c in (0, 1, 2):
            seed = 100 * k + 10 * c
            while True:
                tried += 1
                rng = np.random.default_rng(seed)
                classes = int(rng.integers(2, 4))
                net = net64(k, c, (8, 8, 1), classes, seed)
                for key in net.params:
                    net.params[key] += rng.normal(0, 0.2, net.params[key].shape)
                x, y = batch(rng, 3, (8, 8, 1), classes)
                worst, kept = fd_check(net, x, y)
                if kept >= 0.5:
                    break
                seed += 1  # mostly sitting on ReLU/pooling kinks: draw again
            results.append(worst)
    dt = time.perf_counter() - t0
    ok = max(results) <= 1e-2 and dt < 30
    verdict(capsys, 9, "analytic vs finite-difference gradients", ok,
            f"9 networks (k<=3, c<=2, {tried} draws), worst rel. err {max(results):.1e}, {dt:.1f} s")


@pytest.fixture(scope="module")
def desk_runs():
    cfg = RunConfig.from_dict({"final_train": True}, RunConfig().apply_profile("desk"))
    runs = []
    for _ in range(2):
        t0 = time.perf_counter()
        report = run(cfg)
        runs.append((report, time.perf_counter() - t0))
    return runs


def test_criterion_10_desk_end_to_end(capsys, desk_runs):
    report, seconds = desk_runs[0]
    acc = report.final["test_accuracy"]
    ok = acc is not None and acc >= 0.95 and seconds < 600
    chosen = (report.chosen["k"], report.chosen["c"])
    verdict(capsys, 10, "desk NAS end to end", ok,
            f"chose {chosen}, test accuracy {acc:.3f}, stop {report.stop_reason}, {seconds:.1f} s")


def test_criterion_11_determinism(capsys, desk_runs):
    (a, _), (b, _) = desk_runs
    ja = json.dumps(strip_wall_clock(a.to_dict()), sort_keys=True).encode()
    jb = json.dumps(strip_wall_clock(b.to_dict()), sort_keys=True).encode()
    ok = ja == jb
    verdict(capsys, 11, "repeat run is byte-identical", ok,
            f"{len(ja)} bytes of report compared after removing wall-clock fields")
