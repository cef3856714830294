import math
import random

import pytest
from hypothesis import given, settings, strategies as st

from gwnas.archmodel import Architecture, InputShape
from gwnas.budget import FakeClock
from gwnas.costmodel import profile
from gwnas.nnengine import SurrogateEvaluator, SurrogateSpec
from gwnas.searchcore import EvalCache
from gwnas.spacegen import (
    ConstraintSet, InfeasibleCalibration, SearchSpace, build_extensive_space, calibrate_bounds,
    crop_ratio, crop_size, crop_space, is_feasible, max_param_member,
)

from oracles import extensive_ref, macs_ref, symbolic_layers

KIB = 1024
VWW = InputShape(50, 50, 3)
L412 = ConstraintSet(xi_ram_bytes=40 * KIB, xi_flash_bytes=128 * KIB)


def test_is_feasible_examples():
    assert is_feasible(Architecture(8, 3), L412, VWW, 2)
    assert not is_feasible(Architecture(1, 0), ConstraintSet(xi_mac=0), VWW, 2)
    assert not is_feasible(Architecture(3, 6), ConstraintSet(), VWW, 2)


def test_extensive_space_tight_mac_bound():
    shape = InputShape(2, 2, 3)  # one pooling stage at most
    bound = macs_ref(symbolic_layers(2, 1, 2, 2, 3, 2))
    space = build_extensive_space(ConstraintSet(xi_mac=bound), shape, 2)
    assert space.tuples() == [(1, 0), (1, 1), (2, 0), (2, 1)]


def test_extensive_space_empty_when_nothing_fits():
    tiny = profile(Architecture(1, 0), VWW, 2).ram_bytes - 1
    assert len(build_extensive_space(ConstraintSet(xi_ram_bytes=tiny), VWW, 2)) == 0


def test_extensive_space_needs_an_edge_bound():
    with pytest.raises(ValueError):
        build_extensive_space(ConstraintSet(), VWW, 2)


def test_l412_space_matches_grid_oracle():
    space = build_extensive_space(L412, VWW, 2)
    bounds = dict(ram=40 * KIB, flash=128 * KIB, mac=math.inf, mem=math.inf)
    order, feasible = extensive_ref(50, 50, 3, 2, bounds, k_max=40, c_max=6)
    assert space.tuples() == order
    assert set(order) == feasible
    k_top = max(k for k, _ in order)
    assert not is_feasible(Architecture(k_top + 1, 0), L412, VWW, 2)


def _random_bounds(rng, shape, classes):
    # draw each bound between the (1,0) cost and a few times it, or leave it open
    base = profile(Architecture(1, 0), shape, classes)
    pick = lambda v: rng.choice([math.inf, v * rng.uniform(1.0, 6.0)])
    b = dict(ram=pick(base.ram_bytes), flash=pick(base.flash_bytes),
             mac=pick(base.macs), mem=pick(base.train_mem_bytes))
    if all(math.isinf(v) for v in b.values()):
        b["mac"] = base.macs * rng.uniform(1.0, 40.0)
    return b


@pytest.mark.parametrize("seed", range(25))
def test_extensive_space_equals_grid_brute_force(seed):
    rng = random.Random(seed)
    shape = InputShape(rng.randint(2, 20), rng.randint(2, 20), rng.randint(1, 3))
    classes = rng.randint(2, 5)
    b = _random_bounds(rng, shape, classes)
    cons = ConstraintSet(xi_ram_bytes=b["ram"], xi_flash_bytes=b["flash"], xi_mac=b["mac"],
                         xi_mem_bytes=b["mem"])
    space = build_extensive_space(cons, shape, classes)
    order, feasible = extensive_ref(shape.height, shape.width, shape.channels, classes, b,
                                    c_max=6)
    assert space.tuples() == order
    assert set(order) == feasible


@given(st.floats(0.3, 1.0), st.floats(0.3, 1.0))
@settings(max_examples=30, deadline=None)
def test_shrinking_bounds_never_enlarges_space(f_ram, f_mac):
    loose = ConstraintSet(xi_ram_bytes=30 * KIB, xi_mac=3e6)
    tight = ConstraintSet(xi_ram_bytes=30 * KIB * f_ram, xi_mac=3e6 * f_mac)
    big = set(build_extensive_space(loose, VWW, 2))
    small = set(build_extensive_space(tight, VWW, 2))
    assert small <= big


def test_search_space_rejects_duplicates():
    with pytest.raises(ValueError):
        SearchSpace.from_tuples([(1, 0), (1, 0)])
    assert (1, 0) in SearchSpace.from_tuples([(1, 0)])


def test_calibrate_with_fixed_surrogate_time():
    clock = FakeClock()
    evaluator = SurrogateEvaluator(SurrogateSpec(default=0.5, seconds=2.0), clock)
    space = SearchSpace.from_tuples([(1, 0), (1, 1), (2, 0)])
    cache = EvalCache()
    t_bar, e_bar, target = calibrate_bounds(space, evaluator, 2.8, VWW, 2, clock=clock,
                                            cache=cache)
    assert t_bar == 2.0
    assert e_bar == pytest.approx(2.0 * 2.8 / 3600)
    # (2,0) has 62 trainable parameters, (1,1) only 58
    assert target == Architecture(2, 0)
    assert cache.get(target, evaluator.seed) is not None


def test_calibration_fails_over_gateway_memory():
    class Heavy:
        seed = 0

        def __call__(self, arch):
            from gwnas.nnengine import EvalResult
            return EvalResult(0.5, 1.0, 10 ** 9)

    space = SearchSpace.from_tuples([(1, 0)])
    with pytest.raises(InfeasibleCalibration):
        calibrate_bounds(space, Heavy(), 2.8, VWW, 2, xi_mem_bytes=1e6, clock=FakeClock())


def test_max_param_member_singleton_and_tie_break():
    shape = InputShape(8, 8, 1)
    assert max_param_member(SearchSpace.from_tuples([(3, 1)]), shape, 2) == Architecture(3, 1)
    # (6,1) and (64,0) have the same trainable parameter count on 8x8x1, 2 classes
    assert max_param_member(SearchSpace.from_tuples([(64, 0), (6, 1)]), shape, 2) == Architecture(6, 1)
    assert max_param_member(SearchSpace.from_tuples([(6, 1), (64, 0)]), shape, 2) == Architecture(64, 0)


def _calibrated(n, t_bar, watts=2.8):
    members = [(k, c) for k in range(1, n + 1) for c in range(1)][:n]
    return SearchSpace.from_tuples(members, t_bar_seconds=t_bar, e_bar_wh=t_bar * watts / 3600)


def test_crop_examples():
    space = _calibrated(30, 60.0)
    cropped = crop_space(space, ConstraintSet(xi_time_seconds=600))
    assert cropped.tuples() == space.tuples()[:10]
    assert len(crop_space(space, ConstraintSet(xi_time_seconds=0))) == 0


def test_crop_full_then_third_budget():
    space = _calibrated(66, 300.0)
    full = ConstraintSet(xi_time_seconds=9 * 3600 + 51 * 60, xi_energy_wh=16.5, w_bar_watts=2.8)
    assert crop_ratio(crop_space(space, full), space) == 1.0
    third = ConstraintSet(xi_time_seconds=full.xi_time_seconds / 3, xi_energy_wh=5.5,
                          w_bar_watts=2.8)
    n = len(crop_space(space, third))
    assert n == min(66, math.floor(11820 / 300), math.floor(5.5 / space.e_bar_wh)) == 23


def test_crop_requires_calibration():
    with pytest.raises(ValueError):
        crop_space(SearchSpace.from_tuples([(1, 0)]), ConstraintSet())


def test_literal_crop_admits_one_more():
    assert crop_size(30, 60.0, 0.0, 600.0, math.inf) == 10
    assert crop_size(30, 60.0, 0.0, 600.0, math.inf, literal=True) == 11
    assert crop_size(30, 60.0, 0.0, 610.0, math.inf, literal=True) == 11


def _crop_case(rng):
    n = rng.randint(1, 200)
    t_bar = rng.uniform(0.5, 120.0)
    watts = rng.uniform(0.5, 10.0)
    xi_time = rng.uniform(0.0, 1.5 * n * t_bar)
    xi_energy = rng.uniform(0.0, 1.5 * n * t_bar * watts / 3600)
    return n, t_bar, watts, xi_time, xi_energy


@pytest.mark.parametrize("seed", range(60))
def test_crop_formula_and_prefix(seed):
    n, t_bar, watts, xi_time, xi_energy = _crop_case(random.Random(seed))
    space = _calibrated(n, t_bar, watts)
    cons = ConstraintSet(xi_time_seconds=xi_time, xi_energy_wh=xi_energy, w_bar_watts=watts)
    cropped = crop_space(space, cons)
    expected = min(n, math.floor(xi_time / t_bar), math.floor(xi_energy / space.e_bar_wh))
    assert len(cropped) == expected
    assert cropped.tuples() == space.tuples()[:expected]
    assert len(cropped) * t_bar <= xi_time and len(cropped) * space.e_bar_wh <= xi_energy
    halved = crop_space(space, ConstraintSet(xi_time_seconds=xi_time / 2,
                                             xi_energy_wh=xi_energy / 2, w_bar_watts=watts))
    assert len(halved) <= len(cropped)
