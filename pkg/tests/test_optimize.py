import dataclasses

import numpy as np
import pytest

from hybridqkd.optimize import (
    DeConfig,
    InfeasibleSpaceError,
    SearchSpace,
    optimize,
    project,
    scenario_objective,
    sensitivity_scan,
)
from hybridqkd.params import PRESETS, scenario_from_preset

TEMPLATE = PRESETS["sns-241km"].protocol
TARGET = {"mu": 0.4, "nu": 0.2, "omega": 0.1, "p_mu": 0.5, "p_nu": 0.1, "p_omega": 0.3, "p_vac": 0.1, "epsilon": 0.3}


def bowl(p):
    return 1.0 - sum((getattr(p, k) - v) ** 2 for k, v in TARGET.items())


def test_quadratic_bowl_optimum():
    space = SearchSpace.default(TEMPLATE)
    res = optimize(bowl, space, DeConfig(population=30, generations=600, seed=3, tol=0, patience=10_000))
    for k, v in TARGET.items():
        assert getattr(res.best, k) == pytest.approx(v, abs=1e-6)


def test_determinism():
    space = SearchSpace.default(TEMPLATE)
    cfg = DeConfig(population=12, generations=20, seed=5)
    a = optimize(bowl, space, cfg)
    b = optimize(bowl, space, cfg)
    assert a.trace == b.trace
    c = optimize(bowl, space, dataclasses.replace(cfg, seed=6))
    assert c.trace != a.trace


def test_best_so_far_non_decreasing():
    res = optimize(bowl, SearchSpace.default(TEMPLATE), DeConfig(population=10, generations=40, seed=1))
    vals = [v for _, v, _ in res.trace]
    assert all(b >= a for a, b in zip(vals, vals[1:]))


@pytest.mark.parametrize("preset", ["sns-241km", "mdi-150km"])
def test_projection_builds_valid_params(preset):
    space = SearchSpace.default(PRESETS[preset].protocol)
    rng = np.random.default_rng(0)
    for _ in range(2000):
        x = rng.normal(0, 2, space.lower.size)
        y = project(x, space)
        p = space.params(y)  # raises if invalid
        assert np.all(y >= space.lower - 1e-12) and np.all(y <= space.upper + 1e-12)
        assert p.p_mu + p.p_nu + p.p_omega + p.p_vac == pytest.approx(1.0)


def test_no_evaluation_outside_bounds():
    space = SearchSpace.default(TEMPLATE)
    seen = []

    def spy(p):
        seen.append(space.vector(p))
        return bowl(p)

    optimize(spy, space, DeConfig(population=8, generations=10, seed=2))
    arr = np.array(seen)
    assert np.all(arr >= space.lower - 1e-12) and np.all(arr <= space.upper + 1e-12)


def test_infeasible_space_raises():
    with pytest.raises(InfeasibleSpaceError):
        optimize(lambda p: 0.0, SearchSpace.default(TEMPLATE), DeConfig(population=6, generations=3))


def test_objective_errors_count_as_zero():
    def flaky(p):
        if p.mu > 0.8:
            raise ValueError("bad")
        return p.mu

    res = optimize(flaky, SearchSpace.default(TEMPLATE), DeConfig(population=10, generations=30, seed=0))
    assert res.best.mu <= 0.8


def test_collapsed_bounds_return_the_point():
    b = {k: (v, v) for k, v in TARGET.items()}
    space = SearchSpace(TEMPLATE, b)
    res = optimize(bowl, space, DeConfig(population=5, generations=5))
    for k, v in TARGET.items():
        assert getattr(res.best, k) == pytest.approx(v)
    assert res.best_value == pytest.approx(1.0)


def test_bad_bounds_rejected():
    b = dict(SearchSpace.default(TEMPLATE).bounds)
    b["mu"] = (0.5, 0.1)
    with pytest.raises(ValueError):
        SearchSpace(TEMPLATE, b)
    b = dict(SearchSpace.default(TEMPLATE).bounds)
    b["p_mu"] = (0.0, 0.1)
    b["p_nu"] = b["p_omega"] = b["p_vac"] = (0.0, 0.1)
    with pytest.raises(ValueError):
        SearchSpace(TEMPLATE, b)
    with pytest.raises(ValueError):
        DeConfig(population=2)


def test_flat_objective_gives_flat_curves():
    space = SearchSpace.default(TEMPLATE)
    scan = sensitivity_scan(TEMPLATE, space, lambda p: 0.7, points=9)
    for xs, ys in scan.values():
        assert len(xs) > 0
        assert np.all(ys == 0.7)


def test_epsilon_sensitivity_peaks_inside():
    sc = scenario_from_preset("sns-241km")
    space = SearchSpace.default(sc.protocol)
    xs, ys = sensitivity_scan(sc.protocol, space, scenario_objective(sc), points=25, names=["epsilon"])["epsilon"]
    k = int(np.argmax(ys))
    assert 0 < k < len(xs) - 1
    assert 0.15 < xs[k] < 0.4
    # unimodal: rises then falls
    d = np.sign(np.diff(ys))
    assert np.all(d[:k] >= 0) and np.all(d[k:] <= 0)


def test_short_key_rate_search_improves():
    sc = scenario_from_preset("sns-241km")
    res = optimize(scenario_objective(sc), SearchSpace.default(sc.protocol), DeConfig(population=16, generations=15, seed=1))
    assert res.best_value > res.trace[0][1]
    assert res.evaluations == 16 * len(res.trace)
