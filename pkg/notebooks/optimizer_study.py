"""DE search at 241 km SNS and one-dimensional sensitivity around the optimum."""

import numpy as np

from hybridqkd.optimize import DeConfig, SearchSpace, optimize, scenario_objective, sensitivity_scan
from hybridqkd.params import scenario_from_preset


def main() -> None:
    sc = scenario_from_preset("sns-241km")
    obj = scenario_objective(sc)
    space = SearchSpace.default(sc.protocol)
    base = obj(sc.protocol)
    res = optimize(obj, space, DeConfig(seed=1))
    print(f"published parameters R = {base:.4e}; DE R = {res.best_value:.4e} ({res.best_value / base:.2f}x)")
    for name in space.names:
        print(f"  {name:>8} {getattr(sc.protocol, name):.4f} -> {getattr(res.best, name):.4f}")
    for name, (xs, ys) in sensitivity_scan(res.best, space, obj, points=11).items():
        k = int(np.argmax(ys))
        print(f"  {name:>8} peak at {xs[k]:.4f} (R {ys[k]:.3e})")


if __name__ == "__main__":
    main()
