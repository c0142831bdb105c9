"""Differential-evolution search over source intensities and window probabilities.

The search vector is ``(mu, nu, omega, p_mu, p_nu, p_omega, p_vac[, epsilon])``;
``vac`` stays fixed at the template value. Every candidate is projected
before evaluation: box clip, intensity ordering, then a capped-simplex
projection of the four window probabilities.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .keyrate import scenario_keyrate
from .params import ProtocolKind, ProtocolParams, Scenario

INTENSITIES = ("mu", "nu", "omega")
PROBABILITIES = ("p_mu", "p_nu", "p_omega", "p_vac")


class InfeasibleSpaceError(RuntimeError):
    """No candidate in the initial population gave a positive key rate."""


@dataclass(frozen=True)
class SearchSpace:
    """Per-parameter bounds around a template parameter set."""

    template: ProtocolParams
    bounds: dict[str, tuple[float, float]]

    def __post_init__(self) -> None:
        for name in self.names:
            lo, hi = self.bounds[name]
            if not lo <= hi:
                raise ValueError(f"bound for {name} has lower > upper")
        lo_sum = sum(self.bounds[p][0] for p in PROBABILITIES)
        hi_sum = sum(self.bounds[p][1] for p in PROBABILITIES)
        if lo_sum > 1.0 + 1e-12 or hi_sum < 1.0 - 1e-12:
            raise ValueError("probability bounds exclude the simplex")
        if self.bounds["omega"][1] < self.template.vac:
            raise ValueError("omega range lies below the vacuum intensity")

    @property
    def names(self) -> tuple[str, ...]:
        extra = ("epsilon",) if self.template.kind is ProtocolKind.SNS else ()
        return INTENSITIES + PROBABILITIES + extra

    @property
    def lower(self) -> np.ndarray:
        return np.array([self.bounds[n][0] for n in self.names])

    @property
    def upper(self) -> np.ndarray:
        return np.array([self.bounds[n][1] for n in self.names])

    @classmethod
    def default(cls, template: ProtocolParams) -> "SearchSpace":
        b = {
            "mu": (0.01, 1.0),
            "nu": (0.005, 1.0),
            "omega": (max(template.vac, 1e-3), 0.3),
            "p_mu": (0.01, 0.99),
            "p_nu": (1e-4, 0.5),
            "p_omega": (1e-3, 0.6),
            "p_vac": (1e-3, 0.3),
        }
        if template.kind is ProtocolKind.SNS:
            b["epsilon"] = (0.01, 0.5)
        return cls(template, b)

    def vector(self, params: ProtocolParams) -> np.ndarray:
        return np.array([getattr(params, n) for n in self.names], dtype=float)

    def params(self, x: np.ndarray) -> ProtocolParams:
        return dataclasses.replace(self.template, **dict(zip(self.names, map(float, x))))


def _capped_simplex(q: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """Euclidean projection onto ``{lo <= p <= hi, sum p = 1}`` by bisection on the shift."""
    a = float(np.min(q - hi))
    b = float(np.max(q - lo))
    for _ in range(100):
        tau = 0.5 * (a + b)
        if np.clip(q - tau, lo, hi).sum() > 1.0:
            a = tau
        else:
            b = tau
    p = np.clip(q - 0.5 * (a + b), lo, hi)
    return p / p.sum()


def project(x: np.ndarray, space: SearchSpace) -> np.ndarray:
    """Map an arbitrary vector to a point that builds a valid ``ProtocolParams``."""
    lo, hi = space.lower, space.upper
    y = np.clip(np.asarray(x, dtype=float), lo, hi)
    strict = space.template.kind is ProtocolKind.MDI
    gap = 1e-6 if strict else 0.0
    # enforce mu >= nu >= omega >= vac inside the boxes
    y[2] = max(y[2], space.template.vac + gap)
    y[1] = min(max(y[1], y[2] + gap), hi[1])
    y[0] = min(max(y[0], y[1] + gap), hi[0])
    if y[1] < y[2] + gap or y[0] < y[1] + gap:
        y[2] = min(y[2], y[1] - gap)
        y[1] = min(y[1], y[0] - gap)
    p = slice(3, 7)
    lo_p, hi_p = np.maximum(lo[p], 0.0), np.minimum(hi[p], 1.0)
    if np.all(hi_p == lo_p):
        y[p] = lo_p
    else:
        y[p] = _capped_simplex(y[p], lo_p, hi_p)
    return y


@dataclass(frozen=True)
class DeConfig:
    population: int = 40
    f: float = 0.8
    cr: float = 0.9
    generations: int = 300
    seed: int = 0
    tol: float = 1e-9
    patience: int = 30

    def __post_init__(self) -> None:
        if self.population < 4:
            raise ValueError("population must be >= 4")
        if not 0.0 < self.f < 2.0:
            raise ValueError("F must lie in (0, 2)")
        if not 0.0 <= self.cr <= 1.0:
            raise ValueError("CR must lie in [0, 1]")


@dataclass
class OptimizeResult:
    best: ProtocolParams
    best_value: float
    trace: list[tuple[int, float, tuple[float, ...]]] = field(default_factory=list)
    evaluations: int = 0

    def trace_rows(self, names: Sequence[str]) -> list[dict]:
        return [
            {"generation": g, "best_R": v, **dict(zip(names, x))} for g, v, x in self.trace
        ]


def _safe(objective: Callable[[ProtocolParams], float], params: ProtocolParams) -> float:
    try:
        v = float(objective(params))
    except (ValueError, ZeroDivisionError, OverflowError):
        return 0.0
    return v if np.isfinite(v) else 0.0


def optimize(
    objective: Callable[[ProtocolParams], float],
    space: SearchSpace,
    cfg: DeConfig = DeConfig(),
    map_fn: Callable = map,
) -> OptimizeResult:
    """Maximize ``objective`` with DE/rand/1/bin and elitist one-to-one selection.

    ``map_fn`` may be a pool's ``map``; results are consumed in order, so
    the search is deterministic for a fixed seed whatever the worker count.
    """
    rng = np.random.default_rng(cfg.seed)
    lo, hi = space.lower, space.upper
    dim = lo.size
    n = cfg.population

    def evaluate(pop: np.ndarray) -> np.ndarray:
        return np.array(list(map_fn(lambda x: _safe(objective, space.params(x)), list(pop))))

    pop = np.array([project(lo + rng.random(dim) * (hi - lo), space) for _ in range(n)])
    fit = evaluate(pop)
    evals = n
    if not np.any(fit > 0):
        raise InfeasibleSpaceError("no positive key rate in the initial population")
    best = int(np.argmax(fit))
    trace = [(0, float(fit[best]), tuple(map(float, pop[best])))]
    stale = 0
    for gen in range(1, cfg.generations + 1):
        trial = np.empty_like(pop)
        for i in range(n):
            others = [j for j in range(n) if j != i]
            a, b, c = rng.choice(others, 3, replace=False)
            mutant = pop[a] + cfg.f * (pop[b] - pop[c])
            cross = rng.random(dim) < cfg.cr
            cross[rng.integers(dim)] = True
            trial[i] = project(np.where(cross, mutant, pop[i]), space)
        tfit = evaluate(trial)
        evals += n
        better = tfit >= fit
        pop[better] = trial[better]
        fit[better] = tfit[better]
        prev = trace[-1][1]
        best = int(np.argmax(fit))
        trace.append((gen, float(fit[best]), tuple(map(float, pop[best]))))
        stale = stale + 1 if fit[best] - prev <= cfg.tol * max(abs(prev), 1e-300) else 0
        if stale >= cfg.patience:
            break
    return OptimizeResult(space.params(pop[best]), float(fit[best]), trace, evals)


def scenario_objective(scenario: Scenario, finite: bool = True) -> Callable[[ProtocolParams], float]:
    """Analytic-tally key rate for the scenario's system and fiber."""

    def objective(params: ProtocolParams) -> float:
        s = dataclasses.replace(scenario, protocol=params)
        return scenario_keyrate(s, finite).r_per_pulse

    return objective


def sensitivity_scan(
    params: ProtocolParams,
    space: SearchSpace,
    objective: Callable[[ProtocolParams], float],
    points: int = 21,
    names: Sequence[str] | None = None,
) -> dict[str, tuple[np.ndarray, np.ndarray]]:
    """One-dimensional sweeps of the objective through ``params`` within the bounds.

    Probability sweeps rebalance ``p_vac`` (or ``p_mu`` when sweeping
    ``p_vac``); points that leave the feasible set are dropped.
    """
    centre = space.vector(params)
    out = {}
    for name in names or space.names:
        k = space.names.index(name)
        lo, hi = space.bounds[name]
        grid = np.linspace(lo, hi, points)
        xs, ys = [], []
        for g in grid:
            x = centre.copy()
            x[k] = g
            if name in PROBABILITIES:
                other = space.names.index("p_vac" if name != "p_vac" else "p_mu")
                x[other] += centre[k] - g
            try:
                p = space.params(x)
            except ValueError:
                continue
            lo_o, hi_o = space.lower, space.upper
            if np.any(x < lo_o - 1e-12) or np.any(x > hi_o + 1e-12):
                continue
            xs.append(g)
            ys.append(_safe(objective, p))
        out[name] = (np.array(xs), np.array(ys))
    return out
