"""Command-line entry point: ``hybridqkd <command> ...``.

Commands: ``simulate``, ``keyrate``, ``optimize``, ``phase-demo``, ``sweep``.
Scenarios are preset names or paths to INI scenario files. Outputs go to
``--out`` or, by default, ``$HYBRIDQKD_OUT`` (falling back to ``./results``).
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import io
from .compensation import CompensationConfig, phase_demo
from .keyrate import (
    KeyRateReport,
    mdi_double_scanning_keyrate,
    mdi_keyrate_from_values,
    plob_bound,
    sns_aopp_keyrate,
    sns_keyrate_from_tally,
)
from .optimize import DeConfig, InfeasibleSpaceError, SearchSpace, optimize, scenario_objective
from .params import (
    PRESETS,
    ProtocolKind,
    Scenario,
    ScenarioError,
    channel_transmittance,
    dump_scenario,
    parse_scenario,
    scenario_from_preset,
)
from .protocol import TallySheet, mdi_expected_tally, run_mdi_batch, run_sns_batch, sns_expected_tally
from .reported import MDI_REPORTED, SNS_REPORTED

logger = logging.getLogger("hybridqkd")

FIG5_SCENARIOS = (
    "mdi-150km", "mdi-241km", "sns-241km", "sns-310km", "sns-351km", "sns-400km", "sns-431km",
)


class CliError(Exception):
    pass


def resolve_scenario(ref: str) -> Scenario:
    """Preset name or path to an INI scenario file."""
    if ref in PRESETS:
        return scenario_from_preset(ref)
    path = Path(ref)
    if path.is_file():
        return parse_scenario(path.read_text(encoding="utf-8"))
    raise CliError(f"unknown scenario {ref!r}; presets: {', '.join(sorted(PRESETS))}")


def _scenario_arg(args) -> str:
    ref = args.scenario_opt or args.scenario
    if ref is None:
        raise CliError("no scenario given")
    return ref


def _out_dir(args) -> Path:
    out = Path(args.out) if args.out else io.default_out_dir()
    out.mkdir(parents=True, exist_ok=True)
    return out


def _stem(scenario: Scenario) -> str:
    return scenario.name if scenario.name else "scenario"


def _tally(scenario: Scenario, mode: str, windows: float | None, seed: int, threads: int) -> TallySheet:
    sys_, params, fiber = scenario.as_tuple()
    sns = params.kind is ProtocolKind.SNS
    if mode == "analytic":
        if sns:
            return sns_expected_tally(params, sys_, fiber, windows)
        return mdi_expected_tally(params, sys_, fiber, windows)
    n = int(windows if windows is not None else 1e9)
    rng = np.random.default_rng(seed)
    if sns:
        return run_sns_batch(params, sys_, fiber, None, n, rng, threads=threads)
    return run_mdi_batch(params, sys_, fiber, n, rng, threads=threads)


def _tally_rows(tally: TallySheet):
    return [(label, value) for label, value in tally.rows()]


def cmd_simulate(args) -> int:
    ref = _scenario_arg(args)
    sc = resolve_scenario(ref)
    tally = _tally(sc, args.mode, args.windows, args.seed, args.threads)
    out = _out_dir(args)
    stem = f"{_stem(sc)}-{args.mode}"
    man = io.RunManifest("simulate", sc.name, args.seed, list(args.argv), {
        "mode": args.mode, "windows": tally.windows, "threads": args.threads,
    })
    man.add(io.write_table(out / f"{stem}-tally.tsv", ("row", "value"), _tally_rows(tally)))
    man.add(io.write_json(out / f"{stem}-tally.json", tally.to_records()))
    man.add(io.write_text(out / f"{stem}-scenario.ini", dump_scenario(sc)))
    man.write(out, stem)
    print(f"wrote {stem} tally ({tally.windows:.6g} windows) to {out}")
    return 0


def paper_value_report(name: str, sc: Scenario, finite: bool) -> KeyRateReport:
    """Key rate from the published intermediates for a preset."""
    sys_ = sc.system
    eta = channel_transmittance(sc.fiber)
    if name in SNS_REPORTED:
        rep = SNS_REPORTED[name]
        return sns_aopp_keyrate(rep.aopp_inputs(), sys_, rep.n, finite, eta)
    if name in MDI_REPORTED:
        rep = MDI_REPORTED[name]
        return mdi_keyrate_from_values(
            rep.n11, rep.e_ph, rep.detected["mu-mu"], rep.qber["mu-mu"], sys_, rep.n, finite, eta
        )
    raise CliError(f"no published intermediates for {name!r}")


def scenario_report(sc: Scenario, finite: bool, tally: TallySheet | None = None) -> KeyRateReport:
    sys_, params, fiber = sc.as_tuple()
    eta = channel_transmittance(fiber)
    if tally is None:
        tally = _tally(sc, "analytic", None, 0, 1)
    if tally.total_effective <= 0:
        return KeyRateReport(
            params.kind.value, 0.0, 0.0, 0.0, 0.5, 0.0, 0.0, plob_bound(eta), finite,
            tally.windows, True, {"reason": "no effective detections"},
        )
    if tally.kind is ProtocolKind.SNS:
        return sns_keyrate_from_tally(tally, params, sys_, finite, eta)
    return mdi_double_scanning_keyrate(tally, params, sys_, finite, eta)


def _sweep_rows(finite: bool, paper_values: bool):
    rows = []
    for name in FIG5_SCENARIOS:
        sc = scenario_from_preset(name)
        rep = paper_value_report(name, sc, finite) if paper_values else scenario_report(sc, finite)
        rows.append((
            name, sc.protocol.kind.value, sc.fiber.total_length, round(sc.fiber.total_loss_db, 4),
            rep.r_per_pulse, rep.plob_per_pulse, rep.exceeds_plob,
        ))
    return rows


SWEEP_COLUMNS = ("scenario", "protocol", "distance_km", "loss_dB", "R_bit_per_pulse", "PLOB", "exceeds_PLOB")


def _write_sweep(args, out: Path, command: str) -> int:
    rows = _sweep_rows(args.finite, args.paper_values)
    src = "paper" if args.paper_values else "simulated"
    stem = f"fig5-{src}-{'finite' if args.finite else 'asymptotic'}"
    man = io.RunManifest(command, "fig5", None, list(args.argv), {
        "finite": args.finite, "paper_values": args.paper_values,
    })
    man.add(io.write_table(out / f"{stem}.tsv", SWEEP_COLUMNS, rows))
    man.write(out, stem)
    for r in rows:
        flag = "above" if r[6] else "below"
        print(f"{r[0]:>10}  {r[3]:6.2f} dB  R={r[4]:.3e}  PLOB={r[5]:.3e}  {flag}")
    return 0


def cmd_keyrate(args) -> int:
    if args.sweep:
        if args.sweep != "fig5":
            raise CliError(f"unknown sweep {args.sweep!r}")
        return _write_sweep(args, _out_dir(args), "keyrate")
    tally = None
    if args.tally:
        path = Path(args.tally)
        if not path.is_file():
            raise CliError(f"tally file {args.tally!r} not found")
        tally = TallySheet.from_records(io.read_json(path))
    ref = args.scenario_opt or args.scenario
    if ref is None:
        ref = "sns-241km" if tally is None or tally.kind is ProtocolKind.SNS else "mdi-150km"
    sc = resolve_scenario(ref)
    if args.paper_values:
        report = paper_value_report(sc.name, sc, args.finite)
    else:
        report = scenario_report(sc, args.finite, tally)
    out = _out_dir(args)
    stem = f"{_stem(sc)}-keyrate{'-paper' if args.paper_values else ''}"
    man = io.RunManifest("keyrate", sc.name, None, list(args.argv), {
        "finite": args.finite, "paper_values": args.paper_values, "tally": args.tally,
    })
    man.add(io.write_json(out / f"{stem}.json", report.to_records()))
    man.write(out, stem)
    print(
        f"{sc.name}: R = {report.r_per_pulse:.4e} bit/pulse ({report.r_bps:.4g} bps), "
        f"PLOB = {report.plob_per_pulse:.4e}, exceeds PLOB: {report.exceeds_plob}"
    )
    return 0


def cmd_optimize(args) -> int:
    sc = resolve_scenario(_scenario_arg(args))
    space = SearchSpace.default(sc.protocol)
    cfg = DeConfig(
        population=args.population, generations=args.generations, seed=args.seed,
    )
    objective = scenario_objective(sc, args.finite)
    if args.threads > 1:
        with ThreadPoolExecutor(max_workers=args.threads) as pool:
            result = optimize(objective, space, cfg, map_fn=pool.map)
    else:
        result = optimize(objective, space, cfg)
    out = _out_dir(args)
    stem = f"{_stem(sc)}-optimized"
    best = dataclasses.replace(sc, protocol=result.best)
    man = io.RunManifest("optimize", sc.name, args.seed, list(args.argv), {
        "population": cfg.population, "generations": cfg.generations, "f": cfg.f, "cr": cfg.cr,
        "finite": args.finite,
    })
    # plain INI so the file feeds straight back into `simulate`
    (out / f"{stem}.ini").write_text(dump_scenario(best), encoding="utf-8")
    man.add(out / f"{stem}.ini")
    rows = [(g, v, *x) for g, v, x in result.trace]
    man.add(io.write_table(out / f"{stem}-trace.tsv", ("generation", "best_R", *space.names), rows))
    man.write(out, stem)
    print(f"{sc.name}: best R = {result.best_value:.4e} bit/pulse after {len(result.trace) - 1} generations")
    return 0


def cmd_phase_demo(args) -> int:
    cfg = CompensationConfig(period=args.period)
    demo = phase_demo(args.distance, args.duration, args.seed, cfg)
    out = _out_dir(args)
    stem = f"phase-{args.distance:g}km"
    deg = np.degrees
    rows = zip(
        demo["t"], deg(demo["phi_channel"]), deg(demo["arm_difference"]),
        deg(demo["error_compensated"]), deg(demo["error_uncompensated"]),
    )
    cols = ("t_s", "phi_channel_deg", "arm_difference_deg", "error_compensated_deg", "error_uncompensated_deg")
    man = io.RunManifest("phase-demo", stem, args.seed, list(args.argv), {
        "distance_km": args.distance, "duration_s": args.duration, "period_s": args.period,
    })
    man.add(io.write_table(out / f"{stem}-traces.tsv", cols, (tuple(map(float, r)) for r in rows)))
    edges = np.arange(-45.0, 46.0, 1.0)
    hist, _ = np.histogram(np.clip(deg(demo["error_compensated"]), -45, 45), bins=edges)
    man.add(io.write_table(
        out / f"{stem}-histogram.tsv", ("bin_lo_deg", "bin_hi_deg", "count"),
        zip(edges[:-1].tolist(), edges[1:].tolist(), hist.tolist()),
    ))
    summary = {
        "std_deg": demo["std_deg"],
        "std_deg_uncompensated": demo["std_deg_uncompensated"],
        "duty_cycle": demo["duty_cycle"],
        "chosen_slices": list(map(int, demo["chosen_slices"])),
    }
    man.add(io.write_json(out / f"{stem}-summary.json", summary))
    man.write(out, stem)
    print(
        f"std(|dphi_error|) = {demo['std_deg']:.3f} deg compensated, "
        f"{demo['std_deg_uncompensated']:.3f} deg uncompensated; duty cycle {demo['duty_cycle']:.4f}"
    )
    return 0


def cmd_sweep(args) -> int:
    return _write_sweep(args, _out_dir(args), "sweep")


def _count(text: str) -> float:
    v = float(text)
    if v < 1:
        raise argparse.ArgumentTypeError("window count must be >= 1")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hybridqkd", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, scenario=True):
        if scenario:
            sp.add_argument("scenario", nargs="?", help="preset name or INI file")
            sp.add_argument("--scenario", dest="scenario_opt", help="same as the positional argument")
        sp.add_argument("--out", help=f"output directory (default ${io.OUT_ENV} or ./results)")
        sp.add_argument("--threads", type=int, default=1)

    def finite_flags(sp):
        g = sp.add_mutually_exclusive_group()
        g.add_argument("--finite", dest="finite", action="store_true", default=True)
        g.add_argument("--asymptotic", dest="finite", action="store_false")

    s = sub.add_parser("simulate", help="tally a scenario")
    common(s)
    s.add_argument("--mode", choices=("analytic", "monte_carlo"), default="analytic")
    s.add_argument("--windows", type=_count, default=None, help="default: scenario N (analytic), 1e9 (Monte Carlo)")
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_simulate)

    k = sub.add_parser("keyrate", help="key rate with the PLOB comparison")
    common(k)
    finite_flags(k)
    k.add_argument("--tally", help="tally JSON written by simulate")
    k.add_argument("--paper-values", action="store_true", help="inject published intermediates")
    k.add_argument("--sweep", help="'fig5' for the rate-distance dataset")
    k.set_defaults(func=cmd_keyrate)

    o = sub.add_parser("optimize", help="differential-evolution parameter search")
    common(o)
    finite_flags(o)
    o.add_argument("--seed", type=int, default=0)
    o.add_argument("--population", type=int, default=40)
    o.add_argument("--generations", type=int, default=300)
    o.set_defaults(func=cmd_optimize)

    d = sub.add_parser("phase-demo", help="closed-loop phase compensation traces")
    common(d, scenario=False)
    d.add_argument("--distance", type=float, default=300.0, help="km")
    d.add_argument("--duration", type=float, default=60.0, help="s")
    d.add_argument("--period", type=float, default=10.0, help="compensation period, s")
    d.add_argument("--seed", type=int, default=0)
    d.set_defaults(func=cmd_phase_demo)

    w = sub.add_parser("sweep", help="rate-distance dataset for every preset with the PLOB bound")
    common(w, scenario=False)
    finite_flags(w)
    w.add_argument("--paper-values", action="store_true")
    w.set_defaults(func=cmd_sweep)
    return p


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    args.argv = argv
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (CliError, ScenarioError, InfeasibleSpaceError) as exc:
        print(f"hybridqkd: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
