"""Rate-distance dataset with the PLOB bound: simulated and published-intermediate rates."""

from hybridqkd.keyrate import fitted_loss_slope, rate_distance_sweep

SCENARIOS = ["mdi-150km", "mdi-241km", "sns-241km", "sns-310km", "sns-351km", "sns-400km", "sns-431km"]


def main() -> None:
    for finite in (False, True):
        rows = rate_distance_sweep(SCENARIOS, finite=finite)
        print(f"\n{'finite' if finite else 'asymptotic'}")
        for r in rows:
            flag = "above PLOB" if r.exceeds_plob else "below PLOB"
            print(f"{r.scenario:>10} {r.loss_db:6.2f} dB  R={r.r_per_pulse:.3e}  PLOB={r.plob:.3e}  {flag}")
        for proto in ("SNS", "MDI"):
            pts = [r for r in rows if r.protocol == proto and r.r_per_pulse > 0]
            if len(pts) > 1:
                s = fitted_loss_slope([r.loss_db for r in pts], [r.r_per_pulse for r in pts])
                print(f"  {proto} slope d log10 R / d loss = {s:.4f} per dB")


if __name__ == "__main__":
    main()
