"""Cost to reach near-Bayes test error: LWA against full M-H and the subsampling baseline."""

import argparse
import math

from lwamcmc.harness import experiments as ex


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--N", type=int, default=100_000)
    p.add_argument("--budget", type=int, default=200_000_000, help="cost units per sampler")
    p.add_argument("--scenarios", type=int, nargs="+", default=[0, 1, 2, 3])
    p.add_argument("--out", default="runs/classification_race")
    args = p.parse_args()

    res = ex.classification_race(N=args.N, n_test=args.N, scenarios=args.scenarios, budget=args.budget, out=args.out)
    for r in res["rows"]:
        c = r["cost_to_threshold"]
        shown = "never" if math.isinf(c) else f"{c:.3g}"
        print(f"scenario {r['scenario']} {r['sampler']:>9}: cost to {r['threshold']:.2e} error {shown}, "
              f"{r['transitions']} transitions, data per transition {r['mean_data_used_tail']:.0f}")
    s = res["summary"]
    print(f"LWA wins (>= 5x cheaper than both): {s['n_wins']}/{len(args.scenarios)}; "
          f"baseline data per transition {s['mhsublhd_fraction_of_N']:.3f} N")


if __name__ == "__main__":
    main()
