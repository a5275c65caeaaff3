"""Bandwidth and summary-statistic sweeps for LWA on ARMA(1,1) data (resumable)."""

import argparse
import os

from lwamcmc.harness import experiments as ex
from lwamcmc.harness.config import load_config


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--eps-config", default="configs/arma_eps_sweep.yaml")
    p.add_argument("--stat-config", default="configs/arma_stats.yaml")
    p.add_argument("--workers", type=int, default=os.cpu_count())
    p.add_argument("--replications", type=int, default=None)
    p.add_argument("--iterations", type=int, default=None)
    p.add_argument("--skip-stats", action="store_true")
    args = p.parse_args()

    for path in ([args.eps_config] if args.skip_stats else [args.eps_config, args.stat_config]):
        cfg = load_config(path)
        if args.replications:
            cfg.replications = args.replications
        if args.iterations:
            cfg.budget = {"iterations": args.iterations}
        res = ex.cmd_sweep(cfg, workers=args.workers)
        rep = res["report"]
        print(f"{cfg.name} ({rep['axis']} sweep) -> {cfg.out}")
        for label in rep["values"]:
            a = rep["aggregates"][label]
            print(f"  {label:>8}: refresh {a['refresh_rate']:.5f}, acceptance {a['acceptance_rate']:.3f}, "
                  f"mean {[round(v, 3) for v in a['mean_of_posterior_means']]}, rmse {a.get('rmse', float('nan')):.4f}")


if __name__ == "__main__":
    main()
