"""Sub-posterior of an exactly matching subset for several subset sizes, next to the full posterior."""

import argparse
from pathlib import Path

from lwamcmc.harness import experiments as ex
from lwamcmc.harness import io
from lwamcmc.harness.config import load_config


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--config", default="configs/probit_full_mh.yaml")
    p.add_argument("--n", type=int, nargs="+", default=[50, 100, 1000, 5000])
    p.add_argument("--out", default="runs/optimal_subsets")
    args = p.parse_args()

    cfg = load_config(args.config)
    data = ex.make_data(cfg)
    model = ex.build_components(cfg, data).model
    rows = ex.optimal_subset_table(data, model, args.n)
    io.write_table_csv(Path(args.out) / "optimal_subsets.csv", rows, ["n", "ones", "mean", "sd", "sd_sqrt_n", "full"])
    for r in rows:
        tag = "full" if r["full"] else "subset"
        print(f"{tag:>6} n={r['n']:>6}: mean {r['mean']:.4f}, sd {r['sd']:.4f}, sd*sqrt(n) {r['sd_sqrt_n']:.3f}")


if __name__ == "__main__":
    main()
