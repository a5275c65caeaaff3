"""KL divergence between the full and sub-posteriors against subset distance, with the bound terms."""

import argparse
from pathlib import Path

from lwamcmc.harness import experiments as ex
from lwamcmc.harness import io
from lwamcmc.harness.config import load_config


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--config", default="configs/probit_full_mh.yaml")
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--r", type=float, nargs="+", default=[0.0, 0.01, 0.04, 0.07, 0.1])
    p.add_argument("--direction", type=int, choices=(-1, 1), default=-1,
                   help="-1: subsets with fewer ones than the full data, +1: more")
    p.add_argument("--out", default="runs/kl_table")
    args = p.parse_args()

    cfg = load_config(args.config)
    data = ex.make_data(cfg)
    model = ex.build_components(cfg, data).model
    rows, _ = ex.kl_table(data, model, args.n, args.r, args.direction)
    cols = ["r", "r_exact", "n", "ones", "kl", "kl_ratio", "psi", "b", "omega", "bound_holds"]
    io.write_table_csv(Path(args.out) / "kl_table.csv", rows, cols)
    print(f"data seed {data.meta['seed']}, ones {int(data.observations.sum())} of {data.N}")
    print(f"{'r':>6} {'KL':>10} {'ratio':>7} {'B':>10} {'psi':>10}")
    for r in rows:
        print(f"{r['r']:6.2f} {r['kl']:10.4f} {r['kl_ratio']:7.2f} {r['b']:10.4f} {r['psi']:10.1f}")


if __name__ == "__main__":
    main()
