"""Command-line entry point: ``lwamcmc {generate,run,sweep,analyze,oracle-check}``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from .. import analysis
from ..core import ConfigError
from ..models import make_model
from . import experiments as ex
from . import io
from .config import load_config

EXIT_OK, EXIT_CONFIG, EXIT_ACCEPTANCE = 0, 2, 3
REPORTS = ("kl-table", "optimal-subsets", "refresh", "data-used", "curves")


def _overrides(args) -> list:
    out = []
    if getattr(args, "seed", None) is not None:
        out.append((["seed"], int(args.seed)))
    if getattr(args, "budget_iters", None) is not None:
        out.append((["budget"], {"iterations": int(args.budget_iters)}))
    if getattr(args, "budget_cost", None) is not None:
        out.append((["budget"], {"cost_units": int(args.budget_cost)}))
    if getattr(args, "workers", None) is not None:
        out.append((["workers"], int(args.workers)))
    if getattr(args, "dataset", None) is not None:
        out.append((["data", "path"], str(args.dataset)))
    return out


def _cfg(args):
    cfg = load_config(args.config, _overrides(args))
    if args.out is not None:
        cfg.out = str(args.out)
    return cfg


def cmd_generate(args) -> int:
    cfg = _cfg(args)
    data = ex.make_data(cfg)
    stem = Path(cfg.out) / "dataset"
    io.write_dataset(stem, data, seed=data.meta.get("seed"), params={"model": cfg.model, "data": cfg.data})
    print(f"wrote {stem.with_suffix('.bin')} (N={data.N}, m={data.m}, flavor={data.flavor})")
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = _cfg(args)
    summary = ex.cmd_run(cfg)
    agg = summary["aggregate"]
    print(f"{cfg.replications} replication(s) -> {cfg.out}: acceptance {agg['acceptance_rate']:.3f}, "
          f"refresh {agg['refresh_rate']:.4f}, cost {agg['total_cost']}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _cfg(args)
    if cfg.sweep is None:
        raise ConfigError("sweep needs a 'sweep' section with axis and values")
    res = ex.cmd_sweep(cfg)
    for label, agg in res["report"]["aggregates"].items():
        extra = f", rmse {agg['rmse']:.4f}" if "rmse" in agg else ""
        print(f"{res['report']['axis']}={label}: refresh {agg['refresh_rate']:.5f}, "
              f"acceptance {agg['acceptance_rate']:.3f}{extra}")
    return EXIT_OK


def _trace_files(path: Path) -> list:
    files = sorted(path.rglob("*.csv"))
    files = [f for f in files if f.name.startswith(("trace_", "rep_", "race_"))]
    if not files:
        raise FileNotFoundError(f"no trace files under {path}")
    return files


def cmd_analyze(args) -> int:
    out = Path(args.out or ".")
    if args.report in ("kl-table", "optimal-subsets"):
        if args.config is None:
            raise ConfigError(f"report {args.report} needs --config describing the probit instance")
        cfg = _cfg(args)
        data = ex.make_data(cfg)
        model = make_model("probit", cfg.model.get("params"))
        if args.report == "kl-table":
            rows = []
            for direction in (-1, 1):
                part, _ = ex.kl_table(data, model, args.n, args.r_values, direction)
                for r in part:
                    r["direction"] = direction
                rows += part
            cols = ["direction", "r", "r_exact", "n", "ones", "kl", "kl_ratio", "psi", "b", "omega", "bound_holds"]
        else:
            rows = ex.optimal_subset_table(data, model, args.n_values)
            cols = ["n", "ones", "mean", "sd", "sd_sqrt_n", "full"]
        io.write_table_csv(out / f"{args.report}.csv", rows, cols)
        io.write_json(out / f"{args.report}.json", {"rows": rows, "data_seed": data.meta.get("seed")})
        for r in rows:
            print(", ".join(f"{c}={r[c]:.6g}" if isinstance(r[c], float) else f"{c}={r[c]}" for c in cols))
        return EXIT_OK

    if args.traces is None:
        raise ConfigError(f"report {args.report} needs --traces")
    files = _trace_files(Path(args.traces))
    rows = []
    for f in files:
        tr = io.read_trace_csv(f)
        b = min(args.burn_in, len(tr) - 1)
        if args.report == "refresh":
            rows.append({"trace": str(f.relative_to(args.traces)), "refresh_rate": analysis.refresh_rate(tr, b)})
        elif args.report == "data-used":
            rows.append({"trace": str(f.relative_to(args.traces)), "mean_data_used": analysis.mean_data_used(tr, b)})
        else:
            if args.theta_star is None:
                raise ConfigError("curves report needs --theta-star")
            costs = np.unique(np.geomspace(max(tr.cost[0], 1), tr.cost[-1], args.points).astype(np.int64))
            for c, d in analysis.mean_distance_curve(tr, args.theta_star, costs):
                rows.append({"trace": str(f.relative_to(args.traces)), "cost": int(c), "distance": d})
    key = {"refresh": ["trace", "refresh_rate"], "data-used": ["trace", "mean_data_used"],
           "curves": ["trace", "cost", "distance"]}[args.report]
    io.write_table_csv(out / f"{args.report}.csv", rows, key)
    if args.report != "curves":
        vals = [r[key[1]] for r in rows]
        print(f"{len(vals)} trace(s): mean {key[1]} {np.mean(vals):.6g}")
    else:
        print(f"wrote {len(rows)} curve points to {out / 'curves.csv'}")
    return EXIT_OK


def cmd_oracle_check(args) -> int:
    cfg = _cfg(args)
    res = ex.oracle_check(cfg, iterations=args.iterations)
    io.write_json(Path(cfg.out) / "oracle_check.json", res)
    for c in res["checks"]:
        print(f"{'PASS' if c['passed'] else 'FAIL'} {c['name']}: {c['value']:.3g} (tolerance {c['tolerance']:g})")
    return EXIT_OK if res["passed"] else EXIT_ACCEPTANCE


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lwamcmc", description="Subset-weighted MCMC experiments.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config_required=True):
        sp.add_argument("--config", required=config_required, help="YAML or JSON experiment config")
        sp.add_argument("--out", default=None, help="output directory")
        sp.add_argument("--seed", type=int, default=None, help="base seed (64-bit unsigned)")

    def budgets(sp):
        g = sp.add_mutually_exclusive_group()
        g.add_argument("--budget-cost", type=int, default=None, help="cost-unit budget per chain")
        g.add_argument("--budget-iters", type=int, default=None, help="iteration budget per chain")

    sp = sub.add_parser("generate", help="simulate a dataset")
    common(sp)
    sp.set_defaults(func=cmd_generate)

    sp = sub.add_parser("run", help="run replicated chains")
    common(sp)
    budgets(sp)
    sp.add_argument("--dataset", default=None, help="dataset file written by generate")
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("sweep", help="run a resumable setting sweep")
    common(sp)
    budgets(sp)
    sp.add_argument("--workers", type=int, default=None)
    sp.add_argument("--dataset", default=None)
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("analyze", help="compute reports from configs or traces")
    common(sp, config_required=False)
    sp.add_argument("--report", choices=REPORTS, required=True)
    sp.add_argument("--traces", default=None, help="directory of trace CSVs")
    sp.add_argument("--burn-in", type=int, default=10_000)
    sp.add_argument("--n", type=int, default=100, help="subset size for the KL table")
    sp.add_argument("--r-values", type=float, nargs="+", default=[0.0, 0.01, 0.04, 0.07, 0.1])
    sp.add_argument("--n-values", type=int, nargs="+", default=[50, 100, 1000, 5000])
    sp.add_argument("--theta-star", type=float, nargs="+", default=None)
    sp.add_argument("--points", type=int, default=50)
    sp.set_defaults(func=cmd_analyze)

    sp = sub.add_parser("oracle-check", help="enumeration checks on a small instance")
    common(sp)
    sp.add_argument("--iterations", type=int, default=1_000_000)
    sp.set_defaults(func=cmd_oracle_check)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
