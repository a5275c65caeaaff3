"""Experiment building blocks shared by the CLI, the scripts and the acceptance suite."""

from __future__ import annotations

import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .. import analysis
from ..core import ConfigError, Dataset, RngStream, SubsetSelection, TIME_SERIES, split_stream
from ..models import (
    make_model,
    simulate_arma,
    simulate_gaussmix,
    simulate_probit,
)
from ..samplers import (
    AdaptConfig,
    RwProposal,
    SamplerConfig,
    SubsetWeigher,
    Trace,
    run_chain,
    run_subset_chain,
)
from ..subset_kernels import UniformSwap, WindowMixture, accept_subset, make_subset_proposal
from ..summary import WindowStatCache, _SeriesStatistic, make_statistic
from . import io
from .config import ExperimentConfig

# spawn-key root for data generation, kept apart from replication ids 0..R-1
DATA_STREAM = 2**32

DEFAULT_THETA_STAR = {"probit": 1.0, "arma": [0.5, 0.7, 0.1]}
DEFAULT_TARGET = {"probit": 0.3, "arma": 0.35, "gaussmix": 0.3}


# ---------------------------------------------------------------- data


def find_probit_seed(N: int, theta_star: float, gamma: float, multiple: int, start: int,
                     max_tries: int = 100_000) -> int:
    """First seed >= ``start`` whose simulated one-count is divisible by ``multiple``."""
    for seed in range(start, start + max_tries):
        data = simulate_probit(N, theta_star, gamma, RngStream(seed, (DATA_STREAM,)))
        if int(data.observations.sum()) % multiple == 0:
            return seed
    raise RuntimeError(f"no seed in [{start}, {start + max_tries}) gives a one-count divisible by {multiple}")


def make_data(cfg: ExperimentConfig) -> Dataset:
    """Load, build inline, or simulate the dataset described by ``cfg.data``."""
    d = cfg.data
    kind = cfg.model_kind
    if "path" in d:
        return io.read_dataset(d["path"])
    if "values" in d:
        flavor = TIME_SERIES if kind == "arma" else "iid"
        return Dataset(np.asarray(d["values"], dtype=float), labels=d.get("labels"), flavor=flavor,
                       meta={"inline": True})
    p = d.get("params", {})
    N = int(d["N"])
    seed = cfg.data_seed
    if kind == "probit":
        theta_star, gamma = float(p.get("theta_star", 1.0)), float(cfg.model["params"].get("gamma", 1.0))
        if p.get("ones_multiple"):
            seed = find_probit_seed(N, theta_star, gamma, int(p["ones_multiple"]), seed)
        data = simulate_probit(N, theta_star, gamma, RngStream(seed, (DATA_STREAM,)))
    elif kind == "arma":
        data = simulate_arma(N, p.get("theta_star", DEFAULT_THETA_STAR["arma"]),
                             float(cfg.model["params"].get("sigma", 1.0)), tuple(p.get("mu0", (0.0, 1.0))),
                             RngStream(seed, (DATA_STREAM,)))
    elif kind == "gaussmix":
        data = simulate_gaussmix(N, p.get("truth"), RngStream(seed, (DATA_STREAM,)))
    else:
        raise ConfigError(f"unknown model kind {kind!r}")
    meta = dict(data.meta, seed=seed)
    return Dataset(data.observations, data.labels, data.flavor, meta)


def theta_star_of(cfg: ExperimentConfig, data: Optional[Dataset] = None):
    if data is not None and "theta_star" in data.meta:
        return np.atleast_1d(np.asarray(data.meta["theta_star"], dtype=float))
    ts = cfg.data.get("params", {}).get("theta_star", DEFAULT_THETA_STAR.get(cfg.model_kind))
    return None if ts is None else np.atleast_1d(np.asarray(ts, dtype=float))


# ---------------------------------------------------------------- components


@dataclass
class Components:
    model: object
    stat: object
    subset_proposal: object
    rw: RwProposal
    sampler: SamplerConfig
    init_theta: Optional[np.ndarray]


_TABLES: dict = {}


def _window_stat(stat, data: Dataset, n: int):
    # window tables are reused across replications and settings in one process
    key = (id(data), stat.name, n)
    if key not in _TABLES:
        _TABLES[key] = WindowStatCache(stat, data, n)
    return _TABLES[key]


def build_components(cfg: ExperimentConfig, data: Dataset) -> Components:
    model = make_model(cfg.model_kind, cfg.model.get("params"))
    model.check_data(data)
    s = cfg.sampler
    kind = s["kind"]
    n = s.get("n")
    stat = prop = None
    if kind == "lwa":
        stat = make_statistic(cfg.statistic["kind"], cfg.statistic.get("params"), data)
        if isinstance(stat, _SeriesStatistic) and data.flavor == TIME_SERIES:
            stat = _window_stat(stat, data, n)
        prop = make_subset_proposal(cfg.subset_proposal["kind"], cfg.subset_proposal.get("params"), data.N, n)
    pc = cfg.proposal
    adapt = dict(pc.get("adapt", {}))
    adapt.setdefault("target", DEFAULT_TARGET[cfg.model_kind])
    rw = RwProposal.for_model(model, pc.get("scale", 0.1), AdaptConfig(**adapt))
    b = cfg.budget
    sc = SamplerConfig(n=n, eps=float(s.get("eps", 1.0)), L=int(s.get("L", 1)),
                       iterations=b.get("iterations"), cost_budget=b.get("cost_units"),
                       burn_in=cfg.burn_in, delta=float(s.get("delta", 0.1)),
                       batch_base=int(s.get("batch_base", 1000)))
    sc.validate(kind, data.N)
    init = None if cfg.init == "prior" else np.asarray(cfg.init, dtype=float)
    if init is not None and init.size != model.param_dim:
        raise ConfigError(f"init has {init.size} entries, the model has {model.param_dim} parameters")
    return Components(model, stat, prop, rw, sc, init)


def chain_stream(cfg: ExperimentConfig, replication: int) -> RngStream:
    return split_stream(RngStream(int(cfg.seed)), replication)


def run_replication(cfg: ExperimentConfig, data: Dataset, replication: int,
                    comps: Optional[Components] = None) -> Trace:
    comps = comps or build_components(cfg, data)
    return run_chain(cfg.sampler["kind"], comps.sampler, comps.model, data, chain_stream(cfg, replication),
                     comps.rw, comps.stat, comps.subset_proposal, init_theta=comps.init_theta)


def replication_summary(trace: Trace, burn_in: int, replication: int) -> dict:
    b = min(burn_in, len(trace) - 1)
    s = trace.summary(b)
    s["replication"] = replication
    s["stream_id"] = replication
    return s


# ---------------------------------------------------------------- run


def cmd_run(cfg: ExperimentConfig, data: Optional[Dataset] = None, out=None) -> dict:
    """Run ``cfg.replications`` chains; write trace CSVs, ``summary.json`` and ``run_meta.json``."""
    out = Path(out or cfg.out)
    data = data if data is not None else make_data(cfg)
    comps = build_components(cfg, data)
    reps = []
    t0 = time.time()
    for r in range(cfg.replications):
        tr = run_replication(cfg, data, r, comps)
        if cfg.write_traces:
            io.write_trace_csv(out / f"trace_{r:03d}.csv", tr)
        reps.append(replication_summary(tr, cfg.burn_in, r))
    # the output location is not a run input; leaving it out keeps summaries comparable across directories
    echoed = {k: v for k, v in cfg.to_dict().items() if k != "out"}
    summary = {"config": echoed, "replications": reps, "aggregate": aggregate_summaries(reps)}
    io.write_json(out / "summary.json", summary)
    io.write_json(out / "run_meta.json", {"wall_seconds": time.time() - t0, "finished_at": time.time()})
    return summary


def aggregate_summaries(reps: list, theta_star=None) -> dict:
    if not reps:
        return {}
    means = np.array([r["posterior_mean"] for r in reps])
    agg = {
        "replications": len(reps),
        "refresh_rate": float(np.mean([r["refresh_rate"] for r in reps])),
        "acceptance_rate": float(np.mean([r["acceptance_rate"] for r in reps])),
        "mean_data_used": float(np.mean([r["mean_data_used"] for r in reps])),
        "mean_of_posterior_means": means.mean(axis=0).tolist(),
        "total_cost": int(sum(r["total_cost"] for r in reps)),
    }
    if theta_star is not None:
        err = means - np.asarray(theta_star, dtype=float)
        agg["rmse"] = float(np.sqrt(np.mean(err ** 2)))
        agg["rmse_per_component"] = np.sqrt(np.mean(err ** 2, axis=0)).tolist()
    return agg


# ---------------------------------------------------------------- sweep


def _value_label(v) -> str:
    return str(v)


_CELL_DATA: dict = {}


def _cell_data(cfg: ExperimentConfig) -> Dataset:
    key = repr(sorted(cfg.data.items())), cfg.model_kind, repr(sorted(cfg.model.get("params", {}).items()))
    if key not in _CELL_DATA:
        _CELL_DATA[key] = make_data(cfg)
    return _CELL_DATA[key]


def _run_cell(cfg_dict: dict, axis: str, value, r: int, out: str) -> dict:
    from .config import from_dict

    base = from_dict(cfg_dict)
    cfg = base.with_setting(axis, value)
    cell = Path(out) / "cells" / f"{axis}={_value_label(value)}" / f"rep_{r:03d}.json"
    if cell.exists():
        return io.read_json(cell)
    data = _cell_data(base)
    t0 = time.time()
    tr = run_replication(cfg, data, r)
    if cfg.write_traces:
        io.write_trace_csv(cell.with_suffix(".csv"), tr)
    row = replication_summary(tr, cfg.burn_in, r)
    row.update({"axis": axis, "setting": _value_label(value), "sampler": cfg.sampler["kind"]})
    tmp = cell.with_suffix(".tmp")
    io.write_json(tmp, row)
    io.write_json(cell.with_suffix(".meta.json"), {"wall_seconds": time.time() - t0})
    os.replace(tmp, cell)
    return io.read_json(cell)


def sweep_cells(cfg: ExperimentConfig):
    if cfg.sweep is None:
        raise ConfigError("config has no sweep section")
    return [(v, r) for v in cfg.sweep["values"] for r in range(cfg.replications)]


def cmd_sweep(cfg: ExperimentConfig, out=None, workers: Optional[int] = None) -> dict:
    """Run every (setting, replication) cell; completed cells found on disk are reused."""
    out = Path(out or cfg.out)
    axis = cfg.sweep["axis"]
    cells = sweep_cells(cfg)
    for v in cfg.sweep["values"]:
        cfg.with_setting(axis, v)  # fail fast on inconsistent settings
    raw = cfg.to_dict()
    workers = int(workers or cfg.workers or 1)
    t0 = time.time()
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            futs = [ex.submit(_run_cell, raw, axis, v, r, str(out)) for v, r in cells]
            rows = [f.result() for f in futs]
    else:
        rows = [_run_cell(raw, axis, v, r, str(out)) for v, r in cells]
    data_meta = _cell_data(cfg).meta
    ts = theta_star_of(cfg, _cell_data(cfg))
    d = len(rows[0]["posterior_mean"])
    tidy = []
    for row in rows:
        t = {k: row[k] for k in ("setting", "sampler", "replication", "refresh_rate", "acceptance_rate",
                                 "mean_data_used", "total_cost", "iterations")}
        for j in range(d):
            t[f"mean_{j}"] = row["posterior_mean"][j]
            t[f"sd_{j}"] = row["posterior_sd"][j]
        tidy.append(t)
    columns = ["setting", "sampler", "replication", "refresh_rate", "acceptance_rate", "mean_data_used",
               "total_cost", "iterations", *[f"mean_{j}" for j in range(d)], *[f"sd_{j}" for j in range(d)]]
    io.write_table_csv(out / "sweep.csv", tidy, columns)
    aggregates = {}
    for v in cfg.sweep["values"]:
        label = _value_label(v)
        aggregates[label] = aggregate_summaries([r for r in rows if r["setting"] == label],
                                                ts if ts is not None and ts.size == d else None)
    report = {"axis": axis, "values": [_value_label(v) for v in cfg.sweep["values"]],
              "aggregates": aggregates, "data_seed": data_meta.get("seed")}
    io.write_json(out / "sweep.json", report)
    io.write_json(out / "sweep_meta.json", {"wall_seconds": time.time() - t0, "workers": workers})
    return {"rows": rows, "report": report}


# ---------------------------------------------------------------- probit oracle reports


def probit_subset_counts(n: int, p_full: float, r: float, direction: int = -1):
    """Counts ``(n, ones)`` of a subset whose one-fraction is ``p_full + direction * r``."""
    ones = int(round(n * (p_full + direction * r)))
    if not 0 <= ones <= n:
        raise ValueError(f"no subset of size {n} has one-fraction {p_full + direction * r}")
    return n, ones


def kl_table(data: Dataset, model, n: int, r_values, direction: int = -1, count: int = analysis.DEFAULT_GRID):
    """KL(full || sub-posterior) and the bound terms for subsets at distances ``r_values``."""
    N = data.N
    ones = int(round(data.observations[:, 0].sum()))
    p = ones / N
    subs = [probit_subset_counts(n, p, r, direction) for r in r_values]
    grid = analysis.common_probit_grid([(N, ones), *subs], model, count)
    post = analysis.grid_posterior_probit((N, ones), model, grid)
    rows = []
    for r, c in zip(r_values, subs):
        q = analysis.grid_posterior_probit(c, model, grid)
        kl = analysis.kl_on_grid(post, q)
        b = analysis.prop1_bound(post, (N, ones), c, model.gamma)
        rows.append({"r": float(r), "r_exact": abs(c[1] / n - p), "n": n, "ones": c[1], "kl": kl,
                     "psi": b.psi, "b": b.b, "omega": b.omega, "xi_norm": b.xi_norm,
                     "bound_holds": bool(kl <= b.psi + b.b)})
    base = rows[0]["kl"] if rows and rows[0]["r_exact"] == 0 else None
    for row in rows:
        row["kl_ratio"] = row["kl"] / base if base else math.nan
    return rows, post


def optimal_subset_table(data: Dataset, model, n_values, count: int = analysis.DEFAULT_GRID):
    """Mean and SD of the sub-posterior of an exactly matching subset for each n."""
    N = data.N
    ones = int(round(data.observations[:, 0].sum()))
    full = analysis.grid_posterior_probit((N, ones), model, count=count)
    rows = [{"n": N, "ones": ones, "mean": full.mean(), "sd": full.sd(), "sd_sqrt_n": full.sd() * math.sqrt(N),
             "full": True}]
    for n in n_values:
        k = ones * n / N
        if abs(k - round(k)) > 1e-9:
            raise ValueError(f"no subset of size {n} matches the full one-fraction {ones}/{N}")
        g = analysis.grid_posterior_probit((n, int(round(k))), model, count=count)
        rows.append({"n": n, "ones": int(round(k)), "mean": g.mean(), "sd": g.sd(),
                     "sd_sqrt_n": g.sd() * math.sqrt(n), "full": False})
    return rows


# ---------------------------------------------------------------- classification race


def classification_race(N: int = 100_000, n_test: int = 100_000, scenarios=(0, 1, 2, 3), budget: int = 200_000_000,
                        base_seed: int = 100, n: int = 1000, eps: float = 0.01, swap_m: int = 100,
                        factor: float = 1.2, scale: float = 0.1, batch_base: int = 1000, delta: float = 0.1,
                        stationary_fraction: float = 0.2, out=None) -> dict:
    """LWA against full M-H and the subsampling baseline at a matched cost budget.

    Each scenario simulates its own training and test sets and draws one
    starting point from the prior, shared by the three samplers. Reported
    per sampler: the cost at which the running classifier first reaches
    ``factor`` times the Bayes error on the test set, and the mean data used
    per transition over the last ``stationary_fraction`` of the run.
    """
    from ..models import GaussMixClassModel, gaussmix_theta

    model = GaussMixClassModel()
    stat = make_statistic("class_counts", {"n_classes": 2})
    rows = []
    for sc in scenarios:
        root = RngStream(base_seed + int(sc))
        data = simulate_gaussmix(N, None, split_stream(root, 0))
        test = simulate_gaussmix(n_test, None, split_stream(root, 1))
        bayes = analysis.classification_error(test.observations, test.labels, gaussmix_theta())
        init = model.sample_prior(split_stream(root, 2))
        threshold = factor * bayes
        for kind in ("lwa", "full_mh", "mhsublhd"):
            rw = RwProposal.for_model(model, scale, AdaptConfig(target=DEFAULT_TARGET["gaussmix"]))
            cfg = SamplerConfig(n=n, eps=eps, cost_budget=budget, batch_base=batch_base, delta=delta)
            t0 = time.time()
            tr = run_chain(kind, cfg, model, data, split_stream(root, 3), rw, stat, UniformSwap(swap_m),
                           init_theta=init)
            cost = analysis.cost_to_error_threshold(tr, test.observations, test.labels, threshold)
            tail = max(1, int(len(tr) * stationary_fraction))
            rows.append({
                "scenario": int(sc), "sampler": kind, "bayes_error": bayes, "threshold": threshold,
                "cost_to_threshold": cost, "transitions": len(tr), "total_cost": int(tr.cost[-1]),
                "acceptance_rate": tr.acceptance_rate(), "final_error": analysis.classification_error(
                    test.observations, test.labels, tr.theta[-1]),
                "mean_data_used_tail": float(tr.data_used[-tail:].mean()),
                "wall_seconds": time.time() - t0,
            })
            if out is not None:
                io.write_trace_csv(Path(out) / f"race_s{sc}_{kind}.csv", tr)
    summary = race_verdict(rows, N)
    if out is not None:
        cols = ["scenario", "sampler", "bayes_error", "threshold", "cost_to_threshold", "transitions",
                "total_cost", "acceptance_rate", "final_error", "mean_data_used_tail"]
        io.write_table_csv(Path(out) / "race.csv", rows, cols)
        io.write_json(Path(out) / "race.json", {"rows": [{k: v for k, v in r.items() if k != "wall_seconds"}
                                                         for r in rows], "summary": summary})
    return {"rows": rows, "summary": summary}


def race_verdict(rows: list, N: int, speedup: float = 5.0) -> dict:
    by = {}
    for r in rows:
        by.setdefault(r["scenario"], {})[r["sampler"]] = r
    wins = {}
    for sc, d in by.items():
        lwa = d["lwa"]["cost_to_threshold"]
        ok = math.isfinite(lwa) and all(d[k]["cost_to_threshold"] >= speedup * lwa for k in ("full_mh", "mhsublhd"))
        wins[sc] = {"lwa_cost": lwa, "full_mh_cost": d["full_mh"]["cost_to_threshold"],
                    "mhsublhd_cost": d["mhsublhd"]["cost_to_threshold"], "lwa_wins": bool(ok)}
    used = [d["mhsublhd"]["mean_data_used_tail"] for d in by.values()]
    return {"scenarios": wins, "n_wins": sum(w["lwa_wins"] for w in wins.values()),
            "mhsublhd_mean_data_used": float(np.mean(used)), "mhsublhd_fraction_of_N": float(np.mean(used)) / N}


# ---------------------------------------------------------------- enumeration oracle checks


def detailed_balance_errors(weigher: SubsetWeigher, proposal, target: analysis.EnumeratedTarget) -> float:
    """Largest |nu(U) q(U'|U) rho(U,U') - nu(U') q(U|U') rho(U',U)| over all ordered pairs."""
    w = target.weights
    logw = np.array([weigher(s)[0] for s in target.subsets])
    worst = 0.0
    for i, u in enumerate(target.subsets):
        for j, v in enumerate(target.subsets):
            if i == j:
                continue
            q_uv = math.exp(proposal.log_q(u, v))
            q_vu = math.exp(proposal.log_q(v, u))
            if q_uv == 0.0 and q_vu == 0.0:
                continue
            rho_uv = min(1.0, (q_vu / q_uv) * math.exp(logw[j] - logw[i])) if q_uv > 0 else 0.0
            rho_vu = min(1.0, (q_uv / q_vu) * math.exp(logw[i] - logw[j])) if q_vu > 0 else 0.0
            worst = max(worst, abs(w[i] * q_uv * rho_uv - w[j] * q_vu * rho_vu))
    return worst


def window_detailed_balance(n_starts: int = 3, omega: float = 0.5, lam: float = 1.0, n: int = 2) -> dict:
    """Enumerated start-to-start proposal matrix checks for the window mixture."""
    N = n_starts + n - 1
    wm = WindowMixture(omega, lam, N, n)
    P = wm.proposal_matrix()
    direct = np.array([[math.exp(wm.log_q_starts(a, b)) for b in range(n_starts)] for a in range(n_starts)])
    rng = np.random.default_rng(0)
    logw = rng.normal(size=n_starts)
    w = np.exp(logw - np.logaddexp.reduce(logw))
    flux = np.zeros_like(P)
    for a in range(n_starts):
        for b in range(n_starts):
            if a != b:
                flux[a, b] = w[a] * P[a, b] * min(1.0, P[b, a] * w[b] / (P[a, b] * w[a]))
    return {"row_sum_error": float(np.max(np.abs(P.sum(axis=1) - 1.0))),
            "matrix_vs_direct": float(np.max(np.abs(P - direct))),
            "balance_error": float(np.max(np.abs(flux - flux.T)))}


def oracle_check(cfg: ExperimentConfig, iterations: int = 1_000_000, burn_in: int = 10_000,
                 tol_subset: float = 0.02, tol_theta: float = 0.05, tol_balance: float = 1e-10,
                 tol_sum: float = 1e-12) -> dict:
    """Enumeration-based checks on a small probit instance; returns measured values and verdicts."""
    data = make_data(cfg)
    comps = build_components(cfg, data)
    model, stat = comps.model, comps.stat
    n, eps = comps.sampler.n, comps.sampler.eps
    target = analysis.enumerate_nu(stat, data, n, eps)
    weigher = SubsetWeigher(stat, data, eps)
    checks = []

    def add(name, value, tol, passed):
        checks.append({"name": name, "value": float(value), "tolerance": tol, "passed": bool(passed)})

    add("nu_sums_to_one", abs(target.weights.sum() - 1.0), tol_sum, abs(target.weights.sum() - 1.0) <= tol_sum)
    db = detailed_balance_errors(weigher, comps.subset_proposal, target)
    add("subset_detailed_balance", db, tol_balance, db <= tol_balance)
    wdb = window_detailed_balance()
    add("window_detailed_balance", wdb["balance_error"], tol_balance, wdb["balance_error"] <= tol_balance)
    add("window_rows_sum_to_one", wdb["row_sum_error"], tol_balance, wdb["row_sum_error"] <= tol_balance)

    rng = chain_stream(cfg, 0)
    init = target.subsets[int(np.argmin(target.distances))]
    visited = run_subset_chain(weigher, comps.subset_proposal, init, iterations, split_stream(rng, 0))
    tv_u = analysis.tv_distance(target.frequencies(visited), target.weights)
    add("subset_chain_tv", tv_u, tol_subset, tv_u <= tol_subset)

    counts = sorted({model.counts(data, s) for s in target.subsets} | {(data.N, model.counts(
        data, SubsetSelection.full(data.N))[1])})
    grid = analysis.common_probit_grid(counts, model)
    marginal = analysis.enumerate_marginal(model, data, n, eps, stat, grid, target)
    tr = run_chain("lwa", replace(comps.sampler, iterations=iterations, cost_budget=None), model, data, split_stream(rng, 1), comps.rw, stat, comps.subset_proposal)
    tv_t = analysis.histogram_tv(tr.theta[burn_in:, 0], marginal)
    add("lwa_theta_marginal_tv", tv_t, tol_theta, tv_t <= tol_theta)
    return {"checks": checks, "passed": all(c["passed"] for c in checks),
            "instance": {"N": data.N, "n": n, "eps": eps, "iterations": iterations}}
