import json
from pathlib import Path

import numpy as np
import pytest
import yaml

from lwamcmc.core import ConfigError, Dataset, RngStream
from lwamcmc.harness import experiments as ex
from lwamcmc.harness import io
from lwamcmc.harness.cli import EXIT_CONFIG, EXIT_OK, main
from lwamcmc.harness.config import env_overrides, from_dict, load_config
from lwamcmc.models import simulate_gaussmix
from lwamcmc.samplers import RwProposal, SamplerConfig, run_chain
from lwamcmc.models import ProbitModel, simulate_probit

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def probit_raw(**over):
    raw = {
        "model": {"kind": "probit", "params": {"prior_sd": 1.0}},
        "data": {"N": 200, "seed": 1, "params": {"theta_star": 1.0}},
        "sampler": {"kind": "lwa", "n": 20, "eps": 0.05},
        "statistic": {"kind": "identity_mean"},
        "subset_proposal": {"kind": "uniform_swap", "params": {"m": 2}},
        "proposal": {"scale": 0.3},
        "budget": {"iterations": 300},
        "burn_in": 50,
        "replications": 2,
        "seed": 9,
    }
    raw.update(over)
    return raw


def write_cfg(tmp_path, raw, name="cfg.yaml"):
    p = tmp_path / name
    p.write_text(yaml.safe_dump(raw))
    return p


@pytest.mark.parametrize("path", sorted(CONFIGS.glob("*.yaml")), ids=lambda p: p.stem)
def test_shipped_configs_validate(path):
    cfg = load_config(path)
    assert cfg.budget


@pytest.mark.parametrize("change", [
    {"sampler": {"kind": "lwa", "n": 20, "eps": -1.0}},
    {"sampler": {"kind": "gibbs"}},
    {"budget": {}},
    {"subset_proposal": {"kind": "window_mixture"}},
    {"statistic": {"kind": "class_counts"}},
    {"statistic": {"kind": "arma_s0"}},
    {"extra_key": 1},
    {"seed": -4},
])
def test_invalid_configs(change):
    with pytest.raises(ConfigError):
        from_dict(probit_raw(**change))


def test_mhsublhd_needs_iid():
    raw = {"model": {"kind": "arma"}, "data": {"N": 100}, "sampler": {"kind": "mhsublhd"},
           "budget": {"iterations": 10}}
    with pytest.raises(ConfigError):
        from_dict(raw)


def test_env_overrides(tmp_path):
    env = {"LWA_SAMPLER__EPS": "0.5", "LWA_SEED": "17", "OTHER": "x"}
    assert env_overrides(env) == [(["sampler", "eps"], 0.5), (["seed"], 17)]
    cfg = load_config(write_cfg(tmp_path, probit_raw()), environ=env)
    assert cfg.sampler["eps"] == 0.5 and cfg.seed == 17
    with pytest.raises(ConfigError):
        load_config(write_cfg(tmp_path, probit_raw()), environ={"LWA_SAMPLER__EPS": "-1"})


def test_with_setting_extremes():
    cfg = from_dict(probit_raw())
    assert cfg.with_setting("eps", "free").sampler["kind"] == "free_subset"
    assert cfg.with_setting("eps", "fixed").sampler["kind"] == "fixed_subset"
    assert cfg.with_setting("eps", 0.1).sampler["eps"] == 0.1
    assert cfg.with_setting("n", 40).sampler["n"] == 40


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "absent.yaml")


def test_dataset_roundtrip(tmp_path):
    d = simulate_gaussmix(50, rng=RngStream(0))
    io.write_dataset(tmp_path / "ds", d, seed=3, params={"a": 1})
    back = io.read_dataset(tmp_path / "ds.bin")
    np.testing.assert_array_equal(back.observations, d.observations)
    np.testing.assert_array_equal(back.labels, d.labels)
    assert back.meta["seed"] == 3 and back.flavor == "iid"
    meta = json.loads((tmp_path / "ds.json").read_text())
    assert set(meta) >= {"N", "m", "flavor", "labels_present", "seed", "sha256"}


def test_dataset_checksum_detects_tampering(tmp_path):
    io.write_dataset(tmp_path / "ds", Dataset([1.0, 2.0]))
    raw = bytearray((tmp_path / "ds.bin").read_bytes())
    raw[0] ^= 1
    (tmp_path / "ds.bin").write_bytes(bytes(raw))
    with pytest.raises(ConfigError):
        io.read_dataset(tmp_path / "ds")


def test_trace_roundtrip(tmp_path):
    data = simulate_probit(100, 1.0, 1.0, RngStream(1))
    tr = run_chain("full_mh", SamplerConfig(iterations=40), ProbitModel(), data, RngStream(2), RwProposal([0.2]))
    io.write_trace_csv(tmp_path / "t.csv", tr)
    header = (tmp_path / "t.csv").read_text().splitlines()[0].split(",")
    assert header == ["iteration", "lik_evals", "stat_touches", "theta_0", "accepted_theta", "refreshed_subset",
                      "data_used", "subset_start"]
    back = io.read_trace_csv(tmp_path / "t.csv")
    np.testing.assert_array_equal(back.theta, tr.theta)
    np.testing.assert_array_equal(back.cost, tr.cost)


def test_read_trace_missing(tmp_path):
    with pytest.raises(FileNotFoundError):
        io.read_trace_csv(tmp_path / "none.csv")


def test_json_handles_inf(tmp_path):
    io.write_json(tmp_path / "x.json", {"a": float("inf"), "b": np.float64(1.5), "c": np.arange(2)})
    assert io.read_json(tmp_path / "x.json") == {"a": "inf", "b": 1.5, "c": [0, 1]}


def test_probit_seed_search():
    seed = ex.find_probit_seed(10_000, 1.0, 1.0, 200, 0)
    d = simulate_probit(10_000, 1.0, 1.0, RngStream(seed, (ex.DATA_STREAM,)))
    assert int(d.observations.sum()) % 200 == 0


def test_cmd_run_outputs(tmp_path):
    cfg = from_dict(probit_raw(out=str(tmp_path / "run")))
    summary = ex.cmd_run(cfg)
    assert len(summary["replications"]) == 2
    assert [r["stream_id"] for r in summary["replications"]] == [0, 1]
    for r in range(2):
        assert (tmp_path / "run" / f"trace_{r:03d}.csv").exists()
    assert (tmp_path / "run" / "summary.json").exists()


@pytest.mark.parametrize("kind", ["free_subset", "fixed_subset", "mhsublhd", "full_mh"])
def test_cmd_run_sampler_kinds(tmp_path, kind):
    raw = probit_raw(out=str(tmp_path / kind), replications=1)
    raw["sampler"] = {"kind": kind, "n": 20}
    summary = ex.cmd_run(from_dict(raw))
    rr = summary["aggregate"]["refresh_rate"]
    if kind == "free_subset":
        assert rr == 1.0
    else:
        assert rr == 0.0


def test_sweep_resumes(tmp_path):
    raw = probit_raw(out=str(tmp_path / "sw"), sweep={"axis": "eps", "values": ["free", 0.05, "fixed"]})
    cfg = from_dict(raw)
    first = ex.cmd_sweep(cfg)
    cell = tmp_path / "sw" / "cells" / "eps=0.05" / "rep_000.json"
    stamp = cell.stat().st_mtime_ns
    second = ex.cmd_sweep(from_dict(raw))
    assert cell.stat().st_mtime_ns == stamp
    assert first["report"] == second["report"]
    lines = (tmp_path / "sw" / "sweep.csv").read_text().splitlines()
    assert len(lines) == 1 + 3 * 2
    agg = first["report"]["aggregates"]
    assert agg["free"]["refresh_rate"] == 1.0 and agg["fixed"]["refresh_rate"] == 0.0


def test_cli_run_is_byte_identical(tmp_path):
    cfg = write_cfg(tmp_path, probit_raw())
    for d in ("a", "b"):
        assert main(["run", "--config", str(cfg), "--out", str(tmp_path / d)]) == EXIT_OK
    for f in ("trace_000.csv", "trace_001.csv", "summary.json"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_cli_seed_changes_output(tmp_path):
    cfg = write_cfg(tmp_path, probit_raw())
    main(["run", "--config", str(cfg), "--out", str(tmp_path / "a")])
    main(["run", "--config", str(cfg), "--out", str(tmp_path / "b"), "--seed", "10"])
    assert (tmp_path / "a" / "trace_000.csv").read_bytes() != (tmp_path / "b" / "trace_000.csv").read_bytes()


def test_cli_budgets_exclusive(tmp_path):
    cfg = write_cfg(tmp_path, probit_raw())
    with pytest.raises(SystemExit):
        main(["run", "--config", str(cfg), "--budget-cost", "10", "--budget-iters", "10"])


def test_cli_budget_cost(tmp_path):
    cfg = write_cfg(tmp_path, probit_raw(replications=1))
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "o"), "--budget-cost", "2000"]) == EXIT_OK
    tr = io.read_trace_csv(tmp_path / "o" / "trace_000.csv")
    assert tr.cost[-2] < 2000 <= tr.cost[-1] + 40


def test_cli_config_error_exit_code(tmp_path, capsys):
    cfg = write_cfg(tmp_path, probit_raw(sampler={"kind": "lwa", "n": 20, "eps": 0.0}))
    assert main(["run", "--config", str(cfg)]) == EXIT_CONFIG
    assert "config error" in capsys.readouterr().err


def test_cli_generate_and_reuse(tmp_path):
    cfg = write_cfg(tmp_path, probit_raw(replications=1))
    assert main(["generate", "--config", str(cfg), "--out", str(tmp_path / "g")]) == EXIT_OK
    ds = tmp_path / "g" / "dataset.bin"
    assert ds.exists()
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "r"), "--dataset", str(ds)]) == EXIT_OK


def test_cli_analyze_reports(tmp_path):
    cfg = write_cfg(tmp_path, probit_raw(replications=1))
    main(["run", "--config", str(cfg), "--out", str(tmp_path / "r")])
    for report in ("refresh", "data-used"):
        assert main(["analyze", "--report", report, "--traces", str(tmp_path / "r"), "--out", str(tmp_path / "a"),
                     "--burn-in", "10"]) == EXIT_OK
        assert (tmp_path / "a" / f"{report}.csv").exists()
    assert main(["analyze", "--report", "curves", "--traces", str(tmp_path / "r"), "--out", str(tmp_path / "a"),
                 "--theta-star", "1.0"]) == EXIT_OK


def test_cli_analyze_missing_traces(tmp_path):
    assert main(["analyze", "--report", "refresh", "--traces", str(tmp_path / "none")]) == EXIT_CONFIG


def test_cli_kl_table(tmp_path):
    raw = {"model": {"kind": "probit"}, "data": {"N": 10_000, "seed": 0, "params": {"ones_multiple": 100}},
           "sampler": {"kind": "full_mh"}, "budget": {"iterations": 1}}
    cfg = write_cfg(tmp_path, raw)
    assert main(["analyze", "--report", "kl-table", "--config", str(cfg), "--out", str(tmp_path / "k")]) == EXIT_OK
    lines = (tmp_path / "k" / "kl-table.csv").read_text().splitlines()
    assert lines[0].startswith("direction,r,") and len(lines) == 11
