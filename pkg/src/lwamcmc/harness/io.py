"""File formats: binary datasets with JSON sidecars, trace CSVs, deterministic JSON reports."""

from __future__ import annotations

import hashlib
import io
import json
import math
from pathlib import Path
from typing import Optional

import numpy as np

from ..core import ConfigError, Dataset
from ..samplers import Trace

TRACE_FIXED_HEAD = ("iteration", "lik_evals", "stat_touches")
TRACE_FIXED_TAIL = ("accepted_theta", "refreshed_subset", "data_used", "subset_start")


def trace_columns(d: int) -> list:
    return [*TRACE_FIXED_HEAD, *(f"theta_{j}" for j in range(d)), *TRACE_FIXED_TAIL]


def _writable_dir(path: Path) -> Path:
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"output path {path} is not writable: {exc}") from None
    return path


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if math.isfinite(v):
            return v
        return "inf" if v > 0 else ("-inf" if v < 0 else "nan")
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_json(path, obj) -> None:
    p = Path(path)
    _writable_dir(p.parent)
    p.write_text(json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n")


def read_json(path):
    return json.loads(Path(path).read_text())


# ---------------------------------------------------------------- datasets


def write_dataset(stem, data: Dataset, seed: Optional[int] = None, params: Optional[dict] = None) -> Path:
    """Write ``stem.bin`` (little-endian float64 observations, then int64 labels) and ``stem.json``."""
    stem = Path(stem)
    _writable_dir(stem.parent)
    payload = data.observations.astype("<f8").tobytes()
    if data.labels is not None:
        payload += data.labels.astype("<i8").tobytes()
    bin_path = stem.with_suffix(".bin")
    bin_path.write_bytes(payload)
    meta = {
        "N": data.N,
        "m": data.m,
        "flavor": data.flavor,
        "labels_present": data.labels is not None,
        "seed": seed,
        "params": params or {},
        "model_meta": data.meta,
        "sha256": hashlib.sha256(payload).hexdigest(),
    }
    write_json(stem.with_suffix(".json"), meta)
    return bin_path


def read_dataset(path) -> Dataset:
    stem = Path(path)
    if stem.suffix in (".bin", ".json"):
        stem = stem.with_suffix("")
    meta_path, bin_path = stem.with_suffix(".json"), stem.with_suffix(".bin")
    if not (meta_path.exists() and bin_path.exists()):
        raise ConfigError(f"dataset {stem} needs both .bin and .json files")
    meta = read_json(meta_path)
    payload = bin_path.read_bytes()
    if hashlib.sha256(payload).hexdigest() != meta["sha256"]:
        raise ConfigError(f"dataset {bin_path} does not match its checksum")
    N, m = int(meta["N"]), int(meta["m"])
    obs = np.frombuffer(payload, dtype="<f8", count=N * m).reshape(N, m)
    labels = None
    if meta["labels_present"]:
        labels = np.frombuffer(payload, dtype="<i8", count=N, offset=8 * N * m)
    info = dict(meta.get("model_meta", {}))
    info["seed"] = meta.get("seed")
    return Dataset(obs, labels=labels, flavor=meta["flavor"], meta=info)


# ---------------------------------------------------------------- traces


def write_trace_csv(path, trace: Trace) -> None:
    """One header row, then one row per transition; floats use 17 significant digits."""
    p = Path(path)
    _writable_dir(p.parent)
    d = trace.dim
    cols = [trace.iteration, trace.lik_evals, trace.stat_touches]
    ints = np.column_stack(cols)
    tail = np.column_stack([trace.accepted_theta.astype(np.int64), trace.refreshed_subset.astype(np.int64),
                            trace.data_used, trace.subset_start])
    buf = io.StringIO()
    buf.write(",".join(trace_columns(d)) + "\n")
    fmt_theta = ",".join(["%.17g"] * d)
    for i in range(len(trace)):
        buf.write("%d,%d,%d," % tuple(ints[i]))
        buf.write(fmt_theta % tuple(trace.theta[i]))
        buf.write(",%d,%d,%d,%d\n" % tuple(tail[i]))
    p.write_text(buf.getvalue())


def read_trace_csv(path) -> Trace:
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"trace file {p} is missing")
    with p.open() as fh:
        header = fh.readline().strip().split(",")
    d = sum(1 for c in header if c.startswith("theta_"))
    if header != trace_columns(d):
        raise ValueError(f"{p} does not have the trace column layout")
    arr = np.loadtxt(p, delimiter=",", skiprows=1, ndmin=2)
    return Trace(
        iteration=arr[:, 0].astype(np.int64),
        lik_evals=arr[:, 1].astype(np.int64),
        stat_touches=arr[:, 2].astype(np.int64),
        theta=arr[:, 3:3 + d].copy(),
        accepted_theta=arr[:, 3 + d].astype(bool),
        refreshed_subset=arr[:, 4 + d].astype(bool),
        data_used=arr[:, 5 + d].astype(np.int64),
        subset_start=arr[:, 6 + d].astype(np.int64),
    )


def write_table_csv(path, rows: list, columns: list) -> None:
    """Tidy CSV with a fixed column order; missing values are left empty."""
    p = Path(path)
    _writable_dir(p.parent)
    lines = [",".join(columns)]
    for r in rows:
        cells = []
        for c in columns:
            v = _clean(r.get(c, ""))
            cells.append(repr(v) if isinstance(v, float) else str(v))
        lines.append(",".join(cells))
    p.write_text("\n".join(lines) + "\n")
