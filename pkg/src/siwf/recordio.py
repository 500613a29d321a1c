"""Deterministic serialization of records, means and manifests.

All numeric output uses 17 significant digits so doubles round-trip and
repeated runs are byte-identical.
"""

from __future__ import annotations

import json

import numpy as np

from .config import SimConfig, complex_matrix_to_lists
from .states import TrajectoryRecord
from .trajectories import MeanSeries


def fmt(x: float) -> str:
    return format(float(x), ".17g")


def record_to_csv(
    record: TrajectoryRecord,
    observable_order: list | None = None,
    weights: np.ndarray | None = None,
) -> str:
    """One row per saved time: time, W_l, B_l, observables [, weight]."""
    names = observable_order or sorted(record.observables)
    n_ch = record.innovations.shape[1] if record.innovations is not None else 0
    header = ["time"]
    header += [f"W_{l + 1}" for l in range(n_ch)]
    header += [f"B_{l + 1}" for l in range(n_ch)]
    header += list(names)
    if weights is not None:
        header.append("weight")
    lines = [",".join(header)]
    for k in range(record.n_saved):
        row = [fmt(record.times[k])]
        if n_ch:
            row += [fmt(record.innovations[k, l]) for l in range(n_ch)]
            row += [fmt(record.records[k, l]) for l in range(n_ch)]
        row += [fmt(record.observables[name][k]) for name in names]
        if weights is not None:
            row.append(fmt(weights[k]))
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"


def mean_to_csv(series: MeanSeries, observable_order: list | None = None) -> str:
    """Aggregate Monte Carlo output: time plus mean and SE per observable."""
    names = observable_order or sorted(series.observable_stats)
    header = ["time"]
    for name in names:
        header += [name, f"{name}_se"]
    lines = [",".join(header)]
    for k in range(series.times.shape[0]):
        row = [fmt(series.times[k])]
        for name in names:
            m, s = series.observable_stats[name]
            row += [fmt(m[k]), fmt(s[k])]
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"


def densities_to_json(times: np.ndarray, densities: np.ndarray) -> str:
    """Full complex density matrices per saved time as [re, im] pairs."""
    doc = {
        "times": [float(t) for t in times],
        "densities": [complex_matrix_to_lists(rho) for rho in densities],
    }
    return json.dumps(doc, sort_keys=True, separators=(",", ":")) + "\n"


def mean_densities_to_json(series: MeanSeries) -> str:
    doc = {
        "times": [float(t) for t in series.times],
        "mean": [complex_matrix_to_lists(rho) for rho in series.mean],
        "se": [[list(map(float, row)) for row in s] for s in series.se],
        "n_trajectories": series.n_traj,
        "equation": series.equation,
    }
    return json.dumps(doc, sort_keys=True, separators=(",", ":")) + "\n"


def manifest_json(cfg: SimConfig, version: str) -> str:
    doc = {
        "artifact": "siwf",
        "version": version,
        "config": cfg.resolved_dict(),
    }
    return json.dumps(doc, sort_keys=True, indent=2) + "\n"


def reports_to_json(reports) -> str:
    return (
        json.dumps(
            [r.to_dict() for r in reports], sort_keys=True, indent=2
        )
        + "\n"
    )
