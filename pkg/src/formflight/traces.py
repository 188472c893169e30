"""Run artifacts: trace CSV, metrics CSV, and the resolved-scenario header.

Floats are serialized with ``repr``, the shortest round-trip representation,
so identical runs produce byte-identical files and determinism can be
checked with a plain file compare.  All writes go through a temp file plus
atomic rename.
"""

from __future__ import annotations

import csv
import json
import os
from pathlib import Path

from .sim import RunResult

TRACE_COLUMNS = [
    "k",
    "vehicle_id",
    "p_x",
    "p_y",
    "p_z",
    "v_x",
    "v_y",
    "v_z",
    "phi",
    "theta",
    "psi",
    "T",
    "phi_ref",
    "theta_ref",
    "psi_rate",
    "z_x",
    "z_y",
    "z_z",
    "solver_status",
    "solver_iters",
    "cost",
    "max_violation",
]

TRACE_NAME = "trace.csv"
METRICS_NAME = "metrics.csv"
HEADER_NAME = "header.json"


def _fmt(value: float) -> str:
    return repr(float(value))


def _write_atomic(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def render_trace_csv(result: RunResult) -> str:
    lines = [",".join(TRACE_COLUMNS)]
    for trace in result.steps:
        for i, rec in enumerate(trace.vehicles):
            s = rec.state
            u = rec.applied_input
            row = [
                str(trace.k),
                str(i),
                _fmt(s.p[0]),
                _fmt(s.p[1]),
                _fmt(s.p[2]),
                _fmt(s.v[0]),
                _fmt(s.v[1]),
                _fmt(s.v[2]),
                _fmt(s.phi),
                _fmt(s.theta),
                _fmt(s.psi),
                _fmt(u.thrust),
                _fmt(u.phi_ref),
                _fmt(u.theta_ref),
                _fmt(u.psi_rate),
                _fmt(rec.reference.z[0]),
                _fmt(rec.reference.z[1]),
                _fmt(rec.reference.z[2]),
                rec.solver_status,
                str(rec.solver_iterations),
                _fmt(rec.cost),
                _fmt(rec.max_violation),
            ]
            lines.append(",".join(row))
    return "\n".join(lines) + "\n"


def render_metrics_csv(result: RunResult) -> str:
    n = result.scenario.n
    header = ["k", "eps_f"] + [f"eps_v_{i + 1}" for i in range(n)]
    header += ["min_d_ij", "min_d_im"]
    lines = [",".join(header)]
    m = result.metrics
    for t, trace in enumerate(result.steps):
        row = [str(trace.k), _fmt(m.formation_error[t])]
        row += [_fmt(m.velocity_error[t, i]) for i in range(n)]
        row += [_fmt(m.min_pairwise[t]), _fmt(m.min_obstacle[t])]
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"


def render_header(result: RunResult) -> str:
    return json.dumps(result.scenario.resolved, indent=2, sort_keys=True) + "\n"


def write_run_outputs(result: RunResult, out_dir) -> dict[str, Path]:
    """Write trace, metrics, and header atomically; returns the paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "trace": out / TRACE_NAME,
        "metrics": out / METRICS_NAME,
        "header": out / HEADER_NAME,
    }
    _write_atomic(paths["trace"], render_trace_csv(result))
    _write_atomic(paths["metrics"], render_metrics_csv(result))
    _write_atomic(paths["header"], render_header(result))
    return paths


def read_csv_columns(path) -> tuple[list[str], list[dict[str, str]]]:
    """Read a CSV into its header and string-valued row dicts.

    Values stay strings so projections of a file are byte-stable.
    """
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.DictReader(handle)
        if reader.fieldnames is None:
            raise ValueError(f"{path} has no header row")
        return list(reader.fieldnames), list(reader)


def export_rows(kind: str, run_dir) -> tuple[list[str], list[list[str]]]:
    """Plot-ready projection of a run's artifacts for one figure kind."""
    run_dir = Path(run_dir)
    if kind == "trajectory3d":
        _, rows = read_csv_columns(run_dir / TRACE_NAME)
        header = ["k", "vehicle_id", "x", "y", "z"]
        data = [
            [r["k"], r["vehicle_id"], r["p_x"], r["p_y"], r["p_z"]] for r in rows
        ]
        return header, data
    if kind == "metrics":
        fields, rows = read_csv_columns(run_dir / METRICS_NAME)
        keep = [f for f in fields if f == "k" or f.startswith("eps_")]
        return keep, [[r[f] for f in keep] for r in rows]
    if kind == "clearances":
        _, rows = read_csv_columns(run_dir / METRICS_NAME)
        header = ["k", "min_d_ij", "min_d_im"]
        return header, [[r[f] for f in header] for r in rows]
    raise ValueError(f"unknown export kind '{kind}'")
