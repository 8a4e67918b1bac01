"""File formats: report.json and the CSV bundle.

Every CSV starts with the comment line ``# format_version=1`` and uses
17-significant-digit floats, so numeric round trips are exact.
report.json carries ``"format_version": 1`` as a field instead (a
comment line would make it invalid JSON) and is serialized with sorted
keys, making it byte-identical for identical study content.
"""

from __future__ import annotations

import json
import os
from pathlib import Path

import numpy as np

from .dynamics.types import Diagnostics, TimeGrid, TrajectoryRecord
from .errors import FormatError
from .detection import optimize_threshold

FORMAT_VERSION = 1
_HEADER = f"# format_version={FORMAT_VERSION}\n"


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def _check_header(line: str, path) -> None:
    if line.strip() != _HEADER.strip():
        raise FormatError(f"{path}: missing or mismatched format_version header")


def write_kernel_csv(path, grid: TimeGrid, kernels: dict[str, np.ndarray]) -> None:
    labels = sorted(kernels)
    cols = ["h_A"] if len(labels) == 1 else ["h_A", "h_B"]
    t = grid.left_points()
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(_HEADER)
        fh.write("t," + ",".join(cols) + "\n")
        arrs = [kernels[lab] for lab in labels]
        for i in range(t.size):
            fh.write(_fmt(t[i]) + "," + ",".join(_fmt(a[i]) for a in arrs) + "\n")


def write_results_csv(path, report) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(_HEADER)
        fh.write("traj_id,hypothesis,seed,S_A,S_B,S_AB,jumps,flagged\n")
        two = len(report.kernels) == 2
        for r in report.rows:
            s_a = _fmt(r.s.get("cavA", float("nan")))
            s_b = _fmt(r.s["cavB"]) if two else ""
            s_ab = _fmt(r.s_ab) if r.s_ab is not None else ""
            fh.write(
                f"{r.traj_id},{r.hypothesis},{r.seed},{s_a},{s_b},{s_ab},"
                f"{r.jumps},{int(r.flagged)}\n"
            )


def write_histogram_csv(path, stats) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(_HEADER)
        fh.write("bin_left,bin_right,count_n0,count_n1\n")
        e = stats.hist_edges
        for i in range(stats.hist_n0.size):
            fh.write(
                f"{_fmt(e[i])},{_fmt(e[i + 1])},{int(stats.hist_n0[i])},{int(stats.hist_n1[i])}\n"
            )


def write_traces_csv(path, t: np.ndarray, value: np.ndarray, reference: np.ndarray) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(_HEADER)
        fh.write("t,value,reference\n")
        for i in range(t.size):
            fh.write(f"{_fmt(t[i])},{_fmt(value[i])},{_fmt(reference[i])}\n")


def write_summary_csv(path, rows: list[tuple]) -> None:
    """Sweep summary: (value, SNR, F, S_th, runtime_seconds) per row."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(_HEADER)
        fh.write("value,SNR,F,S_th,runtime_seconds\n")
        for value, snr_v, f_v, s_th, rt in rows:
            snr_txt = _fmt(snr_v) if snr_v is not None else "nan"
            fh.write(f"{_fmt(value)},{snr_txt},{_fmt(f_v)},{_fmt(s_th)},{_fmt(rt)}\n")


def record_channel_columns(record: TrajectoryRecord) -> list[str]:
    labels = list(record.currents)
    if "cavB" in labels:
        return ["cavA", "cavB", "J2"]
    return ["cavA", "J2"]


def write_record_csv(path, record: TrajectoryRecord) -> None:
    labels = record_channel_columns(record)
    headers = {"cavA": "dQ_A", "cavB": "dQ_B", "J2": "dQ_J2"}
    t = record.grid.left_points()
    marks = np.zeros(record.grid.n_steps, dtype=int)
    if record.jump_times.size:
        idx = np.round((record.jump_times - record.grid.t0) / record.grid.dt).astype(int)
        marks[idx] = 1
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(_HEADER)
        fh.write("t," + ",".join(headers[lab] for lab in labels) + ",jump\n")
        cols = [record.currents[lab] for lab in labels]
        for i in range(t.size):
            fh.write(
                _fmt(t[i]) + "," + ",".join(_fmt(c[i]) for c in cols) + f",{marks[i]}\n"
            )


def load_record_csv(path, seed: int = 0) -> TrajectoryRecord:
    with open(path, "r", encoding="utf-8") as fh:
        _check_header(fh.readline(), path)
        header = fh.readline().strip().split(",")
        data = np.loadtxt(fh, delimiter=",", ndmin=2) if True else None
    if data.size == 0:
        raise FormatError(f"{path}: empty record")
    t = data[:, 0]
    n = t.size
    if n == 1:
        dt = 1.0
    else:
        dt = float(t[1] - t[0])
    grid = TimeGrid(float(t[0]), float(t[0]) + dt * n, dt)
    name_map = {"dQ_A": "cavA", "dQ_B": "cavB", "dQ_J2": "J2"}
    currents = {}
    for k, col in enumerate(header):
        if col in name_map:
            currents[name_map[col]] = np.ascontiguousarray(data[:, k])
    marks = data[:, header.index("jump")].astype(int)
    jump_times = grid.t0 + grid.dt * np.nonzero(marks)[0]
    return TrajectoryRecord(
        grid=grid, currents=currents, jump_times=jump_times, seed=seed,
        diagnostics=Diagnostics(),
    )


def report_to_dict(report) -> dict:
    two = len(report.kernels) == 2
    table = []
    for r in report.rows:
        table.append(
            {
                "traj_id": r.traj_id,
                "hypothesis": r.hypothesis,
                "seed": r.seed,
                "S_A": r.s.get("cavA"),
                "S_B": r.s.get("cavB") if two else None,
                "S_AB": r.s_ab,
                "jumps": r.jumps,
                "flagged": r.flagged,
                "flag_reason": r.flag_reason or None,
                "posterior": r.posterior,
            }
        )
    st = report.stats
    return {
        "format_version": FORMAT_VERSION,
        "config": report.config,
        "orientation": report.orientation,
        "decision": {
            "snr": st.snr,
            "snr_signed": st.snr_signed,
            "S_th": st.s_th,
            "F": st.F,
            "histogram": {
                "edges": [float(x) for x in st.hist_edges],
                "count_n0": [int(x) for x in st.hist_n0],
                "count_n1": [int(x) for x in st.hist_n1],
            },
        },
        "kernels": {k: [float(x) for x in v] for k, v in sorted(report.kernels.items())},
        "counts": {"used": report.used, "flagged": report.flagged,
                   "total": len(report.rows)},
        "hypothesis_test": report.hypothesis_test,
        "table": table,
    }


def write_report_json(path, report) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report_to_dict(report), fh, sort_keys=True, separators=(",", ":"),
                  allow_nan=False)
        fh.write("\n")


def load_report_json(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        d = json.load(fh)
    if d.get("format_version") != FORMAT_VERSION:
        raise FormatError(
            f"{path}: format_version {d.get('format_version')} != {FORMAT_VERSION}"
        )
    return d


def recompute_decision_from_report(d: dict) -> tuple[float, float]:
    """Re-derive (S_th, F) from the per-trajectory table of a loaded report."""
    two = d["kernels"] and len(d["kernels"]) == 2
    s0, s1 = [], []
    for row in d["table"]:
        if row["flagged"]:
            continue
        v = row["S_AB"] if two else row["S_A"]
        (s0 if row["hypothesis"] == 0 else s1).append(v)
    return optimize_threshold(np.asarray(s0), np.asarray(s1))


def write_bundle(out_dir, report) -> None:
    """Write the full output bundle for a simulate run."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_report_json(out / "report.json", report)
    write_results_csv(out / "results.csv", report)
    write_histogram_csv(out / "histogram.csv", report.stats)
    write_kernel_csv(out / "kernel.csv", report.grid, report.kernels)
    if report.sample_records:
        rec_dir = out / "records"
        rec_dir.mkdir(exist_ok=True)
        for traj_id, _hyp, rec in report.sample_records:
            write_record_csv(rec_dir / f"{traj_id}.csv", rec)
