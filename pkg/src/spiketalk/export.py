"""CSV traces and plot-ready series files.

CSV column order is fixed: ``time``; then for each node k the block
``v_k, i_k, rd_k, omega_k, spikes_v_k, lat_i_k, dw_k, ce_k``; then
``avg_v_err, share_err``.  Floats are written with ``repr`` so they parse
back to the identical value; samples that were not taken are ``nan``.
"""

from __future__ import annotations

import csv
import io
from pathlib import Path

import numpy as np

from .engine import TraceRecord

NODE_FIELDS = ("v", "i", "rd", "omega", "spikes_v", "lat_i", "dw", "ce")


def csv_columns(n: int) -> list:
    cols = ["time"]
    for k in range(1, n + 1):
        cols += [f"{f}_{k}" for f in NODE_FIELDS]
    return cols + ["avg_v_err", "share_err"]


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def _row(r: TraceRecord) -> list:
    out = [_fmt(r.time)]
    for k in range(r.n):
        out += [_fmt(r.voltages[k]), _fmt(r.currents[k]), _fmt(r.gains[k]),
                str(int(r.omega[k])), str(int(r.spikes_v[k])), _fmt(r.latency_i[k]),
                _fmt(r.delta_w[k]), _fmt(r.cross_entropy[k])]
    return out + [_fmt(r.avg_voltage_error), _fmt(r.sharing_error)]


def trace_to_csv(traces) -> str:
    if not traces:
        raise ValueError("cannot export an empty trace")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(csv_columns(traces[0].n))
    for r in traces:
        w.writerow(_row(r))
    return buf.getvalue()


def export_csv(traces, path) -> Path:
    """Write the trace CSV; raises ValueError on an empty trace, OSError if unwritable."""
    text = trace_to_csv(traces)
    path = Path(path)
    with open(path, "w", newline="") as fh:
        fh.write(text)
    return path


def read_csv(path) -> list:
    """Parse an exported CSV back into TraceRecords (rasters are not stored)."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    n = (len(header) - 3) // len(NODE_FIELDS)
    if header != csv_columns(n):
        raise ValueError("unexpected CSV header")
    out = []
    for row in body:
        vals = [float(x) for x in row]
        blocks = np.array(vals[1:1 + n * len(NODE_FIELDS)]).reshape(n, len(NODE_FIELDS)).T
        out.append(TraceRecord(vals[0], blocks[0], blocks[1], blocks[2],
                               blocks[3].astype(int), blocks[4].astype(int), blocks[5],
                               blocks[6], blocks[7], vals[-2], vals[-1]))
    return out


def _write_series(path: Path, header: str, rows) -> None:
    with open(path, "w") as fh:
        fh.write(f"# {header}\n")
        for row in rows:
            fh.write(" ".join(_fmt(x) if not isinstance(x, str) else x for x in row) + "\n")


def emit_plot_data(traces, out_dir) -> list:
    """Write one text series per figure-equivalent into ``out_dir``.

    * ``raster_voltage.txt`` / ``raster_current.txt``: ``time node`` event lists
    * ``voltage_k.txt``, ``current_k.txt``, ``rd_k.txt``: ``time value`` pairs
    * ``omega.txt``: ``time node`` for every flagged window
    """
    if not traces:
        raise ValueError("cannot export an empty trace")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    n = traces[0].n
    written = []

    def emit(name, header, rows):
        p = out / name
        _write_series(p, header, rows)
        written.append(p)

    for name, attr in (("raster_voltage.txt", "voltage_spikes"),
                       ("raster_current.txt", "current_spikes")):
        rows = []
        for r in traces:
            for k, times in enumerate(getattr(r, attr) or [()] * n):
                rows += [(t, k + 1) for t in times]
        rows.sort(key=lambda x: (x[0], x[1]))
        emit(name, "time_s node", rows)
    emit("omega.txt", "time_s node",
         [(r.time, k + 1) for r in traces for k in range(n) if r.omega[k]])
    for k in range(n):
        emit(f"voltage_{k + 1}.txt", "time_s volts", [(r.time, r.voltages[k]) for r in traces])
        emit(f"current_{k + 1}.txt", "time_s amperes", [(r.time, r.currents[k]) for r in traces])
        emit(f"rd_{k + 1}.txt", "time_s ohms", [(r.time, r.gains[k]) for r in traces])
    return written


def read_series(path) -> np.ndarray:
    return np.loadtxt(path, comments="#", ndmin=2)


def summary_text(summary: dict) -> str:
    lines = []
    for name in ("static", "adaptive"):
        s = summary[name]
        lines.append(f"{name}: final |avg_v_err| = {s['final_abs_avg_voltage_error']:.6g} V, "
                     f"final share_err = {s['final_sharing_error']:.6g}")
    return "\n".join(lines) + "\n"
