"""Per-iteration trace records and their CSV form."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, fields

import numpy as np

__all__ = ["TraceRecord", "SYNC_COLUMNS", "ASYNC_COLUMNS", "write_trace", "read_trace"]

SYNC_COLUMNS = ["t", "dual_cost", "primal_err", "disagreement", "messages", "solver_residual"]
ASYNC_COLUMNS = SYNC_COLUMNS + ["sim_time", "node_fired", "cascade_size", "t_over_n"]


@dataclass
class TraceRecord:
    t: int
    dual_cost: float
    primal_err: float | None
    disagreement: float
    messages: int
    solver_residual: float
    sim_time: float | None = None
    node_fired: int | None = None
    cascade_size: int | None = None
    t_over_n: float | None = None

    def __post_init__(self):
        if not math.isfinite(self.dual_cost):
            raise ValueError(f"dual cost is not finite at t={self.t}")


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return str(int(v))
    return str(v)


def write_trace(path, records, asynchronous: bool = False):
    cols = ASYNC_COLUMNS if asynchronous else SYNC_COLUMNS
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for rec in records:
            w.writerow([_fmt(getattr(rec, c)) for c in cols])


_INT = {"t", "messages", "node_fired", "cascade_size"}


def read_trace(path) -> list[TraceRecord]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or reader.fieldnames[: len(SYNC_COLUMNS)] != SYNC_COLUMNS:
            raise ValueError(f"{path}: not a trace file (header {reader.fieldnames})")
        names = {f.name for f in fields(TraceRecord)}
        out = []
        for row in reader:
            kw = {}
            for k, v in row.items():
                if k not in names:
                    continue
                if v == "" or v is None:
                    kw[k] = None
                elif k in _INT:
                    kw[k] = int(v)
                else:
                    kw[k] = float(v)
            out.append(TraceRecord(**kw))
    return out
