"""CSV loading for the simulator's documented output schemas.

Two file kinds exist: sweep tables
(``algorithm,param_name,param_value,seed,R_T,C_T,wall_ms``) and per-run
traces (``t,cum_regret,cum_comm[,gamma_diag]``).  This module only reads
those files; it never imports the simulator.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np


class MissingColumnError(ValueError):
    """A required column is absent; the message names it."""


SWEEP_COLUMNS = ("algorithm", "param_name", "param_value", "seed", "R_T", "C_T")
TRACE_COLUMNS = ("t", "cum_regret", "cum_comm")


@dataclass(frozen=True)
class SweepFrame:
    """Rows of a sweep CSV with the numeric columns parsed."""

    algorithms: list[str]
    param_values: np.ndarray
    r_totals: np.ndarray
    c_totals: np.ndarray

    def __len__(self) -> int:
        return len(self.algorithms)

    def aggregated_points(self) -> list[dict]:
        """Mean (C_T, R_T) per (algorithm, parameter value), label attached.

        Cells whose runs all failed (NaN totals) are dropped.
        """
        groups: dict[tuple[str, float], list[int]] = {}
        for i, (algo, value) in enumerate(zip(self.algorithms, self.param_values)):
            groups.setdefault((algo, float(value)), []).append(i)
        points = []
        for (algo, value), idx in sorted(groups.items()):
            rs = self.r_totals[idx]
            cs = self.c_totals[idx]
            keep = ~(np.isnan(rs) | np.isnan(cs))
            if not keep.any():
                continue
            points.append(
                {
                    "algorithm": algo,
                    "param_value": value,
                    "label": format_threshold(value),
                    "mean_c": float(np.mean(cs[keep])),
                    "mean_r": float(np.mean(rs[keep])),
                }
            )
        return points


def format_threshold(value: float) -> str:
    if math.isinf(value):
        return "inf"
    return f"{value:g}"


def _read_rows(path) -> tuple[list[str], list[list[str]]]:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise MissingColumnError(f"{path}: empty file, no header") from None
        return header, [row for row in reader if row]


def _require(header: list[str], required, path) -> None:
    for name in required:
        if name not in header:
            raise MissingColumnError(f"{path}: missing column: {name}")


def load_sweep(path) -> SweepFrame:
    header, rows = _read_rows(path)
    _require(header, SWEEP_COLUMNS, path)
    col = {name: header.index(name) for name in header}
    try:
        return SweepFrame(
            algorithms=[row[col["algorithm"]] for row in rows],
            param_values=np.array([float(row[col["param_value"]]) for row in rows]),
            r_totals=np.array([float(row[col["R_T"]]) for row in rows]),
            c_totals=np.array([float(row[col["C_T"]]) for row in rows]),
        )
    except ValueError as exc:
        raise ValueError(f"{path}: non-numeric value in numeric column ({exc})") from None


@dataclass(frozen=True)
class TraceFrame:
    name: str
    t: np.ndarray
    cum_regret: np.ndarray
    cum_comm: np.ndarray


def load_trace(path) -> TraceFrame:
    header, rows = _read_rows(path)
    _require(header, TRACE_COLUMNS, path)
    col = {name: header.index(name) for name in header}
    data = np.array([[float(v) for v in row] for row in rows])
    if data.size == 0:
        data = np.zeros((0, len(header)))
    from pathlib import Path

    return TraceFrame(
        name=Path(path).stem,
        t=data[:, col["t"]],
        cum_regret=data[:, col["cum_regret"]],
        cum_comm=data[:, col["cum_comm"]],
    )
