"""Range-normalized prediction errors and the measurement-noise bound."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import TrajectoryDataset
from .hybrid import check_aligned


def gt_ranges(gt: TrajectoryDataset) -> np.ndarray:
    """``max - min`` of every state variable over all flights."""
    allz = np.vstack([f.states for f in gt.flights])
    return allz.max(axis=0) - allz.min(axis=0)


def _valid(ranges) -> np.ndarray:
    ranges = np.asarray(ranges, dtype=float)
    return ranges > 0


@dataclass(frozen=True)
class ErrorReport:
    """Signed errors ``(z_gt - z_pred) / range`` per flight.

    ``errors[f]`` has shape ``(n_f, D)``; columns of excluded (zero-range)
    variables are NaN and listed in ``excluded``.
    """

    errors: dict
    t: dict
    ranges: np.ndarray
    excluded: tuple = ()

    @property
    def flights(self) -> list:
        return list(self.errors)

    @property
    def variables(self) -> np.ndarray:
        return np.flatnonzero(_valid(self.ranges))


def normalized_error(predicted: TrajectoryDataset, ground_truth: TrajectoryDataset,
                     ranges=None, flights=None) -> ErrorReport:
    """Signed, range-normalized error per flight, variable and time."""
    if ranges is None:
        ranges = gt_ranges(ground_truth)
    ranges = np.asarray(ranges, dtype=float)
    ids = list(flights) if flights is not None else predicted.ids
    check_aligned(predicted, ground_truth, ids)
    ok = _valid(ranges)
    safe = np.where(ok, ranges, 1.0)
    errors, times = {}, {}
    for fid in ids:
        e = (ground_truth[fid].states - predicted[fid].states) / safe
        e[:, ~ok] = np.nan
        errors[fid] = e
        times[fid] = ground_truth[fid].t
    return ErrorReport(errors, times, ranges, tuple(np.flatnonzero(~ok)))


@dataclass(frozen=True)
class MeasurementBound:
    """Per-flight, per-variable bound on the measurement error.

    ``signed`` follows ``max_t (z_gt - z_meas) / range``; ``absolute`` uses
    ``max_t |z_gt - z_meas| / range``.
    """

    signed: dict
    absolute: dict

    def overall(self, kind: str = "signed") -> np.ndarray:
        table = self.signed if kind == "signed" else self.absolute
        return np.max(np.vstack(list(table.values())), axis=0)


def measurement_error_bound(measured: TrajectoryDataset, ground_truth: TrajectoryDataset,
                            ranges=None, flights=None) -> MeasurementBound:
    if ranges is None:
        ranges = gt_ranges(ground_truth)
    ranges = np.asarray(ranges, dtype=float)
    ids = list(flights) if flights is not None else measured.ids
    check_aligned(measured, ground_truth, ids)
    ok = _valid(ranges)
    safe = np.where(ok, ranges, 1.0)
    signed, absolute = {}, {}
    for fid in ids:
        diff = ground_truth[fid].states - measured[fid].states
        s = diff.max(axis=0) / safe
        a = np.abs(diff).max(axis=0) / safe
        s[~ok] = np.nan
        a[~ok] = np.nan
        signed[fid], absolute[fid] = s, a
    return MeasurementBound(signed, absolute)


def per_flight_mean_error(report: ErrorReport, variables=None,
                          absolute: bool = False) -> dict:
    """Mean of the error over time and variables for each flight.

    ``absolute=True`` averages ``|err|`` instead of the signed error.
    """
    cols = report.variables if variables is None else np.asarray(variables)
    out = {}
    for fid, e in report.errors.items():
        block = e[:, cols]
        out[fid] = float(np.mean(np.abs(block) if absolute else block))
    return out


def _fmt(x) -> str:
    return "%.17g" % x


def error_table_csv(report: ErrorReport) -> str:
    """Long-format ``flight,variable,t,err`` table (excluded variables
    omitted)."""
    lines = ["flight,variable,t,err"]
    cols = report.variables
    for fid, e in report.errors.items():
        t = report.t[fid]
        for i in cols:
            name = f"z{i + 1}"
            lines.extend(f"{fid},{name},{_fmt(tn)},{_fmt(v)}" for tn, v in zip(t, e[:, i]))
    return "\n".join(lines) + "\n"


def flight_summary(report: ErrorReport, bound: Optional[MeasurementBound] = None) -> list[dict]:
    """Per-flight rows: signed and absolute mean error, and the measurement
    bound averaged over the variables (signed and absolute variants; NaN
    without measurements)."""
    mean_signed = per_flight_mean_error(report)
    mean_abs = per_flight_mean_error(report, absolute=True)
    cols = report.variables
    rows = []
    for fid in report.errors:
        if bound is not None:
            b_signed = float(np.mean(bound.signed[fid][cols]))
            b_abs = float(np.mean(bound.absolute[fid][cols]))
        else:
            b_signed = b_abs = float("nan")
        rows.append({"flight": fid, "mean_err": mean_signed[fid], "err_max_meas": b_signed,
                     "mean_abs_err": mean_abs[fid], "err_max_meas_abs": b_abs})
    return rows


SUMMARY_COLUMNS = ("flight", "mean_err", "err_max_meas", "mean_abs_err", "err_max_meas_abs")


def summary_table_csv(rows: list[dict]) -> str:
    lines = [",".join(SUMMARY_COLUMNS)]
    for r in rows:
        lines.append(",".join([r["flight"]] + [_fmt(r[c]) for c in SUMMARY_COLUMNS[1:]]))
    return "\n".join(lines) + "\n"


def bound_table_csv(bound: MeasurementBound, ranges) -> str:
    """``flight,variable,err_max_meas,err_max_meas_abs`` per variable."""
    cols = np.flatnonzero(_valid(ranges))
    lines = ["flight,variable,err_max_meas,err_max_meas_abs"]
    for fid in bound.signed:
        for i in cols:
            lines.append(f"{fid},z{i + 1},{_fmt(bound.signed[fid][i])},"
                         f"{_fmt(bound.absolute[fid][i])}")
    return "\n".join(lines) + "\n"
