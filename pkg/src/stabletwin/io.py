"""File formats: trajectory CSV, plain-text model documents, key-value
manifests. All writers go through a temporary file and ``os.replace``."""

from __future__ import annotations

import csv
import io
import os
import tempfile
from pathlib import Path
from typing import Mapping, Optional

import numpy as np

from .core import (ControlledLinearModel, FitReport, Flight, ReducedControlledModel,
                   Standardizer, TrajectoryDataset)
from .errors import DataError
from .features import FeatureSpec

FORMAT_VERSION = 1


def fmt(x: float) -> str:
    """17 significant digits; round-trips every double exactly."""
    return "%.17g" % x


def atomic_write(path, text: str):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# -- trajectory CSV --------------------------------------------------------

def dataset_to_csv(ds: TrajectoryDataset) -> str:
    D, d = ds.state_dim, ds.control_dim
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t", "flight"] + [f"z{i + 1}" for i in range(D)]
               + [f"u{i + 1}" for i in range(d)])
    for f in sorted(ds.flights, key=lambda f: f.id):
        for n in range(f.n_snapshots):
            w.writerow([fmt(f.t[n]), f.id] + [fmt(v) for v in f.states[n]]
                       + [fmt(v) for v in f.controls[n]])
    return buf.getvalue()


def write_dataset(ds: TrajectoryDataset, path):
    atomic_write(path, dataset_to_csv(ds))


def read_dataset(path) -> TrajectoryDataset:
    """Parse a ``t,flight,z1..zD,u1..ud`` file.

    Rows of one flight must be contiguous and time-ascending; ``dt`` is the
    step of the first flight and every flight must match it.
    """
    try:
        with open(path, encoding="utf-8", newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    if not rows:
        raise DataError(f"{path}: empty file")
    header = rows[0]
    if header[:2] != ["t", "flight"]:
        raise DataError(f"{path}: header must start with 't,flight'")
    zcols = [h for h in header[2:] if h.startswith("z")]
    ucols = [h for h in header[2:] if h.startswith("u")]
    D, d = len(zcols), len(ucols)
    if header[2:] != [f"z{i + 1}" for i in range(D)] + [f"u{i + 1}" for i in range(d)]:
        raise DataError(f"{path}: malformed header {header}")
    if D == 0:
        raise DataError(f"{path}: no state columns")
    groups: dict[str, list] = {}
    order: list[str] = []
    last = None
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != len(header):
            raise DataError(f"{path}:{lineno}: expected {len(header)} fields")
        fid = row[1]
        if fid != last:
            if fid in groups:
                raise DataError(f"{path}:{lineno}: rows of flight {fid!r} not contiguous")
            groups[fid] = []
            order.append(fid)
            last = fid
        try:
            groups[fid].append([float(row[0])] + [float(v) for v in row[2:]])
        except ValueError as exc:
            raise DataError(f"{path}:{lineno}: {exc}") from exc
    if not groups:
        raise DataError(f"{path}: no data rows")
    flights = []
    for fid in order:
        a = np.array(groups[fid])
        if np.any(np.diff(a[:, 0]) <= 0):
            raise DataError(f"{path}: flight {fid!r} is not time-ascending")
        flights.append(Flight(fid, a[:, 0], a[:, 1:1 + D], a[:, 1 + D:].reshape(len(a), d)))
    first = flights[0]
    if first.n_snapshots < 2:
        raise DataError(f"{path}: flight {first.id!r} has fewer than 2 snapshots")
    dt = float(first.t[1] - first.t[0])
    return TrajectoryDataset(tuple(flights), dt)


# -- manifests -------------------------------------------------------------

def manifest_text(entries: Mapping[str, object]) -> str:
    lines = []
    for k, v in entries.items():
        if isinstance(v, float):
            v = fmt(v)
        lines.append(f"{k} = {v}")
    return "\n".join(lines) + "\n"


def write_manifest(path, entries: Mapping[str, object]):
    atomic_write(path, manifest_text(entries))


def read_manifest(path) -> dict:
    out = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, _, value = line.partition("=")
            out[key.strip()] = value.strip()
    return out


# -- model documents -------------------------------------------------------

def _matrix_lines(name: str, A: np.ndarray) -> list[str]:
    A = np.atleast_2d(A)
    lines = [f"matrix {name} {A.shape[0]} {A.shape[1]}"]
    if A.shape[1]:
        lines += [" ".join(fmt(v) for v in row) for row in A]
    return lines


def _vector_lines(name: str, v: np.ndarray) -> list[str]:
    lines = [f"vector {name} {v.size}"]
    if v.size:
        lines.append(" ".join(fmt(x) for x in v))
    return lines


def model_to_text(model, coarse_source: Optional[str] = None) -> str:
    """Serialize a full or reduced model (optionally as a hybrid-twin
    correction, recording the coarse trajectory source)."""
    reduced = isinstance(model, ReducedControlledModel)
    kind = "hybrid" if coarse_source is not None else ("reduced" if reduced else "full")
    rep = model.fit_report or FitReport(float("nan"))
    head = {
        "version": FORMAT_VERSION,
        "kind": kind,
        "D": model.state_dim,
        "d": model.control_dim,
        "d_prime": model.feature_dim,
        "r": model.r if reduced else model.state_dim,
        "r_tilde": model.r_tilde if reduced else "",
        "lambda": fmt(model.lam),
        "dt": fmt(model.dt),
        "feature_spec": " ".join(str(int(b)) for b in model.feature_spec.as_flags()),
        "rho": fmt(model.spectral_radius),
        "fit.residual_frobenius": fmt(rep.residual_frobenius),
        "fit.lambda_search_iterations": rep.lambda_search_iterations,
        "fit.rho_at_lambda_zero": fmt(rep.rho_at_lambda_zero),
        "fit.stabilized": int(rep.stabilized),
        "fit.rho_desired": "" if rep.rho_desired is None else fmt(rep.rho_desired),
        "fit.bracket_expansions": rep.bracket_expansions,
    }
    if coarse_source is not None:
        head["coarse_source"] = coarse_source
    lines = ["# stabletwin model"] + [f"{k}: {v}" for k, v in head.items()]
    if reduced:
        lines += _matrix_lines("M_hat", model.M_hat)
        lines += _matrix_lines("N_hat", model.N_hat)
        lines += _matrix_lines("Xi", model.Xi)
    else:
        lines += _matrix_lines("M", model.M)
        lines += _matrix_lines("N", model.N)
    sc = model.scaler
    for name in ("state_mean", "state_scale", "feature_mean", "feature_scale"):
        lines += _vector_lines(name, getattr(sc, name))
    return "\n".join(lines) + "\n"


def write_model(model, path, coarse_source: Optional[str] = None):
    atomic_write(path, model_to_text(model, coarse_source))


def _parse_model_text(text: str):
    head, arrays = {}, {}
    lines = [ln for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
    i = 0
    while i < len(lines):
        ln = lines[i]
        if ln.startswith("matrix "):
            _, name, rows, cols = ln.split()
            rows, cols = int(rows), int(cols)
            if cols == 0:
                arrays[name] = np.zeros((rows, 0))
                i += 1
                continue
            data = [[float(x) for x in lines[i + 1 + k].split()] for k in range(rows)]
            arrays[name] = np.array(data, dtype=float).reshape(rows, cols)
            i += 1 + rows
        elif ln.startswith("vector "):
            _, name, size = ln.split()
            size = int(size)
            if size:
                arrays[name] = np.array([float(x) for x in lines[i + 1].split()])
                i += 2
            else:
                arrays[name] = np.zeros(0)
                i += 1
        else:
            key, _, value = ln.partition(":")
            head[key.strip()] = value.strip()
            i += 1
    return head, arrays


def model_from_text(text: str):
    """Inverse of :func:`model_to_text`.

    Returns ``(model, coarse_source)``; ``coarse_source`` is ``None`` unless
    the document describes a hybrid-twin correction.
    """
    head, arrays = _parse_model_text(text)
    if int(head.get("version", -1)) != FORMAT_VERSION:
        raise DataError(f"unsupported model version {head.get('version')}")
    spec = FeatureSpec.from_flags(int(b) for b in head["feature_spec"].split())
    scaler = Standardizer(arrays["state_mean"], arrays["state_scale"],
                          arrays["feature_mean"], arrays["feature_scale"])
    rd = head.get("fit.rho_desired", "")
    report = FitReport(
        residual_frobenius=float(head["fit.residual_frobenius"]),
        lambda_search_iterations=int(head["fit.lambda_search_iterations"]),
        rho_at_lambda_zero=float(head["fit.rho_at_lambda_zero"]),
        stabilized=bool(int(head["fit.stabilized"])),
        rho_desired=float(rd) if rd else None,
        bracket_expansions=int(head["fit.bracket_expansions"]))
    common = dict(lam=float(head["lambda"]), feature_spec=spec, scaler=scaler,
                  dt=float(head["dt"]), control_dim=int(head["d"]))
    if "M_hat" in arrays:
        model = ReducedControlledModel(M_hat=arrays["M_hat"], N_hat=arrays["N_hat"],
                                       Xi=arrays["Xi"], r_tilde=int(head["r_tilde"]),
                                       fit_report=report, **common)
    else:
        model = ControlledLinearModel(M=arrays["M"], N=arrays["N"], fit_report=report,
                                      **common)
    return model, head.get("coarse_source")


def read_model(path):
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    try:
        return model_from_text(text)
    except (KeyError, ValueError, IndexError) as exc:
        raise DataError(f"{path}: malformed model file ({exc})") from exc
