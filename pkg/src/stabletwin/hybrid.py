"""Hybrid twin: a coarse trajectory plus a learned, stable correction.

The correction ``C_n = Z_n^measured - Z_n^coarse`` is modelled as
``C_{n+1} = W C_n + V u_n`` and rolled out from the first measurement only.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .core import ControlledLinearModel, Flight, TrajectoryDataset, assemble_snapshots
from .dmdc import predict
from .errors import AlignmentError
from .features import FeatureSpec
from .regression import RidgeConfig
from .stabilization import StabilizationConfig, fit_stable

# Correction features: mu_n, mu_{n-1}, omega_n, W_n, standardized.
DEFAULT_SPEC = FeatureSpec(include_control=True, include_lagged_control=True,
                           include_omega=True, include_W=True, standardize=True)


def check_aligned(a: TrajectoryDataset, b: TrajectoryDataset,
                  ids: Optional[Sequence[str]] = None):
    """Raise :class:`AlignmentError` unless the flights share ids, lengths,
    sampling step and timestamps."""
    if not np.isclose(a.dt, b.dt, rtol=1e-9, atol=0):
        raise AlignmentError(f"sampling steps differ: {a.dt} vs {b.dt}")
    if a.state_dim != b.state_dim:
        raise AlignmentError("state dimensions differ")
    for fid in (ids if ids is not None else a.ids):
        if fid not in a or fid not in b:
            raise AlignmentError(f"flight {fid!r} missing from one dataset")
        fa, fb = a[fid], b[fid]
        if fa.n_snapshots != fb.n_snapshots:
            raise AlignmentError(f"flight {fid!r}: lengths {fa.n_snapshots} "
                                 f"and {fb.n_snapshots} differ")
        if not np.allclose(fa.t, fb.t, rtol=0, atol=1e-9 * max(1.0, a.dt)):
            raise AlignmentError(f"flight {fid!r}: timestamps differ")
    if ids is None and set(a.ids) != set(b.ids):
        raise AlignmentError("datasets contain different flights")


def compute_residuals(measured: TrajectoryDataset,
                      coarse: TrajectoryDataset) -> TrajectoryDataset:
    """Per-snapshot ``measured - coarse``; controls come from ``measured``."""
    check_aligned(measured, coarse)
    flights = tuple(f.replace(states=f.states - coarse[f.id].states)
                    for f in measured.flights)
    return TrajectoryDataset(flights, measured.dt)


@dataclass(frozen=True)
class HybridTwinModel:
    correction: ControlledLinearModel
    coarse_source: str = ""
    feature_spec: FeatureSpec = field(default=DEFAULT_SPEC)

    @property
    def spectral_radius(self) -> float:
        return self.correction.spectral_radius


def fit_hybrid_twin(measured: TrajectoryDataset, coarse: TrajectoryDataset,
                    spec: FeatureSpec = DEFAULT_SPEC,
                    ridge_cfg: RidgeConfig = RidgeConfig(),
                    stab_cfg: StabilizationConfig = StabilizationConfig(),
                    train_flights: Optional[Sequence[str]] = None,
                    fit: Optional[Callable] = None,
                    coarse_source: str = "") -> HybridTwinModel:
    """Fit a stabilized correction model on the residual dataset."""
    residuals = compute_residuals(measured, coarse)
    sys = assemble_snapshots(residuals, train_flights, spec)
    correction = fit_stable(sys, ridge_cfg, stab_cfg, fit=fit)
    return HybridTwinModel(correction, coarse_source, spec)


def predict_hybrid(ht: HybridTwinModel, coarse_traj: Flight, z0_measured: np.ndarray,
                   controls: Optional[np.ndarray] = None,
                   steps: Optional[int] = None) -> np.ndarray:
    """Coarse trajectory plus the correction rolled out from
    ``C_0 = z0_measured - Z_0^coarse``.

    Returns ``(steps + 1, D)``; ``steps`` defaults to the coarse horizon.
    """
    n = coarse_traj.n_snapshots
    if steps is None:
        steps = n - 1
    if steps > n - 1:
        raise AlignmentError(f"horizon {steps} exceeds the coarse trajectory "
                             f"({n - 1} steps)")
    if controls is None:
        controls = coarse_traj.controls
    c0 = np.asarray(z0_measured, dtype=float) - coarse_traj.states[0]
    correction = predict(ht.correction, c0, controls, steps)
    return coarse_traj.states[:steps + 1] + correction
