"""Trajectory containers, fitted-model containers and snapshot assembly."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import DataError
from .features import FeatureSpec, d_prime, flight_features

DT_RTOL = 1e-6


def _frozen(a, ndim: int) -> np.ndarray:
    arr = np.array(a, dtype=float, ndmin=ndim)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Flight:
    """One uniformly sampled record: times ``(n,)``, states ``(n, D)``,
    controls ``(n, d)``."""

    id: str
    t: np.ndarray
    states: np.ndarray
    controls: np.ndarray

    def __post_init__(self):
        t = _frozen(self.t, 1)
        states = _frozen(self.states, 2)
        controls = np.array(self.controls, dtype=float)
        if controls.ndim == 1 and controls.size == 0:
            controls = controls.reshape(len(states), 0)
        controls = _frozen(controls, 2)
        if states.shape[0] != controls.shape[0] or states.shape[0] != t.shape[0]:
            raise DataError(f"flight {self.id!r}: times, states and controls "
                            "must have equal length")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "controls", controls)

    @property
    def n_snapshots(self) -> int:
        return self.states.shape[0]

    @property
    def D(self) -> int:
        return self.states.shape[1]

    @property
    def d(self) -> int:
        return self.controls.shape[1]

    def replace(self, **changes) -> "Flight":
        kw = dict(id=self.id, t=self.t, states=self.states,
                  controls=self.controls)
        kw.update(changes)
        return Flight(**kw)


@dataclass(frozen=True)
class TrajectoryDataset:
    """A set of flights sharing state/control dimensions and sampling step."""

    flights: tuple
    dt: float

    def __post_init__(self):
        flights = tuple(self.flights)
        if not flights:
            raise DataError("dataset has no flights")
        if not self.dt > 0:
            raise DataError("dt must be positive")
        D, d = flights[0].D, flights[0].d
        if D < 1:
            raise DataError("state dimension must be positive")
        seen = set()
        for f in flights:
            if f.id in seen:
                raise DataError(f"duplicate flight id {f.id!r}")
            seen.add(f.id)
            if (f.D, f.d) != (D, d):
                raise DataError(f"flight {f.id!r} has dimensions {(f.D, f.d)}, "
                                f"expected {(D, d)}")
            if f.n_snapshots < 2:
                raise DataError(f"flight {f.id!r} has fewer than 2 snapshots")
            steps = np.diff(f.t)
            if np.any(np.abs(steps - self.dt) > DT_RTOL * self.dt):
                raise DataError(f"flight {f.id!r} is not sampled at uniform "
                                f"dt={self.dt}")
        object.__setattr__(self, "flights", flights)

    @property
    def state_dim(self) -> int:
        return self.flights[0].D

    @property
    def control_dim(self) -> int:
        return self.flights[0].d

    @property
    def ids(self) -> list[str]:
        return [f.id for f in self.flights]

    def __getitem__(self, flight_id: str) -> Flight:
        for f in self.flights:
            if f.id == flight_id:
                return f
        raise KeyError(flight_id)

    def __contains__(self, flight_id) -> bool:
        return any(f.id == flight_id for f in self.flights)

    def __len__(self) -> int:
        return len(self.flights)

    def subset(self, ids: Sequence[str]) -> "TrajectoryDataset":
        missing = [i for i in ids if i not in self]
        if missing:
            raise DataError(f"unknown flight ids: {missing}")
        return TrajectoryDataset(tuple(self[i] for i in ids), self.dt)


@dataclass(frozen=True)
class Standardizer:
    """Per-variable affine map ``x -> (x - mean) / scale`` for states and
    control features. The identity map has zero means and unit scales."""

    state_mean: np.ndarray
    state_scale: np.ndarray
    feature_mean: np.ndarray
    feature_scale: np.ndarray

    @classmethod
    def identity(cls, D: int, dp: int) -> "Standardizer":
        return cls(np.zeros(D), np.ones(D), np.zeros(dp), np.ones(dp))

    @classmethod
    def fit(cls, states: np.ndarray, features: np.ndarray,
            center: bool = False) -> "Standardizer":
        """Fit on column-major snapshot blocks ``(D, n)`` and ``(d', n)``.

        Scales are per-row standard deviations. Means are only subtracted
        when ``center`` is set: centering turns linear dynamics into affine
        ones, whose offset a model without intercept cannot represent.
        """
        def moments(x):
            mean = x.mean(axis=1) if x.shape[1] else np.zeros(x.shape[0])
            scale = x.std(axis=1) if x.shape[1] else np.ones(x.shape[0])
            # constant rows keep unit scale
            scale = np.where(scale > 1e-12 * max(1.0, np.abs(mean).max(initial=0)),
                             scale, 1.0)
            return (mean if center else np.zeros_like(mean)), scale
        sm, ss = moments(states)
        fm, fs = moments(features)
        return cls(sm, ss, fm, fs)

    def __post_init__(self):
        for name in ("state_mean", "state_scale", "feature_mean", "feature_scale"):
            object.__setattr__(self, name, _frozen(getattr(self, name), 1))

    @property
    def is_identity(self) -> bool:
        return (not self.state_mean.any() and not self.feature_mean.any()
                and np.all(self.state_scale == 1) and np.all(self.feature_scale == 1))

    def states_in(self, z: np.ndarray) -> np.ndarray:
        """Standardize states; ``z`` may be ``(D,)``, ``(D, n)``."""
        if z.ndim == 1:
            return (z - self.state_mean) / self.state_scale
        return (z - self.state_mean[:, None]) / self.state_scale[:, None]

    def states_out(self, z: np.ndarray) -> np.ndarray:
        if z.ndim == 1:
            return z * self.state_scale + self.state_mean
        return z * self.state_scale[:, None] + self.state_mean[:, None]

    def features_in(self, u: np.ndarray) -> np.ndarray:
        if u.ndim == 1:
            return (u - self.feature_mean) / self.feature_scale
        return (u - self.feature_mean[:, None]) / self.feature_scale[:, None]


@dataclass(frozen=True)
class SnapshotSystem:
    """Training matrices. Column ``k`` of ``X1`` is the successor of column
    ``k`` of ``X0``; ``U0`` holds the matching control features.

    All three blocks are expressed in the (possibly standardized)
    coordinates described by ``scaler``.
    """

    X0: np.ndarray
    X1: np.ndarray
    U0: np.ndarray
    feature_spec: FeatureSpec = field(default_factory=FeatureSpec)
    scaler: Optional[Standardizer] = None
    dt: float = 1.0
    flight_ids: tuple = ()
    control_dim: int = 0

    def __post_init__(self):
        X0 = _frozen(self.X0, 2)
        X1 = _frozen(self.X1, 2)
        U0 = np.asarray(self.U0, dtype=float)
        if U0.size == 0:
            U0 = U0.reshape(0, X0.shape[1])
        U0 = _frozen(U0, 2)
        if not (X0.shape[1] == X1.shape[1] == U0.shape[1]):
            raise DataError("X0, X1 and U0 must have the same number of columns")
        if X0.shape[0] != X1.shape[0]:
            raise DataError("X0 and X1 must have the same number of rows")
        object.__setattr__(self, "X0", X0)
        object.__setattr__(self, "X1", X1)
        object.__setattr__(self, "U0", U0)
        if self.scaler is None:
            object.__setattr__(self, "scaler",
                               Standardizer.identity(X0.shape[0], U0.shape[0]))

    @property
    def pair_count(self) -> int:
        return self.X0.shape[1]

    @property
    def state_dim(self) -> int:
        return self.X0.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.U0.shape[0]

    @property
    def Y0(self) -> np.ndarray:
        """Stacked regressor ``[X0; U0]``."""
        return np.vstack([self.X0, self.U0])


def assemble_snapshots(dataset: TrajectoryDataset, flights: Optional[Sequence[str]] = None,
                       spec: FeatureSpec = FeatureSpec()) -> SnapshotSystem:
    """Stack transition pairs of the selected flights, flight by flight.

    Pairs never straddle two flights, so ``pair_count`` equals
    ``sum(n_f - 1)`` over the selected flights.
    """
    if flights is None:
        flights = dataset.ids
    flights = list(flights)
    if not flights:
        raise DataError("no flights selected")
    missing = [f for f in flights if f not in dataset]
    if missing:
        raise DataError(f"unknown flight ids: {missing}")
    if spec.n_blocks and dataset.control_dim == 0:
        raise DataError("feature spec requests control blocks but d = 0")
    x0, x1, u0 = [], [], []
    for fid in flights:
        fl = dataset[fid]
        if fl.n_snapshots < spec.min_snapshots:
            raise DataError(f"flight {fid!r} has {fl.n_snapshots} snapshots; "
                            f"{spec.min_snapshots} required for these features")
        feats = flight_features(fl, dataset.dt, spec)
        x0.append(fl.states[:-1].T)
        x1.append(fl.states[1:].T)
        u0.append(feats[:-1].T)
    X0 = np.hstack(x0)
    X1 = np.hstack(x1)
    U0 = np.hstack(u0)
    if not (np.all(np.isfinite(X0)) and np.all(np.isfinite(X1))
            and np.all(np.isfinite(U0))):
        raise DataError("non-finite entries in training data")
    if spec.standardize:
        scaler = Standardizer.fit(X0, U0)
        X0, X1, U0 = scaler.states_in(X0), scaler.states_in(X1), scaler.features_in(U0)
    else:
        scaler = Standardizer.identity(X0.shape[0], U0.shape[0])
    assert U0.shape[0] == d_prime(spec, dataset.control_dim)
    return SnapshotSystem(X0, X1, U0, feature_spec=spec, scaler=scaler,
                          dt=dataset.dt, flight_ids=tuple(flights),
                          control_dim=dataset.control_dim)


@dataclass(frozen=True)
class FitReport:
    residual_frobenius: float
    lambda_search_iterations: int = 0
    rho_at_lambda_zero: float = float("nan")
    stabilized: bool = False
    rho_desired: Optional[float] = None
    bracket_expansions: int = 0


@dataclass(frozen=True)
class ControlledLinearModel:
    """``z_{n+1} = M z_n + N u_n`` in the coordinates of ``scaler``.

    ``u_n`` is the control feature row built from the raw controls per
    ``feature_spec``.
    """

    M: np.ndarray
    N: np.ndarray
    lam: float = 0.0
    feature_spec: FeatureSpec = field(default_factory=FeatureSpec)
    fit_report: Optional[FitReport] = None
    scaler: Optional[Standardizer] = None
    dt: float = 1.0
    control_dim: int = 0
    spectral_radius_M: float = field(init=False)

    def __post_init__(self):
        M = _frozen(self.M, 2)
        N = np.asarray(self.N, dtype=float)
        if N.size == 0:
            N = N.reshape(M.shape[0], 0)
        N = _frozen(N, 2)
        object.__setattr__(self, "M", M)
        object.__setattr__(self, "N", N)
        if self.scaler is None:
            object.__setattr__(self, "scaler", Standardizer.identity(*N.shape))
        from .stabilization import spectral_radius
        object.__setattr__(self, "spectral_radius_M", spectral_radius(M))

    @property
    def spectral_radius(self) -> float:
        return self.spectral_radius_M

    @property
    def state_dim(self) -> int:
        return self.M.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.N.shape[1]

    def with_report(self, report: FitReport) -> "ControlledLinearModel":
        return ControlledLinearModel(self.M, self.N, self.lam, self.feature_spec,
                                     report, self.scaler, self.dt, self.control_dim)


@dataclass(frozen=True)
class ReducedControlledModel:
    """``zhat_{n+1} = M_hat zhat_n + N_hat u_n`` with ``z = Xi zhat``."""

    M_hat: np.ndarray
    N_hat: np.ndarray
    Xi: np.ndarray
    r_tilde: int
    lam: float = 0.0
    feature_spec: FeatureSpec = field(default_factory=FeatureSpec)
    scaler: Optional[Standardizer] = None
    dt: float = 1.0
    control_dim: int = 0
    fit_report: Optional[FitReport] = None

    def __post_init__(self):
        for name in ("M_hat", "N_hat", "Xi"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if name == "N_hat" and arr.size == 0:
                arr = arr.reshape(np.asarray(self.M_hat).shape[0], 0)
            object.__setattr__(self, name, _frozen(arr, 2))
        if self.scaler is None:
            object.__setattr__(self, "scaler", Standardizer.identity(
                self.Xi.shape[0], self.N_hat.shape[1]))

    @property
    def r(self) -> int:
        return self.M_hat.shape[0]

    @property
    def state_dim(self) -> int:
        return self.Xi.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.N_hat.shape[1]

    @property
    def spectral_radius(self) -> float:
        from .stabilization import spectral_radius
        return spectral_radius(self.M_hat)
