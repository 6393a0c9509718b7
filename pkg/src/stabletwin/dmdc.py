"""DMD with control: truncated-SVD operator extraction, reduced-order
projection and open-loop rollouts."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import ControlledLinearModel, FitReport, ReducedControlledModel, SnapshotSystem
from .errors import DivergenceError, FitError
from .features import control_features
from .regression import RANK_TOL, augmented_system

DIVERGENCE_LIMIT = 1e12
DEFAULT_ENERGY = 1 - 1e-10


@dataclass(frozen=True)
class SvdTruncation:
    """Either keep a fixed number of singular values (``rule="rank"``) or the
    fewest whose cumulative sum reaches ``value`` of the total
    (``rule="energy"``)."""

    rule: str = "energy"
    value: float = DEFAULT_ENERGY

    def __post_init__(self):
        if self.rule == "rank":
            if int(self.value) != self.value or self.value < 1:
                raise ValueError("fixed rank must be a positive integer")
        elif self.rule == "energy":
            if not 0 < self.value <= 1:
                raise ValueError("energy fraction must lie in (0, 1]")
        else:
            raise ValueError(f"unknown truncation rule {self.rule!r}")

    @classmethod
    def rank(cls, k: int) -> "SvdTruncation":
        return cls("rank", k)

    @classmethod
    def energy(cls, fraction: float) -> "SvdTruncation":
        return cls("energy", fraction)

    def select(self, s: np.ndarray) -> int:
        """Number of leading singular values kept out of ``s``."""
        numerical = int(np.sum(s > RANK_TOL * s[0])) if s.size and s[0] > 0 else 0
        if self.rule == "rank":
            k = int(self.value)
            if k > s.size:
                raise FitError(f"truncation rank {k} exceeds {s.size} singular values")
            # directions below the numerical rank would divide by ~0
            return min(k, numerical)
        if numerical == 0:
            return 0
        cum = np.cumsum(s) / np.sum(s)
        k = int(np.searchsorted(cum, self.value * (1 - 1e-15)) + 1)
        return min(k, numerical)


def _truncated_svd(A: np.ndarray, trunc: SvdTruncation):
    try:
        U, s, Vt = np.linalg.svd(A, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise FitError(f"SVD failed: {exc}") from exc
    k = trunc.select(s)
    return U[:, :k], s[:k], Vt[:k]


@dataclass(frozen=True)
class _Operators:
    X1_bar: np.ndarray
    Xi_t: np.ndarray
    s_t: np.ndarray
    V_t: np.ndarray

    @property
    def core(self) -> np.ndarray:
        """``X1_bar V~ Sigma~^-1`` (D x r~)."""
        return (self.X1_bar @ self.V_t) / self.s_t


def _input_svd(sys: SnapshotSystem, lam: float, trunc: SvdTruncation,
               penalize_control_block: bool) -> _Operators:
    if sys.pair_count < 1:
        raise FitError("snapshot system has no transition pairs")
    if not lam >= 0:
        raise FitError("ridge penalty must be non-negative")
    X1_bar, Y0_bar = augmented_system(sys, lam, penalize_control_block)
    if not np.all(np.isfinite(Y0_bar)) or not np.all(np.isfinite(X1_bar)):
        raise FitError("non-finite entries in snapshot system")
    Xi_t, s_t, Vt_t = _truncated_svd(Y0_bar, trunc)
    return _Operators(X1_bar, Xi_t, s_t, Vt_t.T)


def fit_dmdc(sys: SnapshotSystem, lam: float = 0.0,
             trunc_input: SvdTruncation = SvdTruncation(),
             penalize_control_block: bool = False) -> ControlledLinearModel:
    """DMDc operators from the truncated SVD of the augmented regressor.

    With ``Y0_bar = Xi~ Sigma~ V~*`` truncated to ``r~`` terms and ``Xi~*``
    split column-wise at ``D`` into ``Xi~1*`` and ``Xi~2*``::

        M = X1_bar V~ Sigma~^-1 Xi~1*
        N = X1_bar V~ Sigma~^-1 Xi~2*
    """
    ops = _input_svd(sys, lam, trunc_input, penalize_control_block)
    D = sys.state_dim
    core = ops.core
    M = core @ ops.Xi_t[:D].T
    N = core @ ops.Xi_t[D:].T
    resid = np.linalg.norm(sys.X1 - M @ sys.X0 - N @ sys.U0)
    return ControlledLinearModel(
        M=M, N=N, lam=float(lam), feature_spec=sys.feature_spec,
        fit_report=FitReport(residual_frobenius=float(resid)), scaler=sys.scaler,
        dt=sys.dt, control_dim=sys.control_dim)


def dmdc_fitter(trunc_input: SvdTruncation = SvdTruncation(),
                penalize_control_block: bool = False):
    """``fit(sys, lam)`` closure for the penalty search."""
    return lambda sys, lam: fit_dmdc(sys, lam, trunc_input, penalize_control_block)


def reduce_model(sys: SnapshotSystem, lam: float = 0.0,
                 trunc_input: SvdTruncation = SvdTruncation(),
                 trunc_output: SvdTruncation = SvdTruncation(),
                 penalize_control_block: bool = False) -> ReducedControlledModel:
    """Project the DMDc operators onto the leading left singular vectors
    ``Xi`` of the output matrix ``X1_bar``::

        M_hat = Xi* X1_bar V~ Sigma~^-1 Xi~1* Xi
        N_hat = Xi* X1_bar V~ Sigma~^-1 Xi~2*
    """
    ops = _input_svd(sys, lam, trunc_input, penalize_control_block)
    D = sys.state_dim
    U, s, _ = np.linalg.svd(ops.X1_bar, full_matrices=False)
    rank = int(np.sum(s > RANK_TOL * s[0])) if s[0] > 0 else 0
    if trunc_output.rule == "rank":
        r = int(trunc_output.value)
        if r > D:
            raise FitError(f"reduced rank {r} exceeds state dimension {D}")
        if r > rank:
            raise FitError(f"reduced rank {r} exceeds the rank {rank} of the output data")
    else:
        r = trunc_output.select(s)
    Xi = U[:, :r]
    core = Xi.T @ ops.core
    M_hat = core @ ops.Xi_t[:D].T @ Xi
    N_hat = core @ ops.Xi_t[D:].T
    M_full = ops.core @ ops.Xi_t[:D].T
    N_full = ops.core @ ops.Xi_t[D:].T
    resid = np.linalg.norm(sys.X1 - M_full @ sys.X0 - N_full @ sys.U0)
    return ReducedControlledModel(
        M_hat=M_hat, N_hat=N_hat, Xi=Xi, r_tilde=ops.s_t.size, lam=float(lam),
        feature_spec=sys.feature_spec, scaler=sys.scaler, dt=sys.dt,
        control_dim=sys.control_dim,
        fit_report=FitReport(residual_frobenius=float(resid)))


def reduced_fitter(trunc_input: SvdTruncation = SvdTruncation(),
                   trunc_output: SvdTruncation = SvdTruncation(),
                   penalize_control_block: bool = False):
    return lambda sys, lam: reduce_model(sys, lam, trunc_input, trunc_output,
                                         penalize_control_block)


def model_features(model, controls: Optional[np.ndarray], steps: int) -> np.ndarray:
    """Standardized feature rows ``(steps, d')`` for a rollout.

    ``controls`` are raw controls of shape ``(n, d)`` with ``n >= steps``.
    """
    dp = model.feature_dim
    if dp == 0:
        return np.zeros((steps, 0))
    if controls is None:
        raise ValueError("model uses control features but no controls were given")
    controls = np.asarray(controls, dtype=float)
    if controls.ndim == 1:
        controls = controls.reshape(-1, model.control_dim or 1)
    if controls.shape[0] < steps:
        raise ValueError(f"{controls.shape[0]} control rows for {steps} steps")
    feats = control_features(controls[:max(steps, 1)], model.dt, model.feature_spec)[:steps]
    if feats.shape[1] != dp:
        raise ValueError(f"controls yield {feats.shape[1]} features, model expects {dp}")
    return (feats - model.scaler.feature_mean) / model.scaler.feature_scale


def _integrate(A, B, x0, feats, lift, scaler, steps):
    out = np.empty((steps + 1, lift.shape[0] if lift is not None else x0.size))
    x = x0
    out[0] = scaler.states_out(lift @ x if lift is not None else x)
    for n in range(steps):
        x = A @ x + B @ feats[n]
        z = scaler.states_out(lift @ x if lift is not None else x)
        if not np.all(np.isfinite(z)) or np.max(np.abs(z)) > DIVERGENCE_LIMIT:
            raise DivergenceError(n + 1, out[:n + 1].copy())
        out[n + 1] = z
    return out


def rollout(model: ControlledLinearModel, z0: np.ndarray,
            controls: Optional[np.ndarray], steps: int) -> np.ndarray:
    """Open-loop prediction ``Z_{n+1} = M Z_n + N u_n`` from ``z0`` only.

    Returns an array of shape ``(steps + 1, D)`` whose first row is ``z0``.
    Raises :class:`~stabletwin.errors.DivergenceError` when a state becomes
    non-finite or exceeds ``1e12`` in magnitude.
    """
    z0 = np.asarray(z0, dtype=float)
    if z0.shape != (model.state_dim,):
        raise ValueError(f"z0 must have shape ({model.state_dim},)")
    feats = model_features(model, controls, steps)
    return _integrate(model.M, model.N, model.scaler.states_in(z0), feats, None,
                      model.scaler, steps)


def rollout_reduced(model: ReducedControlledModel, z0: np.ndarray,
                    controls: Optional[np.ndarray], steps: int) -> np.ndarray:
    """Rollout in reduced coordinates ``zhat = Xi* z``, lifted back by ``Xi``.

    The first returned row is the lifted projection of ``z0``, which equals
    ``z0`` only when ``z0`` lies in the span of ``Xi``.
    """
    z0 = np.asarray(z0, dtype=float)
    if z0.shape != (model.state_dim,):
        raise ValueError(f"z0 must have shape ({model.state_dim},)")
    feats = model_features(model, controls, steps)
    zhat0 = model.Xi.T @ model.scaler.states_in(z0)
    return _integrate(model.M_hat, model.N_hat, zhat0, feats, model.Xi,
                      model.scaler, steps)


def predict(model, z0, controls, steps) -> np.ndarray:
    """Dispatch to :func:`rollout` or :func:`rollout_reduced`."""
    if isinstance(model, ReducedControlledModel):
        return rollout_reduced(model, z0, controls, steps)
    return rollout(model, z0, controls, steps)
