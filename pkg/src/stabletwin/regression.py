"""Least-squares fits of ``[M, N]`` from snapshot matrices.

The ridge fit minimizes

    ||X1 - [M, N] [X0; U0]||_F^2 + lam^2 ||M||_F^2

(plus ``lam^2 ||N||_F^2`` when the control block is penalized) by appending
``lam * I`` columns to the regressor and zero columns to the target, then
applying a pseudoinverse.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .core import ControlledLinearModel, FitReport, SnapshotSystem
from .errors import FitError

RANK_TOL = 1e-12


class Solver(str, enum.Enum):
    AUGMENTED_PSEUDOINVERSE = "augmented_pseudoinverse"
    PER_ROW_RIDGE = "per_row_ridge"


@dataclass(frozen=True)
class RidgeConfig:
    lam: float = 0.0
    solver: Solver = Solver.AUGMENTED_PSEUDOINVERSE
    penalize_control_block: bool = False

    def __post_init__(self):
        if not self.lam >= 0:
            raise ValueError(f"ridge penalty must be non-negative, got {self.lam}")
        object.__setattr__(self, "solver", Solver(self.solver))

    def at(self, lam: float) -> "RidgeConfig":
        return RidgeConfig(lam, self.solver, self.penalize_control_block)


def pseudoinverse(A: np.ndarray, rank_tol: float = RANK_TOL) -> np.ndarray:
    """Moore-Penrose pseudoinverse via SVD.

    Singular values at or below ``rank_tol * sigma_max`` are treated as zero.
    """
    A = np.asarray(A, dtype=float)
    if not np.all(np.isfinite(A)):
        raise FitError("pseudoinverse of a matrix with non-finite entries")
    if A.size == 0:
        return np.zeros(A.shape[::-1])
    try:
        U, s, Vt = np.linalg.svd(A, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise FitError(f"SVD failed: {exc}") from exc
    if s[0] == 0:
        return np.zeros(A.shape[::-1])
    keep = s > rank_tol * s[0]
    return (Vt[keep].T / s[keep]) @ U[:, keep].T


def _check(sys: SnapshotSystem):
    if sys.pair_count < 1:
        raise FitError("snapshot system has no transition pairs")
    for name in ("X0", "X1", "U0"):
        if not np.all(np.isfinite(getattr(sys, name))):
            raise FitError(f"{name} contains non-finite entries")


def _model(sys: SnapshotSystem, Mt: np.ndarray, lam: float) -> ControlledLinearModel:
    D = sys.state_dim
    resid = np.linalg.norm(sys.X1 - Mt @ sys.Y0)
    return ControlledLinearModel(
        M=Mt[:, :D], N=Mt[:, D:], lam=float(lam), feature_spec=sys.feature_spec,
        fit_report=FitReport(residual_frobenius=float(resid)), scaler=sys.scaler,
        dt=sys.dt, control_dim=sys.control_dim)


def fit_ols(sys: SnapshotSystem, rank_tol: float = RANK_TOL) -> ControlledLinearModel:
    """Minimum-norm least-squares operator ``X1 [X0; U0]^+``."""
    _check(sys)
    Y0 = sys.Y0
    sol, *_ = np.linalg.lstsq(Y0.T, sys.X1.T, rcond=rank_tol)
    return _model(sys, sol.T, 0.0)


def penalty_mask(sys: SnapshotSystem, penalize_control_block: bool) -> np.ndarray:
    """Diagonal of the penalty selector over the rows of ``[X0; U0]``."""
    mask = np.zeros(sys.state_dim + sys.feature_dim)
    mask[:sys.state_dim] = 1.0
    if penalize_control_block:
        mask[sys.state_dim:] = 1.0
    return mask


def augmented_system(sys: SnapshotSystem, lam: float,
                     penalize_control_block: bool = False):
    """Return ``(X1_bar, Y0_bar)``.

    ``Y0_bar = [[X0, lam I, 0], [U0, 0, lam I]]`` where the last block only
    exists when the control block is penalized; ``X1_bar = [X1, 0]``.
    """
    mask = penalty_mask(sys, penalize_control_block)
    rows = np.flatnonzero(mask)
    extra = np.zeros((mask.size, rows.size))
    extra[rows, np.arange(rows.size)] = lam
    Y0_bar = np.hstack([sys.Y0, extra])
    X1_bar = np.hstack([sys.X1, np.zeros((sys.state_dim, rows.size))])
    return X1_bar, Y0_bar


def fit_ridge(sys: SnapshotSystem, cfg: RidgeConfig = RidgeConfig(),
              rank_tol: float = RANK_TOL) -> ControlledLinearModel:
    """Ridge-penalized operator fit; ``lam = 0`` reduces to :func:`fit_ols`."""
    if not cfg.lam >= 0:
        raise FitError("ridge penalty must be non-negative")
    _check(sys)
    if cfg.solver is Solver.AUGMENTED_PSEUDOINVERSE:
        X1_bar, Y0_bar = augmented_system(sys, cfg.lam, cfg.penalize_control_block)
        Mt = X1_bar @ pseudoinverse(Y0_bar, rank_tol)
    else:
        Mt = _per_row_ridge(sys, cfg)
    return _model(sys, Mt, cfg.lam)


def _per_row_ridge(sys: SnapshotSystem, cfg: RidgeConfig) -> np.ndarray:
    # Each output row solves (Y Y^T + lam^2 P) m = Y x; rows are independent.
    Y0 = sys.Y0
    P = np.diag(penalty_mask(sys, cfg.penalize_control_block))
    G = Y0 @ Y0.T + cfg.lam ** 2 * P
    Mt = np.empty((sys.state_dim, Y0.shape[0]))
    for i in range(sys.state_dim):
        rhs = Y0 @ sys.X1[i]
        Mt[i], *_ = np.linalg.lstsq(G, rhs, rcond=None)
    return Mt
