"""Penalty search that drives the spectral radius of ``M`` under a target.

The search looks for a root of ``f(lam) = rho_desired - rho(M(lam))``. It
first grows ``lam`` geometrically from a tiny value until ``f`` turns
positive, then shrinks the bracket by bisection or regula falsi until
``0 <= f(lam) <= f_tol``.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np

from .errors import StabilizationError

log = logging.getLogger(__name__)

LAMBDA_START = 1e-8
MAX_BRACKET_EXPANSIONS = 60


class Method(str, enum.Enum):
    BISECTION = "bisection"
    REGULA_FALSI = "regula_falsi"


@dataclass(frozen=True)
class StabilizationConfig:
    rho_desired: float = 0.999
    f_tol: float = 1e-4
    lambda_bracket_growth: float = 10.0
    max_iterations: int = 200
    method: Method = Method.BISECTION

    def __post_init__(self):
        if not 0 < self.rho_desired <= 1:
            raise ValueError("rho_desired must lie in (0, 1]")
        if not self.f_tol > 0:
            raise ValueError("f_tol must be positive")
        if not self.lambda_bracket_growth > 1:
            raise ValueError("lambda_bracket_growth must exceed 1")
        object.__setattr__(self, "method", Method(self.method))


def spectral_radius(M: np.ndarray) -> float:
    """Largest eigenvalue modulus of a square matrix."""
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"spectral radius needs a square matrix, got {M.shape}")
    if M.size == 0:
        return 0.0
    if not np.all(np.isfinite(M)):
        raise ValueError("matrix has non-finite entries")
    try:
        ev = np.linalg.eigvals(M)
    except np.linalg.LinAlgError as exc:
        raise StabilizationError(f"eigensolver failed: {exc}") from exc
    return float(np.max(np.abs(ev)))


def _ridge_fitter(ridge_cfg):
    from .regression import fit_ridge
    return lambda sys, lam: fit_ridge(sys, ridge_cfg.at(lam))


def stability_gap(sys, cfg, rho_desired: float) -> float:
    """``rho_desired - rho(M)`` for the ridge fit described by ``cfg``."""
    from .regression import fit_ridge
    return rho_desired - fit_ridge(sys, cfg).spectral_radius


@dataclass(frozen=True)
class SearchResult:
    lam: float
    model: object
    iterations: int
    bracket_expansions: int
    rho_at_lambda_zero: float


def find_stabilizing_lambda(sys, cfg: StabilizationConfig = StabilizationConfig(),
                            fit: Optional[Callable] = None, ridge_cfg=None):
    """Search the smallest-effort penalty that makes the fit stable.

    Parameters
    ----------
    sys : SnapshotSystem
        Training data.
    cfg : StabilizationConfig
        Target radius, tolerance and root-finding method.
    fit : callable, optional
        ``fit(sys, lam)`` returning a model exposing ``spectral_radius``.
        Defaults to :func:`~stabletwin.regression.fit_ridge` with
        ``ridge_cfg``.

    Returns
    -------
    tuple
        ``(lambda_star, report)`` where ``report`` is a
        :class:`~stabletwin.core.FitReport` of the model at ``lambda_star``.
    """
    res = _search(sys, cfg, fit, ridge_cfg)
    return res.lam, _report(res, cfg)


def _search(sys, cfg, fit, ridge_cfg) -> SearchResult:
    if fit is None:
        from .regression import RidgeConfig
        fit = _ridge_fitter(ridge_cfg or RidgeConfig())

    def evaluate(lam):
        model = fit(sys, lam)
        return cfg.rho_desired - model.spectral_radius, model

    f0, m0 = evaluate(0.0)
    rho0 = cfg.rho_desired - f0
    if f0 >= 0:
        return SearchResult(0.0, m0, 0, 0, rho0)

    lam_a, f_a = 0.0, f0
    lam_b = LAMBDA_START
    f_b, m_b = evaluate(lam_b)
    expansions = 0
    while f_b < 0:
        if expansions >= MAX_BRACKET_EXPANSIONS:
            raise StabilizationError(
                f"no stabilizing penalty found up to lambda={lam_b:g}")
        lam_a, f_a = lam_b, f_b
        lam_b *= cfg.lambda_bracket_growth
        f_b, m_b = evaluate(lam_b)
        expansions += 1
    if f_b <= cfg.f_tol:
        return SearchResult(lam_b, m_b, 0, expansions, rho0)

    for k in range(1, cfg.max_iterations + 1):
        if cfg.method is Method.BISECTION:
            lam_c = 0.5 * (lam_a + lam_b)
        else:
            lam_c = lam_b - f_b * (lam_b - lam_a) / (f_b - f_a)
            if not lam_a < lam_c < lam_b:
                lam_c = 0.5 * (lam_a + lam_b)
        if not lam_a < lam_c < lam_b:
            # bracket exhausted in floating point; lam_b is stable
            log.warning("penalty bracket collapsed at lambda=%g with f=%g",
                        lam_b, f_b)
            return SearchResult(lam_b, m_b, k, expansions, rho0)
        f_c, m_c = evaluate(lam_c)
        if 0 <= f_c <= cfg.f_tol:
            return SearchResult(lam_c, m_c, k, expansions, rho0)
        if f_c < 0:
            lam_a, f_a = lam_c, f_c
        else:
            lam_b, f_b, m_b = lam_c, f_c, m_c
    raise StabilizationError(
        f"penalty search did not converge in {cfg.max_iterations} iterations "
        f"(bracket [{lam_a:g}, {lam_b:g}])")


def _report(res: SearchResult, cfg: StabilizationConfig):
    base = res.model.fit_report
    return replace(base, lambda_search_iterations=res.iterations,
                   rho_at_lambda_zero=res.rho_at_lambda_zero,
                   stabilized=res.lam > 0, rho_desired=cfg.rho_desired,
                   bracket_expansions=res.bracket_expansions)


def fit_stable(sys, ridge_cfg=None, stab_cfg: StabilizationConfig = StabilizationConfig(),
               fit: Optional[Callable] = None):
    """Fit at ``lam = 0`` and, if unstable, at the searched penalty.

    The returned model carries a report with ``stabilized`` set when a
    positive penalty was needed; its ``M`` then satisfies
    ``rho(M) <= rho_desired``.
    """
    res = _search(sys, stab_cfg, fit, ridge_cfg)
    report = _report(res, stab_cfg)
    model = res.model
    if hasattr(model, "with_report"):
        return model.with_report(report)
    return replace(model, fit_report=report)


def iteration_bound(bracket: float, width_tol: float) -> int:
    """Bisection steps needed to shrink ``bracket`` below ``width_tol``."""
    return max(0, math.ceil(math.log2(bracket / width_tol)))
