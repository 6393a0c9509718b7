"""Control-derived features appended to the regressor of a linear model.

A feature row at step ``n`` is the concatenation of the enabled blocks

    [mu_n; mu_{n-1}; omega_n; W_n]

where ``omega`` is the left-rectangle running integral of the controls and
``W`` the running integral of ``omega``. Integrals restart at each flight.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Names accepted by ``FeatureSpec.from_tokens`` (CLI ``--features``).
TOKENS = ("z", "u", "ulag", "omega", "W")


@dataclass(frozen=True)
class FeatureSpec:
    """Which control blocks enter the regressor, and whether to standardize."""

    include_control: bool = True
    include_lagged_control: bool = False
    include_omega: bool = False
    include_W: bool = False
    standardize: bool = False

    @classmethod
    def from_tokens(cls, tokens, standardize: bool = False) -> "FeatureSpec":
        """Build a spec from names such as ``"z,u,ulag,omega,W"``."""
        if isinstance(tokens, str):
            tokens = [t.strip() for t in tokens.split(",") if t.strip()]
        unknown = set(tokens) - set(TOKENS)
        if unknown:
            raise ValueError(f"unknown feature names: {sorted(unknown)}")
        return cls(
            include_control="u" in tokens,
            include_lagged_control="ulag" in tokens,
            include_omega="omega" in tokens,
            include_W="W" in tokens,
            standardize=standardize,
        )

    def to_tokens(self) -> list[str]:
        flags = (True, self.include_control, self.include_lagged_control,
                 self.include_omega, self.include_W)
        return [name for name, on in zip(TOKENS, flags) if on]

    @property
    def n_blocks(self) -> int:
        return sum((self.include_control, self.include_lagged_control,
                    self.include_omega, self.include_W))

    @property
    def uses_lag(self) -> bool:
        return self.include_lagged_control

    @property
    def min_snapshots(self) -> int:
        return 3 if self.uses_lag else 2

    def as_flags(self) -> tuple[bool, ...]:
        return (self.include_control, self.include_lagged_control,
                self.include_omega, self.include_W, self.standardize)

    @classmethod
    def from_flags(cls, flags) -> "FeatureSpec":
        return cls(*(bool(f) for f in flags))


def d_prime(spec: FeatureSpec, d: int) -> int:
    """Dimension of a control feature row for ``d`` raw controls."""
    if d < 0:
        raise ValueError("d must be non-negative")
    return d * spec.n_blocks


def running_integral(values: np.ndarray, dt: float) -> np.ndarray:
    """Left-rectangle cumulative sum ``sum_{i<=n} values_i * dt`` along axis 0."""
    return np.cumsum(np.asarray(values, dtype=float) * dt, axis=0)


def control_features(controls: np.ndarray, dt: float,
                     spec: FeatureSpec) -> np.ndarray:
    """Feature rows for one flight.

    Parameters
    ----------
    controls : np.ndarray
        Raw controls of shape ``(n, d)``.
    dt : float
        Uniform sampling interval.
    spec : FeatureSpec
        Enabled blocks.

    Returns
    -------
    np.ndarray
        Array of shape ``(n, d_prime(spec, d))``. The lag at the first step
        repeats ``mu_0``.
    """
    mu = np.asarray(controls, dtype=float)
    if mu.ndim != 2:
        raise ValueError("controls must be a 2-D array (n, d)")
    n, d = mu.shape
    if spec.n_blocks and d == 0:
        raise ValueError("feature spec requests control blocks but d = 0")
    blocks = []
    if spec.include_control:
        blocks.append(mu)
    if spec.include_lagged_control:
        lag = np.empty_like(mu)
        lag[1:] = mu[:-1]
        lag[:1] = mu[:1]
        blocks.append(lag)
    omega = None
    if spec.include_omega or spec.include_W:
        omega = running_integral(mu, dt)
    if spec.include_omega:
        blocks.append(omega)
    if spec.include_W:
        blocks.append(running_integral(omega, dt))
    if not blocks:
        return np.zeros((n, 0))
    return np.hstack(blocks)


def flight_features(flight, dt: float, spec: FeatureSpec) -> np.ndarray:
    """``control_features`` applied to a :class:`~stabletwin.core.Flight`."""
    if flight.n_snapshots < 2:
        raise ValueError(f"flight {flight.id!r} needs at least 2 snapshots")
    return control_features(flight.controls, dt, spec)
