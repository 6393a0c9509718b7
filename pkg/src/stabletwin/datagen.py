"""Synthetic flight scenarios: ground truth, coarse model, noisy measurements.

The ground-truth plant is a stable lower-triangular linear system in which
every variable relaxes toward a target built from upstream variables and
controls::

    z_{n+1} = a * z_n + (1 - a) * (C z_n + G u_n + s(u_n))

``a`` holds per-variable relaxation factors (the eigenvalues, since ``C`` is
strictly lower triangular), so the spectral radius is ``max(a) < 1``. The
last two variables are fast and carry a saturating control nonlinearity
``s``. The coarse model perturbs ``a`` and ``G`` and drops ``s``.
Measurements are the ground truth plus white noise.

All scales are fixtures chosen for this generator, not physical data.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from .core import Flight, TrajectoryDataset, assemble_snapshots
from .errors import StableTwinError
from .features import FeatureSpec

log = logging.getLogger(__name__)

N_FAST = 2


@dataclass(frozen=True)
class Plant:
    """Parameters of ``z_{n+1} = a z + (1-a)(C z + G u + s(u))``."""

    a: np.ndarray
    C: np.ndarray
    G: np.ndarray
    sat_gain: np.ndarray
    sat_mix: np.ndarray
    sat_slope: float = 4.0

    @property
    def D(self) -> int:
        return self.a.size

    @property
    def d(self) -> int:
        return self.G.shape[1]

    @property
    def A(self) -> np.ndarray:
        return np.diag(self.a) + (1 - self.a)[:, None] * self.C

    @property
    def B(self) -> np.ndarray:
        return (1 - self.a)[:, None] * self.G

    @property
    def spectral_radius(self) -> float:
        return float(np.max(np.abs(np.linalg.eigvals(self.A))))

    def saturation(self, u: np.ndarray) -> np.ndarray:
        """``(1 - a) * s(u)``; nonzero only on the fast variables."""
        return (1 - self.a) * self.sat_gain * np.tanh(self.sat_slope * (self.sat_mix @ u))

    def equilibrium(self, u: np.ndarray, nonlinear: bool = True) -> np.ndarray:
        rhs = self.B @ u
        if nonlinear:
            rhs = rhs + self.saturation(u)
        return np.linalg.solve(np.eye(self.D) - self.A, rhs)

    def simulate(self, z0: np.ndarray, controls: np.ndarray,
                 nonlinear: bool = True) -> np.ndarray:
        A, B = self.A, self.B
        z = np.empty((controls.shape[0], self.D))
        z[0] = z0
        for n in range(controls.shape[0] - 1):
            z[n + 1] = A @ z[n] + B @ controls[n]
            if nonlinear:
                z[n + 1] += self.saturation(controls[n])
        return z


def default_plant(D: int = 8, d: int = 3, seed: int = 7,
                  slow_range=(0.90, 0.975), fast=(0.6, 0.5)) -> Plant:
    """A plant laid out like an air-distribution system: the first quarter
    of the variables are pressure-like (order 1), the rest temperature-like
    (order 10 to 100), the last two of them fast."""
    rng = np.random.default_rng(seed)
    n_fast = min(N_FAST, max(D - 1, 0))
    n_slow = D - n_fast
    a = np.empty(D)
    a[:n_slow] = np.linspace(slow_range[0], slow_range[1], n_slow)
    a[n_slow:] = np.asarray(fast, dtype=float)[:n_fast]
    n_press = max(1, D // 4)
    C = np.zeros((D, D))
    for i in range(1, D):
        # couple to up to two upstream variables
        for j in rng.choice(i, size=min(2, i), replace=False):
            C[i, j] = rng.uniform(0.3, 0.8)
    scale = np.where(np.arange(D) < n_press, 1.5, 20.0)
    G = rng.uniform(0.2, 1.0, size=(D, d)) * scale[:, None]
    G[rng.random((D, d)) < 0.3] = 0.0
    sat_gain = np.zeros(D)
    sat_mix = np.zeros((D, d))
    for k, i in enumerate(range(n_slow, D)):
        sat_gain[i] = 15.0 + 5.0 * k
        j1, j2 = (k % d), ((k + 1) % d)
        sat_mix[i, j1] = 1.0
        if j2 != j1:
            sat_mix[i, j2] = -1.0
    return Plant(a, C, G, sat_gain, sat_mix)


@dataclass(frozen=True)
class ScenarioConfig:
    D: int = 8
    d: int = 3
    n_flights: int = 40
    horizon: tuple = (250, 600)
    dt: float = 1.0
    seed: int = 42
    plant_seed: int = 7
    cm_degradation: float = 0.15
    noise_level: float = 0.015
    noise_sigma: Optional[tuple] = None
    nonlinearity: bool = True
    control_range: tuple = (0.2, 1.0)
    segment_length: tuple = (20, 90)
    envelope: float = 1e3

    def manifest(self) -> dict:
        out = {}
        for k, v in asdict(self).items():
            if isinstance(v, (tuple, list)):
                v = " ".join(str(x) for x in v)
            out[f"scenario.{k}"] = "" if v is None else v
        return out


@dataclass(frozen=True)
class Scenario:
    gt: TrajectoryDataset
    cm: TrajectoryDataset
    ped: TrajectoryDataset
    plant: Plant
    coarse_plant: Plant
    noise_sigma: np.ndarray
    config: ScenarioConfig


def control_schedule(n: int, d: int, rng: np.random.Generator,
                     value_range=(0.2, 1.0), segment_length=(20, 90)) -> np.ndarray:
    """Piecewise-constant controls mimicking flight phases."""
    u = np.empty((n, d))
    for j in range(d):
        k = 0
        while k < n:
            length = int(rng.integers(segment_length[0], segment_length[1] + 1))
            u[k:k + length, j] = rng.uniform(*value_range)
            k += length
    return u


def degrade(plant: Plant, scale: float, rng: np.random.Generator) -> Plant:
    """Coarse counterpart: perturbed relaxation factors and gains, no
    saturation term."""
    a = plant.a + scale * 0.15 * (1 - plant.a) * rng.standard_normal(plant.D)
    a = np.clip(a, 0.0, 0.999)
    G = plant.G * (1 + scale * rng.standard_normal(plant.G.shape))
    return Plant(a, plant.C.copy(), G, np.zeros(plant.D), plant.sat_mix.copy(),
                 plant.sat_slope)


def _flight_id(k: int, width: int) -> str:
    return f"F{k + 1:0{width}d}"


def generate_scenario(cfg: ScenarioConfig = ScenarioConfig(),
                      plant: Optional[Plant] = None) -> Scenario:
    """Ground truth, coarse-model and noisy datasets for ``cfg``.

    Flight ``k`` draws its schedule and noise from the ``k``-th child of
    ``SeedSequence(cfg.seed)``, so flights are independent and the whole
    scenario is bit-reproducible.
    """
    if plant is None:
        plant = default_plant(cfg.D, cfg.d, cfg.plant_seed)
    if not cfg.nonlinearity:
        plant = Plant(plant.a, plant.C, plant.G, np.zeros(plant.D), plant.sat_mix,
                      plant.sat_slope)
    rho = plant.spectral_radius
    if not rho < 1:
        raise StableTwinError(f"ground-truth plant is not stable (rho={rho:.6g})")
    root = np.random.SeedSequence(cfg.seed)
    plant_ss, *flight_ss = root.spawn(cfg.n_flights + 1)
    if cfg.cm_degradation > 0:
        coarse = degrade(plant, cfg.cm_degradation, np.random.default_rng(plant_ss))
    else:
        coarse = Plant(plant.a, plant.C, plant.G, np.zeros(plant.D), plant.sat_mix,
                       plant.sat_slope)
    width = len(str(cfg.n_flights))
    gt_f, cm_f, noise_draws = [], [], []
    for k, ss in enumerate(flight_ss):
        rng = np.random.default_rng(ss)
        n = int(rng.integers(cfg.horizon[0], cfg.horizon[1] + 1))
        u = control_schedule(n, cfg.d, rng, cfg.control_range, cfg.segment_length)
        z0 = plant.equilibrium(u[0], nonlinear=cfg.nonlinearity)
        z = plant.simulate(z0, u, nonlinear=cfg.nonlinearity)
        zc = coarse.simulate(z0, u, nonlinear=False)
        if not np.all(np.abs(z) <= cfg.envelope):
            raise StableTwinError(f"flight {k} left the envelope {cfg.envelope}")
        t = np.arange(n) * cfg.dt
        fid = _flight_id(k, width)
        gt_f.append(Flight(fid, t, z, u))
        cm_f.append(Flight(fid, t, zc, u))
        noise_draws.append(rng.standard_normal(z.shape))
    gt = TrajectoryDataset(tuple(gt_f), cfg.dt)
    if cfg.noise_sigma is not None:
        sigma = np.broadcast_to(np.asarray(cfg.noise_sigma, dtype=float), (cfg.D,)).copy()
    else:
        allz = np.vstack([f.states for f in gt_f])
        sigma = cfg.noise_level * (allz.max(axis=0) - allz.min(axis=0))
    ped_f = [f.replace(states=f.states + sigma * e) for f, e in zip(gt_f, noise_draws)]
    return Scenario(gt, TrajectoryDataset(tuple(cm_f), cfg.dt),
                    TrajectoryDataset(tuple(ped_f), cfg.dt), plant, coarse, sigma, cfg)


@dataclass(frozen=True)
class UnstableCase:
    dataset: TrajectoryDataset
    seed: int
    rho_unregularized: float
    attempts: int


@dataclass(frozen=True)
class UnstableCaseConfig:
    """Short, noisy flights of a near-marginal plant."""

    D: int = 8
    d: int = 3
    n_flights: int = 1
    horizon: tuple = (25, 40)
    dt: float = 1.0
    seed: int = 0
    slow_range: tuple = (0.990, 0.999)
    noise_level: float = 0.02
    min_rho: float = 1.02
    max_attempts: int = 200
    feature_spec: FeatureSpec = field(default_factory=FeatureSpec)


def generate_unstable_fit_case(cfg: UnstableCaseConfig = UnstableCaseConfig()) -> UnstableCase:
    """Dataset on which the unregularized DMDc fit has ``rho(M) > min_rho``.

    Seeds ``cfg.seed, cfg.seed + 1, ...`` are tried until the property holds;
    the seed that worked is recorded in the result.
    """
    from .dmdc import fit_dmdc

    for attempt in range(cfg.max_attempts):
        seed = cfg.seed + attempt
        plant = default_plant(cfg.D, cfg.d, seed=seed, slow_range=cfg.slow_range)
        sc = generate_scenario(
            ScenarioConfig(D=cfg.D, d=cfg.d, n_flights=cfg.n_flights, horizon=cfg.horizon,
                           dt=cfg.dt, seed=seed, noise_level=cfg.noise_level,
                           nonlinearity=False, envelope=np.inf),
            plant=plant)
        sys = assemble_snapshots(sc.ped, None, cfg.feature_spec)
        rho = fit_dmdc(sys, 0.0).spectral_radius
        if rho > cfg.min_rho:
            return UnstableCase(sc.ped, seed, rho, attempt + 1)
    raise StableTwinError(f"no unstable fit case within {cfg.max_attempts} seeds "
                          f"starting at {cfg.seed}")
