"""Stable DMD/DMDc system identification and hybrid-twin corrections."""

from .core import (ControlledLinearModel, FitReport, Flight, ReducedControlledModel,
                   SnapshotSystem, Standardizer, TrajectoryDataset, assemble_snapshots)
from .dmdc import SvdTruncation, fit_dmdc, reduce_model, rollout, rollout_reduced
from .errors import (AlignmentError, DataError, DivergenceError, FitError,
                     StabilizationError, StableTwinError)
from .features import FeatureSpec, control_features, d_prime
from .hybrid import HybridTwinModel, compute_residuals, fit_hybrid_twin, predict_hybrid
from .metrics import (measurement_error_bound, normalized_error, per_flight_mean_error)
from .regression import RidgeConfig, fit_ols, fit_ridge, pseudoinverse
from .stabilization import (StabilizationConfig, find_stabilizing_lambda, fit_stable,
                            spectral_radius, stability_gap)

__version__ = "0.1.0"
