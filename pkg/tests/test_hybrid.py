import numpy as np
import pytest

from stabletwin.core import ControlledLinearModel, Flight, TrajectoryDataset
from stabletwin.dmdc import rollout
from stabletwin.errors import AlignmentError
from stabletwin.features import FeatureSpec
from stabletwin.hybrid import (DEFAULT_SPEC, HybridTwinModel, compute_residuals,
                               fit_hybrid_twin, predict_hybrid)
from stabletwin.stabilization import StabilizationConfig

from synthetic import matrix_with_radius, simulate


def _dataset(states_by_id, controls_by_id, dt=1.0):
    flights = tuple(Flight(f, np.arange(len(z)) * dt, z, controls_by_id[f])
                    for f, z in states_by_id.items())
    return TrajectoryDataset(flights, dt)


@pytest.fixture
def pair(rng):
    ids = ["A", "B", "C"]
    u = {f: rng.uniform(0, 1, (50, 2)) for f in ids}
    z = {f: rng.standard_normal((50, 3)) for f in ids}
    return _dataset(z, u), u


def test_residuals_zero_for_identical(pair):
    ds, _ = pair
    res = compute_residuals(ds, ds)
    assert all(not f.states.any() for f in res.flights)


def test_residuals_equal_measurements_for_zero_coarse(pair):
    ds, u = pair
    zero = _dataset({f.id: np.zeros_like(f.states) for f in ds.flights}, u)
    res = compute_residuals(ds, zero)
    for f in ds.flights:
        np.testing.assert_array_equal(res[f.id].states, f.states)


def test_residuals_track_injected_model_error(scenario):
    res = compute_residuals(scenario.gt, scenario.cm)
    for f in scenario.gt.ids[:3]:
        np.testing.assert_array_equal(res[f].states,
                                      scenario.gt[f].states - scenario.cm[f].states)
    noisy = compute_residuals(scenario.ped, scenario.cm)
    gap = np.vstack([noisy[f].states - res[f].states for f in scenario.gt.ids])
    assert np.all(np.abs(gap.std(axis=0) - scenario.noise_sigma) <= 0.1 * scenario.noise_sigma)


def test_misaligned_inputs_rejected(pair):
    ds, u = pair
    short = _dataset({f.id: f.states[:-1] for f in ds.flights},
                     {f: c[:-1] for f, c in u.items()})
    with pytest.raises(AlignmentError):
        compute_residuals(ds, short)


def test_perfect_coarse_model(pair):
    ds, _ = pair
    ht = fit_hybrid_twin(ds, ds)
    fl = ds.flights[0]
    z = predict_hybrid(ht, fl, fl.states[0])
    assert np.max(np.abs(z - fl.states)) <= 1e-10


def test_frozen_correction(pair):
    ds, _ = pair
    spec = FeatureSpec()
    corr = ControlledLinearModel(M=np.zeros((3, 3)), N=np.zeros((3, 2)), feature_spec=spec)
    ht = HybridTwinModel(corr, "", spec)
    fl = ds.flights[1]
    z0 = fl.states[0] + 0.3
    z = predict_hybrid(ht, fl, z0)
    np.testing.assert_allclose(z[0], z0)
    np.testing.assert_array_equal(z[1:], fl.states[1:])


def _biased_pair(rng, bias_rho):
    """Measured = coarse plus a correction obeying a linear law driven by
    the controls."""
    D, d = 3, 2
    Mc = matrix_with_radius(D, bias_rho, rng)
    Nc = 0.2 * rng.standard_normal((D, d))
    coarse, meas, ctrl = {}, {}, {}
    for k in range(12):
        u = rng.uniform(0, 1, (60, d))
        zc = np.cumsum(rng.standard_normal((60, D)), axis=0) * 0.1
        c = simulate(Mc, Nc, 0.1 * rng.standard_normal(D), u)
        fid = f"F{k:02d}"
        coarse[fid], meas[fid], ctrl[fid] = zc, zc + c, u
    return _dataset(meas, ctrl), _dataset(coarse, ctrl)


def test_learns_structured_bias(rng):
    meas, coarse = _biased_pair(rng, 0.8)
    ht = fit_hybrid_twin(meas, coarse, FeatureSpec(), train_flights=meas.ids[:4])
    for fid in meas.ids[4:]:
        z = predict_hybrid(ht, coarse[fid], meas[fid].states[0])
        np.testing.assert_allclose(z, meas[fid].states, atol=1e-8)


def test_unstable_residual_fit_is_stabilized(rng):
    D, d = 3, 1
    Mc = matrix_with_radius(D, 1.05, rng)
    Nc = rng.standard_normal((D, d))
    meas, coarse, ctrl = {}, {}, {}
    u = rng.standard_normal((30, d))
    c = simulate(Mc, Nc, rng.standard_normal(D), u) + 0.05 * rng.standard_normal((30, D))
    meas["A"], coarse["A"], ctrl["A"] = c, np.zeros_like(c), u
    ht = fit_hybrid_twin(_dataset(meas, ctrl), _dataset(coarse, ctrl), FeatureSpec(),
                         stab_cfg=StabilizationConfig(rho_desired=0.999))
    rep = ht.correction.fit_report
    assert rep.rho_at_lambda_zero > 1 and rep.stabilized
    assert ht.spectral_radius <= 0.999


def test_prediction_is_coarse_plus_correction_rollout(rng):
    meas, coarse = _biased_pair(rng, 0.9)
    ht = fit_hybrid_twin(meas, coarse, DEFAULT_SPEC, train_flights=meas.ids[:5])
    fid = meas.ids[7]
    z = predict_hybrid(ht, coarse[fid], meas[fid].states[0])
    c0 = meas[fid].states[0] - coarse[fid].states[0]
    corr = rollout(ht.correction, c0, coarse[fid].controls, coarse[fid].n_snapshots - 1)
    np.testing.assert_array_equal(z, coarse[fid].states + corr)


def test_only_first_measurement_is_used(rng):
    meas, coarse = _biased_pair(rng, 0.9)
    ht = fit_hybrid_twin(meas, coarse, DEFAULT_SPEC, train_flights=meas.ids[:5])
    fl = meas[meas.ids[6]]
    ref = predict_hybrid(ht, coarse[fl.id], fl.states[0])
    perturbed = fl.states.copy()
    perturbed[1:] += 100.0
    again = predict_hybrid(ht, coarse[fl.id], perturbed[0])
    np.testing.assert_array_equal(ref, again)


def test_bounded_over_long_coarse_horizon(rng):
    meas, coarse = _biased_pair(rng, 0.95)
    ht = fit_hybrid_twin(meas, coarse, FeatureSpec(), train_flights=meas.ids[:5])
    assert ht.spectral_radius < 1
    n = 1001
    u = rng.uniform(0, 1, (n, 2))
    long = Flight("L", np.arange(float(n)), np.sin(np.arange(n) / 50.0)[:, None] * np.ones(3), u)
    z = predict_hybrid(ht, long, long.states[0] + 1.0)
    assert np.all(np.isfinite(z)) and np.max(np.abs(z)) < 1e3


def test_horizon_longer_than_coarse_rejected(pair):
    ds, _ = pair
    ht = fit_hybrid_twin(ds, ds, FeatureSpec())
    with pytest.raises(AlignmentError):
        predict_hybrid(ht, ds.flights[0], ds.flights[0].states[0], steps=100)
