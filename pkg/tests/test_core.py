import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from stabletwin.core import (ControlledLinearModel, Flight, SnapshotSystem, Standardizer,
                             TrajectoryDataset, assemble_snapshots)
from stabletwin.errors import DataError
from stabletwin.features import FeatureSpec

from synthetic import constant_dataset


def _flight(fid, n, D=2, d=1, dt=1.0, offset=0.0):
    t = np.arange(n) * dt
    z = offset + np.arange(n * D, dtype=float).reshape(n, D)
    return Flight(fid, t, z, np.ones((n, d)))


def test_two_flights_pair_count():
    ds = TrajectoryDataset((_flight("A", 5), _flight("B", 4)), 1.0)
    sys_ = assemble_snapshots(ds, ["A", "B"], FeatureSpec())
    assert sys_.pair_count == 7


def test_zero_states_give_zero_matrices():
    ds = constant_dataset(np.zeros((6, 3)), np.zeros((6, 2)))
    sys_ = assemble_snapshots(ds)
    assert sys_.X0.shape == sys_.X1.shape == (3, 5)
    assert not sys_.X0.any() and not sys_.X1.any()


def test_layout_of_eight_states_three_controls(rng):
    flights = tuple(Flight(f"F{k}", np.arange(20.0), rng.standard_normal((20, 8)),
                           rng.standard_normal((20, 3))) for k in range(2))
    sys_ = assemble_snapshots(TrajectoryDataset(flights, 1.0))
    assert sys_.X0.shape == (8, 38)
    assert sys_.U0.shape == (3, 38)


def test_no_pair_crosses_a_flight_boundary():
    a, b = _flight("A", 5), _flight("B", 4, offset=1000.0)
    sys_ = assemble_snapshots(TrajectoryDataset((a, b), 1.0))
    # every successor in this fixture is the predecessor plus D
    np.testing.assert_array_equal(sys_.X1 - sys_.X0, 2.0)


def test_unknown_flight_rejected():
    ds = TrajectoryDataset((_flight("A", 5),), 1.0)
    with pytest.raises(DataError, match="unknown"):
        assemble_snapshots(ds, ["A", "Z"])


def test_lag_needs_three_snapshots():
    ds = TrajectoryDataset((_flight("A", 2),), 1.0)
    with pytest.raises(DataError, match="snapshots"):
        assemble_snapshots(ds, spec=FeatureSpec(include_lagged_control=True))


def test_dataset_validation():
    with pytest.raises(DataError):
        TrajectoryDataset((), 1.0)
    with pytest.raises(DataError):
        TrajectoryDataset((_flight("A", 5), _flight("A", 4)), 1.0)
    with pytest.raises(DataError):
        TrajectoryDataset((_flight("A", 5), _flight("B", 4, D=3)), 1.0)
    with pytest.raises(DataError):
        TrajectoryDataset((_flight("A", 1),), 1.0)
    with pytest.raises(DataError):
        TrajectoryDataset((_flight("A", 5),), 0.5)
    uneven = Flight("A", np.array([0.0, 1.0, 2.5]), np.zeros((3, 1)), np.zeros((3, 0)))
    with pytest.raises(DataError, match="uniform"):
        TrajectoryDataset((uneven,), 1.0)


def test_dt_tolerance_accepts_rounding():
    t = np.arange(10) * 0.1 * (1 + 1e-9)
    ds = TrajectoryDataset((Flight("A", t, np.zeros((10, 1)), np.zeros((10, 0))),), 0.1)
    assert len(ds) == 1


def test_flight_arrays_are_read_only():
    f = _flight("A", 3)
    with pytest.raises(ValueError):
        f.states[0, 0] = 1.0


def test_standardization_round_trip(rng):
    flights = (Flight("A", np.arange(30.0), 50 + 10 * rng.standard_normal((30, 3)),
                      rng.standard_normal((30, 2))),)
    sys_ = assemble_snapshots(TrajectoryDataset(flights, 1.0),
                              spec=FeatureSpec(standardize=True))
    np.testing.assert_allclose(sys_.X0.std(axis=1), 1, rtol=1e-12)
    assert not sys_.scaler.state_mean.any()
    raw = sys_.scaler.states_out(sys_.X1)
    np.testing.assert_allclose(raw, flights[0].states[1:].T, rtol=1e-12)


def test_optional_centering(rng):
    X = 50 + 10 * rng.standard_normal((3, 40))
    sc = Standardizer.fit(X, np.zeros((0, 40)), center=True)
    np.testing.assert_allclose(sc.states_in(X).mean(axis=1), 0, atol=1e-12)
    np.testing.assert_allclose(sc.states_out(sc.states_in(X)), X, rtol=1e-14)


def test_standardizer_keeps_constant_rows():
    sc = Standardizer.fit(np.ones((2, 5)), np.zeros((1, 5)))
    np.testing.assert_array_equal(sc.state_scale, 1.0)
    np.testing.assert_array_equal(sc.feature_scale, 1.0)


def test_model_records_spectral_radius():
    m = ControlledLinearModel(M=np.diag([0.5, -0.8]), N=np.zeros((2, 0)), lam=0.0)
    assert abs(m.spectral_radius_M - 0.8) <= 1e-9


def test_snapshot_column_mismatch():
    with pytest.raises(DataError):
        SnapshotSystem(np.zeros((2, 3)), np.zeros((2, 4)), np.zeros((0, 3)))


@settings(max_examples=30, deadline=None)
@given(st.lists(st.integers(2, 8), min_size=1, max_size=4), st.randoms(use_true_random=False))
def test_shuffled_flight_order_keeps_column_multiset(lengths, rnd):
    gen = np.random.default_rng(len(lengths))
    flights = tuple(Flight(f"F{k}", np.arange(float(n)), gen.standard_normal((n, 2)),
                           gen.standard_normal((n, 1))) for k, n in enumerate(lengths))
    ds = TrajectoryDataset(flights, 1.0)
    order = list(ds.ids)
    rnd.shuffle(order)
    a = assemble_snapshots(ds, ds.ids)
    b = assemble_snapshots(ds, order)
    assert a.pair_count == b.pair_count == sum(n - 1 for n in lengths)

    def cols(s):
        return sorted(map(tuple, np.vstack([s.X0, s.X1, s.U0]).T))

    assert cols(a) == cols(b)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.integers(2, 8), min_size=1, max_size=4))
def test_successor_column_is_next_snapshot(lengths):
    gen = np.random.default_rng(sum(lengths))
    flights = tuple(Flight(f"F{k}", np.arange(float(n)), gen.standard_normal((n, 3)),
                           np.zeros((n, 0))) for k, n in enumerate(lengths))
    ds = TrajectoryDataset(flights, 1.0)
    sys_ = assemble_snapshots(ds, spec=FeatureSpec(include_control=False))
    k = 0
    for f in flights:
        for n in range(f.n_snapshots - 1):
            np.testing.assert_array_equal(sys_.X0[:, k], f.states[n])
            np.testing.assert_array_equal(sys_.X1[:, k], f.states[n + 1])
            k += 1
