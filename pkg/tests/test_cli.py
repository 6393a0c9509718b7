import time

import numpy as np
import pytest

from stabletwin.cli import main
from stabletwin.core import ControlledLinearModel, Flight, TrajectoryDataset
from stabletwin.features import FeatureSpec
from stabletwin.io import read_dataset, read_manifest, read_model, write_dataset, write_model


@pytest.fixture(scope="module")
def data_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("data")
    assert main(["generate", "--out-dir", str(out), "--n-flights", "12",
                 "--min-steps", "80", "--max-steps", "120", "--unstable"]) == 0
    return out


def _run(*args):
    return main([str(a) for a in args])


def test_generate_is_deterministic(tmp_path):
    for name in ("a", "b"):
        assert _run("generate", "--out-dir", tmp_path / name, "--n-flights", "5",
                    "--seed", "42") == 0
    for f in ("gt.csv", "cm.csv", "ped.csv", "manifest.txt"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_zero_noise_ped_equals_gt(tmp_path):
    assert _run("generate", "--out-dir", tmp_path, "--n-flights", "3",
                "--noise-sigma", "0") == 0
    assert (tmp_path / "ped.csv").read_bytes() == (tmp_path / "gt.csv").read_bytes()


def test_default_generate_is_fast(tmp_path):
    start = time.perf_counter()
    assert _run("generate", "--out-dir", tmp_path) == 0
    assert time.perf_counter() - start < 10
    man = read_manifest(tmp_path / "manifest.txt")
    assert man["scenario.seed"] == "42" and man["scenario.n_flights"] == "40"


def test_scratch_fit_predict_evaluate(data_dir, tmp_path):
    assert _run("fit", "--data", data_dir / "gt.csv", "--mode", "scratch",
                "--out-dir", tmp_path) == 0
    man = read_manifest(tmp_path / "fit_manifest.txt")
    assert man["train_flights"] == "F01,F02"
    assert _run("predict", "--model", tmp_path / "model.txt", "--data", data_dir / "gt.csv",
                "--out-dir", tmp_path, "--workers", "3") == 0
    assert _run("evaluate", "--pred", tmp_path / "pred.csv", "--gt", data_dir / "gt.csv",
                "--ped", data_dir / "ped.csv", "--exclude", "F01,F02",
                "--out-dir", tmp_path / "ev") == 0
    rows = (tmp_path / "ev" / "summary.csv").read_text().splitlines()
    assert len(rows) == 1 + 10
    assert (tmp_path / "ev" / "bounds.csv").exists()


def test_hybrid_fit_uses_nine_flights(data_dir, tmp_path):
    assert _run("fit", "--data", data_dir / "ped.csv", "--coarse", data_dir / "cm.csv",
                "--mode", "hybrid", "--out-dir", tmp_path) == 0
    man = read_manifest(tmp_path / "fit_manifest.txt")
    assert len(man["train_flights"].split(",")) == 9
    assert man["features"] == "z,u,ulag,omega,W" and man["standardize"] == "1"
    _, coarse = read_model(tmp_path / "model.txt")
    assert coarse.endswith("cm.csv")


def test_unstable_case_reports_stabilized(data_dir, tmp_path, capsys):
    assert _run("fit", "--data", data_dir / "unstable.csv", "--mode", "dmdc",
                "--out-dir", tmp_path) == 0
    man = read_manifest(tmp_path / "fit_manifest.txt")
    assert man["stabilized"] == "1"
    assert float(man["rho"]) <= 0.999 < float(man["rho_at_lambda_zero"])
    assert "stabilized=True" in capsys.readouterr().out
    assert _run("predict", "--model", tmp_path / "model.txt", "--data",
                data_dir / "unstable.csv", "--out", tmp_path / "p.csv") == 0
    pred = read_dataset(tmp_path / "p.csv")
    assert all(np.all(np.isfinite(f.states)) for f in pred.flights)


def test_fixed_lambda_records_unregularized_radius(data_dir, tmp_path):
    assert _run("fit", "--data", data_dir / "unstable.csv", "--mode", "dmdc",
                "--lambda", "0", "--out-dir", tmp_path) == 0
    man = read_manifest(tmp_path / "fit_manifest.txt")
    assert man["stabilized"] == "0" and man["rho"] == man["rho_at_lambda_zero"]
    assert float(man["rho"]) > 1


def test_identity_dynamics_constant_output(tmp_path):
    n = 15
    z = np.tile([1.0, 2.0, 3.0], (n, 1))
    u = np.random.default_rng(0).standard_normal((n, 2))
    write_dataset(TrajectoryDataset((Flight("A", np.arange(float(n)), z, u),), 1.0),
                  tmp_path / "d.csv")
    model = ControlledLinearModel(M=np.eye(3), N=np.zeros((3, 2)), control_dim=2)
    write_model(model, tmp_path / "m.txt")
    assert _run("predict", "--model", tmp_path / "m.txt", "--data", tmp_path / "d.csv",
                "--out", tmp_path / "p.csv") == 0
    pred = read_dataset(tmp_path / "p.csv")
    np.testing.assert_array_equal(pred["A"].states, z)


def test_hybrid_with_perfect_coarse_returns_coarse(data_dir, tmp_path):
    assert _run("fit", "--data", data_dir / "gt.csv", "--coarse", data_dir / "gt.csv",
                "--mode", "hybrid", "--out-dir", tmp_path) == 0
    assert _run("predict", "--model", tmp_path / "model.txt", "--data", data_dir / "gt.csv",
                "--out", tmp_path / "p.csv") == 0
    pred, gt = read_dataset(tmp_path / "p.csv"), read_dataset(data_dir / "gt.csv")
    for f in gt.ids:
        np.testing.assert_allclose(pred[f].states, gt[f].states, atol=1e-10)


def test_prediction_ignores_later_measurements(data_dir, tmp_path):
    assert _run("fit", "--data", data_dir / "ped.csv", "--coarse", data_dir / "cm.csv",
                "--mode", "hybrid", "--out-dir", tmp_path) == 0
    ped = read_dataset(data_dir / "ped.csv")
    changed = TrajectoryDataset(tuple(
        f.replace(states=np.vstack([f.states[:1], f.states[1:] + 50.0])) for f in ped.flights),
        ped.dt)
    write_dataset(changed, tmp_path / "ped2.csv")
    for src, out in ((data_dir / "ped.csv", "a.csv"), (tmp_path / "ped2.csv", "b.csv")):
        assert _run("predict", "--model", tmp_path / "model.txt", "--data", src,
                    "--out", tmp_path / out) == 0
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_evaluate_gt_gives_zero_table(data_dir, tmp_path):
    assert _run("evaluate", "--pred", data_dir / "gt.csv", "--gt", data_dir / "gt.csv",
                "--out-dir", tmp_path) == 0
    errs = np.loadtxt(tmp_path / "errors.csv", delimiter=",", skiprows=1, usecols=3)
    assert not errs.any()


def test_evaluate_ped_within_bound(data_dir, tmp_path):
    assert _run("evaluate", "--pred", data_dir / "ped.csv", "--gt", data_dir / "gt.csv",
                "--ped", data_dir / "ped.csv", "--out-dir", tmp_path) == 0
    errs = np.genfromtxt(tmp_path / "errors.csv", delimiter=",", names=True, dtype=None,
                         encoding="utf-8")
    bounds = np.genfromtxt(tmp_path / "bounds.csv", delimiter=",", names=True, dtype=None,
                           encoding="utf-8")
    limit = {(b["flight"], b["variable"]): b["err_max_meas"] for b in bounds}
    assert all(e["err"] <= limit[(e["flight"], e["variable"])] for e in errs)


def test_evaluate_plots(data_dir, tmp_path):
    assert _run("evaluate", "--pred", data_dir / "cm.csv", "--gt", data_dir / "gt.csv",
                "--ped", data_dir / "ped.csv", "--out-dir", tmp_path, "--plots",
                "--plot-flights", "F03") == 0
    figs = sorted(p.name for p in (tmp_path / "figures").iterdir())
    assert figs == ["error_F03.png", "flight_summary.png", "trajectory_F03.png"]


def test_reduced_fit(data_dir, tmp_path):
    assert _run("fit", "--data", data_dir / "gt.csv", "--mode", "dmdc", "--reduce", "6",
                "--features", "z,u,omega", "--out-dir", tmp_path) == 0
    model, _ = read_model(tmp_path / "model.txt")
    assert model.r == 6 and model.feature_spec == FeatureSpec(True, False, True, False)


@pytest.mark.parametrize("args, code", [
    (["fit", "--data", "{d}/missing.csv", "--out-dir", "{t}"], 3),
    (["fit", "--data", "{d}/gt.csv", "--train-flights", "F99", "--out-dir", "{t}"], 3),
    (["fit", "--data", "{d}/gt.csv", "--mode", "dmdc", "--reduce", "9",
      "--out-dir", "{t}"], 4),
    (["evaluate", "--pred", "{d}/unstable.csv", "--gt", "{d}/gt.csv", "--out-dir", "{t}"], 6),
])
def test_exit_codes(data_dir, tmp_path, args, code, capsys):
    argv = [a.format(d=data_dir, t=tmp_path) for a in args]
    assert main(argv) == code
    assert "error:" in capsys.readouterr().err


def test_search_failure_exit_code(data_dir, tmp_path):
    assert _run("fit", "--data", data_dir / "unstable.csv", "--mode", "dmdc",
                "--f-tol", "1e-300", "--max-iterations", "3", "--out-dir", tmp_path) == 5


def test_divergence_exit_code(tmp_path):
    n = 2000
    z = np.ones((n, 1))
    write_dataset(TrajectoryDataset((Flight("A", np.arange(float(n)), z, np.zeros((n, 0))),),
                                    1.0), tmp_path / "d.csv")
    write_model(ControlledLinearModel(M=2 * np.eye(1), N=np.zeros((1, 0)),
                                      feature_spec=FeatureSpec(include_control=False)),
                tmp_path / "m.txt")
    assert _run("predict", "--model", tmp_path / "m.txt", "--data", tmp_path / "d.csv",
                "--out", tmp_path / "p.csv") == 7


def test_usage_error():
    with pytest.raises(SystemExit) as info:
        main(["fit"])
    assert info.value.code == 2


def test_config_file_defaults_and_override(data_dir, tmp_path):
    cfg = tmp_path / "fit.cfg"
    cfg.write_text(f"data = {data_dir / 'gt.csv'}\nmode = dmdc\nrho-desired = 0.95\n"
                   f"out_dir = {tmp_path / 'a'}\nstandardize = true\n")
    assert _run("fit", "--config", cfg) == 0
    man = read_manifest(tmp_path / "a" / "fit_manifest.txt")
    assert man["mode"] == "dmdc" and man["standardize"] == "1"
    assert float(man["rho_desired"]) == 0.95
    assert _run("fit", "--config", cfg, "--rho-desired", "0.9", "--out-dir", tmp_path / "b") == 0
    assert float(read_manifest(tmp_path / "b" / "fit_manifest.txt")["rho_desired"]) == 0.9


def test_config_unknown_key(tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("bogus = 1\n")
    assert _run("generate", "--config", cfg, "--out-dir", tmp_path) == 3
