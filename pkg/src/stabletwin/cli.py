"""Command line: ``generate``, ``fit``, ``predict``, ``evaluate``.

Exit codes: 0 success, 2 usage, 3 data/parse, 4 fit, 5 stabilization
search, 6 alignment, 7 rollout divergence.
"""

from __future__ import annotations

import argparse
import logging
import platform
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .core import Flight, TrajectoryDataset, assemble_snapshots
from .datagen import (ScenarioConfig, UnstableCaseConfig, generate_scenario,
                      generate_unstable_fit_case)
from .dmdc import SvdTruncation, dmdc_fitter, predict, reduced_fitter
from .errors import DataError, StableTwinError
from .features import FeatureSpec
from .hybrid import DEFAULT_SPEC, HybridTwinModel, check_aligned, compute_residuals, predict_hybrid
from .io import (atomic_write, read_dataset, read_manifest, read_model, write_dataset,
                 write_manifest, write_model)
from .metrics import (bound_table_csv, error_table_csv, flight_summary, gt_ranges,
                      measurement_error_bound, normalized_error, summary_table_csv)
from .regression import RidgeConfig, fit_ridge
from .stabilization import StabilizationConfig, fit_stable

log = logging.getLogger("stabletwin")

DEFAULT_TRAIN = {"scratch": 2, "dmdc": 2, "hybrid": 9}


def _versions() -> dict:
    return {"version.stabletwin": __version__, "version.numpy": np.__version__,
            "version.python": platform.python_version()}


def _ids(text, dataset: TrajectoryDataset, default_count: int):
    if text:
        ids = [s.strip() for s in text.split(",") if s.strip()]
        missing = [i for i in ids if i not in dataset]
        if missing:
            raise DataError(f"unknown flight ids: {missing}")
        return ids
    return dataset.ids[:default_count]


# -- generate --------------------------------------------------------------

def cmd_generate(args) -> int:
    out = Path(args.out_dir)
    cfg = ScenarioConfig(n_flights=args.n_flights, seed=args.seed,
                         horizon=(args.min_steps, args.max_steps), dt=args.dt,
                         cm_degradation=args.cm_degradation,
                         noise_level=args.noise_level,
                         noise_sigma=None if args.noise_sigma is None else (args.noise_sigma,),
                         nonlinearity=not args.linear)
    sc = generate_scenario(cfg)
    write_dataset(sc.gt, out / "gt.csv")
    write_dataset(sc.cm, out / "cm.csv")
    write_dataset(sc.ped, out / "ped.csv")
    manifest = {"command": "generate", **cfg.manifest(),
                "plant.spectral_radius": sc.plant.spectral_radius,
                "noise_sigma": " ".join("%.17g" % s for s in sc.noise_sigma),
                "files": "gt.csv cm.csv ped.csv"}
    if args.unstable:
        case = generate_unstable_fit_case(UnstableCaseConfig(seed=args.seed))
        write_dataset(case.dataset, out / "unstable.csv")
        manifest.update({"unstable.seed": case.seed,
                         "unstable.rho_unregularized": case.rho_unregularized,
                         "files": manifest["files"] + " unstable.csv"})
    write_manifest(out / "manifest.txt", {**manifest, **_versions()})
    print(f"wrote {len(sc.gt)} flights to {out}")
    return 0


# -- fit -------------------------------------------------------------------

def _feature_spec(args) -> FeatureSpec:
    if args.features:
        tokens = args.features
    else:
        tokens = ",".join(DEFAULT_SPEC.to_tokens()) if args.mode == "hybrid" else "z,u"
    standardize = args.standardize
    if standardize is None:
        standardize = args.mode == "hybrid"
    return FeatureSpec.from_tokens(tokens, standardize=standardize)


def _truncation(args) -> SvdTruncation:
    if args.rank is not None:
        return SvdTruncation.rank(args.rank)
    if args.energy is not None:
        return SvdTruncation.energy(args.energy)
    return SvdTruncation()


def cmd_fit(args) -> int:
    data = read_dataset(args.data)
    spec = _feature_spec(args)
    coarse_source = None
    if args.mode == "hybrid":
        if not args.coarse:
            raise DataError("--mode hybrid needs --coarse")
        coarse = read_dataset(args.coarse)
        check_aligned(data, coarse)
        train_data = compute_residuals(data, coarse)
        coarse_source = str(Path(args.coarse).resolve())
    else:
        train_data = data
    ids = _ids(args.train_flights, data, DEFAULT_TRAIN[args.mode])
    sys_ = assemble_snapshots(train_data, ids, spec)
    ridge = RidgeConfig(0.0, penalize_control_block=args.penalize_control)
    if args.mode == "scratch":
        fitter = lambda s, lam: fit_ridge(s, ridge.at(lam))  # noqa: E731
    elif args.reduce is not None:
        fitter = reduced_fitter(_truncation(args), SvdTruncation.rank(args.reduce),
                                args.penalize_control)
    else:
        fitter = dmdc_fitter(_truncation(args), args.penalize_control)
    stab = StabilizationConfig(rho_desired=args.rho_desired, f_tol=args.f_tol,
                               max_iterations=args.max_iterations, method=args.method)
    if args.lam is not None:
        model = fitter(sys_, args.lam)
        if args.lam == 0:
            model = replace(model, fit_report=replace(
                model.fit_report, rho_at_lambda_zero=model.spectral_radius))
    else:
        model = fit_stable(sys_, ridge, stab, fit=fitter)
    out = Path(args.out_dir)
    write_model(model, out / "model.txt", coarse_source)
    rep = model.fit_report
    manifest = {
        "command": "fit", "mode": args.mode, "data": str(Path(args.data).resolve()),
        "coarse": coarse_source or "", "train_flights": ",".join(ids),
        "features": ",".join(spec.to_tokens()), "standardize": int(spec.standardize),
        "lambda": float(model.lam), "rho": float(model.spectral_radius),
        "rho_at_lambda_zero": float(rep.rho_at_lambda_zero),
        "rho_desired": args.rho_desired, "stabilized": int(rep.stabilized),
        "search_iterations": rep.lambda_search_iterations,
        "residual_frobenius": float(rep.residual_frobenius),
        "pair_count": sys_.pair_count, "model": "model.txt", **_versions(),
    }
    write_manifest(out / "fit_manifest.txt", manifest)
    print(f"lambda={model.lam:.6g} rho={model.spectral_radius:.6f} "
          f"rho(lambda=0)={rep.rho_at_lambda_zero:.6f} stabilized={rep.stabilized}")
    return 0


# -- predict ---------------------------------------------------------------

def _resolve_coarse(args, model_path: Path, coarse_source):
    if args.coarse:
        return read_dataset(args.coarse)
    if coarse_source:
        p = Path(coarse_source)
        if not p.is_absolute():
            p = model_path.parent / p
        return read_dataset(p)
    raise DataError("hybrid model needs coarse trajectories (--coarse)")


def cmd_predict(args) -> int:
    model_path = Path(args.model)
    model, coarse_source = read_model(model_path)
    data = read_dataset(args.data)
    coarse = None
    if coarse_source is not None:
        coarse = _resolve_coarse(args, model_path, coarse_source)
        check_aligned(data, coarse)
        ht = HybridTwinModel(model, coarse_source, model.feature_spec)
    ids = [args.flight] if args.flight else data.ids
    if args.flight and args.flight not in data:
        raise DataError(f"unknown flight id {args.flight!r}")

    def one(fid):
        fl = data[fid]
        steps = fl.n_snapshots - 1 if args.steps is None else min(args.steps, fl.n_snapshots - 1)
        if coarse is not None:
            z = predict_hybrid(ht, coarse[fid], fl.states[0], fl.controls, steps)
        else:
            z = predict(model, fl.states[0], fl.controls, steps)
        return Flight(fid, fl.t[:steps + 1], z, fl.controls[:steps + 1])

    with ThreadPoolExecutor(max_workers=max(1, args.workers)) as pool:
        flights = list(pool.map(one, ids))
    pred = TrajectoryDataset(tuple(flights), data.dt)
    out = Path(args.out) if args.out else Path(args.out_dir) / "pred.csv"
    write_dataset(pred, out)
    write_manifest(out.with_name(out.stem + "_manifest.txt"), {
        "command": "predict", "model": str(model_path.resolve()),
        "data": str(Path(args.data).resolve()), "flights": ",".join(ids),
        "hybrid": int(coarse is not None), "output": out.name, **_versions()})
    print(f"predicted {len(flights)} flights -> {out}")
    return 0


# -- evaluate --------------------------------------------------------------

def cmd_evaluate(args) -> int:
    pred = read_dataset(args.pred)
    gt = read_dataset(args.gt)
    ped = read_dataset(args.ped) if args.ped else None
    ids = pred.ids
    if args.exclude:
        drop = {s.strip() for s in args.exclude.split(",")}
        ids = [i for i in ids if i not in drop]
    ranges = gt_ranges(gt)
    report = normalized_error(pred, gt, ranges, ids)
    out = Path(args.out_dir)
    atomic_write(out / "errors.csv", error_table_csv(report))
    bound = measurement_error_bound(ped, gt, ranges, ids) if ped is not None else None
    rows = flight_summary(report, bound)
    atomic_write(out / "summary.csv", summary_table_csv(rows))
    if bound is not None:
        atomic_write(out / "bounds.csv", bound_table_csv(bound, ranges))
    write_manifest(out / "evaluate_manifest.txt", {
        "command": "evaluate", "pred": str(Path(args.pred).resolve()),
        "gt": str(Path(args.gt).resolve()),
        "ped": str(Path(args.ped).resolve()) if args.ped else "",
        "flights": ",".join(ids),
        "ranges": " ".join("%.17g" % r for r in ranges), **_versions()})
    if args.plots:
        _render(out / "figures", pred, gt, report, bound, rows, args.plot_flights)
    mean_abs = np.mean([r["mean_abs_err"] for r in rows])
    print(f"{len(rows)} flights, mean |err| = {mean_abs:.4g}")
    return 0


def _render(fig_dir: Path, pred, gt, report, bound, rows, which):
    from . import plotting

    flights = [r["flight"] for r in rows]
    plotting.plot_flight_summary(
        flights, [r["mean_abs_err"] for r in rows],
        [r["err_max_meas"] for r in rows] if bound is not None else None,
        fig_dir / "flight_summary.png")
    chosen = [s.strip() for s in which.split(",")] if which else flights[:1]
    for fid in chosen:
        if fid not in report.errors:
            continue
        b = bound.signed[fid] if bound is not None else None
        plotting.plot_error_series(report.t[fid], report.errors[fid], b,
                                   fig_dir / f"error_{fid}.png", title=fid)
        plotting.plot_trajectories(gt[fid].t, gt[fid].states, pred[fid].states,
                                   fig_dir / f"trajectory_{fid}.png",
                                   labels=("GT", "prediction"), title=fid)


# -- parser ----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="stabletwin", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value file of option defaults; "
                                         "command-line flags take precedence")

    def add(name, **kw):
        return sub.add_parser(name, parents=[common], **kw)

    g = add("generate", help="write a synthetic GT/CM/PED scenario")
    g.add_argument("--out-dir", required=True)
    g.add_argument("--seed", type=int, default=42)
    g.add_argument("--n-flights", type=int, default=ScenarioConfig.n_flights)
    g.add_argument("--min-steps", type=int, default=ScenarioConfig.horizon[0])
    g.add_argument("--max-steps", type=int, default=ScenarioConfig.horizon[1])
    g.add_argument("--dt", type=float, default=ScenarioConfig.dt)
    g.add_argument("--cm-degradation", type=float, default=ScenarioConfig.cm_degradation)
    g.add_argument("--noise-level", type=float, default=ScenarioConfig.noise_level,
                   help="noise std as a fraction of each variable's range")
    g.add_argument("--noise-sigma", type=float, default=None,
                   help="absolute noise std for every variable (overrides --noise-level)")
    g.add_argument("--linear", action="store_true", help="disable the saturating term")
    g.add_argument("--unstable", action="store_true",
                   help="also write unstable.csv, a case where the plain fit is unstable")
    g.set_defaults(func=cmd_generate)

    f = add("fit", help="fit a (stabilized) linear model")
    f.add_argument("--data", required=True)
    f.add_argument("--mode", choices=("scratch", "dmdc", "hybrid"), default="scratch")
    f.add_argument("--coarse", help="coarse-model trajectories (hybrid mode)")
    f.add_argument("--train-flights", help="comma-separated flight ids")
    f.add_argument("--features", help="subset of z,u,ulag,omega,W")
    f.add_argument("--standardize", dest="standardize", action="store_true", default=None)
    f.add_argument("--no-standardize", dest="standardize", action="store_false")
    f.add_argument("--lambda", dest="lam", type=float, default=None,
                   help="fixed ridge penalty; skips the stability search")
    f.add_argument("--rho-desired", type=float, default=0.999)
    f.add_argument("--f-tol", type=float, default=1e-4)
    f.add_argument("--method", choices=("bisection", "regula_falsi"), default="bisection")
    f.add_argument("--max-iterations", type=int, default=StabilizationConfig.max_iterations)
    f.add_argument("--rank", type=int, default=None, help="fixed input SVD rank (dmdc)")
    f.add_argument("--energy", type=float, default=None, help="input SVD energy fraction (dmdc)")
    f.add_argument("--reduce", type=int, default=None, help="reduced output rank r (dmdc)")
    f.add_argument("--penalize-control", action="store_true")
    f.add_argument("--out-dir", required=True)
    f.add_argument("--seed", type=int, default=None, help="recorded only; fits are deterministic")
    f.set_defaults(func=cmd_fit)

    r = add("predict", help="roll a model out from each flight's first state")
    r.add_argument("--model", required=True)
    r.add_argument("--data", required=True, help="measurements supplying z0 and controls")
    r.add_argument("--coarse", help="coarse trajectories for hybrid models")
    r.add_argument("--flight", help="single flight id (default: all)")
    r.add_argument("--steps", type=int, default=None)
    r.add_argument("--out", help="output CSV path")
    r.add_argument("--out-dir", default=".")
    r.add_argument("--workers", type=int, default=1)
    r.set_defaults(func=cmd_predict)

    e = add("evaluate", help="normalized error tables (and figures)")
    e.add_argument("--pred", required=True)
    e.add_argument("--gt", required=True)
    e.add_argument("--ped", help="noisy measurements for the measurement bound")
    e.add_argument("--exclude", help="comma-separated flight ids to leave out (e.g. training)")
    e.add_argument("--out-dir", required=True)
    e.add_argument("--plots", action="store_true", help="also render PNG figures")
    e.add_argument("--plot-flights", help="flights to draw in detail (default: first)")
    e.set_defaults(func=cmd_evaluate)
    p.commands = {"generate": g, "fit": f, "predict": r, "evaluate": e}
    return p


def _config_defaults(sub: argparse.ArgumentParser, path) -> dict:
    """Option defaults from a ``key = value`` file; keys are option names
    (``rho-desired``) or destinations (``rho_desired``)."""
    try:
        entries = read_manifest(path)
    except OSError as exc:
        raise DataError(f"cannot read config {path}: {exc}") from exc
    by_name = {a.dest: a for a in sub._actions}
    # option names win over destinations (--standardize vs --no-standardize)
    by_name.update({o.lstrip("-").replace("-", "_"): a
                    for a in sub._actions for o in a.option_strings})
    out = {}
    for key, value in entries.items():
        action = by_name.get(key.replace("-", "_"))
        if action is None or action.dest in ("help", "config"):
            raise DataError(f"{path}: unknown option {key!r}")
        if isinstance(action, (argparse._StoreTrueAction, argparse._StoreFalseAction)):
            on = value.lower() in ("1", "true", "yes", "on")
            value = on if isinstance(action, argparse._StoreTrueAction) else not on
        action.required = False
        out[action.dest] = value
    return out


def _parse(parser, argv):
    argv = list(sys.argv[1:] if argv is None else argv)
    command = next((a for a in argv if a in parser.commands), None)
    config = None
    for i, a in enumerate(argv):
        if a == "--config" and i + 1 < len(argv):
            config = argv[i + 1]
        elif a.startswith("--config="):
            config = a.split("=", 1)[1]
    if command and config:
        sub = parser.commands[command]
        sub.set_defaults(**_config_defaults(sub, config))
    return parser.parse_args(argv)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = _parse(parser, argv)
    except StableTwinError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except StableTwinError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
