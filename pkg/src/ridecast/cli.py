"""Command-line interface.

Exit codes: 0 success, 2 ingestion failure, 3 training failure,
4 prediction or schema failure. ``RIDECAST_LOG`` sets the log level.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from datetime import date, timedelta
from pathlib import Path

import numpy as np

from . import errors as E
from .athlete import (
    FITNESS_FEATURES,
    ZoneConfig,
    build_state_features,
    cross_check,
    daily_loads_from_activities,
    merge_loads,
    read_load_csv,
    read_zone_seconds_csv,
)
from .checkpoint import (
    DEFAULT_FRACTIONS,
    WHATIF_CAVEAT,
    ctl_sweep,
    progressive_predictions,
    resolve_fitness,
    whatif,
    write_checkpoints_csv,
)
from .dataset import SCHEMA_VERSION, Dataset, FeatureConfig, assemble, feature_names, read_store, write_store
from .explain import global_importance, shap_linear, write_attribution_json, write_importance_csv
from .ingest import (
    ActivityStreams,
    exclusion_reason,
    profile_from_gpx,
    read_activities_csv,
    read_gpx,
    read_streams_csv,
    read_wellness_csv,
    resample_profile,
)
from .regression import TrainedLinearModel
from .synthetic import GeneratorSpec, generate_corpus, write_corpus
from .topology import extract_topology
from .validation import (
    ENET_L1_RATIOS,
    LASSO_ALPHAS,
    RIDGE_ALPHAS,
    ModelSpec,
    default_specs,
    error_breakdown,
    fit_final,
    learning_curve,
    nested_cv,
    run_cv,
    stratified_folds,
    write_rows_csv,
)

log = logging.getLogger("ridecast")

EXIT_OK, EXIT_INGEST, EXIT_TRAIN, EXIT_SCHEMA = 0, 2, 3, 4
INGEST_ERRORS = (E.MalformedFile, E.EmptyTrack, E.InsufficientData, E.ZeroLengthTrack, E.EmptySeries,
                 E.MissingProfile, E.MissingLoadHistory, E.DuplicateDay, E.NonPositiveFTP)
TRAIN_ERRORS = (E.TooFewRows, E.SingularSystem, E.ZeroVariance, E.SizeExceedsData)
SCHEMA_ERRORS = (E.SchemaMismatch, E.InvalidFraction)

DEFAULTS = {
    "seed": 0,
    "fractions": ",".join(str(f) for f in DEFAULT_FRACTIONS),
    "out": ".",
    "jobs": 1,
    "repeats": 3,
    "n": 96,
    "sigma": 5.0,
    "placement": "uniform",
}


class CommandError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


# ---------------------------------------------------------------------------
# helpers


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in str(text).split(",") if x.strip()]
    except ValueError as exc:
        raise CommandError(EXIT_SCHEMA, f"bad number list {text!r}") from exc


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _zone_config(directory: Path) -> ZoneConfig:
    path = directory / "zones.json"
    return ZoneConfig.from_json(path) if path.exists() else ZoneConfig()


def _load_history(directory: Path, records=None, zones: ZoneConfig | None = None):
    """Daily loads from load.csv and zones.csv, else from activity streams."""
    loads = []
    for name, reader in (("load.csv", read_load_csv), ("zones.csv", read_zone_seconds_csv)):
        if (directory / name).exists():
            loads += reader(directory / name)
    if loads:
        return merge_loads(loads)
    if records:
        return daily_loads_from_activities(records, zones or ZoneConfig())
    return []


def _read_model(path) -> TrainedLinearModel:
    if not path:
        raise CommandError(EXIT_SCHEMA, "--model is required")
    if not Path(path).exists():
        raise CommandError(EXIT_SCHEMA, f"model file {path} not found")
    return TrainedLinearModel.load(path)


def _model_config(names) -> str | None:
    for cfg in FeatureConfig:
        if list(names) == feature_names(cfg):
            return cfg.value
    return None


def spec_for_model(model: TrainedLinearModel) -> ModelSpec:
    """Model spec with the default grid for the model's kind and features."""
    kind = model.penalty.kind
    grid = {"ridge": RIDGE_ALPHAS, "lasso": LASSO_ALPHAS, "elasticnet": LASSO_ALPHAS}.get(kind, ())
    l1 = ENET_L1_RATIOS if kind == "elasticnet" else (1.0,)
    return ModelSpec(kind, kind, tuple(model.feature_names), tuple(grid), tuple(l1))


# ---------------------------------------------------------------------------
# commands


def cmd_extract(args) -> int:
    root = Path(args.activities)
    store = Path(args.store)
    config = FeatureConfig(args.config or "topo-fit")
    zones = _zone_config(root)
    csv_path = root / "activities.csv"
    records = read_activities_csv(csv_path) if csv_path.exists() else []
    if not records:
        log.warning("no activities found in %s; writing an empty store", root)

    problems, profiles, kept, excluded = [], {}, [], []
    for r in records:
        gpx = root / "gpx" / f"{r.id}.gpx"
        try:
            points = read_gpx(gpx) if gpx.exists() else None
            spath = root / "streams" / f"{r.id}.csv"
            if spath.exists():
                r.streams = read_streams_csv(spath)
            elif points:
                r.streams = ActivityStreams(
                    lat=np.array([p.lat for p in points]), lon=np.array([p.lon for p in points]),
                    alt=np.array([np.nan if p.ele is None else p.ele for p in points]))
            reason = exclusion_reason(r, zones.ftp)
            if reason is not None:
                excluded.append((r.id, reason))
                continue
            if points is None:
                points = r.streams.track_points() if r.streams is not None else []
            profiles[r.id] = resample_profile(points)
            kept.append(r)
        except (E.RidecastError, OSError) as exc:
            problems.append(f"{r.id}: {type(exc).__name__}: {exc}")
    if problems:
        for p in problems:
            print(f"error: {p}", file=sys.stderr)
        raise CommandError(EXIT_INGEST, f"{len(problems)} activity file(s) failed to ingest")

    history = _load_history(root, records, zones)
    wellness = None
    wpath = Path(args.wellness) if args.wellness else root / "wellness.csv"
    if wpath.exists():
        records_w = read_wellness_csv(wpath)
        for msg in cross_check(history, records_w):
            log.warning("wellness cross-check: %s", msg)
        if args.use_wellness:
            wellness = records_w
    dataset = assemble(kept, profiles, history, config, zones, wellness=wellness) if kept else Dataset([], config)
    write_store(dataset, store)
    log_path = Path(args.log) if args.log else store.with_suffix(".extract.log")
    lines = [f"retained {len(kept)}", f"excluded {len(excluded)}"]
    lines += [f"excluded {aid}: {why}" for aid, why in excluded]
    log_path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"wrote {len(dataset)} rows to {store} ({len(excluded)} excluded, see {log_path})")
    return EXIT_OK


def cmd_train(args) -> int:
    dataset = read_store(args.store)
    if args.config and FeatureConfig(args.config) != dataset.config:
        dataset = dataset.restrict(args.config)
    if len(dataset) < 10:
        raise CommandError(EXIT_TRAIN, f"store has {len(dataset)} rows; training needs at least 10")
    out = _out_dir(args)
    report = run_cv(dataset, default_specs(dataset.config), seed=args.seed, workers=args.jobs)
    (out / "cv_report.json").write_text(report.to_json(), encoding="utf-8")
    table = report.table()
    (out / "comparison.txt").write_text(table, encoding="utf-8")
    print(table, end="")
    best = report.best()
    spec = next(s for s in default_specs(dataset.config) if s.name == best.name)
    model = fit_final(dataset, spec, seed=args.seed)
    model.config = _model_config(model.feature_names)
    model.schema_version = SCHEMA_VERSION
    model_path = Path(args.model) if args.model else out / "model.json"
    model.save(model_path)
    print(f"best: {best.name} (MAE {best.test_mae_mean:.2f} min); model written to {model_path}")
    return EXIT_OK


def _overrides(args) -> dict:
    return {k: v for k, v in (("ctl", args.ctl), ("atl", args.atl), ("tsb", args.tsb), ("ramp_rate", args.ramp))
            if v is not None}


def _state_row(model: TrainedLinearModel, args) -> dict:
    """Non-topology inputs for ``model``: from a load history or from overrides."""
    needs = [n for n in model.feature_names if n in FITNESS_FEATURES or n.startswith("rolling_")]
    if not needs:
        return {}
    if args.history:
        hdir = Path(args.history)
        history = _load_history(hdir)
        if not history:
            raise CommandError(EXIT_SCHEMA, f"no load history found in {hdir}")
        day = date.fromisoformat(args.date) if args.date else history[-1].date + timedelta(days=1)
        return build_state_features(history, day, _zone_config(hdir))
    overrides = _overrides(args)
    if not overrides or any(n.startswith("rolling_") for n in needs):
        raise CommandError(EXIT_SCHEMA, "this model needs fitness inputs: pass --history or --ctl/--atl/--tsb/--ramp")
    return resolve_fitness(model, overrides)


def cmd_predict(args) -> int:
    model = _read_model(args.model)
    profile = profile_from_gpx(args.gpx)
    row = {**extract_topology(profile), **_state_row(model, args)}
    attr = shap_linear(model, row)
    print(f"predicted moving time: {attr.prediction:.1f} min (base {attr.base_value:.1f} min)")
    print(f"{'feature':<32} {'value':>12} {'shap_min':>10}")
    for name, phi in attr.top(args.top):
        print(f"{name:<32} {row[name]:12.4g} {phi:10.2f}")
    if args.json:
        write_attribution_json(attr, args.json, gpx=str(args.gpx), config=model.config,
                               predicted_min=attr.prediction)
    return EXIT_OK


def cmd_checkpoint(args) -> int:
    model = _read_model(args.model)
    profile = profile_from_gpx(args.gpx)
    rows = progressive_predictions(profile, model, _floats(args.fractions))
    out = _out_dir(args) / "checkpoints.csv"
    write_checkpoints_csv(rows, out)
    for r in rows:
        rate = "" if math.isnan(r.change_rate) else f"{r.change_rate:.2f} min/%"
        print(f"{r.fraction:5.0%} {r.dist_km:7.1f} km {r.ascent_m:7.0f} m {r.climbs:3d} climbs "
              f"{r.predicted_min:7.1f} min {rate}")
    return EXIT_OK


def cmd_whatif(args) -> int:
    model = _read_model(args.model)
    profile = profile_from_gpx(args.gpx)
    overrides = _overrides(args)
    out = _out_dir(args) / "whatif.csv"
    columns = ["ctl", "atl", "tsb", "ramp_rate", "predicted_min"]
    rows = []
    if args.ctl_grid:
        whatif(profile, model, overrides)  # schema check
        for ctl, pred in ctl_sweep(profile, model, _floats(args.ctl_grid), overrides.get("tsb"),
                                   overrides.get("ramp_rate")):
            fit = resolve_fitness(model, {"ctl": ctl, "tsb": overrides.get("tsb", 0.0),
                                          "ramp_rate": overrides.get("ramp_rate")})
            rows.append({**fit, "predicted_min": pred})
    else:
        res = whatif(profile, model, overrides)
        rows.append({**res.fitness, "predicted_min": res.predicted_min})
    write_rows_csv(rows, columns, out)
    for r in rows:
        print(f"ctl {r['ctl']:6.1f} atl {r['atl']:6.1f} tsb {r['tsb']:6.1f} -> {r['predicted_min']:.1f} min")
    if len(rows) > 1:
        preds = [r["predicted_min"] for r in rows]
        print(f"range {max(preds) - min(preds):.1f} min over the sweep")
    print(f"note: {WHATIF_CAVEAT}")
    return EXIT_OK


def cmd_report(args) -> int:
    dataset = read_store(args.store)
    model = _read_model(args.model)
    missing = [n for n in model.feature_names if n not in dataset.schema]
    if missing:
        raise E.SchemaMismatch(f"store lacks model features {missing[:4]}")
    out = _out_dir(args)
    spec = spec_for_model(model)
    plan = stratified_folds(dataset, seed=args.seed)
    res = nested_cv(dataset, spec, plan)
    fold_of = np.empty(len(dataset), dtype=int)
    for i, test in enumerate(plan.outer):
        fold_of[test] = i
    pva = [{"activity_id": r.activity_id, "actual_min": r.target, "predicted_min": float(p), "fold": int(f)}
           for r, p, f in zip(dataset.rows, res.oof_pred, fold_of)]
    write_rows_csv(pva, ["activity_id", "actual_min", "predicted_min", "fold"], out / "predicted_vs_actual.csv")
    n = len(dataset)
    sizes = sorted({s for s in (10, 20, 40, 60, 80, n) if 10 <= s <= n})
    curve = learning_curve(dataset, spec, sizes, seed=args.seed, repeats=args.repeats)
    write_rows_csv(curve, ["size", "train_mae", "val_mae", "train_sd", "val_sd"], out / "learning_curve.csv")
    write_rows_csv(error_breakdown(res.oof_pred, dataset), ["dimension", "tier", "n", "mae", "mape"],
                   out / "error_breakdown.csv")
    cols = [dataset.schema.index(f) for f in model.feature_names]
    write_importance_csv(global_importance(model, dataset.X[:, cols]), out / "importance.csv")
    print(f"report written to {out}: out-of-fold MAE {res.test_mae_mean:.2f} min, R2 {res.r2_mean:.3f}")
    return EXIT_OK


def cmd_synth(args) -> int:
    spec = GeneratorSpec(seed=args.seed, n=args.n, sigma=args.sigma, placement=args.placement)
    corpus = generate_corpus(spec)
    root = write_corpus(corpus, args.out)
    print(f"wrote {len(corpus.activities)} synthetic rides to {root}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config-file", help="JSON file of option values; flags override it")
    common.add_argument("--out", help="output directory (default: .)")
    common.add_argument("--seed", type=int, help="random seed (default: 0)")

    fitness = argparse.ArgumentParser(add_help=False)
    fitness.add_argument("--ctl", type=float)
    fitness.add_argument("--atl", type=float)
    fitness.add_argument("--tsb", type=float)
    fitness.add_argument("--ramp", type=float, help="ramp rate override")

    p = argparse.ArgumentParser(prog="ridecast", description="Cycling ride-duration prediction from route topology.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("extract", parents=[common], help="build a feature store from an activities directory")
    s.add_argument("activities", help="directory with activities.csv, gpx/, streams/, load.csv, zones.csv")
    s.add_argument("--store", required=True)
    s.add_argument("--config", choices=[c.value for c in FeatureConfig])
    s.add_argument("--wellness", help="wellness CSV (default: <activities>/wellness.csv)")
    s.add_argument("--use-wellness", action="store_true", help="take CTL/ATL/TSB from the wellness file")
    s.add_argument("--log", help="extraction log path (default: <store>.extract.log)")
    s.set_defaults(func=cmd_extract)

    s = sub.add_parser("train", parents=[common], help="nested CV of all model specs, then fit the best")
    s.add_argument("--store", required=True)
    s.add_argument("--model", help="where to write the selected model (default: <out>/model.json)")
    s.add_argument("--config", choices=[c.value for c in FeatureConfig], help="restrict the store to this config")
    s.add_argument("--jobs", type=int, help="worker processes for CV (default: 1)")
    s.set_defaults(func=cmd_train)

    for name, func, helptext in (("predict", cmd_predict, "predict a GPX route's moving time"),
                                 ("checkpoint", cmd_checkpoint, "predictions from route prefixes"),
                                 ("whatif", cmd_whatif, "prediction under hypothetical fitness")):
        s = sub.add_parser(name, parents=[common, fitness], help=helptext)
        s.add_argument("gpx")
        s.add_argument("--model")
        s.set_defaults(func=func)
        if name == "predict":
            s.add_argument("--history", help="directory with load.csv/zones.csv for state features")
            s.add_argument("--date", help="ride date for state features (default: day after the history)")
            s.add_argument("--json", help="write the attribution as JSON")
            s.add_argument("--top", type=int, default=10)
        if name == "checkpoint":
            s.add_argument("--fractions", help="comma-separated fractions (default: 0.25,0.5,0.75,1.0)")
        if name == "whatif":
            s.add_argument("--ctl-grid", help="comma-separated CTL values to sweep")

    s = sub.add_parser("report", parents=[common], help="plot-ready CSVs for a store and model")
    s.add_argument("--store", required=True)
    s.add_argument("--model")
    s.add_argument("--repeats", type=int, help="learning-curve repeats per size (default: 3)")
    s.set_defaults(func=cmd_report)

    s = sub.add_parser("synth", parents=[common], help="write a synthetic activities directory")
    s.add_argument("--n", type=int)
    s.add_argument("--sigma", type=float)
    s.add_argument("--placement", choices=["uniform", "front", "back"])
    s.set_defaults(func=cmd_synth)
    return p


def _apply_config_file(args) -> None:
    """Fill unset options from --config-file, then from built-in defaults."""
    values = {}
    if getattr(args, "config_file", None):
        with open(args.config_file, encoding="utf-8") as fh:
            values = json.load(fh)
    for key, value in list(values.items()) + list(DEFAULTS.items()):
        key = key.replace("-", "_")
        if hasattr(args, key) and getattr(args, key) is None:
            setattr(args, key, value)


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("RIDECAST_LOG", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        _apply_config_file(args)
        return args.func(args)
    except CommandError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except INGEST_ERRORS as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INGEST
    except TRAIN_ERRORS as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_TRAIN
    except (SCHEMA_ERRORS + (E.RidecastError, KeyError)) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INGEST if args.command == "extract" else EXIT_SCHEMA


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
