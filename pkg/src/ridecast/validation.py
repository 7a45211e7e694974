"""Nested cross-validation stratified by distance quintile.

Outer folds give the reported test metrics; hyperparameters are picked by
3-fold CV inside each outer training set. Every fit, including the
imputer and scaler, sees only its own training rows.
"""

from __future__ import annotations

import csv
import json
import math
import os
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .dataset import Dataset, FeatureConfig, feature_names
from .errors import ConvergenceWarning, RidecastError, SizeExceedsData, TooFewRows
from .regression import (
    Penalty,
    Preprocessor,
    TrainedLinearModel,
    coordinate_descent,
    fit_model,
    mae,
    r2,
    ridge_coefficients,
)

N_STRATA = 5
OUTER_K = 5
INNER_K = 3
LASSO_ALPHAS = tuple(np.logspace(-4, 2, 50))
RIDGE_ALPHAS = tuple(np.logspace(-3, 3, 50))
ENET_L1_RATIOS = (0.1, 0.5, 0.9)
OVERFIT_GAP_MIN = -2.0


@dataclass(frozen=True)
class ModelSpec:
    """A model family, its inputs and its hyperparameter grid.

    ``features`` selects columns of the dataset (all of them when None).
    """

    name: str
    kind: str
    features: tuple[str, ...] | None = None
    alphas: tuple[float, ...] = ()
    l1_ratios: tuple[float, ...] = (1.0,)

    @property
    def tuned(self) -> bool:
        return self.kind in ("ridge", "lasso", "elasticnet")

    def columns(self, dataset: Dataset) -> list[int]:
        if self.features is None:
            return list(range(len(dataset.schema)))
        missing = [f for f in self.features if f not in dataset.schema]
        if missing:
            raise KeyError(f"dataset lacks features {missing}")
        return [dataset.schema.index(f) for f in self.features]


def lasso_spec(name="Lasso", features=None, alphas=LASSO_ALPHAS) -> ModelSpec:
    return ModelSpec(name, "lasso", features, tuple(alphas))


def ridge_spec(name="Ridge", features=None, alphas=RIDGE_ALPHAS) -> ModelSpec:
    return ModelSpec(name, "ridge", features, tuple(alphas))


def enet_spec(name="ElasticNet", features=None, alphas=LASSO_ALPHAS, l1_ratios=ENET_L1_RATIOS) -> ModelSpec:
    return ModelSpec(name, "elasticnet", features, tuple(alphas), tuple(l1_ratios))


def default_specs(config: FeatureConfig | str) -> list[ModelSpec]:
    """Baselines plus Ridge/Lasso/ElasticNet on every configuration nested in ``config``."""
    config = FeatureConfig(config)
    specs = [
        ModelSpec("Baseline (Mean)", "mean"),
        ModelSpec("Baseline (Median)", "median"),
        ModelSpec("Linear (Dist+Elev)", "ols", ("total_distance", "total_ascent")),
    ]
    label = {FeatureConfig.TOPO: "Topo", FeatureConfig.TOPO_FIT: "Topo+Fit", FeatureConfig.TOPO_FIT_ZONES: "Topo+Fit+Zones"}
    order = list(FeatureConfig)
    for cfg in order[: order.index(config) + 1]:
        names = tuple(feature_names(cfg))
        specs += [
            lasso_spec(f"Lasso ({label[cfg]})", names),
            enet_spec(f"ElasticNet ({label[cfg]})", names),
            ridge_spec(f"Ridge ({label[cfg]})", names),
        ]
    return specs


# ---------------------------------------------------------------------------
# folds


@dataclass
class FoldPlan:
    outer: list[np.ndarray]  # test indices per outer fold
    inner: list[list[np.ndarray]]  # per outer fold: validation indices of each inner fold
    strata: np.ndarray
    seed: int

    @property
    def k(self) -> int:
        return len(self.outer)

    def train(self, i: int) -> np.ndarray:
        test = set(self.outer[i].tolist())
        return np.array(sorted(set(range(self.strata.size)) - test), dtype=int)


def distance_strata(distance, n_strata: int = N_STRATA) -> np.ndarray:
    """Quantile label (0 = shortest) of each value, by rank."""
    distance = np.asarray(distance, dtype=float)
    order = np.argsort(distance, kind="stable")
    labels = np.empty(distance.size, dtype=int)
    labels[order] = np.arange(distance.size) * n_strata // max(distance.size, 1)
    return labels


def _assign(indices: np.ndarray, distance: np.ndarray, k: int, rng: np.random.Generator) -> list[np.ndarray]:
    strata = distance_strata(distance[indices])
    sequence = []
    for q in range(N_STRATA):
        members = indices[strata == q]
        sequence.extend(members[rng.permutation(members.size)].tolist())
    folds = [[] for _ in range(k)]
    for pos, idx in enumerate(sequence):
        folds[pos % k].append(idx)
    return [np.array(sorted(f), dtype=int) for f in folds]


def stratified_folds(data: Dataset | Sequence[float], k: int = OUTER_K, seed: int = 0,
                     inner_k: int = INNER_K) -> FoldPlan:
    """Outer and inner fold plans balanced over distance quintiles.

    Rows are ranked by distance and cut into quintiles; each quintile is
    shuffled with the seeded generator, the quintiles are laid end to end and
    dealt round-robin into ``k`` folds. Inner folds are dealt the same way
    from each outer training set.
    """
    distance = data.column("total_distance") if isinstance(data, Dataset) else np.asarray(data, dtype=float)
    n = distance.size
    if n < 2 * k:
        raise TooFewRows(f"{n} rows cannot fill {k} folds (need {2 * k})")
    rng = np.random.default_rng(seed)
    all_idx = np.arange(n)
    outer = _assign(all_idx, distance, k, rng)
    inner = []
    for test in outer:
        train = np.setdiff1d(all_idx, test)
        if train.size < 2 * inner_k:
            raise TooFewRows(f"outer training set of {train.size} rows is too small for {inner_k} inner folds")
        inner.append(_assign(train, distance, inner_k, rng))
    return FoldPlan(outer, inner, distance_strata(distance), seed)


# ---------------------------------------------------------------------------
# nested CV

FitHook = Callable[[np.ndarray, TrainedLinearModel], None]


@dataclass
class FoldResult:
    fold: int
    test_mae: float
    test_r2: float
    train_mae: float
    alpha: float | None = None
    l1_ratio: float | None = None
    error: str | None = None
    unconverged: int = 0  # grid fits that hit the sweep limit

    @property
    def gap(self) -> float:
        return self.train_mae - self.test_mae


@dataclass
class ModelResult:
    name: str
    kind: str
    n_features: int
    folds: list[FoldResult]
    oof_pred: np.ndarray
    fold_models: list[TrainedLinearModel | None] = field(default_factory=list, repr=False)

    def _vals(self, attr: str) -> np.ndarray:
        return np.array([getattr(f, attr) for f in self.folds if f.error is None], dtype=float)

    @property
    def test_mae_mean(self) -> float:
        return float(np.mean(self._vals("test_mae")))

    @property
    def test_mae_sd(self) -> float:
        return float(np.std(self._vals("test_mae")))

    @property
    def r2_mean(self) -> float:
        return float(np.nanmean(self._vals("test_r2")))

    @property
    def r2_sd(self) -> float:
        return float(np.nanstd(self._vals("test_r2")))

    @property
    def train_mae_mean(self) -> float:
        return float(np.mean(self._vals("train_mae")))

    @property
    def gap_mean(self) -> float:
        return float(np.mean(self._vals("gap")))

    @property
    def stability(self) -> float:
        """Coefficient of variation of the fold test MAE."""
        m = self.test_mae_mean
        return self.test_mae_sd / m if m > 0 else math.nan

    @property
    def overfit(self) -> bool:
        return self.gap_mean < OVERFIT_GAP_MIN

    def summary(self) -> dict:
        return {
            "name": self.name,
            "kind": self.kind,
            "n_features": self.n_features,
            "test_mae_mean": self.test_mae_mean,
            "test_mae_sd": self.test_mae_sd,
            "r2_mean": self.r2_mean,
            "r2_sd": self.r2_sd,
            "train_mae_mean": self.train_mae_mean,
            "gap_mean": self.gap_mean,
            "cv_stability": self.stability,
            "overfit": self.overfit,
            "folds": [
                {"fold": f.fold, "test_mae": f.test_mae, "test_r2": f.test_r2, "train_mae": f.train_mae,
                 "gap": f.gap, "alpha": f.alpha, "l1_ratio": f.l1_ratio, "error": f.error,
                 "unconverged": f.unconverged}
                for f in self.folds
            ],
        }


def _fit_grid(X_tr, y_tr, X_va, spec: ModelSpec, names, hook: FitHook | None, train_idx) -> dict:
    """Validation predictions for every (l1_ratio, alpha) of the grid.

    Lasso and elastic-net paths run from the largest alpha down with warm
    starts; ridge uses its closed form per alpha.
    """
    pre = Preprocessor.fit(X_tr)
    Xs_tr, Xs_va = pre.transform(X_tr), pre.transform(X_va)
    out = {}
    alphas = sorted(spec.alphas, reverse=True)
    for l1r in (spec.l1_ratios if spec.kind == "elasticnet" else (1.0 if spec.kind == "lasso" else 0.0,)):
        coef = None
        for a in alphas:
            if spec.kind == "ridge":
                coef, b0 = ridge_coefficients(Xs_tr, y_tr, a)
            else:
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore", ConvergenceWarning)
                    res = coordinate_descent(Xs_tr, y_tr, a, l1r, coef_init=coef)
                coef, b0 = res.coef, res.intercept
                if not res.converged:
                    out["unconverged"] = out.get("unconverged", 0) + 1
            if hook is not None:
                hook(train_idx, TrainedLinearModel(list(names), coef.copy(), b0, pre, Penalty(spec.kind, a, l1r)))
            out[(l1r, a)] = Xs_va @ coef + b0
    return out


def select_hyperparameters(X, y, spec: ModelSpec, inner_folds: Sequence[np.ndarray], index_map=None,
                           names=None, hook: FitHook | None = None) -> tuple[float, float, dict]:
    """Pick (alpha, l1_ratio) with the lowest mean inner-fold MAE.

    ``inner_folds`` hold positions into ``X``. Ties go to the larger alpha.
    Returns ``(alpha, l1_ratio, scores)``; ``scores["unconverged"]`` counts
    grid fits that hit the sweep limit.
    """
    n = X.shape[0]
    scores: dict[tuple[float, float], list[float]] = {}
    unconverged = 0
    for val in inner_folds:
        tr = np.setdiff1d(np.arange(n), val)
        tr_global = tr if index_map is None else index_map[tr]
        preds = _fit_grid(X[tr], y[tr], X[val], spec, names or [], hook, tr_global)
        unconverged += preds.pop("unconverged", 0)
        for key, p in preds.items():
            scores.setdefault(key, []).append(mae(p, y[val]))
    mean_scores: dict = {key: float(np.mean(v)) for key, v in scores.items()}
    best_key, best = None, math.inf
    for key in sorted(scores, key=lambda k: (-k[1], k[0])):  # larger alpha first
        if mean_scores[key] < best - 1e-12:
            best_key, best = key, mean_scores[key]
    l1r, alpha = best_key
    mean_scores["unconverged"] = unconverged
    return alpha, l1r, mean_scores


def nested_cv(dataset: Dataset, spec: ModelSpec, plan: FoldPlan, hook: FitHook | None = None) -> ModelResult:
    """Evaluate ``spec`` on every outer fold of ``plan``.

    Args:
        hook: called as ``hook(train_indices, model)`` after every fit,
            inner and outer, with indices into ``dataset``.
    """
    cols = spec.columns(dataset)
    names = [dataset.schema[c] for c in cols]
    X = dataset.X[:, cols]
    y = dataset.y
    oof = np.full(y.size, np.nan)
    folds, models = [], []
    for i, test in enumerate(plan.outer):
        train = plan.train(i)
        try:
            alpha = l1r = None
            unconverged = 0
            penalty = Penalty(spec.kind)
            if spec.tuned:
                pos = {g: p for p, g in enumerate(train.tolist())}
                inner = [np.array([pos[g] for g in fold], dtype=int) for fold in plan.inner[i]]
                alpha, l1r, scores = select_hyperparameters(X[train], y[train], spec, inner, index_map=train,
                                                            names=names, hook=hook)
                unconverged = scores["unconverged"]
                penalty = Penalty(spec.kind, alpha, l1r)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", ConvergenceWarning)  # recorded on the fold instead
                model = fit_model(X[train], y[train], penalty, names)
            if hook is not None:
                hook(train, model)
            pred_test = model.predict(X[test])
            oof[test] = pred_test
            try:
                r2_test = r2(pred_test, y[test])
            except RidecastError:
                r2_test = math.nan
            folds.append(FoldResult(i, mae(pred_test, y[test]), r2_test, mae(model.predict(X[train]), y[train]),
                                    alpha, l1r, unconverged=unconverged + (not model.converged)))
            models.append(model)
        except RidecastError as exc:
            folds.append(FoldResult(i, math.nan, math.nan, math.nan, error=f"{type(exc).__name__}: {exc}"))
            models.append(None)
    return ModelResult(spec.name, spec.kind, len(cols), folds, oof, models)


def fit_final(dataset: Dataset, spec: ModelSpec, k: int = OUTER_K, seed: int = 0) -> TrainedLinearModel:
    """Tune on all rows with ``k``-fold CV, then refit on all rows."""
    cols = spec.columns(dataset)
    names = [dataset.schema[c] for c in cols]
    X, y = dataset.X[:, cols], dataset.y
    penalty = Penalty(spec.kind)
    if spec.tuned:
        plan = stratified_folds(dataset, k=k, seed=seed)
        alpha, l1r, _ = select_hyperparameters(X, y, spec, plan.outer, names=names)
        penalty = Penalty(spec.kind, alpha, l1r)
    model = fit_model(X, y, penalty, names)
    model.config = dataset.config.value
    return model


@dataclass
class CVReport:
    seed: int
    n_rows: int
    config: str
    results: list[ModelResult]

    def best(self, tuned_only: bool = True) -> ModelResult:
        pool = [r for r in self.results if (r.kind in ("ridge", "lasso", "elasticnet") or not tuned_only)]
        return min(pool, key=lambda r: (r.test_mae_mean, r.name))

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "n_rows": self.n_rows,
            "config": self.config,
            "models": [r.summary() for r in self.results],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, allow_nan=True) + "\n"

    def table(self) -> str:
        lines = [f"{'Model':<28} {'MAE (min)':>16} {'R2':>16} {'Gap':>7} {'CV':>6}  Status"]
        best = self.best().name if any(r.kind in ("ridge", "lasso", "elasticnet") for r in self.results) else None
        for r in sorted(self.results, key=lambda r: r.test_mae_mean):
            status = "Best" if r.name == best else ("Overfit" if r.overfit else "")
            lines.append(
                f"{r.name:<28} {r.test_mae_mean:7.2f} +/- {r.test_mae_sd:5.2f} "
                f"{r.r2_mean:7.3f} +/- {r.r2_sd:5.3f} {r.gap_mean:7.2f} {r.stability:6.3f}  {status}"
            )
        return "\n".join(lines) + "\n"


def run_cv(dataset: Dataset, specs: Sequence[ModelSpec], seed: int = 0, k: int = OUTER_K,
           workers: int = 1) -> CVReport:
    """Nested CV of every spec on one shared fold plan.

    ``workers > 1`` evaluates specs in separate processes; results do not
    depend on the worker count.
    """
    plan = stratified_folds(dataset, k=k, seed=seed)
    if workers > 1 and len(specs) > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(nested_cv, [dataset] * len(specs), specs, [plan] * len(specs)))
    else:
        results = [nested_cv(dataset, s, plan) for s in specs]
    return CVReport(seed, len(dataset), dataset.config.value, results)


# ---------------------------------------------------------------------------
# learning curve and error breakdown


@dataclass
class CurvePoint:
    size: int
    train_mae: float
    val_mae: float
    train_sd: float
    val_sd: float


def learning_curve(dataset: Dataset, spec: ModelSpec, sizes: Sequence[int], seed: int = 0,
                   repeats: int = 3, k: int = OUTER_K) -> list[CurvePoint]:
    """Mean train and validation MAE of nested CV on seeded subsamples of each size."""
    sizes = list(sizes)
    if any(s < 10 for s in sizes) or any(b <= a for a, b in zip(sizes, sizes[1:])):
        raise ValueError("sizes must be increasing and at least 10")
    if sizes and sizes[-1] > len(dataset):
        raise SizeExceedsData(f"size {sizes[-1]} exceeds the {len(dataset)} available rows")
    rng = np.random.default_rng(seed)
    points = []
    for size in sizes:
        train_m, val_m = [], []
        for _ in range(repeats):
            idx = np.sort(rng.choice(len(dataset), size=size, replace=False))
            sub = dataset.subset(idx)
            plan = stratified_folds(sub, k=min(k, size // 2), seed=int(rng.integers(2**31)))
            res = nested_cv(sub, spec, plan)
            train_m += [f.train_mae for f in res.folds if f.error is None]
            val_m += [f.test_mae for f in res.folds if f.error is None]
        points.append(CurvePoint(size, float(np.mean(train_m)), float(np.mean(val_m)),
                                 float(np.std(train_m)), float(np.std(val_m))))
    return points


@dataclass
class BreakdownRow:
    dimension: str
    tier: str
    n: int
    mae: float
    mape: float


def _terciles(x: np.ndarray) -> np.ndarray:
    edges = np.quantile(x, [1 / 3, 2 / 3])
    return np.searchsorted(edges, x, side="left")


def error_breakdown(pred, dataset: Dataset) -> list[BreakdownRow]:
    """MAE and MAPE per distance tercile, per elevation-per-km tercile and per combined cell."""
    pred = np.asarray(pred, dtype=float)
    actual = dataset.y
    err = np.abs(pred - actual)
    dist_t = _terciles(dataset.column("total_distance"))
    elev_t = _terciles(dataset.column("elevation_gain_per_km"))
    dist_names = ("short", "medium", "long")
    elev_names = ("flat", "rolling", "hilly")

    def row(dim, tier, m):
        return BreakdownRow(dim, tier, int(m.sum()), float(err[m].mean()), float(np.mean(err[m] / actual[m]) * 100))

    out = [row("all", "all", np.ones(err.size, dtype=bool))] if err.size else []
    for t in range(3):
        if np.any(dist_t == t):
            out.append(row("distance", dist_names[t], dist_t == t))
    for t in range(3):
        if np.any(elev_t == t):
            out.append(row("elevation", elev_names[t], elev_t == t))
    for a in range(3):
        for b in range(3):
            m = (dist_t == a) & (elev_t == b)
            if np.any(m):
                out.append(row("difficulty", f"{dist_names[a]}/{elev_names[b]}", m))
    return out


def write_rows_csv(rows: Sequence, columns: Sequence[str], path: str | os.PathLike) -> None:
    """Write dataclass-like rows to CSV (temp file, then rename)."""
    tmp = f"{path}.tmp"
    with open(tmp, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            vals = [getattr(r, c) if not isinstance(r, dict) else r[c] for c in columns]
            w.writerow([repr(v) if isinstance(v, float) else v for v in vals])
    os.replace(tmp, path)
