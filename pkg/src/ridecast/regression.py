"""Median imputation, standardization and linear models.

Models are fit in standardized feature space with an unpenalized intercept.
All penalized objectives use the 1/(2n) scaling so a given ``alpha`` means
the same thing whatever the training-set size:

    (1/2n) ||y - X b - b0||^2 + alpha * (l1_ratio ||b||_1 + (1 - l1_ratio)/2 ||b||^2)
"""

from __future__ import annotations

import json
import os
import warnings
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import ConvergenceWarning, SchemaMismatch, SingularSystem, TooFewRows, ZeroVariance

MODEL_FORMAT_VERSION = 1
CD_TOL = 1e-6
CD_MAX_ITER = 10_000
OLS_JITTER = 1e-10
_COND_LIMIT = 1e8
_COND_FAIL = 1e12


@dataclass
class Preprocessor:
    """Per-feature median (for imputation), mean and standard deviation.

    Statistics come from the training rows only. A feature with zero spread
    maps to 0 whatever its value.
    """

    median: np.ndarray
    mean: np.ndarray
    scale: np.ndarray

    @classmethod
    def fit(cls, X) -> "Preprocessor":
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[0] < 2:
            raise TooFewRows("the preprocessor needs at least 2 rows")
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)  # all-NaN columns
            med = np.nanmedian(X, axis=0)
        med = np.where(np.isnan(med), 0.0, med)
        filled = np.where(np.isnan(X), med, X)
        return cls(med, filled.mean(axis=0), filled.std(axis=0))

    def impute(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        return np.where(np.isnan(X), self.median, X)

    def transform(self, X) -> np.ndarray:
        filled = self.impute(X)
        safe = np.where(self.scale > 0, self.scale, 1.0)
        return np.where(self.scale > 0, (filled - self.mean) / safe, 0.0)


def fit_preprocessor(rows) -> Preprocessor:
    return Preprocessor.fit(rows)


def apply(pre: Preprocessor, row) -> np.ndarray:
    return pre.transform(np.atleast_2d(row))[0] if np.ndim(row) == 1 else pre.transform(row)


# ---------------------------------------------------------------------------
# solvers on standardized arrays


def _center(Xs: np.ndarray, y: np.ndarray):
    x_mean = Xs.mean(axis=0)
    y_mean = float(y.mean())
    return Xs - x_mean, y - y_mean, x_mean, y_mean


def _solve_spd(A: np.ndarray, b: np.ndarray) -> np.ndarray:
    if A.shape[0] == 0:
        return np.zeros(0)
    if np.linalg.cond(A) > _COND_LIMIT:
        A = A + OLS_JITTER * np.eye(A.shape[0])
        if np.linalg.cond(A) > _COND_FAIL:
            raise SingularSystem("normal equations stay ill-conditioned after ridge jitter")
    return np.linalg.solve(A, b)


def ols_coefficients(Xs, y) -> tuple[np.ndarray, float]:
    """Least squares via the normal equations on centered data."""
    Xs, y = np.asarray(Xs, dtype=float), np.asarray(y, dtype=float)
    Xc, yc, x_mean, y_mean = _center(Xs, y)
    n = Xs.shape[0]
    beta = _solve_spd(Xc.T @ Xc / n, Xc.T @ yc / n)
    return beta, y_mean - float(x_mean @ beta)


def ridge_coefficients(Xs, y, alpha: float) -> tuple[np.ndarray, float]:
    """Closed-form ridge on centered data (alpha = 0 falls back to OLS)."""
    if alpha < 0:
        raise ValueError("alpha must be non-negative")
    Xs, y = np.asarray(Xs, dtype=float), np.asarray(y, dtype=float)
    Xc, yc, x_mean, y_mean = _center(Xs, y)
    n, p = Xs.shape
    A = Xc.T @ Xc / n + alpha * np.eye(p)
    beta = _solve_spd(A, Xc.T @ yc / n) if alpha == 0 else np.linalg.solve(A, Xc.T @ yc / n)
    return beta, y_mean - float(x_mean @ beta)


def soft_threshold(x, t):
    return np.sign(x) * np.maximum(np.abs(x) - t, 0.0)


def _cd_sweeps_py(G, c, yy, beta, Gb, diag, denom, l1, l2, tol, max_iter, track, hist):
    p = beta.size

    def objective():
        return (0.5 * yy - np.dot(c, beta) + 0.5 * np.dot(beta, Gb)
                + l1 * np.sum(np.abs(beta)) + 0.5 * l2 * np.dot(beta, beta))

    if track:
        hist[0] = objective()
    it = 0
    while it < max_iter:
        it += 1
        max_delta = 0.0
        for j in range(p):
            if denom[j] <= 0.0:
                continue
            old = beta[j]
            rho = c[j] - Gb[j] + diag[j] * old
            mag = abs(rho) - l1
            new = 0.0
            if mag > 0.0:
                new = (mag if rho > 0.0 else -mag) / denom[j]
            if new != old:
                delta = new - old
                beta[j] = new
                for k in range(p):
                    Gb[k] += delta * G[k, j]
                if abs(delta) > max_delta:
                    max_delta = abs(delta)
        if track:
            hist[it] = objective()
        if max_delta < tol:
            return it, True
    return it, False


try:
    from numba import njit

    _cd_sweeps = njit(cache=True)(_cd_sweeps_py)
except ImportError:  # pragma: no cover
    _cd_sweeps = _cd_sweeps_py


@dataclass
class CDResult:
    coef: np.ndarray
    intercept: float
    n_iter: int
    converged: bool
    objective: list[float] = field(default_factory=list)


def enet_objective(Xs, y, coef, intercept, alpha, l1_ratio) -> float:
    r = np.asarray(y) - np.asarray(Xs) @ coef - intercept
    n = r.size
    return float(r @ r / (2 * n) + alpha * (l1_ratio * np.abs(coef).sum() + 0.5 * (1 - l1_ratio) * coef @ coef))


def coordinate_descent(Xs, y, alpha: float, l1_ratio: float = 1.0, tol: float = CD_TOL,
                       max_iter: int = CD_MAX_ITER, coef_init=None, track_objective: bool = False) -> CDResult:
    """Cyclic coordinate descent for the elastic-net objective.

    Works on the Gram matrix of the centered design, so one sweep costs
    O(p^2). Stops when the largest coefficient change in a sweep drops under
    ``tol``; after ``max_iter`` sweeps it warns and returns the last iterate.

    Args:
        Xs: standardized design, shape (n, p).
        y: target, shape (n,).
        alpha: overall penalty strength (>= 0).
        l1_ratio: share of the L1 term in [0, 1]; 1 is the Lasso.
        coef_init: warm start.
        track_objective: record the objective after every sweep.
    """
    if alpha < 0 or not 0.0 <= l1_ratio <= 1.0:
        raise ValueError("need alpha >= 0 and 0 <= l1_ratio <= 1")
    Xs, y = np.asarray(Xs, dtype=float), np.asarray(y, dtype=float)
    Xc, yc, x_mean, y_mean = _center(Xs, y)
    n, p = Xc.shape
    G = Xc.T @ Xc / n
    c = Xc.T @ yc / n
    yy = float(yc @ yc) / n
    diag = np.diag(G).copy()
    l1 = alpha * l1_ratio
    denom = diag + alpha * (1.0 - l1_ratio)
    beta = np.zeros(p) if coef_init is None else np.array(coef_init, dtype=float)
    Gb = G @ beta
    G = np.ascontiguousarray(G)

    hist = np.empty(max_iter + 1 if track_objective else 1)
    it, converged = _cd_sweeps(G, c, yy, beta, Gb, diag, denom, l1, alpha * (1.0 - l1_ratio),
                               tol, max_iter, track_objective, hist)
    history = hist[: it + 1].tolist() if track_objective else []
    if not converged:
        warnings.warn(f"coordinate descent did not converge in {max_iter} sweeps", ConvergenceWarning)
    return CDResult(beta, y_mean - float(x_mean @ beta), it, converged, history)


# ---------------------------------------------------------------------------
# fitted models


@dataclass
class Penalty:
    kind: str  # mean | median | ols | ridge | lasso | elasticnet
    alpha: float = 0.0
    l1_ratio: float = 1.0


@dataclass
class TrainedLinearModel:
    """Affine model in standardized space plus the preprocessing that feeds it."""

    feature_names: list[str]
    coef: np.ndarray
    intercept: float
    preprocessor: Preprocessor
    penalty: Penalty
    config: str | None = None
    schema_version: str | None = None
    converged: bool = True

    def predict(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[1] != len(self.feature_names):
            raise SchemaMismatch(f"model expects {len(self.feature_names)} features, got {X.shape[1]}")
        return self.preprocessor.transform(X) @ self.coef + self.intercept

    def vector(self, row: Mapping[str, float]) -> np.ndarray:
        """Order a name->value mapping by the model schema."""
        missing = [f for f in self.feature_names if f not in row]
        if missing:
            raise SchemaMismatch(f"row lacks model features: {missing[:5]}{'...' if len(missing) > 5 else ''}")
        return np.array([row[f] for f in self.feature_names], dtype=float)

    # serialization ---------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "format_version": MODEL_FORMAT_VERSION,
            "schema_version": self.schema_version,
            "config": self.config,
            "feature_names": list(self.feature_names),
            "preprocessor": {
                "median": self.preprocessor.median.tolist(),
                "mean": self.preprocessor.mean.tolist(),
                "scale": self.preprocessor.scale.tolist(),
            },
            "penalty": {"kind": self.penalty.kind, "alpha": self.penalty.alpha, "l1_ratio": self.penalty.l1_ratio},
            "coef": self.coef.tolist(),
            "intercept": self.intercept,
            "converged": self.converged,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrainedLinearModel":
        if d.get("format_version") != MODEL_FORMAT_VERSION:
            raise SchemaMismatch(f"unsupported model format {d.get('format_version')!r}")
        pre = d["preprocessor"]
        names = list(d["feature_names"])
        coef = np.array(d["coef"], dtype=float)
        if coef.size != len(names):
            raise SchemaMismatch("coefficient count does not match feature names")
        return cls(
            feature_names=names,
            coef=coef,
            intercept=float(d["intercept"]),
            preprocessor=Preprocessor(np.array(pre["median"], dtype=float), np.array(pre["mean"], dtype=float),
                                      np.array(pre["scale"], dtype=float)),
            penalty=Penalty(**d["penalty"]),
            config=d.get("config"),
            schema_version=d.get("schema_version"),
            converged=bool(d.get("converged", True)),
        )

    def save(self, path: str | os.PathLike) -> None:
        tmp = f"{path}.tmp"
        with open(tmp, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2)
            fh.write("\n")
        os.replace(tmp, path)

    @classmethod
    def load(cls, path: str | os.PathLike) -> "TrainedLinearModel":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def _names(feature_names, p):
    return list(feature_names) if feature_names is not None else [f"x{i}" for i in range(p)]


def fit_model(X, y, penalty: Penalty, feature_names: Sequence[str] | None = None, coef_init=None,
              tol: float = CD_TOL, max_iter: int = CD_MAX_ITER) -> TrainedLinearModel:
    """Fit preprocessing and a model of kind ``penalty.kind`` on raw rows."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or X.shape[0] != y.size:
        raise ValueError("X must be (n, p) with one target per row")
    pre = Preprocessor.fit(X)
    Xs = pre.transform(X)
    p = X.shape[1]
    converged = True
    kind = penalty.kind
    if kind == "mean":
        coef, b0 = np.zeros(p), float(y.mean())
    elif kind == "median":
        coef, b0 = np.zeros(p), float(np.median(y))
    elif kind == "ols":
        coef, b0 = ols_coefficients(Xs, y)
    elif kind == "ridge":
        coef, b0 = ridge_coefficients(Xs, y, penalty.alpha)
    elif kind in ("lasso", "elasticnet"):
        l1r = 1.0 if kind == "lasso" else penalty.l1_ratio
        res = coordinate_descent(Xs, y, penalty.alpha, l1r, tol=tol, max_iter=max_iter, coef_init=coef_init)
        coef, b0, converged = res.coef, res.intercept, res.converged
    else:
        raise ValueError(f"unknown model kind {kind!r}")
    return TrainedLinearModel(_names(feature_names, p), coef, b0, pre, penalty, converged=converged)


def fit_ols(X, y, feature_names=None) -> TrainedLinearModel:
    return fit_model(X, y, Penalty("ols"), feature_names)


def fit_ridge(X, y, alpha: float, feature_names=None) -> TrainedLinearModel:
    return fit_model(X, y, Penalty("ridge", alpha, 0.0), feature_names)


def fit_lasso(X, y, alpha: float, feature_names=None, **kw) -> TrainedLinearModel:
    return fit_model(X, y, Penalty("lasso", alpha, 1.0), feature_names, **kw)


def fit_elasticnet(X, y, alpha: float, l1_ratio: float, feature_names=None, **kw) -> TrainedLinearModel:
    return fit_model(X, y, Penalty("elasticnet", alpha, l1_ratio), feature_names, **kw)


def baselines(y_train) -> dict[str, float]:
    """Constant predictors: training mean and median."""
    y = np.asarray(y_train, dtype=float)
    if y.size == 0:
        raise ValueError("baselines need at least one target")
    return {"mean": float(y.mean()), "median": float(np.median(y))}


def predict(model: TrainedLinearModel, row) -> float | np.ndarray:
    """Predict from a name->value mapping (returns a float) or an array of rows."""
    if isinstance(row, Mapping):
        return float(model.predict(model.vector(row))[0])
    return model.predict(row)


def mae(pred, actual) -> float:
    pred, actual = np.asarray(pred, dtype=float), np.asarray(actual, dtype=float)
    return float(np.mean(np.abs(pred - actual)))


def r2(pred, actual) -> float:
    pred, actual = np.asarray(pred, dtype=float), np.asarray(actual, dtype=float)
    if actual.size < 2:
        raise ValueError("r2 needs at least 2 observations")
    ss_tot = float(np.sum((actual - actual.mean()) ** 2))
    if ss_tot == 0.0:
        raise ZeroVariance("r2 is undefined for constant actuals")
    return 1.0 - float(np.sum((actual - pred) ** 2)) / ss_tot
