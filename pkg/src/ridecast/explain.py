"""Exact SHAP attributions for linear models.

For a linear model on standardized inputs, feature ``i`` contributes
``coef_i * (z_i - zbar_i)`` minutes, where ``zbar`` is the background
point in standardized space. The default background is the training
mean after imputation, which standardizes to zero, so the base value is
the model intercept.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import SchemaMismatch
from .regression import TrainedLinearModel


@dataclass
class Attribution:
    feature_names: list[str]
    phi: np.ndarray  # minutes, one per feature
    base_value: float
    prediction: float

    @property
    def residual(self) -> float:
        return float(self.base_value + self.phi.sum() - self.prediction)

    def as_dict(self) -> dict:
        return {
            "base_value": self.base_value,
            "prediction": self.prediction,
            "shap": {n: float(v) for n, v in zip(self.feature_names, self.phi)},
        }

    def top(self, k: int = 10) -> list[tuple[str, float]]:
        order = np.argsort(-np.abs(self.phi), kind="stable")[:k]
        return [(self.feature_names[i], float(self.phi[i])) for i in order]


def _as_vector(model: TrainedLinearModel, row) -> np.ndarray:
    if isinstance(row, Mapping):
        return model.vector(row)
    x = np.asarray(row, dtype=float).ravel()
    if x.size != len(model.feature_names):
        raise SchemaMismatch(f"model expects {len(model.feature_names)} features, got {x.size}")
    return x


def background_mean(model: TrainedLinearModel) -> np.ndarray:
    """Training mean after imputation, in raw feature units."""
    return model.preprocessor.mean.copy()


def shap_linear(model: TrainedLinearModel, row, background=None) -> Attribution:
    """Attribute one prediction to the model features.

    Args:
        row: raw feature values, as an array in schema order or a mapping.
        background: raw background point; defaults to :func:`background_mean`.
    """
    x = _as_vector(model, row)
    z = model.preprocessor.transform(x[None, :])[0]
    if background is None:
        zbar = np.zeros_like(z)
    else:
        zbar = model.preprocessor.transform(_as_vector(model, background)[None, :])[0]
    phi = model.coef * (z - zbar)
    base = float(zbar @ model.coef + model.intercept)
    pred = float(z @ model.coef + model.intercept)
    return Attribution(list(model.feature_names), phi, base, pred)


def shap_matrix(model: TrainedLinearModel, X) -> np.ndarray:
    """Attributions for every row of ``X`` against the default background, shape (n, p)."""
    Z = model.preprocessor.transform(np.asarray(X, dtype=float))
    return Z * model.coef


def global_importance(model: TrainedLinearModel, X) -> list[tuple[str, float]]:
    """Features ranked by mean absolute attribution (minutes), largest first.

    ``X`` is a 2-D array in schema order or a dataset with a matching
    schema. Ties keep schema order.
    """
    if hasattr(X, "schema"):
        cols = [X.schema.index(n) for n in model.feature_names if n in X.schema]
        if len(cols) != len(model.feature_names):
            raise SchemaMismatch("dataset lacks some model features")
        X = X.X[:, cols]
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError("importance needs at least one row")
    imp = np.abs(shap_matrix(model, X)).mean(axis=0)
    order = np.argsort(-imp, kind="stable")
    return [(model.feature_names[i], float(imp[i])) for i in order]


def write_importance_csv(ranking: Sequence[tuple[str, float]], path: str | os.PathLike) -> None:
    tmp = f"{path}.tmp"
    with open(tmp, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["feature", "mean_abs_shap", "rank"])
        for rank, (name, value) in enumerate(ranking, start=1):
            w.writerow([name, repr(value), rank])
    os.replace(tmp, path)


def write_attribution_json(attr: Attribution, path: str | os.PathLike, **extra) -> None:
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump({**extra, **attr.as_dict()}, fh, indent=2)
        fh.write("\n")
    os.replace(tmp, path)
