"""Full-route duration predictions from route prefixes, and fitness what-ifs."""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .athlete import FITNESS_FEATURES
from .errors import InvalidFraction, SchemaMismatch
from .ingest import RouteProfile
from .regression import TrainedLinearModel, predict
from .topology import TOPOLOGY_FIELDS, extract_topology

DEFAULT_FRACTIONS = (0.25, 0.5, 0.75, 1.0)
CHECKPOINT_COLUMNS = ["fraction", "dist_km", "ascent_m", "climbs", "predicted_min", "change_rate"]
WHATIF_CAVEAT = (
    "Fitness effects are associations learned from past rides of one athlete. "
    "They describe how duration varied with fitness in that history and are not "
    "a causal estimate of what training to a target fitness would change."
)


def truncate_route(profile: RouteProfile, fraction: float) -> RouteProfile:
    """Prefix of the grid up to ``fraction`` of the total distance.

    Grid points at or before ``fraction * total_distance`` are kept, so the
    prefix length is within one grid step of the target.
    """
    if not (isinstance(fraction, (int, float)) and 0 < fraction <= 1) or math.isnan(fraction):
        raise InvalidFraction(f"fraction must lie in (0, 1], got {fraction!r}")
    if fraction == 1:
        return profile.prefix(len(profile))
    n = int(math.floor(fraction * profile.total_distance / profile.step + 1e-9)) + 1
    return profile.prefix(max(2, min(n, len(profile))))


@dataclass
class CheckpointPrediction:
    fraction: float
    dist_km: float
    ascent_m: float
    climbs: int
    predicted_min: float
    change_rate: float  # min per % distance since the previous checkpoint; NaN for the first

    def as_row(self) -> list:
        return [self.fraction, self.dist_km, self.ascent_m, self.climbs, self.predicted_min, self.change_rate]


def _require_topology_model(model: TrainedLinearModel) -> None:
    extra = [f for f in model.feature_names if f not in TOPOLOGY_FIELDS]
    if extra:
        raise SchemaMismatch(f"checkpoint predictions need a topology-only model; it also uses {extra[:4]}")


def progressive_predictions(profile: RouteProfile, model: TrainedLinearModel,
                            fractions: Sequence[float] = DEFAULT_FRACTIONS) -> list[CheckpointPrediction]:
    """Predict the full-route duration from each prefix of the route."""
    _require_topology_model(model)
    fractions = [float(f) for f in fractions]
    if any(b <= a for a, b in zip(fractions, fractions[1:])):
        raise InvalidFraction("fractions must be strictly increasing")
    out: list[CheckpointPrediction] = []
    for f in fractions:
        prefix = truncate_route(profile, f)
        feats = extract_topology(prefix)
        pred = predict(model, feats)
        rate = math.nan
        if out:
            prev = out[-1]
            rate = (pred - prev.predicted_min) / ((f - prev.fraction) * 100.0)
        out.append(CheckpointPrediction(f, prefix.total_distance / 1000.0, feats["total_ascent"],
                                        int(feats["num_climbs"]), pred, rate))
    return out


def write_checkpoints_csv(rows: Sequence[CheckpointPrediction], path: str | os.PathLike) -> None:
    tmp = f"{path}.tmp"
    with open(tmp, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CHECKPOINT_COLUMNS)
        for r in rows:
            w.writerow(["" if isinstance(v, float) and math.isnan(v) else repr(v) if isinstance(v, float) else v
                        for v in r.as_row()])
    os.replace(tmp, path)


# ---------------------------------------------------------------------------
# what-if


@dataclass
class WhatIfResult:
    predicted_min: float
    fitness: dict[str, float]
    caveat: str = WHATIF_CAVEAT


def resolve_fitness(model: TrainedLinearModel, overrides: Mapping[str, float]) -> dict[str, float]:
    """Complete a partial ctl/atl/tsb/ramp_rate override set.

    Given two of ctl, atl and tsb the third follows from ``tsb = ctl - atl``.
    Anything still unset takes the model's training mean, so it contributes
    nothing beyond the base value.
    """
    unknown = set(overrides) - set(FITNESS_FEATURES)
    if unknown:
        raise KeyError(f"unknown fitness overrides {sorted(unknown)}")
    v = {k: float(x) for k, x in overrides.items() if x is not None}
    if "atl" not in v and {"ctl", "tsb"} <= v.keys():
        v["atl"] = v["ctl"] - v["tsb"]
    elif "tsb" not in v and {"ctl", "atl"} <= v.keys():
        v["tsb"] = v["ctl"] - v["atl"]
    elif "ctl" not in v and {"atl", "tsb"} <= v.keys():
        v["ctl"] = v["atl"] + v["tsb"]
    means = dict(zip(model.feature_names, model.preprocessor.mean))
    for k in FITNESS_FEATURES:
        v.setdefault(k, float(means[k]))
    return {k: v[k] for k in FITNESS_FEATURES}


def whatif(profile: RouteProfile, model: TrainedLinearModel, overrides: Mapping[str, float]) -> WhatIfResult:
    """Predict the route's duration under hypothetical fitness values.

    Raises:
        SchemaMismatch: the model is not a topology plus fitness model.
    """
    names = set(model.feature_names)
    if not set(FITNESS_FEATURES) <= names or any(n not in TOPOLOGY_FIELDS and n not in FITNESS_FEATURES for n in names):
        raise SchemaMismatch("what-if needs a model trained on topology plus fitness features only")
    fitness = resolve_fitness(model, overrides)
    row = {**extract_topology(profile), **fitness}
    return WhatIfResult(predict(model, row), fitness)


def ctl_sweep(profile: RouteProfile, model: TrainedLinearModel, ctl_values: Sequence[float],
              tsb: float | None = None, ramp_rate: float | None = None) -> list[tuple[float, float]]:
    """``(ctl, predicted_min)`` over a CTL grid with TSB (and so ATL) held fixed."""
    topo = extract_topology(profile)
    out = []
    for c in ctl_values:
        fitness = resolve_fitness(model, {"ctl": c, "tsb": tsb if tsb is not None else 0.0, "ramp_rate": ramp_rate})
        out.append((float(c), predict(model, {**topo, **fitness})))
    return out


def sweep_range(sweep: Sequence[tuple[float, float]]) -> float:
    preds = np.array([p for _, p in sweep])
    return float(preds.max() - preds.min()) if preds.size else 0.0
