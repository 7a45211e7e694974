"""Per-activity feature rows, the three feature configurations and the feature store.

The store is a CSV file plus a JSON sidecar with the same stem, e.g.
``features.csv`` + ``features.json``. See ``docs/formats.md``.
"""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, field
from datetime import date, timedelta
from enum import Enum
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .athlete import (
    CHANNELS,
    FITNESS_FEATURES,
    DailyLoad,
    ZoneConfig,
    build_state_features,
    imported_fitness,
    merge_loads,
    zone_feature_names,
)
from .errors import MissingLoadHistory, MissingProfile, SchemaMismatch
from .ingest import ActivityRecord, RouteProfile
from .topology import TOPOLOGY_MODEL_FEATURES, extract_topology

SCHEMA_VERSION = "ridecast-features/1"
STORE_META_COLUMNS = ["activity_id", "date", "race", "target_min"]


class FeatureConfig(str, Enum):
    TOPO = "topo"
    TOPO_FIT = "topo-fit"
    TOPO_FIT_ZONES = "topo-fit-zones"

    @property
    def uses_state(self) -> bool:
        return self is not FeatureConfig.TOPO


def feature_names(config: FeatureConfig | str) -> list[str]:
    """Ordered model inputs for a configuration (27, 31 or 79 names)."""
    config = FeatureConfig(config)
    names = list(TOPOLOGY_MODEL_FEATURES)
    if config is not FeatureConfig.TOPO:
        names += list(FITNESS_FEATURES)
    if config is FeatureConfig.TOPO_FIT_ZONES:
        names += zone_feature_names()
    return names


@dataclass
class FeatureRow:
    activity_id: str
    date: date
    features: dict[str, float]
    target: float  # moving time, minutes
    race: bool = False

    def __post_init__(self):
        if not self.target > 0:
            raise ValueError(f"{self.activity_id}: target must be positive")

    @property
    def missing(self) -> dict[str, bool]:
        return {k: isinstance(v, float) and math.isnan(v) for k, v in self.features.items()}


@dataclass
class Dataset:
    rows: list[FeatureRow]
    config: FeatureConfig
    schema: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.config = FeatureConfig(self.config)
        if not self.schema:
            self.schema = feature_names(self.config)
        for r in self.rows:
            if list(r.features) != self.schema:
                raise SchemaMismatch(f"row {r.activity_id} does not follow the {self.config.value} schema")

    def __len__(self) -> int:
        return len(self.rows)

    @property
    def X(self) -> np.ndarray:
        if not self.rows:
            return np.empty((0, len(self.schema)))
        return np.array([[r.features[k] for k in self.schema] for r in self.rows], dtype=float)

    @property
    def y(self) -> np.ndarray:
        return np.array([r.target for r in self.rows], dtype=float)

    @property
    def mask(self) -> np.ndarray:
        return np.isnan(self.X)

    def column(self, name: str) -> np.ndarray:
        return np.array([r.features[name] for r in self.rows], dtype=float)

    def ids(self) -> list[str]:
        return [r.activity_id for r in self.rows]

    def subset(self, indices) -> "Dataset":
        return Dataset([self.rows[i] for i in indices], self.config, list(self.schema))

    def restrict(self, config: FeatureConfig | str) -> "Dataset":
        """Same rows restricted to a nested (smaller) configuration."""
        names = feature_names(config)
        if any(n not in self.schema for n in names):
            raise SchemaMismatch(f"{self.config.value} rows cannot be restricted to {FeatureConfig(config).value}")
        rows = [FeatureRow(r.activity_id, r.date, {n: r.features[n] for n in names}, r.target, r.race)
                for r in self.rows]
        return Dataset(rows, config, names)

    def equals(self, other: "Dataset") -> bool:
        """Exact equality, treating NaN cells as equal to each other."""
        if self.config != other.config or self.schema != other.schema or len(self) != len(other):
            return False
        for a, b in zip(self.rows, other.rows):
            if (a.activity_id, a.date, a.target, a.race) != (b.activity_id, b.date, b.target, b.race):
                return False
            for k in self.schema:
                x, y = a.features[k], b.features[k]
                if not (x == y or (math.isnan(x) and math.isnan(y))):
                    return False
        return True


def _check_history(history: Sequence[DailyLoad], activities: Sequence[ActivityRecord]) -> None:
    if not history:
        raise MissingLoadHistory("this feature configuration needs a training-load history")
    first, last = history[0].date, history[-1].date
    for a in activities:
        if a.date < first or a.date > last + timedelta(days=1):
            raise MissingLoadHistory(f"load history {first}..{last} does not cover {a.id} on {a.date}")


def assemble(activities: Sequence[ActivityRecord], profiles: Mapping[str, RouteProfile],
             load_history: Sequence[DailyLoad] | None, config: FeatureConfig | str,
             zones: ZoneConfig | None = None, state_fn=build_state_features, wellness=None) -> Dataset:
    """Build one feature row per activity.

    State features for an activity starting on day ``t`` come from
    ``state_fn(history, t, zones)``, which looks only at days before ``t``.
    When ``wellness`` records are given, their CTL/ATL/TSB for day ``t``
    replace the computed fitness values.
    """
    config = FeatureConfig(config)
    names = feature_names(config)
    history = merge_loads(load_history or [])
    if config.uses_state:
        _check_history(history, activities)
    rows = []
    for a in activities:
        if a.id not in profiles:
            raise MissingProfile(f"no route profile for activity {a.id}")
        feats = extract_topology(profiles[a.id])
        if config.uses_state:
            feats.update(state_fn(history, a.date, zones))
            if wellness is not None:
                imported = imported_fitness(wellness, a.date)
                if imported is not None:
                    feats.update(imported)
        rows.append(FeatureRow(a.id, a.date, {n: float(feats[n]) for n in names}, a.moving_time / 60.0, a.race))
    return Dataset(rows, config, names)


# ---------------------------------------------------------------------------
# leakage audit


@dataclass
class AuditReport:
    checked: int = 0
    violations: list[tuple[str, str, str, float, float]] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


def _probe_load(day: date) -> DailyLoad:
    zs = {(ch, z): 3600.0 for ch in CHANNELS for z in range(7 if ch == "power" else 5)}
    return DailyLoad(day, 500.0, zs)


def leakage_audit(dataset: Dataset, load_history: Sequence[DailyLoad], zones: ZoneConfig | None = None,
                  state_fn=build_state_features) -> AuditReport:
    """Recompute state features with extra load injected on and after each ride's day.

    A row violates the audit when a recomputed value differs from the one
    stored in the dataset. Each violation is
    ``(activity_id, probe, feature, stored, recomputed)``.
    """
    report = AuditReport()
    state_names = [n for n in dataset.schema if n not in TOPOLOGY_MODEL_FEATURES]
    if not state_names:
        return report
    history = merge_loads(load_history)
    for row in dataset.rows:
        for probe, day in (("same-day", row.date), ("future", row.date + timedelta(days=3))):
            injected = merge_loads(list(history) + [_probe_load(day)])
            fresh = state_fn(injected, row.date, zones)
            for name in state_names:
                if fresh[name] != row.features[name]:
                    report.violations.append((row.activity_id, probe, name, row.features[name], fresh[name]))
        report.checked += 1
    return report


# ---------------------------------------------------------------------------
# store


def sidecar_path(path: str | os.PathLike) -> Path:
    return Path(path).with_suffix(".json")


def _fmt(v: float) -> str:
    return "" if math.isnan(v) else repr(float(v))


def write_store(dataset: Dataset, path: str | os.PathLike) -> None:
    """Write the CSV and its sidecar, each via a temp file and rename."""
    path = Path(path)
    columns = STORE_META_COLUMNS + list(dataset.schema)
    meta = {
        "schema_version": SCHEMA_VERSION,
        "config": dataset.config.value,
        "features": list(dataset.schema),
        "columns": columns,
        "target": "moving_time_min",
        "n_rows": len(dataset),
    }
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in dataset.rows:
            w.writerow([r.activity_id, r.date.isoformat(), "1" if r.race else "0", repr(float(r.target))]
                       + [_fmt(r.features[k]) for k in dataset.schema])
    side = sidecar_path(path)
    side_tmp = side.with_name(side.name + ".tmp")
    with open(side_tmp, "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2)
        fh.write("\n")
    os.replace(tmp, path)
    os.replace(side_tmp, side)


def read_store(path: str | os.PathLike) -> Dataset:
    """Read a feature store, refusing files written under another schema."""
    path = Path(path)
    with open(sidecar_path(path), encoding="utf-8") as fh:
        meta = json.load(fh)
    if meta.get("schema_version") != SCHEMA_VERSION:
        raise SchemaMismatch(f"store schema {meta.get('schema_version')!r} is not {SCHEMA_VERSION!r}")
    try:
        config = FeatureConfig(meta["config"])
    except (KeyError, ValueError) as exc:
        raise SchemaMismatch(f"unknown feature config {meta.get('config')!r}") from exc
    schema = feature_names(config)
    if meta.get("features") != schema:
        raise SchemaMismatch("sidecar feature order differs from the canonical schema")
    expected = STORE_META_COLUMNS + schema
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != expected:
            extra = sorted(set(header or []) - set(expected))
            raise SchemaMismatch(f"store columns differ from schema (unexpected: {extra})")
        for values in reader:
            aid, day, race, target = values[:4]
            feats = {k: (math.nan if v == "" else float(v)) for k, v in zip(schema, values[4:])}
            rows.append(FeatureRow(aid, date.fromisoformat(day), feats, float(target), race == "1"))
    return Dataset(rows, config, schema)
