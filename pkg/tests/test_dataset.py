"""Feature rows, configuration nesting, leakage audit and the feature store."""

import csv
import json
import math
from dataclasses import replace
from datetime import timedelta

import numpy as np
import pytest

from ridecast.athlete import FITNESS_FEATURES, build_state_features
from ridecast.dataset import (
    SCHEMA_VERSION,
    Dataset,
    FeatureConfig,
    assemble,
    feature_names,
    leakage_audit,
    read_store,
    sidecar_path,
    write_store,
)
from ridecast.errors import MissingLoadHistory, MissingProfile, SchemaMismatch
from ridecast.topology import TOPOLOGY_MODEL_FEATURES

TARGET_DERIVED = ("speed", "vam", "power", "moving_time", "elapsed", "duration", "np", "tss")


@pytest.fixture(scope="module")
def assembled(small_corpus):
    c = small_corpus
    return {cfg: assemble(c.activities, c.profiles, c.load_history, cfg) for cfg in FeatureConfig}


class TestSchema:
    @pytest.mark.parametrize("cfg,width", [("topo", 27), ("topo-fit", 31), ("topo-fit-zones", 79)])
    def test_widths(self, cfg, width):
        assert len(feature_names(cfg)) == width

    def test_nested(self):
        a, b, c = (feature_names(cfg) for cfg in FeatureConfig)
        assert b[:len(a)] == a and c[:len(b)] == b

    def test_no_target_derived_columns(self):
        for name in feature_names("topo-fit-zones"):
            assert not any(name == t or name.startswith(t + "_") for t in TARGET_DERIVED), name


class TestAssemble:
    def test_row_widths_and_target(self, assembled, small_corpus):
        ds = assembled[FeatureConfig.TOPO]
        assert ds.X.shape == (30, 27)
        assert ds.y[0] == pytest.approx(small_corpus.activities[0].moving_time / 60)
        assert assembled[FeatureConfig.TOPO_FIT].X.shape == (30, 31)

    def test_nesting_of_rows(self, assembled):
        full = assembled[FeatureConfig.TOPO_FIT_ZONES]
        assert full.restrict("topo").equals(assembled[FeatureConfig.TOPO])
        assert full.restrict("topo-fit").equals(assembled[FeatureConfig.TOPO_FIT])

    def test_restrict_cannot_widen(self, assembled):
        with pytest.raises(SchemaMismatch):
            assembled[FeatureConfig.TOPO].restrict("topo-fit")

    def test_fitness_from_strict_past(self, assembled, small_corpus):
        ds = assembled[FeatureConfig.TOPO_FIT]
        for row in ds.rows[:5]:
            want = build_state_features(small_corpus.load_history, row.date)
            assert [row.features[k] for k in FITNESS_FEATURES] == [want[k] for k in FITNESS_FEATURES]

    def test_same_route_on_two_dates(self, small_corpus):
        c = small_corpus
        a0 = c.activities[0]
        a1 = replace(a0, id="copy", start_time=a0.start_time + timedelta(days=150))
        ds = assemble([a0, a1], {**c.profiles, "copy": c.profiles[a0.id]}, c.load_history, "topo-fit")
        r0, r1 = ds.rows
        assert [r0.features[k] for k in TOPOLOGY_MODEL_FEATURES] == [r1.features[k] for k in TOPOLOGY_MODEL_FEATURES]
        assert r0.features["ctl"] != r1.features["ctl"]

    def test_missing_profile(self, small_corpus):
        with pytest.raises(MissingProfile):
            assemble(small_corpus.activities, {}, small_corpus.load_history, "topo")

    def test_missing_history(self, small_corpus):
        with pytest.raises(MissingLoadHistory):
            assemble(small_corpus.activities, small_corpus.profiles, [], "topo-fit")

    def test_topology_only_needs_no_history(self, small_corpus):
        ds = assemble(small_corpus.activities, small_corpus.profiles, None, "topo")
        assert len(ds) == 30

    def test_deterministic(self, small_corpus, assembled):
        c = small_corpus
        again = assemble(c.activities, c.profiles, c.load_history, "topo-fit-zones")
        assert again.equals(assembled[FeatureConfig.TOPO_FIT_ZONES])


def leaky_state(history, t, zones=None):
    """State features that wrongly include the ride's own day."""
    return build_state_features(history, t + timedelta(days=1), zones)


class TestLeakageAudit:
    def test_clean_dataset(self, assembled, small_corpus):
        report = leakage_audit(assembled[FeatureConfig.TOPO_FIT_ZONES], small_corpus.load_history)
        assert report.ok and report.checked == 30

    def test_inclusive_window_is_flagged(self, small_corpus):
        c = small_corpus
        ds = assemble(c.activities, c.profiles, c.load_history, "topo-fit-zones", state_fn=leaky_state)
        report = leakage_audit(ds, c.load_history, state_fn=leaky_state)
        assert len(report.violations) >= 1
        assert {v[1] for v in report.violations} == {"same-day"}

    def test_empty_dataset(self, small_corpus):
        assert leakage_audit(Dataset([], "topo-fit"), small_corpus.load_history).violations == []


class TestStore:
    def test_round_trip(self, assembled, tmp_path):
        ds = assembled[FeatureConfig.TOPO_FIT_ZONES]
        write_store(ds, tmp_path / "f.csv")
        assert read_store(tmp_path / "f.csv").equals(ds)
        meta = json.loads(sidecar_path(tmp_path / "f.csv").read_text())
        assert meta["schema_version"] == SCHEMA_VERSION and meta["features"] == ds.schema

    def test_missing_mask_survives(self, assembled, tmp_path):
        src = assembled[FeatureConfig.TOPO]
        rows = [replace(r, features=dict(r.features)) for r in src.rows[:4]]
        rows[2].features["gradient_cv"] = math.nan
        ds = Dataset(rows, src.config, list(src.schema))
        write_store(ds, tmp_path / "f.csv")
        back = read_store(tmp_path / "f.csv")
        assert back.mask[2, ds.schema.index("gradient_cv")] and back.mask.sum() == ds.mask.sum() == 1

    def test_unknown_column(self, assembled, tmp_path):
        write_store(assembled[FeatureConfig.TOPO].subset(range(3)), tmp_path / "f.csv")
        with open(tmp_path / "f.csv", newline="") as fh:
            rows = list(csv.reader(fh))
        rows[0].append("avg_speed")
        for r in rows[1:]:
            r.append("25.0")
        with open(tmp_path / "f.csv", "w", newline="") as fh:
            csv.writer(fh).writerows(rows)
        with pytest.raises(SchemaMismatch):
            read_store(tmp_path / "f.csv")

    def test_other_schema_version(self, assembled, tmp_path):
        write_store(assembled[FeatureConfig.TOPO].subset(range(3)), tmp_path / "f.csv")
        side = sidecar_path(tmp_path / "f.csv")
        meta = json.loads(side.read_text())
        meta["schema_version"] = "ridecast-features/0"
        side.write_text(json.dumps(meta))
        with pytest.raises(SchemaMismatch):
            read_store(tmp_path / "f.csv")

    def test_no_temp_files_left(self, assembled, tmp_path):
        write_store(assembled[FeatureConfig.TOPO], tmp_path / "f.csv")
        assert sorted(p.name for p in tmp_path.iterdir()) == ["f.csv", "f.json"]

    def test_rows_must_follow_schema(self, assembled):
        row = assembled[FeatureConfig.TOPO].rows[0]
        with pytest.raises(SchemaMismatch):
            Dataset([row], "topo-fit")

    def test_matrix_matches_rows(self, assembled):
        ds = assembled[FeatureConfig.TOPO_FIT]
        np.testing.assert_array_equal(ds.X[:, ds.schema.index("ctl")], ds.column("ctl"))
