"""Fold plans, nested cross-validation, learning curves and error breakdowns."""

import numpy as np
import pytest

from ridecast.dataset import Dataset, FeatureRow
from ridecast.errors import SizeExceedsData, TooFewRows
from ridecast.regression import Preprocessor
from ridecast.validation import (
    CVReport,
    ModelSpec,
    distance_strata,
    error_breakdown,
    fit_final,
    lasso_spec,
    learning_curve,
    nested_cv,
    ridge_spec,
    run_cv,
    select_hyperparameters,
    stratified_folds,
)

SHORT_GRID = tuple(np.logspace(-3, 1, 12))


@pytest.fixture(scope="module")
def plan(corpus_dataset):
    return stratified_folds(corpus_dataset, k=5, seed=0)


class TestFolds:
    def test_sizes_for_96_rows(self, plan):
        assert sorted(len(f) for f in plan.outer) == [19, 19, 19, 19, 20]

    def test_partition(self, plan):
        joined = np.concatenate(plan.outer)
        assert sorted(joined.tolist()) == list(range(96))

    def test_quintile_balance(self, plan):
        n_q = np.bincount(plan.strata)
        for fold in plan.outer:
            counts = np.bincount(plan.strata[fold], minlength=5)
            assert np.all(counts >= 3)
            assert np.all(np.abs(counts - n_q * len(fold) / 96) <= 1)

    def test_inner_folds_partition_outer_train(self, plan):
        for i in range(plan.k):
            train = plan.train(i)
            inner = np.concatenate(plan.inner[i])
            assert sorted(inner.tolist()) == train.tolist()
            assert not set(train.tolist()) & set(plan.outer[i].tolist())
            assert len(plan.inner[i]) == 3

    def test_deterministic(self, corpus_dataset, plan):
        again = stratified_folds(corpus_dataset, k=5, seed=0)
        assert all(np.array_equal(a, b) for a, b in zip(plan.outer, again.outer))
        other = stratified_folds(corpus_dataset, k=5, seed=1)
        assert not all(np.array_equal(a, b) for a, b in zip(plan.outer, other.outer))

    def test_strata_by_rank(self):
        assert distance_strata([5.0, 1.0, 4.0, 2.0, 3.0]).tolist() == [4, 0, 3, 1, 2]

    def test_too_few_rows(self):
        with pytest.raises(TooFewRows):
            stratified_folds(list(range(9)), k=5)


class TestNestedCv:
    def test_preprocessor_sees_only_training_rows(self, corpus_dataset, plan):
        X = corpus_dataset.X
        calls = []

        def hook(train_idx, model):
            calls.append(train_idx)
            ref = Preprocessor.fit(X[np.sort(train_idx)])
            for attr in ("median", "mean", "scale"):
                np.testing.assert_array_equal(getattr(model.preprocessor, attr), getattr(ref, attr))

        nested_cv(corpus_dataset, lasso_spec(alphas=SHORT_GRID[:3]), plan, hook=hook)
        # 5 outer folds x (3 inner folds x 3 alphas + 1 refit), fold by fold
        assert len(calls) == 5 * (3 * 3 + 1)
        for i in range(5):
            for tr in calls[10 * i:10 * i + 10]:
                assert not np.isin(tr, plan.outer[i]).any()
        outer_fits = calls[9::10]
        for i, tr in enumerate(outer_fits):
            assert np.array_equal(np.sort(tr), plan.train(i))

    def test_test_rows_do_not_reach_their_fold(self, corpus_dataset, plan):
        spec = lasso_spec(alphas=SHORT_GRID)
        base = nested_cv(corpus_dataset, spec, plan)
        rows = list(corpus_dataset.rows)
        for j in plan.outer[0]:
            r = rows[j]
            rows[j] = FeatureRow(r.activity_id, r.date, {k: v * 7 + 3 for k, v in r.features.items()}, r.target * 5)
        moved = nested_cv(Dataset(rows, corpus_dataset.config, corpus_dataset.schema), spec, plan)
        a, b = base.fold_models[0], moved.fold_models[0]
        np.testing.assert_array_equal(a.coef, b.coef)
        assert a.intercept == b.intercept and base.folds[0].alpha == moved.folds[0].alpha
        assert not np.array_equal(base.fold_models[1].coef, moved.fold_models[1].coef)

    def test_noiseless_recovery(self, noiseless_dataset):
        res = nested_cv(noiseless_dataset, lasso_spec(alphas=(1e-4, 1e-3)), stratified_folds(noiseless_dataset))
        assert res.r2_mean > 0.999

    def test_mean_baseline(self, corpus_dataset, plan):
        res = nested_cv(corpus_dataset, ModelSpec("mean", "mean"), plan)
        assert res.r2_mean <= 0.0 and res.r2_mean > -0.2

    def test_gap_is_averaged_per_fold(self, corpus_dataset, plan):
        res = nested_cv(corpus_dataset, ridge_spec(alphas=SHORT_GRID), plan)
        assert res.gap_mean == pytest.approx(np.mean([f.train_mae - f.test_mae for f in res.folds]))
        assert res.stability == pytest.approx(res.test_mae_sd / res.test_mae_mean)
        assert res.overfit == (res.gap_mean < -2.0)

    def test_report_is_reproducible(self, corpus_dataset):
        specs = [ModelSpec("mean", "mean"), lasso_spec(alphas=SHORT_GRID)]
        a = run_cv(corpus_dataset, specs, seed=3).to_json()
        b = run_cv(corpus_dataset, specs, seed=3).to_json()
        assert a == b
        assert "Lasso" in CVReport(3, 96, "topo-fit", run_cv(corpus_dataset, specs, seed=3).results).table()

    def test_fold_errors_are_recorded(self, corpus_dataset, plan, monkeypatch):
        import ridecast.validation as v
        from ridecast.errors import SingularSystem

        real = v.fit_model
        calls = []

        def flaky(*a, **kw):
            calls.append(1)
            if len(calls) == 2:
                raise SingularSystem("injected")
            return real(*a, **kw)

        monkeypatch.setattr(v, "fit_model", flaky)
        res = nested_cv(corpus_dataset, ModelSpec("ols", "ols", ("total_distance",)), plan)
        assert [f.error is None for f in res.folds] == [True, False, True, True, True]
        assert "SingularSystem" in res.folds[1].error and res.fold_models[1] is None
        assert np.isfinite(res.test_mae_mean)


class TestSelection:
    def test_ties_go_to_larger_alpha(self, rng):
        # a constant target gives every alpha the same inner MAE
        X = rng.normal(size=(30, 3))
        y = np.full(30, 5.0)
        folds = [np.arange(i, 30, 3) for i in range(3)]
        alpha, _, _ = select_hyperparameters(X, y, lasso_spec(alphas=(0.01, 0.1, 1.0)), folds)
        assert alpha == 1.0

    def test_picks_lowest_mean_mae(self, corpus_dataset):
        X, y = corpus_dataset.X, corpus_dataset.y
        folds = [np.arange(i, 96, 3) for i in range(3)]
        alpha, _, scores = select_hyperparameters(X, y, lasso_spec(alphas=SHORT_GRID), folds)
        grid = {k: v for k, v in scores.items() if k != "unconverged"}
        assert grid[(1.0, alpha)] == min(grid.values())

    def test_fit_final_uses_all_rows(self, corpus_dataset):
        m = fit_final(corpus_dataset, lasso_spec(alphas=SHORT_GRID))
        np.testing.assert_allclose(m.preprocessor.mean, Preprocessor.fit(corpus_dataset.X).mean, rtol=1e-12)
        assert m.config == "topo-fit"


class TestLearningCurve:
    def test_noiseless_train_error_is_small(self, noiseless_dataset):
        pts = learning_curve(noiseless_dataset, lasso_spec(alphas=(1e-4,)), [30, 60], repeats=1)
        assert all(p.train_mae < 0.5 for p in pts)

    def test_full_size_matches_cv(self, corpus_dataset):
        spec = lasso_spec(alphas=SHORT_GRID)
        (pt,) = learning_curve(corpus_dataset, spec, [96], repeats=2, seed=5)
        cv = nested_cv(corpus_dataset, spec, stratified_folds(corpus_dataset, seed=9)).test_mae_mean
        assert pt.val_mae == pytest.approx(cv, rel=0.2)

    def test_size_checks(self, corpus_dataset):
        with pytest.raises(SizeExceedsData):
            learning_curve(corpus_dataset, lasso_spec(), [50, 200])
        with pytest.raises(ValueError):
            learning_curve(corpus_dataset, lasso_spec(), [60, 40])
        with pytest.raises(ValueError):
            learning_curve(corpus_dataset, lasso_spec(), [5])


def tier_dataset(distances, ascents_per_km, targets):
    rows = []
    from ridecast.dataset import feature_names

    for i, (d, e, t) in enumerate(zip(distances, ascents_per_km, targets)):
        f = dict.fromkeys(feature_names("topo"), 0.0)
        f["total_distance"], f["elevation_gain_per_km"] = d, e
        rows.append(FeatureRow(f"r{i}", None, f, t))
    return Dataset(rows, "topo")


class TestBreakdown:
    def test_zero_errors(self, corpus_dataset):
        rows = error_breakdown(corpus_dataset.y, corpus_dataset)
        assert all(r.mae == 0 and r.mape == 0 for r in rows)
        assert {r.dimension for r in rows} == {"all", "distance", "elevation", "difficulty"}

    def test_single_tier(self):
        ds = tier_dataset([20.0] * 6, [10.0] * 6, [60.0] * 6)
        pred = ds.y + [1, -2, 3, -4, 5, -6]
        rows = error_breakdown(pred, ds)
        tiers = [r for r in rows if r.dimension == "distance"]
        assert len(tiers) == 1 and tiers[0].mae == rows[0].mae == 3.5

    def test_two_tiers_with_known_errors(self):
        ds = tier_dataset([10, 11, 30, 31, 50, 51], [5.0] * 6, [40.0] * 2 + [100.0] * 2 + [160.0] * 2)
        pred = ds.y + [2, -2, 5, -5, 8, -8]
        by = {(r.dimension, r.tier): r for r in error_breakdown(pred, ds)}
        assert [by[("distance", t)].mae for t in ("short", "medium", "long")] == [2.0, 5.0, 8.0]
        assert by[("distance", "short")].mape == pytest.approx(5.0)
        assert by[("all", "all")].mae == 5.0
