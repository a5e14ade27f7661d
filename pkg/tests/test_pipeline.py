import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from published_scores import PUBLISHED_BEST, PUBLISHED_WINS
from tabshift import ctgan
from tabshift.boosting import GbdtParams
from tabshift.data import ColumnKind, ColumnSpec, Dataset, LabelLeakError, Role, SchemaError, TableSchema
from tabshift.pipeline import (
    FINAL_SCORER,
    FilterConfig,
    PipelineConfig,
    StrategyResult,
    adversarial_filter,
    adversarial_scores,
    aggregate,
    aggregate_cells,
    filter_pool,
    run_strategy,
    substream,
)
from tabshift.synthetic import shift_dataset

FAST = FilterConfig(gbdt=GbdtParams(trees=30, depth=2))
FAST_PIPE = PipelineConfig(
    gan=ctgan.CtganConfig(epochs=2, batch_size=32, generator_dims=(16,), critic_dims=(16,), noise_dim=8),
    gbdt=GbdtParams(trees=30, depth=2),
    filter=FAST,
)

ONE_COL = TableSchema(
    (ColumnSpec("x", ColumnKind.CONTINUOUS), ColumnSpec("y", ColumnKind.CATEGORICAL, ("0", "1"))), target="y"
)


def _one_col(x, y, role=Role.TRAIN):
    return Dataset(ONE_COL, np.column_stack([x, y]).astype(float), role)


class TestAdversarialFilter:
    @pytest.mark.parametrize("seed", range(5))
    def test_iid_pool_is_not_separable(self, seed):
        # held-out AUC has standard error ~0.01 at this size, so every seed must land in the band
        train, test = shift_dataset(2000, 2000, 0.0, seed)
        _, auc = adversarial_scores(train, test, FilterConfig())
        assert 0.45 <= auc <= 0.55

    def test_separable_pool_keeps_exactly_the_test_side(self):
        rng = np.random.default_rng(0)
        x = np.r_[rng.uniform(-3, -0.5, 100), rng.uniform(0.5, 3, 100)]
        pool = _one_col(x, rng.integers(2, size=200))
        test = _one_col(rng.uniform(0.5, 3, 200), rng.integers(2, size=200), Role.TEST)
        res = filter_pool(pool, test.sealed(), FAST, keep_n=100)
        assert sorted(res.indices.tolist()) == list(range(100, 200))
        # half the pool is indistinguishable from test, so separability tops out near 0.75
        assert 0.7 <= res.adversarial_auc <= 0.8

    def test_keep_all_is_a_reordering(self):
        train, test = shift_dataset(200, 200, 1.0, 0)
        res = filter_pool(train, test, FAST, keep_n=len(train))
        assert sorted(res.indices.tolist()) == list(range(len(train)))
        assert np.all(np.diff(res.scores[res.indices]) <= 0)

    def test_kept_rows_carry_their_own_labels(self):
        train, test = shift_dataset(200, 200, 1.0, 1)
        res = filter_pool(train, test.sealed(), FAST, keep_n=50)
        np.testing.assert_array_equal(res.dataset.values, train.values[res.indices])
        assert len(adversarial_filter(train, test, FilterConfig(keep_n=50, gbdt=FAST.gbdt))) == 50

    def test_invalid_keep_n(self):
        train, test = shift_dataset(50, 50, 0.0, 0)
        for bad in (0, 51):
            with pytest.raises(ValueError):
                filter_pool(train, test, FAST, keep_n=bad)

    def test_schema_mismatch(self):
        train, _ = shift_dataset(50, 50, 0.0, 0)
        with pytest.raises(SchemaError):
            filter_pool(train, _one_col(np.zeros(5), np.zeros(5)), FAST)

    def test_deterministic(self):
        train, test = shift_dataset(300, 300, 1.0, 2)
        a = filter_pool(train, test, FAST, keep_n=100)
        b = filter_pool(train, test, FAST, keep_n=100)
        np.testing.assert_array_equal(a.indices, b.indices)

    def test_grouped_duplicates_share_a_fold(self):
        # a duplicated pool row must not be scored by a model that saw its twin
        from tabshift.pipeline import _folds

        groups = np.r_[np.arange(20), np.arange(20)]
        fold = _folds(np.zeros(40, dtype=int), groups, 4, np.random.default_rng(0))
        np.testing.assert_array_equal(fold[:20], fold[20:])

    def test_test_labels_not_read(self):
        train, test = shift_dataset(100, 100, 1.0, 0)
        sealed = test.sealed()
        filter_pool(train, sealed, FAST)
        assert sealed.label_readers == []
        with pytest.raises(LabelLeakError):
            sealed.labels()


class TestStrategies:
    def test_none_is_deterministic(self):
        train, test = shift_dataset(300, 300, 1.0, 0)
        a = run_strategy("none", train, test, FAST_PIPE, 0)
        b = run_strategy("none", train, test, FAST_PIPE, 0)
        assert a == b and a.n_synthetic == 0 and a.adversarial_auc is None and a.n_train == 300

    def test_sample_original_pool_is_train(self):
        train, test = shift_dataset(300, 300, 1.0, 0)
        none = run_strategy("none", train, test, FAST_PIPE, 0)
        so = run_strategy("sample_original", train, test, FAST_PIPE, 0)
        assert so.n_train == 300 and so.roc_auc == pytest.approx(none.roc_auc, abs=1e-12)

    def test_resampled_original_variant(self):
        from dataclasses import replace

        train, test = shift_dataset(300, 300, 1.0, 0)
        r = run_strategy("sample_original", train, test, replace(FAST_PIPE, resample_original=True), 0)
        assert r.n_train == 300 and 0.5 < r.roc_auc <= 1.0

    def test_gan_end_to_end(self):
        train, test = shift_dataset(200, 200, 1.0, 0)
        r = run_strategy("gan", train, test, FAST_PIPE, 3)
        assert r.n_train == 200 and 0 <= r.n_synthetic <= 200
        assert 0 <= r.roc_auc <= 1 and r.adversarial_auc is not None

    def test_gan_with_supplied_synthetic(self):
        train, test = shift_dataset(200, 200, 1.0, 0)
        synth, _ = shift_dataset(200, 10, 1.0, 9)  # synthetic rows that already look like test
        r = run_strategy("gan", train, test, FAST_PIPE, 0, synthetic=synth.with_role(Role.SYNTHETIC))
        assert r.n_synthetic > 100

    def test_unknown_strategy(self):
        train, test = shift_dataset(50, 50, 0.0, 0)
        with pytest.raises(ValueError):
            run_strategy("smote", train, test, FAST_PIPE)

    @pytest.mark.parametrize("strategy", ["none", "sample_original", "gan"])
    def test_only_final_scorer_reads_test_labels(self, strategy):
        train, test = shift_dataset(150, 150, 1.0, 0)
        sealed = test.sealed()
        r = run_strategy(strategy, train, sealed, FAST_PIPE, 0)
        assert sealed.label_readers == [FINAL_SCORER]
        assert r.test_rate == pytest.approx(test.labels().mean())

    def test_same_target_flag(self):
        train, test = shift_dataset(300, 300, 0.0, 0)
        r = run_strategy("none", train, test, FAST_PIPE, 0)
        assert r.same_target == int(abs(r.train_rate - r.test_rate) <= 0.05)


def test_substreams_are_distinct_and_stable():
    assert substream(0, "gan") == substream(0, "gan")
    assert len({substream(0, "gan"), substream(0, "filter"), substream(1, "gan")}) == 3


class TestAggregate:
    def test_published_winner_counts(self):
        rep = aggregate(PUBLISHED_BEST)
        assert rep.win_counts == PUBLISHED_WINS

    def test_hand_computed(self):
        rep = aggregate({"d1": {"a": 0.9, "b": 0.8, "c": 0.7}, "d2": {"a": 0.5, "b": 0.6, "c": 0.55}}, ["a", "b", "c"])
        assert rep.scaled["d1"] == {"a": 1.0, "b": pytest.approx(0.5), "c": 0.0}
        assert rep.scaled["d2"] == {"a": 0.0, "b": 1.0, "c": pytest.approx(0.5)}
        assert rep.scaled_mean == {"a": 0.5, "b": pytest.approx(0.75), "c": pytest.approx(0.25)}
        assert rep.scaled_std["a"] == pytest.approx(0.5)
        assert rep.win_counts == {"a": 1.0, "b": 1.0, "c": 0.0}

    def test_all_equal_dataset(self):
        rep = aggregate({"d": {"a": 0.7, "b": 0.7}}, ["a", "b"])
        assert rep.scaled["d"] == {"a": 1.0, "b": 1.0}
        assert rep.win_counts == {"a": 0.5, "b": 0.5}

    def test_missing_cell(self):
        with pytest.raises(ValueError):
            aggregate({"d": {"a": 0.7}}, ["a", "b"])
        with pytest.raises(ValueError):
            aggregate({}, ["a"])

    @given(st.integers(0, 10_000))
    def test_invariant_under_monotone_transform(self, seed):
        rng = np.random.default_rng(seed)
        best = {f"d{i}": {s: float(v) for s, v in zip("abc", rng.random(3))} for i in range(4)}
        moved = {d: {s: 2 * v + 1 for s, v in r.items()} for d, r in best.items()}
        a, b = aggregate(best, list("abc")), aggregate(moved, list("abc"))
        assert a.win_counts == b.win_counts
        for s in "abc":
            assert a.scaled_mean[s] == pytest.approx(b.scaled_mean[s], abs=1e-12)

    def test_win_counts_sum_to_dataset_count(self):
        rep = aggregate(PUBLISHED_BEST)
        assert sum(rep.win_counts.values()) == len(PUBLISHED_BEST)


def _cell(dataset, strategy, auc, same=1, status="ok"):
    return StrategyResult(strategy, 0.5, 0, auc, 0.5, 0.5, same, 10, dataset=dataset, status=status,
                          error="boom" if status != "ok" else "")


def test_aggregate_cells_best_and_errors():
    cells = [
        _cell("d1", "none", 0.8), _cell("d1", "none", 0.9, same=0), _cell("d1", "gan", 0.85),
        _cell("d1", "sample_original", 0.7), _cell("bad", "none", float("nan"), status="error"),
    ]
    rep = aggregate_cells(cells)
    assert rep.best == {"d1": {"none": 0.9, "gan": 0.85, "sample_original": 0.7}}
    assert rep.errors == {"bad": "boom"}
    assert rep.cell_mean["none"] == pytest.approx(0.85)
    assert rep.same_target_means["none"] == {0: 0.9, 1: 0.8}
