import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nephroscope.data import Dataset
from nephroscope.models import LogisticModel, TreeModel
from nephroscope.neighbors import (
    DistanceConfig,
    dataset_stats,
    distance,
    find_counterfactual,
    pairwise_distances,
    select_prototypes,
)
from nephroscope.schema import BINARY, NUMERIC, FeatureSchema, FeatureSpec
from nephroscope.trees import TreeNode


def schema_mixed():
    return FeatureSchema(
        specs=(
            FeatureSpec("n0", NUMERIC),
            FeatureSpec("n1", NUMERIC),
            FeatureSpec("c0", BINARY),
        )
    )


def ds_of(X, y=None, schema=None):
    return Dataset(
        schema=schema or schema_mixed(),
        X=np.asarray(X, float),
        y=None if y is None else np.asarray(y, np.int8),
        provenance="scaled",
    )


def stump_on(feature, threshold=0.5, left=0.1, right=0.9):
    return TreeModel(
        root=TreeNode(
            feature=feature,
            threshold=threshold,
            left=TreeNode(value=left),
            right=TreeNode(value=right),
        ),
        max_depth=None,
        min_samples_leaf=1,
    )


class TestDistance:
    def test_identity_zero(self):
        ds = ds_of(np.random.default_rng(0).random((10, 3)))
        cfg = DistanceConfig()
        stats = dataset_stats(ds, cfg)
        a = ds.X[2]
        assert distance(a, a, cfg, stats, ds.schema) == 0.0

    def test_single_categorical_flip_costs_unit(self):
        rng = np.random.default_rng(1)
        ds = ds_of(np.column_stack([rng.random(10), rng.random(10), np.zeros(10)]))
        cfg = DistanceConfig()
        stats = dataset_stats(ds, cfg)
        a = ds.X[0].copy()
        b = a.copy()
        b[2] = 1.0
        assert distance(a, b, cfg, stats, ds.schema) == pytest.approx(1.0)

    def test_hand_computed_mixed(self):
        # numeric diff 2.0 with MAD 0.5 plus one categorical flip -> 4 + 1 = 5
        X = np.array(
            [[0.0, 0.0, 0.0], [0.5, 0.0, 0.0], [1.0, 0.0, 0.0], [1.5, 0.0, 0.0], [2.0, 0.0, 0.0]]
        )
        ds = ds_of(X)
        cfg = DistanceConfig(norm="l1")
        stats = dataset_stats(ds, cfg)
        assert stats.scales[0] == pytest.approx(0.5)  # MAD of n0
        a = np.array([0.0, 0.0, 0.0])
        b = np.array([2.0, 0.0, 1.0])
        assert distance(a, b, cfg, stats, ds.schema) == pytest.approx(2.0 / 0.5 + 1.0)

    def test_zero_mad_falls_back_and_records(self):
        X = np.column_stack([np.ones(6), np.arange(6.0), np.zeros(6)])
        ds = ds_of(X)
        stats = dataset_stats(ds, DistanceConfig())
        assert "n0" in stats.zero_scale_features
        assert stats.scales[0] == 1.0

    @given(st.integers(0, 500))
    @settings(max_examples=30, deadline=None)
    def test_symmetry_and_triangle_l1(self, seed):
        rng = np.random.default_rng(seed)
        X = np.column_stack([rng.random(12), rng.random(12), rng.integers(0, 2, 12)])
        ds = ds_of(X)
        cfg = DistanceConfig(norm="l1")
        stats = dataset_stats(ds, cfg)
        a, b, c = X[rng.choice(12, 3, replace=False)]
        dab = distance(a, b, cfg, stats, ds.schema)
        dba = distance(b, a, cfg, stats, ds.schema)
        dac = distance(a, c, cfg, stats, ds.schema)
        dcb = distance(c, b, cfg, stats, ds.schema)
        assert dab == pytest.approx(dba)
        assert dab <= dac + dcb + 1e-9


class TestPrototypes:
    def two_clusters(self):
        rng = np.random.default_rng(0)
        a = rng.normal(0.0, 0.03, (12, 2))
        b = rng.normal(1.0, 0.03, (12, 2))
        X = np.column_stack([np.vstack([a, b]), np.zeros(24)])
        return ds_of(X)

    def test_two_clusters_one_prototype_each(self):
        ds = self.two_clusters()
        model = stump_on(0, threshold=0.5, left=0.1, right=0.9)
        protos = select_prototypes(ds, model, m=2, epsilon=0.9)
        assert len(protos.members) == 2
        sides = sorted(ds.X[m.index, 0] > 0.5 for m in protos.members)
        assert sides == [False, True]

    def test_m1_picks_exhaustive_best(self):
        rng = np.random.default_rng(3)
        X = np.column_stack([rng.random(15), rng.random(15), np.zeros(15)])
        ds = ds_of(X)
        model = LogisticModel(weights=np.zeros(3), intercept=-1.0, l2_penalty=0.0)
        cfg = DistanceConfig()
        stats = dataset_stats(ds, cfg)
        eps = 1.2
        protos = select_prototypes(ds, model, m=1, epsilon=eps, cfg=cfg)
        d = pairwise_distances(ds.X, cfg, stats, ds.schema)
        coverage = (d <= eps).sum(axis=1)
        assert protos.members[0].index == int(np.argmax(coverage))
        assert protos.members[0].covered_new == coverage.max()

    def test_greedy_gains_non_increasing(self, trained):
        ds = trained.train_scaled.take(np.arange(120))
        protos = select_prototypes(
            ds, trained.bundle.model, m=10, threshold=trained.bundle.threshold
        )
        gains = np.array(protos.objective_trace)
        assert (np.diff(gains) <= 1e-9).all()

    def test_coverage_soundness(self):
        ds = self.two_clusters()
        model = stump_on(0)
        cfg = DistanceConfig()
        stats = dataset_stats(ds, cfg)
        eps = 0.9
        protos = select_prototypes(ds, model, m=2, epsilon=eps, cfg=cfg)
        classes = (model.predict_batch(ds.X) >= 0.5).astype(int)
        for member in protos.members:
            inside = [
                i
                for i in range(ds.n_records)
                if distance(ds.X[member.index], ds.X[i], cfg, stats, ds.schema) <= eps
                and classes[i] == classes[member.index]
            ]
            assert member.covered_new <= len(inside)

    def test_majority_class_dominates_on_imbalanced_cohort(self, trained):
        ds = trained.train_scaled.take(np.arange(200))
        protos = select_prototypes(
            ds, trained.bundle.model, m=10, threshold=trained.bundle.threshold
        )
        assert len(protos.members) >= 1
        # The first (largest-coverage) prototype carries the majority class,
        # and majority-class prototypes outnumber minority ones.
        assert protos.members[0].predicted_class == "noCKD"
        nockd = sum(m.predicted_class == "noCKD" for m in protos.members)
        assert nockd > len(protos.members) / 2


class TestCounterfactual:
    def test_only_opposite_candidate(self):
        X = np.array([[0.1, 0.0, 0.0], [0.9, 0.0, 0.0]])
        pool = ds_of(X)
        model = stump_on(0)
        pair = find_counterfactual(np.array([0.2, 0.0, 0.0]), pool, model, 0.5)
        assert pair.counterfactual_index == 1
        assert pair.reference_prediction == "noCKD"
        assert pair.counterfactual_prediction == "CKD"
        assert ("n0", 0.2, 0.9) in pair.changed_features

    def test_no_opposite_returns_none(self):
        X = np.array([[0.1, 0.0, 0.0], [0.2, 0.0, 0.0]])
        pair = find_counterfactual(
            np.array([0.3, 0.0, 0.0]), ds_of(X), stump_on(0), 0.5
        )
        assert pair is None

    def test_matches_exhaustive_scan(self):
        cfg = DistanceConfig()
        for trial in range(25):
            rng = np.random.default_rng(trial)
            n = int(rng.integers(10, 60))
            X = np.column_stack(
                [rng.random(n), rng.random(n), rng.integers(0, 2, n)]
            )
            pool = ds_of(X)
            model = stump_on(0, threshold=float(rng.uniform(0.2, 0.8)))
            stats = dataset_stats(pool, cfg)
            ref = np.array([rng.random(), rng.random(), float(rng.integers(0, 2))])
            pair = find_counterfactual(ref, pool, model, 0.5, cfg)
            ref_cls = int(model.predict_batch(ref[None, :])[0] >= 0.5)
            best = None
            for i in range(n):
                cls = int(model.predict_batch(X[i][None, :])[0] >= 0.5)
                if cls == ref_cls:
                    continue
                d = distance(ref, X[i], cfg, stats, pool.schema)
                if best is None or d < best[0]:
                    best = (d, i)
            if best is None:
                assert pair is None
            else:
                assert pair.counterfactual_index == best[1]
                assert pair.distance == pytest.approx(best[0])

    def test_changed_features_lists_every_difference(self):
        X = np.array([[0.9, 0.4, 1.0]])
        pool = ds_of(X)
        model = stump_on(0)
        ref = np.array([0.2, 0.4, 0.0])
        pair = find_counterfactual(ref, pool, model, 0.5)
        names = [n for n, _, _ in pair.changed_features]
        assert names == ["n0", "c0"]
