"""Acceptance gate: every release criterion at its pinned tolerance.

Each test prints one PASS/FAIL line. When a real clinical CSV is supplied
via the NEPHROSCOPE_DATA environment variable the dataset-dependent checks
run against it; otherwise they run on the bundled synthetic cohort with its
planted risk structure.
"""

import itertools
import os
import time
from pathlib import Path

import numpy as np
from scipy.stats import spearmanr

from nephroscope import synth
from nephroscope.anchors import PerturbationSpace, ScaledClassifier, induce_anchor
from nephroscope.attribution import TreeShapExplainer, attribute, attribute_oracle, global_summary
from nephroscope.cli import main as cli_main
from nephroscope.data import Dataset
from nephroscope.dependence import pd_curve
from nephroscope.metrics import roc_auc
from nephroscope.models import TreeModel, fit_forest, predict_proba
from nephroscope.neighbors import DistanceConfig, dataset_stats, distance, find_counterfactual
from nephroscope.pipeline import run_training
from nephroscope.resample import ResampleConfig, synthesize_minority
from nephroscope.safety import default_suite, run_suite
from nephroscope.schema import BINARY, NUMERIC, FeatureSchema, FeatureSpec
from nephroscope.trees import TreeNode, fit_classification_tree

from conftest import TINY_CONFIG

REAL_DATA = os.environ.get("NEPHROSCOPE_DATA")


def verdict(name: str, ok: bool, detail: str = "") -> None:
    print(f"ACCEPTANCE {name}: {'PASS' if ok else 'FAIL'} {detail}".rstrip())
    assert ok, f"{name} failed: {detail}"


def numeric_schema(d):
    return FeatureSchema(specs=tuple(FeatureSpec(f"f{i}", NUMERIC) for i in range(d)))


class TestShapley:
    def test_additivity_500_instances_under_60s(self, trained):
        bundle = trained.bundle
        rng = np.random.default_rng(0)
        pool = trained.train_scaled.X
        B = pool[np.sort(rng.choice(pool.shape[0], 64, replace=False))]
        instances = pool[rng.integers(0, pool.shape[0], size=500)]
        t0 = time.time()
        explainer = TreeShapExplainer(bundle.model, B)
        worst = 0.0
        for x in instances:
            a = explainer.attribute(x)
            worst = max(worst, abs(a.prediction - predict_proba(bundle.model, x)))
        elapsed = time.time() - t0
        verdict(
            "shapley-additivity",
            worst <= 1e-9 and elapsed < 60.0,
            f"(max |base+sum(phi)-predict| = {worst:.2e}, {elapsed:.1f}s for 500)",
        )

    def test_oracle_equivalence_200_models(self):
        worst = 0.0
        for trial in range(200):
            rng = np.random.default_rng(trial)
            d = int(rng.integers(2, 11))
            n = int(rng.integers(25, 60))
            X = rng.random((n, d))
            w = rng.standard_normal(d)
            y = (X @ w + 0.3 * rng.standard_normal(n) > np.median(X @ w)).astype(np.int64)
            if y.sum() in (0, n):
                y[0] = 1 - y[0]
            depth = int(rng.integers(1, 5))
            if trial % 2:
                model = fit_forest(
                    X, y, n_trees=int(rng.integers(2, 6)), max_depth=depth,
                    max_features=max(2, d // 2), seed=trial,
                )
            else:
                model = TreeModel(
                    root=fit_classification_tree(X, y, max_depth=depth),
                    max_depth=depth, min_samples_leaf=1,
                )
            B = rng.random((int(rng.integers(2, 17)), d))
            x = rng.random(d)
            fast = attribute(model, x, B)
            oracle = attribute_oracle(model, x, B)
            worst = max(
                worst,
                float(np.abs(fast.phis - oracle.phis).max()),
                abs(fast.base_value - oracle.base_value),
            )
        verdict("shapley-oracle-equivalence", worst <= 1e-9, f"(max diff = {worst:.2e})")


class TestAuc:
    def test_rank_method_equals_pair_counting_on_1000_sets(self):
        failures = 0
        for trial in range(1000):
            rng = np.random.default_rng(trial)
            n = int(rng.integers(2, 51))
            scores = rng.choice(np.round(rng.random(8), 2), size=n)
            labels = rng.integers(0, 2, n)
            if labels.sum() == 0:
                labels[0] = 1
            if labels.sum() == n:
                labels[0] = 0
            pos = scores[labels == 1]
            neg = scores[labels == 0]
            wins = (pos[:, None] > neg[None, :]).sum()
            ties = (pos[:, None] == neg[None, :]).sum()
            brute = (wins + 0.5 * ties) / (len(pos) * len(neg))
            if roc_auc(scores, labels) != brute:
                failures += 1
        verdict("auc-exactness", failures == 0, f"({failures} mismatches in 1000 sets)")


class TestPdp:
    def test_brute_force_substitution_on_toy_models(self):
        worst = 0.0
        flat_ok = True
        for trial in range(50):
            rng = np.random.default_rng(trial)
            d = int(rng.integers(2, 6))
            n = int(rng.integers(3, 21))
            X = rng.random((n, d))
            y = (X[:, 0] > 0.5).astype(np.int64)
            if y.sum() in (0, n):
                y[0] = 1 - y[0]
            model = TreeModel(
                root=fit_classification_tree(X, y, max_depth=3),
                max_depth=3, min_samples_leaf=1,
            )
            ds = Dataset(schema=numeric_schema(d), X=X, y=None, provenance="scaled")
            feat = f"f{int(rng.integers(0, d))}"
            curve = pd_curve(model, ds, feat, n_points=8)
            j = ds.schema.index_of(feat)
            for v, got in zip(curve.grid_scaled, curve.pd_values):
                total = 0.0
                for row in X:
                    q = row.copy()
                    q[j] = v
                    total += predict_proba(model, q)
                worst = max(worst, abs(got - total / n))
            # a feature the model never splits on must give a bit-flat curve
            unused = d - 1 if j != d - 1 else d - 2
            if unused >= 0 and unused not in {node for node in _used_features(model.root)}:
                c2 = pd_curve(model, ds, f"f{unused}", n_points=6)
                flat_ok &= bool(np.all(c2.pd_values == c2.pd_values[0]))
        verdict(
            "pdp-correctness",
            worst <= 1e-12 and flat_ok,
            f"(max diff = {worst:.2e}, flat curves exact: {flat_ok})",
        )


def _used_features(root):
    out = set()
    stack = [root]
    while stack:
        n = stack.pop()
        if not n.is_leaf:
            out.add(n.feature)
            stack.extend([n.left, n.right])
    return out


class TestSmoteGeometry:
    def test_10000_samples_zero_violations(self):
        schema = FeatureSchema(
            specs=(
                FeatureSpec("x0", NUMERIC),
                FeatureSpec("x1", NUMERIC),
                FeatureSpec("c0", BINARY),
            )
        )
        rng = np.random.default_rng(0)
        n_min = 25
        minority = np.column_stack(
            [rng.random(n_min), rng.random(n_min), rng.integers(0, 2, n_min)]
        )
        majority = np.column_stack(
            [2 + rng.random(40), 2 + rng.random(40), rng.integers(0, 2, 40)]
        )
        X = np.vstack([majority, minority])
        y = np.array([0] * 40 + [1] * n_min, np.int8)
        ds = Dataset(schema=schema, X=X, y=y, provenance="scaled")
        cfg = ResampleConfig(k_neighbors=5, seed=1)
        detail = synthesize_minority(ds, cfg, n_synthetic=10_000)

        M = X[detail.minority_indices]
        betweenness_violations = 0
        vote_violations = 0
        for s in range(detail.rows.shape[0]):
            base = M[detail.base_rows[s]]
            nb = M[detail.neighbor_rows[s]]
            row = detail.rows[s]
            for j in (0, 1):
                lo, hi = min(base[j], nb[j]), max(base[j], nb[j])
                if not (lo - 1e-12 <= row[j] <= hi + 1e-12):
                    betweenness_violations += 1
            allowed = set(M[detail.knn[detail.base_rows[s]], 2]) | {base[2]}
            if row[2] not in allowed:
                vote_violations += 1

        from nephroscope.resample import smote_nc

        balanced = smote_nc(ds, ResampleConfig(k_neighbors=5, target_ratio=1.0, seed=1))
        neg, pos = balanced.class_counts()
        ratio_ok = abs(pos - neg) <= 1
        verdict(
            "smote-geometry",
            betweenness_violations == 0 and vote_violations == 0 and ratio_ok,
            f"(betweenness={betweenness_violations}, votes={vote_violations}, "
            f"balanced {neg}/{pos})",
        )


class TestCounterfactualMinimality:
    def test_100_random_pools_match_exhaustive_scan(self):
        cfg = DistanceConfig()
        mismatches = 0
        total_queries = 0
        for trial in range(100):
            rng = np.random.default_rng(trial)
            n = int(rng.integers(10, 201))
            schema = FeatureSchema(
                specs=(
                    FeatureSpec("n0", NUMERIC),
                    FeatureSpec("n1", NUMERIC),
                    FeatureSpec("n2", NUMERIC),
                    FeatureSpec("c0", BINARY),
                )
            )
            X = np.column_stack(
                [rng.random(n), rng.random(n), rng.random(n), rng.integers(0, 2, n)]
            )
            pool = Dataset(schema=schema, X=X, y=None, provenance="scaled")
            t = float(rng.uniform(0.2, 0.8))
            model = TreeModel(
                root=TreeNode(
                    feature=int(rng.integers(0, 3)), threshold=t,
                    left=TreeNode(value=0.1), right=TreeNode(value=0.9),
                ),
                max_depth=1, min_samples_leaf=1,
            )
            stats = dataset_stats(pool, cfg)
            for _ in range(3):
                total_queries += 1
                ref = np.array(
                    [rng.random(), rng.random(), rng.random(), float(rng.integers(0, 2))]
                )
                got = find_counterfactual(ref, pool, model, 0.5, cfg)
                ref_cls = int(model.predict_batch(ref[None, :])[0] >= 0.5)
                best = None
                for i in range(n):
                    if int(model.predict_batch(X[i][None, :])[0] >= 0.5) == ref_cls:
                        continue
                    d = distance(ref, X[i], cfg, stats, schema)
                    if best is None or d < best[0]:
                        best = (d, i)
                if best is None:
                    if got is not None:
                        mismatches += 1
                elif got is None or got.counterfactual_index != best[1]:
                    mismatches += 1
        verdict(
            "counterfactual-minimality",
            mismatches == 0,
            f"({mismatches} mismatches over {total_queries} queries)",
        )


class TestAnchorCalibration:
    def test_200_trials_on_enumerable_spaces(self):
        schema = FeatureSchema(
            specs=tuple(FeatureSpec(f"b{i}", BINARY) for i in range(4))
        )
        fidelity_violations = [0]

        class RecordingSpace(PerturbationSpace):
            def sample(self, instance, anchored, n, rng):
                out = super().sample(instance, anchored, n, rng)
                for j in anchored:
                    if not (out[:, j] == instance[j]).all():
                        fidelity_violations[0] += 1
                return out

        def exact_precision(clf, instance, anchored_idx, space, target):
            free = [j for j in range(4) if j not in anchored_idx]
            marg = [
                {v: float(np.mean(space.X[:, j] == v)) for v in np.unique(space.X[:, j])}
                for j in free
            ]
            total = 0.0
            for combo in itertools.product(*[sorted(m) for m in marg]):
                row = instance.copy()
                p = 1.0
                for j, v, m in zip(free, combo, marg):
                    row[j] = v
                    p *= m[v]
                if int(clf.classify(row[None, :])[0]) == target:
                    total += p
            return total

        returned = 0
        well_calibrated = 0
        for trial in range(200):
            rng = np.random.default_rng(1000 + trial)
            probs = rng.uniform(0.2, 0.8, 4)
            X = (rng.random((120, 4)) < probs).astype(float)
            w = rng.standard_normal(4)
            y = (X @ w > np.median(X @ w)).astype(np.int64)
            if y.sum() in (0, len(y)):
                y[0] = 1 - y[0]
            model = TreeModel(
                root=fit_classification_tree(X, y, max_depth=4),
                max_depth=4, min_samples_leaf=1,
            )
            clf = ScaledClassifier(model, schema, scaler=None, threshold=0.5)
            space = RecordingSpace(X=X, schema=schema, seed=trial)
            x = X[int(rng.integers(0, len(X)))].copy()
            rule = induce_anchor(clf, x, space, tau=0.95, n_samples=1000)
            if not rule.reached_target:
                continue
            returned += 1
            anchored = {schema.index_of(p.feature) for p in rule.predicates}
            target = int(clf.classify(x[None, :])[0])
            if exact_precision(clf, x, anchored, space, target) >= 0.90:
                well_calibrated += 1
        ok = (
            returned > 0
            and well_calibrated >= 0.90 * returned
            and fidelity_violations[0] == 0
        )
        verdict(
            "anchor-calibration",
            ok,
            f"({well_calibrated}/{returned} rules with exact precision >= 0.90, "
            f"fidelity violations = {fidelity_violations[0]})",
        )


class TestPipelineMetrics:
    def test_champion_and_screening_metrics(self, trained):
        if REAL_DATA and Path(REAL_DATA).exists():
            result = run_training(REAL_DATA, TINY_CONFIG)
            t = result.test_metrics
            ok = (
                result.bundle.kind == "forest"
                and t.sensitivity >= 0.80
                and t.specificity >= 0.55
            )
            verdict(
                "screening-metrics(clinical)",
                ok,
                f"(champion={result.bundle.kind}, sens={t.sensitivity:.3f}, "
                f"spec={t.specificity:.3f})",
            )
        else:
            t = trained.test_metrics
            ok = trained.bundle.kind == "forest" and t.sensitivity >= 0.85
            verdict(
                "screening-metrics(synthetic)",
                ok,
                f"(champion={trained.bundle.kind}, sens={t.sensitivity:.3f}, "
                f"spec={t.specificity:.3f}, auc={t.rocauc:.3f})",
            )


class TestGlobalRanking:
    def test_risk_drivers_in_top7_and_egfr_sign(self, trained):
        explain = trained.test_scaled.take(np.arange(80))
        summary = global_summary(
            trained.bundle.model, explain, trained.train_scaled.X, seed=0
        )
        expected = {"DM_meds", "eGFR", "ACEI_ARB", "DM", "HbA1C"}
        hits = expected & set(summary.top(7))
        j = explain.schema.index_of("eGFR")
        rho = spearmanr(summary.raw_values[:, j], summary.phi_matrix[:, j]).statistic
        verdict(
            "global-ranking",
            len(hits) >= 4 and rho < 0,
            f"(top7 hits={sorted(hits)}, spearman(eGFR, phi)={rho:.3f})",
        )


class TestSafetySuite:
    def test_blocking_cases_and_ordering(self, trained):
        report = run_suite(default_suite(), trained.bundle)
        blocking = [v for v in report.verdicts if v.severity == "blocking"]
        ordering = report.orderings[0]
        ok = (
            len(blocking) == 3
            and all(v.class_ok for v in blocking)
            and ordering.satisfied
            and not report.blocking_failure
        )
        verdict(
            "safety-suite",
            ok,
            f"(blocking class checks: {[v.class_ok for v in blocking]}, "
            f"treated>untreated: {ordering.satisfied})",
        )


class TestDeterminism:
    def test_identical_inputs_identical_artifacts(self, tmp_path):
        data = synth.write_csv(tmp_path / "d.csv", n=300, seed=11)
        import yaml

        cfg_path = tmp_path / "cfg.yaml"
        cfg_path.write_text(yaml.safe_dump(TINY_CONFIG))
        outs = []
        for run in ("a", "b"):
            out = tmp_path / run
            code = cli_main(
                [
                    "train",
                    "--data", str(data),
                    "--config", str(cfg_path),
                    "--out-dir", str(out),
                ]
            )
            assert code == 0
            outs.append(out)
        model_same = (outs[0] / "model.json").read_bytes() == (outs[1] / "model.json").read_bytes()
        report_same = (outs[0] / "report.json").read_bytes() == (outs[1] / "report.json").read_bytes()
        text_same = (outs[0] / "report.txt").read_bytes() == (outs[1] / "report.txt").read_bytes()
        verdict(
            "determinism",
            model_same and report_same and text_same,
            f"(model={model_same}, report={report_same}, text={text_same})",
        )
