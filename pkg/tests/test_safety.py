import numpy as np
import pytest

from nephroscope.data import Dataset, fit_scaler, impute_group_mean
from nephroscope.models import ModelBundle, TreeModel
from nephroscope.safety import (
    SafetyCase,
    SafetySuite,
    SuiteError,
    analyze_errors,
    default_suite,
    run_suite,
    suite_from_dict,
)
from nephroscope.schema import ckd_schema
from nephroscope.trees import TreeNode

SCHEMA = ckd_schema()


def full_input(**overrides):
    base = {
        "gender": 0, "age": 50, "DM": 0, "CHD": 0, "Vascular_disease": 0,
        "smoking": 0, "HT": 0, "DLP": 0, "Obesity": 0, "DLP_meds": 0,
        "DM_meds": 0, "HT_meds": 0, "ACEI_ARB": 0, "Chol": 4.5, "TG": 1.2,
        "HbA1C": 5.5, "Cr": 70, "eGFR": 100, "SBP": 120, "DBP": 80, "BMI": 25,
    }
    base.update(overrides)
    return base


class TestRunSuite:
    def test_default_suite_verdict_count(self, trained):
        report = run_suite(default_suite(), trained.bundle)
        assert len(report.verdicts) == 5
        assert len(report.orderings) == 1

    def test_blocking_class_expectations_hold(self, trained):
        report = run_suite(default_suite(), trained.bundle)
        blocking = [v for v in report.verdicts if v.severity == "blocking"]
        assert len(blocking) == 3
        assert all(v.class_ok for v in blocking)
        assert not report.blocking_failure

    def test_treated_vs_untreated_ordering(self, trained):
        report = run_suite(default_suite(), trained.bundle)
        o = report.orderings[0]
        assert o.satisfied
        assert o.p_higher > o.p_lower

    def test_reports_are_reproducible(self, trained):
        a = run_suite(default_suite(), trained.bundle)
        b = run_suite(default_suite(), trained.bundle)
        assert a.to_dict() == b.to_dict()

    def test_empty_suite_passes(self, trained):
        report = run_suite(SafetySuite(cases=()), trained.bundle)
        assert report.all_passed and not report.blocking_failure

    def test_malformed_case_errors_but_suite_continues(self, trained):
        bad = SafetyCase(
            id="bad", description="", input={"gender": 0}, expected_class="CKD",
            severity="warning",
        )
        good = SafetyCase(
            id="good", description="", input=full_input(eGFR=150, age=25),
            expected_class="noCKD", severity="blocking",
        )
        report = run_suite(SafetySuite(cases=(bad, good)), trained.bundle)
        assert len(report.verdicts) == 2
        errored = next(v for v in report.verdicts if v.case_id == "bad")
        assert errored.error and not errored.passed
        assert not report.blocking_failure  # bad case was warning severity

    def test_malformed_blocking_case_blocks(self, trained):
        bad = SafetyCase(
            id="bad", description="", input={"gender": 0}, expected_class="CKD",
            severity="blocking",
        )
        report = run_suite(SafetySuite(cases=(bad,)), trained.bundle)
        assert report.blocking_failure

    def test_band_widening_never_flips_pass_to_fail(self, trained):
        case = default_suite().cases[0]
        narrow = run_suite(SafetySuite(cases=(case,)), trained.bundle)
        widened = SafetyCase(
            id=case.id, description=case.description, input=case.input,
            expected_class=case.expected_class, band=(0.0, 1.0), severity=case.severity,
        )
        wide = run_suite(SafetySuite(cases=(widened,)), trained.bundle)
        if narrow.verdicts[0].passed:
            assert wide.verdicts[0].passed

    def test_band_checked_on_expected_class_probability(self, trained):
        case = SafetyCase(
            id="x", description="", input=full_input(eGFR=150, age=25),
            expected_class="noCKD", band=(0.0, 1.0), severity="warning",
        )
        report = run_suite(SafetySuite(cases=(case,)), trained.bundle)
        v = report.verdicts[0]
        assert v.band_ok
        assert v.margin == pytest.approx(
            abs(v.probability_ckd - trained.bundle.threshold)
        )

    def test_class_mismatch_on_blocking_case_sets_flag(self, trained):
        case = SafetyCase(
            id="wrong", description="", input=full_input(eGFR=150, age=25),
            expected_class="CKD", severity="blocking",
        )
        report = run_suite(SafetySuite(cases=(case,)), trained.bundle)
        assert report.blocking_failure

    def test_suite_parsing_rejects_missing_cases(self):
        with pytest.raises(SuiteError):
            suite_from_dict({"orderings": []})


def toy_bundle(threshold=0.5):
    # Stump on eGFR: low scaled eGFR scores as likely positive.
    j = SCHEMA.index_of("eGFR")
    root = TreeNode(
        feature=j, threshold=0.4, left=TreeNode(value=0.9), right=TreeNode(value=0.1)
    )
    model = TreeModel(root=root, max_depth=None, min_samples_leaf=1)
    rng = np.random.default_rng(0)
    X = rng.random((40, SCHEMA.n_features))
    y = (rng.random(40) < 0.3).astype(np.int8)
    raw = Dataset(schema=SCHEMA, X=X * 100, y=y, provenance="raw")
    scaler = fit_scaler(impute_group_mean(raw))
    return ModelBundle(
        kind="tree", model=model, schema=SCHEMA, scaler=scaler, threshold=threshold
    )


class TestAnalyzeErrors:
    def scaled_labeled(self, trained, n=150):
        return trained.test_scaled.take(np.arange(min(n, trained.test_scaled.n_records)))

    def test_perfect_model_yields_empty_list(self):
        bundle = toy_bundle()
        j = SCHEMA.index_of("eGFR")
        X = np.zeros((6, SCHEMA.n_features))
        X[:, j] = [0.1, 0.2, 0.3, 0.6, 0.7, 0.8]
        y = np.array([1, 1, 1, 0, 0, 0], np.int8)
        ds = Dataset(schema=SCHEMA, X=X, y=y, provenance="scaled")
        assert analyze_errors(bundle, ds) == []

    def test_single_error_margin_recomputed(self):
        bundle = toy_bundle()
        j = SCHEMA.index_of("eGFR")
        X = np.zeros((10, SCHEMA.n_features))
        X[:, j] = [0.1, 0.2, 0.3, 0.35, 0.6, 0.65, 0.7, 0.8, 0.9, 0.95]
        y = np.array([1, 1, 1, 1, 0, 0, 0, 0, 0, 1], np.int8)  # last one mislabeled
        ds = Dataset(schema=SCHEMA, X=X, y=y, provenance="scaled")
        entries = analyze_errors(bundle, ds)
        assert len(entries) == 1
        e = entries[0]
        assert e.record_index == 9
        assert e.truth == "CKD" and e.prediction == "noCKD"
        assert e.margin == pytest.approx(abs(0.1 - 0.5))
        assert e.probability_no_ckd + e.probability_ckd == pytest.approx(1.0)

    def test_false_negatives_listed_first(self, trained):
        ds = self.scaled_labeled(trained)
        entries = analyze_errors(bundle=trained.bundle, labeled=ds)
        kinds = [e.truth for e in entries]
        if "CKD" in kinds and "noCKD" in kinds:
            first_fp = kinds.index("noCKD")
            assert all(k == "noCKD" for k in kinds[first_fp:])
        for e in entries:
            assert e.truth != e.prediction

    def test_entries_carry_top_attributions(self, trained):
        ds = self.scaled_labeled(trained, n=80)
        entries = analyze_errors(trained.bundle, ds)
        for e in entries[:3]:
            assert 1 <= len(e.top_attributions) <= 5
            phis = [abs(p) for _, p in e.top_attributions]
            assert phis == sorted(phis, reverse=True)
