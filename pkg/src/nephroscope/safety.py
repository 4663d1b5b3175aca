"""Declarative edge-case suites and misprediction root-cause reporting."""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from .attribution import attribute, subsample_background
from .data import Dataset, scale_row
from .models import ModelBundle
from .neighbors import DistanceConfig, find_counterfactual
from .schema import CLASS_NAMES, FeatureSchema

SEVERITIES = ("blocking", "warning")


class SuiteError(ValueError):
    pass


@dataclass(frozen=True)
class SafetyCase:
    id: str
    description: str
    input: dict[str, float]
    expected_class: str
    band: tuple[float, float] | None = None  # on the expected class's probability
    severity: str = "warning"

    def validate(self, schema: FeatureSchema) -> None:
        if self.expected_class not in CLASS_NAMES:
            raise SuiteError(f"case {self.id}: unknown class {self.expected_class!r}")
        if self.severity not in SEVERITIES:
            raise SuiteError(f"case {self.id}: unknown severity {self.severity!r}")
        missing = [n for n in schema.names if n not in self.input]
        if missing:
            raise SuiteError(f"case {self.id}: missing feature(s) {missing}")
        unknown = [n for n in self.input if n not in schema.names]
        if unknown:
            raise SuiteError(f"case {self.id}: unknown feature(s) {unknown}")
        if self.band is not None:
            lo, hi = self.band
            if not (0.0 <= lo <= hi <= 1.0):
                raise SuiteError(f"case {self.id}: band must satisfy 0 <= lo <= hi <= 1")


@dataclass(frozen=True)
class OrderingAssertion:
    """Requires P(CKD | higher case) to exceed P(CKD | lower case)."""

    id: str
    higher: str
    lower: str
    strict: bool = True
    severity: str = "warning"


@dataclass(frozen=True)
class SafetySuite:
    cases: tuple[SafetyCase, ...]
    orderings: tuple[OrderingAssertion, ...] = ()


@dataclass(frozen=True)
class SafetyVerdict:
    case_id: str
    predicted_class: str | None
    probability_ckd: float | None
    passed: bool
    class_ok: bool
    band_ok: bool
    margin: float | None
    severity: str
    error: str | None = None

    def to_dict(self) -> dict:
        return {
            "case_id": self.case_id,
            "predicted_class": self.predicted_class,
            "probability_ckd": self.probability_ckd,
            "pass": self.passed,
            "class_ok": self.class_ok,
            "band_ok": self.band_ok,
            "margin": self.margin,
            "severity": self.severity,
            "error": self.error,
        }


@dataclass(frozen=True)
class OrderingResult:
    assertion_id: str
    higher: str
    lower: str
    satisfied: bool
    p_higher: float | None
    p_lower: float | None
    severity: str

    def to_dict(self) -> dict:
        return {
            "assertion_id": self.assertion_id,
            "higher": self.higher,
            "lower": self.lower,
            "satisfied": self.satisfied,
            "p_higher": self.p_higher,
            "p_lower": self.p_lower,
            "severity": self.severity,
        }


@dataclass(frozen=True)
class SafetyReport:
    verdicts: tuple[SafetyVerdict, ...]
    orderings: tuple[OrderingResult, ...]
    blocking_failure: bool

    @property
    def all_passed(self) -> bool:
        return all(v.passed for v in self.verdicts) and all(
            o.satisfied for o in self.orderings
        )

    def to_dict(self) -> dict:
        return {
            "verdicts": [v.to_dict() for v in self.verdicts],
            "orderings": [o.to_dict() for o in self.orderings],
            "blocking_failure": self.blocking_failure,
            "all_passed": self.all_passed,
        }

    def summary_table(self) -> str:
        lines = [f"{'case':<14} {'class':<8} {'p(CKD)':<8} {'pass':<6} severity"]
        for v in self.verdicts:
            p = f"{v.probability_ckd:.3f}" if v.probability_ckd is not None else "-"
            cls = v.predicted_class or "error"
            lines.append(
                f"{v.case_id:<14} {cls:<8} {p:<8} {str(v.passed):<6} {v.severity}"
            )
        for o in self.orderings:
            lines.append(
                f"ordering {o.assertion_id}: p({o.higher}) > p({o.lower}) -> {o.satisfied}"
            )
        return "\n".join(lines)


def load_suite(path: str | Path) -> SafetySuite:
    doc = yaml.safe_load(Path(path).read_text())
    return suite_from_dict(doc)


def suite_from_dict(doc: dict) -> SafetySuite:
    if not isinstance(doc, dict) or "cases" not in doc:
        raise SuiteError("suite document must contain a 'cases' list")
    cases = []
    for c in doc["cases"]:
        try:
            cases.append(
                SafetyCase(
                    id=str(c["id"]),
                    description=str(c.get("description", "")),
                    input={str(k): float(v) for k, v in c["input"].items()},
                    expected_class=str(c["expected_class"]),
                    band=tuple(c["band"]) if c.get("band") else None,
                    severity=str(c.get("severity", "warning")),
                )
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise SuiteError(f"malformed case entry: {exc}") from exc
    orderings = tuple(
        OrderingAssertion(
            id=str(o["id"]),
            higher=str(o["higher"]),
            lower=str(o["lower"]),
            strict=bool(o.get("strict", True)),
            severity=str(o.get("severity", "warning")),
        )
        for o in doc.get("orderings", [])
    )
    return SafetySuite(cases=tuple(cases), orderings=orderings)


def default_suite() -> SafetySuite:
    with resources.files("nephroscope").joinpath("suites/edge_cases.yaml").open() as fh:
        return suite_from_dict(yaml.safe_load(fh))


def run_suite(suite: SafetySuite, bundle: ModelBundle) -> SafetyReport:
    """Score every case and ordering assertion against a trained bundle.

    Malformed cases yield error verdicts without stopping the suite. A
    blocking failure means a blocking-severity case missed its class
    expectation (probability bands are advisory) or errored out.
    """

    schema = bundle.schema
    threshold = bundle.threshold
    verdicts: list[SafetyVerdict] = []
    probs: dict[str, float] = {}
    blocking = False
    for case in sorted(suite.cases, key=lambda c: c.id):
        try:
            case.validate(schema)
            raw = np.array([case.input[n] for n in schema.names], dtype=float)
            scaled = scale_row(raw, schema, bundle.scaler)
            p_ckd = float(bundle.model.predict_batch(scaled[None, :])[0])
        except SuiteError as exc:
            verdicts.append(
                SafetyVerdict(
                    case_id=case.id,
                    predicted_class=None,
                    probability_ckd=None,
                    passed=False,
                    class_ok=False,
                    band_ok=False,
                    margin=None,
                    severity=case.severity,
                    error=str(exc),
                )
            )
            if case.severity == "blocking":
                blocking = True
            continue
        probs[case.id] = p_ckd
        predicted = CLASS_NAMES[int(p_ckd >= threshold)]
        class_ok = predicted == case.expected_class
        band_ok = True
        if case.band is not None:
            p_expected = p_ckd if case.expected_class == "CKD" else 1.0 - p_ckd
            band_ok = case.band[0] <= p_expected <= case.band[1]
        verdicts.append(
            SafetyVerdict(
                case_id=case.id,
                predicted_class=predicted,
                probability_ckd=p_ckd,
                passed=class_ok and band_ok,
                class_ok=class_ok,
                band_ok=band_ok,
                margin=abs(p_ckd - threshold),
                severity=case.severity,
            )
        )
        if case.severity == "blocking" and not class_ok:
            blocking = True

    orderings: list[OrderingResult] = []
    for o in suite.orderings:
        ph = probs.get(o.higher)
        pl = probs.get(o.lower)
        if ph is None or pl is None:
            ok = False
        else:
            ok = ph > pl if o.strict else ph >= pl
        orderings.append(
            OrderingResult(
                assertion_id=o.id,
                higher=o.higher,
                lower=o.lower,
                satisfied=ok,
                p_higher=ph,
                p_lower=pl,
                severity=o.severity,
            )
        )
        if o.severity == "blocking" and not ok:
            blocking = True
    return SafetyReport(
        verdicts=tuple(verdicts), orderings=tuple(orderings), blocking_failure=blocking
    )


@dataclass(frozen=True)
class ErrorAnalysis:
    record_index: int
    truth: str
    prediction: str
    probability_no_ckd: float
    probability_ckd: float
    margin: float
    top_attributions: tuple[tuple[str, float], ...]  # (feature, phi) by |phi| desc
    counterfactual_distance: float | None
    present_risk_factors: tuple[str, ...]  # top phis pushing toward CKD
    absent_risk_factors: tuple[str, ...]  # top phis pushing away

    def to_dict(self) -> dict:
        return {
            "record_index": self.record_index,
            "truth": self.truth,
            "prediction": self.prediction,
            "probability_ratio": {
                "noCKD": self.probability_no_ckd,
                "CKD": self.probability_ckd,
            },
            "margin": self.margin,
            "top_attributions": [
                {"feature": f, "phi": phi} for f, phi in self.top_attributions
            ],
            "counterfactual_distance": self.counterfactual_distance,
            "present_risk_factors": list(self.present_risk_factors),
            "absent_risk_factors": list(self.absent_risk_factors),
        }


def analyze_errors(
    bundle: ModelBundle,
    labeled: Dataset,
    threshold: float | None = None,
    background: Dataset | None = None,
    top_k: int = 5,
    seed: int = 0,
) -> list[ErrorAnalysis]:
    """One entry per misprediction, false negatives first.

    Each entry carries the probability ratio, the top-|phi| attributions,
    and the distance to the nearest opposite-prediction record.
    """

    if labeled.y is None:
        raise SuiteError("error analysis requires labels")
    threshold = bundle.threshold if threshold is None else threshold
    model = bundle.model
    scores = model.predict_batch(labeled.X)
    preds = (scores >= threshold).astype(np.int8)
    wrong = np.flatnonzero(preds != labeled.y)
    if wrong.size == 0:
        return []
    bg = subsample_background(background if background is not None else labeled, seed=seed)
    cfg = DistanceConfig()
    # False negatives (truth CKD) lead; stable by record index within groups.
    order = sorted(wrong, key=lambda i: (0 if labeled.y[i] == 1 else 1, i))
    out: list[ErrorAnalysis] = []
    for i in order:
        att = attribute(model, labeled.X[i], bg, seed=seed)
        idx = np.argsort(-np.abs(att.phis), kind="stable")[:top_k]
        names = labeled.schema.names
        top = tuple((names[j], float(att.phis[j])) for j in idx)
        pair = find_counterfactual(labeled.X[i], labeled, model, threshold, cfg)
        out.append(
            ErrorAnalysis(
                record_index=int(i),
                truth=CLASS_NAMES[int(labeled.y[i])],
                prediction=CLASS_NAMES[int(preds[i])],
                probability_no_ckd=float(1.0 - scores[i]),
                probability_ckd=float(scores[i]),
                margin=float(abs(scores[i] - threshold)),
                top_attributions=top,
                counterfactual_distance=None if pair is None else pair.distance,
                present_risk_factors=tuple(n for n, p in top if p > 0),
                absent_risk_factors=tuple(n for n, p in top if p < 0),
            )
        )
    return out
