"""Scoped if-then rules with sampled precision and exact dataset coverage.

A rule anchors a set of features: perturbation samples keep those features
at the explained instance's values and redraw every free feature from the
training marginals. Precision is the fraction of samples whose thresholded
prediction matches the instance's; the reported bound is a one-sided
Clopper-Pearson lower confidence limit.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np
from scipy.stats import beta

from .data import Dataset, scale_row
from .models import Model
from .schema import CLASS_NAMES, FeatureSchema


class AnchorError(ValueError):
    pass


@dataclass(frozen=True)
class Predicate:
    feature: str
    op: str  # "<=", ">", "=="
    value: float

    def __post_init__(self):
        if self.op not in ("<=", ">", "=="):
            raise AnchorError(f"unknown predicate op {self.op!r}")

    def matches(self, X: np.ndarray, schema: FeatureSchema) -> np.ndarray:
        col = X[:, schema.index_of(self.feature)]
        if self.op == "<=":
            return col <= self.value
        if self.op == ">":
            return col > self.value
        return col == self.value

    def describe(self, schema: FeatureSchema) -> str:
        if self.op == "==" and schema.spec(self.feature).is_binary:
            return f"{self.feature} == {int(self.value)}"
        return f"{self.feature} {self.op} {self.value:g}"


@dataclass(frozen=True)
class AnchorRule:
    predicates: tuple[Predicate, ...]
    predicted_class: str
    precision: float
    precision_lower: float
    coverage: float
    samples_used: int
    reached_target: bool

    def describe(self, schema: FeatureSchema) -> str:
        if not self.predicates:
            cond = "TRUE"
        else:
            cond = " AND ".join(p.describe(schema) for p in self.predicates)
        return (
            f"IF {cond} THEN {self.predicted_class} "
            f"[precision={self.precision:.4f}, coverage={self.coverage:.4f}, "
            f"n={self.samples_used}]"
        )


class ScaledClassifier:
    """Thresholded class decisions for raw-unit rows, via the model's scaler."""

    def __init__(self, model: Model, schema: FeatureSchema, scaler, threshold: float):
        self.model = model
        self.schema = schema
        self.scaler = scaler
        self.threshold = threshold

    def classify(self, raw_rows: np.ndarray) -> np.ndarray:
        raw_rows = np.atleast_2d(np.asarray(raw_rows, dtype=float))
        if self.scaler is not None:
            rows = np.vstack([scale_row(r, self.schema, self.scaler) for r in raw_rows])
        else:
            rows = raw_rows
        return (self.model.predict_batch(rows) >= self.threshold).astype(np.int8)


@dataclass
class PerturbationSpace:
    """Marginal-resampling perturbations around a reference dataset (raw units)."""

    X: np.ndarray
    schema: FeatureSchema
    seed: int = 0

    @classmethod
    def from_dataset(cls, ds: Dataset, seed: int = 0) -> "PerturbationSpace":
        return cls(X=np.asarray(ds.X, dtype=float), schema=ds.schema, seed=seed)

    def sample(
        self,
        instance: np.ndarray,
        anchored: tuple[int, ...],
        n: int,
        rng: np.random.Generator,
    ) -> np.ndarray:
        """n rows; anchored columns equal the instance exactly, free columns
        are drawn independently from the reference columns."""

        d = self.schema.n_features
        out = np.empty((n, d))
        anchored_set = set(anchored)
        for j in range(d):
            if j in anchored_set:
                out[:, j] = instance[j]
            else:
                out[:, j] = self.X[rng.integers(0, self.X.shape[0], size=n), j]
        return out


def _rule_rng(seed: int, predicates: tuple[Predicate, ...]) -> np.random.Generator:
    # Stable per-candidate stream so beam evaluation order cannot matter.
    key = repr(tuple((p.feature, p.op, p.value) for p in predicates)).encode()
    digest = hashlib.sha256(key).digest()
    return np.random.default_rng([seed, int.from_bytes(digest[:8], "big")])


def _cp_lower(k: int, n: int, confidence: float) -> float:
    """One-sided Clopper-Pearson lower bound for k successes in n trials."""

    if n == 0:
        return 0.0
    if k == 0:
        return 0.0
    return float(beta.ppf(1.0 - confidence, k, n - k + 1))


def estimate_precision(
    predicates: tuple[Predicate, ...],
    classifier: ScaledClassifier,
    space: PerturbationSpace,
    instance: np.ndarray,
    target_class: int,
    n_samples: int = 1000,
    confidence: float = 0.95,
    seed: int = 0,
) -> tuple[float, float]:
    """(match fraction, Clopper-Pearson lower bound) over fresh perturbations."""

    if n_samples < 1:
        raise AnchorError("n_samples must be >= 1")
    anchored = tuple(sorted({space.schema.index_of(p.feature) for p in predicates}))
    if len(anchored) == space.schema.n_features:
        # Degenerate space: the single fixed point is the whole space, so the
        # estimate is exact and the bound equals it.
        cls = int(classifier.classify(instance[None, :])[0])
        match = 1.0 if cls == target_class else 0.0
        return match, match
    rng = _rule_rng(seed, predicates)
    samples = space.sample(instance, anchored, n_samples, rng)
    preds = classifier.classify(samples)
    k = int(np.sum(preds == target_class))
    return k / n_samples, _cp_lower(k, n_samples, confidence)


def rule_coverage(rule_or_predicates, ds: Dataset) -> float:
    """Exact fraction of the reference dataset satisfying every predicate."""

    predicates = (
        rule_or_predicates.predicates
        if isinstance(rule_or_predicates, AnchorRule)
        else tuple(rule_or_predicates)
    )
    if not predicates:
        return 1.0
    mask = np.ones(ds.n_records, dtype=bool)
    for p in predicates:
        mask &= p.matches(ds.X, ds.schema)
    return float(mask.mean())


def _candidate_predicates(
    instance: np.ndarray, space: PerturbationSpace
) -> list[Predicate]:
    """One consistent predicate family per feature: deciles of the training
    distribution plus the instance's own value for numerics, equality for
    binaries."""

    schema = space.schema
    out: list[Predicate] = []
    for j, spec in enumerate(schema.specs):
        v = float(instance[j])
        if spec.is_binary:
            out.append(Predicate(spec.name, "==", v))
            continue
        col = space.X[:, j]
        cuts = np.unique(np.concatenate([np.quantile(col, np.linspace(0.1, 0.9, 9)), [v]]))
        for c in cuts:
            c = float(c)
            if v <= c:
                out.append(Predicate(spec.name, "<=", c))
            else:
                out.append(Predicate(spec.name, ">", c))
    return out


def induce_anchor(
    classifier: ScaledClassifier,
    instance,
    space: PerturbationSpace,
    tau: float = 0.95,
    beam: int = 4,
    n_samples: int = 1000,
    confidence: float = 0.95,
    max_predicates: int = 4,
    coverage_ds: Dataset | None = None,
) -> AnchorRule:
    """Bottom-up beam search for the shortest high-precision anchored rule.

    Stops at the first depth where some candidate's lower confidence bound
    reaches tau, preferring the stopper with the largest exact coverage.
    Returns a below-target best-effort rule when no candidate reaches tau.
    """

    if not 0.5 < tau <= 1.0:
        raise AnchorError("tau must be in (0.5, 1]")
    instance = np.asarray(instance, dtype=float)
    target_class = int(classifier.classify(instance[None, :])[0])
    cov_ds = coverage_ds or Dataset(
        schema=space.schema, X=space.X.copy(), y=None, provenance="raw"
    )
    pool = _candidate_predicates(instance, space)

    def canonical(preds: tuple[Predicate, ...]) -> tuple[Predicate, ...]:
        return tuple(sorted(preds, key=lambda p: (p.feature, p.op, p.value)))

    def evaluate(preds: tuple[Predicate, ...]):
        point, lower = estimate_precision(
            preds,
            classifier,
            space,
            instance,
            target_class,
            n_samples=n_samples,
            confidence=confidence,
            seed=space.seed,
        )
        return point, lower, rule_coverage(preds, cov_ds)

    beam_state: list[tuple[Predicate, ...]] = [()]
    best_effort: tuple[float, float, float, tuple[Predicate, ...]] | None = None
    seen: set[tuple] = set()
    for _depth in range(1, max_predicates + 1):
        scored = []
        for base in beam_state:
            used = {p.feature for p in base}
            for cand in pool:
                if cand.feature in used:
                    continue
                preds = canonical(base + (cand,))
                key = tuple((p.feature, p.op, p.value) for p in preds)
                if key in seen:
                    continue
                seen.add(key)
                point, lower, cov = evaluate(preds)
                scored.append((lower, point, cov, preds))
        if not scored:
            break
        stoppers = [s for s in scored if s[0] >= tau]
        if stoppers:
            # Max coverage; ties by higher bound then canonical text.
            stoppers.sort(
                key=lambda s: (-s[2], -s[0], [(p.feature, p.op, p.value) for p in s[3]])
            )
            lower, point, cov, preds = stoppers[0]
            return AnchorRule(
                predicates=preds,
                predicted_class=CLASS_NAMES[target_class],
                precision=point,
                precision_lower=lower,
                coverage=cov,
                samples_used=n_samples,
                reached_target=True,
            )
        scored.sort(
            key=lambda s: (-s[0], -s[1], -s[2], [(p.feature, p.op, p.value) for p in s[3]])
        )
        top = scored[0]
        if best_effort is None or top[0] > best_effort[0]:
            best_effort = (top[0], top[1], top[2], top[3])
        beam_state = [s[3] for s in scored[:beam]]

    if best_effort is None:
        raise AnchorError("no candidate predicates available")
    lower, point, cov, preds = best_effort
    return AnchorRule(
        predicates=preds,
        predicted_class=CLASS_NAMES[target_class],
        precision=point,
        precision_lower=lower,
        coverage=cov,
        samples_used=n_samples,
        reached_target=False,
    )


def export_rules(rules: list[AnchorRule], schema: FeatureSchema) -> str:
    """Bit-stable one-rule-per-line export."""

    return "\n".join(r.describe(schema) for r in rules) + "\n"
