"""Screening metrics, operating-threshold choice, champion selection."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata


class MetricError(ValueError):
    pass


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    @property
    def sensitivity(self) -> float:
        return self.tp / (self.tp + self.fn) if self.tp + self.fn else float("nan")

    @property
    def specificity(self) -> float:
        return self.tn / (self.tn + self.fp) if self.tn + self.fp else float("nan")


@dataclass(frozen=True)
class EvalMetrics:
    sensitivity: float
    specificity: float
    rocauc: float
    threshold: float
    counts: ConfusionCounts

    def to_dict(self) -> dict:
        return {
            "sensitivity": self.sensitivity,
            "specificity": self.specificity,
            "rocauc": self.rocauc,
            "threshold": self.threshold,
            "counts": {
                "tp": self.counts.tp,
                "fp": self.counts.fp,
                "tn": self.counts.tn,
                "fn": self.counts.fn,
            },
        }


def _check(scores, labels):
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels)
    if scores.size == 0:
        raise MetricError("empty score array")
    if scores.shape != labels.shape:
        raise MetricError("scores and labels must have equal length")
    if not np.isin(labels, (0, 1)).all():
        raise MetricError("labels must be binary 0/1")
    return scores, labels.astype(np.int8)


def confusion(scores, labels, threshold: float) -> ConfusionCounts:
    """Counts with predicted-CKD iff score >= threshold."""

    scores, labels = _check(scores, labels)
    pred = scores >= threshold
    return ConfusionCounts(
        tp=int(np.sum(pred & (labels == 1))),
        fp=int(np.sum(pred & (labels == 0))),
        tn=int(np.sum(~pred & (labels == 0))),
        fn=int(np.sum(~pred & (labels == 1))),
    )


def roc_auc(scores, labels) -> float:
    """Mann-Whitney AUC: P(random positive outscores random negative), ties 1/2."""

    scores, labels = _check(scores, labels)
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise MetricError("roc_auc requires both classes")
    ranks = rankdata(scores, method="average")
    u = ranks[labels == 1].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def threshold_candidates(scores) -> np.ndarray:
    """Midpoints of consecutive distinct sorted scores, plus 0 and 1."""

    distinct = np.unique(np.asarray(scores, dtype=float))
    mids = (distinct[:-1] + distinct[1:]) / 2.0
    return np.unique(np.concatenate([[0.0], mids, [1.0]]))


@dataclass(frozen=True)
class ThresholdPolicy:
    name: str  # "max_sensitivity_with_specificity_floor" | "fixed"
    floor: float | None = None
    value: float | None = None

    @classmethod
    def fixed(cls, t: float) -> "ThresholdPolicy":
        return cls(name="fixed", value=t)

    @classmethod
    def sensitivity_first(cls, floor: float = 0.60) -> "ThresholdPolicy":
        return cls(name="max_sensitivity_with_specificity_floor", floor=floor)

    def to_dict(self) -> dict:
        return {"name": self.name, "floor": self.floor, "value": self.value}


@dataclass(frozen=True)
class ThresholdChoice:
    threshold: float
    warning: bool = False  # floor unattainable; fell back to max specificity


def choose_threshold(scores, labels, policy: ThresholdPolicy) -> ThresholdChoice:
    """Pick the operating cutoff on validation scores.

    Floor policy: the largest threshold whose sensitivity is maximal among
    candidates meeting specificity >= floor. If the floor is unattainable the
    max-specificity threshold is returned with a warning flag.
    """

    if policy.name == "fixed":
        return ThresholdChoice(threshold=float(policy.value))
    if policy.name != "max_sensitivity_with_specificity_floor":
        raise MetricError(f"unknown threshold policy {policy.name!r}")
    scores, labels = _check(scores, labels)
    cands = threshold_candidates(scores)
    sens = np.empty(cands.size)
    spec = np.empty(cands.size)
    for i, t in enumerate(cands):
        c = confusion(scores, labels, t)
        sens[i] = c.sensitivity
        spec[i] = c.specificity
    ok = spec >= policy.floor
    if not ok.any():
        return ThresholdChoice(threshold=float(cands[int(np.argmax(spec))]), warning=True)
    best_sens = sens[ok].max()
    winners = ok & (sens >= best_sens - 1e-15)
    return ThresholdChoice(threshold=float(cands[np.flatnonzero(winners)[-1]]))


def select_model(candidates: list[tuple[object, EvalMetrics]]) -> tuple[object, EvalMetrics]:
    """Champion by sensitivity; ties broken by rocauc, then specificity,
    then input order."""

    if not candidates:
        raise MetricError("no candidate models")
    best_i = 0
    for i in range(1, len(candidates)):
        a = candidates[best_i][1]
        b = candidates[i][1]
        key_a = (a.sensitivity, a.rocauc, a.specificity)
        key_b = (b.sensitivity, b.rocauc, b.specificity)
        if key_b > key_a:
            best_i = i
    return candidates[best_i]


def evaluate(scores, labels, threshold: float) -> EvalMetrics:
    counts = confusion(scores, labels, threshold)
    return EvalMetrics(
        sensitivity=counts.sensitivity,
        specificity=counts.specificity,
        rocauc=roc_auc(scores, labels),
        threshold=threshold,
        counts=counts,
    )
