"""Grid search over stratified folds with resampling inside each fold."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .data import DataError, Dataset
from .metrics import ThresholdPolicy, choose_threshold, confusion, roc_auc
from .models import train
from .resample import ResampleConfig, smote_nc


class TuningError(ValueError):
    pass


@dataclass(frozen=True)
class HyperGrid:
    """Candidate hyperparameter lists per axis, e.g. {"max_depth": [4, 8]}."""

    axes: dict[str, list]
    cv_folds: int = 5
    selection_metric: str = "sensitivity"  # or "rocauc"

    def __post_init__(self):
        if not self.axes or any(len(v) == 0 for v in self.axes.values()):
            raise TuningError("grid must be non-empty on every axis")
        if self.cv_folds < 2:
            raise TuningError("cv_folds must be >= 2")
        if self.selection_metric not in ("sensitivity", "rocauc"):
            raise TuningError(f"unknown selection metric {self.selection_metric!r}")

    def cells(self) -> list[dict]:
        keys = sorted(self.axes)
        out = []
        for combo in itertools.product(*(self.axes[k] for k in keys)):
            out.append(dict(zip(keys, combo)))
        return out


def stratified_folds(y: np.ndarray, k: int, seed: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """k disjoint (train_idx, val_idx) pairs preserving class balance."""

    rng = np.random.default_rng(seed)
    assignment = np.empty(len(y), dtype=np.int64)
    for cls in np.unique(y):
        members = rng.permutation(np.flatnonzero(y == cls))
        assignment[members] = np.arange(members.size) % k
    folds = []
    for f in range(k):
        val = np.flatnonzero(assignment == f)
        tr = np.flatnonzero(assignment != f)
        folds.append((tr, val))
    return folds


@dataclass
class GridCell:
    kind: str
    params: dict
    mean_sensitivity: float
    mean_specificity: float
    mean_rocauc: float
    oof_scores: np.ndarray = field(repr=False)
    oof_labels: np.ndarray = field(repr=False)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "params": self.params,
            "mean_sensitivity": self.mean_sensitivity,
            "mean_specificity": self.mean_specificity,
            "mean_rocauc": self.mean_rocauc,
        }


def _cell_size(kind: str, params: dict) -> float:
    """Rough capacity measure used only to break metric ties toward smaller
    models: tree count times depth cap for ensembles, depth for a tree, the
    inverse penalty for the linear model."""

    big = 1e6
    if kind == "forest":
        return params.get("n_trees", 300) * (params.get("max_depth") or big)
    if kind == "boosted":
        return params.get("n_rounds", 200) * params.get("max_depth", 3)
    if kind == "tree":
        return params.get("max_depth") or big
    return 1.0 / params.get("l2_penalty", 0.01)


def grid_search(
    kind: str,
    grid: HyperGrid,
    train_ds: Dataset,
    seed: int,
    threshold_policy: ThresholdPolicy | None = None,
    resample_cfg: ResampleConfig | None = None,
) -> tuple[dict, list[GridCell]]:
    """Cross-validated cell metrics and the argmax cell.

    Folds are split on the original training records; resampling touches only
    each fold's training portion, so every validation record is original.
    Ties on the selection metric break by higher rocauc then smaller model.
    """

    if train_ds.y is None:
        raise TuningError("grid search requires labels")
    policy = threshold_policy or ThresholdPolicy.sensitivity_first()
    folds = stratified_folds(np.asarray(train_ds.y), grid.cv_folds, seed)
    table: list[GridCell] = []
    for params in grid.cells():
        sens, spec, auc = [], [], []
        oof_s, oof_y = [], []
        try:
            for f, (tr, val) in enumerate(folds):
                fold_train = train_ds.take(tr)
                if resample_cfg is not None:
                    fold_train = smote_nc(fold_train, resample_cfg)
                model = train(kind, fold_train, params, seed=seed + 1000 * f)
                val_scores = model.predict_batch(train_ds.X[val])
                val_labels = np.asarray(train_ds.y)[val]
                t = choose_threshold(val_scores, val_labels, policy).threshold
                c = confusion(val_scores, val_labels, t)
                sens.append(c.sensitivity)
                spec.append(c.specificity)
                auc.append(roc_auc(val_scores, val_labels))
                oof_s.append(val_scores)
                oof_y.append(val_labels)
        except (ValueError, DataError) as exc:
            raise TuningError(f"grid cell {params} cannot fit: {exc}") from exc
        table.append(
            GridCell(
                kind=kind,
                params=params,
                mean_sensitivity=float(np.mean(sens)),
                mean_specificity=float(np.mean(spec)),
                mean_rocauc=float(np.mean(auc)),
                oof_scores=np.concatenate(oof_s),
                oof_labels=np.concatenate(oof_y),
            )
        )

    def sort_key(cell: GridCell):
        primary = (
            cell.mean_sensitivity
            if grid.selection_metric == "sensitivity"
            else cell.mean_rocauc
        )
        return (-primary, -cell.mean_rocauc, _cell_size(kind, cell.params))

    best = min(table, key=sort_key)
    return best.params, table
