"""End-to-end training: ingest, impute, split, scale, tune, select, evaluate."""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
import yaml

from .data import (
    Dataset,
    apply_scaler,
    fit_scaler,
    impute_group_mean,
    load_csv,
    stratified_split_indices,
)
from .metrics import (
    EvalMetrics,
    ThresholdPolicy,
    choose_threshold,
    evaluate,
    select_model,
)
from .models import ModelBundle, schema_hash, train
from .resample import ResampleConfig, smote_nc
from .schema import ckd_schema
from .tuning import GridCell, HyperGrid, grid_search

SCHEMA_VERSION = 1

DEFAULT_CONFIG: dict = {
    "seed": 42,
    "test_fraction": 0.2,
    "cv_folds": 5,
    "selection_metric": "sensitivity",
    "threshold_policy": {
        "name": "max_sensitivity_with_specificity_floor",
        "floor": 0.60,
        "value": None,
    },
    "smote": {"enabled": True, "k_neighbors": 5, "target_ratio": 1.0},
    "kinds": ["logistic", "tree", "forest", "boosted"],
    "grids": {
        "logistic": {"l2_penalty": [0.001, 0.01, 0.1]},
        "tree": {"max_depth": [4, 8, None], "min_samples_leaf": [2, 5]},
        "forest": {
            "n_trees": [300],
            "max_depth": [None],
            "min_samples_leaf": [2],
            "max_features": [5],
        },
        "boosted": {
            "n_rounds": [200],
            "learning_rate": [0.1],
            "max_depth": [3],
            "min_samples_leaf": [1],
        },
    },
}


def _deep_merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _deep_merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def resolve_config(user: dict | None = None) -> dict:
    return _deep_merge(DEFAULT_CONFIG, user or {})


def load_config(path: str | Path | None) -> dict:
    if path is None:
        return resolve_config()
    doc = yaml.safe_load(Path(path).read_text()) or {}
    return resolve_config(doc)


def _canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def config_digest(config: dict) -> str:
    return hashlib.sha256(_canonical_json(config).encode()).hexdigest()


def dataset_digest(source: str | Path | Dataset) -> str:
    if isinstance(source, Dataset):
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(source.X).tobytes())
        if source.y is not None:
            h.update(np.ascontiguousarray(source.y).tobytes())
        return h.hexdigest()
    return hashlib.sha256(Path(source).read_bytes()).hexdigest()


@dataclass
class RunManifest:
    config_digest: str
    seed: int
    dataset_digest: str
    schema_version: int
    schema_hash: str
    champion_kind: str
    champion_params: dict
    threshold: float
    created_at: str = ""

    def digest(self) -> str:
        body = {
            "config_digest": self.config_digest,
            "seed": self.seed,
            "dataset_digest": self.dataset_digest,
            "schema_version": self.schema_version,
            "schema_hash": self.schema_hash,
            "champion_kind": self.champion_kind,
            "champion_params": self.champion_params,
            "threshold": self.threshold,
        }
        return hashlib.sha256(_canonical_json(body).encode()).hexdigest()

    def to_dict(self) -> dict:
        return {
            "manifest_digest": self.digest(),
            "config_digest": self.config_digest,
            "seed": self.seed,
            "dataset_digest": self.dataset_digest,
            "schema_version": self.schema_version,
            "schema_hash": self.schema_hash,
            "champion_kind": self.champion_kind,
            "champion_params": self.champion_params,
            "threshold": self.threshold,
            "created_at": self.created_at,
        }


@dataclass
class TrainResult:
    bundle: ModelBundle
    manifest: RunManifest
    config: dict
    champion_validation: EvalMetrics
    test_metrics: EvalMetrics
    threshold_warning: bool
    grid_tables: dict[str, list[GridCell]]
    best_cells: dict[str, GridCell]
    train_indices: np.ndarray
    test_indices: np.ndarray
    train_scaled: Dataset
    test_scaled: Dataset


def _policy_from_config(config: dict) -> ThresholdPolicy:
    p = config["threshold_policy"]
    if p["name"] == "fixed":
        return ThresholdPolicy.fixed(float(p["value"]))
    return ThresholdPolicy.sensitivity_first(float(p["floor"]))


def run_training(source: str | Path | Dataset, config: dict | None = None) -> TrainResult:
    """The full screening pipeline on a raw labeled dataset.

    Grid search applies SMOTE inside each fold's training portion only; the
    champion is the kind with the best pooled out-of-fold sensitivity, refit
    on the fully resampled training partition and evaluated once on the
    untouched test partition.
    """

    config = resolve_config(config if isinstance(config, dict) else None)
    seed = int(config["seed"])
    schema = ckd_schema()

    if isinstance(source, Dataset):
        raw = source
    else:
        raw = load_csv(source, schema)
    ds_digest = dataset_digest(source)

    imputed = impute_group_mean(raw)
    tr_idx, te_idx = stratified_split_indices(
        imputed.y, float(config["test_fraction"]), seed
    )
    train_part, test_part = imputed.take(tr_idx), imputed.take(te_idx)
    n_test_before = test_part.n_records
    scaler = fit_scaler(train_part)
    train_scaled = apply_scaler(train_part, scaler)
    test_scaled = apply_scaler(test_part, scaler)

    policy = _policy_from_config(config)
    smote_cfg = None
    if config["smote"]["enabled"]:
        smote_cfg = ResampleConfig(
            k_neighbors=int(config["smote"]["k_neighbors"]),
            target_ratio=float(config["smote"]["target_ratio"]),
            seed=seed,
        )

    grid_tables: dict[str, list[GridCell]] = {}
    best_cells: dict[str, GridCell] = {}
    candidates: list[tuple[str, EvalMetrics]] = []
    for kind in config["kinds"]:
        grid = HyperGrid(
            axes=config["grids"][kind],
            cv_folds=int(config["cv_folds"]),
            selection_metric=config["selection_metric"],
        )
        best_params, table = grid_search(
            kind, grid, train_scaled, seed, policy, smote_cfg
        )
        grid_tables[kind] = table
        best = next(c for c in table if c.params == best_params)
        best_cells[kind] = best
        choice = choose_threshold(best.oof_scores, best.oof_labels, policy)
        candidates.append(
            (kind, evaluate(best.oof_scores, best.oof_labels, choice.threshold))
        )

    champion_kind, champion_val = select_model(candidates)
    champion_params = best_cells[champion_kind].params
    choice = choose_threshold(
        best_cells[champion_kind].oof_scores,
        best_cells[champion_kind].oof_labels,
        policy,
    )

    final_train = train_scaled
    if smote_cfg is not None:
        final_train = smote_nc(train_scaled, smote_cfg)
    model = train(champion_kind, final_train, champion_params, seed)

    assert test_scaled.n_records == n_test_before, "test partition was altered"
    test_scores = model.predict_batch(test_scaled.X)
    test_metrics = evaluate(test_scores, np.asarray(test_scaled.y), choice.threshold)

    manifest = RunManifest(
        config_digest=config_digest(config),
        seed=seed,
        dataset_digest=ds_digest,
        schema_version=SCHEMA_VERSION,
        schema_hash=schema_hash(schema),
        champion_kind=champion_kind,
        champion_params=champion_params,
        threshold=choice.threshold,
        created_at=datetime.now(timezone.utc).isoformat(),
    )
    bundle = ModelBundle(
        kind=champion_kind,
        model=model,
        schema=schema,
        scaler=scaler,
        threshold=choice.threshold,
        manifest_digest=manifest.digest(),
    )
    return TrainResult(
        bundle=bundle,
        manifest=manifest,
        config=config,
        champion_validation=champion_val,
        test_metrics=test_metrics,
        threshold_warning=choice.warning,
        grid_tables=grid_tables,
        best_cells=best_cells,
        train_indices=tr_idx,
        test_indices=te_idx,
        train_scaled=train_scaled,
        test_scaled=test_scaled,
    )


def report_dict(result: TrainResult) -> dict:
    return {
        "manifest_digest": result.manifest.digest(),
        "config": result.config,
        "dataset_digest": result.manifest.dataset_digest,
        "split": {
            "train_indices": [int(i) for i in result.train_indices],
            "test_indices": [int(i) for i in result.test_indices],
        },
        "scaler": result.bundle.scaler.to_dict(),
        "grid_table": {
            kind: [c.to_dict() for c in cells]
            for kind, cells in result.grid_tables.items()
        },
        "champion": {
            "kind": result.bundle.kind,
            "params": result.manifest.champion_params,
            "validation": result.champion_validation.to_dict(),
        },
        "threshold": {
            "value": result.bundle.threshold,
            "policy": result.config["threshold_policy"],
            "floor_warning": result.threshold_warning,
        },
        "test_metrics": result.test_metrics.to_dict(),
    }


def report_text(result: TrainResult) -> str:
    lines = [
        "MODEL TRAINING REPORT",
        f"manifest digest : {result.manifest.digest()}",
        f"dataset digest  : {result.manifest.dataset_digest}",
        "",
        "grid search (cross-validated means)",
        f"{'kind':<10} {'params':<52} {'sens':<7} {'spec':<7} rocauc",
    ]
    for kind, cells in result.grid_tables.items():
        for c in cells:
            lines.append(
                f"{kind:<10} {json.dumps(c.params, sort_keys=True):<52} "
                f"{c.mean_sensitivity:<7.3f} {c.mean_specificity:<7.3f} {c.mean_rocauc:.3f}"
            )
    v = result.champion_validation
    t = result.test_metrics
    lines += [
        "",
        f"champion: {result.bundle.kind} {json.dumps(result.manifest.champion_params, sort_keys=True)}",
        f"validation (pooled out-of-fold): sensitivity={v.sensitivity:.3f} "
        f"specificity={v.specificity:.3f} rocauc={v.rocauc:.3f}",
        f"operating threshold: {result.bundle.threshold:.6f}"
        + (" (specificity floor unattainable)" if result.threshold_warning else ""),
        f"test: sensitivity={t.sensitivity:.3f} specificity={t.specificity:.3f} "
        f"rocauc={t.rocauc:.3f} "
        f"(tp={t.counts.tp} fp={t.counts.fp} tn={t.counts.tn} fn={t.counts.fn})",
    ]
    return "\n".join(lines) + "\n"
