"""Candidate classifiers and their single-file persistence format."""

from __future__ import annotations

import hashlib
import json
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import Dataset, ScalerParams
from .schema import FeatureSchema, PatientRecord, SchemaError
from .trees import (
    FlatTree,
    TreeNode,
    fit_classification_tree,
    fit_regression_tree,
)

MODEL_KINDS = ("logistic", "tree", "forest", "boosted")
FORMAT_VERSION = 1

NO_PARALLEL_ENV = "NEPHROSCOPE_NO_PARALLEL"


class ModelError(ValueError):
    pass


def _sigmoid(z):
    return 1.0 / (1.0 + np.exp(-np.clip(z, -500, 500)))


def _require_finite(X: np.ndarray):
    if not np.isfinite(X).all():
        raise ModelError("non-finite feature values in training data")


@dataclass
class LogisticModel:
    """L2-penalized logistic regression fit by full-batch gradient descent."""

    weights: np.ndarray
    intercept: float
    l2_penalty: float
    loss_trace: list[float] = field(default_factory=list, repr=False)
    kind: str = "logistic"

    def predict_batch(self, X: np.ndarray) -> np.ndarray:
        return _sigmoid(X @ self.weights + self.intercept)

    def params_dict(self) -> dict:
        return {"l2_penalty": self.l2_penalty}

    def to_dict(self) -> dict:
        return {
            "weights": [float(w) for w in self.weights],
            "intercept": float(self.intercept),
            "l2_penalty": float(self.l2_penalty),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LogisticModel":
        return cls(
            weights=np.asarray(d["weights"], dtype=float),
            intercept=float(d["intercept"]),
            l2_penalty=float(d["l2_penalty"]),
        )


def fit_logistic(
    X: np.ndarray,
    y: np.ndarray,
    l2_penalty: float = 0.01,
    max_iter: int = 10_000,
    tol: float = 1e-8,
) -> LogisticModel:
    _require_finite(X)
    n, d = X.shape
    w = np.zeros(d)
    b = 0.0
    # Gradient Lipschitz bound of the penalized mean log-loss; a 1/L step
    # gives a monotonically non-increasing loss trace.
    A = np.hstack([X, np.ones((n, 1))])
    lip = 0.25 * np.linalg.norm(A, 2) ** 2 / n + l2_penalty
    step = 1.0 / lip
    trace: list[float] = []
    prev = np.inf
    for _ in range(max_iter):
        z = X @ w + b
        p = _sigmoid(z)
        loss = float(
            -np.mean(y * np.log(np.clip(p, 1e-15, 1)) + (1 - y) * np.log(np.clip(1 - p, 1e-15, 1)))
            + 0.5 * l2_penalty * w @ w
        )
        trace.append(loss)
        gw = X.T @ (p - y) / n + l2_penalty * w
        gb = float(np.mean(p - y))
        w -= step * gw
        b -= step * gb
        if abs(prev - loss) < tol:
            break
        prev = loss
    return LogisticModel(weights=w, intercept=b, l2_penalty=l2_penalty, loss_trace=trace)


@dataclass
class TreeModel:
    """Single CART decision tree with class-frequency leaves."""

    root: TreeNode
    max_depth: int | None
    min_samples_leaf: int
    kind: str = "tree"
    _flat: FlatTree | None = field(default=None, repr=False, compare=False)

    def flat(self) -> FlatTree:
        if self._flat is None:
            self._flat = FlatTree.from_node(self.root)
        return self._flat

    def predict_batch(self, X: np.ndarray) -> np.ndarray:
        return self.flat().predict_batch(X)

    def params_dict(self) -> dict:
        return {"max_depth": self.max_depth, "min_samples_leaf": self.min_samples_leaf}

    def to_dict(self) -> dict:
        return {
            "root": self.root.to_dict(),
            "max_depth": self.max_depth,
            "min_samples_leaf": self.min_samples_leaf,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TreeModel":
        return cls(
            root=TreeNode.from_dict(d["root"]),
            max_depth=d["max_depth"],
            min_samples_leaf=d["min_samples_leaf"],
        )


@dataclass
class ForestModel:
    """Bagged CART trees; probability is the mean of per-tree leaf rates."""

    trees: list[TreeNode]
    max_depth: int | None
    min_samples_leaf: int
    max_features: int | None
    bootstrap: bool
    seed: int
    kind: str = "forest"
    _flats: list[FlatTree] | None = field(default=None, repr=False, compare=False)

    @property
    def n_trees(self) -> int:
        return len(self.trees)

    @property
    def oob_available(self) -> bool:
        # out-of-bag rows exist only when trees were fit on bootstrap samples
        return self.bootstrap

    def flats(self) -> list[FlatTree]:
        if self._flats is None:
            self._flats = [FlatTree.from_node(t) for t in self.trees]
        return self._flats

    def predict_batch(self, X: np.ndarray) -> np.ndarray:
        acc = np.zeros(X.shape[0])
        for ft in self.flats():
            acc += ft.predict_batch(X)
        return acc / self.n_trees

    def params_dict(self) -> dict:
        return {
            "n_trees": self.n_trees,
            "max_depth": self.max_depth,
            "min_samples_leaf": self.min_samples_leaf,
            "max_features": self.max_features,
            "bootstrap": self.bootstrap,
        }

    def to_dict(self) -> dict:
        return {
            "trees": [t.to_dict() for t in self.trees],
            "max_depth": self.max_depth,
            "min_samples_leaf": self.min_samples_leaf,
            "max_features": self.max_features,
            "bootstrap": self.bootstrap,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ForestModel":
        return cls(
            trees=[TreeNode.from_dict(t) for t in d["trees"]],
            max_depth=d["max_depth"],
            min_samples_leaf=d["min_samples_leaf"],
            max_features=d["max_features"],
            bootstrap=d["bootstrap"],
            seed=d["seed"],
        )


@dataclass
class BoostedModel:
    """Log-loss gradient-boosted regression trees over a base log-odds score."""

    trees: list[TreeNode]
    learning_rate: float
    base_score: float
    max_depth: int
    min_samples_leaf: int
    kind: str = "boosted"
    _flats: list[FlatTree] | None = field(default=None, repr=False, compare=False)

    @property
    def n_rounds(self) -> int:
        return len(self.trees)

    def flats(self) -> list[FlatTree]:
        if self._flats is None:
            self._flats = [FlatTree.from_node(t) for t in self.trees]
        return self._flats

    def decision_batch(self, X: np.ndarray) -> np.ndarray:
        z = np.full(X.shape[0], self.base_score)
        for ft in self.flats():
            z += self.learning_rate * ft.predict_batch(X)
        return z

    def predict_batch(self, X: np.ndarray) -> np.ndarray:
        return _sigmoid(self.decision_batch(X))

    def params_dict(self) -> dict:
        return {
            "n_rounds": self.n_rounds,
            "learning_rate": self.learning_rate,
            "max_depth": self.max_depth,
            "min_samples_leaf": self.min_samples_leaf,
        }

    def to_dict(self) -> dict:
        return {
            "trees": [t.to_dict() for t in self.trees],
            "learning_rate": float(self.learning_rate),
            "base_score": float(self.base_score),
            "max_depth": self.max_depth,
            "min_samples_leaf": self.min_samples_leaf,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BoostedModel":
        return cls(
            trees=[TreeNode.from_dict(t) for t in d["trees"]],
            learning_rate=float(d["learning_rate"]),
            base_score=float(d["base_score"]),
            max_depth=d["max_depth"],
            min_samples_leaf=d["min_samples_leaf"],
        )


Model = LogisticModel | TreeModel | ForestModel | BoostedModel


def _parallel_allowed() -> bool:
    return os.environ.get(NO_PARALLEL_ENV, "") != "1"


def fit_forest(
    X: np.ndarray,
    y: np.ndarray,
    n_trees: int = 300,
    max_depth: int | None = None,
    min_samples_leaf: int = 2,
    max_features: int | None = 5,
    bootstrap: bool = True,
    seed: int = 0,
) -> ForestModel:
    _require_finite(X)
    n = X.shape[0]

    def build(t: int) -> TreeNode:
        rng = np.random.default_rng(seed + t)
        rows = rng.integers(0, n, size=n) if bootstrap else np.arange(n)
        return fit_classification_tree(
            X[rows],
            y[rows],
            max_depth=max_depth,
            min_samples_leaf=min_samples_leaf,
            max_features=max_features,
            rng=rng,
        )

    if _parallel_allowed() and n_trees >= 8:
        with ThreadPoolExecutor(max_workers=min(4, os.cpu_count() or 1)) as ex:
            trees = list(ex.map(build, range(n_trees)))
    else:
        trees = [build(t) for t in range(n_trees)]
    return ForestModel(
        trees=trees,
        max_depth=max_depth,
        min_samples_leaf=min_samples_leaf,
        max_features=max_features,
        bootstrap=bootstrap,
        seed=seed,
    )


def fit_boosted(
    X: np.ndarray,
    y: np.ndarray,
    n_rounds: int = 200,
    learning_rate: float = 0.1,
    max_depth: int = 3,
    min_samples_leaf: int = 1,
) -> BoostedModel:
    _require_finite(X)
    pos = float(y.mean())
    pos = min(max(pos, 1e-6), 1 - 1e-6)
    base = float(np.log(pos / (1 - pos)))
    z = np.full(X.shape[0], base)
    trees: list[TreeNode] = []
    flat = FlatTree
    for _ in range(n_rounds):
        p = _sigmoid(z)
        resid = y - p
        hess = np.maximum(p * (1 - p), 1e-12)

        def newton_value(rows):
            return resid[rows].sum() / hess[rows].sum()

        tree = fit_regression_tree(
            X,
            resid,
            leaf_value=newton_value,
            max_depth=max_depth,
            min_samples_leaf=min_samples_leaf,
        )
        trees.append(tree)
        z = z + learning_rate * flat.from_node(tree).predict_batch(X)
    return BoostedModel(
        trees=trees,
        learning_rate=learning_rate,
        base_score=base,
        max_depth=max_depth,
        min_samples_leaf=min_samples_leaf,
    )


def train(kind: str, train_ds: Dataset, params: dict | None, seed: int) -> Model:
    """Fit one of the candidate classifiers on a scaled/resampled dataset."""

    if kind not in MODEL_KINDS:
        raise ModelError(f"unknown model kind {kind!r}")
    if train_ds.provenance not in ("scaled", "resampled"):
        raise ModelError(
            f"training expects scaled or resampled data, got {train_ds.provenance}"
        )
    if train_ds.y is None or train_ds.n_records == 0:
        raise ModelError("training requires a non-empty labeled dataset")
    neg, pos = train_ds.class_counts()
    if neg == 0 or pos == 0:
        warnings.warn(f"single-class training set; {kind} degenerates", stacklevel=2)
    params = dict(params or {})
    X = np.asarray(train_ds.X, dtype=float)
    y = np.asarray(train_ds.y, dtype=float)
    if kind == "logistic":
        return fit_logistic(X, y, **params)
    if kind == "tree":
        tree = fit_classification_tree(
            X,
            y.astype(np.int64),
            max_depth=params.get("max_depth"),
            min_samples_leaf=params.get("min_samples_leaf", 1),
        )
        return TreeModel(
            root=tree,
            max_depth=params.get("max_depth"),
            min_samples_leaf=params.get("min_samples_leaf", 1),
        )
    if kind == "forest":
        return fit_forest(X, y.astype(np.int64), seed=seed, **params)
    return fit_boosted(X, y, **params)


def predict_proba(model: Model, record: PatientRecord | np.ndarray) -> float:
    """P(CKD) for one fully-imputed, scaled record."""

    values = record.values if isinstance(record, PatientRecord) else np.asarray(record)
    values = np.asarray(values, dtype=float)
    if values.ndim != 1:
        raise SchemaError("predict_proba expects a single record")
    expected = _model_width(model)
    if expected is not None and values.size != expected:
        raise SchemaError(
            f"record has {values.size} features, model expects {expected}"
        )
    if np.isnan(values).any():
        raise ModelError("record has missing values; impute before prediction")
    return float(model.predict_batch(values[None, :])[0])


def _model_width(model: Model) -> int | None:
    if isinstance(model, LogisticModel):
        return model.weights.size
    return None


# ---------------------------------------------------------------------------
# Persistence: one self-describing JSON file, bit-exact round trip.


@dataclass
class ModelBundle:
    """Everything needed to serve a trained model on raw-unit inputs."""

    kind: str
    model: Model
    schema: FeatureSchema
    scaler: ScalerParams
    threshold: float
    manifest_digest: str = ""

    def predict_raw(self, raw_rows: np.ndarray) -> np.ndarray:
        from .data import scale_row

        raw_rows = np.atleast_2d(np.asarray(raw_rows, dtype=float))
        scaled = np.vstack([scale_row(r, self.schema, self.scaler) for r in raw_rows])
        return self.model.predict_batch(scaled)


_MODEL_CLASSES = {
    "logistic": LogisticModel,
    "tree": TreeModel,
    "forest": ForestModel,
    "boosted": BoostedModel,
}


def schema_hash(schema: FeatureSchema) -> str:
    blob = json.dumps(schema.to_dict(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def save_model(path: str | Path, bundle: ModelBundle) -> Path:
    doc = {
        "format_version": FORMAT_VERSION,
        "kind": bundle.kind,
        "schema": bundle.schema.to_dict(),
        "schema_hash": schema_hash(bundle.schema),
        "scaler": bundle.scaler.to_dict(),
        "threshold": float(bundle.threshold),
        "manifest_digest": bundle.manifest_digest,
        "model": bundle.model.to_dict(),
    }
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(json.dumps(doc, sort_keys=True, separators=(",", ":")))
    tmp.replace(path)
    return path


def load_model(path: str | Path) -> ModelBundle:
    doc = json.loads(Path(path).read_text())
    if doc.get("format_version") != FORMAT_VERSION:
        raise ModelError(f"unsupported model format version {doc.get('format_version')}")
    kind = doc["kind"]
    if kind not in _MODEL_CLASSES:
        raise ModelError(f"unknown model kind {kind!r} in file")
    schema = FeatureSchema.from_dict(doc["schema"])
    if schema_hash(schema) != doc["schema_hash"]:
        raise ModelError("schema hash mismatch in model file")
    return ModelBundle(
        kind=kind,
        model=_MODEL_CLASSES[kind].from_dict(doc["model"]),
        schema=schema,
        scaler=ScalerParams.from_dict(doc["scaler"]),
        threshold=float(doc["threshold"]),
        manifest_digest=doc.get("manifest_digest", ""),
    )
