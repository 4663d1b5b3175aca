"""Distance-based local explanations: prototypes and counterfactual lookup."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .models import Model
from .schema import CLASS_NAMES, FeatureSchema


class NeighborError(ValueError):
    pass


@dataclass(frozen=True)
class DistanceConfig:
    numeric_scale: str = "mad"  # "mad" | "std"
    categorical_mismatch_cost: float = 1.0
    norm: str = "l1"  # "l1" | "l2"

    def __post_init__(self):
        if self.numeric_scale not in ("mad", "std"):
            raise NeighborError(f"unknown numeric_scale {self.numeric_scale!r}")
        if self.norm not in ("l1", "l2"):
            raise NeighborError(f"unknown norm {self.norm!r}")


@dataclass(frozen=True)
class DatasetStats:
    """Per-numeric-feature scale denominators from a reference dataset."""

    numeric_indices: np.ndarray
    scales: np.ndarray
    zero_scale_features: tuple[str, ...]  # fell back to 1.0


def dataset_stats(ds: Dataset, cfg: DistanceConfig) -> DatasetStats:
    idx = ds.schema.numeric_indices
    cols = ds.X[:, idx]
    if cfg.numeric_scale == "mad":
        med = np.median(cols, axis=0)
        scales = np.median(np.abs(cols - med), axis=0)
    else:
        scales = cols.std(axis=0, ddof=0)
    zero = scales <= 0.0
    names = tuple(ds.schema.names[i] for i, z in zip(idx, zero) if z)
    scales = np.where(zero, 1.0, scales)
    return DatasetStats(numeric_indices=idx, scales=scales, zero_scale_features=names)


def distance(a, b, cfg: DistanceConfig, stats: DatasetStats, schema: FeatureSchema) -> float:
    """Scaled numeric difference plus a flat cost per differing categorical."""

    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    num = stats.numeric_indices
    diffs = np.abs(a[num] - b[num]) / stats.scales
    cat = schema.binary_indices
    mismatches = float(np.sum(a[cat] != b[cat]))
    if cfg.norm == "l1":
        return float(diffs.sum() + cfg.categorical_mismatch_cost * mismatches)
    return float(np.sqrt(np.sum(diffs**2) + cfg.categorical_mismatch_cost * mismatches))


def _distances_to(
    ref: np.ndarray, X: np.ndarray, cfg: DistanceConfig, stats: DatasetStats, schema: FeatureSchema
) -> np.ndarray:
    num = stats.numeric_indices
    cat = schema.binary_indices
    diffs = np.abs(X[:, num] - ref[num]) / stats.scales
    mism = (X[:, cat] != ref[cat]).sum(axis=1).astype(float)
    if cfg.norm == "l1":
        return diffs.sum(axis=1) + cfg.categorical_mismatch_cost * mism
    return np.sqrt((diffs**2).sum(axis=1) + cfg.categorical_mismatch_cost * mism)


def pairwise_distances(
    X: np.ndarray, cfg: DistanceConfig, stats: DatasetStats, schema: FeatureSchema
) -> np.ndarray:
    n = X.shape[0]
    out = np.zeros((n, n))
    for i in range(n):
        out[i] = _distances_to(X[i], X, cfg, stats, schema)
    return out


@dataclass(frozen=True)
class PrototypeMember:
    index: int
    values: np.ndarray
    covered_new: int
    predicted_class: str


@dataclass(frozen=True)
class PrototypeSet:
    members: tuple[PrototypeMember, ...]
    epsilon: float
    objective_trace: tuple[float, ...]


def default_epsilon(
    ds: Dataset,
    cfg: DistanceConfig,
    stats: DatasetStats,
    percentile: float = 15.0,
    seed: int = 0,
    max_rows: int = 300,
) -> float:
    """The chosen percentile of pairwise distances on a seeded subsample."""

    X = ds.X
    if X.shape[0] > max_rows:
        rng = np.random.default_rng(seed)
        X = X[np.sort(rng.choice(X.shape[0], size=max_rows, replace=False))]
    d = pairwise_distances(X, cfg, stats, ds.schema)
    upper = d[np.triu_indices(X.shape[0], k=1)]
    return float(np.percentile(upper, percentile))


def select_prototypes(
    ds: Dataset,
    model: Model,
    m: int,
    epsilon: float | None = None,
    cfg: DistanceConfig | None = None,
    threshold: float = 0.5,
    other_class_penalty: float = 1.0,
    seed: int = 0,
) -> PrototypeSet:
    """Greedy set-cover prototype selection.

    Each step adds the record whose epsilon-ball covers the most not-yet-
    covered records of its own (model-predicted) class, minus a unit penalty
    per other-class record in the ball. Stops at m prototypes or when no
    candidate has positive gain. Ties go to the lowest record index.
    """

    if ds.n_records == 0:
        raise NeighborError("empty dataset")
    if m < 1:
        raise NeighborError("m must be >= 1")
    cfg = cfg or DistanceConfig()
    stats = dataset_stats(ds, cfg)
    if epsilon is None:
        epsilon = default_epsilon(ds, cfg, stats, seed=seed)
    if epsilon <= 0:
        raise NeighborError("epsilon must be > 0")

    X = ds.X
    n = X.shape[0]
    classes = (model.predict_batch(X) >= threshold).astype(np.int8)
    ball = pairwise_distances(X, cfg, stats, ds.schema) <= epsilon
    same = classes[:, None] == classes[None, :]
    cover_same = ball & same  # [candidate, record]
    penalty = other_class_penalty * (ball & ~same).sum(axis=1).astype(float)

    covered = np.zeros(n, dtype=bool)
    chosen: list[PrototypeMember] = []
    trace: list[float] = []
    for _ in range(m):
        gains = cover_same[:, ~covered].sum(axis=1).astype(float) - penalty
        if chosen:
            gains[[c.index for c in chosen]] = -np.inf
        best = int(np.argmax(gains))  # argmax takes the lowest index on ties
        if gains[best] <= 0:
            break
        newly = cover_same[best] & ~covered
        chosen.append(
            PrototypeMember(
                index=best,
                values=X[best].copy(),
                covered_new=int(newly.sum()),
                predicted_class=CLASS_NAMES[classes[best]],
            )
        )
        trace.append(float(gains[best]))
        covered |= cover_same[best]
    return PrototypeSet(members=tuple(chosen), epsilon=float(epsilon), objective_trace=tuple(trace))


@dataclass(frozen=True)
class CounterfactualPair:
    reference: np.ndarray
    counterfactual: np.ndarray
    counterfactual_index: int
    distance: float
    reference_prediction: str
    counterfactual_prediction: str
    changed_features: tuple[tuple[str, float, float], ...]  # (name, ref, cf)


def find_counterfactual(
    reference,
    pool: Dataset,
    model: Model,
    threshold: float,
    cfg: DistanceConfig | None = None,
) -> CounterfactualPair | None:
    """Nearest pool record whose thresholded prediction differs.

    Returns None when the pool holds no opposite-prediction record.
    """

    if pool.n_records == 0:
        raise NeighborError("empty pool")
    cfg = cfg or DistanceConfig()
    stats = dataset_stats(pool, cfg)
    ref = np.asarray(reference, dtype=float)
    ref_cls = int(model.predict_batch(ref[None, :])[0] >= threshold)
    pool_cls = (model.predict_batch(pool.X) >= threshold).astype(np.int8)
    opposite = np.flatnonzero(pool_cls != ref_cls)
    if opposite.size == 0:
        return None
    d = _distances_to(ref, pool.X[opposite], cfg, stats, pool.schema)
    pick = opposite[int(np.argmin(d))]
    cf = pool.X[pick]
    changed = tuple(
        (name, float(ref[j]), float(cf[j]))
        for j, name in enumerate(pool.schema.names)
        if ref[j] != cf[j]
    )
    return CounterfactualPair(
        reference=ref.copy(),
        counterfactual=cf.copy(),
        counterfactual_index=int(pick),
        distance=float(d.min()),
        reference_prediction=CLASS_NAMES[ref_cls],
        counterfactual_prediction=CLASS_NAMES[1 - ref_cls],
        changed_features=changed,
    )
