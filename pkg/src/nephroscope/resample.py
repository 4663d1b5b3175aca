"""SMOTE-NC oversampling for the mixed continuous/binary training table."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import DataError, Dataset


@dataclass(frozen=True)
class ResampleConfig:
    k_neighbors: int = 5
    target_ratio: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.k_neighbors < 1:
            raise ValueError("k_neighbors must be >= 1")
        if not 0.0 < self.target_ratio <= 1.0:
            raise ValueError("target_ratio must be in (0, 1]")


def _nominal_penalty(minority_cont: np.ndarray) -> float:
    """Squared-distance penalty per mismatched categorical: the median of the
    minority class's continuous-feature standard deviations."""

    if minority_cont.shape[1] == 0:
        return 1.0
    stds = minority_cont.std(axis=0, ddof=0)
    return float(np.median(stds))


@dataclass
class SynthesisDetail:
    """Synthetic rows plus the base/neighbor provenance behind each one."""

    rows: np.ndarray  # (n_synthetic, n_features)
    base_rows: np.ndarray  # minority-local index of each sample's base
    neighbor_rows: np.ndarray  # minority-local index of the chosen neighbor
    knn: np.ndarray  # (n_minority, k) neighbor table
    minority_indices: np.ndarray  # dataset rows of the minority class
    gaps: np.ndarray = field(repr=False, default=None)


def synthesize_minority(
    train: Dataset, cfg: ResampleConfig, n_synthetic: int
) -> SynthesisDetail:
    """Generate synthetic minority records.

    Each record takes a random minority base x and one of its k nearest
    minority neighbors n; continuous features are x + u*(n - x) with a single
    u ~ U[0,1] per record, categorical features are the majority vote among
    the k neighbors with ties broken by x. Distances are squared Euclidean
    over continuous features plus med(std of continuous)^2 per mismatched
    categorical.
    """

    if train.y is None:
        raise DataError("synthesis requires labels")
    neg, pos = train.class_counts()
    if neg == 0 or pos == 0:
        raise DataError("synthesis requires both classes present")
    minority_cls = 1 if pos <= neg else 0
    n_min = min(pos, neg)
    if cfg.k_neighbors >= n_min:
        raise DataError(
            f"k_neighbors={cfg.k_neighbors} must be < minority count {n_min}"
        )

    cont_idx = train.schema.numeric_indices
    cat_idx = train.schema.binary_indices
    min_rows = np.flatnonzero(train.y == minority_cls)
    M_cont = train.X[min_rows][:, cont_idx]
    M_cat = train.X[min_rows][:, cat_idx]

    med = _nominal_penalty(M_cont)
    # Pairwise squared distances within the minority class.
    diff = M_cont[:, None, :] - M_cont[None, :, :]
    d2 = np.einsum("ijk,ijk->ij", diff, diff)
    if cat_idx.size:
        mismatches = (M_cat[:, None, :] != M_cat[None, :, :]).sum(axis=2)
        d2 = d2 + mismatches * med * med
    np.fill_diagonal(d2, np.inf)
    # k nearest per base row, ordered by (distance, index) for determinism.
    order = np.argsort(d2, axis=1, kind="stable")
    knn = order[:, : cfg.k_neighbors]

    rng = np.random.default_rng(cfg.seed)
    base_choice = rng.integers(0, len(min_rows), size=n_synthetic)
    neigh_choice = rng.integers(0, cfg.k_neighbors, size=n_synthetic)
    gaps = rng.random(n_synthetic)

    d = train.schema.n_features
    synth = np.empty((n_synthetic, d), dtype=float)
    chosen = np.empty(n_synthetic, dtype=np.int64)
    for s in range(n_synthetic):
        b = base_choice[s]
        neighbors = knn[b]
        nb = neighbors[neigh_choice[s]]
        chosen[s] = nb
        row = np.empty(d, dtype=float)
        row[cont_idx] = M_cont[b] + gaps[s] * (M_cont[nb] - M_cont[b])
        if cat_idx.size:
            votes = M_cat[neighbors]
            ones = votes.sum(axis=0)
            zeros = cfg.k_neighbors - ones
            cat = np.where(ones > zeros, 1.0, np.where(ones < zeros, 0.0, M_cat[b]))
            row[cat_idx] = cat
        synth[s] = row
    return SynthesisDetail(
        rows=synth,
        base_rows=base_choice,
        neighbor_rows=chosen,
        knn=knn,
        minority_indices=min_rows,
        gaps=gaps,
    )


def smote_nc(train: Dataset, cfg: ResampleConfig) -> Dataset:
    """Balance the minority class up to target_ratio of the majority.

    Originals are kept unchanged and synthetics appended after them.
    """

    if train.provenance != "scaled":
        raise DataError(f"smote_nc expects scaled data, got {train.provenance}")
    if train.y is None:
        raise DataError("smote_nc requires labels")
    neg, pos = train.class_counts()
    if neg == 0 or pos == 0:
        raise DataError("smote_nc requires both classes present")
    minority_cls = 1 if pos <= neg else 0
    n_min = min(pos, neg)
    n_maj = max(pos, neg)
    n_synthetic = max(int(round(cfg.target_ratio * n_maj)) - n_min, 0)
    if n_synthetic == 0:
        if cfg.k_neighbors >= n_min:
            raise DataError(
                f"k_neighbors={cfg.k_neighbors} must be < minority count {n_min}"
            )
        return Dataset(
            schema=train.schema,
            X=train.X.copy(),
            y=train.y.copy(),
            provenance="resampled",
            scaler=train.scaler,
            n_original=train.n_records,
        )
    detail = synthesize_minority(train, cfg, n_synthetic)
    X = np.vstack([train.X, detail.rows])
    y = np.concatenate(
        [train.y, np.full(n_synthetic, minority_cls, dtype=train.y.dtype)]
    )
    return Dataset(
        schema=train.schema,
        X=X,
        y=y,
        provenance="resampled",
        scaler=train.scaler,
        n_original=train.n_records,
    )
