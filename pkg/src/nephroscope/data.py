"""CSV ingestion, group-mean imputation, min-max scaling, stratified splits."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .schema import (
    IMPUTATION_GROUPS,
    CLASS_NAMES,
    FeatureSchema,
    PatientRecord,
    SchemaError,
)

PROVENANCES = ("raw", "imputed", "scaled", "resampled")

_MISSING_TOKENS = {"", "na", "nan", "n/a", "null"}
_LABEL_TOKENS = {"no": 0, "yes": 1, "0": 0, "1": 1, "nockd": 0, "ckd": 1}


class DataError(ValueError):
    """Unrecoverable problem in input data."""


class ImputationError(DataError):
    """A comorbidity group has no donors for a missing value."""


class DegenerateFeatureError(DataError):
    """A numeric feature is constant and cannot be min-max scaled."""


@dataclass(frozen=True)
class ValidationWarningEntry:
    row: int
    column: str
    message: str


@dataclass(frozen=True)
class ScalerParams:
    """Per-numeric-feature (min, max) for min-max normalization to [0, 1]."""

    feature_names: tuple[str, ...]
    mins: np.ndarray
    maxs: np.ndarray

    def __post_init__(self):
        if np.any(self.maxs <= self.mins):
            bad = [n for n, lo, hi in zip(self.feature_names, self.mins, self.maxs) if hi <= lo]
            raise DegenerateFeatureError(f"constant numeric feature(s): {bad}")

    def scale_value(self, name: str, v: float) -> float:
        i = self.feature_names.index(name)
        return (v - self.mins[i]) / (self.maxs[i] - self.mins[i])

    def unscale_value(self, name: str, u: float) -> float:
        i = self.feature_names.index(name)
        return u * (self.maxs[i] - self.mins[i]) + self.mins[i]

    def to_dict(self) -> dict:
        return {
            "feature_names": list(self.feature_names),
            "mins": [float(v) for v in self.mins],
            "maxs": [float(v) for v in self.maxs],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ScalerParams":
        return cls(
            feature_names=tuple(d["feature_names"]),
            mins=np.asarray(d["mins"], dtype=float),
            maxs=np.asarray(d["maxs"], dtype=float),
        )


@dataclass(frozen=True)
class Dataset:
    """An immutable table of patient records with provenance tracking.

    ``X`` is (n_records, n_features) float64 in schema order; NaN marks a
    missing cell. ``y`` is 0/1 per record or None for unlabeled data.
    """

    schema: FeatureSchema
    X: np.ndarray
    y: np.ndarray | None
    provenance: str = "raw"
    scaler: ScalerParams | None = None
    n_original: int | None = None  # set by resampling; originals come first
    warnings: tuple[ValidationWarningEntry, ...] = field(default=())

    def __post_init__(self):
        if self.provenance not in PROVENANCES:
            raise DataError(f"unknown provenance {self.provenance!r}")
        if self.X.ndim != 2 or self.X.shape[1] != self.schema.n_features:
            raise SchemaError(
                f"X has shape {self.X.shape}, schema has {self.schema.n_features} features"
            )
        self.X.setflags(write=False)
        if self.y is not None:
            if len(self.y) != len(self.X):
                raise DataError("label array length does not match record count")
            self.y.setflags(write=False)

    @property
    def n_records(self) -> int:
        return self.X.shape[0]

    def class_counts(self) -> tuple[int, int]:
        """(negatives, positives); requires labels."""
        if self.y is None:
            raise DataError("dataset has no labels")
        pos = int(np.sum(self.y == 1))
        return len(self.y) - pos, pos

    def positive_fraction(self) -> float:
        neg, pos = self.class_counts()
        return pos / (neg + pos)

    def record(self, i: int) -> PatientRecord:
        label = int(self.y[i]) if self.y is not None else None
        return PatientRecord(values=self.X[i].copy(), label=label, schema=self.schema)

    def with_values(self, X: np.ndarray, **changes) -> "Dataset":
        return replace(self, X=X, **changes)

    def take(self, rows: np.ndarray) -> "Dataset":
        return Dataset(
            schema=self.schema,
            X=self.X[rows].copy(),
            y=self.y[rows].copy() if self.y is not None else None,
            provenance=self.provenance,
            scaler=self.scaler,
        )


def _parse_cell(raw: str, colname: str, is_binary: bool, row_no: int) -> float:
    token = raw.strip()
    if token.lower() in _MISSING_TOKENS:
        return float("nan")
    try:
        v = float(token)
    except ValueError:
        raise DataError(f"row {row_no}: column {colname!r} has non-numeric value {raw!r}")
    if is_binary and v not in (0.0, 1.0):
        raise DataError(
            f"row {row_no}: column {colname!r} must be 0 or 1, got {raw!r}"
        )
    return v


def _parse_label(raw: str, row_no: int, target: str) -> int:
    token = raw.strip().lower()
    if token not in _LABEL_TOKENS:
        raise DataError(f"row {row_no}: column {target!r} must be yes/no or 0/1, got {raw!r}")
    return _LABEL_TOKENS[token]


def load_csv(path: str | Path, schema: FeatureSchema) -> Dataset:
    """Read a UTF-8 CSV into a raw Dataset.

    Header names must match the schema (case-insensitive, any column order).
    Empty cells and "NA" are recorded as missing; missing is tolerated only
    for the group-imputed numeric features. Out-of-range numeric values are
    collected as warnings, never errors.
    """

    path = Path(path)
    if not path.exists():
        raise DataError(f"file not found: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file (no header)")
        lower_to_pos = {h.strip().lower(): i for i, h in enumerate(header)}
        col_pos: list[int] = []
        for spec in schema.specs:
            key = spec.name.lower()
            if key not in lower_to_pos:
                raise DataError(f"{path}: missing column {spec.name!r}")
            col_pos.append(lower_to_pos[key])
        target_key = schema.target_name.lower()
        label_pos = lower_to_pos.get(target_key)

        known = {s.name.lower() for s in schema.specs} | {target_key}
        unknown = [h for h in header if h.strip().lower() not in known]
        if unknown:
            raise DataError(f"{path}: unknown column(s) {unknown}")

        rows: list[list[float]] = []
        labels: list[int] = []
        warnings: list[ValidationWarningEntry] = []
        may_be_missing = set(IMPUTATION_GROUPS)
        for row_no, row in enumerate(reader, start=2):
            if not any(cell.strip() for cell in row):
                continue
            vals = []
            for spec, pos in zip(schema.specs, col_pos):
                v = _parse_cell(row[pos], spec.name, spec.is_binary, row_no)
                if np.isnan(v):
                    if spec.is_binary:
                        raise DataError(
                            f"row {row_no}: binary column {spec.name!r} may not be missing"
                        )
                    if spec.name not in may_be_missing:
                        raise DataError(
                            f"row {row_no}: column {spec.name!r} may not be missing"
                        )
                elif spec.allowed_range is not None:
                    lo, hi = spec.allowed_range
                    if not (lo <= v <= hi):
                        warnings.append(
                            ValidationWarningEntry(
                                row=row_no,
                                column=spec.name,
                                message=f"value {v} outside plausible range [{lo}, {hi}]",
                            )
                        )
                vals.append(v)
            rows.append(vals)
            if label_pos is not None:
                labels.append(_parse_label(row[label_pos], row_no, schema.target_name))

    X = np.asarray(rows, dtype=float).reshape(len(rows), schema.n_features)
    y = np.asarray(labels, dtype=np.int8) if label_pos is not None else None
    return Dataset(schema=schema, X=X, y=y, provenance="raw", warnings=tuple(warnings))


def impute_group_mean(ds: Dataset) -> Dataset:
    """Fill missing cells with the mean of the record's comorbidity group.

    HbA1C donors share the record's DM value; TG donors share its DLP value.
    Non-missing cells are never altered; the result is idempotent.
    """

    if ds.provenance != "raw":
        raise DataError(f"impute expects raw data, got {ds.provenance}")
    X = ds.X.copy()
    for feat, group_feat in IMPUTATION_GROUPS.items():
        j = ds.schema.index_of(feat)
        g = ds.schema.index_of(group_feat)
        if np.isnan(X[:, g]).any():
            raise DataError(f"grouping feature {group_feat!r} has missing values")
        missing = np.isnan(X[:, j])
        if not missing.any():
            continue
        for gv in (0.0, 1.0):
            in_group = X[:, g] == gv
            need = missing & in_group
            if not need.any():
                continue
            donors = X[in_group & ~missing, j]
            if donors.size == 0:
                raise ImputationError(
                    f"no donors for {feat!r} in group {group_feat}={int(gv)}"
                )
            X[need, j] = donors.mean()
    leftover = np.isnan(X)
    if leftover.any():
        cols = [ds.schema.names[j] for j in np.unique(np.where(leftover)[1])]
        raise DataError(f"missing values remain after imputation in {cols}")
    return ds.with_values(X, provenance="imputed")


def fit_scaler(ds: Dataset) -> ScalerParams:
    """Per-numeric-feature observed (min, max). Fit on training data only."""

    if ds.provenance != "imputed":
        raise DataError(f"fit_scaler expects imputed data, got {ds.provenance}")
    idx = ds.schema.numeric_indices
    names = tuple(ds.schema.names[i] for i in idx)
    mins = ds.X[:, idx].min(axis=0)
    maxs = ds.X[:, idx].max(axis=0)
    return ScalerParams(feature_names=names, mins=mins, maxs=maxs)


def apply_scaler(ds: Dataset, scaler: ScalerParams) -> Dataset:
    """Map numeric features to (v - min) / (max - min); binaries untouched.

    Values outside the fitted range map outside [0, 1] without error.
    """

    idx = ds.schema.numeric_indices
    names = tuple(ds.schema.names[i] for i in idx)
    if names != scaler.feature_names:
        raise SchemaError(
            f"scaler fitted for {scaler.feature_names}, dataset has {names}"
        )
    X = ds.X.copy()
    X[:, idx] = (X[:, idx] - scaler.mins) / (scaler.maxs - scaler.mins)
    return ds.with_values(X, provenance="scaled", scaler=scaler)


def invert_scaler(ds: Dataset) -> Dataset:
    """Undo apply_scaler, restoring raw units (round-trips within 1e-12)."""

    if ds.scaler is None:
        raise DataError("dataset carries no scaler")
    idx = ds.schema.numeric_indices
    X = ds.X.copy()
    X[:, idx] = X[:, idx] * (ds.scaler.maxs - ds.scaler.mins) + ds.scaler.mins
    return ds.with_values(X, provenance="imputed", scaler=None)


def scale_row(values: np.ndarray, schema: FeatureSchema, scaler: ScalerParams) -> np.ndarray:
    """Scale a single raw-unit row to model space."""

    out = np.asarray(values, dtype=float).copy()
    idx = schema.numeric_indices
    out[idx] = (out[idx] - scaler.mins) / (scaler.maxs - scaler.mins)
    return out


def unscale_row(values: np.ndarray, schema: FeatureSchema, scaler: ScalerParams) -> np.ndarray:
    """Map a scaled row back to raw clinical units."""

    out = np.asarray(values, dtype=float).copy()
    idx = schema.numeric_indices
    out[idx] = out[idx] * (scaler.maxs - scaler.mins) + scaler.mins
    return out


def stratified_split_indices(
    y: np.ndarray, test_fraction: float, seed: int
) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic per-class index split; (train_rows, test_rows), sorted.

    Test slots are apportioned to classes by largest remainder so both
    partitions' class proportions stay within one record of the overall.
    """

    if not 0.0 < test_fraction < 1.0:
        raise DataError(f"test_fraction must be in (0, 1), got {test_fraction}")
    n = len(y)
    counts = []
    for cls in (0, 1):
        c = int(np.sum(y == cls))
        if c < 2:
            raise DataError(f"class {CLASS_NAMES[cls]} has fewer than 2 records")
        counts.append(c)
    total_test = min(max(int(round(test_fraction * n)), 1), n - 1)
    quotas = [total_test * c / n for c in counts]
    k = [int(np.floor(q)) for q in quotas]
    by_remainder = sorted(range(2), key=lambda c: (-(quotas[c] - k[c]), c))
    for c in by_remainder[: total_test - sum(k)]:
        k[c] += 1
    k = [min(max(k[c], 1), counts[c] - 1) for c in (0, 1)]

    rng = np.random.default_rng(seed)
    test_idx: list[np.ndarray] = []
    train_idx: list[np.ndarray] = []
    for cls in (0, 1):
        perm = rng.permutation(np.flatnonzero(y == cls))
        test_idx.append(perm[: k[cls]])
        train_idx.append(perm[k[cls] :])
    return np.sort(np.concatenate(train_idx)), np.sort(np.concatenate(test_idx))


def split_stratified(
    ds: Dataset, test_fraction: float, seed: int
) -> tuple[Dataset, Dataset]:
    """Deterministic stratified split into (train, test).

    Per-class test counts are round(test_fraction * class size), so each
    partition's class proportion sits within one record of the overall one.
    """

    if ds.y is None:
        raise DataError("stratified split requires labels")
    tr, te = stratified_split_indices(ds.y, test_fraction, seed)
    return ds.take(tr), ds.take(te)
