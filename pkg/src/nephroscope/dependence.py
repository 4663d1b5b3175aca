"""Partial dependence of the predicted CKD probability on one feature."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .models import Model


class DependenceError(ValueError):
    pass


@dataclass(frozen=True)
class PDCurve:
    feature: str
    grid_scaled: np.ndarray
    grid_raw: np.ndarray
    pd_values: np.ndarray
    n_averaged: int

    def rows(self) -> list[dict]:
        return [
            {
                "feature_value_raw": float(r),
                "feature_value_scaled": float(s),
                "pd": float(p),
            }
            for r, s, p in zip(self.grid_raw, self.grid_scaled, self.pd_values)
        ]


def _auto_grid(values: np.ndarray, n_points: int) -> np.ndarray:
    qs = np.quantile(values, np.linspace(0.0, 1.0, n_points))
    grid = np.unique(np.concatenate([qs, [values.min(), values.max()]]))
    return grid


def pd_curve(
    model: Model,
    ds: Dataset,
    feature: str,
    grid: np.ndarray | None = None,
    n_points: int = 20,
) -> PDCurve:
    """Average prediction over the dataset with the feature clamped per grid
    point. Binary features use the {0, 1} grid; numeric auto grids take
    equally spaced quantiles plus the observed min and max. Explicit grids
    are in the dataset's (scaled) units."""

    if ds.n_records == 0:
        raise DependenceError("dataset must be non-empty")
    j = ds.schema.index_of(feature)
    spec = ds.schema.spec(feature)
    if grid is None:
        if spec.is_binary:
            grid = np.array([0.0, 1.0])
        else:
            grid = _auto_grid(ds.X[:, j], n_points)
    else:
        grid = np.unique(np.asarray(grid, dtype=float))
    if grid.size == 0:
        raise DependenceError("empty grid")

    X = ds.X.copy()
    pd_values = np.empty(grid.size)
    for i, v in enumerate(grid):
        X[:, j] = v
        pd_values[i] = float(model.predict_batch(X).mean())

    if ds.scaler is not None and not spec.is_binary:
        lo_i = ds.scaler.feature_names.index(feature)
        span = ds.scaler.maxs[lo_i] - ds.scaler.mins[lo_i]
        grid_raw = grid * span + ds.scaler.mins[lo_i]
    else:
        grid_raw = grid.copy()
    return PDCurve(
        feature=feature,
        grid_scaled=grid,
        grid_raw=grid_raw,
        pd_values=pd_values,
        n_averaged=ds.n_records,
    )
