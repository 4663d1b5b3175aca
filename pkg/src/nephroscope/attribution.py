"""Per-prediction Shapley attribution with a background-conditioned game.

The feature game is v(S) = mean over background rows b of the model output
on the hybrid record taking features in S from the instance and the rest
from b. Tree models are handled exactly: for each (background row, leaf)
pair the game is an indicator with product structure, whose Shapley values
have a closed form in the counts of path features passed only by the
instance (p) and only by the background row (q). Other model families fall
back to exact subset enumeration for small feature counts and to seeded
antithetic permutation sampling otherwise.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .data import Dataset, unscale_row
from .models import (
    BoostedModel,
    ForestModel,
    LogisticModel,
    Model,
    TreeModel,
    _sigmoid,
)
from .schema import FeatureSchema, PatientRecord
from .trees import leaf_paths, tree_features

DEFAULT_MAX_BACKGROUND = 128
EXACT_ENUM_LIMIT = 12
DEFAULT_PERMUTATIONS = 2000


class AttributionError(ValueError):
    pass


@dataclass(frozen=True)
class Attribution:
    """Signed per-feature contributions for one prediction.

    base_value + phis.sum() equals the model output on the instance.
    """

    base_value: float
    phis: np.ndarray
    instance: np.ndarray
    background_size: int

    @property
    def prediction(self) -> float:
        return float(self.base_value + self.phis.sum())


def _as_values(instance) -> np.ndarray:
    if isinstance(instance, PatientRecord):
        return np.asarray(instance.values, dtype=float)
    return np.asarray(instance, dtype=float)


def _as_matrix(background) -> np.ndarray:
    if isinstance(background, Dataset):
        return np.asarray(background.X, dtype=float)
    return np.atleast_2d(np.asarray(background, dtype=float))


def subsample_background(
    background, max_rows: int = DEFAULT_MAX_BACKGROUND, seed: int = 0
) -> np.ndarray:
    B = _as_matrix(background)
    if B.shape[0] == 0:
        raise AttributionError("background must be non-empty")
    if B.shape[0] <= max_rows:
        return B
    rng = np.random.default_rng(seed)
    rows = np.sort(rng.choice(B.shape[0], size=max_rows, replace=False))
    return B[rows]


def _shapley_subset_weights(n: int) -> np.ndarray:
    """w[s] = s!(n-s-1)!/n! for subsets of size s not containing the player."""

    fact = [math.factorial(i) for i in range(n + 1)]
    return np.array(
        [fact[s] * fact[n - s - 1] / fact[n] for s in range(n)], dtype=float
    )


def _leaf_weight_tables(kmax: int) -> tuple[np.ndarray, np.ndarray]:
    """Closed-form leaf weights. For a leaf whose path has p instance-only-pass
    and q background-only-pass features, each instance-only feature gains
    (p-1)! q! / (p+q)! and each background-only feature loses p! (q-1)! / (p+q)!."""

    fact = [math.factorial(i) for i in range(2 * kmax + 1)]
    wpos = np.zeros((kmax + 1, kmax + 1))
    wneg = np.zeros((kmax + 1, kmax + 1))
    for p in range(kmax + 1):
        for q in range(kmax + 1):
            if p + q == 0:
                continue
            if p >= 1:
                wpos[p, q] = fact[p - 1] * fact[q] / fact[p + q]
            if q >= 1:
                wneg[p, q] = fact[p] * fact[q - 1] / fact[p + q]
    return wpos, wneg


@dataclass
class _LeafBucket:
    features: np.ndarray  # (L, k) int
    lows: np.ndarray  # (L, k)
    highs: np.ndarray  # (L, k)
    values: np.ndarray  # (L,) leaf value already scaled by the tree weight
    bg_pass: np.ndarray = field(default=None, repr=False)  # (n_b, L, k) bool


class TreeShapExplainer:
    """Exact interventional Shapley for tree and forest models.

    Precomputes, per leaf, which background rows pass each path interval, so
    explaining many instances against one background amortizes that work.
    """

    def __init__(self, model: TreeModel | ForestModel, background) -> None:
        B = _as_matrix(background)
        if isinstance(model, TreeModel):
            trees = [model.root]
        elif isinstance(model, ForestModel):
            trees = model.trees
        else:
            raise AttributionError("TreeShapExplainer handles tree/forest models only")
        weight = 1.0 / len(trees)
        self.n_features = B.shape[1]
        self.background = B
        self.model = model
        self.base_value = float(model.predict_batch(B).mean())

        grouped: dict[int, list] = {}
        for root in trees:
            for lp in leaf_paths(root):
                k = lp.features.size
                if k == 0:
                    continue  # constant leaf: no feature can move it
                grouped.setdefault(k, []).append(lp)
        self.buckets: list[_LeafBucket] = []
        kmax = 0
        for k, lps in sorted(grouped.items()):
            kmax = max(kmax, k)
            bucket = _LeafBucket(
                features=np.stack([lp.features for lp in lps]),
                lows=np.stack([lp.lows for lp in lps]),
                highs=np.stack([lp.highs for lp in lps]),
                values=np.array([lp.value for lp in lps]) * weight,
            )
            bucket.bg_pass = (B[:, bucket.features] > bucket.lows) & (
                B[:, bucket.features] <= bucket.highs
            )
            self.buckets.append(bucket)
        self._wpos, self._wneg = _leaf_weight_tables(max(kmax, 1))

    def phis(self, instance) -> np.ndarray:
        x = _as_values(instance)
        if x.size != self.n_features:
            raise AttributionError("instance width does not match background")
        phi = np.zeros(self.n_features)
        n_b = self.background.shape[0]
        for bucket in self.buckets:
            inst_pass = (x[bucket.features] > bucket.lows) & (
                x[bucket.features] <= bucket.highs
            )  # (L, k)
            bg = bucket.bg_pass
            not_inst = ~inst_pass[None, :, :]
            a_mask = inst_pass[None, :, :] & ~bg
            c_mask = not_inst & bg
            alive = ~(not_inst & ~bg).any(axis=2)  # (n_b, L)
            p = a_mask.sum(axis=2)
            q = c_mask.sum(axis=2)
            wp = self._wpos[p, q] * alive * bucket.values[None, :]
            wn = self._wneg[p, q] * alive * bucket.values[None, :]
            contrib = np.einsum("blk,bl->lk", a_mask, wp) - np.einsum(
                "blk,bl->lk", c_mask, wn
            )
            np.add.at(phi, bucket.features.ravel(), contrib.ravel())
        return phi / n_b

    def attribute(self, instance) -> Attribution:
        x = _as_values(instance)
        return Attribution(
            base_value=self.base_value,
            phis=self.phis(x),
            instance=x,
            background_size=self.background.shape[0],
        )


def _exact_enumeration_phis(predict_batch, x: np.ndarray, B: np.ndarray) -> tuple[float, np.ndarray]:
    """Full 2^n subset enumeration of the background-conditioned game."""

    n = x.size
    if n > EXACT_ENUM_LIMIT:
        raise AttributionError(
            f"exact enumeration limited to {EXACT_ENUM_LIMIT} features, got {n}"
        )
    n_b = B.shape[0]
    n_masks = 1 << n
    bits = ((np.arange(n_masks)[:, None] >> np.arange(n)[None, :]) & 1).astype(bool)
    hybrids = np.where(bits[:, None, :], x[None, None, :], B[None, :, :])
    preds = predict_batch(hybrids.reshape(n_masks * n_b, n))
    v = preds.reshape(n_masks, n_b).mean(axis=1)

    weights = _shapley_subset_weights(n)
    sizes = bits.sum(axis=1)
    phi = np.zeros(n)
    for i in range(n):
        bit = 1 << i
        without = np.flatnonzero(~bits[:, i])
        phi[i] = np.sum(weights[sizes[without]] * (v[without | bit] - v[without]))
    return float(v[0]), phi


def attribute_oracle(model: Model, instance, background) -> Attribution:
    """Brute-force Shapley over all feature subsets; guard n <= 12."""

    x = _as_values(instance)
    B = _as_matrix(background)
    base, phi = _exact_enumeration_phis(model.predict_batch, x, B)
    return Attribution(base_value=base, phis=phi, instance=x, background_size=B.shape[0])


class _PermutationSampler:
    """Antithetic permutation estimate with exact per-permutation telescoping."""

    def __init__(self, model, B: np.ndarray, n_permutations: int, seed: int):
        self.model = model
        self.B = B
        self.n_permutations = n_permutations
        self.seed = seed

    def phis(self, x: np.ndarray) -> np.ndarray:
        model = self.model
        B = self.B
        n = x.size
        rng = np.random.default_rng(self.seed)
        phi = np.zeros(n)
        if isinstance(model, LogisticModel):
            z0 = B @ model.weights + model.intercept
            deltas = model.weights * (x - B)  # (n_b, n): logit shift per flip

            def run(perm):
                z = z0.copy()
                prev = _sigmoid(z).mean()
                out = np.zeros(n)
                for j in perm:
                    z += deltas[:, j]
                    cur = _sigmoid(z).mean()
                    out[j] = cur - prev
                    prev = cur
                return out

        elif isinstance(model, BoostedModel):
            flats = model.flats()
            trees_using: dict[int, list[int]] = {}
            for t, root in enumerate(model.trees):
                for f in tree_features(root):
                    trees_using.setdefault(f, []).append(t)
            out0 = np.stack([ft.predict_batch(B) for ft in flats])
            z0 = model.base_score + model.learning_rate * out0.sum(axis=0)

            def run(perm):
                H = B.copy()
                z = z0.copy()
                outs = out0.copy()
                prev = _sigmoid(z).mean()
                res = np.zeros(n)
                for j in perm:
                    H[:, j] = x[j]
                    for t in trees_using.get(j, ()):
                        new = flats[t].predict_batch(H)
                        z += model.learning_rate * (new - outs[t])
                        outs[t] = new
                    cur = _sigmoid(z).mean()
                    res[j] = cur - prev
                    prev = cur
                return res

        else:
            raise AttributionError("permutation sampler supports logistic/boosted")

        n_pairs = self.n_permutations // 2
        for _ in range(n_pairs):
            perm = rng.permutation(n)
            phi += run(perm)
            phi += run(perm[::-1])
        total = 2 * n_pairs
        if self.n_permutations % 2:
            phi += run(rng.permutation(n))
            total += 1
        return phi / total


def attribute(
    model: Model,
    instance,
    background,
    seed: int = 0,
    max_background: int = DEFAULT_MAX_BACKGROUND,
    n_permutations: int = DEFAULT_PERMUTATIONS,
) -> Attribution:
    """Shapley attribution for one scaled record.

    Tree and forest models are exact for any feature count; logistic and
    boosted models are exact up to 12 features and use seeded antithetic
    permutation sampling beyond that.
    """

    x = _as_values(instance)
    if np.isnan(x).any():
        raise AttributionError("instance has missing values")
    B = subsample_background(background, max_rows=max_background, seed=seed)
    if B.shape[1] != x.size:
        raise AttributionError("instance and background widths differ")
    if isinstance(model, (TreeModel, ForestModel)):
        return TreeShapExplainer(model, B).attribute(x)
    if x.size <= EXACT_ENUM_LIMIT:
        base, phi = _exact_enumeration_phis(model.predict_batch, x, B)
        return Attribution(base_value=base, phis=phi, instance=x, background_size=B.shape[0])
    sampler = _PermutationSampler(model, B, n_permutations, seed)
    base = float(model.predict_batch(B).mean())
    return Attribution(
        base_value=base, phis=sampler.phis(x), instance=x, background_size=B.shape[0]
    )


@dataclass
class GlobalSummary:
    """Aggregate attribution across an explained set, for ranking and export."""

    feature_names: list[str]
    mean_abs_phi: np.ndarray
    ranking: list[str]
    phi_matrix: np.ndarray  # (n_instances, n_features)
    raw_values: np.ndarray  # feature values in clinical units
    base_value: float

    def top(self, k: int) -> list[str]:
        return self.ranking[:k]

    def ranking_rows(self) -> list[dict]:
        order = np.argsort(-self.mean_abs_phi, kind="stable")
        return [
            {
                "feature": self.feature_names[j],
                "mean_abs_phi": float(self.mean_abs_phi[j]),
                "rank": r + 1,
            }
            for r, j in enumerate(order)
        ]

    def long_rows(self) -> list[dict]:
        rows = []
        for i in range(self.phi_matrix.shape[0]):
            for j, name in enumerate(self.feature_names):
                rows.append(
                    {
                        "instance_id": i,
                        "feature": name,
                        "phi": float(self.phi_matrix[i, j]),
                        "raw_value": float(self.raw_values[i, j]),
                    }
                )
        return rows


def global_summary(
    model: Model,
    explain_set: Dataset,
    background,
    seed: int = 0,
    max_background: int = DEFAULT_MAX_BACKGROUND,
) -> GlobalSummary:
    """One Attribution per record, ranked by mean |phi|."""

    if explain_set.n_records == 0:
        raise AttributionError("explain_set must be non-empty")
    B = subsample_background(background, max_rows=max_background, seed=seed)
    schema: FeatureSchema = explain_set.schema
    X = explain_set.X

    if isinstance(model, (TreeModel, ForestModel)):
        explainer = TreeShapExplainer(model, B)
        fn = explainer.phis
        base = explainer.base_value
    else:
        base = float(model.predict_batch(B).mean())

        def fn(x):
            return attribute(model, x, B, seed=seed, max_background=max_background).phis

    rows = [X[i] for i in range(X.shape[0])]
    if os.environ.get("NEPHROSCOPE_NO_PARALLEL", "") != "1" and len(rows) >= 16:
        with ThreadPoolExecutor(max_workers=min(4, os.cpu_count() or 1)) as ex:
            phis = list(ex.map(fn, rows))
    else:
        phis = [fn(x) for x in rows]
    phi_matrix = np.stack(phis)
    mean_abs = np.abs(phi_matrix).mean(axis=0)
    order = np.argsort(-mean_abs, kind="stable")
    ranking = [schema.names[j] for j in order]
    if explain_set.scaler is not None:
        raw = np.stack([unscale_row(x, schema, explain_set.scaler) for x in X])
    else:
        raw = X.copy()
    return GlobalSummary(
        feature_names=schema.names,
        mean_abs_phi=mean_abs,
        ranking=ranking,
        phi_matrix=phi_matrix,
        raw_values=raw,
        base_value=base,
    )
