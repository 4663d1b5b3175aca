"""Synthetic cohort generator, schema-identical to the clinical CKD table.

Produces a plausible cardiovascular-risk cohort with a planted risk
structure: low baseline eGFR, diabetes and its medication, ACEI/ARB use,
HbA1C and age drive the positive class. Meds carry risk signal beyond the
underlying disease so treated patients score higher than untreated ones.
Used by tests and demos whenever the real dataset is not available.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .data import Dataset
from .schema import FeatureSchema, ckd_schema

DEFAULT_N = 491
DEFAULT_POSITIVE_FRACTION = 0.114


def _sigmoid(z: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-z))


def _risk_logit(cols: dict[str, np.ndarray]) -> np.ndarray:
    egfr_term = (95.0 - cols["eGFR"]) / 18.0
    return (
        2.1 * egfr_term
        + 1.0 * cols["DM"]
        + 1.0 * cols["DM_meds"]
        + 0.9 * cols["ACEI_ARB"]
        + 0.6 * (cols["HbA1C"] - 5.6)
        + 0.035 * (cols["age"] - 55.0)
        + 0.45 * cols["HT"]
        + 0.4 * cols["HT_meds"]
        + 0.3 * cols["CHD"]
        + 0.2 * cols["DLP"]
        + 0.15 * cols["gender"]
        + 0.1 * cols["smoking"]
    )


def generate(
    n: int = DEFAULT_N,
    seed: int = 7,
    positive_fraction: float = DEFAULT_POSITIVE_FRACTION,
    missing_rates: tuple[float, float] = (0.06, 0.05),
    label_noise_scale: float = 1.1,
) -> Dataset:
    """Draw a labeled raw-unit cohort with exactly round(n * positive_fraction)
    positives. Missing cells appear only in HbA1C and TG."""

    rng = np.random.default_rng(seed)
    schema = ckd_schema()

    gender = (rng.random(n) < 0.5).astype(float)
    age = np.clip(rng.normal(52, 16, n), 18, 88).round(0)
    dm = (rng.random(n) < 0.25).astype(float)
    ht = (rng.random(n) < 0.42).astype(float)
    dlp = (rng.random(n) < 0.38).astype(float)
    chd = (rng.random(n) < 0.07).astype(float)
    vasc = (rng.random(n) < 0.05).astype(float)
    smoking = (rng.random(n) < 0.13).astype(float)
    bmi = np.clip(rng.normal(28, 5.5, n), 16, 55)
    obesity = np.where(bmi >= 30, rng.random(n) < 0.9, rng.random(n) < 0.05).astype(float)

    dm_meds = dm * (rng.random(n) < 0.8)
    ht_meds = ht * (rng.random(n) < 0.85)
    dlp_meds = dlp * (rng.random(n) < 0.7)
    acei_arb = np.where(
        (ht + dm) > 0, rng.random(n) < 0.55, rng.random(n) < 0.03
    ).astype(float)

    hba1c = np.clip(
        rng.normal(5.4, 0.35, n) + dm * np.clip(rng.normal(1.6, 0.7, n), 0.3, None),
        4.0,
        14.0,
    )
    chol = np.clip(rng.normal(4.9, 0.95, n) + 0.4 * dlp - 0.4 * dlp_meds, 2.0, 12.0)
    tg = np.clip(np.exp(rng.normal(0.25, 0.45, n)) + 0.3 * dlp, 0.3, 12.0)
    cr = np.clip(rng.normal(70, 14, n) + 9 * gender, 35, 180)
    egfr = np.clip(
        128 - 0.55 * (age - 20) - 0.45 * (cr - 70) + rng.normal(0, 14, n), 58, 245
    )
    sbp = np.clip(rng.normal(114, 11, n) + 22 * ht + 0.2 * (age - 50), 90, 215).round(0)
    dbp = np.clip(0.55 * sbp + rng.normal(8, 7, n), 50, 125).round(0)

    cols = {
        "gender": gender,
        "age": age,
        "DM": dm,
        "CHD": chd,
        "Vascular_disease": vasc,
        "smoking": smoking,
        "HT": ht,
        "DLP": dlp,
        "Obesity": obesity,
        "DLP_meds": dlp_meds,
        "DM_meds": dm_meds,
        "HT_meds": ht_meds,
        "ACEI_ARB": acei_arb,
        "Chol": chol.round(2),
        "TG": tg.round(2),
        "HbA1C": hba1c.round(2),
        "Cr": cr.round(1),
        "eGFR": egfr.round(4),
        "SBP": sbp,
        "DBP": dbp,
        "BMI": bmi.round(4),
    }

    # Label: noisy planted score thresholded at the order statistic that
    # yields the requested positive count exactly.
    noise = rng.logistic(0.0, label_noise_scale, n)
    noisy = _risk_logit(cols) + noise
    n_pos = int(round(positive_fraction * n))
    cutoff = np.sort(noisy)[n - n_pos]
    y = (noisy >= cutoff).astype(np.int8)

    X = np.column_stack([cols[name] for name in schema.names])

    hb_rate, tg_rate = missing_rates
    hb_idx = schema.index_of("HbA1C")
    tg_idx = schema.index_of("TG")
    X[rng.random(n) < hb_rate, hb_idx] = np.nan
    X[rng.random(n) < tg_rate, tg_idx] = np.nan

    return Dataset(schema=schema, X=X, y=y, provenance="raw")


def write_csv(path: str | Path, ds: Dataset | None = None, **generate_kwargs) -> Path:
    """Write a generated (or given raw) dataset as a canonical CSV."""

    if ds is None:
        ds = generate(**generate_kwargs)
    path = Path(path)
    schema: FeatureSchema = ds.schema
    binary = schema.binary_mask
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(schema.names + [schema.target_name])
        for i in range(ds.n_records):
            row = []
            for j, v in enumerate(ds.X[i]):
                if np.isnan(v):
                    row.append("")
                elif binary[j]:
                    row.append(str(int(v)))
                else:
                    row.append(format(float(v), "g"))
            row.append("yes" if ds.y is not None and ds.y[i] == 1 else "no")
            writer.writerow(row)
    return path
