"""Clinical feature schema for the 21-feature CKD screening table."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

NUMERIC = "numeric"
BINARY = "binary-categorical"

CLASS_NAMES = ("noCKD", "CKD")
LABEL_COLUMN = "Label"


class SchemaError(ValueError):
    """Schema definition or schema/data mismatch problem."""


@dataclass(frozen=True)
class FeatureSpec:
    """One column of the clinical table: name, kind, unit, plausibility range."""

    name: str
    kind: str
    unit: str = ""
    allowed_range: tuple[float, float] | None = None

    def __post_init__(self):
        if self.kind not in (NUMERIC, BINARY):
            raise SchemaError(f"unknown feature kind {self.kind!r} for {self.name!r}")

    @property
    def is_binary(self) -> bool:
        return self.kind == BINARY


@dataclass(frozen=True)
class FeatureSchema:
    """Ordered feature specs plus the target column name."""

    specs: tuple[FeatureSpec, ...]
    target_name: str = LABEL_COLUMN

    def __post_init__(self):
        names = [s.name for s in self.specs]
        if len(set(names)) != len(names):
            raise SchemaError("feature names must be unique within a schema")

    @property
    def names(self) -> list[str]:
        return [s.name for s in self.specs]

    @property
    def n_features(self) -> int:
        return len(self.specs)

    def index_of(self, name: str) -> int:
        for i, s in enumerate(self.specs):
            if s.name == name:
                return i
        raise SchemaError(f"unknown feature {name!r}")

    def spec(self, name: str) -> FeatureSpec:
        return self.specs[self.index_of(name)]

    @property
    def binary_mask(self) -> np.ndarray:
        return np.array([s.is_binary for s in self.specs], dtype=bool)

    @property
    def numeric_indices(self) -> np.ndarray:
        return np.flatnonzero(~self.binary_mask)

    @property
    def binary_indices(self) -> np.ndarray:
        return np.flatnonzero(self.binary_mask)

    def to_dict(self) -> dict:
        return {
            "target_name": self.target_name,
            "features": [
                {
                    "name": s.name,
                    "kind": s.kind,
                    "unit": s.unit,
                    "allowed_range": list(s.allowed_range) if s.allowed_range else None,
                }
                for s in self.specs
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureSchema":
        specs = tuple(
            FeatureSpec(
                name=f["name"],
                kind=f["kind"],
                unit=f.get("unit", ""),
                allowed_range=tuple(f["allowed_range"]) if f.get("allowed_range") else None,
            )
            for f in d["features"]
        )
        return cls(specs=specs, target_name=d.get("target_name", LABEL_COLUMN))


@dataclass
class PatientRecord:
    """One row of the clinical table, aligned to a schema. NaN marks missing."""

    values: np.ndarray
    label: int | None = None
    schema: FeatureSchema = field(repr=False, default=None)

    def value(self, name: str) -> float:
        return float(self.values[self.schema.index_of(name)])

    def as_dict(self) -> dict[str, float]:
        return {n: float(v) for n, v in zip(self.schema.names, self.values)}

    @property
    def has_missing(self) -> bool:
        return bool(np.isnan(self.values).any())


def ckd_schema() -> FeatureSchema:
    """The canonical 21-feature CKD schema in its fixed column order."""

    b, n = BINARY, NUMERIC
    specs = (
        FeatureSpec("gender", b, "woman=0/man=1"),
        FeatureSpec("age", n, "years", (0.0, 120.0)),
        FeatureSpec("DM", b),
        FeatureSpec("CHD", b),
        FeatureSpec("Vascular_disease", b),
        FeatureSpec("smoking", b),
        FeatureSpec("HT", b),
        FeatureSpec("DLP", b),
        FeatureSpec("Obesity", b),
        FeatureSpec("DLP_meds", b),
        FeatureSpec("DM_meds", b),
        FeatureSpec("HT_meds", b),
        FeatureSpec("ACEI_ARB", b),
        FeatureSpec("Chol", n, "mmol/L", (0.5, 20.0)),
        FeatureSpec("TG", n, "mmol/L", (0.1, 30.0)),
        FeatureSpec("HbA1C", n, "%", (3.0, 20.0)),
        FeatureSpec("Cr", n, "umol/L", (10.0, 1500.0)),
        FeatureSpec("eGFR", n, "mL/min/1.73m2", (1.0, 300.0)),
        FeatureSpec("SBP", n, "mmHg", (50.0, 300.0)),
        FeatureSpec("DBP", n, "mmHg", (20.0, 200.0)),
        FeatureSpec("BMI", n, "kg/m2", (8.0, 80.0)),
    )
    return FeatureSchema(specs=specs)


# Features whose missing values are imputed, and the binary feature whose
# groups supply the donor mean.
IMPUTATION_GROUPS = {"HbA1C": "DM", "TG": "DLP"}
