"""Read-only HTTP facade over a trained model bundle.

All state (model, scaler, counterfactual pool, precomputed dependence
curves) is loaded at startup and never mutated; handlers are pure functions
of the request body, so any interleaving of concurrent requests behaves
like some serial order.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from fastapi import FastAPI, Query
from fastapi.responses import JSONResponse, PlainTextResponse
from fastapi.staticfiles import StaticFiles

from .attribution import attribute, subsample_background
from .data import Dataset, apply_scaler, impute_group_mean, load_csv, scale_row, unscale_row
from .dependence import pd_curve
from .models import ModelBundle, load_model
from .neighbors import find_counterfactual
from .schema import CLASS_NAMES, FeatureSchema

SERVICE_SCHEMA_VERSION = 1


@dataclass
class _State:
    bundle: ModelBundle | None
    pool: Dataset | None
    background: np.ndarray | None
    curves: dict | None


def _validate_payload(payload, schema: FeatureSchema):
    """(values, warnings) or raises _FieldError naming the offending field."""

    if not isinstance(payload, dict):
        raise _FieldError("body", "request body must be a JSON object")
    unknown = [k for k in payload if k not in schema.names]
    if unknown:
        raise _FieldError(unknown[0], f"unknown feature {unknown[0]!r}")
    values = np.empty(schema.n_features)
    warnings = []
    for i, spec in enumerate(schema.specs):
        if spec.name not in payload:
            raise _FieldError(spec.name, f"missing feature {spec.name!r}")
        raw = payload[spec.name]
        try:
            v = float(raw)
        except (TypeError, ValueError):
            raise _FieldError(spec.name, f"{spec.name!r} must be numeric")
        if not np.isfinite(v):
            raise _FieldError(spec.name, f"{spec.name!r} must be finite")
        if spec.is_binary and v not in (0.0, 1.0):
            raise _FieldError(spec.name, f"{spec.name!r} must be 0 or 1")
        if spec.allowed_range is not None:
            lo, hi = spec.allowed_range
            if not (lo <= v <= hi):
                warnings.append(
                    {
                        "feature": spec.name,
                        "message": f"value {v} outside plausible range [{lo}, {hi}]",
                    }
                )
        values[i] = v
    return values, warnings


class _FieldError(Exception):
    def __init__(self, field: str, message: str):
        super().__init__(message)
        self.field = field
        self.message = message


def create_app(
    model_path: str | Path | None = None,
    pool_path: str | Path | None = None,
    ui_dir: str | Path | None = None,
    bundle: ModelBundle | None = None,
    pool: Dataset | None = None,
    background_seed: int = 0,
) -> FastAPI:
    app = FastAPI(title="nephroscope service", version="0.1.0")

    manifest: dict | None = None
    if bundle is None and model_path is not None:
        bundle = load_model(model_path)
        manifest_path = Path(model_path).parent / "manifest.json"
        if manifest_path.exists():
            manifest = json.loads(manifest_path.read_text())
    if pool is None and pool_path is not None and bundle is not None:
        raw = load_csv(pool_path, bundle.schema)
        pool = apply_scaler(impute_group_mean(raw), bundle.scaler)

    background = None
    curves: dict | None = None
    if bundle is not None and pool is not None:
        background = subsample_background(pool, seed=background_seed)
        curves = {}
        for spec in bundle.schema.specs:
            c = pd_curve(bundle.model, pool, spec.name)
            curves[spec.name] = {
                "feature": spec.name,
                "kind": spec.kind,
                "unit": spec.unit,
                "points": c.rows(),
                "n_averaged": c.n_averaged,
            }
    state = _State(bundle=bundle, pool=pool, background=background, curves=curves)

    def _field_error(exc: _FieldError) -> JSONResponse:
        return JSONResponse(
            status_code=400, content={"error": exc.message, "field": exc.field}
        )

    def _no_model() -> JSONResponse:
        return JSONResponse(status_code=503, content={"error": "model not loaded"})

    def _no_pool() -> JSONResponse:
        return JSONResponse(
            status_code=503, content={"error": "reference pool not loaded"}
        )

    @app.get("/health")
    def health():
        return PlainTextResponse("ok")

    @app.get("/meta")
    def meta():
        if state.bundle is None:
            return _no_model()
        b = state.bundle
        return {
            "service_schema_version": SERVICE_SCHEMA_VERSION,
            "schema": b.schema.to_dict(),
            "class_names": list(CLASS_NAMES),
            "threshold": b.threshold,
            "model_kind": b.kind,
            "model_digest": b.manifest_digest,
            "manifest": manifest,
            "pool_size": None if state.pool is None else state.pool.n_records,
        }

    def _predict_core(payload):
        values, warnings = _validate_payload(payload, state.bundle.schema)
        scaled = scale_row(values, state.bundle.schema, state.bundle.scaler)
        p = float(state.bundle.model.predict_batch(scaled[None, :])[0])
        body = {
            "probability_ckd": p,
            "predicted_class": CLASS_NAMES[int(p >= state.bundle.threshold)],
            "threshold": state.bundle.threshold,
            "model_digest": state.bundle.manifest_digest,
        }
        return scaled, body, warnings

    @app.post("/predict")
    def predict(payload: dict):
        if state.bundle is None:
            return _no_model()
        try:
            _, body, warnings = _predict_core(payload)
        except _FieldError as exc:
            return _field_error(exc)
        if warnings:
            body["warnings"] = warnings
            return JSONResponse(status_code=422, content=body)
        return body

    @app.post("/explain")
    def explain(payload: dict):
        if state.bundle is None:
            return _no_model()
        if state.background is None:
            return _no_pool()
        try:
            scaled, pred_body, _ = _predict_core(payload)
        except _FieldError as exc:
            return _field_error(exc)
        att = attribute(state.bundle.model, scaled, state.background)
        schema = state.bundle.schema
        raw = unscale_row(scaled, schema, state.bundle.scaler)
        order = np.argsort(-np.abs(att.phis), kind="stable")
        return {
            "base_value": att.base_value,
            "probability_ckd": pred_body["probability_ckd"],
            "background_size": att.background_size,
            "phis": [
                {
                    "feature": schema.names[j],
                    "phi": float(att.phis[j]),
                    "value": float(raw[j]),
                }
                for j in order
            ],
        }

    @app.post("/counterfactual")
    def counterfactual(payload: dict):
        if state.bundle is None:
            return _no_model()
        if state.pool is None:
            return _no_pool()
        try:
            scaled, _, _ = _predict_core(payload)
        except _FieldError as exc:
            return _field_error(exc)
        b = state.bundle
        pair = find_counterfactual(scaled, state.pool, b.model, b.threshold)
        if pair is None:
            return JSONResponse(status_code=404, content={"found": False})
        ref_raw = unscale_row(pair.reference, b.schema, b.scaler)
        cf_raw = unscale_row(pair.counterfactual, b.schema, b.scaler)
        names = b.schema.names
        changed_names = {n for n, _, _ in pair.changed_features}
        return {
            "found": True,
            "distance": pair.distance,
            "reference_prediction": pair.reference_prediction,
            "counterfactual_prediction": pair.counterfactual_prediction,
            "reference": {n: float(v) for n, v in zip(names, ref_raw)},
            "counterfactual": {n: float(v) for n, v in zip(names, cf_raw)},
            "changed_features": [
                {
                    "feature": n,
                    "reference_value": float(ref_raw[names.index(n)]),
                    "counterfactual_value": float(cf_raw[names.index(n)]),
                }
                for n in names
                if n in changed_names
            ],
        }

    @app.get("/pdp")
    def pdp(feature: str = Query(...)):
        if state.bundle is None:
            return _no_model()
        if state.curves is None:
            return _no_pool()
        if feature not in state.curves:
            return JSONResponse(
                status_code=404, content={"error": f"unknown feature {feature!r}"}
            )
        return state.curves[feature]

    if ui_dir is not None:
        app.mount("/", StaticFiles(directory=str(ui_dir), html=True), name="ui")
    return app
