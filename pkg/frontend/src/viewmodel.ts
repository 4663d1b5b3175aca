/** Pure view-model builders: service responses in, renderable rows out.
 *
 * All numbers pass through unchanged (besides display rounding); nothing is
 * recomputed locally, so the rendered bars stay honest to the service.
 */

import type { ExplainResponse, PdpResponse, PredictResponse } from "./types.js";

export interface AttributionBar {
  feature: string;
  phi: number;
  value: number;
  /** signed width in [-1, 1] relative to the largest |phi| */
  relative: number;
}

export interface AttributionView {
  baseValue: number;
  displayedProbability: number;
  bars: AttributionBar[];
}

export function buildAttributionView(
  explanation: ExplainResponse,
  topK = 21,
): AttributionView {
  const bars = explanation.phis.slice(0, topK);
  const maxAbs = Math.max(1e-12, ...bars.map((p) => Math.abs(p.phi)));
  return {
    baseValue: explanation.base_value,
    // The probability shown next to the bars is the service's, and the bars
    // must sum (plus base) back to it: tail features beyond topK are never
    // dropped silently when topK covers the full schema.
    displayedProbability: explanation.probability_ckd,
    bars: bars.map((p) => ({
      feature: p.feature,
      phi: p.phi,
      value: p.value,
      relative: p.phi / maxAbs,
    })),
  };
}

export interface GaugeView {
  probability: number;
  threshold: number;
  label: string;
  atRisk: boolean;
}

export function buildGaugeView(prediction: PredictResponse): GaugeView {
  return {
    probability: prediction.probability_ckd,
    threshold: prediction.threshold,
    label: prediction.predicted_class,
    atRisk: prediction.predicted_class === "CKD",
  };
}

export interface PdpView {
  feature: string;
  unit: string;
  isBinary: boolean;
  xs: number[];
  ys: number[];
  /** index of the grid point nearest the current patient's value */
  markerIndex: number;
  markerValue: number;
}

export function buildPdpView(curve: PdpResponse, currentValue: number): PdpView {
  const xs = curve.points.map((p) => p.feature_value_raw);
  const ys = curve.points.map((p) => p.pd);
  let markerIndex = 0;
  let best = Infinity;
  xs.forEach((x, i) => {
    const d = Math.abs(x - currentValue);
    if (d < best) {
      best = d;
      markerIndex = i;
    }
  });
  return {
    feature: curve.feature,
    unit: curve.unit,
    isBinary: curve.kind === "binary-categorical",
    xs,
    ys,
    markerIndex,
    markerValue: currentValue,
  };
}

export interface DiffRow {
  feature: string;
  reference: number;
  counterfactual: number;
  changed: boolean;
}

export function buildDiffRows(
  featureOrder: string[],
  reference: Record<string, number>,
  counterfactual: Record<string, number>,
  changed: { feature: string }[],
): DiffRow[] {
  const changedSet = new Set(changed.map((c) => c.feature));
  return featureOrder.map((name) => ({
    feature: name,
    reference: reference[name],
    counterfactual: counterfactual[name],
    changed: changedSet.has(name),
  }));
}

export function formatValue(v: number, isBinary: boolean): string {
  if (isBinary) return v === 1 ? "yes" : "no";
  return Math.abs(v) >= 100 ? v.toFixed(1) : v.toPrecision(4);
}
