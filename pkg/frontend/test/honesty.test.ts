import { describe, expect, it } from "vitest";

import { SessionStore } from "../src/state.js";
import type { ExplainResponse } from "../src/types.js";
import { buildAttributionView, buildGaugeView, buildPdpView } from "../src/viewmodel.js";
import { stubTransport, tinyMeta } from "./helpers.js";

// Fixed explanation payload: the rendered view must reproduce its numbers
// without any local model math.
const FIXED_EXPLANATION: ExplainResponse = {
  base_value: 0.2134,
  probability_ckd: 0.6871,
  background_size: 64,
  phis: [
    { feature: "eGFR", phi: 0.31, value: 61.8 },
    { feature: "age", phi: 0.1602, value: 75 },
    { feature: "DM", phi: 0.0035, value: 1 },
  ],
};

describe("attribution honesty", () => {
  it("bars plus base reproduce the displayed probability within 1e-3", async () => {
    const meta = tinyMeta();
    const transport = stubTransport(meta, {
      probability: () => FIXED_EXPLANATION.probability_ckd,
      explanation: () => FIXED_EXPLANATION,
    });
    const store = new SessionStore(meta, transport, { age: 75, eGFR: 61.8, DM: 1 });
    await store.refresh();

    const view = buildAttributionView(store.explanation!);
    const total =
      view.baseValue + view.bars.reduce((acc, bar) => acc + bar.phi, 0);
    expect(Math.abs(total - view.displayedProbability)).toBeLessThan(1e-3);
    // the displayed probability is the service's, verbatim
    expect(view.displayedProbability).toBe(FIXED_EXPLANATION.probability_ckd);
    expect(store.prediction!.probability_ckd).toBe(
      FIXED_EXPLANATION.probability_ckd,
    );
  });

  it("passes phi values through unchanged and ranks are preserved", () => {
    const view = buildAttributionView(FIXED_EXPLANATION);
    expect(view.bars.map((b) => b.phi)).toEqual([0.31, 0.1602, 0.0035]);
    expect(view.bars[0].relative).toBe(1);
    expect(view.bars[2].relative).toBeCloseTo(0.0035 / 0.31, 12);
  });
});

describe("gauge honesty", () => {
  it("shows the service probability and threshold verbatim", () => {
    const gauge = buildGaugeView({
      probability_ckd: 0.444,
      predicted_class: "CKD",
      threshold: 0.3,
      model_digest: "x",
    });
    expect(gauge.probability).toBe(0.444);
    expect(gauge.threshold).toBe(0.3);
    expect(gauge.atRisk).toBe(true);
  });
});

describe("dependence panel", () => {
  it("marks the grid point nearest the current patient", () => {
    const view = buildPdpView(
      {
        feature: "eGFR",
        kind: "numeric",
        unit: "mL/min/1.73m2",
        n_averaged: 400,
        points: [
          { feature_value_raw: 60, feature_value_scaled: 0.0, pd: 0.52 },
          { feature_value_raw: 90, feature_value_scaled: 0.2, pd: 0.31 },
          { feature_value_raw: 120, feature_value_scaled: 0.4, pd: 0.18 },
        ],
      },
      85,
    );
    expect(view.markerIndex).toBe(1);
    expect(view.ys).toEqual([0.52, 0.31, 0.18]);
    expect(view.isBinary).toBe(false);
  });
});
