/** Shared test scaffolding: deterministic PRNG and a stub service. */

import type {
  ExplainResponse,
  FeatureInfo,
  FeatureMap,
  Meta,
  ServiceTransport,
} from "../src/types.js";

export function mulberry32(seed: number): () => number {
  let a = seed >>> 0;
  return () => {
    a |= 0;
    a = (a + 0x6d2b79f5) | 0;
    let t = Math.imul(a ^ (a >>> 15), 1 | a);
    t = (t + Math.imul(t ^ (t >>> 7), 61 | t)) ^ t;
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

export const TINY_FEATURES: FeatureInfo[] = [
  { name: "age", kind: "numeric", unit: "years", allowed_range: [0, 120] },
  { name: "eGFR", kind: "numeric", unit: "mL/min/1.73m2", allowed_range: [1, 300] },
  { name: "DM", kind: "binary-categorical", unit: "", allowed_range: null },
];

export function tinyMeta(features: FeatureInfo[] = TINY_FEATURES): Meta {
  return {
    service_schema_version: 1,
    schema: { target_name: "Label", features },
    class_names: ["noCKD", "CKD"],
    threshold: 0.3,
    model_kind: "forest",
    model_digest: "stub",
    pool_size: 10,
  };
}

export interface StubOptions {
  /** deterministic probability from the feature map */
  probability?: (body: FeatureMap) => number;
  explanation?: (body: FeatureMap) => ExplainResponse;
  delayByCall?: number[];
}

/** A service stub whose responses are pure functions of the request body. */
export function stubTransport(
  meta: Meta,
  opts: StubOptions = {},
): ServiceTransport & { calls: { predict: number; explain: number } } {
  const prob =
    opts.probability ?? ((body: FeatureMap) => Math.min(0.9, 0.1 + 0.2 * (body.DM ?? 0)));
  const calls = { predict: 0, explain: 0 };
  const delays = opts.delayByCall ?? [];
  const wait = (n: number) =>
    new Promise<void>((resolve) => setTimeout(resolve, delays[n] ?? 0));
  return {
    calls,
    async meta() {
      return meta;
    },
    async predict(body: FeatureMap) {
      const n = calls.predict++;
      await wait(n);
      const p = prob(body);
      return {
        probability_ckd: p,
        predicted_class: p >= meta.threshold ? "CKD" : "noCKD",
        threshold: meta.threshold,
        model_digest: meta.model_digest,
      };
    },
    async explain(body: FeatureMap) {
      calls.explain++;
      if (opts.explanation) return opts.explanation(body);
      const p = prob(body);
      const names = meta.schema.features.map((f) => f.name);
      const phi = (p - 0.1) / names.length;
      return {
        base_value: 0.1,
        probability_ckd: p,
        background_size: 8,
        phis: names.map((name) => ({ feature: name, phi, value: body[name] })),
      };
    },
    async counterfactual() {
      return { found: false };
    },
    async pdp(feature: string) {
      return {
        feature,
        kind: "numeric",
        unit: "",
        points: [
          { feature_value_raw: 0, feature_value_scaled: 0, pd: 0.2 },
          { feature_value_raw: 1, feature_value_scaled: 1, pd: 0.4 },
        ],
        n_averaged: 10,
      };
    },
  };
}
