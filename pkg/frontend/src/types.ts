/** Wire types for the screening service; mirrors its published schema. */

export interface FeatureInfo {
  name: string;
  kind: "numeric" | "binary-categorical";
  unit: string;
  allowed_range: [number, number] | null;
}

export interface Meta {
  service_schema_version: number;
  schema: { target_name: string; features: FeatureInfo[] };
  class_names: [string, string];
  threshold: number;
  model_kind: string;
  model_digest: string;
  manifest?: Record<string, unknown> | null;
  pool_size: number | null;
}

export interface PredictResponse {
  probability_ckd: number;
  predicted_class: string;
  threshold: number;
  model_digest: string;
  warnings?: { feature: string; message: string }[];
}

export interface PhiEntry {
  feature: string;
  phi: number;
  value: number;
}

export interface ExplainResponse {
  base_value: number;
  probability_ckd: number;
  background_size: number;
  phis: PhiEntry[];
}

export interface ChangedFeature {
  feature: string;
  reference_value: number;
  counterfactual_value: number;
}

export interface CounterfactualResponse {
  found: boolean;
  distance?: number;
  reference_prediction?: string;
  counterfactual_prediction?: string;
  reference?: Record<string, number>;
  counterfactual?: Record<string, number>;
  changed_features?: ChangedFeature[];
}

export interface PdpPoint {
  feature_value_raw: number;
  feature_value_scaled: number;
  pd: number;
}

export interface PdpResponse {
  feature: string;
  kind: string;
  unit: string;
  points: PdpPoint[];
  n_averaged: number;
}

export type FeatureMap = Record<string, number>;

/** Everything the store needs from the network, injectable for tests. */
export interface ServiceTransport {
  meta(): Promise<Meta>;
  predict(body: FeatureMap): Promise<PredictResponse>;
  explain(body: FeatureMap): Promise<ExplainResponse>;
  counterfactual(body: FeatureMap): Promise<CounterfactualResponse>;
  pdp(feature: string): Promise<PdpResponse>;
}
