/** Typed fetch client for the screening service. */

import type {
  CounterfactualResponse,
  ExplainResponse,
  FeatureMap,
  Meta,
  PdpResponse,
  PredictResponse,
  ServiceTransport,
} from "./types.js";

export class ServiceError extends Error {
  constructor(
    message: string,
    readonly status: number,
    readonly field?: string,
  ) {
    super(message);
  }
}

async function parseOrThrow<T>(res: Response, allow: number[] = []): Promise<T> {
  if (res.ok || allow.includes(res.status)) {
    return (await res.json()) as T;
  }
  let message = `${res.status}`;
  let field: string | undefined;
  try {
    const body = (await res.json()) as { error?: string; field?: string };
    message = body.error ?? message;
    field = body.field;
  } catch {
    // non-JSON error body; keep the status text
  }
  throw new ServiceError(message, res.status, field);
}

export function httpTransport(baseUrl: string): ServiceTransport {
  const post = (path: string, body: unknown) =>
    fetch(`${baseUrl}${path}`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
  return {
    async meta() {
      return parseOrThrow<Meta>(await fetch(`${baseUrl}/meta`));
    },
    async predict(body: FeatureMap) {
      // 422 carries range warnings together with a valid prediction.
      return parseOrThrow<PredictResponse>(await post("/predict", body), [422]);
    },
    async explain(body: FeatureMap) {
      return parseOrThrow<ExplainResponse>(await post("/explain", body));
    },
    async counterfactual(body: FeatureMap) {
      return parseOrThrow<CounterfactualResponse>(
        await post("/counterfactual", body),
        [404],
      );
    },
    async pdp(feature: string) {
      const res = await fetch(
        `${baseUrl}/pdp?feature=${encodeURIComponent(feature)}`,
      );
      return parseOrThrow<PdpResponse>(res);
    },
  };
}
