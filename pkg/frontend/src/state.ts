/** Session state: the editable patient, its service responses, and history.
 *
 * Every displayed number comes from a service response; the store never
 * derives probabilities or attributions locally. Responses are matched to
 * edits by sequence number so a slow reply for a superseded edit is dropped.
 */

import type {
  CounterfactualResponse,
  ExplainResponse,
  FeatureInfo,
  FeatureMap,
  Meta,
  PredictResponse,
  ServiceTransport,
} from "./types.js";

export interface EditResult {
  ok: boolean;
  message?: string;
}

interface Snapshot {
  features: FeatureMap;
  prediction: PredictResponse | null;
  explanation: ExplainResponse | null;
}

const HISTORY_LIMIT = 100;

function cloneMap(m: FeatureMap): FeatureMap {
  return { ...m };
}

export class SessionStore {
  readonly schema: FeatureInfo[];
  readonly threshold: number;

  current: FeatureMap;
  prediction: PredictResponse | null = null;
  explanation: ExplainResponse | null = null;
  counterfactual: CounterfactualResponse | null = null;
  pinnedReference: FeatureMap | null = null;

  private undoStack: Snapshot[] = [];
  private redoStack: Snapshot[] = [];
  private seq = 0;
  private appliedSeq = 0;
  private listeners: (() => void)[] = [];

  constructor(
    meta: Meta,
    private transport: ServiceTransport,
    initial?: FeatureMap,
  ) {
    this.schema = meta.schema.features;
    this.threshold = meta.threshold;
    this.current = initial ? cloneMap(initial) : this.defaultPatient();
  }

  private defaultPatient(): FeatureMap {
    const out: FeatureMap = {};
    for (const f of this.schema) {
      if (f.kind === "binary-categorical") {
        out[f.name] = 0;
      } else if (f.allowed_range) {
        out[f.name] = (f.allowed_range[0] + f.allowed_range[1]) / 2;
      } else {
        out[f.name] = 0;
      }
    }
    return out;
  }

  onChange(fn: () => void): void {
    this.listeners.push(fn);
  }

  private emit(): void {
    for (const fn of this.listeners) fn();
  }

  validate(name: string, value: number): EditResult {
    const spec = this.schema.find((f) => f.name === name);
    if (!spec) return { ok: false, message: `unknown feature ${name}` };
    if (!Number.isFinite(value)) {
      return { ok: false, message: `${name} must be a number` };
    }
    if (spec.kind === "binary-categorical" && value !== 0 && value !== 1) {
      return { ok: false, message: `${name} must be 0 or 1` };
    }
    return { ok: true };
  }

  private snapshot(): Snapshot {
    return {
      features: cloneMap(this.current),
      prediction: this.prediction,
      explanation: this.explanation,
    };
  }

  private restore(s: Snapshot): void {
    this.current = cloneMap(s.features);
    this.prediction = s.prediction;
    this.explanation = s.explanation;
    this.seq += 1; // anything in flight is now stale
    this.appliedSeq = this.seq;
    this.emit();
  }

  private pushHistory(): void {
    this.undoStack.push(this.snapshot());
    if (this.undoStack.length > HISTORY_LIMIT) this.undoStack.shift();
    this.redoStack = [];
  }

  get canUndo(): boolean {
    return this.undoStack.length > 0;
  }

  get canRedo(): boolean {
    return this.redoStack.length > 0;
  }

  undo(): void {
    const prev = this.undoStack.pop();
    if (!prev) return;
    this.redoStack.push(this.snapshot());
    this.restore(prev);
  }

  redo(): void {
    const next = this.redoStack.pop();
    if (!next) return;
    this.undoStack.push(this.snapshot());
    this.restore(next);
  }

  /** Validate, apply, record history, and refresh from the service. */
  async editFeature(name: string, value: number): Promise<EditResult> {
    const check = this.validate(name, value);
    if (!check.ok) return check;
    this.pushHistory();
    this.current[name] = value;
    this.emit();
    await this.refresh();
    return { ok: true };
  }

  /** Replace the whole patient (load a case, adopt a counterfactual). */
  async loadPatient(features: FeatureMap): Promise<void> {
    this.pushHistory();
    this.current = cloneMap(features);
    this.emit();
    await this.refresh();
  }

  /** Issue predict + explain; drop responses superseded by a newer edit. */
  async refresh(): Promise<void> {
    const mySeq = ++this.seq;
    const body = cloneMap(this.current);
    const [prediction, explanation] = await Promise.all([
      this.transport.predict(body),
      this.transport.explain(body).catch(() => null),
    ]);
    if (mySeq < this.appliedSeq || mySeq < this.seq) return; // stale
    this.appliedSeq = mySeq;
    this.prediction = prediction;
    this.explanation = explanation;
    this.emit();
  }

  async requestCounterfactual(): Promise<CounterfactualResponse> {
    const result = await this.transport.counterfactual(cloneMap(this.current));
    this.counterfactual = result;
    this.emit();
    return result;
  }

  /** Load the counterfactual as the new current patient, closing the loop. */
  async adoptCounterfactual(): Promise<EditResult> {
    const cf = this.counterfactual;
    if (!cf || !cf.found || !cf.counterfactual) {
      return { ok: false, message: "no counterfactual to adopt" };
    }
    await this.loadPatient(cf.counterfactual);
    return { ok: true };
  }

  pinReference(): void {
    this.pinnedReference = cloneMap(this.current);
    this.emit();
  }
}
