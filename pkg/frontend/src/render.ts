/** DOM rendering: patient form, gauge, attribution bars, diff, PDP chart. */

import type { SessionStore } from "./state.js";
import type { FeatureInfo, PdpResponse } from "./types.js";
import {
  buildAttributionView,
  buildDiffRows,
  buildGaugeView,
  buildPdpView,
  formatValue,
} from "./viewmodel.js";

const SVG_NS = "http://www.w3.org/2000/svg";

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  attrs: Record<string, string> = {},
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [k, v] of Object.entries(attrs)) node.setAttribute(k, v);
  if (text !== undefined) node.textContent = text;
  return node;
}

function svgEl(tag: string, attrs: Record<string, string>): SVGElement {
  const node = document.createElementNS(SVG_NS, tag);
  for (const [k, v] of Object.entries(attrs)) node.setAttribute(k, v);
  return node;
}

export function renderForm(
  container: HTMLElement,
  store: SessionStore,
  debounceMs = 250,
): void {
  container.innerHTML = "";
  const timers = new Map<string, ReturnType<typeof setTimeout>>();
  for (const spec of store.schema) {
    const row = el("div", { class: "field", "data-feature": spec.name });
    const label = el("label", {}, spec.name);
    if (spec.unit && spec.kind === "numeric") {
      label.append(el("span", { class: "unit" }, ` (${spec.unit})`));
    }
    const error = el("span", { class: "field-error" });
    const apply = async (value: number) => {
      const result = await store.editFeature(spec.name, value);
      error.textContent = result.ok ? "" : (result.message ?? "invalid");
    };
    if (spec.kind === "binary-categorical") {
      const input = el("input", { type: "checkbox" }) as HTMLInputElement;
      input.checked = store.current[spec.name] === 1;
      input.addEventListener("change", () => void apply(input.checked ? 1 : 0));
      row.append(label, input, error);
    } else {
      const input = el("input", {
        type: "number",
        step: "any",
        value: String(store.current[spec.name]),
      }) as HTMLInputElement;
      input.addEventListener("input", () => {
        const pending = timers.get(spec.name);
        if (pending) clearTimeout(pending);
        timers.set(
          spec.name,
          setTimeout(() => {
            const v = Number(input.value);
            if (input.value.trim() === "" || Number.isNaN(v)) {
              error.textContent = `${spec.name} must be a number`;
              return;
            }
            void apply(v);
          }, debounceMs),
        );
      });
      row.append(label, input, error);
    }
    container.append(row);
  }
}

export function syncFormValues(container: HTMLElement, store: SessionStore): void {
  for (const spec of store.schema) {
    const row = container.querySelector(`[data-feature="${spec.name}"]`);
    const input = row?.querySelector("input") as HTMLInputElement | null;
    if (!input) continue;
    if (spec.kind === "binary-categorical") {
      input.checked = store.current[spec.name] === 1;
    } else if (document.activeElement !== input) {
      input.value = String(store.current[spec.name]);
    }
  }
}

export function renderGauge(container: HTMLElement, store: SessionStore): void {
  container.innerHTML = "";
  if (!store.prediction) return;
  const g = buildGaugeView(store.prediction);
  const pct = Math.round(g.probability * 1000) / 10;
  const badge = el(
    "span",
    { class: g.atRisk ? "badge risk" : "badge ok" },
    g.label,
  );
  container.append(
    el("div", { class: "gauge-number" }, `${pct}%`),
    el("div", { class: "gauge-caption" }, "probability of CKD"),
    badge,
  );
  const bar = el("div", { class: "gauge-track" });
  const fill = el("div", { class: "gauge-fill" });
  fill.style.width = `${g.probability * 100}%`;
  const mark = el("div", { class: "gauge-threshold" });
  mark.style.left = `${g.threshold * 100}%`;
  mark.title = `operating threshold ${g.threshold.toFixed(3)}`;
  bar.append(fill, mark);
  container.append(bar);
  if (store.prediction.warnings?.length) {
    const w = store.prediction.warnings
      .map((x) => x.message)
      .join("; ");
    container.append(el("div", { class: "warnings" }, w));
  }
}

export function renderAttributionBars(
  container: HTMLElement,
  store: SessionStore,
  topK = 10,
): void {
  container.innerHTML = "";
  if (!store.explanation) return;
  const view = buildAttributionView(store.explanation, topK);
  container.append(
    el(
      "div",
      { class: "bars-caption" },
      `base ${view.baseValue.toFixed(3)} -> ${view.displayedProbability.toFixed(3)}`,
    ),
  );
  for (const bar of view.bars) {
    const row = el("div", { class: "bar-row" });
    row.append(el("span", { class: "bar-label" }, bar.feature));
    const track = el("div", { class: "bar-track" });
    const fill = el("div", {
      class: bar.phi >= 0 ? "bar-fill pos" : "bar-fill neg",
    });
    fill.style.width = `${Math.abs(bar.relative) * 50}%`;
    if (bar.phi >= 0) {
      fill.style.left = "50%";
    } else {
      fill.style.right = "50%";
    }
    track.append(fill);
    row.append(track, el("span", { class: "bar-phi" }, bar.phi.toFixed(4)));
    container.append(row);
  }
}

export function renderDiff(
  container: HTMLElement,
  store: SessionStore,
  onAdopt: () => void,
): void {
  container.innerHTML = "";
  const cf = store.counterfactual;
  if (!cf) return;
  if (!cf.found || !cf.counterfactual || !cf.reference) {
    container.append(
      el(
        "div",
        { class: "empty-state" },
        "No opposite-prediction record exists in the reference pool.",
      ),
    );
    return;
  }
  const order = store.schema.map((f) => f.name);
  const rows = buildDiffRows(
    order,
    cf.reference,
    cf.counterfactual,
    cf.changed_features ?? [],
  );
  const table = el("table", { class: "diff" });
  const head = el("tr");
  ["feature", "current", "counterfactual"].forEach((h) =>
    head.append(el("th", {}, h)),
  );
  table.append(head);
  const kinds = new Map(store.schema.map((f) => [f.name, f.kind]));
  for (const row of rows) {
    const tr = el("tr", { class: row.changed ? "changed" : "" });
    const isBinary = kinds.get(row.feature) === "binary-categorical";
    tr.append(
      el("td", {}, row.feature),
      el("td", {}, formatValue(row.reference, isBinary)),
      el("td", {}, formatValue(row.counterfactual, isBinary)),
    );
    table.append(tr);
  }
  const caption = el(
    "div",
    { class: "diff-caption" },
    `${cf.reference_prediction} -> ${cf.counterfactual_prediction}` +
      ` (distance ${cf.distance?.toFixed(3)})`,
  );
  const adopt = el("button", { class: "adopt" }, "adopt counterfactual");
  adopt.addEventListener("click", onAdopt);
  container.append(caption, table, adopt);
}

export function renderPdp(
  container: HTMLElement,
  curve: PdpResponse,
  currentValue: number,
): void {
  container.innerHTML = "";
  const view = buildPdpView(curve, currentValue);
  const W = 420;
  const H = 180;
  const pad = 34;
  const svg = svgEl("svg", {
    viewBox: `0 0 ${W} ${H}`,
    class: "pdp-chart",
  });
  const ymax = Math.max(...view.ys, 0.01);
  const ymin = Math.min(...view.ys, 0);
  const sy = (y: number) =>
    H - pad - ((y - ymin) / Math.max(ymax - ymin, 1e-9)) * (H - 2 * pad);

  if (view.isBinary) {
    const names = ["no", "yes"];
    view.xs.forEach((_, i) => {
      const x = pad + 40 + i * 120;
      const y = sy(view.ys[i]);
      svg.append(
        svgEl("rect", {
          x: String(x),
          y: String(y),
          width: "60",
          height: String(H - pad - y),
          class: i === view.markerIndex ? "pdp-bar current" : "pdp-bar",
        }),
      );
      const label = svgEl("text", {
        x: String(x + 30),
        y: String(H - pad + 14),
        "text-anchor": "middle",
        class: "pdp-tick",
      });
      label.textContent = names[i] ?? String(view.xs[i]);
      svg.append(label);
    });
  } else {
    const xmin = view.xs[0];
    const xmax = view.xs[view.xs.length - 1];
    const sx = (x: number) =>
      pad + ((x - xmin) / Math.max(xmax - xmin, 1e-9)) * (W - 2 * pad);
    const path = view.xs
      .map((x, i) => `${i ? "L" : "M"}${sx(x).toFixed(1)},${sy(view.ys[i]).toFixed(1)}`)
      .join(" ");
    svg.append(svgEl("path", { d: path, class: "pdp-line" }));
    const mx = sx(Math.min(Math.max(view.markerValue, xmin), xmax));
    svg.append(
      svgEl("circle", {
        cx: String(mx),
        cy: String(sy(view.ys[view.markerIndex])),
        r: "5",
        class: "pdp-marker",
      }),
    );
    [xmin, xmax].forEach((x) => {
      const t = svgEl("text", {
        x: String(sx(x)),
        y: String(H - pad + 14),
        "text-anchor": "middle",
        class: "pdp-tick",
      });
      t.textContent = x.toFixed(1);
      svg.append(t);
    });
  }
  const title = el(
    "div",
    { class: "pdp-title" },
    `${view.feature}${view.unit && !view.isBinary ? ` (${view.unit})` : ""}`,
  );
  container.append(title, svg);
}
