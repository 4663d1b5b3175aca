/** Bootstrap: fetch the schema, build the form, wire panels together. */

import { httpTransport } from "./api.js";
import {
  renderAttributionBars,
  renderDiff,
  renderForm,
  renderGauge,
  renderPdp,
  syncFormValues,
} from "./render.js";
import { SessionStore } from "./state.js";

async function boot(): Promise<void> {
  const base = window.location.origin;
  const transport = httpTransport(base);
  const meta = await transport.meta();
  const store = new SessionStore(meta, transport);

  const formBox = document.getElementById("patient-form")!;
  const gaugeBox = document.getElementById("gauge")!;
  const barsBox = document.getElementById("attribution")!;
  const diffBox = document.getElementById("counterfactual")!;
  const pdpBox = document.getElementById("pdp")!;
  const pdpSelect = document.getElementById("pdp-feature") as HTMLSelectElement;
  const undoBtn = document.getElementById("undo") as HTMLButtonElement;
  const redoBtn = document.getElementById("redo") as HTMLButtonElement;
  const cfBtn = document.getElementById("find-cf") as HTMLButtonElement;
  const pinBtn = document.getElementById("pin") as HTMLButtonElement;
  const pinState = document.getElementById("pin-state")!;

  // Schema-driven feature menu; the UI carries no hardcoded feature list.
  for (const f of store.schema) {
    const opt = document.createElement("option");
    opt.value = f.name;
    opt.textContent = f.name;
    pdpSelect.append(opt);
  }
  pdpSelect.value = store.schema.some((f) => f.name === "eGFR")
    ? "eGFR"
    : store.schema[0].name;

  async function refreshPdp(): Promise<void> {
    try {
      const curve = await transport.pdp(pdpSelect.value);
      renderPdp(pdpBox, curve, store.current[pdpSelect.value]);
    } catch {
      pdpBox.textContent = "dependence curve unavailable";
    }
  }

  renderForm(formBox, store);
  store.onChange(() => {
    syncFormValues(formBox, store);
    renderGauge(gaugeBox, store);
    renderAttributionBars(barsBox, store);
    renderDiff(diffBox, store, () => void store.adoptCounterfactual());
    undoBtn.disabled = !store.canUndo;
    redoBtn.disabled = !store.canRedo;
    void refreshPdp();
  });

  undoBtn.addEventListener("click", () => store.undo());
  redoBtn.addEventListener("click", () => store.redo());
  cfBtn.addEventListener("click", () => void store.requestCounterfactual());
  pinBtn.addEventListener("click", () => {
    store.pinReference();
    pinState.textContent = "reference pinned";
  });
  pdpSelect.addEventListener("change", () => void refreshPdp());

  await store.refresh();
}

void boot();
