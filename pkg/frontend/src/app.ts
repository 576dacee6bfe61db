/** Entry point: wires the store to the page. One session per tab. */

import { ApiClient } from "./api.js";
import { buildMatrixGrid, paint } from "./dom.js";
import { IDENTITY, renderLayout } from "./render.js";
import { EditorStore, describeApiError } from "./state.js";
import { NodeRecord } from "./types.js";

const SERVICE_URL = (window as any).LAYOUTLAB_URL ?? "http://127.0.0.1:8321";

const store = new EditorStore(new ApiClient(SERVICE_URL));

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node as T;
}

function redraw() {
  const view = store.current();
  const before = el<HTMLCanvasElement>("before-canvas").getContext("2d")!;
  paint(before, renderLayout(view.records, IDENTITY));
  buildMatrixGrid(el("matrix"), view.grid, view.conflicts, (channel, i, j) => {
    store
      .toggleRelation(channel, i, j)
      .then(redraw)
      .catch((err) => banner(describeApiError(err)));
  });
  const generation = store.generation();
  if (generation) {
    const after = el<HTMLCanvasElement>("after-canvas").getContext("2d")!;
    paint(after, renderLayout(generation.after, IDENTITY, new Set(), generation.report));
    el("re-display").textContent = `RE = ${generation.displayedRelationError.toFixed(6)}`;
  }
  const button = el<HTMLButtonElement>("regenerate");
  button.disabled = view.generationDisabled;
  el("conflicts").textContent = view.conflicts.length
    ? view.conflicts.map((c) => `${c.kind} ${c.channel} [${c.nodes.join(", ")}]`).join("; ")
    : "";
  for (const cleared of store.drainFlashes()) {
    banner(`cleared machine ${cleared.channel} (${cleared.i}, ${cleared.j})`, "flash");
  }
}

function banner(message: string, kind = "error") {
  const box = el("banner");
  box.className = kind;
  box.textContent = message;
}

el<HTMLInputElement>("file-input").addEventListener("change", async (event) => {
  const file = (event.target as HTMLInputElement).files?.[0];
  if (!file) return;
  try {
    const records = JSON.parse(await file.text()) as NodeRecord[];
    await store.loadFromDocument(records);
    redraw();
  } catch (err) {
    banner(describeApiError(err));
  }
});

el<HTMLButtonElement>("load-corpus").addEventListener("click", async () => {
  try {
    await store.loadFromCorpus(el<HTMLInputElement>("corpus-id").value);
    redraw();
  } catch (err) {
    banner(describeApiError(err));
  }
});

el<HTMLButtonElement>("regenerate").addEventListener("click", async () => {
  try {
    const insertK = Number(el<HTMLInputElement>("insert-k").value || "0");
    await store.regenerate("solver", Date.now() % 100000, insertK);
    redraw();
  } catch (err) {
    banner(describeApiError(err));
  }
});

el<HTMLButtonElement>("randomize").addEventListener("click", async () => {
  try {
    await store.randomize(3, Date.now() % 100000);
    redraw();
  } catch (err) {
    banner(describeApiError(err));
  }
});
