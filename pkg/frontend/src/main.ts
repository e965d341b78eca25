/** Studio UI wiring: connect, edit, history, delta view, and compare panes. */

import { EditServiceClient, ServiceError } from "./client.js";
import { parsePc6 } from "./codec.js";
import { ComparePanes } from "./compare.js";
import { PointRenderer, ColorMode } from "./renderer.js";
import { StudioSession, drawSeed } from "./state.js";
import { drawThumbnail } from "./thumbnails.js";
import type { ParamSpec } from "./types.js";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

const banner = el<HTMLDivElement>("banner");
const connectPanel = el<HTMLDivElement>("connect-panel");
const editorPanel = el<HTMLDivElement>("editor-panel");
const shapeForm = el<HTMLDivElement>("shape-form");
const historyStrip = el<HTMLDivElement>("history-strip");
const pointCount = el<HTMLSpanElement>("point-count");
const deltaReadout = el<HTMLSpanElement>("delta-readout");
const seedReadout = el<HTMLSpanElement>("seed-readout");
const compareWrap = el<HTMLDivElement>("compare-wrap");
const chamferReadout = el<HTMLSpanElement>("chamfer-readout");

let client: EditServiceClient | null = null;
let session: StudioSession | null = null;
let renderer: PointRenderer | null = null;
let compare: ComparePanes | null = null;
let colorMode: ColorMode = "rgb";
let shapeParams: Record<string, number | boolean> = {};

function showBanner(message: string, retry?: () => void): void {
  banner.textContent = message;
  banner.style.display = "block";
  if (retry) {
    const button = document.createElement("button");
    button.textContent = "retry";
    button.onclick = () => {
      banner.style.display = "none";
      retry();
    };
    banner.appendChild(button);
  }
}

function describeError(err: unknown): string {
  if (err instanceof ServiceError) {
    return err.status === 0 ? err.message : `server error ${err.status}: ${err.message}`;
  }
  return String(err);
}

function redraw(): void {
  if (!renderer || !session) return;
  const reference = colorMode === "delta" ? session.previousCloud() : null;
  renderer.setCloud(session.currentCloud(), colorMode, reference);
  renderer.draw();
  pointCount.textContent = String(session.currentCloud().n);
  const delta = session.deltaReadout();
  deltaReadout.textContent = Number.isNaN(delta) ? "n/a" : delta.toExponential(3);
}

function renderHistory(): void {
  if (!session) return;
  historyStrip.replaceChildren();
  const makeThumb = (label: string, index: number, cloud = index < 0
    ? session!.initial : session!.items[index].cloud) => {
    const cell = document.createElement("div");
    cell.className = "thumb" + (index === session!.current ? " active" : "");
    const canvas = document.createElement("canvas");
    canvas.width = 72;
    canvas.height = 72;
    drawThumbnail(canvas, cloud);
    const caption = document.createElement("span");
    caption.textContent = label;
    cell.append(canvas, caption);
    historyStrip.appendChild(cell);
  };
  makeThumb("initial", -1);
  session.items.forEach((item, i) => makeThumb(`${i}: ${item.instruction}`, i));
  const selA = el<HTMLSelectElement>("compare-a");
  const selB = el<HTMLSelectElement>("compare-b");
  for (const sel of [selA, selB]) {
    sel.replaceChildren();
    const opt = document.createElement("option");
    opt.value = "-1";
    opt.textContent = "initial";
    sel.appendChild(opt);
    session.items.forEach((item, i) => {
      const o = document.createElement("option");
      o.value = String(i);
      o.textContent = `${i}: ${item.instruction}`;
      sel.appendChild(o);
    });
  }
}

async function settle(): Promise<void> {
  if (!session) return;
  await session.reconcile();
  renderHistory();
  redraw();
}

async function connectWithCloud(wire: ReturnType<typeof parsePc6>): Promise<void> {
  if (!client) return;
  session = await StudioSession.fromCloud(client, wire);
  enterEditor();
}

function enterEditor(): void {
  connectPanel.style.display = "none";
  editorPanel.style.display = "block";
  renderer = new PointRenderer(el<HTMLCanvasElement>("viewer"));
  renderer.attachControls(() => renderer && renderer.draw());
  renderHistory();
  redraw();
  el<HTMLInputElement>("instruction").focus();
}

async function buildShapeForm(category: string): Promise<void> {
  if (!client) return;
  shapeParams = {};
  shapeForm.replaceChildren();
  const registry = await client.paramRegistry(category);
  registry.params.forEach((spec: ParamSpec) => {
    const row = document.createElement("label");
    row.className = "param-row";
    const caption = document.createElement("span");
    caption.textContent = `${spec.name} (${spec.property})`;
    row.appendChild(caption);
    if (spec.kind === "boolean") {
      const box = document.createElement("input");
      box.type = "checkbox";
      box.checked = Boolean(spec.default);
      box.onchange = () => (shapeParams[spec.name] = box.checked);
      row.appendChild(box);
    } else {
      const slider = document.createElement("input");
      slider.type = "range";
      slider.min = String(spec.lo);
      slider.max = String(spec.hi);
      slider.step = spec.kind === "integer" ? "1" : String((spec.hi - spec.lo) / 100);
      slider.value = String(spec.default);
      slider.oninput = () => {
        shapeParams[spec.name] = spec.kind === "integer"
          ? parseInt(slider.value, 10) : parseFloat(slider.value);
      };
      row.appendChild(slider);
    }
    shapeForm.appendChild(row);
  });
}

function wireConnectPanel(): void {
  const urlInput = el<HTMLInputElement>("server-url");
  urlInput.value = window.location.origin;

  el<HTMLInputElement>("pc6-file").addEventListener("change", async (event) => {
    const input = event.target as HTMLInputElement;
    const file = input.files && input.files[0];
    if (!file) return;
    client = new EditServiceClient(urlInput.value);
    try {
      const wire = parsePc6(await file.arrayBuffer());
      await connectWithCloud(wire);
    } catch (err) {
      el<HTMLSpanElement>("file-error").textContent = describeError(err);
    }
  });

  const categorySelect = el<HTMLSelectElement>("shape-category");
  categorySelect.addEventListener("change", () => {
    client = new EditServiceClient(urlInput.value);
    buildShapeForm(categorySelect.value).catch((err) =>
      showBanner(describeError(err), () => buildShapeForm(categorySelect.value)));
  });

  el<HTMLButtonElement>("shape-create").addEventListener("click", async () => {
    client = new EditServiceClient(urlInput.value);
    try {
      session = await StudioSession.fromShape(client, categorySelect.value, shapeParams);
      enterEditor();
    } catch (err) {
      showBanner(describeError(err), () => el<HTMLButtonElement>("shape-create").click());
    }
  });
}

function wireEditorPanel(): void {
  const instruction = el<HTMLInputElement>("instruction");
  const submit = el<HTMLButtonElement>("submit");

  submit.addEventListener("click", async () => {
    if (!session || session.busy || !instruction.value.trim()) return;
    submit.disabled = true;
    try {
      const seed = drawSeed();
      const item = await session.edit(instruction.value.trim(), {
        sampler: el<HTMLSelectElement>("sampler").value as "ddim" | "ddpm",
        steps: parseInt(el<HTMLInputElement>("steps").value, 10),
        guidance: parseFloat(el<HTMLInputElement>("guidance").value),
        seed,
      });
      seedReadout.textContent = String(item.seed);
      instruction.value = "";
      await settle();
    } catch (err) {
      showBanner(describeError(err));
    } finally {
      submit.disabled = false;
      instruction.focus();
    }
  });
  instruction.addEventListener("keydown", (e) => {
    if (e.key === "Enter") submit.click();
  });

  el<HTMLButtonElement>("undo").addEventListener("click", async () => {
    if (!session || session.busy) return;
    try {
      await session.undo();
      await settle();
    } catch (err) {
      showBanner(describeError(err));
    }
  });

  el<HTMLSelectElement>("color-mode").addEventListener("change", (e) => {
    colorMode = (e.target as HTMLSelectElement).value as ColorMode;
    redraw();
  });

  el<HTMLButtonElement>("compare-show").addEventListener("click", () => {
    if (!session) return;
    compareWrap.style.display = "block";
    if (!compare) {
      compare = new ComparePanes(el<HTMLCanvasElement>("compare-left"),
                                 el<HTMLCanvasElement>("compare-right"),
                                 (d) => (chamferReadout.textContent = d.toFixed(5)));
    }
    const pick = (id: string) => {
      const index = parseInt(el<HTMLSelectElement>(id).value, 10);
      return index < 0 ? session!.initial : session!.items[index].cloud;
    };
    compare.show(pick("compare-a"), pick("compare-b"));
  });
}

wireConnectPanel();
wireEditorPanel();
buildShapeForm(el<HTMLSelectElement>("shape-category").value).catch(() => {
  /* server not reachable yet; the connect button surfaces the error */
});
