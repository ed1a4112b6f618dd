// Sample-card grid: one card per pending sample, with a class palette,
// a skip button, and keyboard focus tracking.

import { BatchSample, LabelValue } from "./api.js";
import { CardState } from "./controller.js";

export interface CardHandlers {
  onLabel: (sampleId: number, value: LabelValue) => void;
}

export function renderCards(
  container: HTMLElement,
  cards: CardState[],
  numClasses: number,
  focusedId: number | null,
  handlers: CardHandlers,
): void {
  const doc = container.ownerDocument;
  container.innerHTML = "";
  for (const card of cards) {
    container.appendChild(renderCard(doc, card, numClasses, focusedId, handlers));
  }
}

function renderCard(
  doc: Document,
  card: CardState,
  numClasses: number,
  focusedId: number | null,
  handlers: CardHandlers,
): HTMLElement {
  const el = doc.createElement("div");
  el.className = "card";
  el.dataset.sampleId = String(card.sample.id);
  if (card.sample.id === focusedId) el.classList.add("card-focused");
  if (card.submitted !== null) el.classList.add("card-done");

  el.appendChild(renderPreview(doc, card.sample));

  const meta = doc.createElement("div");
  meta.className = "card-meta";
  meta.textContent =
    card.submitted === null
      ? `sample ${card.sample.id}`
      : card.submitted === "skip"
        ? "skipped"
        : `labeled ${card.submitted}`;
  el.appendChild(meta);

  const palette = doc.createElement("div");
  palette.className = "palette";
  for (let c = 0; c < numClasses; c++) {
    const btn = doc.createElement("button");
    btn.textContent = String(c);
    btn.className = "palette-class";
    btn.disabled = card.submitted !== null || card.pending;
    btn.addEventListener("click", () => handlers.onLabel(card.sample.id, c));
    palette.appendChild(btn);
  }
  const skip = doc.createElement("button");
  skip.textContent = "skip";
  skip.className = "palette-skip";
  skip.disabled = card.submitted !== null || card.pending;
  skip.addEventListener("click", () => handlers.onLabel(card.sample.id, "skip"));
  palette.appendChild(skip);
  el.appendChild(palette);
  return el;
}

function renderPreview(doc: Document, sample: BatchSample): HTMLElement {
  if (sample.pixels) return renderPixels(doc, sample.pixels);
  const box = doc.createElement("div");
  box.className = "preview-scatter";
  if (sample.position) {
    // position is the served 2-D projection; axes scaled by the page via CSS
    const dot = doc.createElement("span");
    dot.className = "preview-dot";
    dot.style.left = `${50 + clamp(sample.position[0] * 6, -48, 48)}%`;
    dot.style.top = `${50 - clamp(sample.position[1] * 6, -48, 48)}%`;
    box.appendChild(dot);
    box.title = `(${sample.position[0].toFixed(2)}, ${sample.position[1].toFixed(2)})`;
  } else {
    box.textContent = sample.values.slice(0, 6).map((v) => v.toFixed(2)).join(", ");
  }
  return box;
}

function renderPixels(doc: Document, pixels: number[][]): HTMLElement {
  const canvas = doc.createElement("canvas");
  canvas.className = "preview-pixels";
  const rows = pixels.length;
  const cols = pixels[0]?.length ?? 0;
  canvas.width = cols;
  canvas.height = rows;
  const ctx = canvas.getContext("2d");
  if (ctx) {
    const img = ctx.createImageData(cols, rows);
    for (let r = 0; r < rows; r++) {
      for (let c = 0; c < cols; c++) {
        const v = Math.round(255 * (1 - pixels[r][c]));
        const o = 4 * (r * cols + c);
        img.data[o] = img.data[o + 1] = img.data[o + 2] = v;
        img.data[o + 3] = 255;
      }
    }
    ctx.putImageData(img, 0, 0);
  }
  return canvas;
}

function clamp(v: number, lo: number, hi: number): number {
  return Math.max(lo, Math.min(hi, v));
}
