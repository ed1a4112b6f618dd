// Line charts for accuracy and mean new-sample entropy by cycle, drawn on a
// bare canvas. Values plotted are exactly the served metrics records.

import { MetricsRecord } from "./api.js";

export interface Series {
  label: string;
  points: { x: number; y: number }[];
}

export function accuracySeries(records: MetricsRecord[]): Series[] {
  const groups = groupByStrategySeed(records);
  return [...groups.entries()].map(([label, recs]) => ({
    label,
    points: recs.map((r) => ({ x: r.cycle, y: r.accuracy })),
  }));
}

export function entropySeries(records: MetricsRecord[]): Series[] {
  const groups = groupByStrategySeed(records);
  return [...groups.entries()].map(([label, recs]) => ({
    label,
    points: recs
      .filter((r) => r.new_mean_entropy !== null)
      .map((r) => ({ x: r.cycle, y: r.new_mean_entropy as number })),
  }));
}

function groupByStrategySeed(records: MetricsRecord[]): Map<string, MetricsRecord[]> {
  const out = new Map<string, MetricsRecord[]>();
  for (const rec of records) {
    const key = `${rec.strategy}/seed${rec.seed}`;
    const list = out.get(key) ?? [];
    list.push(rec);
    out.set(key, list);
  }
  return out;
}

const PALETTE = ["#2563eb", "#dc2626", "#16a34a", "#9333ea", "#ea580c", "#0891b2"];

export function drawLineChart(
  canvas: HTMLCanvasElement,
  series: Series[],
  opts: { title: string; hidden?: Set<string> },
): void {
  const ctx = canvas.getContext("2d");
  if (!ctx) return;
  const w = canvas.width;
  const h = canvas.height;
  const pad = { left: 44, right: 12, top: 24, bottom: 24 };
  ctx.clearRect(0, 0, w, h);
  ctx.font = "12px sans-serif";
  ctx.fillStyle = "#111";
  ctx.fillText(opts.title, pad.left, 14);

  const visible = series.filter((s) => !(opts.hidden?.has(s.label)) && s.points.length);
  const pts = visible.flatMap((s) => s.points);
  if (!pts.length) {
    ctx.fillStyle = "#666";
    ctx.fillText("no data yet", w / 2 - 30, h / 2);
    return;
  }
  const xs = pts.map((p) => p.x);
  const ys = pts.map((p) => p.y);
  const x0 = Math.min(...xs);
  const x1 = Math.max(...xs, x0 + 1e-9);
  let y0 = Math.min(...ys);
  let y1 = Math.max(...ys);
  if (y1 - y0 < 1e-12) {
    y0 -= 0.5;
    y1 += 0.5;
  }
  const sx = (x: number) => pad.left + ((x - x0) / (x1 - x0)) * (w - pad.left - pad.right);
  const sy = (y: number) => h - pad.bottom - ((y - y0) / (y1 - y0)) * (h - pad.top - pad.bottom);

  ctx.strokeStyle = "#ddd";
  ctx.beginPath();
  ctx.moveTo(pad.left, pad.top);
  ctx.lineTo(pad.left, h - pad.bottom);
  ctx.lineTo(w - pad.right, h - pad.bottom);
  ctx.stroke();
  ctx.fillStyle = "#444";
  ctx.fillText(y1.toFixed(3), 2, sy(y1) + 4);
  ctx.fillText(y0.toFixed(3), 2, sy(y0) + 4);
  ctx.fillText(String(x0), sx(x0) - 3, h - 8);
  ctx.fillText(String(x1), sx(x1) - 6, h - 8);

  visible.forEach((s, i) => {
    ctx.strokeStyle = PALETTE[i % PALETTE.length];
    ctx.lineWidth = 1.5;
    ctx.beginPath();
    s.points.forEach((p, j) => {
      if (j === 0) ctx.moveTo(sx(p.x), sy(p.y));
      else ctx.lineTo(sx(p.x), sy(p.y));
    });
    ctx.stroke();
    s.points.forEach((p) => {
      ctx.fillStyle = ctx.strokeStyle as string;
      ctx.fillRect(sx(p.x) - 1.5, sy(p.y) - 1.5, 3, 3);
    });
  });
}

export function renderLegend(
  container: HTMLElement,
  series: Series[],
  hidden: Set<string>,
  onToggle: (label: string) => void,
): void {
  container.innerHTML = "";
  series.forEach((s, i) => {
    const item = container.ownerDocument.createElement("button");
    item.className = "legend-item" + (hidden.has(s.label) ? " legend-off" : "");
    item.dataset.label = s.label;
    const swatch = container.ownerDocument.createElement("span");
    swatch.className = "legend-swatch";
    swatch.style.background = PALETTE[i % PALETTE.length];
    item.append(swatch, s.label);
    item.addEventListener("click", () => onToggle(s.label));
    container.appendChild(item);
  });
}
