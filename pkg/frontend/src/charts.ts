// Minimal canvas strip charts: no dependencies, redrawn at display rate.

import { HistoryPoint } from "./model.js";

export interface Series {
  label: string;
  color: string;
  pick: (p: HistoryPoint) => number;
  dashed?: boolean;
}

export function drawStrip(
  canvas: HTMLCanvasElement,
  points: readonly HistoryPoint[],
  series: Series[],
  options: { title: string; logScale?: boolean } = { title: "" },
): void {
  const ctx = canvas.getContext("2d");
  if (!ctx) return;
  const { width, height } = canvas;
  ctx.clearRect(0, 0, width, height);
  ctx.font = "11px sans-serif";
  ctx.fillStyle = "#444";
  ctx.fillText(options.title, 6, 12);
  if (points.length < 2) return;

  const t0 = points[0].t;
  const t1 = points[points.length - 1].t;
  const span = Math.max(t1 - t0, 1e-9);
  const transform = (v: number) =>
    options.logScale ? Math.log10(Math.max(Math.abs(v), 1e-12)) : v;

  let lo = Infinity;
  let hi = -Infinity;
  for (const s of series) {
    for (const p of points) {
      const v = transform(s.pick(p));
      if (v < lo) lo = v;
      if (v > hi) hi = v;
    }
  }
  if (!isFinite(lo) || !isFinite(hi)) return;
  if (hi - lo < 1e-9) {
    hi += 0.5;
    lo -= 0.5;
  }
  const pad = 16;
  const sx = (t: number) => pad + ((t - t0) / span) * (width - 2 * pad);
  const sy = (v: number) => height - pad - ((v - lo) / (hi - lo)) * (height - 2 * pad - 8);

  if (!options.logScale && lo < 0 && hi > 0) {
    ctx.strokeStyle = "#ccc";
    ctx.beginPath();
    ctx.moveTo(pad, sy(0));
    ctx.lineTo(width - pad, sy(0));
    ctx.stroke();
  }

  let lx = 60;
  for (const s of series) {
    ctx.strokeStyle = s.color;
    ctx.setLineDash(s.dashed ? [4, 3] : []);
    ctx.beginPath();
    points.forEach((p, i) => {
      const x = sx(p.t);
      const y = sy(transform(s.pick(p)));
      if (i === 0) ctx.moveTo(x, y);
      else ctx.lineTo(x, y);
    });
    ctx.stroke();
    ctx.setLineDash([]);
    ctx.fillStyle = s.color;
    ctx.fillText(s.label, lx, 12);
    lx += ctx.measureText(s.label).width + 14;
  }
}

export function drawBars(
  canvas: HTMLCanvasElement,
  values: number[],
  labels: string[],
  title: string,
): void {
  const ctx = canvas.getContext("2d");
  if (!ctx) return;
  const { width, height } = canvas;
  ctx.clearRect(0, 0, width, height);
  ctx.font = "11px sans-serif";
  ctx.fillStyle = "#444";
  ctx.fillText(title, 6, 12);
  if (values.length === 0) return;
  const hi = Math.max(...values, 1e-9);
  const bw = (width - 20) / values.length;
  values.forEach((v, i) => {
    const h = (v / hi) * (height - 40);
    ctx.fillStyle = "#4a7dbd";
    ctx.fillRect(10 + i * bw + 4, height - 18 - h, bw - 8, h);
    ctx.fillStyle = "#444";
    ctx.fillText(`${labels[i]}=${v.toPrecision(3)}`, 10 + i * bw + 2, height - 4);
  });
}
