// Canvas drawing for the live dashboard: stacked compartment areas, a
// residual-capacity trace, the health bar and the 2D stick figure.

import { Frame } from "./protocol.js";
import { HealthView, jointTint, stackedSeries } from "./render.js";
import { SessionView } from "./session.js";

const COLORS = { ma: "#4caf50", mr: "#90caf9", mf: "#ef5350" };

export function drawCompartmentChart(
  canvas: HTMLCanvasElement,
  session: SessionView,
  dof: number,
  windowSeconds = 60,
): void {
  const ctx = canvas.getContext("2d");
  if (!ctx) return;
  const { width: w, height: h } = canvas;
  ctx.clearRect(0, 0, w, h);
  const frames = session.window(windowSeconds);
  if (frames.length < 2) return;
  const pts = stackedSeries(frames, dof);
  const t0 = pts[0].t;
  const t1 = pts[pts.length - 1].t;
  const x = (t: number) => ((t - t0) / Math.max(1e-9, t1 - t0)) * w;
  const y = (v: number) => h - (v / 100) * h;

  const layers: ["mf", "ma", "mr"] = ["mf", "ma", "mr"];
  let base = pts.map(() => 0);
  for (const layer of layers) {
    ctx.beginPath();
    pts.forEach((p, k) => {
      const v = base[k] + p[layer];
      k === 0 ? ctx.moveTo(x(p.t), y(v)) : ctx.lineTo(x(p.t), y(v));
    });
    for (let k = pts.length - 1; k >= 0; k--) {
      ctx.lineTo(x(pts[k].t), y(base[k]));
    }
    ctx.closePath();
    ctx.fillStyle = COLORS[layer];
    ctx.globalAlpha = 0.75;
    ctx.fill();
    base = pts.map((p, k) => base[k] + p[layer]);
  }
  ctx.globalAlpha = 1;

  // discontinuity markers: vertical dashes where frames went missing
  ctx.strokeStyle = "#ff9800";
  ctx.setLineDash([4, 3]);
  for (const gap of session.gaps) {
    const frame = frames.find((f) => f.i === gap);
    if (!frame) continue;
    ctx.beginPath();
    ctx.moveTo(x(frame.t), 0);
    ctx.lineTo(x(frame.t), h);
    ctx.stroke();
  }
  ctx.setLineDash([]);
}

export function drawRcChart(
  canvas: HTMLCanvasElement,
  session: SessionView,
  windowSeconds = 60,
): void {
  const ctx = canvas.getContext("2d");
  if (!ctx) return;
  const { width: w, height: h } = canvas;
  ctx.clearRect(0, 0, w, h);
  const frames = session.window(windowSeconds);
  if (frames.length < 2) return;
  const t0 = frames[0].t;
  const t1 = frames[frames.length - 1].t;
  ctx.strokeStyle = "#ffd54f";
  ctx.lineWidth = 2;
  ctx.beginPath();
  frames.forEach((f, k) => {
    const px = ((f.t - t0) / Math.max(1e-9, t1 - t0)) * w;
    const py = h - f.mean_rc * h;
    k === 0 ? ctx.moveTo(px, py) : ctx.lineTo(px, py);
  });
  ctx.stroke();
}

export function drawHealthBar(canvas: HTMLCanvasElement, view: HealthView): void {
  const ctx = canvas.getContext("2d");
  if (!ctx) return;
  const { width: w, height: h } = canvas;
  ctx.clearRect(0, 0, w, h);
  ctx.fillStyle = "#263238";
  ctx.fillRect(0, 0, w, h);
  const hue = 120 * view.fraction; // green when full, red when drained
  ctx.fillStyle = view.stale ? "#616161" : `hsl(${hue}, 70%, 45%)`;
  ctx.fillRect(2, 2, (w - 4) * view.fraction, h - 4);
  ctx.strokeStyle = "#eceff1";
  ctx.strokeRect(0.5, 0.5, w - 1, h - 1);
}

export function drawFigure(canvas: HTMLCanvasElement, frame: Frame | null): void {
  const ctx = canvas.getContext("2d");
  if (!ctx) return;
  const { width: w, height: h } = canvas;
  ctx.clearRect(0, 0, w, h);
  if (!frame) return;
  ctx.strokeStyle = "#455a64";
  ctx.beginPath();
  ctx.moveTo(0, h - 20.5);
  ctx.lineTo(w, h - 20.5);
  ctx.stroke(); // ground reference

  if (!frame.pose) {
    // pure-profile scenario: a single pool, drawn as one tinted disc
    const d = frame.dofs[0];
    ctx.fillStyle = jointTint(d.mf);
    ctx.beginPath();
    ctx.arc(w / 2, h / 2, 24, 0, 2 * Math.PI);
    ctx.fill();
    ctx.strokeStyle = "#222";
    ctx.stroke();
    return;
  }

  const pts = frame.pose.points;
  const scale = Math.min(w, h) / 4.2;
  // hanging chains anchor near the top, standing ones at the ground line
  const hangs = pts[pts.length - 1][1] < pts[0][1];
  const baseY = hangs ? 40 : h - 20;
  const px = (p: [number, number]) => w / 2 + (p[0] - pts[0][0]) * scale;
  const py = (p: [number, number]) => baseY - (p[1] - (hangs ? pts[0][1] : 0)) * scale;
  ctx.lineWidth = 5;
  ctx.lineCap = "round";
  for (let k = 0; k + 1 < pts.length; k++) {
    // link k+1 is driven by joint k; tint it by that joint's fatigue
    ctx.strokeStyle = jointTint(frame.dofs[Math.min(k, frame.dofs.length - 1)].mf);
    ctx.beginPath();
    ctx.moveTo(px(pts[k]), py(pts[k]));
    ctx.lineTo(px(pts[k + 1]), py(pts[k + 1]));
    ctx.stroke();
  }
  ctx.lineWidth = 1;
  for (const p of pts) {
    ctx.fillStyle = "#37474f";
    ctx.beginPath();
    ctx.arc(px(p), py(p), 3.5, 0, 2 * Math.PI);
    ctx.fill();
  }
}
