// Pure view-model helpers: everything the canvas layer draws is computed
// here so the scripted tests can assert on it without a DOM.

import { Frame } from "./protocol.js";

/** Health bar fill fraction: the streamed mean residual capacity. */
export function healthFraction(frame: Frame): number {
  return Math.min(1, Math.max(0, frame.mean_rc));
}

/** Client-side recomputation, used to cross-check the streamed field. */
export function meanRcFromDofs(frame: Frame): number {
  const sum = frame.dofs.reduce((acc, d) => acc + d.rc, 0);
  return sum / frame.dofs.length;
}

/**
 * Joint tint on a white -> pink -> red ramp over fatigued share 0..100.
 * White at rest, pink mid-fatigue, saturated red at full exhaustion.
 */
export function jointTint(mf: number): string {
  const x = Math.min(100, Math.max(0, mf)) / 100;
  let r = 255;
  let g: number;
  let b: number;
  if (x <= 0.5) {
    const w = x / 0.5; // white (255,255,255) -> pink (255,105,180)
    g = Math.round(255 - w * (255 - 105));
    b = Math.round(255 - w * (255 - 180));
  } else {
    const w = (x - 0.5) / 0.5; // pink -> red (255,0,0)
    g = Math.round(105 * (1 - w));
    b = Math.round(180 * (1 - w));
  }
  return `rgb(${r},${g},${b})`;
}

export interface StackedPoint {
  t: number;
  ma: number;
  mr: number;
  mf: number;
  total: number;
}

/** Stacked compartment series for one DoF over a frame window. */
export function stackedSeries(frames: Frame[], dof: number): StackedPoint[] {
  return frames.map((f) => {
    const d = f.dofs[dof];
    return { t: f.t, ma: d.ma, mr: d.mr, mf: d.mf, total: d.ma + d.mr + d.mf };
  });
}

export interface HealthView {
  fraction: number;
  consistent: boolean; // streamed mean_rc matches the per-DoF recompute
  tints: { name: string; color: string; mf: number }[];
  stale: boolean;
}

export function renderHealthAndJoints(
  frame: Frame | null,
  connectionLive: boolean,
  displayPrecision = 1e-9,
): HealthView {
  if (!frame) {
    return { fraction: 0, consistent: true, tints: [], stale: true };
  }
  return {
    fraction: healthFraction(frame),
    consistent: Math.abs(meanRcFromDofs(frame) - frame.mean_rc) <= displayPrecision,
    tints: frame.dofs.map((d) => ({ name: d.name, color: jointTint(d.mf), mf: d.mf })),
    stale: !connectionLive,
  };
}
