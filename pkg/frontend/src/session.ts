// Client-side session state: ordered frame buffer with gap markers,
// ack-gated parameter sliders with debounced commits, pause bookkeeping.
//
// The class is transport- and clock-agnostic so the scripted tests can
// drive it deterministically; main.ts plugs in a real WebSocket and
// setTimeout.

import {
  Ack,
  ClientMessage,
  ErrorMsg,
  Frame,
  Scenario,
  parseServerMessage,
} from "./protocol.js";

export type ParamName = "F" | "R" | "r" | "tl";

export interface Transport {
  send(text: string): void;
}

export type Scheduler = (fn: () => void, delayMs: number) => void;

export interface SliderState {
  /** last server-acknowledged value; what the simulation is running on */
  acknowledged: number;
  /** value shown on the control (follows the drag) */
  display: number;
  /** a commit is in flight and not acknowledged yet */
  pending: boolean;
}

interface InFlight {
  kind: "params" | "load" | "other";
  values: Partial<Record<ParamName, number>>;
}

/** ring capacity: a bit over 60 s at 30 frames/s */
export const BUFFER_CAPACITY = 2048;

/** trailing-debounce window; at most 10 messages/s */
export const DEBOUNCE_MS = 100;

export class SessionView {
  connection: "idle" | "live" | "closed" = "idle";
  paused = false;
  frames: Frame[] = [];
  /** frame indices whose predecessor never arrived (discontinuity markers) */
  gaps: number[] = [];
  dropped = 0; // out-of-order frames rejected
  sliders: Record<ParamName, SliderState>;
  lastError: ErrorMsg | null = null;
  sessionId: string | null = null;

  private inFlight: InFlight[] = [];
  private dirty: Partial<Record<ParamName, number>> = {};
  private flushScheduled = false;

  constructor(
    private transport: Transport,
    private schedule: Scheduler,
    initial: { F: number; R: number; r: number; tl: number },
  ) {
    const slider = (v: number): SliderState => ({
      acknowledged: v,
      display: v,
      pending: false,
    });
    this.sliders = {
      F: slider(initial.F),
      R: slider(initial.R),
      r: slider(initial.r),
      tl: slider(initial.tl),
    };
  }

  // -- outbound ------------------------------------------------------------

  start(scenario: Scenario): void {
    this.send({ type: "start", scenario });
  }

  /** Follow a slider drag; the commit is trailing-debounced, so a whole
   * drag burst becomes one message sent DEBOUNCE_MS after it began. */
  sliderInput(name: ParamName, value: number): void {
    this.sliders[name].display = value;
    this.dirty[name] = value;
    if (!this.flushScheduled) {
      this.flushScheduled = true;
      this.schedule(() => this.flushCommits(), DEBOUNCE_MS);
    }
  }

  private flushCommits(): void {
    this.flushScheduled = false;
    const dirty = this.dirty;
    this.dirty = {};
    const params: Partial<Record<"F" | "R" | "r", number>> = {};
    for (const key of ["F", "R", "r"] as const) {
      if (key in dirty) {
        params[key] = dirty[key];
        this.sliders[key].pending = true;
      }
    }
    if (Object.keys(params).length > 0) {
      this.inFlight.push({ kind: "params", values: { ...params } });
      this.send({ type: "set_params", ...params });
    }
    if ("tl" in dirty) {
      this.sliders.tl.pending = true;
      this.inFlight.push({ kind: "load", values: { tl: dirty.tl } });
      this.send({ type: "set_load", tl: dirty.tl as number });
    }
  }

  pause(): void {
    this.paused = true;
    this.inFlight.push({ kind: "other", values: {} });
    this.send({ type: "pause" });
  }

  resume(): void {
    this.paused = false;
    this.inFlight.push({ kind: "other", values: {} });
    this.send({ type: "resume" });
  }

  reset(mode: "rested" | "random", seed?: number): void {
    this.inFlight.push({ kind: "other", values: {} });
    this.send(seed === undefined ? { type: "reset", mode } : { type: "reset", mode, seed });
  }

  private send(msg: ClientMessage): void {
    this.transport.send(JSON.stringify(msg));
  }

  // -- inbound -------------------------------------------------------------

  onMessage(raw: string): void {
    const msg = parseServerMessage(raw);
    if (!msg) return;
    if (msg.type === "frame") this.onFrame(msg);
    else if (msg.type === "ack") this.onAck(msg);
    else this.onError(msg);
  }

  onClose(): void {
    this.connection = "closed";
  }

  private onFrame(frame: Frame): void {
    const last = this.latestFrame();
    if (last !== null) {
      if (frame.i <= last.i) {
        this.dropped += 1; // never display frames out of order
        return;
      }
      if (frame.i > last.i + 1) {
        this.gaps.push(frame.i); // mark the discontinuity, never interpolate
      }
    }
    this.connection = "live";
    this.frames.push(frame);
    if (this.frames.length > BUFFER_CAPACITY) {
      this.frames.splice(0, this.frames.length - BUFFER_CAPACITY);
    }
  }

  private onAck(ack: Ack): void {
    if (ack.session) {
      this.sessionId = ack.session; // start handshake, not a commit ack
      return;
    }
    const flight = this.inFlight.shift();
    if (!flight) return;
    for (const [name, value] of Object.entries(flight.values)) {
      const slider = this.sliders[name as ParamName];
      slider.acknowledged = value as number;
      slider.pending = false;
      slider.display = value as number;
    }
  }

  private onError(err: ErrorMsg): void {
    this.lastError = err;
    const flight = this.inFlight.shift();
    if (!flight) return;
    // rejected commit: snap back to the last acknowledged values
    for (const name of Object.keys(flight.values)) {
      const slider = this.sliders[name as ParamName];
      slider.pending = false;
      slider.display = slider.acknowledged;
    }
  }

  // -- views ---------------------------------------------------------------

  latestFrame(): Frame | null {
    return this.frames.length ? this.frames[this.frames.length - 1] : null;
  }

  /** frames to plot, oldest first, spanning at most `seconds` of sim time */
  window(seconds: number): Frame[] {
    const last = this.latestFrame();
    if (!last) return [];
    const cutoff = last.t - seconds;
    return this.frames.filter((f) => f.t >= cutoff);
  }

  hasGapWithin(seconds: number): boolean {
    const win = this.window(seconds);
    if (!win.length) return false;
    const lo = win[0].i;
    return this.gaps.some((g) => g >= lo);
  }
}
