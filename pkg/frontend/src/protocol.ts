// Wire schema v1 of the fatiguesim live service.

export interface DofSample {
  name: string;
  ma: number;
  mr: number;
  mf: number;
  rc: number;
  tl: number;
  torque: number;
}

export interface Frame {
  type: "frame";
  i: number;
  t: number;
  params: { F: number; R: number; r: number };
  dofs: DofSample[];
  mean_rc: number;
  behind?: number;
  pose?: { points: [number, number][] };
}

export interface Ack {
  type: "ack";
  applies_at: number;
  session?: string;
}

export interface ErrorMsg {
  type: "error";
  code: string;
  msg: string;
}

export type ServerMessage = Frame | Ack | ErrorMsg;

export interface ProfileScenario {
  kind: "profile";
  tl: number;
  params: { F: number; R: number; r: number };
  init?: "rested" | "random";
  seed?: number;
}

export interface ChainScenario {
  kind: "chain";
  model: "arm" | "hopper" | "pendulum";
  task: "hold" | "reach" | "hop" | "intermittent";
  params?: { F: number; R: number; r: number };
  init?: "rested" | "random";
  seed?: number;
}

export type Scenario = ProfileScenario | ChainScenario;

export type ClientMessage =
  | { type: "start"; scenario: Scenario }
  | { type: "set_params"; F?: number; R?: number; r?: number }
  | { type: "set_load"; tl: number }
  | { type: "pause" }
  | { type: "resume" }
  | { type: "reset"; mode: "rested" | "random"; seed?: number };

export function parseServerMessage(raw: string): ServerMessage | null {
  let msg: unknown;
  try {
    msg = JSON.parse(raw);
  } catch {
    return null;
  }
  if (typeof msg !== "object" || msg === null) return null;
  const t = (msg as { type?: unknown }).type;
  if (t === "frame" || t === "ack" || t === "error") return msg as ServerMessage;
  return null;
}
