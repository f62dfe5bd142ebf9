// DOM wiring: connect to the live service, bind sliders and buttons to a
// SessionView, repaint at display refresh.

import { drawCompartmentChart, drawFigure, drawHealthBar, drawRcChart } from "./charts.js";
import { Scenario } from "./protocol.js";
import { renderHealthAndJoints } from "./render.js";
import { ParamName, SessionView } from "./session.js";

const $ = <T extends HTMLElement>(id: string): T => {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing element #${id}`);
  return el as T;
};

function scenarioFromSelection(session: SessionView): Scenario {
  const choice = $<HTMLSelectElement>("scenario").value;
  const params = {
    F: session.sliders.F.display,
    R: session.sliders.R.display,
    r: session.sliders.r.display,
  };
  if (choice === "profile") {
    return { kind: "profile", tl: session.sliders.tl.display, params };
  }
  const [model, task] = choice.split(":") as [
    "arm" | "hopper" | "pendulum",
    "hold" | "reach" | "hop" | "intermittent",
  ];
  return { kind: "chain", model, task, params };
}

function connect(): void {
  const url = $<HTMLInputElement>("server-url").value;
  const ws = new WebSocket(url);
  const session = new SessionView(
    { send: (text) => ws.send(text) },
    (fn, ms) => window.setTimeout(fn, ms),
    { F: 1.0, R: 0.05, r: 1.0, tl: 30.0 },
  );
  ws.onopen = () => session.start(scenarioFromSelection(session));
  ws.onmessage = (ev) => session.onMessage(String(ev.data));
  ws.onclose = () => session.onClose();
  ws.onerror = () => session.onClose();
  bind(session);
}

function bind(session: SessionView): void {
  for (const name of ["F", "R", "r", "tl"] as ParamName[]) {
    const input = $<HTMLInputElement>(`slider-${name}`);
    const label = $<HTMLSpanElement>(`value-${name}`);
    input.value = String(session.sliders[name].display);
    input.oninput = () => session.sliderInput(name, Number(input.value));
    const paint = () => {
      const s = session.sliders[name];
      label.textContent = s.display.toFixed(3) + (s.pending ? " (pending)" : "");
      if (!s.pending && document.activeElement !== input) {
        input.value = String(s.display);
      }
    };
    repaints.push(paint);
  }
  $<HTMLButtonElement>("pause").onclick = () => session.pause();
  $<HTMLButtonElement>("resume").onclick = () => session.resume();
  $<HTMLButtonElement>("reset").onclick = () => session.reset("rested");

  const compartments = $<HTMLCanvasElement>("compartments");
  const rc = $<HTMLCanvasElement>("rc");
  const health = $<HTMLCanvasElement>("health");
  const figure = $<HTMLCanvasElement>("figure");
  const status = $<HTMLSpanElement>("status");
  const jointList = $<HTMLDivElement>("joints");

  repaints.push(() => {
    const frame = session.latestFrame();
    const view = renderHealthAndJoints(frame, session.connection === "live");
    drawCompartmentChart(compartments, session, 0);
    drawRcChart(rc, session);
    drawHealthBar(health, view);
    drawFigure(figure, frame);
    status.textContent =
      session.connection === "live"
        ? `live - frame ${frame?.i ?? 0}${session.paused ? " (paused)" : ""}` +
          (session.hasGapWithin(60) ? " - gaps!" : "")
        : session.connection;
    jointList.innerHTML = view.tints
      .map(
        (t) =>
          `<span class="joint" style="background:${t.color}">` +
          `${t.name} ${t.mf.toFixed(0)}</span>`,
      )
      .join(" ");
  });
}

const repaints: (() => void)[] = [];

function loop(): void {
  for (const fn of repaints) fn();
  window.requestAnimationFrame(loop);
}

window.addEventListener("DOMContentLoaded", () => {
  $<HTMLButtonElement>("connect").onclick = connect;
  loop();
});
