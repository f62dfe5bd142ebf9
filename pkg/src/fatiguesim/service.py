"""Live parameter-steering service.

One websocket connection hosts one session: the server steps a scenario in
real time (30 control frames per second) and streams state frames, while
the client adjusts fatigue parameters, target load, pause/resume and reset
on the fly. Updates queue on the connection and are drained between
control steps, so a frame never reflects a half-applied update and the
acknowledgment can name the exact frame index the new values govern.

Wire schema v1 (JSON text messages):

  client -> server
    {"type":"start","scenario":{...}}
    {"type":"set_params","F":1.0,"R":0.05,"r":10.0}   (subset allowed)
    {"type":"set_load","tl":40.0}
    {"type":"pause"} {"type":"resume"}
    {"type":"reset","mode":"rested"|"random","seed":7}

  server -> client
    {"type":"frame","i":0,"t":0.0,"params":{"F":..,"R":..,"r":..},
     "dofs":[{"name":..,"ma":..,"mr":..,"mf":..,"rc":..,"tl":..,"torque":..}],
     "mean_rc":1.0,"behind":0.0, ...pose fields for chain scenarios}
    {"type":"ack","applies_at":12}
    {"type":"error","code":"bad_request","msg":"..."}

Scenario objects:
    {"kind":"profile","tl":30,"params":{"F":1,"R":0.05,"r":1},
     "init":"rested"|"random","seed":0,"dt":0.0333,"pace":true}
    {"kind":"chain","model":"arm"|"hopper"|"pendulum","task":"hold"|...,
     "params":{...},"init":...,"seed":...,"pace":true}

Frames are never skipped; if stepping falls behind the wall clock the
frame reports how far behind in its "behind" field.
"""

from __future__ import annotations

import asyncio
import json
import math
import time
from dataclasses import dataclass

from websockets.asyncio.server import serve

from .core import CompartmentState, ThreeCCParams, init_state, residual_capacity, step
from .harness import ChainSim, SimConfig, calibrate_bounds, preset_task, PRESET_MODELS
from .chain import joint_positions

DEFAULT_HOST = "127.0.0.1"
DEFAULT_PORT = 8765
CONTROL_DT = 1.0 / 30.0


class ScenarioError(ValueError):
    pass


def _parse_params(obj) -> ThreeCCParams:
    try:
        return ThreeCCParams(
            float(obj.get("F", 1.0)),
            float(obj.get("R", 0.05)),
            float(obj.get("r", 1.0)),
            float(obj.get("LD", 10.0)),
            float(obj.get("LR", 10.0)),
        )
    except (TypeError, ValueError) as exc:
        raise ScenarioError(f"bad parameters: {exc}") from exc


class ProfileScenario:
    """Single motor-unit pool under a directly settable target load."""

    def __init__(self, spec: dict):
        self.params = _parse_params(spec.get("params", {}))
        self.dt = float(spec.get("dt", CONTROL_DT))
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ScenarioError("dt must be positive")
        self.tl = float(spec.get("tl", 0.0))
        if not (self.tl >= 0 and math.isfinite(self.tl)):
            raise ScenarioError("tl must be >= 0")
        self.init_mode = spec.get("init", "rested")
        self.seed = spec.get("seed")
        if self.init_mode not in ("rested", "random"):
            raise ScenarioError(f"unknown init mode {self.init_mode!r}")
        self.state = init_state(self.init_mode, self.seed)
        self.t = 0.0

    def set_load(self, tl: float) -> None:
        if not (tl >= 0 and math.isfinite(tl)):
            raise ScenarioError("tl must be >= 0 and finite")
        self.tl = tl

    def reset(self, mode: str, seed) -> None:
        self.state = init_state(mode, seed)
        self.t = 0.0

    def advance(self) -> None:
        self.state, self._diag = step(self.state, self.tl, self.params, self.dt)
        self.t += self.dt

    def dof_payload(self) -> list[dict]:
        s = self.state
        rc = residual_capacity(s)
        # deliverable share of the demand under the current capacity
        applied = min(self.tl, 100.0 * rc)
        return [
            {
                "name": "mu",
                "ma": s.ma,
                "mr": s.mr,
                "mf": s.mf,
                "rc": rc,
                "tl": self.tl,
                "torque": applied,
            }
        ]

    def extra_fields(self) -> dict:
        return {}


class ChainScenario:
    """Preset chain model + task stepped through the full torque pipeline."""

    def __init__(self, spec: dict):
        model_name = spec.get("model", "arm")
        task_name = spec.get("task", "hold")
        if model_name not in PRESET_MODELS:
            raise ScenarioError(f"unknown model {model_name!r}")
        self.model = PRESET_MODELS[model_name]()
        try:
            self.task = preset_task(task_name, self.model)
        except ValueError as exc:
            raise ScenarioError(str(exc)) from exc
        self.params = _parse_params(spec.get("params", {}))
        self.init_mode = spec.get("init", "rested")
        self.seed = spec.get("seed")
        if self.init_mode not in ("rested", "random"):
            raise ScenarioError(f"unknown init mode {self.init_mode!r}")
        calib = calibrate_bounds(
            self.model, self.task, SimConfig(duration=8.0, fatigue_enabled=False)
        )
        self.bounds = calib
        self.dt = CONTROL_DT
        self._build()

    def _build(self) -> None:
        cfg = SimConfig(
            duration=1.0,  # unused: the session steps ticks directly
            params=self.params,
            fatigue_enabled=True,
            init=self.init_mode,
            seed=self.seed,
        )
        self.sim = ChainSim(self.model, self.task, cfg, bounds=self.bounds)

    @property
    def t(self) -> float:
        return self.sim.t

    def set_load(self, tl: float) -> None:
        raise ScenarioError("set_load applies to profile scenarios only")

    def reset(self, mode: str, seed) -> None:
        self.init_mode = mode
        self.seed = seed
        self._build()

    def advance(self) -> None:
        self.sim.limiter.params = self.params
        self.sim.control_tick()

    def dof_payload(self) -> list[dict]:
        recs = self.sim.limiter.last_records
        out = []
        for name, rec in zip(self.model.joint_names, recs):
            ma, mr, mf = rec.state
            out.append(
                {
                    "name": name,
                    "ma": ma,
                    "mr": mr,
                    "mf": mf,
                    "rc": rec.rc,
                    "tl": rec.tl,
                    "torque": rec.applied,
                }
            )
        return out

    def extra_fields(self) -> dict:
        pts = joint_positions(self.model, self.sim.q)
        return {"pose": {"points": [[float(x), float(y)] for x, y in pts]}}


SCENARIO_KINDS = {"profile": ProfileScenario, "chain": ChainScenario}


def build_scenario(spec):
    if not isinstance(spec, dict):
        raise ScenarioError("scenario must be an object")
    kind = spec.get("kind")
    if kind not in SCENARIO_KINDS:
        raise ScenarioError(f"unknown scenario kind {kind!r}")
    try:
        return SCENARIO_KINDS[kind](spec)
    except ScenarioError:
        raise
    except (TypeError, ValueError) as exc:
        raise ScenarioError(str(exc)) from exc


@dataclass
class _Update:
    """A control message taken off the wire, to apply between steps."""

    kind: str
    payload: dict


class Session:
    """State of one connection: scenario, frame counter, pause flag."""

    _counter = 0

    def __init__(self, scenario, pace: bool, speed: float = 1.0):
        if not (0 < speed <= 1000):
            raise ScenarioError("speed must be in (0, 1000]")
        Session._counter += 1
        self.id = f"s{Session._counter}"
        self.scenario = scenario
        self.pace = pace
        self.speed = speed
        self.frame_index = -1  # next frame emitted is 0
        self.paused = False

    def next_frame(self) -> dict:
        """Advance one control step (frame 0 reports the initial state)."""
        if self.frame_index >= 0:
            self.scenario.advance()
        self.frame_index += 1
        return self.frame_payload()

    def frame_payload(self) -> dict:
        sc = self.scenario
        dofs = sc.dof_payload() if self.frame_index > 0 else self._initial_dofs()
        mean_rc = sum(d["rc"] for d in dofs) / len(dofs)
        p = sc.params
        frame = {
            "type": "frame",
            "i": self.frame_index,
            "t": sc.t if self.frame_index > 0 else 0.0,
            "params": {"F": p.F, "R": p.R, "r": p.r},
            "dofs": dofs,
            "mean_rc": mean_rc,
            "behind": 0.0,
        }
        frame.update(sc.extra_fields())
        return frame

    def _initial_dofs(self) -> list[dict]:
        sc = self.scenario
        if isinstance(sc, ProfileScenario):
            return sc.dof_payload()
        states = sc.sim.limiter.states
        out = []
        for name, s in zip(sc.model.joint_names, states):
            out.append(
                {
                    "name": name,
                    "ma": s.ma,
                    "mr": s.mr,
                    "mf": s.mf,
                    "rc": residual_capacity(s),
                    "tl": 0.0,
                    "torque": 0.0,
                }
            )
        return out


def _error(code: str, msg: str) -> str:
    return json.dumps({"type": "error", "code": code, "msg": msg})


async def _session_loop(ws):
    """Per-connection protocol: expect start, then stream frames while
    draining control messages between steps."""
    session: Session | None = None
    inbox: asyncio.Queue = asyncio.Queue()

    async def reader():
        try:
            async for raw in ws:
                try:
                    msg = json.loads(raw)
                    if not isinstance(msg, dict) or "type" not in msg:
                        raise ValueError("message must be an object with a 'type'")
                except ValueError as exc:
                    await inbox.put(_Update("__malformed__", {"msg": str(exc)}))
                    continue
                await inbox.put(_Update(msg["type"], msg))
        finally:
            await inbox.put(_Update("__closed__", {}))

    read_task = asyncio.create_task(reader())
    try:
        # handshake: the first well-formed message must be start
        while session is None:
            upd = await inbox.get()
            if upd.kind == "__closed__":
                return
            if upd.kind == "__malformed__":
                await ws.send(_error("bad_message", upd.payload["msg"]))
                continue
            if upd.kind != "start":
                await ws.send(_error("bad_request", "expected a start message"))
                continue
            try:
                spec = upd.payload.get("scenario")
                scenario = build_scenario(spec)
                session = Session(
                    scenario,
                    pace=bool(spec.get("pace", True)),
                    speed=float(spec.get("speed", 1.0)),
                )
            except (ScenarioError, TypeError, ValueError) as exc:
                await ws.send(_error("bad_scenario", str(exc)))
                continue
            await ws.send(json.dumps({"type": "ack", "applies_at": 0, "session": session.id}))
            await ws.send(json.dumps(session.next_frame()))

        wall_start = time.monotonic()
        frames_sent = 1
        while True:
            # drain pending control messages; each applies strictly before
            # the next computed frame
            while not inbox.empty() or session.paused:
                upd = await inbox.get() if session.paused else inbox.get_nowait()
                if upd.kind == "__closed__":
                    return
                reply = _apply_update(session, upd)
                await ws.send(reply)
                if session.paused:
                    wall_start = None  # re-anchor pacing after resume
            if wall_start is None:
                wall_start = time.monotonic()
                frames_sent = 0
            frame = session.next_frame()
            if session.pace:
                target = wall_start + frames_sent * (session.scenario.dt / session.speed)
                now = time.monotonic()
                if now < target:
                    await asyncio.sleep(target - now)
                else:
                    frame["behind"] = now - target
            frames_sent += 1
            await ws.send(json.dumps(frame))
            # fast-path sends may complete without suspending; make sure the
            # reader task gets a turn so control messages keep flowing
            await asyncio.sleep(0)
    finally:
        read_task.cancel()


def _apply_update(session: Session, upd: _Update) -> str:
    sc = session.scenario
    applies_at = session.frame_index + 1
    if upd.kind == "__malformed__":
        return _error("bad_message", upd.payload["msg"])
    if upd.kind == "start":
        return _error("bad_request", "session already started")
    if upd.kind == "set_params":
        fields = {k: upd.payload[k] for k in ("F", "R", "r") if k in upd.payload}
        merged = {"F": sc.params.F, "R": sc.params.R, "r": sc.params.r, **fields}
        try:
            sc.params = _parse_params(merged)
        except ScenarioError as exc:
            return _error("bad_params", str(exc))
        return json.dumps({"type": "ack", "applies_at": applies_at})
    if upd.kind == "set_load":
        try:
            sc.set_load(float(upd.payload.get("tl")))
        except (TypeError, ScenarioError) as exc:
            return _error("bad_load", str(exc))
        return json.dumps({"type": "ack", "applies_at": applies_at})
    if upd.kind == "pause":
        session.paused = True
        return json.dumps({"type": "ack", "applies_at": applies_at})
    if upd.kind == "resume":
        session.paused = False
        return json.dumps({"type": "ack", "applies_at": applies_at})
    if upd.kind == "reset":
        mode = upd.payload.get("mode", "rested")
        if mode not in ("rested", "random"):
            return _error("bad_request", f"unknown reset mode {mode!r}")
        sc.reset(mode, upd.payload.get("seed"))
        return json.dumps({"type": "ack", "applies_at": applies_at})
    return _error("bad_request", f"unknown message type {upd.kind!r}")


async def serve_forever(host: str = DEFAULT_HOST, port: int = DEFAULT_PORT):
    async with serve(_session_loop, host, port) as server:
        for sock in server.sockets:
            print(f"fatiguesim live service on ws://{sock.getsockname()[0]}:{sock.getsockname()[1]}")
        await asyncio.get_running_loop().create_future()


def run_service(host: str = DEFAULT_HOST, port: int = DEFAULT_PORT) -> None:
    asyncio.run(serve_forever(host, port))
