import asyncio
import json

import pytest
from websockets.asyncio.client import connect
from websockets.asyncio.server import serve

from fatiguesim import ThreeCCParams, init_state, step
from fatiguesim.service import _session_loop


class Client:
    """Tiny scripted client with an ordered message buffer."""

    def __init__(self, ws):
        self.ws = ws

    async def send(self, obj):
        await self.ws.send(json.dumps(obj))

    async def recv(self):
        return json.loads(await self.ws.recv())

    async def recv_until(self, msg_type, limit=500):
        for _ in range(limit):
            msg = await self.recv()
            if msg["type"] == msg_type:
                return msg
        raise AssertionError(f"no {msg_type} within {limit} messages")

    async def frames(self, n):
        out = []
        while len(out) < n:
            msg = await self.recv()
            if msg["type"] == "frame":
                out.append(msg)
        return out


def run(coro):
    return asyncio.run(asyncio.wait_for(coro, timeout=60))


async def with_service(fn):
    async with serve(_session_loop, "127.0.0.1", 0) as server:
        port = server.sockets[0].getsockname()[1]
        async with connect(f"ws://127.0.0.1:{port}") as ws:
            return await fn(Client(ws))


async def with_two_clients(fn):
    async with serve(_session_loop, "127.0.0.1", 0) as server:
        port = server.sockets[0].getsockname()[1]
        async with connect(f"ws://127.0.0.1:{port}") as a:
            async with connect(f"ws://127.0.0.1:{port}") as b:
                return await fn(Client(a), Client(b))


PROFILE = {
    "kind": "profile",
    "tl": 30.0,
    "params": {"F": 1.0, "R": 0.05, "r": 1.0},
    "pace": True,
    "speed": 60,
}


def test_start_profile_session_streams_rested_first_frame():
    async def body(c):
        await c.send({"type": "start", "scenario": PROFILE})
        ack = await c.recv()
        assert ack["type"] == "ack" and ack["applies_at"] == 0
        frame = await c.recv()
        assert frame["type"] == "frame" and frame["i"] == 0
        dof = frame["dofs"][0]
        assert dof["mf"] == 0.0 and dof["rc"] == 1.0
        assert frame["mean_rc"] == 1.0
        later = await c.frames(5)
        assert [f["i"] for f in later] == [1, 2, 3, 4, 5]
        assert later[-1]["dofs"][0]["ma"] > 0.0
        return True

    assert run(with_service(body))


def test_frame_indices_gapless_and_mean_rc_consistent():
    async def body(c):
        await c.send({"type": "start", "scenario": {"kind": "chain", "model": "hopper", "task": "hop", "pace": True, "speed": 60, "params": {"F": 1.0, "R": 0.01, "r": 1.0}}})
        await c.recv_until("ack")
        frames = await c.frames(40)
        indices = [f["i"] for f in frames]
        assert indices == list(range(indices[0], indices[0] + len(indices)))
        for f in frames:
            mean = sum(d["rc"] for d in f["dofs"]) / len(f["dofs"])
            assert abs(mean - f["mean_rc"]) < 1e-12
            assert "pose" in f and len(f["pose"]["points"]) == 4
        return True

    assert run(with_service(body))


def test_malformed_and_bad_scenario_rejected_without_session():
    async def body(c):
        await c.ws.send("this is not json")
        err = await c.recv()
        assert err["type"] == "error" and err["code"] == "bad_message"
        await c.send({"type": "set_params", "F": 2.0})
        err = await c.recv()
        assert err["type"] == "error" and err["code"] == "bad_request"
        await c.send({"type": "start", "scenario": {"kind": "teleport"}})
        err = await c.recv()
        assert err["type"] == "error" and err["code"] == "bad_scenario"
        # a valid start still works afterwards
        await c.send({"type": "start", "scenario": PROFILE})
        ack = await c.recv()
        assert ack["type"] == "ack"
        return True

    assert run(with_service(body))


def test_sessions_are_isolated():
    async def body(a, b):
        await a.send({"type": "start", "scenario": PROFILE})
        await b.send({"type": "start", "scenario": dict(PROFILE, tl=0.0)})
        ack_a = await a.recv()
        ack_b = await b.recv()
        assert ack_a["session"] != ack_b["session"]
        fa = (await a.frames(10))[-1]
        fb = (await b.frames(10))[-1]
        assert fa["dofs"][0]["ma"] > 1.0  # loaded session recruits
        assert fb["dofs"][0]["ma"] == 0.0  # unloaded one does not
        return True

    assert run(with_two_clients(body))


def test_set_params_ack_names_first_governed_frame():
    async def body(c):
        await c.send({"type": "start", "scenario": PROFILE})
        await c.recv_until("ack")
        await c.frames(3)
        await c.send({"type": "set_params", "F": 0.0, "R": 0.0, "r": 0.0})
        ack = await c.recv_until("ack")
        applies_at = ack["applies_at"]
        frames = await c.frames(30)
        governed = [f for f in frames if f["i"] >= applies_at]
        assert governed[0]["params"] == {"F": 0.0, "R": 0.0, "r": 0.0}
        mf_values = [f["dofs"][0]["mf"] for f in governed]
        # fatigue frozen: only conservation-rescale noise in the last ulps
        assert max(abs(v - mf_values[0]) for v in mf_values) < 1e-9
        rc_values = [f["dofs"][0]["rc"] for f in governed]
        assert max(abs(v - rc_values[0]) for v in rc_values) < 1e-9
        return True

    assert run(with_service(body))


def test_invalid_params_rejected_without_side_effect():
    async def body(c):
        await c.send({"type": "start", "scenario": PROFILE})
        await c.recv_until("ack")
        await c.send({"type": "set_params", "F": -1.0})
        err = await c.recv_until("error")
        assert err["code"] == "bad_params"
        frame = (await c.frames(1))[0]
        assert frame["params"]["F"] == 1.0
        return True

    assert run(with_service(body))


def test_raising_fatigue_rate_steepens_mf_growth():
    async def body(c):
        await c.send({"type": "start", "scenario": dict(PROFILE, tl=50.0, params={"F": 1.0, "R": 0.0, "r": 1.0})})
        await c.recv_until("ack")
        frames = await c.frames(16)
        # growth rate over the last five frames right before the switch
        slope_before = frames[-1]["dofs"][0]["mf"] - frames[-6]["dofs"][0]["mf"]
        await c.send({"type": "set_params", "F": 2.0})
        ack = await c.recv_until("ack")
        frames = await c.frames(12)
        governed = [f for f in frames if f["i"] >= ack["applies_at"]]
        slope_after = governed[5]["dofs"][0]["mf"] - governed[0]["dofs"][0]["mf"]
        assert slope_after > slope_before
        return True

    assert run(with_service(body))


def test_pause_freezes_frame_counter_and_resume_continues():
    async def body(c):
        await c.send({"type": "start", "scenario": PROFILE})
        await c.recv_until("ack")
        await c.frames(3)
        await c.send({"type": "pause"})
        # drain the ack plus any frames already in flight, then confirm silence
        drained = []
        try:
            while True:
                drained.append(await asyncio.wait_for(c.recv(), timeout=0.4))
        except asyncio.TimeoutError:
            pass
        assert any(m.get("type") == "ack" for m in drained)
        last_i = max((m["i"] for m in drained if m.get("type") == "frame"), default=3)
        await c.send({"type": "resume"})
        await c.recv_until("ack")
        nxt = (await c.frames(1))[0]
        assert nxt["i"] == last_i + 1  # counter frozen while paused
        return True

    assert run(with_service(body))


def test_reset_modes():
    async def body(c):
        await c.send({"type": "start", "scenario": dict(PROFILE, tl=60.0)})
        await c.recv_until("ack")
        await c.frames(40)
        await c.send({"type": "reset", "mode": "rested"})
        await c.recv_until("ack")
        frame = (await c.frames(1))[0]
        assert frame["dofs"][0]["mf"] == 0.0
        await c.send({"type": "reset", "mode": "random", "seed": 7})
        await c.recv_until("ack")
        f1 = (await c.frames(1))[0]
        await c.send({"type": "reset", "mode": "random", "seed": 7})
        await c.recv_until("ack")
        f2 = (await c.frames(1))[0]
        assert f1["dofs"][0] == f2["dofs"][0]
        return True

    assert run(with_service(body))


def test_set_load_only_for_profile_scenarios():
    async def body(c):
        await c.send({"type": "start", "scenario": {"kind": "chain", "model": "pendulum", "task": "hold", "pace": True, "speed": 60}})
        await c.recv_until("ack")
        await c.send({"type": "set_load", "tl": 20.0})
        err = await c.recv_until("error")
        assert err["code"] == "bad_load"
        return True

    assert run(with_service(body))


def test_stream_offline_equivalence_with_mid_run_changes():
    """Replaying the recorded update schedule through the core stepper must
    reproduce the streamed compartments bit for bit."""

    async def body(c):
        scenario = dict(PROFILE, tl=40.0, params={"F": 1.0, "R": 0.05, "r": 1.0})
        await c.send({"type": "start", "scenario": scenario})
        await c.recv_until("ack")
        schedule = {}
        frames = [await c.recv_until("frame")]
        frames += await c.frames(20)
        await c.send({"type": "set_params", "F": 0.4, "R": 0.2, "r": 5.0})
        ack = await c.recv_until("ack")
        schedule[ack["applies_at"]] = ThreeCCParams(0.4, 0.2, 5.0)
        frames += await c.frames(25)
        await c.send({"type": "set_params", "F": 2.0, "R": 0.01, "r": 1.0})
        ack = await c.recv_until("ack")
        schedule[ack["applies_at"]] = ThreeCCParams(2.0, 0.01, 1.0)
        frames += await c.frames(25)
        return frames, schedule

    frames, schedule = run(with_service(body))
    assert len(schedule) == 2
    params = ThreeCCParams(1.0, 0.05, 1.0)
    state = init_state()
    dt = 1.0 / 30.0
    replay_i = 0
    checked = 0
    for frame in frames:
        # frames skipped while scanning for acks still advance the replay
        while replay_i < frame["i"]:
            replay_i += 1
            if replay_i in schedule:
                params = schedule[replay_i]
            state, _ = step(state, 40.0, params, dt)
        dof = frame["dofs"][0]
        assert dof["ma"] == state.ma
        assert dof["mr"] == state.mr
        assert dof["mf"] == state.mf
        checked += 1
    assert checked >= 60
