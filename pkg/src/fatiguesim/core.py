"""Three-compartment motor-unit fatigue model.

A joint's motor-unit pool is split into three compartments, each expressed
in %MVC (percent of maximum voluntary contraction): active units ``ma``
doing the work, resting units ``mr`` available for recruitment, and
fatigued units ``mf``. The compartments always sum to 100.

A bounded proportional drive moves units between rest and activity to meet
a target load ``tl``. Active units fatigue at rate ``F`` and fatigued units
recover at rate ``R``, boosted by the rest multiplier ``r`` whenever the
active pool already covers the demand (``ma >= tl``). All rates are per
second. The residual capacity ``(100 - mf) / 100`` is the fraction of full
strength still available and is what downstream torque limiting consumes.

State updates are explicit forward Euler at a caller-chosen step. After
each step compartments are clamped to [0, 100] and rescaled so the pool
sums to exactly 100; this keeps conservation exact over millions of steps
even when large drives overshoot at coarse steps.
"""

from __future__ import annotations

import hashlib
import json
import math
import random
from dataclasses import dataclass, field

import numpy as np

from .traceio import Trace

SCHEMA_VERSION = 1

#: Per-DoF trace columns emitted by integrate_profile, in order.
PROFILE_FIELDS = ("tl", "ma", "mr", "mf", "rc", "drive", "rest_rate", "case")


@dataclass
class ThreeCCParams:
    """Fatigue/recovery coefficients plus drive factors.

    F and R are per-second rates. r multiplies R while the active pool
    covers the demand. LD and LR set how aggressively the drive recruits
    and releases units; endurance predictions are only weakly sensitive to
    them and 10 is the conventional choice.
    """

    F: float
    R: float
    r: float = 1.0
    LD: float = 10.0
    LR: float = 10.0

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.F, self.R, self.r, self.LD, self.LR)):
            raise ValueError("3CC parameters must be finite")
        if self.F < 0 or self.R < 0 or self.r < 0:
            raise ValueError("F, R and r must be non-negative")
        if self.LD <= 0 or self.LR <= 0:
            raise ValueError("LD and LR must be positive")

    def as_dict(self) -> dict:
        return {"F": self.F, "R": self.R, "r": self.r, "LD": self.LD, "LR": self.LR}


@dataclass
class CompartmentState:
    """Active / resting / fatigued motor units in %MVC."""

    ma: float
    mr: float
    mf: float

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.ma, self.mr, self.mf)

    def total(self) -> float:
        return self.ma + self.mr + self.mf


@dataclass
class StepDiagnostics:
    """Transients of a single step: drive value, effective recovery rate,
    which drive branch fired (1, 2 or 3) and whether clamping kicked in."""

    drive: float
    rest_rate: float
    case_id: int
    saturated: bool


@dataclass
class LoadSample:
    """A (time, target load) pair; loads are held constant until the next sample."""

    t: float
    tl: float


def drive(state: CompartmentState, tl: float, params: ThreeCCParams) -> tuple[float, int]:
    """Activation-deactivation drive toward the target load.

    Returns the drive in %MVC/s (negative when releasing units back to
    rest) and the branch taken: 1 demand already met, 2 recruiting from
    a sufficient resting pool, 3 resting pool exhausted.
    """
    if state.ma >= tl:
        return params.LR * (tl - state.ma), 1
    if state.mr > tl - state.ma:
        return params.LD * (tl - state.ma), 2
    return params.LD * state.mr, 3


def rest_rate(state: CompartmentState, tl: float, params: ThreeCCParams) -> float:
    """Effective recovery rate: r*R while the active pool covers the demand."""
    return params.r * params.R if state.ma >= tl else params.R


def residual_capacity(state: CompartmentState) -> float:
    """Remaining strength fraction in [0, 1]: 1 fresh, 0 fully fatigued."""
    return (100.0 - state.mf) / 100.0


def _advance(ma, mr, mf, tl, F, R, r, LD, LR, dt):
    """One forward-Euler step on plain floats.

    Single source of truth for the update; step(), the profile/endurance
    loops and the vectorized batch stepper all reproduce this arithmetic
    bit for bit.
    """
    if ma >= tl:
        c = LR * (tl - ma)
        rr = r * R
        case = 1
    elif mr > tl - ma:
        c = LD * (tl - ma)
        rr = R
        case = 2
    else:
        c = LD * mr
        rr = R
        case = 3

    fma = F * ma
    rrmf = rr * mf
    na = ma + dt * (c - fma)
    nr = mr + dt * (rrmf - c)
    nf = mf + dt * (fma - rrmf)

    ca = min(max(na, 0.0), 100.0)
    cr = min(max(nr, 0.0), 100.0)
    cf = min(max(nf, 0.0), 100.0)
    saturated = (ca != na) or (cr != nr) or (cf != nf)

    scale = 100.0 / (ca + cr + cf)
    return ca * scale, cr * scale, cf * scale, c, rr, case, saturated


def step(
    state: CompartmentState, tl: float, params: ThreeCCParams, dt: float
) -> tuple[CompartmentState, StepDiagnostics]:
    """Advance the compartments by one Euler step under target load ``tl``.

    Rejects dt <= 0 and non-finite inputs. Over-demand (tl > 100) is legal;
    the drive saturates on the resting pool.
    """
    if not (dt > 0.0 and math.isfinite(dt)):
        raise ValueError(f"dt must be positive and finite, got {dt}")
    if not (tl >= 0.0 and math.isfinite(tl)):
        raise ValueError(f"target load must be >= 0 and finite, got {tl}")
    if not all(math.isfinite(v) for v in state.as_tuple()):
        raise ValueError(f"non-finite compartment state {state}")

    ma, mr, mf, c, rr, case, sat = _advance(
        state.ma, state.mr, state.mf, tl, params.F, params.R, params.r,
        params.LD, params.LR, dt,
    )
    return CompartmentState(ma, mr, mf), StepDiagnostics(c, rr, case, sat)


def step_batch(ma, mr, mf, tl, params, dt, want_case=True):
    """Vectorized step over N independent model instances.

    ``ma, mr, mf, tl`` are float64 arrays of shape (N,); ``params`` holds
    scalars or (N,) arrays for F, R, r, LD, LR (optionally a precomputed
    "rR" product); ``dt`` likewise. Returns updated (ma, mr, mf) plus the
    case ids (or None with ``want_case=False``, which trims two array ops
    for long batch runs). Bit-identical to step() run element-wise.
    """
    F, R, LD, LR = params["F"], params["R"], params["LD"], params["LR"]
    rR = params["rR"] if "rR" in params else params["r"] * R
    d = tl - ma
    met = ma >= tl
    rec = mr > d
    c = np.where(met, LR * d, np.where(rec, LD * d, LD * mr))
    case = np.where(met, 1, np.where(rec, 2, 3)) if want_case else None
    rr = np.where(met, rR, R)

    fma = F * ma
    rrmf = rr * mf
    na = ma + dt * (c - fma)
    nr = mr + dt * (rrmf - c)
    nf = mf + dt * (fma - rrmf)

    na = np.minimum(np.maximum(na, 0.0), 100.0)
    nr = np.minimum(np.maximum(nr, 0.0), 100.0)
    nf = np.minimum(np.maximum(nf, 0.0), 100.0)

    scale = 100.0 / (na + nr + nf)
    return na * scale, nr * scale, nf * scale, case


def init_state(mode: str = "rested", seed=None) -> CompartmentState:
    """Build an initial compartment state.

    "rested" gives (0, 100, 0). "random" draws mr ~ U(0, 100), then
    ma ~ U(0, 100 - mr) and assigns the remainder to mf; deterministic
    for a given seed.
    """
    if mode == "rested":
        return CompartmentState(0.0, 100.0, 0.0)
    if mode == "random":
        rng = random.Random(seed)
        mr = rng.uniform(0.0, 100.0)
        ma = rng.uniform(0.0, 100.0 - mr)
        mf = max(0.0, 100.0 - mr - ma)
        return CompartmentState(ma, mr, mf)
    raise ValueError(f"unknown init mode {mode!r}, expected 'rested' or 'random'")


def _normalize_profile(profile) -> tuple[list[float], list[float]]:
    times: list[float] = []
    loads: list[float] = []
    for entry in profile:
        if isinstance(entry, LoadSample):
            t, tl = entry.t, entry.tl
        else:
            t, tl = entry
        if not (math.isfinite(t) and math.isfinite(tl)) or tl < 0:
            raise ValueError(f"bad load sample ({t}, {tl})")
        if times and t <= times[-1]:
            raise ValueError("profile times must be strictly increasing")
        times.append(float(t))
        loads.append(float(tl))
    if times and times[0] != 0.0:
        raise ValueError("profile must start at t=0")
    return times, loads


def integrate_profile(
    profile,
    params: ThreeCCParams,
    dt: float,
    init: CompartmentState | None = None,
    duration: float | None = None,
    dof: str = "mu",
    seed=None,
) -> Trace:
    """Run the model over a piecewise-constant load profile.

    ``profile`` is a sequence of LoadSample (or (t, tl) pairs) with strictly
    increasing times starting at 0; each load is zero-order held until the
    next sample. ``duration`` defaults to the last sample time, so an empty
    profile yields a trace containing only the initial state.

    The trace holds one row per step boundary: the state at that time, the
    load active there, and the drive diagnostics evaluated there.
    """
    if not (dt > 0.0 and math.isfinite(dt)):
        raise ValueError(f"dt must be positive and finite, got {dt}")
    times, loads = _normalize_profile(profile)
    if duration is None:
        duration = times[-1] if times else 0.0
    if duration < 0:
        raise ValueError("duration must be >= 0")

    state = init if init is not None else init_state()
    ma, mr, mf = state.ma, state.mr, state.mf
    F, R, r, LD, LR = params.F, params.R, params.r, params.LD, params.LR

    n = int(math.floor(duration / dt + 1e-9))
    cols = {f: np.empty(n + 1) for f in PROFILE_FIELDS}
    t_axis = np.arange(n + 1) * dt

    seg = 0

    def load_at(t: float) -> float:
        nonlocal seg
        if not times:
            return 0.0
        while seg + 1 < len(times) and times[seg + 1] <= t + 1e-12:
            seg += 1
        return loads[seg]

    for i in range(n + 1):
        tl = load_at(i * dt)
        cols["tl"][i] = tl
        cols["ma"][i], cols["mr"][i], cols["mf"][i] = ma, mr, mf
        cols["rc"][i] = (100.0 - mf) / 100.0
        if i < n:
            ma, mr, mf, c, rr, case, _ = _advance(ma, mr, mf, tl, F, R, r, LD, LR, dt)
        else:  # final row: evaluate diagnostics without stepping
            st = CompartmentState(ma, mr, mf)
            c, case = drive(st, tl, params)
            rr = rest_rate(st, tl, params)
        cols["drive"][i] = c
        cols["rest_rate"][i] = rr
        cols["case"][i] = case

    meta = {
        "schema": "fatiguesim-trace",
        "version": SCHEMA_VERSION,
        "kind": "profile",
        "dofs": [dof],
        "dt": dt,
        "params": params.as_dict(),
        "seed": seed,
        "source_hash": profile_hash(times, loads),
    }
    columns = {f"{dof}.{f}": cols[f] for f in PROFILE_FIELDS}
    return Trace(meta=meta, time=t_axis, columns=columns)


def profile_hash(times, loads) -> str:
    payload = json.dumps([list(times), list(loads)]).encode()
    return hashlib.sha1(payload).hexdigest()[:12]
