"""Batch analytics over the fatigue model.

Endurance time, the sustainable-load threshold, drive-factor sensitivity,
intermittent-rest recovery metrics, per-joint fatigue ranking and (F, R, r)
parameter sweeps. Everything here drives the same Euler update as the core
module; no separate dynamics are introduced.

A note on the failure criterion: the recruitment drive is proportional
with gain LD against a fatigue leak F, so under a constant demand ``tl``
the active pool settles at ``tl * LD / (LD + F)``, strictly below the
demand, and under over-demand it peaks even lower. Failure is therefore
detected relative to the trajectory itself: the hold fails the first time
the active pool drops a small epsilon below the highest level it has
reached. While a load is sustainable the active pool never declines, so
sustained holds are classified unbounded without any special casing; for
LD >> F this coincides with the classic "active pool falls below the
demand" convention.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .core import CompartmentState, ThreeCCParams, _advance, init_state
from .traceio import Trace

#: Arming/failure band around the hold level, in %MVC.
FAILURE_EPS = 0.1

DEFAULT_DT = 1.0 / 30.0
DEFAULT_HORIZON = 10_000.0


@dataclass
class EnduranceResult:
    """Outcome of holding a constant load; endurance_time is inf when the
    load was sustained for the whole horizon."""

    endurance_time: float
    failure_detected: bool
    final_state: CompartmentState
    peak_ma: float

    @property
    def bounded(self) -> bool:
        return self.failure_detected


def hold_level(tl: float, params: ThreeCCParams) -> float:
    """Stationary active-pool level the drive sustains under demand ``tl``
    while rested units remain available."""
    return tl * params.LD / (params.LD + params.F)


def endurance_time(
    tl: float,
    params: ThreeCCParams,
    dt: float = DEFAULT_DT,
    horizon: float = DEFAULT_HORIZON,
    eps: float = FAILURE_EPS,
) -> EnduranceResult:
    """Time a constant demand can be sustained from a rested start.

    The hold fails the first time the active pool drops ``eps`` below its
    running peak; the crossing instant is linearly interpolated between
    steps. Returns an unbounded result if no failure occurs before
    ``horizon``.
    """
    if not tl > 0:
        raise ValueError("TL must be positive")
    if not (dt > 0 and horizon > 0):
        raise ValueError("dt and horizon must be positive")

    F, R, r, LD, LR = params.F, params.R, params.r, params.LD, params.LR
    ma, mr, mf = 0.0, 100.0, 0.0
    peak = 0.0
    n = int(math.floor(horizon / dt + 1e-9))
    for i in range(n):
        prev = ma
        ma, mr, mf, _, _, _, _ = _advance(ma, mr, mf, tl, F, R, r, LD, LR, dt)
        peak = max(peak, ma)
        level = peak - eps
        if ma < level and prev >= level:
            frac = (prev - level) / (prev - ma)
            t_fail = (i + frac) * dt
            return EnduranceResult(t_fail, True, CompartmentState(ma, mr, mf), peak)
        if ma < level:  # prev already below: failure began at the previous step
            return EnduranceResult(i * dt, True, CompartmentState(ma, mr, mf), peak)
    return EnduranceResult(math.inf, False, CompartmentState(ma, mr, mf), peak)


@dataclass
class SustainableLoad:
    """Bisection result for the largest indefinitely holdable load.

    ``held`` is the active-pool level actually sustained at the boundary;
    ``demand`` is the raw demand knob at the boundary (the drive holds
    slightly less than it demands); ``closed_form`` is the steady-state
    prediction 100 * r*R / (r*R + F) for an ideal drive that pins the
    active pool exactly at the demand.
    """

    held: float
    demand: float
    closed_form: float


def sustainable_closed_form(params: ThreeCCParams) -> float:
    rr = params.r * params.R
    if params.F <= 0:
        return 100.0
    return 100.0 * rr / (rr + params.F)


def sustainable_load(
    params: ThreeCCParams,
    tol: float = 0.1,
    dt: float = DEFAULT_DT,
    horizon: float = DEFAULT_HORIZON,
) -> SustainableLoad:
    """Bisect the boundary between bounded and unbounded endurance.

    The search runs on the demand knob over (0, 100]; the returned ``held``
    value converts the boundary demand to the level actually sustained
    there, which is the quantity the closed form predicts.
    """
    closed = sustainable_closed_form(params)
    gain = params.LD / (params.LD + params.F)
    if params.F <= 0:
        return SustainableLoad(100.0, 100.0, closed)

    lo = 0.0  # sustainable by definition
    hi = 100.0
    if not endurance_time(hi, params, dt, horizon).failure_detected:
        return SustainableLoad(gain * hi, hi, closed)
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if endurance_time(mid, params, dt, horizon).failure_detected:
            hi = mid
        else:
            lo = mid
    demand = 0.5 * (lo + hi)
    return SustainableLoad(gain * demand, demand, closed)


@dataclass
class DriveSensitivity:
    """Endurance-time spread across drive-factor settings."""

    et_by_factor: dict[float, float]
    reference: float
    max_relative_change: float


def ld_lr_sensitivity(
    tl: float,
    params: ThreeCCParams,
    factors=(2.0, 10.0, 50.0),
    reference_factor: float = 10.0,
    dt: float = 1.0 / 3000.0,
    horizon: float = DEFAULT_HORIZON,
) -> DriveSensitivity:
    """Max relative endurance-time change when LD = LR varies over ``factors``.

    Defaults to a fine step: explicit Euler needs dt * (LD + F) well below 1,
    and the factor sweep reaches LD = 50 where the control-rate step is
    unstable.
    """

    def et_with(factor: float) -> float:
        p = ThreeCCParams(params.F, params.R, params.r, LD=factor, LR=factor)
        return endurance_time(tl, p, dt, horizon).endurance_time

    ref = et_with(reference_factor)
    ets = {f: et_with(f) for f in factors}
    if math.isinf(ref):
        worst = 0.0 if all(math.isinf(v) for v in ets.values()) else math.inf
    else:
        worst = max(abs(v - ref) / ref for v in ets.values())
    return DriveSensitivity(ets, ref, worst)


@dataclass
class IntermittentResult:
    mean_mf: float
    cycle_peak_mf: np.ndarray
    final_state: CompartmentState


def intermittent_recovery(
    on_s: float,
    off_s: float,
    tl_on: float,
    params: ThreeCCParams,
    horizon: float,
    dt: float = DEFAULT_DT,
) -> IntermittentResult:
    """Square-wave loading: ``tl_on`` for ``on_s`` seconds, then rest.

    Reports the mean fatigued share over the horizon and the peak fatigued
    share within each cycle. off_s = 0 degenerates to a constant hold.
    """
    if on_s <= 0 or off_s < 0:
        raise ValueError("on time must be positive, off time >= 0")
    period = on_s + off_s
    if horizon < 10 * period:
        raise ValueError("horizon must cover at least 10 duty cycles")

    F, R, r, LD, LR = params.F, params.R, params.r, params.LD, params.LR
    ma, mr, mf = 0.0, 100.0, 0.0
    n = int(math.floor(horizon / dt + 1e-9))
    mf_sum = 0.0
    peaks: list[float] = []
    peak = 0.0
    cycle = 0
    for i in range(n):
        t = i * dt
        this_cycle = int(t / period)
        if this_cycle != cycle:
            peaks.append(peak)
            peak = 0.0
            cycle = this_cycle
        tl = tl_on if (t - this_cycle * period) < on_s else 0.0
        ma, mr, mf, _, _, _, _ = _advance(ma, mr, mf, tl, F, R, r, LD, LR, dt)
        mf_sum += mf
        peak = max(peak, mf)
    peaks.append(peak)
    return IntermittentResult(
        mf_sum / n, np.asarray(peaks), CompartmentState(ma, mr, mf)
    )


@dataclass
class JointFatigueRank:
    dof: str
    peak_mf: float
    integral_mf: float


def joint_fatigue_ranking(trace: Trace) -> list[JointFatigueRank]:
    """Rank trace DoFs by peak fatigued share, descending.

    Ties break on the time integral of the fatigued share, then on DoF
    order in the trace.
    """
    dofs = [d for d in trace.dofs if trace.has(d, "mf")]
    if len(trace) == 0 or not dofs:
        raise ValueError("trace has no fatigue columns to rank")
    entries = []
    for idx, dof in enumerate(dofs):
        mf = trace.get(dof, "mf")
        entries.append(
            (
                JointFatigueRank(
                    dof,
                    float(np.max(mf)),
                    float(np.trapezoid(mf, trace.time)),
                ),
                idx,
            )
        )
    entries.sort(key=lambda e: (-e[0].peak_mf, -e[0].integral_mf, e[1]))
    return [e[0] for e in entries]


@dataclass
class SweepGrid:
    """Complete (F, R, r) grid of endurance results, F-major ordering."""

    f_values: list[float]
    r_values: list[float]
    rest_values: list[float]
    tl: float
    cells: list[tuple[float, float, float]] = field(default_factory=list)
    results: list[EnduranceResult] = field(default_factory=list)

    def to_csv(self) -> str:
        lines = ["F,R,r,tl,endurance_time,failure_detected"]
        for (f, rv, rest), res in zip(self.cells, self.results):
            lines.append(
                f"{f!r},{rv!r},{rest!r},{self.tl!r},"
                f"{res.endurance_time!r},{res.failure_detected}"
            )
        return "\n".join(lines) + "\n"


def sweep(
    f_values,
    r_values,
    rest_values,
    tl: float,
    dt: float = DEFAULT_DT,
    horizon: float = DEFAULT_HORIZON,
    evaluate=None,
) -> SweepGrid:
    """Evaluate endurance over the full (F, R, r) grid.

    Cells are independent and evaluated in deterministic F-major order.
    ``evaluate`` may replace the default constant-load endurance run with
    any callable mapping ThreeCCParams to an EnduranceResult.
    """
    f_values = sorted(float(v) for v in f_values)
    r_values = sorted(float(v) for v in r_values)
    rest_values = sorted(float(v) for v in rest_values)
    if not (f_values and r_values and rest_values):
        raise ValueError("sweep grid must be non-empty on every axis")
    if evaluate is None:
        def evaluate(p: ThreeCCParams) -> EnduranceResult:
            return endurance_time(tl, p, dt, horizon)

    grid = SweepGrid(f_values, r_values, rest_values, tl)
    for f, rv, rest in itertools.product(f_values, r_values, rest_values):
        grid.cells.append((f, rv, rest))
        grid.results.append(evaluate(ThreeCCParams(f, rv, rest)))
    return grid
