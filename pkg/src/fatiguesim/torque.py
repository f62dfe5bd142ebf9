"""PD torque generation and residual-capacity torque limiting.

The per-step pipeline for each controlled DoF:

1. a PD controller turns a (target position, stiffness multiplier) command
   into an intended torque,
2. the intended torque, pre-clamped to the DoF's constant bound, becomes a
   target load in %MVC for that DoF's fatigue model,
3. one fatigue step runs, yielding the residual capacity RC,
4. the intended torque is clipped to +/- RC * t_max and applied.

Constant per-DoF bounds come either from a hand-authored table or from a
calibration pass that tracks the running maximum of unfatigued torques,
with symmetric joints forced to share the smaller of their two bounds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import CompartmentState, StepDiagnostics, ThreeCCParams, _advance, init_state
from .errors import UnboundedDofError

#: Allowed range for the stiffness/damping multiplier beta.
DEFAULT_BETA_RANGE = (0.1, 2.0)

#: Reference stiffness/damping per humanoid joint group (N*m/rad, N*m*s/rad).
DEFAULT_JOINT_GAINS = {
    "abdomen": (120.0, 12.0),
    "neck": (90.0, 9.0),
    "shoulder": (100.0, 10.0),
    "elbow": (110.0, 11.0),
    "hip": (320.0, 32.0),
    "knee": (370.0, 37.0),
    "ankle": (120.0, 12.0),
}


@dataclass
class PdGains:
    kp: float
    kd: float

    def __post_init__(self):
        if not (self.kp > 0 and math.isfinite(self.kp)):
            raise ValueError(f"kp must be positive, got {self.kp}")
        if not (self.kd >= 0 and math.isfinite(self.kd)):
            raise ValueError(f"kd must be >= 0, got {self.kd}")


@dataclass
class PdCommand:
    """Target position plus a stiffness/damping multiplier."""

    u: float
    beta: float = 1.0


@dataclass
class DofState:
    angle: float
    velocity: float


def pd_torque(
    cmd: PdCommand,
    state: DofState,
    gains: PdGains,
    beta_range: tuple[float, float] = DEFAULT_BETA_RANGE,
) -> float:
    """Intended torque: beta * kp * (u - angle) - beta * kd * velocity."""
    if not all(math.isfinite(v) for v in (cmd.u, cmd.beta, state.angle, state.velocity)):
        raise ValueError("non-finite PD input")
    lo, hi = beta_range
    if not (lo <= cmd.beta <= hi):
        raise ValueError(f"beta {cmd.beta} outside allowed range [{lo}, {hi}]")
    return cmd.beta * gains.kp * (cmd.u - state.angle) - cmd.beta * gains.kd * state.velocity


@dataclass
class TorqueBoundTable:
    """Per-DoF constant maximum torque with symmetry pairing."""

    names: list[str]
    t_max: np.ndarray
    symmetry_pairs: list[tuple[int, int]] = field(default_factory=list)

    def __post_init__(self):
        self.t_max = np.asarray(self.t_max, dtype=np.float64)
        if len(self.names) != len(self.t_max):
            raise ValueError("names and t_max lengths differ")
        if np.any(self.t_max < 0) or not np.all(np.isfinite(self.t_max)):
            raise ValueError("torque bounds must be finite and >= 0")
        n = len(self.names)
        for l, r in self.symmetry_pairs:
            if not (0 <= l < n and 0 <= r < n) or l == r:
                raise ValueError(f"bad symmetry pair ({l}, {r})")

    def __len__(self) -> int:
        return len(self.names)

    def copy(self) -> "TorqueBoundTable":
        return TorqueBoundTable(
            list(self.names), self.t_max.copy(), list(self.symmetry_pairs)
        )

    @classmethod
    def zeros(cls, names, symmetry_pairs=()) -> "TorqueBoundTable":
        return cls(list(names), np.zeros(len(names)), list(symmetry_pairs))


def update_torque_bounds(table: TorqueBoundTable, torques) -> TorqueBoundTable:
    """Fold one batch of observed torques into the running maxima (in place)."""
    torques = np.asarray(torques, dtype=np.float64)
    if torques.shape != table.t_max.shape:
        raise ValueError(
            f"expected {table.t_max.shape[0]} torques, got {torques.shape}"
        )
    if not np.all(np.isfinite(torques)):
        raise ValueError("non-finite torque observation")
    np.maximum(table.t_max, np.abs(torques), out=table.t_max)
    return table


def finalize_bounds(table: TorqueBoundTable) -> TorqueBoundTable:
    """Force each symmetric pair to the smaller of its two bounds (in place)."""
    for l, r in table.symmetry_pairs:
        m = min(table.t_max[l], table.t_max[r])
        table.t_max[l] = m
        table.t_max[r] = m
    return table


def target_load(torque: float, t_max: float) -> float:
    """Demanded load in %MVC: |torque| / t_max * 100."""
    if t_max <= 0:
        raise UnboundedDofError(
            f"unbounded DoF: t_max={t_max}; calibrate or author a positive bound"
        )
    return abs(torque) / t_max * 100.0


def fatigued_limit(rc: float, t_max: float) -> float:
    """Effective bound under fatigue: RC * t_max."""
    return rc * t_max


def clip_torque(torque: float, limit: float) -> float:
    """Clamp a torque to [-limit, +limit]."""
    return min(max(torque, -limit), limit)


@dataclass
class DofRecord:
    """Per-DoF outcome of one limiter step (for traces and telemetry)."""

    intended: float
    tl: float
    applied: float
    limit: float
    rc: float
    state: tuple[float, float, float]  # post-step (ma, mr, mf)
    diagnostics: StepDiagnostics


class FatigueLimiter:
    """Per-DoF bundle of fatigue state and torque bound.

    Converts PD commands into applied torques while advancing one fatigue
    model per DoF. All DoFs share a single (F, R, r) setting. The fatigue
    models see the demanded load (pre-clamped to the constant bound, so the
    load is always within [0, 100]), not the delivered one.
    """

    def __init__(
        self,
        params: ThreeCCParams,
        table: TorqueBoundTable,
        gains: list[PdGains],
        init: str = "rested",
        seed=None,
    ):
        if len(gains) != len(table):
            raise ValueError("one PdGains entry per DoF required")
        self.params = params
        self.table = table
        self.gains = list(gains)
        if init == "rested":
            self.states = [init_state() for _ in range(len(table))]
        else:
            self.states = [
                init_state("random", None if seed is None else seed + d)
                for d in range(len(table))
            ]
        n = len(table)
        self.last_applied = np.zeros(n)
        self.last_limit = self.table.t_max.copy()
        self.last_records: list[DofRecord] = []

    @property
    def n_dofs(self) -> int:
        return len(self.table)

    def residual_capacities(self) -> np.ndarray:
        return np.array([(100.0 - s.mf) / 100.0 for s in self.states])

    def step(self, cmds, dof_states, dt: float) -> np.ndarray:
        """Run the full pipeline for every DoF; returns applied torques."""
        if len(cmds) != self.n_dofs or len(dof_states) != self.n_dofs:
            raise ValueError("command/state count does not match DoF count")
        p = self.params
        applied = np.empty(self.n_dofs)
        records = []
        for d in range(self.n_dofs):
            t_int = pd_torque(cmds[d], dof_states[d], self.gains[d])
            t_max = float(self.table.t_max[d])
            tl = target_load(clip_torque(t_int, t_max), t_max)
            s = self.states[d]
            ma, mr, mf, c, rr, case, sat = _advance(
                s.ma, s.mr, s.mf, tl, p.F, p.R, p.r, p.LD, p.LR, dt
            )
            self.states[d] = CompartmentState(ma, mr, mf)
            rc = (100.0 - mf) / 100.0
            limit = fatigued_limit(rc, t_max)
            t_app = clip_torque(t_int, limit)
            applied[d] = t_app
            records.append(
                DofRecord(
                    t_int, tl, t_app, limit, rc, (ma, mr, mf),
                    StepDiagnostics(c, rr, case, sat),
                )
            )
        self.last_applied = applied
        self.last_limit = np.array([r.limit for r in records])
        self.last_records = records
        return applied


def limiter_step(limiter: FatigueLimiter, cmds, dof_states, dt: float) -> np.ndarray:
    """Functional alias for FatigueLimiter.step."""
    return limiter.step(cmds, dof_states, dt)
