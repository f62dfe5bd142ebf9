"""Scripted-task simulation harness.

Couples the planar chain to the PD + fatigue-limiting torque pipeline and
runs declarative task scripts against it: static holds, repetitive
reaches, hops on the prismatic-root hopper, and holds with scheduled rest
windows. The harness is where emergent effects are measured: amplitude
decay across cycles, repetition counts, recovery across rest windows and
time-to-sag under sustained holds.

Simulation runs at a fine rigid-body step while the fatigue pipeline
advances at the coarser control step. At each control tick the intended
torque is estimated with the explicit PD formula, fed through the fatigue
limiter, and the resulting clip ratio scales the joint's stiffness and
damping for the following substeps; the inner loop then evaluates the
scaled PD law against the instantaneous state. Holding the ratio rather
than a frozen torque keeps the fine step stable for light distal joints,
which a zero-order-held torque at the control rate cannot do.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .chain import ChainModel, dynamics_step, joint_positions
from .core import ThreeCCParams
from .errors import UnboundedDofError
from .torque import (
    DofState,
    FatigueLimiter,
    PdCommand,
    PdGains,
    TorqueBoundTable,
    clip_torque,
    finalize_bounds,
    pd_torque,
    update_torque_bounds,
)
from .traceio import Trace

CYCLIC_KINDS = ("repetitive_reach", "hop")
TASK_KINDS = ("static_hold", "repetitive_reach", "hop", "intermittent_hold")

#: Per-DoF fatigue fields recorded at every control tick.
FATIGUE_FIELDS = ("tl", "ma", "mr", "mf", "rc", "torque", "applied", "case")


@dataclass
class TaskScript:
    """Keyframed joint targets, cycled with ``period``, overridden by a
    rest pose inside rest windows."""

    kind: str
    keyframes: list[tuple[float, np.ndarray]]
    period: float
    rest_windows: list[tuple[float, float]] = field(default_factory=list)
    rest_pose: np.ndarray | None = None
    beta: float = 1.0
    rest_beta: float | None = None  # stiffness multiplier inside rest windows

    def __post_init__(self):
        if self.kind not in TASK_KINDS:
            raise ValueError(f"unknown task kind {self.kind!r}")
        if self.period <= 0:
            raise ValueError("cycle period must be positive")
        if not self.keyframes:
            raise ValueError("task needs at least one keyframe")
        self.keyframes = [
            (float(t), np.asarray(pose, dtype=np.float64)) for t, pose in self.keyframes
        ]
        times = [t for t, _ in self.keyframes]
        if times != sorted(times) or times[0] < 0:
            raise ValueError("keyframe times must be sorted and non-negative")
        if self.cyclic and times[-1] >= self.period:
            raise ValueError("cyclic keyframe times must stay within [0, period)")
        for a, b in self.rest_windows:
            if not b > a >= 0:
                raise ValueError(f"bad rest window ({a}, {b})")
        if self.rest_pose is not None:
            self.rest_pose = np.asarray(self.rest_pose, dtype=np.float64)

    @property
    def cyclic(self) -> bool:
        return self.kind in CYCLIC_KINDS

    def in_rest(self, t: float) -> bool:
        return any(a <= t < b for a, b in self.rest_windows)

    def beta_at(self, t: float) -> float:
        if self.in_rest(t) and self.rest_beta is not None:
            return self.rest_beta
        return self.beta

    def targets_at(self, t: float) -> np.ndarray:
        if self.in_rest(t):
            if self.rest_pose is not None:
                return self.rest_pose
            return np.zeros_like(self.keyframes[0][1])
        frames = self.keyframes
        if self.cyclic:
            tc = t % self.period
        else:
            # holds ramp through their keyframes once, then keep the last
            tc = min(t, frames[-1][0])
        if len(frames) == 1 or tc >= frames[-1][0]:
            if self.cyclic and tc > frames[-1][0]:
                # wraparound from the last frame back to the first
                t0, p0 = frames[-1]
                t1, p1 = frames[0][0] + self.period, frames[0][1]
                w = (tc - t0) / (t1 - t0)
                return (1 - w) * p0 + w * p1
            return frames[-1][1]
        for (t0, p0), (t1, p1) in zip(frames, frames[1:]):
            if t0 <= tc < t1:
                w = (tc - t0) / (t1 - t0)
                return (1 - w) * p0 + w * p1
        return frames[0][1]  # tc before the first keyframe (not reachable)

    def validate_against(self, model: ChainModel) -> "TaskScript":
        for _, pose in self.keyframes:
            if len(pose) != model.n_links:
                raise ValueError("keyframe width does not match joint count")
            if np.any(pose < model.joint_low) or np.any(pose > model.joint_high):
                raise ValueError("keyframe target outside joint limits")
        return self


@dataclass
class SimConfig:
    duration: float
    params: ThreeCCParams = field(default_factory=lambda: ThreeCCParams(1.0, 0.01, 1.0))
    sim_dt: float = 1.0 / 120.0
    control_dt: float = 1.0 / 30.0
    fatigue_enabled: bool = True
    init: str = "rested"
    seed: int | None = None

    def __post_init__(self):
        if self.duration <= 0 or self.sim_dt <= 0 or self.control_dt <= 0:
            raise ValueError("duration and time steps must be positive")
        ratio = self.control_dt / self.sim_dt
        if abs(ratio - round(ratio)) > 1e-9 or round(ratio) < 1:
            raise ValueError("control_dt must be an integer multiple of sim_dt")

    @property
    def substeps(self) -> int:
        return int(round(self.control_dt / self.sim_dt))


class ChainSim:
    """Incremental simulation: one control tick at a time.

    Used by simulate() for batch runs and by the live service for
    streaming; both paths therefore share identical arithmetic.
    """

    def __init__(
        self,
        model: ChainModel,
        task: TaskScript,
        cfg: SimConfig,
        bounds: TorqueBoundTable | None | str = "model",
    ):
        task.validate_against(model)
        self.model = model
        self.task = task
        self.cfg = cfg
        # bounds=None runs unclamped (calibration); the default inherits
        # the table attached to the model
        self.bounds = model.bounds if isinstance(bounds, str) else bounds
        if cfg.fatigue_enabled:
            if self.bounds is None:
                raise UnboundedDofError(
                    "fatigue limiting needs a torque bound table; calibrate first"
                )
            self.limiter = FatigueLimiter(
                cfg.params, self.bounds, model.gains, init=cfg.init, seed=cfg.seed
            )
        else:
            self.limiter = None
        self.q = model.rest_coords()
        if model.home is not None:
            off = 1 if model.root == "prismatic_y" else 0
            self.q[off:] = model.home
        if model.root == "prismatic_y":
            self.q[0] = model.root_home
        self.v = np.zeros(model.n_coords)
        self.tick = 0
        self._kp = np.array([g.kp for g in model.gains])
        self._kd = np.array([g.kd for g in model.gains])

    @property
    def t(self) -> float:
        return self.tick * self.cfg.control_dt

    def joint_state(self) -> tuple[np.ndarray, np.ndarray]:
        _, qj = self.model.split(self.q)
        _, vj = self.model.split(self.v)
        return qj, vj

    def control_tick(self) -> dict:
        """Run the fatigue pipeline on the current state, then advance one
        control period of rigid-body substeps. Returns the tick record."""
        model, cfg = self.model, self.cfg
        t = self.t
        targets = self.task.targets_at(t)
        beta = self.task.beta_at(t)
        qj, vj = self.joint_state()
        cmds = [PdCommand(float(u), beta) for u in targets]
        dof_states = [DofState(float(qj[i]), float(vj[i])) for i in range(model.n_links)]

        rec: dict = {"t": t, "q": qj.copy(), "dq": vj.copy()}
        if self.limiter is not None:
            applied = self.limiter.step(cmds, dof_states, cfg.control_dt)
            rec["records"] = self.limiter.last_records
            intended = np.array([r.intended for r in self.limiter.last_records])
        else:
            intended = np.array(
                [pd_torque(cmds[i], dof_states[i], model.gains[i]) for i in range(model.n_links)]
            )
            if self.bounds is not None:
                applied = np.array(
                    [clip_torque(ti, float(tm)) for ti, tm in zip(intended, self.bounds.t_max)]
                )
            else:
                applied = intended
            rec["records"] = None
        rec["intended"] = intended
        rec["applied"] = applied

        pts = joint_positions(model, self.q)
        rec["ee"] = pts[-1]
        if model.root == "prismatic_y":
            rec["root_y"] = self.q[0]

        # the clip becomes a gain ratio: substeps run the PD law against the
        # instantaneous state with stiffness/damping scaled down by it, the
        # damping half integrated implicitly
        scale = np.ones(model.n_links)
        nz = intended != 0.0
        scale[nz] = applied[nz] / intended[nz]
        kp = scale * beta * self._kp
        kd = scale * beta * self._kd
        for _ in range(cfg.substeps):
            _, qs = model.split(self.q)
            tau = kp * (targets - qs)
            self.q, self.v = dynamics_step(
                model, self.q, self.v, tau, cfg.sim_dt, joint_damping=kd
            )
        self.tick += 1
        return rec


def simulate(
    model: ChainModel,
    task: TaskScript,
    cfg: SimConfig,
    bounds: TorqueBoundTable | None | str = "model",
) -> Trace:
    """Run the task for cfg.duration and collect the control-tick trace."""
    sim = ChainSim(model, task, cfg, bounds)
    n = int(round(cfg.duration / cfg.control_dt))
    recs = [sim.control_tick() for _ in range(n)]
    return _trace_from_records(sim, recs)


def _trace_from_records(sim: ChainSim, recs: list[dict]) -> Trace:
    model, cfg = sim.model, sim.cfg
    names = model.joint_names
    n = len(recs)
    cols: dict[str, np.ndarray] = {}
    t = np.array([r["t"] for r in recs])
    for i, name in enumerate(names):
        cols[f"{name}.q"] = np.array([r["q"][i] for r in recs])
        cols[f"{name}.dq"] = np.array([r["dq"][i] for r in recs])
        cols[f"{name}.torque"] = np.array([r["intended"][i] for r in recs])
        cols[f"{name}.applied"] = np.array([r["applied"][i] for r in recs])
        if sim.limiter is not None:
            dof_recs = [r["records"][i] for r in recs]
            cols[f"{name}.tl"] = np.array([dr.tl for dr in dof_recs])
            cols[f"{name}.ma"] = np.array([dr.state[0] for dr in dof_recs])
            cols[f"{name}.mr"] = np.array([dr.state[1] for dr in dof_recs])
            cols[f"{name}.mf"] = np.array([dr.state[2] for dr in dof_recs])
            cols[f"{name}.rc"] = np.array([dr.rc for dr in dof_recs])
            cols[f"{name}.case"] = np.array(
                [dr.diagnostics.case_id for dr in dof_recs], dtype=np.float64
            )
    cols["ee_x"] = np.array([r["ee"][0] for r in recs])
    cols["ee_y"] = np.array([r["ee"][1] for r in recs])
    if model.root == "prismatic_y":
        cols["root_y"] = np.array([r["root_y"] for r in recs])

    meta = {
        "schema": "fatiguesim-trace",
        "version": 1,
        "kind": "chain",
        "dofs": list(names),
        "dt": cfg.control_dt,
        "sim_dt": cfg.sim_dt,
        "duration": cfg.duration,
        "params": cfg.params.as_dict(),
        "fatigue_enabled": cfg.fatigue_enabled,
        "seed": cfg.seed,
        "init": cfg.init,
        "model_hash": model.hash(),
        "model": model.name,
        "task": sim.task.kind,
    }
    return Trace(meta=meta, time=t, columns=cols)


def calibrate_bounds(model: ChainModel, task: TaskScript, cfg: SimConfig) -> TorqueBoundTable:
    """Estimate per-DoF maximum torques from an unfatigued run of the task.

    Tracks the running maximum of intended PD torques, then applies the
    symmetry rule (paired joints take the smaller of their two maxima).
    """
    cal_cfg = replace(cfg, fatigue_enabled=False)
    sim = ChainSim(model, task, cal_cfg, bounds=None)
    table = TorqueBoundTable.zeros(model.joint_names, model.symmetry_pairs)
    n = int(round(cfg.duration / cfg.control_dt))
    for _ in range(n):
        rec = sim.control_tick()
        update_torque_bounds(table, rec["intended"])
    return finalize_bounds(table)


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------

@dataclass
class CycleMetrics:
    cycle_start: np.ndarray
    amplitude: np.ndarray
    reference: float
    completed: int
    threshold: float


def performance_metrics(
    trace: Trace,
    task: TaskScript,
    reference: float | None = None,
    threshold: float = 0.7,
    signal: str = "ee_y",
) -> CycleMetrics:
    """Per-cycle peak of ``signal`` and the completed-repetition count.

    A cycle counts as completed when its peak reaches ``threshold`` of the
    reference amplitude (the trace's own best cycle unless a reference
    from an unfatigued run is supplied). Cycles overlapping rest windows
    are excluded.
    """
    if not task.cyclic:
        raise ValueError(f"task kind {task.kind!r} is not cyclic")
    t = trace.time
    y = trace.columns[signal]
    t_end = t[-1]
    starts, peaks = [], []
    k = 0
    while (k + 1) * task.period <= t_end + 1e-9:
        a, b = k * task.period, (k + 1) * task.period
        k += 1
        if any(wa < b and wb > a for wa, wb in task.rest_windows):
            continue
        mask = (t >= a - 1e-9) & (t < b - 1e-9)
        if not np.any(mask):
            continue
        starts.append(a)
        peaks.append(float(np.max(y[mask])))
    amplitude = np.asarray(peaks)
    if reference is None:
        reference = float(np.max(amplitude)) if len(amplitude) else 0.0
    completed = int(np.sum(amplitude >= threshold * reference))
    return CycleMetrics(np.asarray(starts), amplitude, reference, completed, threshold)


@dataclass
class RestWindowReport:
    window: tuple[float, float]
    mf_start: float
    mf_end: float
    pre_amplitude: float | None
    post_amplitude: float | None


@dataclass
class RecoveryReport:
    windows: list[RestWindowReport]
    metrics: CycleMetrics
    trace: Trace


def recovery_experiment(
    model: ChainModel,
    task: TaskScript,
    cfg: SimConfig,
    bounds: TorqueBoundTable | None | str = "model",
) -> RecoveryReport:
    """Run a task containing rest windows and report fatigue and amplitude
    on both sides of each window."""
    if not any(b - a >= 5.0 for a, b in task.rest_windows):
        raise ValueError("task needs at least one rest window of >= 5 s")
    trace = simulate(model, task, cfg, bounds)
    metrics = performance_metrics(trace, task) if task.cyclic else None
    t = trace.time
    mf_cols = [trace.get(d, "mf") for d in trace.dofs if trace.has(d, "mf")]
    mean_mf = np.mean(mf_cols, axis=0)
    windows = []
    for a, b in task.rest_windows:
        ia = int(np.searchsorted(t, a - 1e-9))
        ib = min(int(np.searchsorted(t, b - 1e-9)), len(t) - 1)
        pre = post = None
        if metrics is not None and len(metrics.amplitude):
            before = metrics.cycle_start + task.period <= a + 1e-9
            after = metrics.cycle_start >= b - 1e-9
            if np.any(before):
                pre = float(metrics.amplitude[before][-1])
            if np.any(after):
                post = float(metrics.amplitude[after][0])
        windows.append(
            RestWindowReport((a, b), float(mean_mf[ia]), float(mean_mf[ib]), pre, post)
        )
    return RecoveryReport(windows, metrics, trace)


def first_sag_time(
    trace: Trace,
    reference: Trace,
    dof: str,
    tolerance: float,
    settle: float = 1.0,
) -> float | None:
    """First time after ``settle`` that a joint deviates from its
    unfatigued reference trajectory by more than ``tolerance`` (rad).

    Comparing against a fatigue-disabled run of the same scenario keeps
    the detector meaningful even when fatigue bites before any settled
    baseline could be measured.
    """
    n = min(len(trace), len(reference))
    t = trace.time[:n]
    err = np.abs(trace.get(dof, "q")[:n] - reference.get(dof, "q")[:n])
    bad = (t >= settle) & (err > tolerance)
    if not np.any(bad):
        return None
    return float(t[np.argmax(bad)])


def audit_torque_bounds(trace: Trace, table: TorqueBoundTable) -> int:
    """Count post-hoc violations of |applied| <= rc * t_max in a trace."""
    violations = 0
    for i, name in enumerate(table.names):
        if not trace.has(name, "applied") or not trace.has(name, "rc"):
            continue
        applied = trace.get(name, "applied")
        rc = trace.get(name, "rc")
        violations += int(np.sum(np.abs(applied) > rc * table.t_max[i]))
    return violations


# ---------------------------------------------------------------------------
# preset models and tasks
# ---------------------------------------------------------------------------

def single_link_model() -> ChainModel:
    """One-link pendulum; the cleanest fixture for hold-fatigue oracles."""
    return ChainModel(
        name="link1",
        link_lengths=np.array([0.5]),
        link_masses=np.array([2.0]),
        link_inertias=np.array([2.0 * 0.5**2 / 12.0]),
        gains=[PdGains(40, 4)],
        joint_low=np.array([-2.6]),
        joint_high=np.array([2.6]),
        joint_names=["shoulder"],
        home=np.zeros(1),
    )


def arm_model() -> ChainModel:
    """Four-link anchored chain: shoulder, elbow, wrist, knuckle.

    Gains respect the 30 Hz zero-order-hold torque update: each joint's
    stiffness stays below what the sampled loop can stabilize given the
    articulated inertia it drives, so distal joints are soft.
    """
    lengths = np.array([0.35, 0.30, 0.25, 0.20])
    masses = np.array([2.0, 1.5, 1.0, 0.5])
    return ChainModel(
        name="arm4",
        link_lengths=lengths,
        link_masses=masses,
        link_inertias=masses * lengths**2 / 12.0,
        gains=[PdGains(150, 18), PdGains(60, 8), PdGains(16, 2.2), PdGains(2.5, 0.5)],
        joint_low=np.array([-2.6, -2.6, -2.2, -1.8]),
        joint_high=np.array([2.6, 2.6, 2.2, 1.8]),
        joint_names=["shoulder", "elbow", "wrist", "knuckle"],
        home=np.zeros(4),
    )


def hopper_model() -> ChainModel:
    """Three-link vertical hopper on an unactuated prismatic root: the base
    slides vertically and bounces on a one-sided penalty ground."""
    lengths = np.array([0.40, 0.40, 0.50])
    masses = np.array([1.5, 2.0, 4.0])
    up = math.pi
    return ChainModel(
        name="hopper3",
        link_lengths=lengths,
        link_masses=masses,
        link_inertias=masses * lengths**2 / 12.0,
        gains=[PdGains(800, 40), PdGains(520, 26), PdGains(110, 5.5)],
        joint_low=np.array([up - 1.0, -0.3, -1.3]),
        joint_high=np.array([up + 0.5, 2.2, 1.0]),
        joint_names=["ankle", "knee", "hip"],
        root="prismatic_y",
        home=np.array([up - 0.7, 1.4, -1.0]),
        root_home=0.0,
    )


def static_hold_task(model: ChainModel, pose=None, ramp: float = 1.0) -> TaskScript:
    if pose is None:
        pose = _default_hold_pose(model)
    start = model.home if model.home is not None else np.zeros(model.n_links)
    return TaskScript("static_hold", [(0.0, start), (ramp, pose)], period=1.0)


def _raised_arm_pose() -> np.ndarray:
    return np.array([1.35, 0.45, 0.25, 0.15])


def _default_hold_pose(model: ChainModel) -> np.ndarray:
    if model.n_links == 4:
        return _raised_arm_pose()
    pose = np.linspace(1.2, 0.15, model.n_links)
    return np.clip(pose, model.joint_low + 0.05, model.joint_high - 0.05)


def reach_task(model: ChainModel, period: float = 2.0) -> TaskScript:
    low = np.array([0.25, 0.15, 0.10, 0.05])
    high = _raised_arm_pose()
    return TaskScript(
        "repetitive_reach",
        [(0.0, low), (period / 2, high)],
        period=period,
        rest_pose=np.zeros(4),
    )


def intermittent_hold_task(
    model: ChainModel, hold: float = 4.0, rest: float = 4.0, repeats: int = 6
) -> TaskScript:
    windows = [(hold + k * (hold + rest), (k + 1) * (hold + rest)) for k in range(repeats)]
    return TaskScript(
        "intermittent_hold",
        [(0.0, _raised_arm_pose())],
        period=1.0,
        rest_windows=windows,
        rest_pose=np.zeros(4),
    )


def hop_task(
    model: ChainModel, period: float = 1.0, rest_windows=None
) -> TaskScript:
    up = math.pi
    crouch = np.array([up - 0.7, 1.4, -1.0])
    extend = np.array([up, 0.0, 0.0])
    # resting means flopping onto the passive stops: ankle and knee lie on
    # their limits, the hip hangs free, so holding the pose costs ~no torque
    settle = np.array([up + 0.5, 2.2, 0.43])
    return TaskScript(
        "hop",
        [(0.0, crouch), (0.1 * period, extend), (0.45 * period, crouch)],
        period=period,
        rest_windows=list(rest_windows or []),
        rest_pose=settle,
        rest_beta=0.3,
    )


PRESET_MODELS = {"arm": arm_model, "hopper": hopper_model, "pendulum": single_link_model}


def preset_task(name: str, model: ChainModel, **kwargs) -> TaskScript:
    factory = {
        "hold": static_hold_task,
        "reach": reach_task,
        "hop": hop_task,
        "intermittent": intermittent_hold_task,
    }
    if name not in factory:
        raise ValueError(f"unknown task {name!r}, expected one of {sorted(factory)}")
    return factory[name](model, **kwargs)
