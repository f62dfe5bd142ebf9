"""Cumulative muscle-fatigue simulation toolkit."""

from .core import (
    CompartmentState,
    LoadSample,
    StepDiagnostics,
    ThreeCCParams,
    drive,
    init_state,
    integrate_profile,
    residual_capacity,
    rest_rate,
    step,
    step_batch,
)
from .endurance import (
    EnduranceResult,
    SweepGrid,
    endurance_time,
    intermittent_recovery,
    joint_fatigue_ranking,
    ld_lr_sensitivity,
    sustainable_load,
    sweep,
)
from .errors import (
    FatigueSimError,
    SimulationUnstableError,
    TraceFormatError,
    UnboundedDofError,
)
from .torque import (
    DofState,
    FatigueLimiter,
    PdCommand,
    PdGains,
    TorqueBoundTable,
    clip_torque,
    fatigued_limit,
    finalize_bounds,
    limiter_step,
    pd_torque,
    target_load,
    update_torque_bounds,
)
from .traceio import (
    ConservationWarning,
    Trace,
    humanoid_bound_table,
    load_bound_table,
    read_trace,
    write_bound_table,
    write_trace,
)

__version__ = "0.1.0"
