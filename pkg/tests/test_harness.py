import math

import numpy as np
import pytest

from fatiguesim import (
    SimulationUnstableError,
    ThreeCCParams,
    TorqueBoundTable,
    UnboundedDofError,
)
from fatiguesim.chain import (
    ChainModel,
    dynamics_step,
    joint_positions,
    mechanical_energy,
)
from fatiguesim.endurance import endurance_time
from fatiguesim.harness import (
    ChainSim,
    SimConfig,
    TaskScript,
    arm_model,
    audit_torque_bounds,
    calibrate_bounds,
    first_sag_time,
    hop_task,
    hopper_model,
    intermittent_hold_task,
    performance_metrics,
    reach_task,
    recovery_experiment,
    simulate,
    single_link_model,
    static_hold_task,
)
from fatiguesim.torque import PdGains


@pytest.fixture(scope="module")
def hopper():
    model = hopper_model()
    task = hop_task(model)
    bounds = calibrate_bounds(model, task, SimConfig(duration=10.0, fatigue_enabled=False))
    return model, task, bounds


@pytest.fixture(scope="module")
def link_hold():
    model = single_link_model()
    task = TaskScript(
        "static_hold", [(0.0, np.zeros(1)), (1.0, np.array([1.2]))], period=1.0
    )
    reference = simulate(
        model, task, SimConfig(duration=30.0, fatigue_enabled=False), bounds=None
    )
    hold_torque = float(
        np.mean(np.abs(reference.get("shoulder", "torque"))[reference.time >= 4.0])
    )
    # bound sized so the hold demands ~55 %MVC
    bounds = TorqueBoundTable(["shoulder"], [hold_torque / 0.55])
    reference = simulate(
        model, task, SimConfig(duration=30.0, fatigue_enabled=False), bounds=bounds
    )
    return model, task, bounds, reference


# ---------------------------------------------------------------------------
# integrator quality
# ---------------------------------------------------------------------------

def test_free_chain_energy_drift_gate():
    model = arm_model()
    q = np.array([0.5, 0.0, 0.0, 0.0])
    v = np.zeros(4)
    e0 = mechanical_energy(model, q, v)
    dt = 1.0 / 120.0
    worst = 0.0
    for _ in range(int(5.0 / dt)):
        q, v = dynamics_step(model, q, v, np.zeros(4), dt)
        worst = max(worst, abs(mechanical_energy(model, q, v) - e0))
    assert worst / abs(e0) / 5.0 < 0.01  # < 1% drift per simulated second


def test_velocity_blowup_raises():
    model = ChainModel(
        name="spinner",
        link_lengths=np.array([0.5]),
        link_masses=np.array([2.0]),
        link_inertias=np.array([2.0 * 0.5**2 / 12.0]),
        gains=[PdGains(40, 4)],
        joint_low=np.array([-1e9]),
        joint_high=np.array([1e9]),
    )
    q, v = np.zeros(1), np.zeros(1)
    with pytest.raises(SimulationUnstableError):
        for _ in range(2000):
            q, v = dynamics_step(model, q, v, np.array([5000.0]), 1 / 120)


def test_static_hold_at_rest_pose_tracks():
    model = arm_model()
    task = static_hold_task(model, pose=np.zeros(4))
    tr = simulate(model, task, SimConfig(duration=3.0, fatigue_enabled=False), bounds=None)
    final_err = [abs(tr.get(j, "q")[-1]) for j in model.joint_names]
    assert max(final_err) < 0.05


def test_config_requires_integer_step_ratio():
    with pytest.raises(ValueError):
        SimConfig(duration=1.0, sim_dt=1 / 100, control_dt=1 / 30)


# ---------------------------------------------------------------------------
# fatigue-disabled vs non-fatigable identity, determinism
# ---------------------------------------------------------------------------

def test_zero_params_trace_matches_disabled_bitwise(hopper):
    model, task, bounds = hopper
    zero = simulate(model, task, SimConfig(duration=8.0, params=ThreeCCParams(0, 0, 0)), bounds=bounds)
    off = simulate(model, task, SimConfig(duration=8.0, fatigue_enabled=False), bounds=bounds)
    shared = [c for c in off.columns if c in zero.columns]
    assert shared
    for c in shared:
        assert np.array_equal(zero.columns[c], off.columns[c]), c
    for j in model.joint_names:
        assert np.all(zero.get(j, "rc") == 1.0)
        assert np.all(zero.get(j, "mf") == 0.0)


def test_simulation_deterministic(hopper):
    model, task, bounds = hopper
    cfg = SimConfig(duration=6.0, params=ThreeCCParams(1.0, 0.01, 1.0), seed=3)
    a = simulate(model, task, cfg, bounds=bounds)
    b = simulate(model, task, cfg, bounds=bounds)
    assert list(a.columns) == list(b.columns)
    for c in a.columns:
        assert np.array_equal(a.columns[c], b.columns[c])


def test_torque_ceiling_audit(hopper):
    model, task, bounds = hopper
    tr = simulate(model, task, SimConfig(duration=10.0, params=ThreeCCParams(1.0, 0.01, 1.0)), bounds=bounds)
    assert audit_torque_bounds(tr, bounds) == 0


def test_fatigue_needs_bounds(hopper):
    model, task, _ = hopper
    with pytest.raises(UnboundedDofError):
        ChainSim(model, task, SimConfig(duration=1.0), bounds=None)


# ---------------------------------------------------------------------------
# calibration
# ---------------------------------------------------------------------------

def test_calibrate_zero_gravity_hold_gives_zero_bounds():
    model = arm_model()
    model.gravity = 0.0
    task = static_hold_task(model, pose=np.zeros(4), ramp=0.5)
    table = calibrate_bounds(model, task, SimConfig(duration=2.0))
    assert np.all(table.t_max == 0.0)
    model.bounds = table
    with pytest.raises(UnboundedDofError):
        simulate(model, task, SimConfig(duration=1.0))


def test_calibrate_symmetry_pairs_equalized():
    model = arm_model()
    model.symmetry_pairs = [(0, 1)]
    table = calibrate_bounds(model, reach_task(model), SimConfig(duration=8.0))
    assert table.t_max[0] == table.t_max[1]
    assert table.t_max[0] > 0


def test_hop_calibration_leg_bounds_exceed_hip(hopper):
    model, task, bounds = hopper
    by = dict(zip(bounds.names, bounds.t_max))
    assert by["ankle"] > by["hip"]
    assert by["knee"] > by["hip"]


# ---------------------------------------------------------------------------
# performance metrics and emergent degradation
# ---------------------------------------------------------------------------

def test_unfatigued_amplitudes_flat(hopper):
    model, task, bounds = hopper
    tr = simulate(model, task, SimConfig(duration=14.0, fatigue_enabled=False), bounds=bounds)
    m = performance_metrics(tr, task)
    spread = (m.amplitude.max() - m.amplitude.min()) / m.amplitude.max()
    assert spread < 0.05


def test_fatigued_hops_decay_and_count_fewer(hopper):
    model, task, bounds = hopper
    nf = simulate(model, task, SimConfig(duration=14.0, fatigue_enabled=False), bounds=bounds)
    m_nf = performance_metrics(nf, task)
    fat = simulate(
        model, task, SimConfig(duration=14.0, params=ThreeCCParams(1.0, 0.01, 1.0)),
        bounds=bounds,
    )
    m_f = performance_metrics(fat, task, reference=m_nf.reference)
    slope = np.polyfit(np.arange(len(m_f.amplitude)), m_f.amplitude, 1)[0]
    assert slope < 0
    assert m_f.completed < m_nf.completed


def test_metrics_reject_non_cyclic():
    model = arm_model()
    task = static_hold_task(model)
    tr = simulate(model, task, SimConfig(duration=3.0, fatigue_enabled=False), bounds=None)
    with pytest.raises(ValueError):
        performance_metrics(tr, task)


def test_rest_window_recovery(hopper):
    model, _, bounds = hopper
    task = hop_task(model, rest_windows=[(8.0, 20.0)])
    rep = recovery_experiment(
        model, task, SimConfig(duration=32.0, params=ThreeCCParams(1.0, 0.01, 15.0)),
        bounds=bounds,
    )
    w = rep.windows[0]
    assert w.mf_end < w.mf_start
    assert w.post_amplitude > w.pre_amplitude


def test_rest_window_no_recovery_without_r():
    model = hopper_model()
    task = hop_task(model, rest_windows=[(6.0, 14.0)])
    bounds = calibrate_bounds(model, task, SimConfig(duration=6.0, fatigue_enabled=False))
    rep = recovery_experiment(
        model, task, SimConfig(duration=20.0, params=ThreeCCParams(1.0, 0.0, 1.0)),
        bounds=bounds,
    )
    w = rep.windows[0]
    assert w.mf_end >= w.mf_start - 1e-9  # R=0: fatigue cannot drain


def test_recovery_requires_long_rest_window(hopper):
    model, _, bounds = hopper
    task = hop_task(model, rest_windows=[(6.0, 8.0)])
    with pytest.raises(ValueError):
        recovery_experiment(model, task, SimConfig(duration=12.0), bounds=bounds)


# ---------------------------------------------------------------------------
# cross-module consistency: sag onset vs endurance prediction
# ---------------------------------------------------------------------------

def test_hold_sag_onset_matches_endurance_prediction(link_hold):
    model, task, bounds, reference = link_hold
    tl = float(
        np.mean(np.abs(reference.get("shoulder", "torque"))[reference.time >= 4.0])
        / bounds.t_max[0] * 100.0
    )
    assert tl >= 40.0
    ramp = task.keyframes[-1][0]
    for F in (0.3, 0.5):
        p = ThreeCCParams(F, 0.01, 1.0)
        fat = simulate(model, task, SimConfig(duration=30.0, params=p), bounds=bounds)
        sag = first_sag_time(fat, reference, "shoulder", tolerance=0.1, settle=1.5)
        predicted = ramp + endurance_time(tl, p).endurance_time
        assert sag is not None
        assert abs(sag - predicted) / predicted <= 0.30, (F, sag, predicted)


def test_time_to_sag_monotone_in_fatigue_rate(link_hold):
    model, task, bounds, reference = link_hold
    sags = []
    for F in (0.5, 1.0, 2.0):
        fat = simulate(
            model, task, SimConfig(duration=30.0, params=ThreeCCParams(F, 0.01, 1.0)),
            bounds=bounds,
        )
        sags.append(first_sag_time(fat, reference, "shoulder", tolerance=0.1, settle=1.5))
    assert all(s is not None for s in sags)
    assert sags[0] >= sags[1] >= sags[2]


def test_intermittent_hold_keeps_alternating(hopper):
    model = arm_model()
    task = intermittent_hold_task(model, hold=3.0, rest=3.0, repeats=3)
    bounds = calibrate_bounds(model, reach_task(model), SimConfig(duration=8.0))
    tr = simulate(model, task, SimConfig(duration=18.0, params=ThreeCCParams(1.0, 0.05, 10.0)), bounds=bounds)
    mf = tr.get("shoulder", "mf")
    t = tr.time
    # fatigue rises during each hold and falls across each rest window
    hold_rise = mf[np.searchsorted(t, 2.9)] > mf[np.searchsorted(t, 0.5)]
    rest_fall = mf[np.searchsorted(t, 5.9)] < mf[np.searchsorted(t, 3.1)]
    assert hold_rise and rest_fall


# ---------------------------------------------------------------------------
# task script behavior
# ---------------------------------------------------------------------------

def test_task_keyframe_interpolation_and_wrap():
    task = TaskScript(
        "repetitive_reach",
        [(0.0, np.array([0.0])), (1.0, np.array([1.0]))],
        period=2.0,
    )
    assert task.targets_at(0.5)[0] == pytest.approx(0.5)
    assert task.targets_at(1.5)[0] == pytest.approx(0.5)  # wrap back toward start
    assert task.targets_at(2.5)[0] == pytest.approx(0.5)  # second cycle


def test_task_rest_window_overrides_targets():
    task = TaskScript(
        "hop",
        [(0.0, np.array([1.0]))],
        period=1.0,
        rest_windows=[(2.0, 4.0)],
        rest_pose=np.array([0.25]),
        rest_beta=0.3,
    )
    assert task.targets_at(2.5)[0] == 0.25
    assert task.beta_at(2.5) == 0.3
    assert task.beta_at(4.5) == 1.0


def test_task_validation():
    with pytest.raises(ValueError):
        TaskScript("juggle", [(0.0, np.zeros(1))], period=1.0)
    with pytest.raises(ValueError):
        TaskScript("hop", [(0.9, np.zeros(1)), (0.1, np.zeros(1))], period=1.0)
    with pytest.raises(ValueError):
        TaskScript("hop", [(0.0, np.zeros(1))], period=0.0)
    model = single_link_model()
    outside = TaskScript("static_hold", [(0.0, np.array([9.0]))], period=1.0)
    with pytest.raises(ValueError):
        outside.validate_against(model)


def test_joint_positions_shape_and_reach():
    model = arm_model()
    pts = joint_positions(model, np.zeros(4))
    assert pts.shape == (5, 2)
    assert pts[-1][1] == pytest.approx(-float(np.sum(model.link_lengths)))


def test_harness_trace_round_trips_and_revalidates(tmp_path, hopper):
    import warnings

    from fatiguesim import ConservationWarning, read_trace, write_trace

    model, task, bounds = hopper
    tr = simulate(model, task, SimConfig(duration=6.0, params=ThreeCCParams(1.0, 0.01, 1.0)), bounds=bounds)
    for suffix in ("csv", "npz", "json"):
        path = tmp_path / f"hop.{suffix}"
        write_trace(tr, path)
        with warnings.catch_warnings():
            warnings.simplefilter("error", ConservationWarning)
            back = read_trace(path).validate()
        for name in tr.columns:
            assert np.array_equal(back.columns[name], tr.columns[name]), (suffix, name)
        assert back.meta["model_hash"] == tr.meta["model_hash"]
