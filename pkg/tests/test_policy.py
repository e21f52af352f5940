import math
from dataclasses import replace

import numpy as np
import pytest

from peace.errors import ConfigError
from peace.fusion import SafetyHeatmap
from peace.policy import (
    EVENT_SUCCESS_ALTITUDE,
    TRANSITIONS,
    LandingPolicy,
    LandingTarget,
    MachineState,
    Observation,
    PolicyConfig,
    apply_focus,
    select_target,
)

CFG = PolicyConfig()


def obs(target=None, altitude=100.0, t=0.0, center=0.9, heat=(64, 64),
        footprint=115.47, pose=(150.0, 150.0), bounds=(0.0, 0.0, 300.0, 300.0)):
    return Observation(target=target, altitude_m=altitude, t_s=t,
                       heatmap_center=center, heat_size=heat, footprint_m=footprint,
                       pose_xy=pose, world_bounds=bounds)


def center_target(heat=(64, 64), conf=0.9, clearance=20.0):
    return LandingTarget(u=(heat[0] - 1) // 2, v=(heat[1] - 1) // 2,
                         confidence=conf, clearance_px=clearance)


# -- focus ---------------------------------------------------------------------

def test_focus_searching_is_noop():
    heat = SafetyHeatmap(values=np.random.default_rng(0).uniform(size=(64, 64)))
    out = apply_focus(heat, MachineState.SEARCHING, CFG)
    np.testing.assert_array_equal(out.values, heat.values)


def test_focus_landing_circle_area():
    heat = SafetyHeatmap(values=np.ones((64, 64)))
    out = apply_focus(heat, MachineState.LANDING, CFG)
    survivors = int((out.values > 0).sum())
    radius = 0.25 * 64
    expected = math.pi * radius ** 2
    ring = 2 * math.pi * radius + 4
    assert abs(survivors - expected) <= ring


def test_focus_single_pixel():
    cfg = replace(CFG, focus_radii={**CFG.focus_radii, "Landing": 0.4 / 65})
    heat = SafetyHeatmap(values=np.ones((65, 65)))
    out = apply_focus(heat, MachineState.LANDING, cfg)
    assert (out.values > 0).sum() == 1
    assert out.values[32, 32] == 1.0


def test_focus_never_increases():
    rng = np.random.default_rng(1)
    heat = SafetyHeatmap(values=rng.uniform(size=(48, 48)))
    for state in MachineState:
        out = apply_focus(heat, state, CFG)
        assert np.all(out.values <= heat.values + 1e-15)


# -- target selection -------------------------------------------------------------

def test_select_target_absent_on_zero_map():
    assert select_target(SafetyHeatmap(values=np.zeros((64, 64))), CFG, 1.0) is None


def test_select_target_disk_center():
    values = np.zeros((64, 64))
    yy, xx = np.ogrid[:64, :64]
    cy, cx = 20, 40
    values[(yy - cy) ** 2 + (xx - cx) ** 2 <= 10 ** 2] = 0.9
    target = select_target(SafetyHeatmap(values=values), CFG, m_per_px=1.0)
    assert target is not None
    assert abs(target.u - cx) <= 1 and abs(target.v - cy) <= 1
    assert target.confidence == pytest.approx(0.9)
    assert target.clearance_px >= 9.0


def test_select_target_prefers_center_on_ties():
    values = np.zeros((65, 65))
    yy, xx = np.ogrid[:65, :65]
    near, far = (32, 22), (7, 57)   # same radius, one nearer image center
    for (cy, cx) in (near, far):
        values[(yy - cy) ** 2 + (xx - cx) ** 2 <= 6 ** 2] = 1.0
    target = select_target(SafetyHeatmap(values=values), CFG, m_per_px=1.0)
    assert (target.v, target.u) == near


def test_select_target_requires_clearance():
    values = np.zeros((64, 64))
    values[30:33, 30:33] = 1.0   # 3x3 blob, clearance ~1.5 px
    assert select_target(SafetyHeatmap(values=values), CFG, m_per_px=10.0) is not None
    # at 0.05 m/px the 1.5 m safety radius needs 30 px of clearance
    assert select_target(SafetyHeatmap(values=values), CFG, m_per_px=0.05) is None


# -- state machine: scripted transitions --------------------------------------------

def test_searching_to_aiming_command_toward_target():
    policy = LandingPolicy(CFG, seed=0)
    target = LandingTarget(u=50, v=31, confidence=0.9, clearance_px=10.0)
    state, cmd, _ = policy.step(MachineState.SEARCHING, obs(target=target))
    assert state is MachineState.AIMING
    assert cmd.vx > 0 and cmd.vz == 0.0   # target is to the +x side
    assert math.hypot(cmd.vx, cmd.vy) <= CFG.v_max_h + 1e-12


def test_searching_without_target_sweeps():
    policy = LandingPolicy(CFG, seed=0)
    state, cmd, _ = policy.step(MachineState.SEARCHING, obs())
    assert state is MachineState.SEARCHING
    assert math.hypot(cmd.vx, cmd.vy) > 0 and cmd.vz == 0.0


def test_aiming_holds_then_lands():
    policy = LandingPolicy(CFG, seed=0)
    state = MachineState.AIMING
    for i in range(CFG.aim_hold_frames):
        assert state is MachineState.AIMING
        state, cmd, _ = policy.step(state, obs(target=center_target(), t=i * 0.5))
    assert state is MachineState.LANDING


def test_aiming_lost_target_returns_to_searching():
    policy = LandingPolicy(CFG, seed=0)
    state, _, _ = policy.step(MachineState.AIMING, obs(target=None))
    assert state is MachineState.SEARCHING


def test_landing_obstacle_goes_waiting():
    policy = LandingPolicy(CFG, seed=0)
    state, cmd, _ = policy.step(MachineState.LANDING,
                                obs(target=center_target(), altitude=60.0, center=0.1))
    assert state is MachineState.WAITING
    assert (cmd.vx, cmd.vy, cmd.vz) == (0.0, 0.0, 0.0)


def test_landing_descends_and_succeeds():
    policy = LandingPolicy(CFG, seed=0)
    state, cmd, _ = policy.step(MachineState.LANDING,
                                obs(target=center_target(), altitude=60.0, center=0.9))
    assert state is MachineState.LANDING and cmd.vz == CFG.v_max_z
    state, cmd, events = policy.step(MachineState.LANDING,
                                     obs(target=center_target(), altitude=19.5, center=0.9))
    assert EVENT_SUCCESS_ALTITUDE in events
    assert state is MachineState.LANDING


def test_waiting_recovers_to_landing():
    policy = LandingPolicy(CFG, seed=0)
    state, _, _ = policy.step(MachineState.LANDING,
                              obs(altitude=50.0, center=0.1, t=0.0))
    assert state is MachineState.WAITING
    state, _, _ = policy.step(MachineState.WAITING,
                              obs(altitude=50.0, center=0.8, t=1.0))
    assert state is MachineState.LANDING


def test_waiting_timeout_climbs():
    policy = LandingPolicy(CFG, seed=0)
    state, _, _ = policy.step(MachineState.LANDING, obs(altitude=50.0, center=0.1, t=0.0))
    assert state is MachineState.WAITING
    state, _, _ = policy.step(MachineState.WAITING, obs(altitude=50.0, center=0.1, t=5.0))
    assert state is MachineState.WAITING
    state, cmd, events = policy.step(
        MachineState.WAITING, obs(altitude=50.0, center=0.1, t=CFG.wait_timeout_s))
    assert state is MachineState.CLIMBING
    assert cmd.vz == -CFG.v_max_z   # ascend
    assert "wait_timeout" in events


def test_climbing_reaches_safe_then_restarts():
    policy = LandingPolicy(CFG, seed=0)
    state, cmd, _ = policy.step(MachineState.CLIMBING, obs(altitude=70.0))
    assert state is MachineState.CLIMBING and cmd.vz < 0
    state, cmd, _ = policy.step(MachineState.CLIMBING, obs(altitude=100.0))
    assert state is MachineState.RESTARTING
    assert math.hypot(cmd.vx, cmd.vy) == pytest.approx(CFG.v_max_h)


def test_restart_distance_one_footprint():
    policy = LandingPolicy(CFG, seed=0)
    state, _, _ = policy.step(MachineState.CLIMBING, obs(altitude=100.0, pose=(150, 150)))
    assert state is MachineState.RESTARTING
    state, _, _ = policy.step(MachineState.RESTARTING,
                              obs(pose=(150 + 50, 150), footprint=115.47))
    assert state is MachineState.RESTARTING   # moved only 50 m
    state, _, _ = policy.step(MachineState.RESTARTING,
                              obs(pose=(150 + 116, 150), footprint=115.47))
    assert state is MachineState.SEARCHING


def test_restart_direction_seeded():
    def direction(seed):
        policy = LandingPolicy(CFG, seed=seed)
        policy.step(MachineState.CLIMBING, obs(altitude=100.0))
        _, cmd, _ = policy.step(MachineState.RESTARTING, obs(pose=(150, 150)))
        return (round(cmd.vx, 9), round(cmd.vy, 9))

    assert direction(3) == direction(3)
    assert direction(3) != direction(4)


def test_full_reachability_cycle():
    policy = LandingPolicy(CFG, seed=1)
    visited = set()
    state = MachineState.SEARCHING
    script = [
        obs(),                                         # stay searching
        obs(target=center_target()),                   # -> aiming
        *[obs(target=center_target(), t=i * 0.5) for i in range(CFG.aim_hold_frames)],
        obs(target=center_target(), altitude=80.0, center=0.9, t=3.0),  # landing
        obs(altitude=70.0, center=0.1, t=3.5),         # -> waiting
        obs(altitude=70.0, center=0.1, t=3.5 + CFG.wait_timeout_s),     # -> climbing
        obs(altitude=90.0, t=15.0),                    # climbing
        obs(altitude=100.0, t=18.0),                   # -> restarting
        obs(pose=(350.0, 150.0), t=19.0),              # moved a footprint -> searching
    ]
    for o in script:
        visited.add(state)
        state, _, _ = policy.step(state, o)
    visited.add(state)
    assert visited == set(MachineState)


def test_fuzzed_steps_stay_legal():
    rng = np.random.default_rng(42)
    policy = LandingPolicy(CFG, seed=9)
    state = MachineState.SEARCHING
    t = 0.0
    for _ in range(10_000):
        t += float(rng.uniform(0.1, 1.0))
        target = None
        if rng.random() < 0.6:
            target = LandingTarget(u=int(rng.integers(0, 64)), v=int(rng.integers(0, 64)),
                                   confidence=float(rng.uniform(0, 1)),
                                   clearance_px=float(rng.uniform(0, 30)))
        o = obs(target=target,
                altitude=float(rng.uniform(0.0, 120.0)),
                t=t,
                center=float(rng.uniform(0, 1)),
                footprint=float(rng.uniform(10.0, 120.0)),
                pose=(float(rng.uniform(0, 300)), float(rng.uniform(0, 300))))
        new_state, cmd, _ = policy.step(state, o)
        assert new_state is state or new_state in TRANSITIONS[state], \
            f"illegal {state} -> {new_state}"
        assert math.hypot(cmd.vx, cmd.vy) <= CFG.v_max_h + 1e-9
        assert abs(cmd.vz) <= CFG.v_max_z + 1e-9
        state = new_state


def test_config_validation():
    with pytest.raises(ConfigError):
        PolicyConfig(tau_safe=1.5).validate()
    with pytest.raises(ConfigError):
        PolicyConfig(success_altitude_m=120.0).validate()
    with pytest.raises(ConfigError):
        PolicyConfig(focus_radii={"Searching": 0.0}).validate()
