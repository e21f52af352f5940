"""Six-state landing controller: focus masking, target selection, commands.

States and intent:

    Searching   coarse sweep for a landing spot at the safe altitude
    Aiming      refine horizontal alignment over a candidate spot
    Landing     descend while monitoring the spot for obstacles
    Waiting     hold position if the spot stops looking safe mid-descent
    Climbing    give up after a wait timeout, climb back to safe altitude
    Restarting  translate one camera footprint away, then search again

The "obstacle" signal during Landing/Waiting is the focused heatmap value at
the image center dropping below the safety threshold. All geometry is done
at heatmap resolution; meters convert to heatmap pixels through the camera
footprint at the current altitude.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy import ndimage

from .errors import ConfigError, ContractError
from .fusion import SafetyHeatmap


class MachineState(Enum):
    SEARCHING = "Searching"
    AIMING = "Aiming"
    LANDING = "Landing"
    WAITING = "Waiting"
    CLIMBING = "Climbing"
    RESTARTING = "Restarting"


# Legal transition edges (self-loops implied). Anything else is a bug.
TRANSITIONS: dict[MachineState, tuple[MachineState, ...]] = {
    MachineState.SEARCHING: (MachineState.AIMING,),
    MachineState.AIMING: (MachineState.LANDING, MachineState.SEARCHING),
    MachineState.LANDING: (MachineState.WAITING,),
    MachineState.WAITING: (MachineState.LANDING, MachineState.CLIMBING),
    MachineState.CLIMBING: (MachineState.RESTARTING,),
    MachineState.RESTARTING: (MachineState.SEARCHING,),
}

EVENT_SUCCESS_ALTITUDE = "success_altitude_reached"
EVENT_WAIT_TIMEOUT = "wait_timeout"


@dataclass(frozen=True)
class PolicyConfig:
    tau_safe: float = 0.5                 # heatmap value considered safe
    safety_radius_m: float = 1.5          # required clearance around touchdown
    aim_epsilon_frac: float = 0.05        # of heatmap width
    aim_hold_frames: int = 5
    wait_timeout_s: float = 10.0
    safe_altitude_m: float = 100.0
    success_altitude_m: float = 20.0
    v_max_h: float = 5.0                  # m/s horizontal
    v_max_z: float = 3.0                  # m/s vertical
    horizontal_gain: float = 0.8          # 1/s proportional gain toward target
    lawnmower_stride_frac: float = 0.5    # of footprint
    focus_radii: dict[str, float] = field(default_factory=lambda: {
        "Searching": 1.0,
        "Aiming": 0.5,
        "Landing": 0.25,
        "Waiting": 0.25,
        "Climbing": 1.0,
        "Restarting": 1.0,
    })

    def validate(self) -> None:
        if not 0.0 < self.tau_safe < 1.0:
            raise ConfigError(f"tau_safe must be in (0, 1), got {self.tau_safe}")
        if not 0.0 < self.success_altitude_m < self.safe_altitude_m:
            raise ConfigError("need 0 < success_altitude_m < safe_altitude_m")
        for frac in self.focus_radii.values():
            if not 0.0 < frac <= 1.0:
                raise ConfigError(f"focus radius fraction out of (0, 1]: {frac}")
        if self.v_max_h <= 0 or self.v_max_z <= 0:
            raise ConfigError("velocity limits must be positive")

    def aim_epsilon_px(self, heat_width: int) -> float:
        return self.aim_epsilon_frac * heat_width


@dataclass(frozen=True)
class LandingTarget:
    u: int                 # column in heatmap pixels
    v: int                 # row in heatmap pixels
    confidence: float      # heatmap value at the pixel
    clearance_px: float    # distance-transform value (safe radius available)


@dataclass(frozen=True)
class VelocityCommand:
    vx: float   # m/s world x (image column axis)
    vy: float   # m/s world y (image row axis)
    vz: float   # m/s, positive = descend

    @staticmethod
    def clamped(vx: float, vy: float, vz: float, cfg: PolicyConfig) -> "VelocityCommand":
        h = math.hypot(vx, vy)
        if h > cfg.v_max_h:
            scale = cfg.v_max_h / h
            vx, vy = vx * scale, vy * scale
        vz = max(-cfg.v_max_z, min(cfg.v_max_z, vz))
        return VelocityCommand(vx=vx, vy=vy, vz=vz)


@dataclass(frozen=True)
class Observation:
    """Everything the policy sees for one control step."""

    target: LandingTarget | None
    altitude_m: float
    t_s: float
    heatmap_center: float
    heat_size: tuple[int, int]            # (width, height) in pixels
    footprint_m: float                    # camera footprint side at this altitude
    pose_xy: tuple[float, float]
    world_bounds: tuple[float, float, float, float]   # xmin, ymin, xmax, ymax


def apply_focus(heatmap: SafetyHeatmap, state: MachineState, cfg: PolicyConfig) -> SafetyHeatmap:
    """Zero pixels outside the state's focus circle (never increases values)."""
    frac = cfg.focus_radii[state.value]
    h, w = heatmap.values.shape
    radius = frac * min(h, w)
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    if radius >= math.hypot(cy + 1, cx + 1):
        return heatmap   # circle covers the full grid
    yy, xx = np.ogrid[:h, :w]
    inside = (yy - cy) ** 2 + (xx - cx) ** 2 <= radius ** 2
    return SafetyHeatmap(values=heatmap.values * inside, prompts=heatmap.prompts)


def select_target(heatmap: SafetyHeatmap, cfg: PolicyConfig,
                  m_per_px: float) -> LandingTarget | None:
    """Deepest point of the thresholded safe region, biased toward center.

    Binarize at tau_safe, distance-transform (image border counts as unsafe),
    require clearance of at least the safety radius, then pick max clearance
    with ties broken by proximity to the image center.
    """
    mask = heatmap.values >= cfg.tau_safe
    if not mask.any():
        return None
    padded = np.pad(mask, 1, mode="constant", constant_values=False)
    dist = ndimage.distance_transform_edt(padded)[1:-1, 1:-1]
    radius_px = cfg.safety_radius_m / m_per_px
    candidates = np.argwhere(dist >= radius_px)
    if candidates.size == 0:
        return None
    h, w = mask.shape
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    clear = dist[candidates[:, 0], candidates[:, 1]]
    center_d2 = (candidates[:, 0] - cy) ** 2 + (candidates[:, 1] - cx) ** 2
    order = np.lexsort((candidates[:, 1], candidates[:, 0], center_d2, -clear))
    row, col = candidates[order[0]]
    return LandingTarget(
        u=int(col), v=int(row),
        confidence=float(heatmap.values[row, col]),
        clearance_px=float(dist[row, col]),
    )


class LandingPolicy:
    """Owns the per-episode controller memory; strictly single-threaded."""

    def __init__(self, cfg: PolicyConfig, seed: int = 0):
        cfg.validate()
        self.cfg = cfg
        self._rng = np.random.default_rng(seed)
        self._aim_frames = 0
        self._wait_started_s: float | None = None
        self._restart_origin: tuple[float, float] | None = None
        self._restart_dir: tuple[float, float] | None = None
        self._waypoints: list[tuple[float, float]] | None = None
        self._waypoint_idx = 0

    # -- guards -------------------------------------------------------------

    def _transition(self, state: MachineState, obs: Observation,
                    events: list[str]) -> MachineState:
        cfg = self.cfg
        if state is MachineState.SEARCHING:
            if obs.target is not None:
                self._aim_frames = 0
                return MachineState.AIMING
            return state

        if state is MachineState.AIMING:
            if obs.target is None:
                self._aim_frames = 0
                return MachineState.SEARCHING
            if self._offset_px(obs) <= cfg.aim_epsilon_px(obs.heat_size[0]):
                self._aim_frames += 1
            else:
                self._aim_frames = 0
            if self._aim_frames >= cfg.aim_hold_frames:
                self._aim_frames = 0
                return MachineState.LANDING
            return state

        if state is MachineState.LANDING:
            if obs.altitude_m <= cfg.success_altitude_m:
                events.append(EVENT_SUCCESS_ALTITUDE)
                return state
            if obs.heatmap_center < cfg.tau_safe:
                self._wait_started_s = obs.t_s
                return MachineState.WAITING
            return state

        if state is MachineState.WAITING:
            if obs.heatmap_center >= cfg.tau_safe:
                self._wait_started_s = None
                return MachineState.LANDING
            started = self._wait_started_s if self._wait_started_s is not None else obs.t_s
            if obs.t_s - started >= cfg.wait_timeout_s:
                self._wait_started_s = None
                events.append(EVENT_WAIT_TIMEOUT)
                return MachineState.CLIMBING
            return state

        if state is MachineState.CLIMBING:
            if obs.altitude_m >= cfg.safe_altitude_m:
                theta = float(self._rng.uniform(0.0, 2.0 * math.pi))
                self._restart_dir = (math.cos(theta), math.sin(theta))
                self._restart_origin = obs.pose_xy
                return MachineState.RESTARTING
            return state

        if state is MachineState.RESTARTING:
            origin = self._restart_origin or obs.pose_xy
            moved = math.hypot(obs.pose_xy[0] - origin[0], obs.pose_xy[1] - origin[1])
            if moved >= obs.footprint_m:
                self._restart_origin = None
                self._restart_dir = None
                return MachineState.SEARCHING
            return state

        raise ContractError(f"unknown state {state}")   # unreachable

    # -- commands -------------------------------------------------------------

    def _offset_px(self, obs: Observation) -> float:
        w, h = obs.heat_size
        return math.hypot(obs.target.u - (w - 1) / 2.0, obs.target.v - (h - 1) / 2.0)

    def _offset_m(self, obs: Observation) -> tuple[float, float]:
        w, h = obs.heat_size
        m_per_px = obs.footprint_m / w
        return ((obs.target.u - (w - 1) / 2.0) * m_per_px,
                (obs.target.v - (h - 1) / 2.0) * m_per_px)

    def _toward_target(self, obs: Observation, speed_cap: float) -> tuple[float, float]:
        dx, dy = self._offset_m(obs)
        dist = math.hypot(dx, dy)
        if dist == 0.0:
            return 0.0, 0.0
        speed = min(speed_cap, self.cfg.horizontal_gain * dist)
        return speed * dx / dist, speed * dy / dist

    def _sweep_waypoints(self, obs: Observation) -> list[tuple[float, float]]:
        """Serpentine rows across the world, spaced half a footprint apart."""
        xmin, ymin, xmax, ymax = obs.world_bounds
        stride = max(1e-6, self.cfg.lawnmower_stride_frac * obs.footprint_m)
        inset = min(obs.footprint_m / 2.0, (xmax - xmin) / 2.0, (ymax - ymin) / 2.0)
        xs = (xmin + inset, xmax - inset)
        ys = np.arange(ymin + inset, ymax - inset + 1e-9, stride)
        if len(ys) == 0:
            ys = np.asarray([(ymin + ymax) / 2.0])
        points = []
        for i, y in enumerate(ys):
            pair = (xs[0], xs[1]) if i % 2 == 0 else (xs[1], xs[0])
            points.append((pair[0], float(y)))
            points.append((pair[1], float(y)))
        return points

    def _sweep_command(self, obs: Observation) -> tuple[float, float]:
        if self._waypoints is None:
            self._waypoints = self._sweep_waypoints(obs)
            # start from the nearest waypoint so sweeps are pose-relative
            d2 = [(p[0] - obs.pose_xy[0]) ** 2 + (p[1] - obs.pose_xy[1]) ** 2
                  for p in self._waypoints]
            self._waypoint_idx = int(np.argmin(d2))
        goal = self._waypoints[self._waypoint_idx]
        dx, dy = goal[0] - obs.pose_xy[0], goal[1] - obs.pose_xy[1]
        dist = math.hypot(dx, dy)
        arrive = max(1.0, 0.25 * self.cfg.lawnmower_stride_frac * obs.footprint_m)
        if dist <= arrive:
            self._waypoint_idx = (self._waypoint_idx + 1) % len(self._waypoints)
            goal = self._waypoints[self._waypoint_idx]
            dx, dy = goal[0] - obs.pose_xy[0], goal[1] - obs.pose_xy[1]
            dist = math.hypot(dx, dy)
        if dist == 0.0:
            return 0.0, 0.0
        return self.cfg.v_max_h * dx / dist, self.cfg.v_max_h * dy / dist

    def _command(self, state: MachineState, obs: Observation,
                 events: list[str]) -> VelocityCommand:
        cfg = self.cfg
        if state is MachineState.SEARCHING:
            vx, vy = self._sweep_command(obs)
            return VelocityCommand.clamped(vx, vy, 0.0, cfg)
        if state is MachineState.AIMING:
            vx, vy = self._toward_target(obs, cfg.v_max_h) if obs.target else (0.0, 0.0)
            return VelocityCommand.clamped(vx, vy, 0.0, cfg)
        if state is MachineState.LANDING:
            if EVENT_SUCCESS_ALTITUDE in events:
                return VelocityCommand(0.0, 0.0, 0.0)
            vx, vy = self._toward_target(obs, cfg.v_max_h) if obs.target else (0.0, 0.0)
            return VelocityCommand.clamped(vx, vy, cfg.v_max_z, cfg)
        if state is MachineState.WAITING:
            return VelocityCommand(0.0, 0.0, 0.0)
        if state is MachineState.CLIMBING:
            return VelocityCommand(0.0, 0.0, -cfg.v_max_z)
        if state is MachineState.RESTARTING:
            dx, dy = self._restart_dir or (1.0, 0.0)
            return VelocityCommand.clamped(cfg.v_max_h * dx, cfg.v_max_h * dy, 0.0, cfg)
        raise ContractError(f"unknown state {state}")   # unreachable

    def step(self, state: MachineState,
             obs: Observation) -> tuple[MachineState, VelocityCommand, list[str]]:
        events: list[str] = []
        new_state = self._transition(state, obs, events)
        if new_state is not state and new_state not in TRANSITIONS[state]:
            raise ContractError(f"illegal transition {state} -> {new_state}")
        if new_state is not state:
            events.append(f"state:{state.value}->{new_state.value}")
        command = self._command(new_state, obs, events)
        return new_state, command, events
