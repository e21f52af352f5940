"""Episode simulation: altitude-scaled camera, UAV kinematics, runners.

The camera is orthographic: a square ground footprint with side
``2 * altitude * tan(fov/2)`` cropped from the world's ortho image around
the UAV and resampled to the backend's working resolution. Image axes map
straight to world axes (column = x, row = y); there is no perspective or
tilt. Episodes run on simulated time at a fixed control rate, decoupled
from the wall clock.
"""
from __future__ import annotations

import hashlib
import json
import math
import os
from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigError, ValidationError
from .fusion import fuse_pipeline
from .imaging import OUTSIDE_ID, Frame
from .policy import (
    LandingPolicy,
    MachineState,
    Observation,
    PolicyConfig,
    apply_focus,
    select_target,
)
from .prompts import PromptConfig, maybe_regenerate
from .vocab import DescriptionVocabulary, TargetLists
from .worlds import World

# Success requires descending to this altitude over safe ground; episodes
# are cut off hard at the protocol timeout.
SUCCESS_REASON = "reached_20m_over_safe"
TIMEOUT_REASON = "timeout"
LEFT_WORLD_REASON = "left_world"
MAX_TIMEOUT_S = 1200.0
MIN_VIEW_ALTITUDE_M = 0.5


@dataclass(frozen=True)
class SimConfig:
    fov_deg: float = 60.0
    camera_resolution: int = 64
    control_rate_hz: float = 2.0
    timeout_s: float = 1200.0
    drift_sigma: float = 0.0          # m/sqrt(s) random-walk position noise
    collapse_mode: str = "sum"

    def validate(self) -> None:
        if not 0.0 < self.fov_deg < 180.0:
            raise ConfigError(f"fov_deg out of range: {self.fov_deg}")
        if self.camera_resolution < 8:
            raise ConfigError("camera_resolution must be >= 8")
        if self.control_rate_hz <= 0:
            raise ConfigError("control_rate_hz must be positive")
        if not 0.0 < self.timeout_s <= MAX_TIMEOUT_S:
            raise ConfigError(f"timeout_s must be in (0, {MAX_TIMEOUT_S}]")


@dataclass(frozen=True)
class UavPose:
    x: float
    y: float
    altitude: float
    t: float = 0.0


@dataclass(frozen=True)
class EpisodeResult:
    success: bool
    reason: str
    horizontal_distance_m: float
    elapsed_s: float
    path: tuple[UavPose, ...]
    prompts_used: tuple[tuple[str, ...], ...]
    final_state: str
    seed: int
    mode: str
    world: str


def footprint_side_m(altitude_m: float, fov_deg: float) -> float:
    return 2.0 * altitude_m * math.tan(math.radians(fov_deg) / 2.0)


def camera_view(world: World, pose: UavPose, fov_deg: float,
                out_resolution: int) -> Frame:
    """Orthographic downward view; off-world area is border-filled and flagged."""
    if pose.altitude <= 0:
        raise ValidationError(f"camera_view needs altitude > 0, got {pose.altitude}")
    side_m = footprint_side_m(pose.altitude, fov_deg)
    half_px = side_m / world.meters_per_pixel / 2.0
    cx = pose.x / world.meters_per_pixel
    cy = pose.y / world.meters_per_pixel

    # sample positions of the output grid in source-pixel coordinates
    frac = (np.arange(out_resolution) + 0.5) / out_resolution
    xs = np.floor(cx - half_px + frac * 2.0 * half_px).astype(np.intp)
    ys = np.floor(cy - half_px + frac * 2.0 * half_px).astype(np.intp)
    h, w = world.labels.shape
    in_x = (xs >= 0) & (xs < w)
    in_y = (ys >= 0) & (ys < h)
    inside = in_y[:, None] & in_x[None, :]

    xs_c = np.clip(xs, 0, w - 1)
    ys_c = np.clip(ys, 0, h - 1)
    rgb = world.ortho[ys_c][:, xs_c].copy()
    labels = world.labels[ys_c][:, xs_c].copy()
    rgb[~inside] = 0
    labels[~inside] = OUTSIDE_ID

    tags = dict(world.tags)
    visible = labels[inside]
    if visible.size:
        ids, counts = np.unique(visible, return_counts=True)
        majority = int(ids[np.argmax(counts)])
        if majority in world.classes:
            tags["class_majority"] = world.classes[majority].word

    key = f"{world.name}|{pose.x:.4f}|{pose.y:.4f}|{pose.altitude:.4f}|{out_resolution}"
    return Frame(
        rgb=rgb, labels=labels, tags=tags,
        class_words=world.class_words(), key=key,
        oob_fraction=float(1.0 - inside.mean()),
    )


def kinematics_step(pose: UavPose, cmd, dt_s: float,
                    bounds: tuple[float, float, float, float] | None = None,
                    drift: tuple[float, float] = (0.0, 0.0)) -> UavPose:
    """Euler integration; positive vz descends; altitude floors at zero."""
    if dt_s <= 0:
        raise ValidationError(f"dt_s must be positive, got {dt_s}")
    x = pose.x + cmd.vx * dt_s + drift[0]
    y = pose.y + cmd.vy * dt_s + drift[1]
    altitude = max(0.0, pose.altitude - cmd.vz * dt_s)
    if bounds is not None:
        xmin, ymin, xmax, ymax = bounds
        x = min(max(x, xmin), xmax)
        y = min(max(y, ymin), ymax)
    return UavPose(x=x, y=y, altitude=altitude, t=pose.t + dt_s)


def _episode_rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(seed)


def run_episode(
    world: World,
    backend,
    vocab: DescriptionVocabulary,
    targets: TargetLists,
    prompt_cfg: PromptConfig,
    policy_cfg: PolicyConfig,
    sim_cfg: SimConfig,
    seed: int,
    start_xy: tuple[float, float] | None = None,
    event_sink=None,
    trace_sink=None,
) -> EpisodeResult:
    """Run the full perceive-decide-move loop until success, timeout, or exit.

    Success requires BOTH conditions: altitude at or below the success
    altitude AND the ground-truth label directly under the UAV flagged safe.
    Reaching the success altitude over unsafe ground does not terminate; the
    controller keeps flying (and may recover) until the timeout.
    """
    prompt_cfg.validate()
    policy_cfg.validate()
    sim_cfg.validate()

    x0, y0 = start_xy if start_xy is not None else (world.width_m / 2, world.height_m / 2)
    pose = UavPose(x=x0, y=y0, altitude=policy_cfg.safe_altitude_m, t=0.0)
    policy = LandingPolicy(policy_cfg, seed=seed)
    drift_rng = _episode_rng(seed ^ 0x5EED) if sim_cfg.drift_sigma > 0 else None
    dt = 1.0 / sim_cfg.control_rate_hz

    state = MachineState.SEARCHING
    cache = None
    state_changed = False
    prompts_used: list[tuple[str, ...]] = []
    path = [pose]
    left_world = False

    if trace_sink is not None:
        trace_sink.write("t,x,y,altitude,state,heatmap_center\n")

    frame_index = 0
    while True:
        if pose.altitude <= policy_cfg.success_altitude_m and world.safe_at(pose.x, pose.y):
            success, reason = True, SUCCESS_REASON
            break
        if left_world:
            success, reason = False, LEFT_WORLD_REASON
            break
        if pose.t >= sim_cfg.timeout_s:
            success, reason = False, TIMEOUT_REASON
            break

        view_pose = pose if pose.altitude >= MIN_VIEW_ALTITUDE_M else \
            UavPose(pose.x, pose.y, MIN_VIEW_ALTITUDE_M, pose.t)
        frame = camera_view(world, view_pose, sim_cfg.fov_deg, sim_cfg.camera_resolution)
        cache, regenerated = maybe_regenerate(
            cache, frame, targets, vocab, backend, frame_index, prompt_cfg,
            state_changed=state_changed)
        if regenerated:
            prompts_used.append(tuple(cache.texts()))

        heatmap = fuse_pipeline(frame, cache, backend, sim_cfg.collapse_mode)
        focused = apply_focus(heatmap, state, policy_cfg)
        footprint = footprint_side_m(view_pose.altitude, sim_cfg.fov_deg)
        m_per_px = footprint / focused.values.shape[1]
        target = select_target(focused, policy_cfg, m_per_px)

        obs = Observation(
            target=target,
            altitude_m=pose.altitude,
            t_s=pose.t,
            heatmap_center=focused.center_value,
            heat_size=(focused.values.shape[1], focused.values.shape[0]),
            footprint_m=footprint,
            pose_xy=(pose.x, pose.y),
            world_bounds=world.bounds,
        )
        new_state, cmd, events = policy.step(state, obs)
        state_changed = new_state is not state

        if event_sink is not None:
            event_sink.write(json.dumps({
                "t": round(pose.t, 6),
                "state": new_state.value,
                "pose": [pose.x, pose.y, pose.altitude],
                "command": [cmd.vx, cmd.vy, cmd.vz],
                "target": None if target is None else [target.u, target.v,
                                                       round(target.confidence, 6)],
                "heatmap_center": round(obs.heatmap_center, 6),
                "events": events,
            }, sort_keys=True) + "\n")
        if trace_sink is not None:
            trace_sink.write(
                f"{pose.t:.3f},{pose.x:.4f},{pose.y:.4f},{pose.altitude:.4f},"
                f"{new_state.value},{obs.heatmap_center:.6f}\n")

        drift = (0.0, 0.0)
        if drift_rng is not None:
            step_noise = drift_rng.normal(0.0, sim_cfg.drift_sigma * math.sqrt(dt), 2)
            drift = (float(step_noise[0]), float(step_noise[1]))
        raw = kinematics_step(pose, cmd, dt, bounds=None, drift=drift)
        margin = footprint / 2.0
        xmin, ymin, xmax, ymax = world.bounds
        left_world = (raw.x < xmin - margin or raw.x > xmax + margin or
                      raw.y < ymin - margin or raw.y > ymax + margin)
        pose = kinematics_step(pose, cmd, dt, bounds=world.bounds, drift=drift)
        path.append(pose)
        state = new_state
        frame_index += 1

    deltas = [math.hypot(b.x - a.x, b.y - a.y) for a, b in zip(path, path[1:])]
    return EpisodeResult(
        success=success,
        reason=reason,
        horizontal_distance_m=float(sum(deltas)),
        elapsed_s=min(pose.t, MAX_TIMEOUT_S),
        path=tuple(path),
        prompts_used=tuple(prompts_used),
        final_state=state.value,
        seed=seed,
        mode=prompt_cfg.mode,
        world=world.name,
    )


# -- paired experiment matrix ---------------------------------------------------

@dataclass(frozen=True)
class ModeAggregate:
    mode: str
    episodes: int
    successes: int
    mean_distance_m: float
    mean_time_s: float


@dataclass(frozen=True)
class MatrixResult:
    episodes: tuple[EpisodeResult, ...]
    aggregates: dict[str, ModeAggregate]
    seed: int
    n_starts: int
    starts: tuple[tuple[float, float], ...] = ()


def _stable_seed(*parts) -> int:
    digest = hashlib.blake2b("|".join(str(p) for p in parts).encode(),
                             digest_size=4).digest()
    return int.from_bytes(digest, "little")


def sample_starts(world: World, n_starts: int, seed: int) -> list[tuple[float, float]]:
    """Start positions in the world's central half, identical across modes."""
    rng = np.random.default_rng(_stable_seed("starts", seed, world.name))
    xs = rng.uniform(0.25 * world.width_m, 0.75 * world.width_m, n_starts)
    ys = rng.uniform(0.25 * world.height_m, 0.75 * world.height_m, n_starts)
    return [(float(x), float(y)) for x, y in zip(xs, ys)]


def run_matrix(
    worlds: list[World],
    modes: list[str],
    n_starts: int,
    seed: int,
    backend,
    vocab: DescriptionVocabulary,
    targets: TargetLists,
    prompt_cfg: PromptConfig,
    policy_cfg: PolicyConfig,
    sim_cfg: SimConfig,
    episode_hook=None,
    trace_dir=None,
) -> MatrixResult:
    """Paired design: every mode flies the same worlds, starts, and seeds.

    With ``trace_dir`` set, each episode's trace CSV and event log are
    written there atomically (temp file + rename) as it completes.
    """
    if n_starts < 1:
        raise ValidationError("n_starts must be >= 1")
    if trace_dir is not None:
        os.makedirs(trace_dir, exist_ok=True)
    episodes: list[EpisodeResult] = []
    all_starts: list[tuple[float, float]] = []
    for world in worlds:
        starts = sample_starts(world, n_starts, seed)
        all_starts.extend(starts)
        for start_idx, start in enumerate(starts):
            ep_seed = _stable_seed("episode", seed, world.name, start_idx)
            for mode in modes:
                if trace_dir is None:
                    result = run_episode(
                        world, backend, vocab, targets,
                        replace(prompt_cfg, mode=mode), policy_cfg, sim_cfg,
                        seed=ep_seed, start_xy=start)
                else:
                    stem = os.path.join(trace_dir, f"{world.name}__{mode}__{start_idx:03d}")
                    with open(stem + "_trace.csv.tmp", "w", encoding="utf-8") as trace, \
                            open(stem + "_events.jsonl.tmp", "w", encoding="utf-8") as events:
                        result = run_episode(
                            world, backend, vocab, targets,
                            replace(prompt_cfg, mode=mode), policy_cfg, sim_cfg,
                            seed=ep_seed, start_xy=start,
                            event_sink=events, trace_sink=trace)
                    os.replace(stem + "_trace.csv.tmp", stem + "_trace.csv")
                    os.replace(stem + "_events.jsonl.tmp", stem + "_events.jsonl")
                episodes.append(result)
                if episode_hook is not None:
                    episode_hook(result)

    aggregates = {}
    for mode in modes:
        rows = [e for e in episodes if e.mode == mode]
        aggregates[mode] = ModeAggregate(
            mode=mode,
            episodes=len(rows),
            successes=sum(e.success for e in rows),
            mean_distance_m=float(np.mean([e.horizontal_distance_m for e in rows])),
            mean_time_s=float(np.mean([e.elapsed_s for e in rows])),
        )
    return MatrixResult(
        episodes=tuple(episodes), aggregates=aggregates,
        seed=seed, n_starts=n_starts, starts=tuple(all_starts),
    )
