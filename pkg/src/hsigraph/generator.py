"""Procedural motion synthesis for action units, with a drift/extra-action noise model.

Units are executed relative to the planner's expected start pose: the
displacement and turn the plan describes are re-expressed in the actual
start frame, the way a clip generator conditioned on a first frame and a
relative instruction would behave.  With zero noise and a start state
matching the plan, endpoints land exactly on the planned targets.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numpy as np

from .actions import FPS, MAX_UNIT_FRAMES, ActionUnit, Verb
from .kinematics import (NUM_JOINT_ANGLES, HumanState, MotionClip, fk_batch, points_from_fk, set_joint,
                         wrap_angle)
from .rng import KeyedStream

STRIDE = 1.2           # meters per full gait cycle
HIP_SWING = 0.35
KNEE_LIFT = 0.6
SIT_BACK = 0.25
EXTRA_LENGTHS = np.arange(15, 46, 5)

_S_YAW, _S_TX, _S_TY, _S_EXTRA = 1, 2, 3, 4


class GeneratorError(RuntimeError):
    pass


@dataclass(frozen=True)
class NoiseModel:
    trans_sigma: float = 0.0     # m / sqrt(s)
    yaw_sigma: float = 0.0       # rad / sqrt(s)
    p_extra: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.trans_sigma < 0 or self.yaw_sigma < 0:
            raise ValueError("noise sigmas must be non-negative")
        if not 0.0 <= self.p_extra <= 1.0:
            raise ValueError("p_extra must lie in [0, 1]")


@dataclass(frozen=True)
class GeneratorConfig:
    fps: int = FPS
    walk_speed: float = 1.0
    turn_rate: float = math.pi / 2
    step_clearance: float = 0.4
    sit_depth: float = 0.40
    climb_speed: float = 0.5

    def __post_init__(self):
        for name in ("fps", "walk_speed", "turn_rate", "step_clearance", "sit_depth", "climb_speed"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


def _smooth(x):
    x = np.clip(x, 0.0, 1.0)
    return x * x * (3.0 - 2.0 * x)


def _rot2(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, -s], [s, c]])


def _gait(dist: np.ndarray, envelope: np.ndarray, amp: float = 1.0) -> np.ndarray:
    """Leg-swing joint offsets (F, 63) for a walk that has covered ``dist`` meters."""
    phase = 2.0 * np.pi * dist / STRIDE
    s = np.sin(phase) * envelope * amp
    out = np.zeros((len(dist), NUM_JOINT_ANGLES))
    # negative pitch about +y swings the leg forward
    set_joint(out, "l_hip", np.stack([0 * s, -HIP_SWING * s, 0 * s], axis=1))
    set_joint(out, "r_hip", np.stack([0 * s, HIP_SWING * s, 0 * s], axis=1))
    set_joint(out, "l_knee", np.stack([0 * s, KNEE_LIFT * np.maximum(s, 0), 0 * s], axis=1))
    set_joint(out, "r_knee", np.stack([0 * s, KNEE_LIFT * np.maximum(-s, 0), 0 * s], axis=1))
    set_joint(out, "l_shoulder", np.stack([0 * s, 0.3 * s, 0 * s], axis=1))
    set_joint(out, "r_shoulder", np.stack([0 * s, -0.3 * s, 0 * s], axis=1))
    return out


def _envelope(n: int, ramp: int = 8) -> np.ndarray:
    k = np.arange(n + 1, dtype=np.float64)
    return np.minimum(1.0, np.minimum(k / ramp, (n - k) / ramp))


def sit_pose() -> np.ndarray:
    a = np.zeros(NUM_JOINT_ANGLES)
    for side in ("l", "r"):
        set_joint(a, f"{side}_hip", [0.0, -math.pi / 2, 0.0])
        set_joint(a, f"{side}_knee", [0.0, math.pi / 2, 0.0])
    return a


def tuck_pose() -> np.ndarray:
    a = np.zeros(NUM_JOINT_ANGLES)
    for side in ("l", "r"):
        set_joint(a, f"{side}_hip", [0.0, -1.1, 0.0])
        set_joint(a, f"{side}_knee", [0.0, 2.0, 0.0])
    return a


def _climb_pose(phase: np.ndarray) -> np.ndarray:
    s = np.sin(phase)
    out = np.zeros((len(phase), NUM_JOINT_ANGLES))
    set_joint(out, "l_hip", np.stack([0 * s, -0.6 * np.maximum(s, 0), 0 * s], axis=1))
    set_joint(out, "r_hip", np.stack([0 * s, -0.6 * np.maximum(-s, 0), 0 * s], axis=1))
    set_joint(out, "l_knee", np.stack([0 * s, 1.0 * np.maximum(s, 0), 0 * s], axis=1))
    set_joint(out, "r_knee", np.stack([0 * s, 1.0 * np.maximum(-s, 0), 0 * s], axis=1))
    set_joint(out, "l_shoulder", np.stack([0 * s, -2.6 + 0.4 * s, 0 * s], axis=1))
    set_joint(out, "r_shoulder", np.stack([0 * s, -2.6 - 0.4 * s, 0 * s], axis=1))
    return out


def _idle_gesture(n: int) -> np.ndarray:
    """Both arms rise overhead and come back down (a stretch/yawn)."""
    k = np.arange(1, n + 1, dtype=np.float64)
    lift = np.sin(np.pi * k / n) ** 2
    out = np.zeros((n, NUM_JOINT_ANGLES))
    set_joint(out, "l_shoulder", np.stack([-0.4 * lift, -2.4 * lift, 0 * lift], axis=1))
    set_joint(out, "r_shoulder", np.stack([0.4 * lift, -2.4 * lift, 0 * lift], axis=1))
    set_joint(out, "head", np.stack([0 * lift, -0.3 * lift, 0 * lift], axis=1))
    return out


def relative_target(unit: ActionUnit, state: HumanState):
    """Map the unit's planned target pose into the actual start frame."""
    delta = float(wrap_angle(state.root_yaw - unit.start_yaw))
    R = _rot2(delta)
    tgt = unit.end_position
    xy = state.root_translation[:2] + R @ (tgt[:2] - unit.start_position[:2])
    z = state.root_translation[2] + (tgt[2] - unit.start_position[2])
    yaw_change = float(wrap_angle(unit.end_yaw - unit.start_yaw))
    return np.array([xy[0], xy[1], z]), yaw_change, delta


@functools.lru_cache(maxsize=None)
def _tuck_low() -> float:
    """Height of the lowest body point below the pelvis in the tucked pose."""
    pos, rot = fk_batch(np.zeros(3), 0.0, tuck_pose())
    return float(points_from_fk(pos, rot, 1.0)[0, :, 2].min())


def _obstacle_geometry(scene, tag: str):
    if scene is None or tag not in scene.objects:
        raise GeneratorError(f"step_over target '{tag}' is not in the scene")
    lo, hi = scene.object_bounds(tag)
    return lo, hi


def _nominal(state: HumanState, unit: ActionUnit, scene, config: GeneratorConfig):
    """Noise-free root xy, z, yaw, joint angles (each with n+1 rows) plus the heading path."""
    n = int(unit.duration)
    k = np.arange(n + 1, dtype=np.float64)
    frac = k / n
    p0 = state.root_translation.copy()
    y0 = state.root_yaw
    a0 = state.joint_angles
    target, yaw_change, _ = relative_target(unit, state)
    verb = unit.verb
    z = np.full(n + 1, p0[2])
    angles = np.repeat(a0[None, :], n + 1, axis=0)
    env = _envelope(n)

    if verb in (Verb.WALK_TO, Verb.STEP_OVER):
        disp = target[:2] - p0[:2]
        D = float(np.hypot(*disp))
        phi = math.atan2(disp[1], disp[0]) if D > 0 else y0
        turn = float(wrap_angle(phi - y0))
        heading = np.full(n + 1, phi)
        yaw = y0 + turn * frac
        step = np.full(n + 1, D / n)
        step[0] = 0.0
        dist = D * frac
        angles = angles + _gait(dist, env)
        if verb is Verb.STEP_OVER:
            lo, hi = _obstacle_geometry(scene, unit.obstacle)
            centre = (lo[:2] + hi[:2]) / 2.0
            r = 0.5 * float(np.hypot(*(hi[:2] - lo[:2])))
            u = disp / D if D > 0 else np.array([1.0, 0.0])
            sc = float((centre - p0[:2]) @ u)
            a, b = sc - r - 0.45, sc + r + 0.45
            ramp = 0.35
            w = _smooth((dist - (a - ramp)) / ramp) * _smooth(((b + ramp) - dist) / ramp)
            # land by the end of the unit even when the obstacle sits near either end
            if D > 0:
                w = w * _smooth(dist / ramp) * _smooth((D - dist) / ramp)
            need = hi[2] + config.step_clearance - (p0[2] + _tuck_low())
            z = p0[2] + max(0.0, need) * w
            angles = (1 - w[:, None]) * angles + w[:, None] * (a0[None, :] + tuck_pose()[None, :])
        return step, heading, yaw, z, angles

    if verb is Verb.TURN_TO:
        yaw = y0 + yaw_change * frac
        step = np.zeros(n + 1)
        heading = yaw.copy()
        angles = angles + _gait(0.25 * np.abs(yaw_change) * frac, env, amp=0.4)
        return step, heading, yaw, z, angles

    if verb in (Verb.SIT, Verb.STAND, Verb.REACH, Verb.IDLE):
        s = _smooth(frac)
        disp = target[:2] - p0[:2]
        D = float(np.hypot(*disp))
        heading = np.full(n + 1, math.atan2(disp[1], disp[0]) if D > 0 else y0)
        pos_s = D * s
        step = np.diff(pos_s, prepend=0.0)
        yaw = y0 + yaw_change * s
        z = p0[2] + (target[2] - p0[2]) * s
        if verb is Verb.SIT:
            angles = (1 - s[:, None]) * a0[None, :] + s[:, None] * sit_pose()[None, :]
        elif verb is Verb.STAND:
            angles = (1 - s[:, None]) * a0[None, :]
        elif verb is Verb.REACH:
            lift = np.sin(np.pi * frac)
            extra = np.zeros((n + 1, NUM_JOINT_ANGLES))
            set_joint(extra, "r_shoulder", np.stack([0 * lift, -1.4 * lift, 0 * lift], axis=1))
            set_joint(extra, "r_elbow", np.stack([0 * lift, -0.3 * lift, 0 * lift], axis=1))
            angles = angles + extra
        else:
            g = np.vstack([np.zeros((1, NUM_JOINT_ANGLES)), _idle_gesture(n)])
            angles = angles + g
        return step, heading, yaw, z, angles

    if verb is Verb.CLIMB_SEGMENT:
        disp = target[:2] - p0[:2]
        D = float(np.hypot(*disp))
        # vertical first, then the horizontal move at the top
        rise = _smooth(np.minimum(frac / 0.7, 1.0))
        over = _smooth(np.maximum(frac - 0.7, 0.0) / 0.3)
        z = p0[2] + (target[2] - p0[2]) * rise
        heading = np.full(n + 1, math.atan2(disp[1], disp[0]) if D > 0 else y0)
        step = np.diff(D * over, prepend=0.0)
        yaw = y0 + yaw_change * frac
        phase = 2.0 * np.pi * 2.0 * frac
        env_c = np.minimum(1.0, np.minimum(k / 6, (n - k) / 6))
        angles = a0[None, :] + env_c[:, None] * _climb_pose(phase)
        return step, heading, yaw, z, angles

    raise GeneratorError(f"verb '{verb.value}' cannot be synthesized procedurally; use a remote generator")


def execute_action(state: HumanState, unit: ActionUnit, scene=None, noise: NoiseModel = NoiseModel(),
                   config: GeneratorConfig = GeneratorConfig(), *, key=(0,), source_node: int = -1) -> MotionClip:
    """Synthesize the clip realizing ``unit`` from ``state``.

    Random draws come from ``KeyedStream(noise.seed, *key)`` indexed by
    frame, so identical keys give bit-identical clips.
    """
    if unit.duration > MAX_UNIT_FRAMES:
        raise GeneratorError(f"unit lasts {unit.duration} frames, limit is {MAX_UNIT_FRAMES}")
    state.validate()
    n = int(unit.duration)
    step, heading, yaw, z, angles = _nominal(state, unit, scene, config)

    stream = KeyedStream(noise.seed, *key)
    dt = 1.0 / config.fps
    extra = 0
    if noise.p_extra > 0 and stream.child(_S_EXTRA).uniform(1)[0] < noise.p_extra:
        extra = int(EXTRA_LENGTHS[stream.child(_S_EXTRA).integers(0, len(EXTRA_LENGTHS), 1, offset=1)[0]])
    total = n + extra

    yaw_walk = np.zeros(total + 1)
    if noise.yaw_sigma > 0:
        inc = noise.yaw_sigma * math.sqrt(dt) * stream.child(_S_YAW).normal(total)
        yaw_walk[1:] = np.cumsum(inc)
    trans = np.zeros((total + 1, 2))
    if noise.trans_sigma > 0:
        s = noise.trans_sigma * math.sqrt(dt)
        trans[1:, 0] = np.cumsum(s * stream.child(_S_TX).normal(total))
        trans[1:, 1] = np.cumsum(s * stream.child(_S_TY).normal(total))

    e = yaw_walk[:n + 1]
    th = heading + e
    inc_xy = np.stack([step * np.cos(th), step * np.sin(th)], axis=1)
    xy = state.root_translation[:2] + np.cumsum(inc_xy, axis=0) + trans[:n + 1]
    root = np.column_stack([xy, z])
    yaws = yaw + e
    if extra:
        hold_xy = xy[-1] - trans[n]
        ex_xy = hold_xy + trans[n + 1:]
        ex_root = np.column_stack([ex_xy, np.full(extra, z[-1])])
        root = np.vstack([root, ex_root])
        yaws = np.concatenate([yaws, yaw[-1] + yaw_walk[n + 1:]])
        angles = np.vstack([angles, angles[-1][None, :] + _idle_gesture(extra)])
    # frame 0 is the source state, bit for bit
    root[0] = state.root_translation
    yaws[0] = state.root_yaw
    angles[0] = state.joint_angles
    return MotionClip(root, yaws, angles, state.shape.copy(), fps=config.fps,
                      action=unit.description or unit.verb.value, seed=noise.seed,
                      source_node=source_node, nominal_frames=n, extra_frames=extra)


def straight_walk_unit(state: HumanState, target, config: GeneratorConfig = GeneratorConfig()) -> tuple:
    """Fallback for free-text actions: head straight for ``target`` for at most one unit.

    Returns ``(unit, complete)``; ``complete`` is False when the target lies
    beyond what one unit can cover.
    """
    from .actions import frames_for
    p0 = state.root_translation
    disp = np.asarray(target, dtype=np.float64)[:2] - p0[:2]
    D = float(np.hypot(*disp))
    reach = config.walk_speed * MAX_UNIT_FRAMES / config.fps
    complete = D <= reach
    if not complete:
        disp = disp * (reach / D)
        D = reach
    tgt = np.array([p0[0] + disp[0], p0[1] + disp[1], p0[2]])
    yaw = math.atan2(disp[1], disp[0]) if D > 0 else state.root_yaw
    n = min(MAX_UNIT_FRAMES, frames_for(max(D, 1e-3) / config.walk_speed, config.fps))
    unit = ActionUnit(Verb.WALK_TO, n, p0, state.root_yaw, tgt, target_yaw=yaw,
                      description="straight-line fallback")
    return unit, complete


def drift_statistics(noise: NoiseModel, n: int, unit: ActionUnit, state: HumanState | None = None,
                     config: GeneratorConfig = GeneratorConfig()):
    """Mean and per-axis standard deviation of the endpoint translation error over ``n`` seeded runs.

    The nominal (pre-extra) endpoint is compared with the zero-noise
    endpoint; the std pools x and y deviations.
    """
    if n < 30:
        raise ValueError("drift statistics need n >= 30")
    if state is None:
        state = HumanState(unit.start_position, unit.start_yaw)
    ref = execute_action(state, unit, None, NoiseModel(seed=noise.seed), config)
    end = ref.root[-1, :2]
    errs = np.empty((n, 2))
    for i in range(n):
        clip = execute_action(state, unit, None, noise, config, key=(i,))
        errs[i] = clip.root[clip.nominal_frames, :2] - end
    mags = np.hypot(errs[:, 0], errs[:, 1])
    return float(mags.mean()), float(np.sqrt(np.mean(errs ** 2)))
