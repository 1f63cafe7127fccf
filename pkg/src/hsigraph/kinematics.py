"""Human state, a fixed 22-joint skeleton and forward kinematics.

World frame is z-up; at yaw 0 the body faces +x and its left side is +y.
Joint rotations are intrinsic XYZ Euler triplets, ``R = Rx(a) @ Ry(b) @ Rz(c)``.
Joint ``j``'s rotation turns every bone that leaves ``j``; the bone that
ends at ``j`` is expressed in its parent's frame.  The root carries only
yaw about +z.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

JOINT_NAMES = (
    "pelvis", "spine1", "spine2", "spine3", "neck", "head",
    "l_clavicle", "l_shoulder", "l_elbow", "l_wrist",
    "r_clavicle", "r_shoulder", "r_elbow", "r_wrist",
    "l_hip", "l_knee", "l_ankle", "l_toe",
    "r_hip", "r_knee", "r_ankle", "r_toe",
)
NUM_JOINTS = len(JOINT_NAMES)
NUM_JOINT_ANGLES = 3 * (NUM_JOINTS - 1)
NUM_SHAPE = 10
JOINT = {name: i for i, name in enumerate(JOINT_NAMES)}

_PARENTS = (-1, 0, 1, 2, 3, 4, 3, 6, 7, 8, 3, 10, 11, 12, 0, 14, 15, 16, 0, 18, 19, 20)
_OFFSETS = (
    (0.0, 0.0, 0.0),
    (0.0, 0.0, 0.10), (0.0, 0.0, 0.12), (0.0, 0.0, 0.12), (0.0, 0.0, 0.18), (0.0, 0.0, 0.12),
    (0.0, 0.07, 0.12), (0.0, 0.12, 0.0), (0.0, 0.0, -0.28), (0.0, 0.0, -0.25),
    (0.0, -0.07, 0.12), (0.0, -0.12, 0.0), (0.0, 0.0, -0.28), (0.0, 0.0, -0.25),
    (0.0, 0.09, -0.06), (0.0, 0.0, -0.40), (0.0, 0.0, -0.40), (0.14, 0.0, -0.02),
    (0.0, -0.09, -0.06), (0.0, 0.0, -0.40), (0.0, 0.0, -0.40), (0.14, 0.0, -0.02),
)
# pelvis height that puts both ankles at 0.04 m in the rest pose
STAND_HEIGHT = 0.90


class InvalidStateError(ValueError):
    pass


class InvalidDeltaError(ValueError):
    pass


def wrap_angle(a):
    """Wrap radians into (-pi, pi]."""
    return np.pi - np.mod(np.pi - np.asarray(a, dtype=np.float64), 2.0 * np.pi)


@dataclass(eq=False)
class HumanState:
    root_translation: np.ndarray
    root_yaw: float = 0.0
    joint_angles: np.ndarray = field(default_factory=lambda: np.zeros(NUM_JOINT_ANGLES))
    shape: np.ndarray = field(default_factory=lambda: np.zeros(NUM_SHAPE))

    def __post_init__(self):
        self.root_translation = np.asarray(self.root_translation, dtype=np.float64).reshape(3)
        self.joint_angles = np.asarray(self.joint_angles, dtype=np.float64).reshape(-1)
        self.shape = np.asarray(self.shape, dtype=np.float64).reshape(-1)
        self.root_yaw = float(wrap_angle(self.root_yaw))
        self.validate()

    def validate(self) -> None:
        if self.joint_angles.size != NUM_JOINT_ANGLES:
            raise InvalidStateError(
                f"joint_angles has {self.joint_angles.size} entries, expected {NUM_JOINT_ANGLES}"
            )
        if self.shape.size == 0:
            raise InvalidStateError("shape vector is empty")
        for name in ("root_translation", "joint_angles", "shape"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise InvalidStateError(f"{name} contains non-finite values")
        if not np.isfinite(self.root_yaw):
            raise InvalidStateError("root_yaw is not finite")

    @classmethod
    def standing(cls, x: float = 0.0, y: float = 0.0, yaw: float = 0.0, ground: float = 0.0):
        return cls(np.array([x, y, ground + STAND_HEIGHT]), yaw)

    def __eq__(self, other):
        if not isinstance(other, HumanState):
            return NotImplemented
        return (
            np.array_equal(self.root_translation, other.root_translation)
            and self.root_yaw == other.root_yaw
            and np.array_equal(self.joint_angles, other.joint_angles)
            and np.array_equal(self.shape, other.shape)
        )

    def copy(self) -> "HumanState":
        return HumanState(self.root_translation.copy(), self.root_yaw,
                          self.joint_angles.copy(), self.shape.copy())

    @property
    def position_2d(self) -> np.ndarray:
        return self.root_translation[:2].copy()


@dataclass(eq=False)
class StateDelta:
    translation: np.ndarray
    yaw: float = 0.0
    joint_angles: np.ndarray = field(default_factory=lambda: np.zeros(NUM_JOINT_ANGLES))

    def __post_init__(self):
        self.translation = np.asarray(self.translation, dtype=np.float64).reshape(3)
        self.joint_angles = np.asarray(self.joint_angles, dtype=np.float64).reshape(-1)
        self.yaw = float(self.yaw)

    def __add__(self, other: "StateDelta") -> "StateDelta":
        return StateDelta(self.translation + other.translation, self.yaw + other.yaw,
                          self.joint_angles + other.joint_angles)


def apply_delta(state: HumanState, delta: StateDelta) -> HumanState:
    if delta.joint_angles.size != state.joint_angles.size:
        raise InvalidDeltaError("joint-angle delta has the wrong length")
    if not (np.all(np.isfinite(delta.translation)) and np.isfinite(delta.yaw)
            and np.all(np.isfinite(delta.joint_angles))):
        raise InvalidDeltaError("delta contains non-finite values")
    return HumanState(state.root_translation + delta.translation,
                      state.root_yaw + delta.yaw,
                      state.joint_angles + delta.joint_angles,
                      state.shape.copy())


@dataclass(frozen=True)
class Skeleton:
    parents: tuple
    offsets: np.ndarray            # (J, 3)
    sample_offsets: np.ndarray     # (J, S, 3); row 0 unused (root has no incoming bone)

    @property
    def num_joints(self) -> int:
        return len(self.parents)

    @property
    def num_points(self) -> int:
        return (self.num_joints - 1) * self.sample_offsets.shape[1]

    def scale(self, shape: np.ndarray) -> float:
        return 1.0 + 0.05 * float(shape[0])


def _perpendicular(v: np.ndarray) -> np.ndarray:
    axis = np.array([1.0, 0.0, 0.0]) if abs(v[0]) < 0.9 * np.linalg.norm(v) else np.array([0.0, 0.0, 1.0])
    n = np.cross(v, axis)
    return n / np.linalg.norm(n)


def default_skeleton(samples_per_bone: int = 8, radius: float = 0.04) -> Skeleton:
    """The canonical humanoid.

    Each bone gets ``samples_per_bone`` surface points: half as many
    fractions along the bone, each offset by +-``radius`` along a fixed
    perpendicular.
    """
    if samples_per_bone % 2:
        raise ValueError("samples_per_bone must be even")
    offsets = np.array(_OFFSETS, dtype=np.float64)
    k = samples_per_bone // 2
    fracs = (np.arange(k) + 0.5) / k
    samples = np.zeros((NUM_JOINTS, samples_per_bone, 3))
    for j in range(1, NUM_JOINTS):
        n = _perpendicular(offsets[j])
        along = fracs[:, None] * offsets[j][None, :]
        samples[j, 0::2] = along + radius * n
        samples[j, 1::2] = along - radius * n
    return Skeleton(_PARENTS, offsets, samples)


SKELETON = default_skeleton()


def _euler_xyz(angles: np.ndarray) -> np.ndarray:
    """Batched intrinsic XYZ rotation matrices; ``angles`` has shape (..., 3)."""
    a, b, c = angles[..., 0], angles[..., 1], angles[..., 2]
    ca, sa, cb, sb, cc, sc = np.cos(a), np.sin(a), np.cos(b), np.sin(b), np.cos(c), np.sin(c)
    R = np.empty(angles.shape[:-1] + (3, 3))
    R[..., 0, 0] = cb * cc
    R[..., 0, 1] = -cb * sc
    R[..., 0, 2] = sb
    R[..., 1, 0] = sa * sb * cc + ca * sc
    R[..., 1, 1] = -sa * sb * sc + ca * cc
    R[..., 1, 2] = -sa * cb
    R[..., 2, 0] = -ca * sb * cc + sa * sc
    R[..., 2, 1] = ca * sb * sc + sa * cc
    R[..., 2, 2] = ca * cb
    return R


def _yaw_matrix(yaw: np.ndarray) -> np.ndarray:
    c, s = np.cos(yaw), np.sin(yaw)
    R = np.zeros(np.shape(yaw) + (3, 3))
    R[..., 0, 0] = c
    R[..., 0, 1] = -s
    R[..., 1, 0] = s
    R[..., 1, 1] = c
    R[..., 2, 2] = 1.0
    return R


def _check(skeleton: Skeleton, joint_angles: np.ndarray) -> None:
    if joint_angles.shape[-1] != 3 * (skeleton.num_joints - 1):
        raise InvalidStateError("state joint_angles do not match the skeleton")


def fk_batch(root: np.ndarray, yaw: np.ndarray, joint_angles: np.ndarray,
             scale: np.ndarray | float = 1.0, skeleton: Skeleton = SKELETON):
    """Forward kinematics over F frames.

    Returns ``(positions (F, J, 3), rotations (F, J, 3, 3))``.
    """
    root = np.asarray(root, dtype=np.float64).reshape(-1, 3)
    yaw = np.asarray(yaw, dtype=np.float64).reshape(-1)
    joint_angles = np.asarray(joint_angles, dtype=np.float64).reshape(root.shape[0], -1)
    _check(skeleton, joint_angles)
    F, J = root.shape[0], skeleton.num_joints
    scale = np.broadcast_to(np.asarray(scale, dtype=np.float64), (F,))
    local = _euler_xyz(joint_angles.reshape(F, J - 1, 3))
    pos = np.empty((F, J, 3))
    rot = np.empty((F, J, 3, 3))
    pos[:, 0] = root
    rot[:, 0] = _yaw_matrix(yaw)
    offs = skeleton.offsets
    for j in range(1, J):
        p = skeleton.parents[j]
        pos[:, j] = pos[:, p] + scale[:, None] * (rot[:, p] @ offs[j])
        rot[:, j] = rot[:, p] @ local[:, j - 1]
    return pos, rot


def forward_kinematics(state: HumanState, skeleton: Skeleton = SKELETON) -> np.ndarray:
    """World joint positions, shape (J, 3)."""
    _check(skeleton, state.joint_angles)
    pos, _ = fk_batch(state.root_translation, state.root_yaw, state.joint_angles,
                      skeleton.scale(state.shape), skeleton)
    return pos[0]


def points_from_fk(pos: np.ndarray, rot: np.ndarray, scale, skeleton: Skeleton = SKELETON) -> np.ndarray:
    """Body surface points (F, (J-1)*S, 3) from batched FK output."""
    F = pos.shape[0]
    scale = np.broadcast_to(np.asarray(scale, dtype=np.float64), (F,))
    par = np.asarray(skeleton.parents[1:])
    samples = skeleton.sample_offsets[1:]                      # (J-1, S, 3)
    local = np.einsum("fjab,jsb->fjsa", rot[:, par], samples)  # rotate into world
    pts = pos[:, par, None, :] + scale[:, None, None, None] * local
    return pts.reshape(F, -1, 3)


def body_points(state: HumanState, skeleton: Skeleton = SKELETON) -> np.ndarray:
    """Surface sample points for one state, shape ((J-1)*S, 3)."""
    _check(skeleton, state.joint_angles)
    sc = skeleton.scale(state.shape)
    pos, rot = fk_batch(state.root_translation, state.root_yaw, state.joint_angles, sc, skeleton)
    return points_from_fk(pos, rot, sc, skeleton)[0]


def set_joint(angles: np.ndarray, name: str, xyz) -> None:
    """In-place write of one joint's Euler triplet into a (..., 63) angle array."""
    j = JOINT[name] - 1
    angles[..., 3 * j:3 * j + 3] = xyz


class MotionClip:
    """Per-frame motion for one action unit, stored as stacked arrays.

    ``frames[0]`` is the source node's state, so a clip of duration ``n``
    frames holds ``n + 1`` states.
    """

    def __init__(self, root, yaw, joint_angles, shape=None, *, fps: int = 30,
                 action: str = "", seed: int = 0, source_node: int = -1,
                 nominal_frames: int | None = None, extra_frames: int = 0,
                 incomplete: bool = False):
        self.root = np.asarray(root, dtype=np.float64).reshape(-1, 3)
        self.yaw = wrap_angle(np.asarray(yaw, dtype=np.float64).reshape(-1))
        self.joint_angles = np.asarray(joint_angles, dtype=np.float64).reshape(self.root.shape[0], -1)
        self.shape = np.zeros(NUM_SHAPE) if shape is None else np.asarray(shape, dtype=np.float64)
        if self.root.shape[0] == 0:
            raise ValueError("a motion clip needs at least one frame")
        if not (self.yaw.shape[0] == self.joint_angles.shape[0] == self.root.shape[0]):
            raise ValueError("per-frame arrays disagree in length")
        self.fps = fps
        self.action = action
        self.seed = seed
        self.source_node = source_node
        self.nominal_frames = self.duration if nominal_frames is None else nominal_frames
        self.extra_frames = extra_frames
        self.incomplete = incomplete

    @classmethod
    def from_states(cls, states, **kw) -> "MotionClip":
        states = list(states)
        return cls(np.stack([s.root_translation for s in states]),
                   np.array([s.root_yaw for s in states]),
                   np.stack([s.joint_angles for s in states]),
                   states[0].shape.copy(), **kw)

    def __len__(self) -> int:
        return self.root.shape[0]

    @property
    def duration(self) -> int:
        return len(self) - 1

    def state(self, k: int) -> HumanState:
        return HumanState(self.root[k].copy(), float(self.yaw[k]),
                          self.joint_angles[k].copy(), self.shape.copy())

    @property
    def frames(self) -> list:
        return [self.state(k) for k in range(len(self))]

    @property
    def first(self) -> HumanState:
        return self.state(0)

    @property
    def last(self) -> HumanState:
        return self.state(len(self) - 1)

    def head(self, k: int) -> "MotionClip":
        """Frames ``0..k`` inclusive."""
        return MotionClip(self.root[:k + 1].copy(), self.yaw[:k + 1].copy(),
                          self.joint_angles[:k + 1].copy(), self.shape.copy(), fps=self.fps,
                          action=self.action, seed=self.seed, source_node=self.source_node,
                          nominal_frames=min(self.nominal_frames, k),
                          extra_frames=max(0, k - self.nominal_frames),
                          incomplete=self.incomplete)

    def fk(self, skeleton: Skeleton = SKELETON):
        return fk_batch(self.root, self.yaw, self.joint_angles, skeleton.scale(self.shape), skeleton)

    def joints(self, skeleton: Skeleton = SKELETON) -> np.ndarray:
        return self.fk(skeleton)[0]

    def body_points(self, skeleton: Skeleton = SKELETON) -> np.ndarray:
        pos, rot = self.fk(skeleton)
        return points_from_fk(pos, rot, skeleton.scale(self.shape), skeleton)

    def equals(self, other: "MotionClip") -> bool:
        return (np.array_equal(self.root, other.root) and np.array_equal(self.yaw, other.yaw)
                and np.array_equal(self.joint_angles, other.joint_angles)
                and np.array_equal(self.shape, other.shape))


def concat_clips(clips) -> MotionClip:
    """Join clips that chain end-to-start, dropping each duplicated first frame."""
    clips = list(clips)
    if not clips:
        raise ValueError("nothing to concatenate")
    root = [clips[0].root] + [c.root[1:] for c in clips[1:]]
    yaw = [clips[0].yaw] + [c.yaw[1:] for c in clips[1:]]
    ja = [clips[0].joint_angles] + [c.joint_angles[1:] for c in clips[1:]]
    return MotionClip(np.concatenate(root), np.concatenate(yaw), np.concatenate(ja),
                      clips[0].shape.copy(), fps=clips[0].fps, action="path")
