"""Plan-level value types shared by the agents, the graph and the generator."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

FPS = 30
MAX_UNIT_FRAMES = 90


class Verb(str, enum.Enum):
    WALK_TO = "walk_to"
    TURN_TO = "turn_to"
    STEP_OVER = "step_over"
    SIT = "sit"
    STAND = "stand"
    CLIMB_SEGMENT = "climb_segment"
    REACH = "reach"
    IDLE = "idle"
    CUSTOM_TEXT = "custom_text"


class ActionError(ValueError):
    pass


_NEEDS_TARGET = {Verb.WALK_TO, Verb.STEP_OVER, Verb.SIT, Verb.STAND, Verb.CLIMB_SEGMENT, Verb.REACH}


@dataclass
class ActionUnit:
    """One atomic action of at most three seconds.

    ``start_position`` / ``start_yaw`` record the state the planner expected
    when the unit begins; the generator executes the unit relative to that
    frame (a "walk 2 m forward" instruction, not a world-space goto).
    """

    verb: Verb
    duration: int
    start_position: np.ndarray
    start_yaw: float
    target: np.ndarray | None = None
    target_yaw: float | None = None
    obstacle: str | None = None
    description: str = ""
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        self.verb = Verb(self.verb)
        self.start_position = np.asarray(self.start_position, dtype=np.float64).reshape(3)
        if self.target is not None:
            self.target = np.asarray(self.target, dtype=np.float64).reshape(3)
        self.validate()

    def validate(self) -> None:
        if not 1 <= int(self.duration) <= MAX_UNIT_FRAMES:
            raise ActionError(f"{self.verb.value}: duration {self.duration} outside 1..{MAX_UNIT_FRAMES} frames")
        if self.verb in _NEEDS_TARGET and self.target is None:
            raise ActionError(f"{self.verb.value} needs a target point")
        if self.verb is Verb.TURN_TO and self.target_yaw is None:
            raise ActionError("turn_to needs a target yaw")
        if self.verb is Verb.STEP_OVER and not self.obstacle:
            raise ActionError("step_over needs an obstacle tag")
        for v in (self.start_position, self.target):
            if v is not None and not np.all(np.isfinite(v)):
                raise ActionError("non-finite action parameter")

    @property
    def end_yaw(self) -> float:
        if self.target_yaw is not None:
            return self.target_yaw
        return self.start_yaw

    @property
    def end_position(self) -> np.ndarray:
        return self.start_position if self.target is None else self.target

    def to_dict(self) -> dict:
        d = {
            "verb": self.verb.value,
            "duration": int(self.duration),
            "start_position": [float(x) for x in self.start_position],
            "start_yaw": float(self.start_yaw),
            "description": self.description,
        }
        if self.target is not None:
            d["target"] = [float(x) for x in self.target]
        if self.target_yaw is not None:
            d["target_yaw"] = float(self.target_yaw)
        if self.obstacle:
            d["obstacle"] = self.obstacle
        if self.extra:
            d["extra"] = self.extra
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ActionUnit":
        return cls(Verb(d["verb"]), int(d["duration"]), d["start_position"], float(d["start_yaw"]),
                   d.get("target"), d.get("target_yaw"), d.get("obstacle"),
                   d.get("description", ""), dict(d.get("extra", {})))


@dataclass
class ActionChain:
    units: list

    def __post_init__(self):
        if not self.units:
            raise ActionError("an action chain needs at least one unit")

    def __iter__(self):
        return iter(self.units)

    def __len__(self) -> int:
        return len(self.units)

    @property
    def verbs(self) -> list:
        return [u.verb.value for u in self.units]


@dataclass
class VerticalLink:
    kind: str
    bottom: np.ndarray
    top: np.ndarray

    def __post_init__(self):
        self.bottom = np.asarray(self.bottom, dtype=np.float64).reshape(3)
        self.top = np.asarray(self.top, dtype=np.float64).reshape(3)

    @property
    def height(self) -> float:
        return float(self.top[2] - self.bottom[2])


@dataclass
class Milestone:
    position: np.ndarray
    label: str
    facing: float | None = None
    link: VerticalLink | None = None

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=np.float64).reshape(3)


@dataclass
class KeyPlan:
    milestones: list
    trajectories: list          # one (k, 2) polyline per milestone

    def __post_init__(self):
        if len(self.milestones) != len(self.trajectories):
            raise ValueError("one trajectory per milestone is required")
        self.trajectories = [np.asarray(t, dtype=np.float64).reshape(-1, 2) for t in self.trajectories]

    def __len__(self) -> int:
        return len(self.milestones)


def frames_for(seconds: float, fps: int = FPS) -> int:
    """Whole frames covering ``seconds``, ignoring float noise just above an integer."""
    return max(1, int(math.ceil(seconds * fps - 1e-9)))
