"""Motion-quality metrics: penetration, foot sliding, obstacle penetration, reaction divergence, diversity.

Sums run in frame order with numpy's pairwise reduction, so results do not
depend on how callers batch their clips.
"""

from __future__ import annotations

import csv
import io
import itertools
import json
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from .kinematics import JOINT, SKELETON, MotionClip, Skeleton, fk_batch
from .scene import SceneMesh, points_inside

CONTACT_HEIGHT = 0.05
FOOT_JOINTS = ("l_ankle", "r_ankle")


class MetricError(ValueError):
    pass


def _closed_objects(scene: SceneMesh, objects=None):
    names = list(scene.objects) if objects is None else list(objects)
    closed = [n for n in names if scene.closed.get(n, False)]
    skipped = [n for n in names if n not in closed]
    return closed, skipped


def inside_fraction(clip: MotionClip, scene: SceneMesh, objects, skeleton: Skeleton = SKELETON) -> np.ndarray:
    """Per-frame fraction of body points strictly inside ``objects`` (all closed)."""
    pts = clip.body_points(skeleton)
    if not objects:
        return np.zeros(len(clip))
    F, P = pts.shape[:2]
    inside = points_inside(scene, pts.reshape(-1, 3), objects).reshape(F, P)
    return inside.mean(axis=1)


def penetration_score(clip: MotionClip, scene: SceneMesh, skeleton: Skeleton = SKELETON,
                      objects=None, report: list | None = None) -> float:
    """Mean over frames of the fraction of body points inside any closed scene object.

    Open objects are left out with a warning, appended to ``report`` when
    one is given and issued through ``warnings`` otherwise.
    """
    if len(clip) == 0:
        raise MetricError("clip is empty")
    closed, skipped = _closed_objects(scene, objects)
    for name in skipped:
        msg = f"object '{name}' is not closed; excluded from penetration"
        if report is not None:
            report.append(msg)
        else:
            warnings.warn(msg, RuntimeWarning, stacklevel=2)
    return float(inside_fraction(clip, scene, closed, skeleton).mean())


def penetration_obstacle_score(clip: MotionClip, scene: SceneMesh, obstacle_tags,
                               skeleton: Skeleton = SKELETON, report: list | None = None) -> float:
    """Penetration restricted to the injected obstacles (by tag)."""
    tags = list(obstacle_tags)
    missing = [t for t in tags if t not in scene.objects]
    if missing:
        raise MetricError(f"obstacles not in scene: {', '.join(missing)}")
    if not tags:
        return 0.0
    return penetration_score(clip, scene, skeleton, tags, report)


def foot_sliding(clip: MotionClip, skeleton: Skeleton = SKELETON, contact_height: float = CONTACT_HEIGHT,
                 ground_z: float = 0.0) -> float:
    """Mean horizontal ankle displacement per contact frame, both feet pooled."""
    if len(clip) < 2:
        raise MetricError("foot sliding needs at least two frames")
    joints = clip.joints(skeleton)
    feet = joints[:, [JOINT[n] for n in FOOT_JOINTS], :]
    contact = (feet[1:, :, 2] - ground_z) < contact_height
    step = np.hypot(*(feet[1:, :, :2] - feet[:-1, :, :2]).transpose(2, 0, 1))
    n = int(contact.sum())
    return float(step[contact].sum() / n) if n else 0.0


def reaction_divergence(clip_a: MotionClip, clip_b: MotionClip, skeleton: Skeleton = SKELETON) -> float:
    """Mean per-joint world distance between two clips over their common prefix."""
    if len(clip_a) == 0 or len(clip_b) == 0:
        raise MetricError("clips must be non-empty")
    if clip_a.joint_angles.shape[1] != clip_b.joint_angles.shape[1]:
        raise MetricError("clips use different skeletons")
    n = min(len(clip_a), len(clip_b))
    ja, _ = fk_batch(clip_a.root[:n], clip_a.yaw[:n], clip_a.joint_angles[:n], skeleton.scale(clip_a.shape), skeleton)
    jb, _ = fk_batch(clip_b.root[:n], clip_b.yaw[:n], clip_b.joint_angles[:n], skeleton.scale(clip_b.shape), skeleton)
    return float(np.linalg.norm(ja - jb, axis=2).mean())


def diversity(clips, skeleton: Skeleton = SKELETON) -> float:
    """Mean pairwise reaction divergence over clips from identical inputs."""
    clips = list(clips)
    if len(clips) < 2:
        raise MetricError("diversity needs at least two clips")
    vals = [reaction_divergence(a, b, skeleton) for a, b in itertools.combinations(clips, 2)]
    return float(np.mean(vals))


def goal_completion(graph, key_plan=None, eps: float | None = None) -> float:
    """Fraction of milestones whose key node ended ``reached`` within ``eps``."""
    from . import graph as G
    keys = graph.key_order
    if not keys:
        return 0.0
    eps = graph.goal_radius if eps is None else eps
    hits = 0
    for k in keys:
        n = graph.nodes[k]
        if n.status != G.REACHED:
            continue
        d = np.hypot(*(n.human.root_translation[:2] - n.planned_human.root_translation[:2]))
        hits += d <= eps + 1e-12
    return hits / len(keys)


# ---------------------------------------------------------------- reports

REPORT_COLUMNS = ("scenario", "seed", "ablation", "p_score", "fs", "diversity", "pos", "rds",
                  "goal_completion", "frames", "prunings", "status")


@dataclass
class MetricsReport:
    scenario: str
    seed: int
    ablation: str = "full"
    p_score: float = 0.0
    fs: float = 0.0
    diversity: float | None = None
    pos: float | None = None
    rds: float | None = None
    goal_completion: float = 0.0
    frames: int = 0
    prunings: int = 0
    status: str = "ok"
    warnings: list = field(default_factory=list)

    def __post_init__(self):
        for name in ("p_score", "pos", "goal_completion"):
            v = getattr(self, name)
            if v is not None and not 0.0 <= v <= 1.0:
                raise MetricError(f"{name}={v} is not a fraction")
        for name in ("fs", "rds", "diversity"):
            v = getattr(self, name)
            if v is not None and v < 0:
                raise MetricError(f"{name}={v} is negative")

    def row(self) -> dict:
        return {c: getattr(self, c) for c in REPORT_COLUMNS}

    def to_dict(self) -> dict:
        return asdict(self)


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def to_csv(rows) -> str:
    """Comma-separated table; ``rows`` are dicts over ``REPORT_COLUMNS``."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(REPORT_COLUMNS)
    for r in rows:
        w.writerow([_fmt(r.get(c)) for c in REPORT_COLUMNS])
    return buf.getvalue()


def to_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=1)


def aggregate(reports) -> list:
    """Mean of each numeric column per ablation setting, in first-seen order."""
    groups: dict = {}
    for r in reports:
        groups.setdefault(r.ablation, []).append(r)
    out = []
    for ablation, rs in groups.items():
        row = {"scenario": "*", "seed": len(rs), "ablation": ablation, "status": "aggregate",
               "frames": int(sum(r.frames for r in rs)), "prunings": int(sum(r.prunings for r in rs))}
        for c in ("p_score", "fs", "diversity", "pos", "rds", "goal_completion"):
            vals = [getattr(r, c) for r in rs if getattr(r, c) is not None]
            row[c] = float(np.mean(vals)) if vals else None
        out.append(row)
    return out
