"""Scene navigator, action-chain planner and critic, with the rule-based backend.

The rule-based backend does geometry only: A* over the nav grid for routes,
threshold rules for decomposing routes into action units, and a per-frame
deviation score for the critic.  Semantic scene reading and intent come
from scenario annotations (``TaskSpec.subgoals``) or from a remote backend.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

import numpy as np

from . import graph as G
from .actions import (FPS, MAX_UNIT_FRAMES, ActionChain, ActionUnit, KeyPlan, Milestone, Verb,
                      VerticalLink, frames_for)
from .generator import SIT_BACK, GeneratorConfig
from .kinematics import JOINT, STAND_HEIGHT, HumanState, MotionClip, forward_kinematics, wrap_angle
from .scene import NavGrid, SceneMesh, points_inside, raycast


class PlanningError(RuntimeError):
    pass


class UnsupportedActionError(PlanningError):
    pass


class ContractError(RuntimeError):
    pass


@dataclass
class TaskSpec:
    text: str
    start: HumanState
    scene_version: int = 0
    subgoals: list = field(default_factory=list)      # Milestone annotations
    links: list = field(default_factory=list)         # VerticalLink
    interactive: list = field(default_factory=list)   # object tags

    def __post_init__(self):
        if not self.text.strip():
            raise ValueError("task text is empty")


@dataclass
class PlannerConfig:
    max_walk: float = 2.5
    turn_threshold: float = math.radians(15.0)
    step_over_distance: float = 0.6
    step_margin: float = 0.8
    climb_segment: float = 1.5
    sit_frames: int = 45
    stand_frames: int = 45
    reach_frames: int = 30
    idle_frames: int = 30
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)


@dataclass
class CriticConfig:
    w_distance: float = 1.0
    w_heading: float = 0.5
    w_penetration: float = 5.0
    threshold: float = 0.6
    stride: int = 5
    correct_threshold: float = math.radians(10.0)
    correction_window: int = 15
    camera_radius: float = 4.0
    camera_height: float = 1.6
    camera_azimuths: int = 16


@dataclass
class CameraPose:
    position: np.ndarray
    look_at: np.ndarray
    azimuth: int
    degraded: bool = False

    def to_dict(self) -> dict:
        return {"position": [float(x) for x in self.position], "look_at": [float(x) for x in self.look_at],
                "azimuth": self.azimuth, "degraded": self.degraded}


@dataclass
class Critique:
    verdict: str                 # accept | backtrack | replan
    kept_frame: int
    corrective_yaw: float = 0.0
    camera: CameraPose | None = None
    adjusted_chain: ActionChain | None = None
    scores: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.verdict not in ("accept", "backtrack", "replan"):
            raise ValueError(f"unknown verdict {self.verdict!r}")
        self.corrective_yaw = float(wrap_angle(self.corrective_yaw))


@dataclass
class CriticContext:
    unit: ActionUnit
    polyline: np.ndarray
    target: np.ndarray
    scene: SceneMesh | None = None
    penetrable: tuple = ()
    replan: object = None        # callable(HumanState) -> ActionChain


# ---------------------------------------------------------------- navigation

_NEIGHBOURS = [(1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (1, -1), (-1, 1), (-1, -1)]
_SQRT2 = math.sqrt(2.0)


def astar(nav: NavGrid, start: tuple, goal: tuple) -> list | None:
    """8-connected A* (no corner cutting) over walkable cells; ``None`` if unreachable."""
    W = nav.walkable
    if not (nav.in_bounds(start) and nav.in_bounds(goal) and W[start] and W[goal]):
        return None
    nx, ny = W.shape

    def h(c):
        dx, dy = abs(c[0] - goal[0]), abs(c[1] - goal[1])
        return (dx + dy) + (_SQRT2 - 2.0) * min(dx, dy)

    g = {start: 0.0}
    came = {}
    heap = [(h(start), 0, start)]
    tie = 0
    closed = set()
    while heap:
        _, _, cur = heapq.heappop(heap)
        if cur in closed:
            continue
        if cur == goal:
            path = [cur]
            while cur in came:
                cur = came[cur]
                path.append(cur)
            return path[::-1]
        closed.add(cur)
        ci, cj = cur
        for di, dj in _NEIGHBOURS:
            ni, nj = ci + di, cj + dj
            if not (0 <= ni < nx and 0 <= nj < ny) or not W[ni, nj]:
                continue
            if di and dj and not (W[ci + di, cj] and W[ci, cj + dj]):
                continue
            cost = g[cur] + (_SQRT2 if di and dj else 1.0)
            nb = (ni, nj)
            if cost < g.get(nb, math.inf) - 1e-12:
                g[nb] = cost
                came[nb] = cur
                tie += 1
                heapq.heappush(heap, (cost + h(nb), tie, nb))
    return None


def line_of_sight(nav: NavGrid, a, b) -> bool:
    a = np.asarray(a, dtype=np.float64)[:2]
    b = np.asarray(b, dtype=np.float64)[:2]
    n = max(1, int(math.ceil(np.hypot(*(b - a)) / (nav.cell / 4.0))))
    for t in np.linspace(0.0, 1.0, n + 1):
        if not nav.is_walkable(a + t * (b - a)):
            return False
    return True


def simplify(nav: NavGrid, pts: list) -> np.ndarray:
    """Greedy line-of-sight shortcutting of a waypoint list."""
    out = [pts[0]]
    i = 0
    while i < len(pts) - 1:
        j = len(pts) - 1
        while j > i + 1 and not line_of_sight(nav, pts[i], pts[j]):
            j -= 1
        out.append(pts[j])
        i = j
    return np.array(out, dtype=np.float64)


def route(nav: NavGrid, a, b) -> np.ndarray | None:
    a = np.asarray(a, dtype=np.float64)[:2]
    b = np.asarray(b, dtype=np.float64)[:2]
    cells = astar(nav, nav.cell_of(a), nav.cell_of(b))
    if cells is None:
        return None
    pts = [a] + [nav.center(c) for c in cells[1:-1]] + [b]
    if len(cells) == 1:
        pts = [a, b]
    return simplify(nav, pts)


def _fmt(p) -> str:
    return "(" + ", ".join(f"{float(x):.3f}" for x in p) + ")"


def navigate(task: TaskSpec, nav: NavGrid, scene: SceneMesh | None = None) -> KeyPlan:
    """Route through the annotated sub-goals in order."""
    if not task.subgoals:
        raise PlanningError("task has no sub-goals")
    cur = task.start.root_translation[:2]
    if not nav.is_walkable(cur):
        raise PlanningError(f"start {_fmt(cur)} is not on a walkable cell")
    milestones, trajs = [], []
    for k, sg in enumerate(task.subgoals):
        goal = sg.position[:2]
        link = None
        if nav.is_walkable(goal):
            poly = route(nav, cur, goal)
        else:
            link = next((ln for ln in task.links
                         if np.hypot(*(ln.top[:2] - goal)) <= G.GOAL_RADIUS
                         and abs(ln.top[2] + STAND_HEIGHT - sg.position[2]) <= 0.5), None)
            if link is None:
                raise PlanningError(f"sub-goal {k} '{sg.label}' is unreachable: "
                                    f"{_fmt(cur)} -> {_fmt(goal)} is blocked")
            poly = route(nav, cur, link.bottom[:2])
            if poly is not None:
                poly = np.vstack([poly, goal[None, :]])
        if poly is None:
            raise PlanningError(f"sub-goal {k} '{sg.label}' is unreachable: "
                                f"{_fmt(cur)} -> {_fmt(goal)} is blocked")
        milestones.append(Milestone(sg.position.copy(), sg.label, sg.facing, link or sg.link))
        trajs.append(poly)
        if link is not None and k + 1 < len(task.subgoals):
            raise PlanningError("routing onward from an elevated sub-goal is not supported")
        cur = goal
    return KeyPlan(milestones, trajs)


def reroute(nav: NavGrid, state: HumanState, milestone: Milestone, fallback: np.ndarray) -> np.ndarray:
    """Fresh route from the actual head to ``milestone``; ``fallback`` when A* cannot start."""
    cur = state.root_translation[:2]
    link = milestone.link
    if link is not None and state.root_translation[2] > link.bottom[2] + STAND_HEIGHT + 0.1:
        return fallback
    goal = link.bottom[:2] if link is not None else milestone.position[:2]
    poly = route(nav, cur, goal) if nav.is_walkable(cur) else None
    if poly is None:
        return fallback
    if link is not None:
        poly = np.vstack([poly, milestone.position[None, :2]])
    return poly


# ---------------------------------------------------------------- planning

_WALK_LABELS = {"arrive", "walk", "goto", "go", "approach", "visit", "reach_area"}
_IDLE_LABELS = {"idle", "wait", "look", "rest"}
_REACH_LABELS = {"reach", "touch", "wave", "grab", "pick"}


def _label_verb(label: str) -> str:
    word = label.strip().lower().split()[0] if label.strip() else ""
    if word in _WALK_LABELS:
        return "walk"
    if word.startswith("sit"):
        return "sit"
    if word.startswith("stand"):
        return "stand"
    if word.startswith("climb"):
        return "climb"
    if word in _REACH_LABELS:
        return "reach"
    if word in _IDLE_LABELS:
        return "idle"
    return ""


def polyline_distance(poly: np.ndarray, pts: np.ndarray) -> np.ndarray:
    """Horizontal distance from each point (…, 2) to a polyline (k, 2)."""
    pts = np.asarray(pts, dtype=np.float64)
    flat = pts.reshape(-1, 2)
    if len(poly) == 1:
        return np.hypot(*(flat - poly[0]).T).reshape(pts.shape[:-1])
    a, b = poly[:-1], poly[1:]
    ab = b - a
    L2 = np.einsum("ij,ij->i", ab, ab)
    t = np.einsum("pij,ij->pi", flat[:, None, :] - a[None], ab) / np.where(L2 > 0, L2, 1.0)
    t = np.clip(t, 0.0, 1.0)
    closest = a[None] + t[..., None] * ab[None]
    d = np.linalg.norm(flat[:, None, :] - closest, axis=2)
    return d.min(axis=1).reshape(pts.shape[:-1])


def _remaining(poly: np.ndarray, p: np.ndarray) -> np.ndarray:
    if len(poly) == 1:
        return np.vstack([p, poly])
    a, b = poly[:-1], poly[1:]
    ab = b - a
    L2 = np.einsum("ij,ij->i", ab, ab)
    t = np.clip(np.einsum("ij,ij->i", p - a, ab) / np.where(L2 > 0, L2, 1.0), 0.0, 1.0)
    d = np.hypot(*(a + t[:, None] * ab - p).T)
    s = int(np.flatnonzero(d <= d.min() + 1e-9)[-1])
    return np.vstack([p[None, :], poly[s + 1:]])


def _is_seated(state: HumanState) -> bool:
    j = JOINT["l_hip"] - 1
    return state.joint_angles[3 * j + 1] < -0.5


def _footprint_distance(lo, hi, a, b) -> float:
    """Distance between a segment and an axis-aligned rectangle in the plane (sampled)."""
    ts = np.linspace(0.0, 1.0, 64)
    pts = a[None] + ts[:, None] * (b - a)[None]
    dx = np.maximum(np.maximum(lo[0] - pts[:, 0], pts[:, 0] - hi[0]), 0.0)
    dy = np.maximum(np.maximum(lo[1] - pts[:, 1], pts[:, 1] - hi[1]), 0.0)
    return float(np.hypot(dx, dy).min())


class _ChainBuilder:
    def __init__(self, state: HumanState, cfg: PlannerConfig):
        self.cfg = cfg
        self.gen = cfg.generator
        self.pos = state.root_translation.copy()
        self.yaw = state.root_yaw
        self.units: list = []

    def _add(self, verb, duration, target=None, target_yaw=None, **kw):
        u = ActionUnit(verb, duration, self.pos.copy(), self.yaw,
                       None if target is None else np.asarray(target, dtype=np.float64),
                       target_yaw, **kw)
        self.units.append(u)
        if target is not None:
            self.pos = u.target.copy()
        if target_yaw is not None:
            self.yaw = float(wrap_angle(target_yaw))
        return u

    def turn(self, yaw: float, force: bool = False):
        err = float(wrap_angle(yaw - self.yaw))
        if abs(err) > self.cfg.turn_threshold or (force and abs(err) > 1e-12):
            n = frames_for(abs(err) / self.gen.turn_rate, self.gen.fps)
            self._add(Verb.TURN_TO, n, target_yaw=yaw,
                      description=f"turn {math.degrees(err):+.0f} degrees")

    def walk(self, q: np.ndarray):
        d = q - self.pos[:2]
        L = float(np.hypot(*d))
        if L < 1e-9:
            return
        phi = math.atan2(d[1], d[0])
        self.turn(phi)
        k = max(1, int(math.ceil(L / self.cfg.max_walk - 1e-9)))
        start = self.pos[:2].copy()
        for i in range(1, k + 1):
            p = start + d * (i / k)
            piece = L / k
            n = frames_for(piece / self.gen.walk_speed, self.gen.fps)
            self._add(Verb.WALK_TO, n, [p[0], p[1], self.pos[2]], target_yaw=phi,
                      description=f"walk {piece:.2f} m forward")

    def step_over(self, q: np.ndarray, tag: str):
        d = q - self.pos[:2]
        L = float(np.hypot(*d))
        phi = math.atan2(d[1], d[0])
        self.turn(phi)
        n = frames_for(L / self.gen.walk_speed, self.gen.fps)
        if n > MAX_UNIT_FRAMES:
            raise PlanningError(f"obstacle '{tag}' is too wide to step over in one unit")
        self._add(Verb.STEP_OVER, n, [q[0], q[1], self.pos[2]], target_yaw=phi, obstacle=tag,
                  description=f"step over the {tag}")


def plan_chain(state: HumanState, milestone: Milestone, polyline: np.ndarray,
               scene: SceneMesh | None = None, obstacles=(), config: PlannerConfig | None = None) -> ActionChain:
    """Decompose the route to ``milestone`` into action units of at most three seconds.

    ``obstacles`` lists the scene tags the planner is aware of; any within
    ``step_over_distance`` of a route segment gets a ``step_over`` unit.
    """
    cfg = config or PlannerConfig()
    verb = _label_verb(milestone.label)
    if not verb:
        raise UnsupportedActionError(f"no action mapping for milestone label '{milestone.label}'")
    b = _ChainBuilder(state, cfg)
    ground = state.root_translation[2] - STAND_HEIGHT
    link = milestone.link
    climbing = link is not None and state.root_translation[2] > link.bottom[2] + STAND_HEIGHT + 0.1

    if _is_seated(state):
        ground = state.root_translation[2] - (STAND_HEIGHT - cfg.generator.sit_depth)
        fwd = np.array([math.cos(b.yaw), math.sin(b.yaw)]) * SIT_BACK
        b._add(Verb.STAND, cfg.stand_frames,
               [b.pos[0] + fwd[0], b.pos[1] + fwd[1], ground + STAND_HEIGHT], description="stand up")

    if not climbing:
        poly = np.asarray(polyline, dtype=np.float64)
        walk_poly = poly[:-1] if link is not None else poly
        pts = _remaining(walk_poly, b.pos[:2].copy())
        blockers = []
        if scene is not None:
            for tag in obstacles:
                if tag in scene.objects:
                    lo, hi = scene.object_bounds(tag)
                    blockers.append((tag, lo, hi))
        for q in pts[1:]:
            p = b.pos[:2].copy()
            seg = q - p
            L = float(np.hypot(*seg))
            if L < 1e-9:
                continue
            u = seg / L
            crossings = []
            for tag, lo, hi in blockers:
                if _footprint_distance(lo, hi, p, q) <= cfg.step_over_distance:
                    c = (lo[:2] + hi[:2]) / 2.0
                    r = 0.5 * float(np.hypot(*(hi[:2] - lo[:2])))
                    sc = float((c - p) @ u)
                    m = r + cfg.step_margin
                    crossings.append((max(0.0, sc - m), min(L, sc + m), tag))
            crossings.sort()
            for s0, s1, tag in crossings:
                if s1 <= float((b.pos[:2] - p) @ u) + 1e-9:
                    continue
                b.walk(p + u * s0)
                b.step_over(p + u * s1, tag)
            b.walk(q)

    if verb == "climb":
        if link is None:
            raise UnsupportedActionError(f"'{milestone.label}' needs an annotated vertical link")
        top_root = link.top[2] + STAND_HEIGHT
        remaining = top_root - b.pos[2]
        nseg = max(1, int(math.ceil(remaining / cfg.climb_segment - 1e-9)))
        for i in range(1, nseg + 1):
            z = b.pos[2] + remaining / nseg if i < nseg else top_root
            xy = b.pos[:2] if i < nseg else milestone.position[:2]
            n = frames_for((remaining / nseg) / cfg.generator.climb_speed, cfg.generator.fps)
            b._add(Verb.CLIMB_SEGMENT, min(n, MAX_UNIT_FRAMES), [xy[0], xy[1], z],
                   description=f"climb segment {i}/{nseg}")
    elif verb == "sit":
        f = milestone.facing if milestone.facing is not None else b.yaw
        b.turn(f)
        back = -np.array([math.cos(f), math.sin(f)]) * SIT_BACK
        tgt = [b.pos[0] + back[0], b.pos[1] + back[1], ground + STAND_HEIGHT - cfg.generator.sit_depth]
        b._add(Verb.SIT, cfg.sit_frames, tgt, target_yaw=f, description="sit down")
    else:
        if milestone.facing is not None:
            b.turn(milestone.facing)
        if verb == "stand":
            if not b.units or b.units[-1].verb is not Verb.STAND:
                b._add(Verb.IDLE, cfg.idle_frames, b.pos.copy(), description="stand still")
        elif verb == "reach":
            b._add(Verb.REACH, cfg.reach_frames, b.pos.copy(), description=milestone.label)
        elif verb == "idle":
            b._add(Verb.IDLE, cfg.idle_frames, b.pos.copy(), description=milestone.label)

    if not b.units:
        b._add(Verb.IDLE, 10, b.pos.copy(), description="hold position")
    end = b.units[-1].end_position
    if np.hypot(*(end[:2] - milestone.position[:2])) > G.GOAL_RADIUS + 1e-9:
        raise PlanningError(f"chain for '{milestone.label}' ends outside the goal tolerance")
    return ActionChain(b.units)


# ---------------------------------------------------------------- critic

def expected_yaw(unit: ActionUnit, t: np.ndarray) -> np.ndarray:
    """Planned heading of ``unit`` at frames ``t`` (beyond the nominal end: the final heading)."""
    n = unit.duration
    frac = np.clip(np.asarray(t, dtype=np.float64) / n, 0.0, 1.0)
    y0 = unit.start_yaw
    if unit.verb in (Verb.WALK_TO, Verb.STEP_OVER):
        d = unit.target[:2] - unit.start_position[:2]
        phi = math.atan2(d[1], d[0]) if np.hypot(*d) > 0 else y0
        return y0 + float(wrap_angle(phi - y0)) * frac
    dy = float(wrap_angle(unit.end_yaw - y0))
    if unit.verb is Verb.TURN_TO or unit.verb is Verb.CLIMB_SEGMENT:
        return y0 + dy * frac
    s = frac * frac * (3.0 - 2.0 * frac)
    return y0 + dy * s


def frame_scores(clip: MotionClip, ctx: CriticContext, frames, cfg: CriticConfig) -> np.ndarray:
    frames = np.asarray(frames, dtype=np.int64)
    xy = clip.root[frames, :2]
    dist = polyline_distance(ctx.polyline, xy)
    head = np.abs(wrap_angle(clip.yaw[frames] - expected_yaw(ctx.unit, frames)))
    pen = np.zeros(len(frames))
    if ctx.scene is not None and ctx.penetrable:
        from .kinematics import fk_batch, points_from_fk
        pos, rot = fk_batch(clip.root[frames], clip.yaw[frames], clip.joint_angles[frames])
        pts = points_from_fk(pos, rot, 1.0)
        inside = points_inside(ctx.scene, pts.reshape(-1, 3), ctx.penetrable).reshape(len(frames), -1)
        pen = inside.mean(axis=1)
    score = cfg.w_distance * dist + cfg.w_heading * head + cfg.w_penetration * pen
    # frames past the unit's nominal end are motion nobody asked for
    score = np.where(frames > ctx.unit.duration, np.inf, score)
    return score


def critique(clip: MotionClip, ctx: CriticContext, config: CriticConfig | None = None,
             with_camera: bool = True) -> Critique:
    """Backtrack from the last frame in strides; keep the latest frame that still matches the plan."""
    cfg = config or CriticConfig()
    last = clip.duration
    frames = np.arange(last, -1, -cfg.stride)
    scores = frame_scores(clip, ctx, frames, cfg)
    ok = np.flatnonzero(scores <= cfg.threshold)
    score_map = {int(f): float(s) for f, s in zip(frames, scores)}
    if ok.size == 0:
        chain = ctx.replan(clip.first) if ctx.replan is not None else None
        if chain is None:
            raise ContractError("replan verdict needs a planner in the critic context")
        return Critique("replan", 0, 0.0, None, chain, score_map)
    i = int(frames[ok[0]])
    err = float(wrap_angle(expected_yaw(ctx.unit, i) - clip.yaw[i]))
    yaw = err if abs(err) > cfg.correct_threshold else 0.0
    cam = None
    if with_camera and ctx.scene is not None:
        cam = place_camera(clip.state(i), ctx.target, ctx.scene, cfg)
    return Critique("accept" if i == last else "backtrack", i, yaw, cam, None, score_map)


def correct_clip(clip: MotionClip, critique_: Critique, window: int = 15) -> MotionClip:
    """Drop frames after the kept one and spread the corrective yaw over the kept tail."""
    i = critique_.kept_frame
    kept = clip if i >= clip.duration else clip.head(i)
    delta = critique_.corrective_yaw
    if delta != 0.0 and i > 0:
        m = min(i, window)
        yaw = kept.yaw.copy()
        yaw[i - m + 1:i + 1] += delta * np.arange(1, m + 1) / m
        kept = MotionClip(kept.root.copy(), yaw, kept.joint_angles.copy(), kept.shape.copy(),
                          fps=kept.fps, action=kept.action, seed=kept.seed, source_node=kept.source_node,
                          nominal_frames=kept.nominal_frames, extra_frames=kept.extra_frames,
                          incomplete=kept.incomplete)
    return kept


def apply_correction(graph: G.InteractionGraph, clip: MotionClip, critique_: Critique,
                     config: CriticConfig | None = None, *, arrive: bool = True):
    """Apply an accept/backtrack verdict to a clip already appended at the graph head.

    Returns ``(kept_clip, pruned_count)``.
    """
    cfg = config or CriticConfig()
    if critique_.verdict == "replan":
        raise ContractError("a replan verdict goes back to the planner, not to apply_correction")
    edge = graph.incoming(graph.head)
    if edge is None or edge.clip is not clip:
        raise ContractError("clip is not the head's incoming edge")
    kept = correct_clip(clip, critique_, cfg.correction_window)
    pruned = 0
    if critique_.kept_frame < clip.duration:
        pruned = G.prune_after(graph, edge.src)
        G.extend(graph, edge.action, kept, kept.last, arrive=arrive)
    elif kept is not clip:
        G.replace_head_clip(graph, kept)
    return kept, pruned


# ---------------------------------------------------------------- camera

def _visible(scene: SceneMesh, cam: np.ndarray, p: np.ndarray) -> bool:
    d = p - cam
    dist = float(np.linalg.norm(d))
    if dist < 1e-9:
        return True
    hit = raycast(scene, cam, d / dist)
    return hit is None or hit >= dist - 1e-6


def place_camera(head: HumanState, target, scene: SceneMesh, config: CriticConfig | None = None) -> CameraPose:
    """Pick a viewpoint on a circle around the human/target midpoint that sees both."""
    cfg = config or CriticConfig()
    target = np.asarray(target, dtype=np.float64).reshape(3)
    joints = forward_kinematics(head)
    pelvis, skull = joints[0], joints[JOINT["head"]]
    ground = head.root_translation[2] - STAND_HEIGHT
    mid = (head.root_translation[:2] + target[:2]) / 2.0
    look = np.array([mid[0], mid[1], ground + 1.0])
    best, best_k, best_pos = -1.0, -1, None
    for k in range(cfg.camera_azimuths):
        a = 2.0 * math.pi * k / cfg.camera_azimuths
        c = np.array([mid[0] + cfg.camera_radius * math.cos(a), mid[1] + cfg.camera_radius * math.sin(a),
                      ground + cfg.camera_height])
        if not all(_visible(scene, c, p) for p in (skull, pelvis, target)):
            continue
        u, v = pelvis - c, target - c
        cosang = float(u @ v / max(np.linalg.norm(u) * np.linalg.norm(v), 1e-12))
        margin = math.acos(max(-1.0, min(1.0, cosang)))
        if margin > best + 1e-9:
            best, best_k, best_pos = margin, k, c
    if best_pos is None:
        return CameraPose(np.array([mid[0], mid[1], ground + 8.0]), look, -1, True)
    return CameraPose(best_pos, look, best_k, False)


# ---------------------------------------------------------------- backends

class RuleBackend:
    """Deterministic geometric agents."""

    name = "rule"

    def __init__(self, planner: PlannerConfig | None = None, critic: CriticConfig | None = None):
        self.planner_config = planner or PlannerConfig()
        self.critic_config = critic or CriticConfig()

    def navigate(self, task: TaskSpec, nav: NavGrid, scene: SceneMesh | None = None) -> KeyPlan:
        return navigate(task, nav, scene)

    def plan_chain(self, state, milestone, polyline, scene=None, obstacles=()) -> ActionChain:
        return plan_chain(state, milestone, polyline, scene, obstacles, self.planner_config)

    def critique(self, clip, ctx: CriticContext) -> Critique:
        return critique(clip, ctx, self.critic_config)
