"""Scenario configuration, the closed plan/generate/critique loop, suites and obstacle experiments.

A run never raises for planning, generation, backend or budget trouble;
the failure is logged in the trace and the report's ``status`` column.
"""

from __future__ import annotations

import json
import math
import zlib
from dataclasses import dataclass, field, replace
from pathlib import Path

import jsonschema
import numpy as np

from . import agents as A
from . import graph as G
from . import metrics as M
from .actions import ActionChain, ActionUnit, Milestone, Verb, VerticalLink
from .generator import GeneratorConfig, GeneratorError, NoiseModel, execute_action, straight_walk_unit
from .kinematics import STAND_HEIGHT, HumanState, MotionClip, concat_clips
from .scene import ObstacleSpec, SceneMesh, box_mesh, load_scene, place_obstacle, scene_nav_grid

SCHEMA_ID = "hsigraph-scenario/1"
DEFAULT_BUDGET = 3000
MAX_ATTEMPTS = 12
REPLAN_DEVIATION = 0.15

EXIT_CODES = {"ok": 0, "config": 3, "planning": 4, "generator": 5, "backend": 6, "budget": 7, "io": 8}

_SCHEMA_PATH = Path(__file__).with_name("schemas") / "scenario.schema.json"


class ConfigError(ValueError):
    pass


@dataclass
class ObstacleInjection:
    spec: ObstacleSpec
    trigger: str = "at-start"          # at-start | within
    distance: float = 0.0

    def center(self) -> np.ndarray:
        return self.spec.world_vertices().mean(axis=0)


@dataclass
class ScenarioConfig:
    id: str
    scene: SceneMesh
    start: HumanState
    task: str
    subgoals: list
    links: list = field(default_factory=list)
    obstacles: list = field(default_factory=list)
    noise: NoiseModel = field(default_factory=NoiseModel)
    backend: str = "rule"
    endpoint: str | None = None
    critic: bool = True
    planner: bool = True
    obstacle_aware: bool = True
    seeds: list = field(default_factory=lambda: [0])
    frame_budget: int = DEFAULT_BUDGET
    bounds_xy: tuple | None = None
    ground_z: float = 0.0
    nav_cell: float = 0.1
    clearance: float = 0.3
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)
    scene_path: str = ""
    note: str = ""

    def __post_init__(self):
        if not self.subgoals:
            raise ConfigError(f"{self.id}: at least one sub-goal is required")
        if self.frame_budget <= 0:
            raise ConfigError(f"{self.id}: frame budget must be positive")
        if self.backend not in ("rule", "remote"):
            raise ConfigError(f"{self.id}: unknown backend '{self.backend}'")
        if self.backend == "remote" and not self.endpoint:
            raise ConfigError(f"{self.id}: remote backend needs an endpoint")

    @property
    def key(self) -> int:
        """Stable 32-bit scenario key for the random streams."""
        return zlib.crc32(self.id.encode())

    @property
    def ablation(self) -> str:
        parts = []
        if not self.planner:
            parts.append("no_planner")
        if not self.critic:
            parts.append("no_critic")
        if not self.obstacle_aware:
            parts.append("obstacle_unaware")
        return "+".join(parts) or "full"


def _load_schema() -> dict:
    return json.loads(_SCHEMA_PATH.read_text())


def _obstacle_from(d: dict, base: Path) -> ObstacleInjection:
    if "box" in d:
        v, t = box_mesh([0.0, 0.0, d["box"][2] / 2.0], d["box"])
    else:
        mesh = load_scene(base / d["mesh"])
        v, t = mesh.vertices, mesh.triangles
    spec = ObstacleSpec(v, t, tuple(float(x) for x in d["translation"]), math.radians(d.get("yaw_deg", 0.0)),
                        d["tag"], bool(d.get("seen", True)))
    trig = d.get("trigger", "at-start")
    if isinstance(trig, dict):
        return ObstacleInjection(spec, "within", float(trig["within"]))
    return ObstacleInjection(spec, "at-start", 0.0)


def config_from_dict(d: dict, base: Path = Path(".")) -> ScenarioConfig:
    try:
        jsonschema.validate(d, _load_schema())
    except jsonschema.ValidationError as e:
        raise ConfigError(f"scenario config: {e.message} at {'/'.join(map(str, e.absolute_path))}") from None
    path = base / d["scene"]
    if not path.exists():
        raise ConfigError(f"scene file {path} does not exist")
    scene = load_scene(path)
    gz = float(d.get("ground_z", 0.0))
    st = d["start"]
    start = HumanState.standing(st["position"][0], st["position"][1], math.radians(st.get("yaw_deg", 0.0)), gz)
    subgoals = []
    for sg in d["subgoals"]:
        floor = float(sg.get("floor", gz))
        facing = sg.get("facing_deg")
        subgoals.append(Milestone([sg["position"][0], sg["position"][1], floor + STAND_HEIGHT], sg["label"],
                                  None if facing is None else math.radians(facing)))
    links = [VerticalLink(ln["kind"], ln["bottom"], ln["top"]) for ln in d.get("links", [])]
    nz = d.get("noise", {})
    nav = d.get("nav", {})
    bxy = d.get("bounds_xy")
    if bxy is not None:
        lo, hi = np.asarray(bxy[0], float), np.asarray(bxy[1], float)
        for m in subgoals:
            if not (np.all(m.position[:2] >= lo) and np.all(m.position[:2] <= hi)):
                raise ConfigError(f"sub-goal '{m.label}' lies outside the scene bounds")
    return ScenarioConfig(
        id=d["id"], scene=scene, start=start, task=d["task"], subgoals=subgoals, links=links,
        obstacles=[_obstacle_from(o, base) for o in d.get("obstacles", [])],
        noise=NoiseModel(float(nz.get("trans_sigma", 0.0)), float(nz.get("yaw_sigma", 0.0)),
                         float(nz.get("p_extra", 0.0))),
        backend=d.get("backend", "rule"), endpoint=d.get("endpoint"),
        critic=bool(d.get("critic", True)), planner=bool(d.get("planner", True)),
        obstacle_aware=bool(d.get("obstacle_aware", True)),
        seeds=list(d.get("seeds", [0])), frame_budget=int(d.get("frame_budget", DEFAULT_BUDGET)),
        bounds_xy=None if bxy is None else (tuple(bxy[0]), tuple(bxy[1])), ground_z=gz,
        nav_cell=float(nav.get("cell", 0.1)), clearance=float(nav.get("clearance", 0.3)),
        scene_path=str(d["scene"]), note=d.get("note", ""))


def load_config(path) -> ScenarioConfig:
    path = Path(path)
    try:
        d = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"{path}: {e}") from None
    return config_from_dict(d, path.parent)


# ---------------------------------------------------------------- traces

@dataclass
class RunTrace:
    scenario: str
    seed: int
    ablation: str
    events: list = field(default_factory=list)
    graph: G.InteractionGraph | None = None
    report: M.MetricsReport | None = None
    path_clip: MotionClip | None = None
    status: str = "ok"
    error: str = ""

    def log(self, t: int, event: str, **data) -> dict:
        rec = {"seq": len(self.events), "t": int(t), "event": event, **data}
        self.events.append(rec)
        return rec

    def count(self, event: str) -> int:
        return sum(1 for e in self.events if e["event"] == event)

    def to_jsonl(self) -> str:
        head = {"type": "run", "scenario": self.scenario, "seed": self.seed, "ablation": self.ablation,
                "status": self.status, "error": self.error}
        lines = [json.dumps(head, sort_keys=True)]
        lines += [json.dumps({"type": "event", **e}, sort_keys=True) for e in self.events]
        if self.graph is not None:
            lines += [json.dumps({"type": "graph", **r}, sort_keys=True) for r in G.export_records(self.graph)]
        if self.report is not None:
            lines.append(json.dumps({"type": "report", **self.report.to_dict()}, sort_keys=True))
        return "\n".join(lines) + "\n"


def make_backend(cfg: ScenarioConfig):
    if cfg.backend == "remote":
        from .remote import RemoteBackend
        return RemoteBackend(cfg.endpoint)
    return A.RuleBackend()


class _Budget(Exception):
    pass


class _Run:
    """State for one closed-loop run."""

    def __init__(self, cfg: ScenarioConfig, seed: int, with_obstacles: bool, backend):
        self.cfg = cfg
        self.seed = seed
        self.backend = backend
        self.noise = replace(cfg.noise, seed=int(seed))
        self.trace = RunTrace(cfg.id, int(seed), cfg.ablation)
        self.scene = cfg.scene
        self.version = 0
        self.pending = list(cfg.obstacles) if with_obstacles else []
        self.injected: list = []
        self.frames = 0
        self.gen_count = 0
        self.attempts: dict = {}
        self.nav = scene_nav_grid(cfg.scene, cfg.nav_cell, cfg.clearance, cfg.ground_z, cfg.bounds_xy)

    # -- scene views
    @property
    def aware_tags(self) -> list:
        return [o.spec.tag for o in self.injected] if self.cfg.obstacle_aware else []

    @property
    def agent_scene(self) -> SceneMesh:
        return self.scene if self.cfg.obstacle_aware else self.cfg.scene

    def inject(self, head: HumanState) -> bool:
        fired = []
        for o in self.pending:
            if o.trigger == "at-start":
                fired.append(o)
            elif np.hypot(*(head.root_translation[:2] - o.center()[:2])) <= o.distance:
                fired.append(o)
        for o in fired:
            self.pending.remove(o)
            self.scene = place_obstacle(self.scene, o.spec)
            self.injected.append(o)
            self.version += 1
            self.trace.log(self.frames, "obstacle_injected", tag=o.spec.tag, scene_version=self.version)
        return bool(fired) and self.cfg.obstacle_aware

    # -- generation
    def generate(self, graph: G.InteractionGraph, unit: ActionUnit) -> tuple:
        head = graph.head_node
        k = self.attempts.get(head.id, 0)
        self.attempts[head.id] = k + 1
        key = (self.cfg.key, head.id, k)
        try:
            clip = execute_action(head.human, unit, self.scene, self.noise, self.cfg.generator,
                                  key=key, source_node=head.id)
        except GeneratorError:
            if unit.verb is not Verb.CUSTOM_TEXT:
                raise
            fallback, _ = straight_walk_unit(head.human, unit.target, self.cfg.generator)
            self.trace.log(self.frames, "fallback", reason="custom_text", verb=fallback.verb.value)
            unit = fallback
            clip = execute_action(head.human, unit, self.scene, self.noise, self.cfg.generator,
                                  key=key, source_node=head.id)
        room = self.cfg.frame_budget - self.frames
        exhausted = clip.duration > room
        if exhausted:
            clip = clip.head(room)
            clip.incomplete = True
        self.frames += clip.duration
        gid = self.gen_count
        self.gen_count += 1
        self.trace.log(self.frames, "clip_generated", gen=gid, node=head.id, verb=unit.verb.value,
                       frames=clip.duration, extra=clip.extra_frames, incomplete=clip.incomplete)
        return unit, clip, gid, exhausted

    def critic_context(self, unit: ActionUnit, milestone: Milestone, replan) -> A.CriticContext:
        poly = np.array([unit.start_position[:2], unit.end_position[:2]])
        return A.CriticContext(unit, poly, milestone.position, self.agent_scene, tuple(self.aware_tags), replan)


def _milestone_units(run: _Run, graph, milestone: Milestone, poly, attempt: int):
    cfg = run.cfg
    head = graph.head_node.human
    if not cfg.planner:
        u = ActionUnit(Verb.CUSTOM_TEXT, 90, head.root_translation, head.root_yaw, milestone.position,
                       description=milestone.label)
        return ActionChain([u])
    if attempt > 0:
        poly = A.reroute(run.nav, head, milestone, poly)
    return run.backend.plan_chain(head, milestone, poly, run.agent_scene, run.aware_tags)


def _execute_milestone(run: _Run, graph, key_plan, k: int) -> None:
    cfg = run.cfg
    trace = run.trace
    milestone, poly = key_plan.milestones[k], key_plan.trajectories[k]
    key_id = graph.key_order[k]
    max_attempts = MAX_ATTEMPTS if (cfg.critic and cfg.planner) else 1
    attempt = 0
    while graph.key_cursor == k and attempt < max_attempts:
        chain = _milestone_units(run, graph, milestone, poly, attempt)
        attempt += 1
        trace.log(run.frames, "plan_issued", kind="chain", milestone=k, attempt=attempt, verbs=chain.verbs)
        replan = False
        for j, unit in enumerate(chain):
            if run.inject(graph.head_node.human) and cfg.planner:
                replan = True
                break
            arrive = j == len(chain) - 1
            src = graph.head
            unit, clip, gid, exhausted = run.generate(graph, unit)
            G.extend(graph, unit, clip, clip.last, arrive=arrive, scene_version=run.version)
            if exhausted:
                trace.log(run.frames, "budget_exhausted", budget=cfg.frame_budget)
                raise _Budget()
            if not cfg.critic:
                if graph.key_cursor != k:
                    break
                continue
            ctx_replan = (lambda s, m=milestone, p=poly: run.backend.plan_chain(
                s, m, A.reroute(run.nav, s, m, p), run.agent_scene, run.aware_tags)) if cfg.planner else None
            ctx = run.critic_context(unit, milestone, ctx_replan)
            try:
                cr = run.backend.critique(clip, ctx)
            except A.ContractError:
                cr = A.Critique("replan", 0, 0.0, None, None, {})
            trace.log(run.frames, "critique", gen=gid, verdict=cr.verdict, kept=cr.kept_frame,
                      yaw=round(cr.corrective_yaw, 12),
                      camera=None if cr.camera is None else cr.camera.azimuth)
            if cr.verdict == "replan":
                n = G.prune_after(graph, src)
                trace.log(run.frames, "pruning", gen=gid, count=n, node=src)
                replan = True
                break
            before = graph.head
            kept, pruned = A.apply_correction(graph, clip, cr, arrive=arrive)
            if pruned:
                trace.log(run.frames, "pruning", gen=gid, count=pruned, node=src, replaced=before)
            if cr.corrective_yaw != 0.0:
                trace.log(run.frames, "correction", gen=gid, yaw=round(cr.corrective_yaw, 12))
            if graph.key_cursor != k:
                break
            dev = np.hypot(*(graph.head_node.human.root_translation[:2] - unit.end_position[:2]))
            if cr.verdict == "backtrack" or cr.corrective_yaw != 0.0 or dev > REPLAN_DEVIATION:
                replan = cfg.planner
                if replan:
                    break
        if graph.key_cursor != k:
            trace.log(run.frames, "milestone_reached", milestone=k, node=key_id)
            return
        if not replan and not cfg.critic:
            break
    if graph.key_cursor == k:
        graph.skip_key()
        trace.log(run.frames, "milestone_skipped", milestone=k, attempts=attempt)


def _path_clip(graph: G.InteractionGraph) -> MotionClip:
    clips = [graph.edges[e].clip for e in G.path_edges(graph)]
    if not clips:
        return MotionClip.from_states([graph.nodes[graph.initial].human])
    return concat_clips(clips)


def run_scenario(cfg: ScenarioConfig, seed: int, *, with_obstacles: bool = True, backend=None,
                 metrics: bool = True) -> RunTrace:
    """Execute the closed loop for one seed and return its trace."""
    backend = backend or make_backend(cfg)
    run = _Run(cfg, seed, with_obstacles, backend)
    trace = run.trace
    task = A.TaskSpec(cfg.task, cfg.start, 0, list(cfg.subgoals), list(cfg.links))
    graph = None
    try:
        key_plan = backend.navigate(task, run.nav, cfg.scene)
        trace.log(0, "plan_issued", kind="key_plan", milestones=[m.label for m in key_plan.milestones])
        graph = G.init_graph(cfg.start, 0, key_plan)
        for k in range(len(key_plan)):
            _execute_milestone(run, graph, key_plan, k)
    except _Budget:
        trace.status, trace.error = "budget", f"frame budget {cfg.frame_budget} exhausted"
    except A.PlanningError as e:
        trace.status, trace.error = "planning", str(e)
        trace.log(run.frames, "error", cls="planning", message=str(e))
    except GeneratorError as e:
        trace.status, trace.error = "generator", str(e)
        trace.log(run.frames, "error", cls="generator", message=str(e))
    except Exception as e:                      # noqa: BLE001 - recorded, never fatal
        from .remote import BackendError
        if not isinstance(e, BackendError):
            raise
        trace.status, trace.error = "backend", str(e)
        trace.log(run.frames, "error", cls="backend", message=str(e))
    trace.graph = graph
    report = M.MetricsReport(cfg.id, int(seed), cfg.ablation, status=trace.status, frames=run.frames,
                             prunings=trace.count("pruning"))
    if graph is not None:
        G.check_invariants(graph)
        clip = _path_clip(graph)
        trace.path_clip = clip
        report.goal_completion = M.goal_completion(graph)
        if metrics:
            report.p_score = M.penetration_score(clip, run.scene, report=report.warnings)
            report.fs = M.foot_sliding(clip, ground_z=cfg.ground_z) if len(clip) > 1 else 0.0
            if run.injected:
                report.pos = M.penetration_obstacle_score(clip, run.scene, [o.spec.tag for o in run.injected],
                                                          report=report.warnings)
    trace.report = report
    return trace


# ---------------------------------------------------------------- experiments

def ablation_variants(cfg: ScenarioConfig, ablations=("full", "no_critic", "no_planner")) -> list:
    out = []
    for name in ablations:
        if name == "full":
            out.append(replace(cfg, critic=True, planner=True))
        elif name == "no_critic":
            out.append(replace(cfg, critic=False, planner=True))
        elif name == "no_planner":
            out.append(replace(cfg, critic=True, planner=False))
        else:
            raise ConfigError(f"unknown ablation '{name}'")
    return out


@dataclass
class SuiteResult:
    reports: list
    aggregate: list
    traces: list

    def csv(self) -> str:
        return M.to_csv([r.row() for r in self.reports] + self.aggregate)


def run_suite(configs, seeds=None, ablations=("full",), diversity: bool = True) -> SuiteResult:
    """All (config × ablation × seed) runs plus a per-ablation aggregate."""
    configs = list(configs)
    if not configs:
        raise ConfigError("suite needs at least one config")
    reports, traces = [], []
    for cfg in configs:
        for variant in ablation_variants(cfg, ablations):
            run_seeds = list(variant.seeds if seeds is None else seeds)
            group = []
            for s in run_seeds:
                tr = run_scenario(variant, s)
                traces.append(tr)
                group.append(tr)
            if diversity and len(group) >= 2:
                clips = [t.path_clip for t in group if t.path_clip is not None]
                div = M.diversity(clips) if len(clips) >= 2 else None
                for t in group:
                    t.report.diversity = div
            reports += [t.report for t in group]
    return SuiteResult(reports, M.aggregate(reports), traces)


@dataclass
class ObstacleResult:
    with_trace: RunTrace
    without_trace: RunTrace
    pos: float
    rds: float


def obstacle_experiment(cfg: ScenarioConfig, seed: int, *, aware: bool | None = None, backend=None) -> ObstacleResult:
    """Paired runs on one seed, with and without the injected obstacles."""
    if not cfg.obstacles:
        raise ConfigError(f"{cfg.id}: obstacle experiment needs at least one obstacle injection")
    if aware is not None:
        cfg = replace(cfg, obstacle_aware=aware)
    with_tr = run_scenario(cfg, seed, with_obstacles=True, backend=backend)
    without_tr = run_scenario(cfg, seed, with_obstacles=False, backend=backend)
    pos = with_tr.report.pos or 0.0
    rds = M.reaction_divergence(with_tr.path_clip, without_tr.path_clip)
    with_tr.report.rds = rds
    return ObstacleResult(with_tr, without_tr, pos, rds)
