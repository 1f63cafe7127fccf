"""The interaction graph: key/non-key nodes joined by executed action edges.

Elements are never deleted.  Pruning flips their status so traces of
discarded motion survive for reporting.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .actions import ActionUnit, KeyPlan
from .kinematics import HumanState, MotionClip, wrap_angle

GOAL_RADIUS = 0.5
GOAL_HEADING = math.radians(30.0)

KEY, NONKEY = "key", "non-key"
PLANNED, REACHED, PRUNED = "planned", "reached", "pruned"
EXECUTED = "executed"


class GraphError(ValueError):
    pass


@dataclass
class GraphNode:
    id: int
    human: HumanState
    scene_version: int
    timestamp: int
    kind: str
    status: str
    label: str | None = None
    facing: float | None = None
    planned_human: HumanState | None = None


@dataclass
class GraphEdge:
    id: int
    src: int
    dst: int
    action: ActionUnit
    clip: MotionClip | None
    status: str = EXECUTED


@dataclass
class InteractionGraph:
    nodes: dict = field(default_factory=dict)
    edges: dict = field(default_factory=dict)
    head: int = 0
    initial: int = 0
    key_order: list = field(default_factory=list)
    key_cursor: int = 0
    goal_radius: float = GOAL_RADIUS
    goal_heading: float = GOAL_HEADING
    _next_id: int = 0

    def _new_id(self) -> int:
        i = self._next_id
        self._next_id += 1
        return i

    @property
    def head_node(self) -> GraphNode:
        return self.nodes[self.head]

    @property
    def next_key(self) -> GraphNode | None:
        """First milestone (after the start node) not yet reached or skipped."""
        if self.key_cursor < len(self.key_order):
            return self.nodes[self.key_order[self.key_cursor]]
        return None

    def within_goal(self, state: HumanState, node: GraphNode) -> bool:
        target = node.planned_human.root_translation if node.planned_human is not None else node.human.root_translation
        if np.hypot(*(state.root_translation[:2] - target[:2])) > self.goal_radius + 1e-12:
            return False
        if node.facing is not None and abs(float(wrap_angle(state.root_yaw - node.facing))) > self.goal_heading:
            return False
        return True

    def incoming(self, node_id: int) -> GraphEdge | None:
        for e in self.edges.values():
            if e.dst == node_id and e.status == EXECUTED:
                return e
        return None

    def outgoing(self, node_id: int) -> GraphEdge | None:
        for e in self.edges.values():
            if e.src == node_id and e.status == EXECUTED:
                return e
        return None

    def skip_key(self) -> int | None:
        """Give up on the current milestone; it stays ``planned``."""
        node = self.next_key
        if node is None:
            return None
        self.key_cursor += 1
        return node.id

    def append_key(self, state: HumanState, label: str, facing=None, scene_version: int = 0) -> int:
        nid = self._new_id()
        self.nodes[nid] = GraphNode(nid, state, scene_version, -1, KEY, PLANNED, label, facing, state)
        self.key_order.append(nid)
        return nid

    def reached_keys(self) -> list:
        return [k for k in self.key_order if self.nodes[k].status == REACHED]


def init_graph(start: HumanState, scene_version: int, key_plan: KeyPlan) -> InteractionGraph:
    if key_plan is None or len(key_plan) == 0:
        raise GraphError("key plan is empty")
    g = InteractionGraph()
    nid = g._new_id()
    g.nodes[nid] = GraphNode(nid, start.copy(), scene_version, 0, KEY, REACHED, "start")
    g.head = g.initial = nid
    for m in key_plan.milestones:
        yaw = m.facing if m.facing is not None else start.root_yaw
        planned = HumanState(m.position.copy(), yaw, shape=start.shape.copy())
        g.append_key(planned, m.label, m.facing, scene_version)
    return g


def extend(graph: InteractionGraph, action: ActionUnit, clip: MotionClip, new_state: HumanState,
           *, arrive: bool = True, scene_version: int | None = None) -> int:
    """Append an executed edge from the head.

    With ``arrive`` set and ``new_state`` inside the goal tolerance of the
    next milestone, that key node is bound to ``new_state`` and becomes the
    head; otherwise a fresh non-key node does.
    """
    head = graph.head_node
    if clip.source_node != head.id:
        raise GraphError(f"clip was generated from node {clip.source_node}, head is {head.id}")
    if not clip.first == head.human:
        raise GraphError("clip's first frame does not match the head state")
    version = head.scene_version if scene_version is None else scene_version
    ts = head.timestamp + clip.duration
    key = graph.next_key
    if arrive and key is not None and graph.within_goal(new_state, key):
        key.human = new_state.copy()
        key.status = REACHED
        key.timestamp = ts
        key.scene_version = version
        graph.key_cursor += 1
        dst = key.id
    else:
        dst = graph._new_id()
        graph.nodes[dst] = GraphNode(dst, new_state.copy(), version, ts, NONKEY, REACHED)
    eid = graph._new_id()
    graph.edges[eid] = GraphEdge(eid, head.id, dst, action, clip)
    graph.head = dst
    return dst


def current_path(graph: InteractionGraph) -> list:
    """Alternating ``[node, edge, node, ...]`` ids from the start node to the head."""
    out_edge = {e.src: e for e in graph.edges.values() if e.status == EXECUTED}
    path = [graph.initial]
    node = graph.initial
    seen = {node}
    while node != graph.head:
        e = out_edge.get(node)
        if e is None:
            raise GraphError(f"executed path broken after node {node}")
        path += [e.id, e.dst]
        node = e.dst
        if node in seen:
            raise GraphError("executed edges form a cycle")
        seen.add(node)
    return path


def path_nodes(graph: InteractionGraph) -> list:
    return current_path(graph)[0::2]


def path_edges(graph: InteractionGraph) -> list:
    return current_path(graph)[1::2]


def prune_after(graph: InteractionGraph, node_id: int) -> int:
    """Soft-delete everything on the executed path after ``node_id``.

    Reached milestones after the cut revert to ``planned`` (and count as
    pruned elements); planned key nodes are never marked pruned.
    """
    path = current_path(graph)
    nodes = path[0::2]
    if node_id not in nodes:
        raise GraphError(f"node {node_id} is not on the executed path")
    cut = path.index(node_id)
    count = 0
    for k, el in enumerate(path[cut + 1:]):
        if k % 2 == 0:
            graph.edges[el].status = PRUNED
            count += 1
        else:
            n = graph.nodes[el]
            if n.kind == KEY:
                n.status = PLANNED
                n.human = n.planned_human.copy()
                n.timestamp = -1
                idx = graph.key_order.index(n.id)
                graph.key_cursor = min(graph.key_cursor, idx)
            else:
                n.status = PRUNED
            count += 1
    graph.head = node_id
    return count


def replace_head_clip(graph: InteractionGraph, clip: MotionClip) -> None:
    """Swap the head's incoming clip for a same-length corrected one and rebind the head state."""
    e = graph.incoming(graph.head)
    if e is None:
        raise GraphError("head has no incoming edge")
    if len(clip) != len(e.clip):
        raise GraphError("replacement clip changes the frame count")
    e.clip = clip
    graph.head_node.human = clip.last


def check_invariants(graph: InteractionGraph) -> None:
    """Raise ``GraphError`` on the first violated structural invariant."""
    if graph.head not in graph.nodes:
        raise GraphError("head does not exist")
    if graph.nodes[graph.head].status == PRUNED:
        raise GraphError("head is pruned")
    if graph.nodes[graph.head].status != REACHED:
        raise GraphError("head is not reached")
    path = current_path(graph)
    ts = [graph.nodes[n].timestamp for n in path[0::2]]
    if any(b < a for a, b in zip(ts, ts[1:])):
        raise GraphError("timestamps decrease along the path")
    for k in range(1, len(path), 2):
        e = graph.edges[path[k]]
        if e.status != EXECUTED or graph.nodes[e.src].status == PRUNED or graph.nodes[e.dst].status == PRUNED:
            raise GraphError("pruned element on the executed path")
        if e.src == e.dst:
            raise GraphError("self loop")
    for e in graph.edges.values():
        if e.src not in graph.nodes or e.dst not in graph.nodes:
            raise GraphError(f"edge {e.id} references a missing node")
    for k in graph.key_order:
        n = graph.nodes[k]
        if n.kind != KEY or not n.label:
            raise GraphError("key node without a milestone label")
        if n.status == PRUNED:
            raise GraphError("key node pruned")


def _state_record(s: HumanState) -> dict:
    return {"position": [float(x) for x in s.root_translation], "yaw": float(s.root_yaw)}


def export_records(graph: InteractionGraph) -> list:
    """One dict per node and edge, ordered by id."""
    out = []
    for nid in sorted(graph.nodes):
        n = graph.nodes[nid]
        out.append({"type": "node", "id": n.id, "kind": n.kind, "status": n.status, "label": n.label,
                    "timestamp": n.timestamp, "scene_version": n.scene_version,
                    "head": n.id == graph.head, **_state_record(n.human)})
    for eid in sorted(graph.edges):
        e = graph.edges[eid]
        out.append({"type": "edge", "id": e.id, "from": e.src, "to": e.dst, "status": e.status,
                    "verb": e.action.verb.value, "frames": None if e.clip is None else e.clip.duration})
    return out


def export_jsonl(graph: InteractionGraph) -> str:
    return "".join(json.dumps(r, sort_keys=True) + "\n" for r in export_records(graph))
