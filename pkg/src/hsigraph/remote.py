"""Remote agent backend: JSON over HTTP POST, validated before use.

The wire format is ``hsigraph-remote/1`` (``schemas/remote.schema.json``).
Requests carry geometric summaries only: the nav grid as run-length rows,
the head state, the task text and a digest of the executed history.
Responses are schema-checked, then geometry-checked (reachability on the
nav grid, the 90-frame unit bound, frame indices inside the clip).  An
invalid response is retried twice before the last error is raised.
"""

from __future__ import annotations

import hashlib
import json
import urllib.error
import urllib.request
from pathlib import Path

import jsonschema
import numpy as np

from . import agents as A
from .actions import MAX_UNIT_FRAMES, ActionChain, ActionError, ActionUnit, KeyPlan, Milestone, VerticalLink
from .kinematics import HumanState
from .scene import NavGrid

WIRE_VERSION = "hsigraph-remote/1"
RETRIES = 2

_SCHEMA = json.loads((Path(__file__).with_name("schemas") / "remote.schema.json").read_text())


class BackendError(RuntimeError):
    """Base class; ``payload`` holds the raw response bytes when there were any."""

    def __init__(self, message: str, payload: bytes | None = None):
        super().__init__(message)
        self.payload = payload


class TransportError(BackendError):
    pass


class SchemaViolation(BackendError):
    pass


class ValidationFailure(BackendError):
    pass


def urllib_transport(url: str, body: bytes, timeout: float) -> bytes:
    req = urllib.request.Request(url, data=body, headers={"Content-Type": "application/json"}, method="POST")
    try:
        with urllib.request.urlopen(req, timeout=timeout) as resp:
            return resp.read()
    except urllib.error.HTTPError as e:
        raise TransportError(f"HTTP {e.code} from {url}", e.read()) from None
    except (urllib.error.URLError, OSError) as e:
        raise TransportError(f"cannot reach {url}: {e}") from None


# ---------------------------------------------------------------- encoding

def encode_nav(nav: NavGrid) -> dict:
    """Walkable bitmap as per-row run lengths, starting with a blocked run."""
    rows = []
    for row in nav.walkable:
        runs, cur, n = [], False, 0
        for v in row:
            if bool(v) == cur:
                n += 1
            else:
                runs.append(n)
                cur, n = bool(v), 1
        runs.append(n)
        rows.append(runs)
    return {"origin": [float(x) for x in nav.origin], "cell": nav.cell, "shape": list(nav.shape),
            "clearance": nav.clearance, "rows": rows}


def decode_nav(d: dict) -> NavGrid:
    nx, ny = d["shape"]
    walk = np.zeros((nx, ny), dtype=bool)
    for i, runs in enumerate(d["rows"]):
        j, cur = 0, False
        for n in runs:
            walk[i, j:j + n] = cur
            j += n
            cur = not cur
    return NavGrid(walk, np.asarray(d["origin"], dtype=np.float64), float(d["cell"]), float(d["clearance"]))


def encode_state(s: HumanState) -> dict:
    return {"position": [float(x) for x in s.root_translation], "yaw": float(s.root_yaw)}


def encode_link(ln: VerticalLink) -> dict:
    return {"kind": ln.kind, "bottom": [float(x) for x in ln.bottom], "top": [float(x) for x in ln.top]}


def encode_milestone(m: Milestone) -> dict:
    d = {"position": [float(x) for x in m.position], "label": m.label}
    if m.facing is not None:
        d["facing"] = float(m.facing)
    if m.link is not None:
        d["link"] = encode_link(m.link)
    return d


def decode_milestone(d: dict) -> Milestone:
    link = d.get("link")
    return Milestone(d["position"], d["label"], d.get("facing"),
                     None if link is None else VerticalLink(link["kind"], link["bottom"], link["top"]))


def history_digest(items) -> str:
    h = hashlib.sha256()
    for it in items:
        h.update(json.dumps(it, sort_keys=True).encode())
    return h.hexdigest()[:16]


# ---------------------------------------------------------------- validation

def _check(instance: dict, ref: str, raw: bytes) -> None:
    schema = {"$ref": f"#/$defs/{ref}", "$defs": _SCHEMA["$defs"]}
    try:
        jsonschema.validate(instance, schema)
    except jsonschema.ValidationError as e:
        raise SchemaViolation(f"{ref}: {e.message}", raw) from None


def validate_key_plan(resp: dict, nav: NavGrid, start: HumanState, raw: bytes) -> KeyPlan:
    milestones = [decode_milestone(m) for m in resp["milestones"]]
    trajs = [np.asarray(t, dtype=np.float64) for t in resp["trajectories"]]
    if len(milestones) != len(trajs):
        raise ValidationFailure("one trajectory per milestone is required", raw)
    if nav.cell_of(trajs[0][0]) != nav.cell_of(start.root_translation[:2]):
        raise ValidationFailure("first trajectory does not start at the start cell", raw)
    for k, (m, t) in enumerate(zip(milestones, trajs)):
        walk = t[:-1] if m.link is not None else t
        for a, b in zip(walk[:-1], walk[1:]):
            if not A.line_of_sight(nav, a, b):
                raise ValidationFailure(f"milestone {k} '{m.label}' is unreachable along its trajectory", raw)
    return KeyPlan(milestones, trajs)


def validate_chain(resp: dict, raw: bytes) -> ActionChain:
    try:
        units = [ActionUnit.from_dict(u) for u in resp["units"]]
        return ActionChain(units)
    except (ActionError, ValueError, KeyError) as e:
        raise ValidationFailure(f"action chain: {e}", raw) from None


def validate_critique(resp: dict, clip_frames: int, raw: bytes) -> A.Critique:
    i = int(resp["kept_frame"])
    if i > clip_frames:
        raise ValidationFailure(f"kept frame {i} beyond clip duration {clip_frames}", raw)
    chain = None
    if resp["verdict"] == "replan":
        if "adjusted_chain" not in resp:
            raise ValidationFailure("replan verdict without an adjusted chain", raw)
        chain = validate_chain(resp["adjusted_chain"], raw)
    cam = None
    if "camera" in resp:
        c = resp["camera"]
        cam = A.CameraPose(np.asarray(c["position"], float), np.asarray(c["look_at"], float),
                           int(c.get("azimuth", -1)), bool(c.get("degraded", False)))
    if resp["verdict"] == "accept" and i != clip_frames:
        raise ValidationFailure("accept verdict must keep the last frame", raw)
    return A.Critique(resp["verdict"], i, float(resp.get("corrective_yaw", 0.0)), cam, chain)


# ---------------------------------------------------------------- backend

class RemoteBackend:
    """Agents served by an external endpoint; same interface as ``RuleBackend``."""

    name = "remote"

    def __init__(self, endpoint: str, transport=urllib_transport, timeout: float = 30.0, retries: int = RETRIES):
        if not endpoint:
            raise ValueError("remote backend needs an endpoint")
        self.endpoint = endpoint
        self.transport = transport
        self.timeout = timeout
        self.retries = retries
        self.history: list = []
        self.calls = 0

    def remote_call(self, agent: str, payload: dict, accept):
        """POST one request; ``accept(resp, raw)`` turns a schema-valid response into a value."""
        request = {"schema": WIRE_VERSION, "agent": agent, "history": history_digest(self.history), **payload}
        _check(request, "request", b"")
        body = json.dumps(request, sort_keys=True).encode()
        last = None
        for _ in range(self.retries + 1):
            self.calls += 1
            raw = self.transport(self.endpoint, body, self.timeout)
            try:
                resp = json.loads(raw)
            except (json.JSONDecodeError, UnicodeDecodeError):
                last = SchemaViolation("response is not JSON", raw)
                continue
            try:
                if not isinstance(resp, dict) or resp.get("schema") != WIRE_VERSION or resp.get("agent") != agent:
                    raise SchemaViolation(f"response is not a {WIRE_VERSION} {agent} reply", raw)
                _check(resp, f"{agent}_response", raw)
                value = accept(resp, raw)
            except (SchemaViolation, ValidationFailure) as e:
                last = e
                continue
            self.history.append({"agent": agent, "response": resp})
            return value
        raise last

    def navigate(self, task: A.TaskSpec, nav: NavGrid, scene=None) -> KeyPlan:
        payload = {"task": task.text, "head": encode_state(task.start), "nav": encode_nav(nav),
                   "subgoals": [encode_milestone(m) for m in task.subgoals],
                   "links": [encode_link(ln) for ln in task.links]}
        return self.remote_call("navigator", payload, lambda r, raw: validate_key_plan(r, nav, task.start, raw))

    def plan_chain(self, state, milestone, polyline, scene=None, obstacles=()) -> ActionChain:
        payload = {"head": encode_state(state), "milestone": encode_milestone(milestone),
                   "polyline": [[float(x), float(y)] for x, y in polyline], "obstacles": list(obstacles),
                   "max_unit_frames": MAX_UNIT_FRAMES}
        return self.remote_call("planner", payload, lambda r, raw: validate_chain(r, raw))

    def critique(self, clip, ctx: A.CriticContext) -> A.Critique:
        payload = {"head": encode_state(clip.first), "unit": ctx.unit.to_dict(),
                   "polyline": [[float(x), float(y)] for x, y in ctx.polyline],
                   "target": [float(x) for x in ctx.target],
                   "clip": {"root": clip.root.tolist(), "yaw": clip.yaw.tolist()}}
        return self.remote_call("critic", payload, lambda r, raw: validate_critique(r, clip.duration, raw))
