"""Regenerate the fixture scenes and scenario configs in this directory.

These are original desk-scale fixtures, not SceneBench assets.  Run from
anywhere: ``python3 scenarios/build_fixtures.py``.
"""

import json
from pathlib import Path

from hsigraph.scene import SceneMesh, box_mesh, dump_mesh

HERE = Path(__file__).resolve().parent
NOTE = "Original fixture scene built by build_fixtures.py; not a SceneBench instance."

INTERACTION_NOISE = {"trans_sigma": 0.0, "yaw_sigma": 0.15, "p_extra": 0.3}
OBSTACLE_NOISE = {"trans_sigma": 0.02, "yaw_sigma": 0.05, "p_extra": 0.1}


def room(w, d, extra=None, h=2.5, t=0.1):
    """Floor slab plus four walls enclosing [0, w] x [0, d]."""
    parts = {
        "floor": box_mesh([w / 2, d / 2, -0.05], [w + 2 * t, d + 2 * t, 0.1]),
        "wall_s": box_mesh([w / 2, -t / 2, h / 2], [w + 2 * t, t, h]),
        "wall_n": box_mesh([w / 2, d + t / 2, h / 2], [w + 2 * t, t, h]),
        "wall_w": box_mesh([-t / 2, d / 2, h / 2], [t, d, h]),
        "wall_e": box_mesh([w + t / 2, d / 2, h / 2], [t, d, h]),
    }
    parts.update(extra or {})
    return SceneMesh.from_objects(parts)


def write_scene(name, mesh):
    path = HERE / "meshes" / f"{name}.mesh"
    path.parent.mkdir(exist_ok=True)
    path.write_text(dump_mesh(mesh))
    return f"../meshes/{name}.mesh"


def write_config(folder, cfg):
    path = HERE / folder / f"{cfg['id']}.json"
    path.parent.mkdir(exist_ok=True)
    path.write_text(json.dumps(cfg, indent=2) + "\n")


def base(id_, scene, w, d, start, task, subgoals, noise, **kw):
    cfg = {"schema": "hsigraph-scenario/1", "id": id_, "note": NOTE, "scene": scene,
           "bounds_xy": [[0.0, 0.0], [w, d]], "start": start, "task": task, "subgoals": subgoals,
           "noise": noise, "seeds": [0, 1, 2, 3, 4], "frame_budget": 3000}
    cfg.update(kw)
    return cfg


def interaction():
    # 1. long corridor walk with a turn
    s = write_scene("hall", room(12.0, 5.0, {"bench": box_mesh([6.0, 4.4, 0.25], [2.0, 0.5, 0.5])}))
    write_config("interaction", base(
        "hall_walk", s, 12.0, 5.0, {"position": [1.0, 1.0], "yaw_deg": 0.0},
        "walk to the far end of the hall, then to the window",
        [{"position": [10.5, 1.0], "label": "arrive far end"},
         {"position": [10.5, 3.5], "label": "arrive window", "facing_deg": 90.0}],
        INTERACTION_NOISE))
    # 2. living room: sit on the sofa
    s = write_scene("living_room", room(7.0, 6.0, {
        "sofa": box_mesh([3.5, 5.45, 0.2], [2.2, 0.9, 0.4]),
        "sofa_back": box_mesh([3.5, 5.85, 0.5], [2.2, 0.2, 1.0]),
        "table": box_mesh([3.5, 3.0, 0.25], [1.2, 0.8, 0.5]),
    }))
    write_config("interaction", base(
        "living_room_sit", s, 7.0, 6.0, {"position": [1.0, 1.0], "yaw_deg": 0.0},
        "walk around the coffee table and sit on the sofa",
        [{"position": [3.5, 4.6], "label": "sit on sofa", "facing_deg": -90.0}],
        INTERACTION_NOISE))
    # 3. office: reach for a shelf behind the desk
    s = write_scene("office", room(6.0, 6.0, {
        "desk": box_mesh([3.0, 3.0, 0.38], [2.4, 1.0, 0.76]),
        "shelf": box_mesh([5.7, 5.0, 0.9], [0.4, 1.2, 1.8]),
    }))
    write_config("interaction", base(
        "office_reach", s, 6.0, 6.0, {"position": [1.0, 1.0], "yaw_deg": 90.0},
        "go around the desk and take a folder from the shelf",
        [{"position": [5.0, 5.0], "label": "reach folder", "facing_deg": 0.0}],
        INTERACTION_NOISE))
    # 4. two rooms joined by a doorway
    wall_parts = {"divider_a": box_mesh([4.0, 1.25, 1.25], [0.2, 2.5, 2.5]),
                  "divider_b": box_mesh([4.0, 5.25, 1.25], [0.2, 1.5, 2.5])}
    s = write_scene("two_rooms", room(8.0, 6.0, wall_parts))
    write_config("interaction", base(
        "doorway_pass", s, 8.0, 6.0, {"position": [1.0, 1.0], "yaw_deg": 0.0},
        "walk through the doorway into the next room and wait by the wall",
        [{"position": [4.0, 3.5], "label": "arrive doorway"},
         {"position": [7.0, 1.0], "label": "wait by the wall", "facing_deg": -90.0}],
        INTERACTION_NOISE))
    # 5. climb a ladder onto a platform
    s = write_scene("yard", room(8.0, 6.0, {"platform": box_mesh([6.5, 3.0, 0.75], [2.2, 3.0, 1.5])}))
    write_config("interaction", base(
        "platform_climb", s, 8.0, 6.0, {"position": [1.0, 3.0], "yaw_deg": 0.0},
        "walk to the ladder and climb onto the platform",
        [{"position": [6.3, 3.0], "floor": 1.5, "label": "climb onto platform"}],
        INTERACTION_NOISE,
        links=[{"kind": "ladder", "bottom": [4.9, 3.0, 0.0], "top": [6.3, 3.0, 1.5]}]))
    # 6. kitchen: several milestones in sequence
    s = write_scene("kitchen", room(8.0, 6.0, {
        "counter": box_mesh([4.0, 5.6, 0.45], [4.0, 0.6, 0.9]),
        "island": box_mesh([4.0, 2.8, 0.45], [2.0, 1.0, 0.9]),
        "stool": box_mesh([7.2, 1.0, 0.3], [0.4, 0.4, 0.6]),
    }))
    write_config("interaction", base(
        "kitchen_routine", s, 8.0, 6.0, {"position": [1.0, 1.0], "yaw_deg": 0.0},
        "fetch a cup from the counter, then sit down by the window",
        [{"position": [3.0, 4.6], "label": "reach cup", "facing_deg": 90.0},
         {"position": [6.4, 1.0], "label": "sit by window", "facing_deg": 180.0}],
        INTERACTION_NOISE))


def obstacles():
    s = write_scene("open_room", room(9.0, 5.0))
    start = {"position": [1.0, 2.5], "yaw_deg": 0.0}
    goal = [{"position": [8.0, 2.5], "label": "arrive east wall"}]
    cases = [
        ("pumpkin_path", [{"tag": "pumpkin", "box": [0.4, 0.4, 0.3], "translation": [4.5, 2.5, 0.0]}]),
        ("box_offset", [{"tag": "box", "box": [0.5, 0.5, 0.35], "translation": [4.0, 2.8, 0.0]}]),
        ("log_across", [{"tag": "log", "box": [0.25, 1.2, 0.2], "translation": [5.0, 2.5, 0.0],
                         "yaw_deg": 10.0}]),
        ("late_pumpkin", [{"tag": "pumpkin", "box": [0.4, 0.4, 0.3], "translation": [5.5, 2.5, 0.0],
                           "trigger": {"within": 3.0}}]),
        ("two_crates", [{"tag": "crate_a", "box": [0.4, 0.4, 0.3], "translation": [3.5, 2.5, 0.0]},
                        {"tag": "crate_b", "box": [0.4, 0.4, 0.3], "translation": [6.0, 2.4, 0.0]}]),
        ("low_bucket", [{"tag": "bucket", "box": [0.3, 0.3, 0.25], "translation": [4.2, 2.35, 0.0],
                         "yaw_deg": 45.0, "seen": False}]),
    ]
    for id_, obs in cases:
        write_config("obstacles", base(
            id_, s, 9.0, 5.0, start, "walk across the room to the east wall", goal, OBSTACLE_NOISE,
            obstacles=obs))


if __name__ == "__main__":
    interaction()
    obstacles()
