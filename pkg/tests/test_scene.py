import math
from collections import deque

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hsigraph import _kernels_py, kernels
from hsigraph.scene import (MeshParseError, ObstacleSpec, ResourceError, SceneMesh, TagCollisionError,
                            UnsupportedQueryError, box_mesh, dump_mesh, load_scene, nav_grid, parse_mesh,
                            place_obstacle, point_inside, points_inside, raycast, scene_nav_grid, voxelize)

from conftest import SCENARIOS, open_room

CUBE = """MESHv1
o cube
v -0.5 -0.5 -0.5
v -0.5 -0.5 0.5
v -0.5 0.5 -0.5
v -0.5 0.5 0.5
v 0.5 -0.5 -0.5
v 0.5 -0.5 0.5
v 0.5 0.5 -0.5
v 0.5 0.5 0.5
f 0 1 3
f 0 3 2
f 4 6 7
f 4 7 5
f 0 4 5
f 0 5 1
f 2 3 7
f 2 7 6
f 0 2 6
f 0 6 4
f 1 5 7
f 1 7 3
"""


def unit_cube():
    return parse_mesh(CUBE)


# ---------------------------------------------------------------- parsing


def test_parse_unit_cube(tmp_path):
    p = tmp_path / "cube.mesh"
    p.write_text(CUBE)
    m = load_scene(p)
    assert m.num_triangles == 12 and len(m.vertices) == 8
    assert m.closed == {"cube": True}


def test_parse_errors():
    with pytest.raises(MeshParseError):
        parse_mesh(CUBE.replace("f 1 7 3", "f 1 7 8"))
    with pytest.raises(MeshParseError):
        parse_mesh(CUBE.replace("MESHv1", "MESHv0"))
    with pytest.raises(MeshParseError):
        parse_mesh(CUBE.replace("v 0.5 0.5 0.5", "v 0.5 0.5"))
    with pytest.raises(MeshParseError):
        parse_mesh(CUBE + "q 1 2 3\n")


def test_two_object_tag_ranges():
    fv, ft = box_mesh([0, 0, -0.05], [4, 4, 0.1])
    m = SceneMesh.from_objects({"floor": (fv, ft), "box": box_mesh([0, 0, 0.5], [1, 1, 1])})
    back = parse_mesh(dump_mesh(m))
    assert back.objects == {"floor": (0, 12), "box": (12, 24)}
    assert np.array_equal(back.all_triangles()[0], m.all_triangles()[0])


def test_fixture_scenes_parse_and_are_closed():
    files = sorted((SCENARIOS / "meshes").glob("*.mesh"))
    assert files
    for f in files:
        m = load_scene(f)
        assert all(m.closed.values()), f.name


# ---------------------------------------------------------------- containment


def test_point_inside_examples():
    m = unit_cube()
    assert point_inside(m, [0, 0, 0])
    assert not point_inside(m, [2, 0, 0])


def test_random_points_vs_box_oracle():
    r = np.random.default_rng(0)
    m = unit_cube()
    pts = r.uniform(-2, 2, (1000, 3))
    want = np.all(np.abs(pts) < 0.5, axis=1)
    assert np.array_equal(points_inside(m, pts), want)


def test_yawed_box_vs_half_space_oracle():
    r = np.random.default_rng(1)
    v, t = box_mesh([0, 0, 0], [1.0, 0.6, 0.8])
    yaw = 0.7
    m = place_obstacle(SceneMesh.from_objects({}), ObstacleSpec(v, t, (0.3, -0.2, 0.5), yaw, "b"))
    pts = r.uniform(-1.2, 1.2, (2000, 3)) + [0.3, -0.2, 0.5]
    d = pts - [0.3, -0.2, 0.5]
    c, s = math.cos(-yaw), math.sin(-yaw)
    lx, ly = c * d[:, 0] - s * d[:, 1], s * d[:, 0] + c * d[:, 1]
    want = (np.abs(lx) < 0.5) & (np.abs(ly) < 0.3) & (np.abs(d[:, 2]) < 0.4)
    assert np.array_equal(points_inside(m, pts), want)


def test_open_mesh_containment_is_refused():
    v = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0.0]])
    m = SceneMesh.from_objects({"sheet": (v, [[0, 1, 2]])})
    with pytest.raises(UnsupportedQueryError):
        point_inside(m, [0.1, 0.1, 0.0])


def test_points_on_faces_and_edges_are_outside():
    m = unit_cube()
    pts = np.array([[0.5, 0, 0], [0.5, 0.5, 0], [0.5, 0.5, 0.5], [0, 0, -0.5]])
    assert not points_inside(m, pts).any()


# ---------------------------------------------------------------- raycast


def moller_trumbore(o, d, a, b, c):
    e1, e2 = b - a, c - a
    p = np.cross(d, e2)
    det = e1 @ p
    if abs(det) < 1e-14:
        return None
    inv = 1.0 / det
    s = o - a
    u = (s @ p) * inv
    if u < 0 or u > 1:
        return None
    q = np.cross(s, e1)
    v = (d @ q) * inv
    if v < 0 or u + v > 1:
        return None
    t = (e2 @ q) * inv
    return t if t > 1e-9 else None


def test_raycast_examples():
    m = unit_cube()
    assert raycast(m, [0, 0, 2], [0, 0, -1]) == pytest.approx(1.5, abs=1e-12)
    assert raycast(m, [0, 0, 2], [0, 0, 1]) is None
    with pytest.raises(ValueError):
        raycast(m, [0, 0, 2], [0, 0, 0])


def test_random_rays_vs_all_triangle_oracle():
    r = np.random.default_rng(2)
    m = SceneMesh.from_objects({"a": box_mesh([0, 0, 0], [1, 1, 1]), "b": box_mesh([1.5, 0.3, 0.2], [0.5, 2, 0.7])})
    v0, v1, v2 = m.all_triangles()
    for _ in range(200):
        o = r.uniform(-3, 3, 3)
        d = r.normal(size=3)
        d /= np.linalg.norm(d)
        hits = [t for t in (moller_trumbore(o, d, a, b, c) for a, b, c in zip(v0, v1, v2)) if t is not None]
        got = raycast(m, o, d)
        if hits:
            assert got == pytest.approx(min(hits), abs=1e-9)
        else:
            assert got is None


# ---------------------------------------------------------------- voxelize


def tri_box_overlap(center, half, tri):
    """Separating-axis test of a triangle against a closed axis-aligned box."""
    v = tri - center
    e = [v[1] - v[0], v[2] - v[1], v[0] - v[2]]
    axes = [np.eye(3)[i] for i in range(3)] + [np.cross(e[0], e[1])]
    axes += [np.cross(np.eye(3)[i], ej) for i in range(3) for ej in e]
    for a in axes:
        if not np.any(a):
            continue
        p = v @ a
        rad = half @ np.abs(a)
        if p.min() > rad + 1e-12 or p.max() < -rad - 1e-12:
            return False
    return True


def test_voxelize_vs_per_cell_brute_force():
    r = np.random.default_rng(3)
    tris = r.uniform(0, 1, (6, 3, 3))
    m = SceneMesh.from_objects({"soup": (tris.reshape(-1, 3), np.arange(18).reshape(6, 3))})
    occ = voxelize(m, 0.13, (np.zeros(3), np.ones(3)))
    want = np.zeros(occ.dims, dtype=bool)
    half = np.full(3, occ.cell / 2)
    for idx in np.ndindex(*occ.dims):
        c = occ.center(idx)
        want[idx] = any(tri_box_overlap(c, half, t) for t in tris)
    assert np.array_equal(occ.occupancy, want)


def test_voxelize_unit_cube_shell():
    occ = voxelize(unit_cube(), 0.5)
    assert occ.dims == (2, 2, 2) and occ.count == 8
    occ = voxelize(unit_cube(), 0.25)
    assert occ.count == 64 - 8          # interior 2x2x2 left empty


def test_voxelize_empty_and_plane():
    empty = voxelize(SceneMesh.from_objects({}), 0.5, (np.zeros(3), np.ones(3)))
    assert empty.count == 0
    v = np.array([[-1, 0.01, -1], [1, 0.01, -1], [1, 0.01, 1], [-1, 0.01, 1.0]])
    m = SceneMesh.from_objects({"plane": (v, [[0, 1, 2], [0, 2, 3]])})
    occ = voxelize(m, 0.1, (np.array([-1, -1, -1.0]), np.array([1, 1, 1.0])))
    layers = np.flatnonzero(occ.occupancy.any(axis=(0, 2)))
    assert list(layers) == [10]
    assert occ.occupancy[:, 10, :].all()


def test_voxelize_resource_limit():
    with pytest.raises(ResourceError):
        voxelize(unit_cube(), 1e-4)


def test_voxelize_conservative():
    r = np.random.default_rng(4)
    tris = r.uniform(-1, 1, (20, 3, 3))
    m = SceneMesh.from_objects({"s": (tris.reshape(-1, 3), np.arange(60).reshape(20, 3))})
    occ = voxelize(m, 0.2)
    for t in tris:
        lo = np.clip(np.floor((t.min(0) - occ.origin) / occ.cell).astype(int), 0, np.array(occ.dims) - 1)
        hi = np.clip(np.floor((t.max(0) - occ.origin) / occ.cell).astype(int), 0, np.array(occ.dims) - 1)
        assert occ.occupancy[lo[0]:hi[0] + 1, lo[1]:hi[1] + 1, lo[2]:hi[2] + 1].any()


# ---------------------------------------------------------------- nav grid


def components(walk):
    seen = np.zeros_like(walk)
    n = 0
    for start in zip(*np.nonzero(walk)):
        if seen[start]:
            continue
        n += 1
        q = deque([start])
        seen[start] = True
        while q:
            i, j = q.popleft()
            for a, b in ((i + 1, j), (i - 1, j), (i, j + 1), (i, j - 1)):
                if 0 <= a < walk.shape[0] and 0 <= b < walk.shape[1] and walk[a, b] and not seen[a, b]:
                    seen[a, b] = True
                    q.append((a, b))
    return n


def test_empty_room_all_walkable():
    nav = scene_nav_grid(open_room(5.0))
    assert nav.walkable.all()


def test_wall_splits_room():
    nav = scene_nav_grid(open_room(5.0, wall=([0, 0, 1.0], [0.2, 10.0, 2.0])))
    assert components(nav.walkable) == 2
    assert not nav.is_walkable([0, 0])


@settings(max_examples=15, deadline=None)
@given(st.floats(0, 0.6), st.floats(0, 0.6))
def test_clearance_monotone(a, b):
    a, b = sorted((a, b))
    m = open_room(3.0, pillar=([0.3, -0.2, 1.0], [0.4, 0.4, 2.0]))
    lo, hi = m.bounds()
    occ = voxelize(m, 0.1, (np.array([lo[0], lo[1], -0.05]), hi))
    wa = nav_grid(occ, a, ground_z=0.0).walkable
    wb = nav_grid(occ, b, ground_z=0.0).walkable
    assert np.all(wb <= wa)


def test_overhead_geometry_above_agent_does_not_block():
    nav = scene_nav_grid(open_room(3.0, canopy=([0, 0, 2.5], [1, 1, 0.2])))
    assert nav.is_walkable([0, 0])


# ---------------------------------------------------------------- obstacles


def test_place_obstacle_translation_and_yaw():
    v, t = box_mesh([0, 0, 0.25], [0.5, 0.5, 0.5])
    base = open_room(3.0)
    digest = base.digest()
    m = place_obstacle(base, ObstacleSpec(v, t, (2, 0, 0), 0.0, "pumpkin"))
    assert np.allclose(m.object_vertices("pumpkin").mean(0) - v.mean(0), [2, 0, 0])
    assert base.digest() == digest
    sv = np.array([[1.0, 0, 0], [0, 0.1, 0], [0, 0, 0.1], [0, 0, 0]])
    tet = np.array([[0, 1, 2], [0, 3, 1], [0, 2, 3], [1, 3, 2]])
    spec = ObstacleSpec(sv, tet, (0, 0, 0), math.pi / 2, "stick")
    assert np.allclose(spec.world_vertices()[0], [0, 1, 0], atol=1e-12)
    with pytest.raises(TagCollisionError):
        place_obstacle(m, ObstacleSpec(v, t, (0, 0, 0), 0.0, "pumpkin"))


# ---------------------------------------------------------------- backends


def test_compiled_and_python_kernels_agree():
    if kernels.BACKEND != "cython":
        pytest.skip("compiled extension not built")
    r = np.random.default_rng(5)
    m = SceneMesh.from_objects({"a": box_mesh([0, 0, 0], [1, 1, 1]), "b": box_mesh([0.7, 0.2, 0.1], [0.5, 1, 0.4])})
    v0, v1, v2 = m.all_triangles()
    pts = r.uniform(-1, 1, (500, 3))
    d = np.array([0.5773, 0.5774, 0.5773])
    a = _kernels_py.ray_parity(pts, d, v0, v1, v2)
    b = kernels.ray_parity(pts, d, v0, v1, v2)
    assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])
    for o in r.uniform(-2, 2, (50, 3)):
        assert _kernels_py.ray_nearest(o, -o / np.linalg.norm(o), v0, v1, v2) == \
            kernels.ray_nearest(o, -o / np.linalg.norm(o), v0, v1, v2)
    args = (v0, v1, v2, np.array([-1.0, -1, -1]), 0.07, (29, 29, 29))
    assert np.array_equal(np.asarray(_kernels_py.voxelize(*args), bool), np.asarray(kernels.voxelize(*args), bool))
