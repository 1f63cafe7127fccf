"""Triangle-mesh scenes and the spatial queries run against them.

Mesh file format (``MESHv1``), one record per line::

    MESHv1
    # comment
    o <name>          start a new object; following faces belong to it
    v <x> <y> <z>     vertex, meters, z-up
    f <i> <j> <k>     triangle, 0-based vertex indices

Faces before the first ``o`` line belong to an object named ``default``.
Vertices are global; an object may reference any vertex.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from . import kernels

MESH_HEADER = "MESHv1"
MAX_CELLS = 10**8
AGENT_HEIGHT = 1.8
DEFAULT_CLEARANCE = 0.3

# ray directions for containment parity; a point whose ray grazes an edge or
# vertex is re-cast with the next direction
PARITY_DIRECTIONS = np.array([
    [0.43213918, 0.59378113, 0.67861263],
    [-0.71920315, 0.24412877, 0.65048071],
    [0.12830021, -0.83018843, 0.54255913],
    [-0.35170029, -0.41939811, -0.83691224],
    [0.90183277, -0.17216032, -0.39630515],
    [-0.05381241, 0.97215302, -0.22817353],
])
PARITY_DIRECTIONS /= np.linalg.norm(PARITY_DIRECTIONS, axis=1, keepdims=True)


class MeshParseError(ValueError):
    pass


class UnsupportedQueryError(ValueError):
    pass


class ResourceError(RuntimeError):
    pass


class TagCollisionError(ValueError):
    pass


def _closed(tris: np.ndarray) -> bool:
    if len(tris) == 0:
        return False
    edges = np.sort(np.concatenate([tris[:, [0, 1]], tris[:, [1, 2]], tris[:, [2, 0]]]), axis=1)
    _, counts = np.unique(edges, axis=0, return_counts=True)
    return bool(np.all(counts == 2))


@dataclass(frozen=True, eq=False)
class SceneMesh:
    vertices: np.ndarray
    triangles: np.ndarray
    objects: dict                   # name -> (start, end) triangle range
    closed: dict = field(default_factory=dict)
    warnings: tuple = ()

    def __post_init__(self):
        v = np.ascontiguousarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        t = np.ascontiguousarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        if t.size and (t.min() < 0 or t.max() >= len(v)):
            raise MeshParseError("triangle index out of range")
        v.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "triangles", t)
        if not self.closed:
            object.__setattr__(self, "closed", {
                name: _closed(t[s:e]) for name, (s, e) in self.objects.items()
            })

    @classmethod
    def from_objects(cls, parts: dict) -> "SceneMesh":
        """Build from ``{name: (vertices, triangles)}`` with per-object local indices."""
        verts, tris, objects = [], [], {}
        nv = nt = 0
        for name, (v, t) in parts.items():
            v = np.asarray(v, dtype=np.float64).reshape(-1, 3)
            t = np.asarray(t, dtype=np.int64).reshape(-1, 3)
            verts.append(v)
            tris.append(t + nv)
            objects[name] = (nt, nt + len(t))
            nv += len(v)
            nt += len(t)
        if not verts:
            return cls(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64), {})
        return cls(np.concatenate(verts), np.concatenate(tris), objects)

    @property
    def num_triangles(self) -> int:
        return len(self.triangles)

    def object_triangles(self, name: str):
        s, e = self.objects[name]
        tri = self.triangles[s:e]
        return self.vertices[tri[:, 0]], self.vertices[tri[:, 1]], self.vertices[tri[:, 2]]

    def object_vertices(self, name: str) -> np.ndarray:
        s, e = self.objects[name]
        return self.vertices[np.unique(self.triangles[s:e])]

    def object_bounds(self, name: str):
        pts = self.object_vertices(name)
        return pts.min(axis=0), pts.max(axis=0)

    def bounds(self):
        if len(self.vertices) == 0:
            return np.zeros(3), np.zeros(3)
        used = self.vertices[np.unique(self.triangles)] if len(self.triangles) else self.vertices
        return used.min(axis=0), used.max(axis=0)

    def all_triangles(self):
        tri = self.triangles
        return self.vertices[tri[:, 0]], self.vertices[tri[:, 1]], self.vertices[tri[:, 2]]

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(self.vertices.tobytes())
        h.update(self.triangles.tobytes())
        for name in sorted(self.objects):
            h.update(f"{name}:{self.objects[name]}".encode())
        return h.hexdigest()

    def subset(self, names) -> "SceneMesh":
        parts = {}
        for name in names:
            s, e = self.objects[name]
            tri = self.triangles[s:e]
            used, local = np.unique(tri, return_inverse=True)
            parts[name] = (self.vertices[used], local.reshape(-1, 3))
        return SceneMesh.from_objects(parts)


def parse_mesh(text: str) -> SceneMesh:
    lines = text.splitlines()
    if not lines or lines[0].strip() != MESH_HEADER:
        raise MeshParseError(f"missing {MESH_HEADER} header")
    verts, tris = [], []
    objects: dict = {}
    current, start = None, 0
    for lineno, raw in enumerate(lines[1:], start=2):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        kind, *rest = line.split()
        try:
            if kind == "v":
                if len(rest) != 3:
                    raise ValueError
                verts.append([float(x) for x in rest])
            elif kind == "f":
                if len(rest) != 3:
                    raise ValueError
                if current is None:
                    current, start = "default", len(tris)
                tris.append([int(x) for x in rest])
            elif kind == "o":
                if len(rest) != 1:
                    raise ValueError
                if current is not None:
                    objects[current] = (start, len(tris))
                current, start = rest[0], len(tris)
                if current in objects:
                    raise MeshParseError(f"line {lineno}: duplicate object '{current}'")
            else:
                raise MeshParseError(f"line {lineno}: unknown record '{kind}'")
        except ValueError as exc:
            if isinstance(exc, MeshParseError):
                raise
            raise MeshParseError(f"line {lineno}: malformed '{kind}' record") from None
    if current is not None:
        objects[current] = (start, len(tris))
    v = np.array(verts, dtype=np.float64).reshape(-1, 3)
    t = np.array(tris, dtype=np.int64).reshape(-1, 3)
    if t.size and (t.min() < 0 or t.max() >= len(v)):
        bad = int(np.argmax((t < 0).any(1) | (t >= len(v)).any(1)))
        raise MeshParseError(f"triangle {bad} references a vertex out of range")
    mesh = SceneMesh(v, t, objects)
    warnings = tuple(f"object '{n}' is open; containment queries on it will fail"
                     for n, ok in mesh.closed.items() if not ok)
    object.__setattr__(mesh, "warnings", warnings)
    return mesh


def load_scene(path) -> SceneMesh:
    return parse_mesh(Path(path).read_text())


def dump_mesh(mesh: SceneMesh) -> str:
    """Serialize to MESHv1; each object re-emits only the vertices it uses."""
    out = [MESH_HEADER]
    base = 0
    for name, (s, e) in mesh.objects.items():
        tri = mesh.triangles[s:e]
        used, local = np.unique(tri, return_inverse=True)
        out.append(f"o {name}")
        out += [f"v {float(x)!r} {float(y)!r} {float(z)!r}" for x, y, z in mesh.vertices[used]]
        out += [f"f {a + base} {b + base} {c + base}" for a, b, c in local.reshape(-1, 3)]
        base += len(used)
    return "\n".join(out) + "\n"


def box_mesh(center, size):
    """Closed axis-aligned box with outward-facing triangles: ``(vertices, triangles)``."""
    c = np.asarray(center, dtype=np.float64)
    h = np.asarray(size, dtype=np.float64) / 2.0
    corners = np.array([[x, y, z] for x in (-1, 1) for y in (-1, 1) for z in (-1, 1)], dtype=np.float64)
    verts = c + corners * h
    # corner index = 4*ix + 2*iy + iz
    tris = np.array([
        [0, 1, 3], [0, 3, 2],   # -x
        [4, 6, 7], [4, 7, 5],   # +x
        [0, 4, 5], [0, 5, 1],   # -y
        [2, 3, 7], [2, 7, 6],   # +y
        [0, 2, 6], [0, 6, 4],   # -z
        [1, 5, 7], [1, 7, 3],   # +z
    ], dtype=np.int64)
    return verts, tris


def _require_closed(mesh: SceneMesh, names) -> None:
    open_ = [n for n in names if not mesh.closed.get(n, False)]
    if open_:
        raise UnsupportedQueryError(f"containment needs closed objects; open: {', '.join(open_)}")


def points_inside(mesh: SceneMesh, points, objects=None) -> np.ndarray:
    """Boolean mask: which points lie strictly inside any of ``objects``.

    Ray-crossing parity per object.  Points whose ray grazes an edge,
    vertex or passes through the point's own surface are re-cast along
    the next entry of ``PARITY_DIRECTIONS``; if every direction is
    degenerate the point is on the boundary and reported outside.
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    names = list(mesh.objects) if objects is None else list(objects)
    _require_closed(mesh, names)
    inside = np.zeros(len(pts), dtype=bool)
    for name in names:
        lo, hi = mesh.object_bounds(name)
        cand = np.flatnonzero(~inside & np.all((pts > lo) & (pts < hi), axis=1))
        if cand.size == 0:
            continue
        v0, v1, v2 = mesh.object_triangles(name)
        todo = cand
        for d in PARITY_DIRECTIONS:
            crossings, degenerate = kernels.ray_parity(pts[todo], d, v0, v1, v2)
            ok = ~degenerate
            inside[todo[ok]] = (crossings[ok] % 2) == 1
            todo = todo[degenerate]
            if todo.size == 0:
                break
    return inside


def point_inside(mesh: SceneMesh, p, objects=None) -> bool:
    return bool(points_inside(mesh, np.asarray(p, dtype=np.float64)[None, :], objects)[0])


def raycast(mesh: SceneMesh, origin, direction, objects=None):
    """Distance to the nearest positive hit, or ``None``."""
    d = np.asarray(direction, dtype=np.float64)
    n = np.linalg.norm(d)
    if n == 0.0 or not np.isfinite(n):
        raise ValueError("ray direction has zero length")
    d = d / n
    if objects is None:
        v0, v1, v2 = mesh.all_triangles()
    else:
        parts = [mesh.object_triangles(o) for o in objects]
        v0, v1, v2 = (np.concatenate([p[i] for p in parts]) if parts else np.zeros((0, 3))
                      for i in range(3))
    if len(v0) == 0:
        return None
    t = kernels.ray_nearest(np.asarray(origin, dtype=np.float64), d, v0, v1, v2)
    return None if not np.isfinite(t) else float(t)


@dataclass(frozen=True, eq=False)
class OccupancyGrid:
    origin: np.ndarray
    cell: float
    dims: tuple
    occupancy: np.ndarray      # bool, shape dims

    def __post_init__(self):
        if self.cell <= 0:
            raise ValueError("cell size must be positive")
        if int(np.prod(self.dims)) != self.occupancy.size:
            raise ValueError("dims do not match the occupancy array")

    def center(self, idx) -> np.ndarray:
        return self.origin + (np.asarray(idx) + 0.5) * self.cell

    def index(self, p) -> tuple:
        return tuple(np.floor((np.asarray(p) - self.origin) / self.cell).astype(int))

    @property
    def count(self) -> int:
        return int(self.occupancy.sum())


def voxelize(mesh: SceneMesh, cell: float, bounds=None, objects=None) -> OccupancyGrid:
    """Conservative surface occupancy.

    The grid starts at ``bounds[0]`` (default: mesh bounding-box minimum)
    and spans at least one cell per axis.  A cell is occupied iff some
    triangle touches the closed cell box; interiors of closed objects are
    left empty (surface shell only).
    """
    if cell <= 0:
        raise ValueError("cell size must be positive")
    lo, hi = (mesh.bounds() if bounds is None else (np.asarray(bounds[0], float), np.asarray(bounds[1], float)))
    dims = tuple(max(1, int(math.ceil((hi[k] - lo[k]) / cell - 1e-9))) for k in range(3))
    if np.prod(dims, dtype=np.float64) > MAX_CELLS:
        raise ResourceError(f"grid {dims} exceeds {MAX_CELLS} cells")
    if objects is None:
        v0, v1, v2 = mesh.all_triangles() if mesh.num_triangles else (np.zeros((0, 3)),) * 3
    else:
        parts = [mesh.object_triangles(o) for o in objects]
        v0, v1, v2 = (np.concatenate([p[i] for p in parts]) if parts else np.zeros((0, 3))
                      for i in range(3))
    if len(v0):
        occ = kernels.voxelize(v0, v1, v2, lo, float(cell), dims).astype(bool)
    else:
        occ = np.zeros(dims, dtype=bool)
    return OccupancyGrid(np.asarray(lo, dtype=np.float64), float(cell), dims, occ)


@dataclass(frozen=True, eq=False)
class NavGrid:
    walkable: np.ndarray        # bool (nx, ny)
    origin: np.ndarray          # xy of cell (0, 0) corner
    cell: float
    clearance: float
    ground_z: float = 0.0

    @property
    def shape(self) -> tuple:
        return self.walkable.shape

    def cell_of(self, xy) -> tuple:
        i, j = np.floor((np.asarray(xy, dtype=np.float64)[:2] - self.origin) / self.cell).astype(int)
        return int(i), int(j)

    def center(self, ij) -> np.ndarray:
        return self.origin + (np.asarray(ij, dtype=np.float64) + 0.5) * self.cell

    def in_bounds(self, ij) -> bool:
        return 0 <= ij[0] < self.shape[0] and 0 <= ij[1] < self.shape[1]

    def is_walkable(self, xy) -> bool:
        ij = self.cell_of(xy)
        return self.in_bounds(ij) and bool(self.walkable[ij])


def _disk(radius_cells: int) -> np.ndarray:
    r = radius_cells
    y, x = np.mgrid[-r:r + 1, -r:r + 1]
    return (x * x + y * y) <= r * r + 1e-9


def nav_grid(occ: OccupancyGrid, clearance: float = DEFAULT_CLEARANCE,
             agent_height: float = AGENT_HEIGHT, ground_z: float | None = None) -> NavGrid:
    """Walkable ground cells.

    The ground layer is the layer holding ``ground_z`` (default: bottom
    layer).  A column is blocked if any cell above the ground layer, up to
    ``agent_height``, is occupied; blocked columns are dilated by a disk of
    ``clearance`` (cell-center distance).
    """
    if clearance < 0:
        raise ValueError("clearance must be non-negative")
    gz = float(occ.origin[2] if ground_z is None else ground_z)
    g = int(np.clip(math.floor((gz - occ.origin[2]) / occ.cell), 0, occ.dims[2] - 1))
    top = min(occ.dims[2], g + 1 + int(math.ceil(agent_height / occ.cell - 1e-9)))
    band = occ.occupancy[:, :, g + 1:top]
    blocked = band.any(axis=2) if band.shape[2] else np.zeros(occ.dims[:2], dtype=bool)
    r = int(math.floor(clearance / occ.cell + 1e-9))
    if r > 0 and blocked.any():
        blocked = ndimage.binary_dilation(blocked, structure=_disk(r))
    return NavGrid(~blocked, occ.origin[:2].copy(), occ.cell, float(clearance), gz)


def scene_nav_grid(mesh: SceneMesh, cell: float = 0.1, clearance: float = DEFAULT_CLEARANCE,
                   ground_z: float = 0.0, bounds_xy=None, objects=None) -> NavGrid:
    """Voxelize with the ground plane centred in layer 0, then extract the nav grid."""
    lo, hi = mesh.bounds()
    if bounds_xy is not None:
        lo = np.array([bounds_xy[0][0], bounds_xy[0][1], lo[2]])
        hi = np.array([bounds_xy[1][0], bounds_xy[1][1], hi[2]])
    lo = np.array([lo[0], lo[1], ground_z - cell / 2.0])
    hi = np.array([hi[0], hi[1], max(hi[2], ground_z + AGENT_HEIGHT + cell)])
    occ = voxelize(mesh, cell, (lo, hi), objects)
    return nav_grid(occ, clearance, ground_z=ground_z)


@dataclass(frozen=True, eq=False)
class ObstacleSpec:
    vertices: np.ndarray        # local frame, z-up
    triangles: np.ndarray
    translation: tuple = (0.0, 0.0, 0.0)
    yaw: float = 0.0
    tag: str = "obstacle"
    seen: bool = True

    def world_vertices(self) -> np.ndarray:
        c, s = math.cos(self.yaw), math.sin(self.yaw)
        R = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
        return np.asarray(self.vertices, dtype=np.float64) @ R.T + np.asarray(self.translation, dtype=np.float64)


def place_obstacle(scene: SceneMesh, obs: ObstacleSpec) -> SceneMesh:
    if obs.tag in scene.objects:
        raise TagCollisionError(f"object tag '{obs.tag}' already in scene")
    if not (np.all(np.isfinite(obs.translation)) and math.isfinite(obs.yaw)):
        raise ValueError("obstacle pose must be finite")
    tris = np.asarray(obs.triangles, dtype=np.int64)
    if not _closed(tris):
        raise ValueError(f"obstacle '{obs.tag}' mesh is not closed")
    nv, nt = len(scene.vertices), len(scene.triangles)
    objects = dict(scene.objects)
    objects[obs.tag] = (nt, nt + len(tris))
    closed = dict(scene.closed)
    closed[obs.tag] = True
    return SceneMesh(np.concatenate([scene.vertices, obs.world_vertices()]),
                     np.concatenate([scene.triangles, tris + nv]), objects, closed, scene.warnings)
