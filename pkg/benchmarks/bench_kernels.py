"""Compare the compiled geometry kernels with the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Each kernel runs on identical inputs under both implementations; the
script checks the outputs agree and prints the median wall time.
"""

import argparse
import statistics
import time

import numpy as np

from hsigraph import _kernels_py
from hsigraph.kinematics import HumanState, body_points
from hsigraph.scene import PARITY_DIRECTIONS, SceneMesh, box_mesh

try:
    from hsigraph import _kernels
except ImportError:
    _kernels = None


def _scene():
    rng = np.random.default_rng(7)
    parts = {}
    for i in range(20):
        c = rng.uniform([-3, -3, 0.2], [3, 3, 1.0])
        parts[f"box{i}"] = box_mesh(c, rng.uniform(0.2, 1.0, 3))
    return SceneMesh.from_objects(parts)


def _time(fn, repeat):
    out, ts = None, []
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        ts.append(time.perf_counter() - t)
    return statistics.median(ts), out


def main(argv=None):
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    scene = _scene()
    v0, v1, v2 = scene.all_triangles()
    rng = np.random.default_rng(0)
    frames = [HumanState(np.array([x, 0.0, 0.9]), 0.0, rng.normal(0, 0.3, 63)) for x in np.linspace(-3, 3, 60)]
    pts = np.concatenate([body_points(s) for s in frames])
    origin = np.array([-4.0, -4.0, 1.6])
    direction = np.array([1.0, 1.0, -0.1]) / np.linalg.norm([1.0, 1.0, -0.1])
    lo, hi = scene.bounds()
    cell = 0.05
    dims = tuple(int(np.ceil((hi[k] - lo[k]) / cell)) for k in range(3))

    cases = {
        f"ray_parity ({len(pts)} points x {len(v0)} tris)":
            lambda K: K.ray_parity(pts, PARITY_DIRECTIONS[0], v0, v1, v2),
        f"ray_nearest x200 ({len(v0)} tris)":
            lambda K: [K.ray_nearest(origin, direction, v0, v1, v2) for _ in range(200)],
        f"voxelize (cell {cell}, dims {dims})":
            lambda K: K.voxelize(v0, v1, v2, lo, cell, dims),
    }
    print(f"{'kernel':<48} {'python [s]':>11} {'cython [s]':>11} {'speed-up':>9}")
    for name, fn in cases.items():
        tp, outp = _time(lambda: fn(_kernels_py), args.repeat)
        if _kernels is None:
            print(f"{name:<48} {tp:>11.4f} {'n/a':>11} {'':>9}")
            continue
        tc, outc = _time(lambda: fn(_kernels), args.repeat)
        if isinstance(outp, tuple):
            same = all(np.array_equal(a, b) for a, b in zip(outp, outc))
        else:
            same = np.array_equal(np.asarray(outp), np.asarray(outc))
        flag = "" if same else "  MISMATCH"
        print(f"{name:<48} {tp:>11.4f} {tc:>11.4f} {tp / tc:>8.1f}x{flag}")


if __name__ == "__main__":
    main()
