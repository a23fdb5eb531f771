"""Time the numba kernels against the numpy fallbacks on a brush mesh.

    python3 benchmarks/bench_kernels.py [--h 0.03125] [--eps 0.0625] [--repeat 5]
"""
import argparse
import time

import numpy as np

from brushhom.fem import _weights_at_quad, assemble
from brushhom.geometry import BUILTIN_TEETH, place_periodic
from brushhom.kernels import (_assemble_triplets_numba, _assemble_triplets_numpy, _pcg_numba, _pcg_numpy,
                              element_geometry)
from brushhom.meshing import mesh_brush


def best_of(fn, repeat):
    fn()  # warm-up, includes jit compilation
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--h", type=float, default=2.0 ** -5, help="mesh size for base and teeth")
    ap.add_argument("--eps", type=float, default=2.0 ** -4, help="tooth period")
    ap.add_argument("--repeat", type=int, default=5, help="timed runs per kernel (best is reported)")
    args = ap.parse_args()

    spec = place_periodic((0.0, 1.0), args.eps, 0.5, BUILTIN_TEETH["cylinder"]())
    mesh = mesh_brush(spec, args.h, args.h).mesh
    area, grads = element_geometry(mesh.vertices, mesh.triangles)
    wq = _weights_at_quad(mesh, None, mesh.triangles)
    tri = mesh.triangles.astype(np.int64)
    print(f"mesh: {mesh.n_vertices} vertices, {mesh.n_triangles} triangles")

    rows = [("assembly numpy", lambda: _assemble_triplets_numpy(tri, area, grads, wq)),
            ("assembly numba serial", lambda: _assemble_triplets_numba(tri, area, grads, wq, False)),
            ("assembly numba parallel", lambda: _assemble_triplets_numba(tri, area, grads, wq, True))]

    A = assemble(mesh)
    b = np.ones(A.shape[0])
    dinv = 1.0 / A.diagonal()
    n = A.shape[0]
    ip, ix = A.indptr.astype(np.int64), A.indices.astype(np.int64)
    rows += [("pcg numpy", lambda: _pcg_numpy(A, b, np.zeros(n), dinv, 1e-10, 10 * n)),
             ("pcg numba", lambda: _pcg_numba(ip, ix, A.data, b, np.zeros(n), dinv, 1e-10, 10 * n))]

    for name, fn in rows:
        print(f"{name:<26s} {1e3 * best_of(fn, args.repeat):9.2f} ms")
    x1 = _pcg_numpy(A, b, np.zeros(n), dinv, 1e-10, 10 * n)[0]
    x2 = _pcg_numba(ip, ix, A.data, b, np.zeros(n), dinv, 1e-10, 10 * n)[0]
    print(f"pcg max difference numpy vs numba: {np.max(np.abs(x1 - x2)):.2e}")


if __name__ == "__main__":
    main()
