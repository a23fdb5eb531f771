"""Triangulations of the model tooth, the base rectangle and the brush.

The tooth is meshed once on the reference cell. Every horizontal strip
between two consecutive vertex levels of the polygon is cut into rows; in
each row every slab component is a trapezoid whose bottom and top node
chains are stitched together ("zipper"). Level lines are therefore mesh
edges and every triangle lies in exactly one slab component. Brush teeth
are affine images of that mesh glued node-to-node onto the base.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import triangle

from .errors import MeshError
from .geometry import BrushSpec, ModelTooth, edge_x
from .kernels import element_geometry

OUTER, TOOTH_BASE, SLAB_INTERFACE = 0, 1, 2
EDGE_KINDS = {OUTER: "outer", TOOTH_BASE: "tooth_base", SLAB_INTERFACE: "slab_interface"}


@dataclass(eq=False)
class TriMesh:
    vertices: np.ndarray
    triangles: np.ndarray
    tooth_id: np.ndarray = None
    component: np.ndarray = None
    edges: np.ndarray = None
    edge_kind: np.ndarray = None
    edge_ref: np.ndarray = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.vertices = np.ascontiguousarray(self.vertices, dtype=np.float64)
        self.triangles = np.ascontiguousarray(self.triangles, dtype=np.int64)
        m = len(self.triangles)
        if self.tooth_id is None:
            self.tooth_id = np.full(m, -1, dtype=np.int64)
        if self.component is None:
            self.component = np.full(m, -1, dtype=np.int64)
        if self.edges is None:
            self.edges = np.zeros((0, 2), dtype=np.int64)
            self.edge_kind = np.zeros(0, dtype=np.int64)
            self.edge_ref = np.zeros(0, dtype=np.int64)

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_triangles(self):
        return len(self.triangles)

    def areas(self):
        return element_geometry(self.vertices, self.triangles)[0]

    @property
    def area(self):
        return float(np.sum(self.areas()))

    def unique_edges(self):
        """Sorted (k, 2) array of all mesh edges and the use count of each."""
        e = np.sort(self.triangles[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 2), axis=1)
        return np.unique(e, axis=0, return_counts=True)

    def euler_characteristic(self):
        used = np.unique(self.triangles)
        edges, _ = self.unique_edges()
        return len(used) - len(edges) + self.n_triangles

    def boundary_edges(self):
        edges, counts = self.unique_edges()
        return edges[counts == 1]

    def submesh(self, tri_mask):
        """Mesh of the selected triangles with compacted vertex numbering.

        Returns the submesh and the array mapping its vertices to ours.
        """
        tris = self.triangles[tri_mask]
        used = np.unique(tris)
        remap = np.full(self.n_vertices, -1, dtype=np.int64)
        remap[used] = np.arange(len(used))
        sub = TriMesh(self.vertices[used], remap[tris], self.tooth_id[tri_mask],
                      self.component[tri_mask])
        return sub, used


def _check_orientation(mesh, min_area):
    area = mesh.areas()
    if np.any(area <= min_area):
        raise MeshError(f"triangle with area {area.min():.3e} below tolerance {min_area:.1e}")


# ------------------------------------------------------------ reference tooth

def _slab_components(tooth, levels):
    edges = tooth.edges()
    slabs = []
    for i in range(1, len(levels)):
        ym = 0.5 * (levels[i - 1] + levels[i])
        slabs.append([(edges[a], edges[b]) for a, b in tooth.crossing_pairs(ym)])
    return slabs


def _interval(comp, y):
    left, right = comp
    return edge_x(left, y), edge_x(right, y)


def _row_nodes(intervals, h_xi, scale):
    """Node abscissae on a horizontal line covering all given closed intervals."""
    tol = 1e-12 * scale
    ivs = sorted((min(a, b), max(a, b)) for a, b in intervals)
    pieces = []
    for a, b in ivs:
        if pieces and a <= pieces[-1][1] + tol:
            pieces[-1][1] = max(pieces[-1][1], b)
            pieces[-1][2].extend([a, b])
        else:
            pieces.append([a, b, [a, b]])
    nodes = []
    for a, b, bps in pieces:
        bps = np.sort(np.asarray(bps))
        keep = np.concatenate([[True], np.diff(bps) > tol])
        bps = bps[keep]
        if len(bps) == 1:
            nodes.append(bps)
            continue
        for k in range(len(bps) - 1):
            n = max(1, math.ceil((bps[k + 1] - bps[k]) / h_xi - 1e-9))
            nodes.append(np.linspace(bps[k], bps[k + 1], n + 1)[:-1])
        nodes.append(bps[-1:])
    return np.concatenate(nodes)


def _zipper(bottom, top, bx, tx, blim, tlim):
    """Triangulate the strip between two node chains (indices + abscissae)."""
    tris = []
    i = j = 0
    nb, nt = len(bottom), len(top)
    wb = blim[1] - blim[0]
    wt = tlim[1] - tlim[0]
    while i < nb - 1 or j < nt - 1:
        if i == nb - 1:
            adv_bottom = False
        elif j == nt - 1:
            adv_bottom = True
        else:
            sb = (bx[i + 1] - blim[0]) / wb if wb > 0 else 0.5
            st = (tx[j + 1] - tlim[0]) / wt if wt > 0 else 0.5
            adv_bottom = sb <= st
        if adv_bottom:
            tris.append((bottom[i], bottom[i + 1], top[j]))
            i += 1
        else:
            tris.append((bottom[i], top[j + 1], top[j]))
            j += 1
    return tris


def mesh_tooth_reference(tooth: ModelTooth, h: float, h_xi: float | None = None) -> TriMesh:
    """Conforming triangulation of Y whose edges contain every slab level line.

    ``h`` bounds the row height (vertical spacing), ``h_xi`` the horizontal
    node spacing (defaults to ``h``). Triangles carry the index of their
    slab component; ``meta['components']`` lists the (i, j) labels, with
    slabs i = 1..M from the bottom and j = 1..m_i from the left.
    """
    if not h > 0 or (h_xi is not None and not h_xi > 0):
        raise MeshError("mesh size must be positive")
    if h > tooth.delta0 * (1 + 1e-12):
        raise MeshError(f"h = {h} too large to resolve the collar delta0 = {tooth.delta0}")
    h_xi = h if h_xi is None else h_xi
    levels = tooth.levels()
    scale = max(1.0, float(np.abs(np.concatenate(tooth.rings)).max()))
    slabs = _slab_components(tooth, levels)

    # row heights per slab; level rows are shared between adjacent slabs
    row_ys = []
    for i in range(1, len(levels)):
        n = max(1, math.ceil((levels[i] - levels[i - 1]) / h - 1e-9))
        ys = np.linspace(levels[i - 1], levels[i], n + 1)
        row_ys.append(ys)

    verts = []
    row_cache = {}

    def make_row(key, y, intervals):
        xs = _row_nodes(intervals, h_xi, scale)
        idx = np.arange(len(verts), len(verts) + len(xs))
        verts.extend((x, y) for x in xs)
        row_cache[key] = (xs, idx)

    M = len(slabs)
    for i in range(M + 1):
        ivs = []
        if i >= 1:
            ivs += [_interval(c, levels[i]) for c in slabs[i - 1]]
        if i < M:
            ivs += [_interval(c, levels[i]) for c in slabs[i]]
        make_row(("level", i), levels[i], ivs)
    for i, ys in enumerate(row_ys):
        for r in range(1, len(ys) - 1):
            make_row(("row", i, r), ys[r], [_interval(c, ys[r]) for c in slabs[i]])

    def row_key(i, r, nrows):
        if r == 0:
            return ("level", i)
        if r == nrows:
            return ("level", i + 1)
        return ("row", i, r)

    tris, comp = [], []
    components = []
    tol = 1e-12 * scale
    for i, comps in enumerate(slabs):
        ys = row_ys[i]
        nrows = len(ys) - 1
        for j, c in enumerate(comps):
            cid = len(components)
            components.append((i + 1, j + 1))
            for r in range(nrows):
                bxs, bidx = row_cache[row_key(i, r, nrows)]
                txs, tidx = row_cache[row_key(i, r + 1, nrows)]
                blim = _interval(c, ys[r])
                tlim = _interval(c, ys[r + 1])
                bm = (bxs >= blim[0] - tol) & (bxs <= blim[1] + tol)
                tm = (txs >= tlim[0] - tol) & (txs <= tlim[1] + tol)
                new = _zipper(bidx[bm], tidx[tm], bxs[bm], txs[tm], blim, tlim)
                tris.extend(new)
                comp.extend([cid] * len(new))

    mesh = TriMesh(np.array(verts), np.array(tris), component=np.array(comp))
    _check_orientation(mesh, 1e-14 * scale * scale)
    # tag edges: base segment, slab interfaces, remaining boundary
    edges, counts = mesh.unique_edges()
    ev = mesh.vertices[edges]
    horizontal = np.abs(ev[:, 0, 1] - ev[:, 1, 1]) <= tol
    kind = np.full(len(edges), -1)
    ref = np.zeros(len(edges), dtype=np.int64)
    for i, a in enumerate(levels):
        on = horizontal & (np.abs(ev[:, 0, 1] - a) <= tol)
        if i == 0:
            kind[on] = TOOTH_BASE
        elif 0 < i < len(levels) - 1:
            inner = on & (counts == 2)
            kind[inner] = SLAB_INTERFACE
            ref[inner] = i
    kind[(kind == -1) & (counts == 1)] = OUTER
    sel = kind >= 0
    mesh.edges, mesh.edge_kind, mesh.edge_ref = edges[sel], kind[sel], ref[sel]

    base = np.nonzero(np.abs(mesh.vertices[:, 1]) <= tol)[0]
    base = base[np.argsort(mesh.vertices[base, 0])]
    mesh.meta.update(tooth=tooth, levels=levels, components=components,
                     base_nodes=base, h=h, h_xi=h_xi)
    return mesh


# ------------------------------------------------------------ base rectangle

def _subdivide(a, b, h):
    n = max(1, math.ceil(abs(b - a) / h - 1e-9))
    return np.linspace(a, b, n + 1)


def mesh_base(x0, x1, depth, top_points, h_base, min_angle=30.0):
    """Constrained Delaunay mesh of [x0, x1] x [-depth, 0].

    ``top_points`` (sorted, containing x0 and x1) are forced onto the top
    side and no further points are inserted on any side, so the top
    partition is exactly ``top_points`` plus the h_base gap filling done
    by the caller. Returns the mesh; its first ``len(top_points)`` vertices
    are the top points in the given order.
    """
    top = np.asarray(top_points, dtype=float)
    right = _subdivide(0.0, -depth, h_base)[1:]          # (x1, y) downwards
    bottom = _subdivide(x1, x0, h_base)[1:]              # (x, -depth) leftwards
    left = _subdivide(-depth, 0.0, h_base)[1:-1]         # (x0, y) upwards
    # loop: top (x1 -> x0), left side down, bottom (x0 -> x1), right side up
    left_down = np.stack([np.full(len(left), x0), left[::-1]], axis=1)
    bottom_lr = np.stack([bottom[::-1], np.full(len(bottom), -depth)], axis=1)
    right_up = np.stack([np.full(len(right), x1), right[::-1]], axis=1)
    loop = np.concatenate([np.stack([top[::-1], np.zeros(len(top))], axis=1),
                           left_down, bottom_lr, right_up])
    n = len(loop)
    segs = np.stack([np.arange(n), (np.arange(n) + 1) % n], axis=1)
    amax = math.sqrt(3) / 4 * h_base ** 2
    out = triangle.triangulate({"vertices": loop, "segments": segs},
                               f"pYQq{min_angle:g}a{amax:.17g}")
    v = out["vertices"]
    if not np.array_equal(v[:n], loop):
        raise MeshError("constrained triangulation moved input points")
    # reorder so the top points come first in left-to-right order
    nt = len(top)
    perm = np.concatenate([np.arange(nt)[::-1], np.arange(nt, len(v))])
    inv = np.empty_like(perm)
    inv[perm] = np.arange(len(v))
    mesh = TriMesh(v[perm], inv[out["triangles"]])
    _check_orientation(mesh, 1e-18)
    return mesh


# ------------------------------------------------------------ brush

@dataclass(eq=False)
class BrushMesh:
    """Conforming mesh of the whole brush plus the instancing maps.

    ``tooth_nodes[n, r]`` is the brush vertex of reference vertex r in tooth
    n and ``tooth_triangles[n, t]`` the brush triangle of reference
    triangle t. Base vertices come first (``0 .. n_base-1``) and the first
    ``len(trace)`` of them are the top-side nodes ordered by x.
    """
    spec: BrushSpec
    mesh: TriMesh
    reference: TriMesh
    tooth_nodes: np.ndarray
    tooth_triangles: np.ndarray
    n_base: int
    trace: np.ndarray
    h_base: float

    @property
    def base(self) -> TriMesh:
        if "_base" not in self.__dict__:
            mask = self.mesh.tooth_id < 0
            self.__dict__["_base"] = TriMesh(self.mesh.vertices[:self.n_base], self.mesh.triangles[mask])
        return self.__dict__["_base"]

    @property
    def teeth(self):
        """(submesh of all tooth triangles, vertex map into the brush mesh)."""
        if "_teeth" not in self.__dict__:
            self.__dict__["_teeth"] = self.mesh.submesh(self.mesh.tooth_id >= 0)
        return self.__dict__["_teeth"]

    @property
    def trace_x(self):
        return self.mesh.vertices[self.trace, 0]

    def trace_in_omega_prime(self):
        """Indices (into ``trace``) of top nodes lying in the closure of omega'."""
        a, b = self.spec.omega_prime
        x = self.trace_x
        return np.nonzero((x >= a - 1e-13) & (x <= b + 1e-13))[0]


def mesh_brush(spec: BrushSpec, h_base: float, h_tooth: float, h_xi: float | None = None,
               reference: TriMesh | None = None) -> BrushMesh:
    """Single conforming triangulation of base and teeth."""
    if not h_base > 0:
        raise MeshError("h_base must be positive")
    ref = reference if reference is not None else mesh_tooth_reference(spec.tooth, h_tooth, h_xi)
    bnodes = ref.meta["base_nodes"]
    xi = ref.vertices[bnodes, 0]
    order = np.argsort(spec.centers)
    tooth_pts = spec.centers[:, None] + spec.lengths[:, None] * xi[None, :]

    a, b = spec.omega_prime
    chain = [np.array([spec.x0])]
    cursor = spec.x0
    for n in order:
        chain.append(_subdivide(cursor, tooth_pts[n, 0], h_base)[1:-1])
        chain.append(tooth_pts[n])
        cursor = tooth_pts[n, -1]
    chain.append(_subdivide(cursor, spec.x1, h_base)[1:])
    top = np.concatenate(chain)
    # omega' endpoints must be nodes so the trace mesh resolves theta's support
    for e in (a, b):
        if np.min(np.abs(top - e)) > 1e-13:
            top = np.sort(np.append(top, e))
    if np.any(np.diff(top) <= 0):
        raise MeshError("top partition is not strictly increasing")

    base = mesh_base(spec.x0, spec.x1, spec.depth, top, h_base)
    nb = base.n_vertices
    # locate tooth base points in the top chain (exact, they were inserted verbatim)
    pos = np.searchsorted(top, tooth_pts.ravel()).reshape(tooth_pts.shape)
    assert np.array_equal(top[pos], tooth_pts), "tooth base nodes missing from top chain"

    nref = ref.n_vertices
    interior = np.ones(nref, dtype=bool)
    interior[bnodes] = False
    n_int = int(interior.sum())
    N = spec.n_teeth
    tooth_nodes = np.empty((N, nref), dtype=np.int64)
    verts = [base.vertices]
    tris = [base.triangles]
    tid = [np.full(base.n_triangles, -1)]
    comp = [np.full(base.n_triangles, -1)]
    nt_ref = ref.n_triangles
    tooth_tris = np.empty((N, nt_ref), dtype=np.int64)
    next_v, next_t = nb, base.n_triangles
    for n in range(N):
        tooth_nodes[n, bnodes] = pos[n]
        tooth_nodes[n, interior] = np.arange(next_v, next_v + n_int)
        rv = ref.vertices[interior]
        verts.append(np.stack([spec.centers[n] + spec.lengths[n] * rv[:, 0], rv[:, 1]], axis=1))
        tris.append(tooth_nodes[n][ref.triangles])
        tid.append(np.full(nt_ref, n))
        comp.append(ref.component)
        tooth_tris[n] = np.arange(next_t, next_t + nt_ref)
        next_v += n_int
        next_t += nt_ref

    mesh = TriMesh(np.concatenate(verts), np.concatenate(tris), np.concatenate(tid),
                   np.concatenate(comp))
    _check_orientation(mesh, 0.0)

    # gluing check: every reference base segment must be a base-mesh edge
    base_edges = {tuple(e) for e in np.sort(base.triangles[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 2), axis=1)}
    for n in range(N):
        for k in range(len(bnodes) - 1):
            e = tuple(sorted((int(pos[n, k]), int(pos[n, k + 1]))))
            assert e in base_edges, f"non-conforming gluing at tooth {n}"

    # edge tags
    edges, counts = mesh.unique_edges()
    kind = np.full(len(edges), -1)
    eref = np.zeros(len(edges), dtype=np.int64)
    kind[counts == 1] = OUTER
    for n in range(N):
        seg = np.sort(np.stack([pos[n, :-1], pos[n, 1:]], axis=1), axis=1)
        idx = _edge_lookup(edges, seg)
        kind[idx], eref[idx] = TOOTH_BASE, n
    si = ref.edge_kind == SLAB_INTERFACE
    if np.any(si):
        for n in range(N):
            seg = np.sort(tooth_nodes[n][ref.edges[si]], axis=1)
            idx = _edge_lookup(edges, seg)
            kind[idx], eref[idx] = SLAB_INTERFACE, ref.edge_ref[si]
    sel = kind >= 0
    mesh.edges, mesh.edge_kind, mesh.edge_ref = edges[sel], kind[sel], eref[sel]

    brush = BrushMesh(spec, mesh, ref, tooth_nodes, tooth_tris, nb,
                      np.arange(len(top), dtype=np.int64), h_base)
    mesh.meta["brush"] = brush
    return brush


def _edge_lookup(sorted_edges, query):
    key = sorted_edges[:, 0] * (sorted_edges.max() + 1) + sorted_edges[:, 1]
    q = query[:, 0] * (sorted_edges.max() + 1) + query[:, 1]
    idx = np.searchsorted(key, q)
    assert np.array_equal(key[idx], q)
    return idx


# ------------------------------------------------------------ export

def write_mesh(fh, mesh: TriMesh):
    """Line-oriented text export.

    Format::

        # brushhom-mesh v1
        vertices <n>
        <x> <y>                       (n lines)
        triangles <m>
        <a> <b> <c> <tooth> <component>  (m lines, tooth/component -1 = none)
        edges <k>
        <a> <b> <kind> <ref>          (k lines, kind in outer/tooth_base/slab_interface)
    """
    fh.write("# brushhom-mesh v1\n")
    fh.write(f"vertices {mesh.n_vertices}\n")
    for x, y in mesh.vertices:
        fh.write(f"{x:.17g} {y:.17g}\n")
    fh.write(f"triangles {mesh.n_triangles}\n")
    for (a, b, c), t, k in zip(mesh.triangles, mesh.tooth_id, mesh.component):
        fh.write(f"{a} {b} {c} {t} {k}\n")
    fh.write(f"edges {len(mesh.edges)}\n")
    for (a, b), k, r in zip(mesh.edges, mesh.edge_kind, mesh.edge_ref):
        fh.write(f"{a} {b} {EDGE_KINDS[int(k)]} {r}\n")


def read_mesh(fh) -> TriMesh:
    lines = [ln for ln in fh.read().splitlines() if ln and not ln.startswith("#")]
    it = iter(lines)
    n = int(next(it).split()[1])
    v = np.array([[float(t) for t in next(it).split()] for _ in range(n)])
    m = int(next(it).split()[1])
    rows = [next(it).split() for _ in range(m)]
    tri = np.array([[int(r[0]), int(r[1]), int(r[2])] for r in rows], dtype=np.int64).reshape(-1, 3)
    tid = np.array([int(r[3]) for r in rows], dtype=np.int64)
    comp = np.array([int(r[4]) for r in rows], dtype=np.int64)
    k = int(next(it).split()[1])
    erows = [next(it).split() for _ in range(k)]
    names = {v_: k_ for k_, v_ in EDGE_KINDS.items()}
    edges = np.array([[int(r[0]), int(r[1])] for r in erows], dtype=np.int64).reshape(-1, 2)
    kind = np.array([names[r[2]] for r in erows], dtype=np.int64)
    ref = np.array([int(r[3]) for r in erows], dtype=np.int64)
    return TriMesh(v, tri, tid, comp, edges, kind, ref)
