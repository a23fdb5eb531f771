"""Metric graph of a nicely decomposed tooth.

Slabs Y ∩ {a_{i-1} < y < a_i} split into components Y_i^j (graph edges)
weighted by their section width p_i^j. Components of the doubled slab
Y ∩ {a_{i-1} < y < a_{i+1}} are the joints: the edges of slab i inside a
joint form its lower set B, those of slab i+1 its upper set A.

Everything is read off the reference mesh (flood fill over shared edges)
and cross-checked against the polygon, from which p is evaluated exactly.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sps
from scipy.sparse.csgraph import connected_components

from .errors import ContinuityError, NotNicelyDecomposedError
from .fem import TRI5_BARY, tri5_points
from .geometry import edge_x
from .kernels import element_geometry
from .meshing import TriMesh, _slab_components

LEVEL_TOL = 1e-12
CONTINUITY_TOL = 1e-10


@dataclass(eq=False)
class Edge:
    """Graph edge (i, j) with p_i^j stored as breakpoints (ys, widths).

    ``widths`` at the first and last breakpoint are the one-sided limits of
    the section width, not the section of Y on the level line itself.
    """
    i: int
    j: int
    ys: np.ndarray
    widths: np.ndarray
    triangles: np.ndarray
    bottom_interval: tuple
    top_interval: tuple
    sides: tuple = ()   # per breakpoint gap: (left segment, right segment) of the polygon

    def interval(self, y):
        """Section (lo, hi) of Y_i^j at heights y in [y0, y1] (one-sided at the ends)."""
        y = np.asarray(y, dtype=float)
        k = np.clip(np.searchsorted(self.ys, y, side="right") - 1, 0, len(self.sides) - 1)
        lo, hi = np.empty_like(y), np.empty_like(y)
        for n, (left, right) in enumerate(self.sides):
            sel = k == n
            lo[sel] = edge_x(left, y[sel])
            hi[sel] = edge_x(right, y[sel])
        return lo, hi

    @property
    def y0(self):
        return float(self.ys[0])

    @property
    def y1(self):
        return float(self.ys[-1])

    @property
    def length(self):
        return self.y1 - self.y0

    def p(self, y):
        return np.interp(y, self.ys, self.widths)

    def integral_p(self):
        # p is affine between breakpoints
        return float(np.sum(0.5 * (self.widths[1:] + self.widths[:-1]) * np.diff(self.ys)))

    @property
    def key(self):
        return (self.i, self.j)


@dataclass(frozen=True)
class Joint:
    """k-th joint at level a_i: edges (i, j) for j in ``below``, (i+1, j) for j in ``above``."""
    i: int
    k: int
    below: tuple
    above: tuple


@dataclass(eq=False)
class GraphDecomposition:
    levels: np.ndarray
    edges: list
    joints: list
    mesh: TriMesh = None
    tri_edge: np.ndarray = None
    _index: dict = field(default_factory=dict)

    def __post_init__(self):
        self._index = {e.key: n for n, e in enumerate(self.edges)}

    @property
    def M(self):
        return len(self.levels) - 1

    def m(self, i):
        return sum(1 for e in self.edges if e.i == i)

    def edge(self, i, j) -> Edge:
        return self.edges[self._index[(i, j)]]

    def edge_index(self, i, j):
        return self._index[(i, j)]

    @property
    def root(self):
        return self.edge(1, 1)

    def joints_at(self, i):
        return [jt for jt in self.joints if jt.i == i]

    def joint_of(self, i, j, side):
        """Joint containing edge (i, j) at its ``'top'`` or ``'bottom'`` end (None at y = 0 or y = L)."""
        if side == "top":
            return next((jt for jt in self.joints if jt.i == i and j in jt.below), None)
        return next((jt for jt in self.joints if jt.i == i - 1 and j in jt.above), None)

    def area(self):
        return sum(e.integral_p() for e in self.edges)


def _triangle_adjacency(triangles, mask):
    """Sparse adjacency between selected triangles sharing a full edge."""
    idx = np.nonzero(mask)[0]
    tris = triangles[idx]
    e = np.sort(tris[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 2), axis=1)
    owner = np.repeat(np.arange(len(idx)), 3)
    order = np.lexsort((e[:, 1], e[:, 0]))
    e, owner = e[order], owner[order]
    same = np.all(e[1:] == e[:-1], axis=1)
    a, b = owner[:-1][same], owner[1:][same]
    n = len(idx)
    adj = sps.coo_matrix((np.ones(len(a)), (a, b)), shape=(n, n))
    return idx, adj


def _flood_fill(mesh, mask):
    idx, adj = _triangle_adjacency(mesh.triangles, mask)
    ncomp, labels = connected_components(adj, directed=False)
    return idx, ncomp, labels


def decompose(mesh: TriMesh, levels=None) -> GraphDecomposition:
    """Graph decomposition of the tooth carried by a reference mesh.

    ``levels`` defaults to the tooth's ``slab_levels`` or, failing that, to
    all vertex heights; custom levels must be a subset of the vertex
    heights (they are mesh lines only then).
    """
    tooth = mesh.meta["tooth"]
    fine = np.asarray(mesh.meta["levels"], dtype=float)
    if levels is None:
        levels = tooth.slab_levels if tooth.slab_levels is not None else fine
    levels = np.asarray(levels, dtype=float)
    if np.any(np.diff(levels) <= 0) or abs(levels[0]) > LEVEL_TOL or abs(levels[-1] - fine[-1]) > LEVEL_TOL:
        raise NotNicelyDecomposedError("levels must increase from 0 to L")
    if not all(np.min(np.abs(fine - a)) <= LEVEL_TOL for a in levels):
        raise NotNicelyDecomposedError("slab levels must be vertex heights of the polygon")

    fine_slabs = _slab_components(tooth, fine)
    fine_ids = mesh.meta["components"]           # component id -> (fine slab, j), 1-based
    fine_pair = {cid: fine_slabs[i - 1][j - 1] for cid, (i, j) in enumerate(fine_ids)}
    fine_slab_of = np.array([i for i, _ in fine_ids])
    cent_y = mesh.vertices[mesh.triangles, 1].mean(axis=1)
    tri_fine_slab = fine_slab_of[mesh.component]

    def width_and_interval(cid, y):
        left, right = fine_pair[cid]
        lo, hi = edge_x(left, y), edge_x(right, y)
        return hi - lo, (lo, hi)

    edges = []
    tri_edge = np.full(mesh.n_triangles, -1, dtype=np.int64)
    for i in range(1, len(levels)):
        lo, hi = levels[i - 1], levels[i]
        mask = (cent_y > lo) & (cent_y < hi)
        idx, ncomp, labels = _flood_fill(mesh, mask)
        sub = [k for k in range(len(fine) - 1) if fine[k] >= lo - LEVEL_TOL and fine[k + 1] <= hi + LEVEL_TOL]
        comps = []
        for c in range(ncomp):
            tris = idx[labels == c]
            ys, widths, per_sub = [], [], []
            for k in sub:
                fc = np.unique(mesh.component[tris[tri_fine_slab[tris] == k + 1]])
                if len(fc) == 0:
                    raise NotNicelyDecomposedError(
                        f"component of slab {i} does not span ({lo:g}, {hi:g}): p vanishes inside the slab")
                if len(fc) > 1:
                    raise NotNicelyDecomposedError(
                        f"component of slab {i} has a disconnected horizontal section near y={fine[k]:g}")
                per_sub.append(int(fc[0]))
            for n, (k, cid) in enumerate(zip(sub, per_sub)):
                w0, _ = width_and_interval(cid, fine[k])
                w1, _ = width_and_interval(cid, fine[k + 1])
                if n > 0 and abs(w0 - widths[-1]) > 1e-12 * max(1.0, abs(w0)):
                    raise NotNicelyDecomposedError(f"section width of slab {i} jumps at y={fine[k]:g}")
                if n == 0:
                    ys.append(fine[k])
                    widths.append(w0)
                ys.append(fine[k + 1])
                widths.append(w1)
            widths = np.array(widths)
            if np.any(widths[1:-1] <= 0) or np.any(widths <= 0):
                raise NotNicelyDecomposedError(f"p of a component in slab {i} is not positive on the closed slab")
            _, bot = width_and_interval(per_sub[0], lo)
            _, top = width_and_interval(per_sub[-1], hi)
            mid = 0.5 * (fine[sub[0]] + fine[sub[0] + 1])
            _, order_iv = width_and_interval(per_sub[0], mid)
            sides = tuple(fine_pair[c] for c in per_sub)
            comps.append((order_iv[0], tris, np.array(ys), widths, bot, top, sides))
        comps.sort(key=lambda c: c[0])
        if i == 1 and len(comps) != 1:
            raise NotNicelyDecomposedError(f"first slab has {len(comps)} components, expected 1")
        for j, (_, tris, ys, widths, bot, top, sides) in enumerate(comps, start=1):
            tri_edge[tris] = len(edges)
            edges.append(Edge(i, j, ys, widths, np.sort(tris), bot, top, sides))

    if np.any(tri_edge < 0):
        raise NotNicelyDecomposedError("triangles outside every slab component")

    joints = []
    edge_i = np.array([e.i for e in edges])
    edge_j = np.array([e.j for e in edges])
    for i in range(1, len(levels) - 1):
        mask = (edge_i[tri_edge] == i) | (edge_i[tri_edge] == i + 1)
        idx, ncomp, labels = _flood_fill(mesh, mask)
        found = []
        for c in range(ncomp):
            es = np.unique(tri_edge[idx[labels == c]])
            below = tuple(int(edge_j[e]) for e in es if edge_i[e] == i)
            above = tuple(int(edge_j[e]) for e in es if edge_i[e] == i + 1)
            xs = [edges[e].top_interval[0] for e in es if edge_i[e] == i]
            xs += [edges[e].bottom_interval[0] for e in es if edge_i[e] == i + 1]
            found.append((min(xs), below, above))
        found.sort()
        joints += [Joint(i, k, b, a) for k, (_, b, a) in enumerate(found, start=1)]

    return GraphDecomposition(levels, edges, joints, mesh, tri_edge)


def joins(decomp: GraphDecomposition, i, j, jp) -> bool:
    """Y_i^j joins Y_{i+1}^{j'} iff their interfaces on y = a_i overlap on a set of positive length."""
    lo = decomp.edge(i, j).top_interval
    hi = decomp.edge(i + 1, jp).bottom_interval
    return min(lo[1], hi[1]) - max(lo[0], hi[0]) > LEVEL_TOL


# ------------------------------------------------------------ cell fields

def _derivative(f):
    if hasattr(f, "deriv"):
        return f.deriv()
    raise TypeError("edge function needs a derivative: pass a numpy Polynomial or a (f, df) pair")


def _split(phi):
    out = {}
    for key, f in phi.items():
        if isinstance(f, tuple):
            out[key] = f
        else:
            out[key] = (f, _derivative(f))
    return out


def check_continuity(decomp: GraphDecomposition, phi, tol=CONTINUITY_TOL):
    """Raise ContinuityError naming the first joint where edge values disagree."""
    phi = _split(phi)
    for jt in decomp.joints:
        a = decomp.levels[jt.i]
        vals = [float(phi[(jt.i, j)][0](a)) for j in jt.below]
        vals += [float(phi[(jt.i + 1, j)][0](a)) for j in jt.above]
        if vals and max(vals) - min(vals) > tol:
            raise ContinuityError(
                f"edge values differ by {max(vals) - min(vals):.3e} at joint (i={jt.i}, k={jt.k}), y={a:g}")


@dataclass(eq=False)
class CellField:
    """ξ-constant field on Y: φ_i^j(y) on the triangles of Y_i^j."""
    decomp: GraphDecomposition
    phi: dict

    def on_triangles(self, tri, y, derivative=False):
        """Values (or y-derivatives) at points ``y`` inside triangles ``tri``."""
        tri = np.asarray(tri)
        y = np.asarray(y, dtype=float)
        out = np.empty(np.broadcast(tri, y).shape)
        tri, y = np.broadcast_arrays(tri, y)
        eid = self.decomp.tri_edge[tri]
        for n, e in enumerate(self.decomp.edges):
            sel = eid == n
            if np.any(sel):
                out[sel] = self.phi[e.key][1 if derivative else 0](y[sel])
        return out

    def __call__(self, xi, y):
        """Point values; each point is located in a reference triangle containing it."""
        xi, y = np.broadcast_arrays(np.asarray(xi, dtype=float), np.asarray(y, dtype=float))
        mesh = self.decomp.mesh
        p = mesh.vertices[mesh.triangles]
        _, grads = element_geometry(mesh.vertices, mesh.triangles)
        q = np.stack([xi.ravel(), y.ravel()], axis=1)
        # barycentric coordinates of every point in every triangle
        d = q[:, None, :] - p[None, :, 0, :]
        l12 = np.einsum("mad,kmd->kma", grads[:, 1:], d)
        lam = np.concatenate([1 - l12.sum(axis=2, keepdims=True), l12], axis=2)
        inside = np.all(lam >= -1e-12, axis=2)
        if not np.all(inside.any(axis=1)):
            raise ValueError("point outside Y")
        tri = np.argmax(inside, axis=1)
        return self.on_triangles(tri, q[:, 1]).reshape(xi.shape)

    def nodal(self):
        """Values at reference vertices (agreeing across joints)."""
        mesh = self.decomp.mesh
        vals = np.full(mesh.n_vertices, np.nan)
        for n, e in enumerate(self.decomp.edges):
            vs = np.unique(mesh.triangles[e.triangles])
            vals[vs] = self.phi[e.key][0](mesh.vertices[vs, 1])
        return vals

    def h1_norm_sq(self):
        """∫_Y φ² + |∇φ|² by the degree-5 triangle rule on the reference mesh."""
        mesh = self.decomp.mesh
        pts, w = tri5_points(mesh.vertices, mesh.triangles)
        tri = np.repeat(np.arange(mesh.n_triangles)[:, None], TRI5_BARY.shape[0], axis=1)
        v = self.on_triangles(tri, pts[..., 1])
        dv = self.on_triangles(tri, pts[..., 1], derivative=True)
        return float(np.sum(w * (v ** 2 + dv ** 2)))


def extend_to_cell(decomp: GraphDecomposition, phi, tol=CONTINUITY_TOL) -> CellField:
    """Extension φ(ξ, y) := φ_i^j(y) on Y_i^j after checking joint continuity.

    ``phi`` maps (i, j) to a numpy Polynomial or a (function, derivative)
    pair.
    """
    check_continuity(decomp, phi, tol)
    return CellField(decomp, _split(phi))


def graph_norm_sq(decomp: GraphDecomposition, phi, order=6):
    """Σ ∫ p_i^j (φ² + φ'²) with Gauss-Legendre of the given order per edge."""
    phi = _split(phi)
    s, w = np.polynomial.legendre.leggauss(order)
    total = 0.0
    for e in decomp.edges:
        for y0, y1 in zip(e.ys[:-1], e.ys[1:]):
            y = 0.5 * (y0 + y1) + 0.5 * (y1 - y0) * s
            f, df = phi[e.key]
            total += 0.5 * (y1 - y0) * np.sum(w * e.p(y) * (f(y) ** 2 + df(y) ** 2))
    return float(total)


def restrict_to_graph(decomp: GraphDecomposition, field2d):
    """Per-edge functions φ_i^j(y) = field2d(ξ, y) for ξ inside the section of Y_i^j.

    ``field2d`` must be ξ-constant on each component; it is sampled at the
    section midpoint.
    """
    out = {}
    for e in decomp.edges:
        def f(y, e=e):
            y = np.asarray(y, dtype=float)
            lo, hi = e.interval(y)
            return field2d(0.5 * (lo + hi), y)
        out[e.key] = f
    return out


# ------------------------------------------------------------ export

def write_graph(fh, decomp: GraphDecomposition):
    """Line-oriented export::

        # brushhom-graph v1
        levels a_0 a_1 ... a_M
        edge i j y:p y:p ...            (p breakpoints, endpoint values are one-sided limits)
        joint i k below j ... above j ...
    """
    fh.write("# brushhom-graph v1\n")
    fh.write("levels " + " ".join(f"{a:.17g}" for a in decomp.levels) + "\n")
    for e in decomp.edges:
        bps = " ".join(f"{y:.17g}:{p:.17g}" for y, p in zip(e.ys, e.widths))
        fh.write(f"edge {e.i} {e.j} {bps}\n")
    for jt in decomp.joints:
        tokens = ["joint", jt.i, jt.k, "below", *jt.below, "above", *jt.above]
        fh.write(" ".join(map(str, tokens)) + "\n")


def p_table(decomp: GraphDecomposition):
    """Rows (i, j, y, p) over all breakpoints, for tabular output."""
    return [(e.i, e.j, float(y), float(p)) for e in decomp.edges for y, p in zip(e.ys, e.widths)]
