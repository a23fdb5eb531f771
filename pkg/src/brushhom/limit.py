"""Coupled limit problem: base field on Ω^b plus θ-weighted graph fields.

Unknowns are u^b (P1 on the base mesh) and, for each trace node x_s in the
closure of Ω' with θ(x_s) > theta_min, a P1 function on the metric graph of
the tooth. The x-dependence of the graph part is P1 on the trace nodes, so
the graph block is M_θ ⊗ K where M_θ is the θ-weighted mass matrix on the
trace mesh and K the p-weighted 1D stiffness+mass matrix of the graph. The
bottom end of the root edge at node s is the base DOF of x_s and joint ends
share one DOF, so trace continuity and joint continuity hold by
construction. Kirchhoff conditions are natural and only checked afterwards.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sps

from .density import DensityField
from .errors import NotNicelyDecomposedError
from .fem import DiscreteField, assemble, assemble_1d, load, solve_spd
from .functions import as_field
from .graph import GraphDecomposition, write_graph
from .kernels import QUAD_BARY, element_geometry
from .meshing import BrushMesh, TriMesh
from .unfolding import unfold

_GS, _GW = np.polynomial.legendre.leggauss(3)


class GraphMesh:
    """1D P1 meshes on all edges with shared root and joint DOFs.

    Local DOF 0 is the bottom of the root edge (1, 1). Every joint owns one
    DOF; top ends of edges in the last slab own one each; the remaining
    DOFs are interior nodes.
    """

    def __init__(self, decomp: GraphDecomposition, h_y: float):
        if not h_y > 0:
            raise ValueError("h_y must be positive")
        self.decomp = decomp
        self.h_y = h_y
        nxt = 1
        joint_dof = {}
        for jt in decomp.joints:
            joint_dof[(jt.i, jt.k)] = nxt
            nxt += 1
        self.joint_dof = joint_dof
        self.nodes, self.dofs = [], []
        for e in decomp.edges:
            n = max(1, math.ceil(e.length / h_y - 1e-9))
            ys = np.linspace(e.y0, e.y1, n + 1)
            if e.i == 1:
                if e.j != 1:
                    raise NotNicelyDecomposedError("first slab must have a single component")
                bottom = 0
            else:
                jt = decomp.joint_of(e.i, e.j, "bottom")
                bottom = joint_dof[(jt.i, jt.k)]
            if e.i == decomp.M:
                top = nxt
                nxt += 1
            else:
                jt = decomp.joint_of(e.i, e.j, "top")
                top = joint_dof[(jt.i, jt.k)]
            inner = np.arange(nxt, nxt + n - 1)
            nxt += n - 1
            self.nodes.append(ys)
            self.dofs.append(np.concatenate([[bottom], inner, [top]]).astype(np.int64))
        self.n_loc = nxt
        self.K = self._assemble()
        self._quad()

    def _assemble(self):
        K = sps.csr_matrix((self.n_loc, self.n_loc))
        for e, ys, dofs in zip(self.decomp.edges, self.nodes, self.dofs):
            Ke = assemble_1d(ys, e.p).tocoo()
            K = K + sps.csr_matrix((Ke.data, (dofs[Ke.row], dofs[Ke.col])), shape=K.shape)
        K.sum_duplicates()
        K.sort_indices()
        return K

    def _quad(self):
        """Gauss points Y on all edges and B[l, q] = w_q p(y_q) ψ_l(y_q)."""
        ys, rows, cols, vals = [], [], [], []
        q0 = 0
        for e, nodes, dofs in zip(self.decomp.edges, self.nodes, self.dofs):
            h = np.diff(nodes)
            for s, w in zip(_GS, _GW):
                t = 0.5 * (1 + s)
                yq = nodes[:-1] + t * h
                wq = 0.5 * w * h * e.p(yq)
                q = q0 + np.arange(len(yq))
                rows += [dofs[:-1], dofs[1:]]
                cols += [q, q]
                vals += [wq * (1 - t), wq * t]
                ys.append(yq)
                q0 += len(yq)
        self.quad_y = np.concatenate(ys)
        self.B = sps.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                                shape=(self.n_loc, q0))

    def edge_values(self, U, e_index, y):
        """Interpolate nodal vectors U[..., n_loc] on edge ``e_index`` at heights y."""
        nodes, dofs = self.nodes[e_index], self.dofs[e_index]
        y = np.atleast_1d(np.asarray(y, dtype=float))
        k = np.clip(np.searchsorted(nodes, y, side="right") - 1, 0, len(nodes) - 2)
        t = (y - nodes[k]) / (nodes[k + 1] - nodes[k])
        U = np.asarray(U)
        return U[..., dofs[k]] * (1 - t) + U[..., dofs[k + 1]] * t

    def one_sided_derivative(self, U, e_index, end):
        nodes, dofs = self.nodes[e_index], self.dofs[e_index]
        if end == "bottom":
            return (U[..., dofs[1]] - U[..., dofs[0]]) / (nodes[1] - nodes[0])
        return (U[..., dofs[-1]] - U[..., dofs[-2]]) / (nodes[-1] - nodes[-2])


def theta_mass(x, theta):
    """∫ θ φ_a φ_b on the 1D P1 mesh x with θ interpolated as P1 (exact)."""
    h = np.diff(x)
    ta, tb = theta[:-1], theta[1:]
    n = len(x)
    i = np.arange(n - 1)
    rows = np.concatenate([i, i + 1, i, i + 1])
    cols = np.concatenate([i, i + 1, i + 1, i])
    vals = np.concatenate([ta * h / 4 + tb * h / 12, tb * h / 4 + ta * h / 12,
                           (ta + tb) * h / 12, (ta + tb) * h / 12])
    return sps.csr_matrix((vals, (rows, cols)), shape=(n, n))


def indicator_mass(x, intervals):
    """∫ χ φ_a φ_b for χ the indicator of a union of intervals whose ends are nodes of x."""
    mid = 0.5 * (x[:-1] + x[1:])
    chi = np.zeros(len(mid))
    for lo, hi in intervals:
        chi[(mid > lo) & (mid < hi)] = 1.0
    h = np.diff(x) * chi
    n = len(x)
    i = np.arange(n - 1)
    rows = np.concatenate([i, i + 1, i, i + 1])
    cols = np.concatenate([i, i + 1, i + 1, i])
    vals = np.concatenate([h / 3, h / 3, h / 6, h / 6])
    return sps.csr_matrix((vals, (rows, cols)), shape=(n, n))


@dataclass(eq=False)
class LimitSolution:
    """Base field plus graph fields ``U[s, l]`` at the trace nodes of Ω'.

    Rows of ``U`` for nodes in Θ₀ are zero (u^a := 0 there); ``U[s, 0]``
    equals the base value at x_s for all other nodes.
    """
    base: DiscreteField
    graph: GraphMesh
    x: np.ndarray
    trace_index: np.ndarray
    U: np.ndarray
    density: DensityField
    dropped: np.ndarray
    A_base: sps.csr_matrix
    T: sps.csr_matrix
    b_base: np.ndarray
    b_graph: np.ndarray
    system: sps.csr_matrix = None   # coupled matrix over base + surviving graph DOFs

    @property
    def graph_nodes(self):
        return self.trace_index[~self.dropped]

    def edge_field(self, i, j):
        """(y nodes, values (n_nodes_in_Ω', n_y)) of u_i^j for every trace node."""
        e = self.graph.decomp.edge_index(i, j)
        return self.graph.nodes[e], self.U[:, self.graph.dofs[e]]

    def energy(self):
        """E = a(u, u) split into (base part, graph part)."""
        ub = self.base.coefficients
        u = self.U.ravel()
        return float(ub @ (self.A_base @ ub)), float(u @ (self.T @ u))

    def source_term(self):
        """∫ f u^b + ∫ θ Σ ∫ p f u_i^j."""
        return float(self.b_base @ self.base.coefficients + self.b_graph.ravel() @ self.U.ravel())


def _graph_load(graph, x, theta, f):
    """b[s, l] = ∫ θ(x) φ_s(x) Σ ∫ p f(x, y) ψ_l(y) dy dx (3-point Gauss in x and y)."""
    n = len(x)
    out = np.zeros((n, graph.n_loc))
    h = np.diff(x)
    Y = graph.quad_y
    for s, w in zip(_GS, _GW):
        t = 0.5 * (1 + s)
        xq = x[:-1] + t * h
        th = (1 - t) * theta[:-1] + t * theta[1:]
        F = f(xq[:, None], Y[None, :])                   # (n-1, nq)
        G = (graph.B @ F.T).T                             # (n-1, n_loc)
        c = (0.5 * w * h * th)[:, None] * G
        out[:-1] += (1 - t) * c
        out[1:] += t * c
    return out


def solve_limit(base_mesh: TriMesh, trace_nodes, omega_prime, decomp: GraphDecomposition,
                theta: DensityField, f, h_y: float, tol: float = 1e-10) -> LimitSolution:
    """Assemble and solve the coupled system by CG.

    ``trace_nodes`` are indices of base vertices on the top side sorted by
    x; the graph part lives on those inside the closure of ``omega_prime``,
    whose samples ``theta`` must provide (same order).
    """
    f = as_field(f)
    graph = GraphMesh(decomp, h_y)
    trace_nodes = np.asarray(trace_nodes)
    xt = base_mesh.vertices[trace_nodes, 0]
    a, b = omega_prime
    inside = np.nonzero((xt >= a - 1e-13) & (xt <= b + 1e-13))[0]
    idx = trace_nodes[inside]
    x = xt[inside]
    if len(theta.values) != len(x) or np.max(np.abs(theta.nodes - x), initial=0.0) > 1e-12:
        raise ValueError("density must be sampled at the trace nodes inside omega'")
    th = theta.values
    dropped = theta.theta0_mask

    A_base = assemble(base_mesh)
    b_base = load(base_mesh, f)
    nb = base_mesh.n_vertices
    ns, nl = len(x), graph.n_loc

    keep = ~dropped
    n_graph = int(keep.sum()) * (nl - 1)
    # map full tensor DOFs (s, l) to global indices; dropped nodes map nowhere
    gmap = np.full((ns, nl), -1, dtype=np.int64)
    gmap[keep, 0] = idx[keep]
    gmap[keep, 1:] = nb + np.arange(n_graph).reshape(-1, nl - 1)
    full = np.nonzero(gmap.ravel() >= 0)[0]
    P = sps.csr_matrix((np.ones(len(full)), (full, gmap.ravel()[full])), shape=(ns * nl, nb + n_graph))

    Mth = theta_mass(x, np.where(dropped, 0.0, th))
    T = sps.kron(Mth, graph.K, format="csr")
    b_graph = _graph_load(graph, x, np.where(dropped, 0.0, th), f)

    if n_graph == 0:
        A, rhs = A_base, b_base
    else:
        A = sps.block_diag([A_base, sps.csr_matrix((n_graph, n_graph))], format="csr") + P.T @ T @ P
        A = sps.csr_matrix(A)
        A.sum_duplicates()
        A.sort_indices()
        rhs = np.concatenate([b_base, np.zeros(n_graph)]) + P.T @ b_graph.ravel()
    u = solve_spd(A, rhs, tol=tol)
    U = (P @ u).reshape(ns, nl)
    return LimitSolution(DiscreteField(base_mesh, u[:nb]), graph, x, idx, U, theta, dropped,
                         A_base, T, b_base, b_graph, A)


def solve_limit_on_brush(brush: BrushMesh, decomp: GraphDecomposition, theta: DensityField, f,
                         h_y: float, tol: float = 1e-10) -> LimitSolution:
    """solve_limit on the base part of a brush mesh (same base numbering)."""
    return solve_limit(brush.base, brush.trace, brush.spec.omega_prime, decomp, theta, f, h_y, tol)


# ------------------------------------------------------------ single-graph fixture

@dataclass(eq=False)
class GraphSolution:
    graph: GraphMesh
    U: np.ndarray

    def edge_values(self, i, j, y):
        return self.graph.edge_values(self.U, self.graph.decomp.edge_index(i, j), y)


def solve_graph(decomp: GraphDecomposition, h_y: float, root_value: float, g=None, theta: float = 1.0):
    """θ Σ ∫ p (u'v' + uv) = θ Σ ∫ p g v with u = root_value at the root (fixed trace)."""
    graph = GraphMesh(decomp, h_y)
    K = (theta * graph.K).tocsr()
    rhs = np.zeros(graph.n_loc)
    if g is not None:
        rhs += theta * (graph.B @ np.asarray(g(graph.quad_y), dtype=float))
    free = np.arange(1, graph.n_loc)
    rhs = rhs[free] - root_value * K[free, 0].toarray().ravel()
    U = np.empty(graph.n_loc)
    U[0] = root_value
    U[free] = solve_spd(K[free][:, free], rhs, tol=1e-13)
    return GraphSolution(graph, U)


# ------------------------------------------------------------ post-processing

def _vertex_edges(decomp: GraphDecomposition):
    """For every reference vertex, the list of edge indices of its incident triangles."""
    mesh = decomp.mesh
    out = [set() for _ in range(mesh.n_vertices)]
    for t, e in enumerate(decomp.tri_edge):
        for v in mesh.triangles[t]:
            out[v].add(int(e))
    return [sorted(s) for s in out]


def averaging_weights(x, intervals, lengths):
    """W[n, s] with Σ_s W[n, s] g_s = (1/|ω^n|) ∫_{ω^n} (P1 interpolant of g) dz.

    Interval ends must be nodes of x.
    """
    W = np.zeros((len(intervals), len(x)))
    for n, (lo, hi) in enumerate(intervals):
        a = int(np.argmin(np.abs(x - lo)))
        b = int(np.argmin(np.abs(x - hi)))
        if abs(x[a] - lo) > 1e-12 or abs(x[b] - hi) > 1e-12:
            raise ValueError("tooth base ends are not trace nodes")
        h = np.diff(x[a:b + 1])
        W[n, a:b] += 0.5 * h
        W[n, a + 1:b + 1] += 0.5 * h
        W[n] /= hi - lo
    return W


def reconstruct_ubar(limit: LimitSolution, brush: BrushMesh) -> DiscreteField:
    """ū^a_ε on the teeth: x-average of u^a over each ω^n, placed at the tooth nodes."""
    decomp = limit.graph.decomp
    ref = brush.reference
    if decomp.mesh is not ref and decomp.mesh.n_vertices != ref.n_vertices:
        raise ValueError("decomposition was not built on the brush reference mesh")
    W = averaging_weights(limit.x, brush.spec.base_intervals(), brush.spec.lengths)
    avg = W @ limit.U                                  # (N, n_loc)
    vals = np.full((brush.spec.n_teeth, ref.n_vertices), np.nan)
    ve = _vertex_edges(decomp)
    y = ref.vertices[:, 1]
    by_edge = {}
    for v, es in enumerate(ve):
        for e in es:
            by_edge.setdefault(e, []).append(v)
    for e, vs in by_edge.items():
        vs = np.array(vs)
        got = limit.graph.edge_values(avg, e, y[vs])    # (N, len(vs))
        prev = vals[:, vs]
        clash = ~np.isnan(prev) & (np.abs(prev - got) > 1e-10 * max(1.0, np.abs(got).max(initial=0)))
        if np.any(clash):
            raise AssertionError("graph fields disagree across a joint")
        vals[:, vs] = got
    full = np.zeros(brush.mesh.n_vertices)
    full[brush.tooth_nodes] = vals
    teeth, used = brush.teeth
    return DiscreteField(teeth, full[used])


def energies(u_eps: DiscreteField, limit: LimitSolution, brush: BrushMesh):
    """(E_ε, E, Ē_ε).

    E_ε is the base energy of u_ε plus the unfolded tooth energy on W; E the
    limit energy with weight θ; Ē_ε the limit energy with χ_{ω_ε} in place
    of θ.
    """
    A_b = assemble(brush.base)
    ub = u_eps.coefficients[:brush.n_base]
    e_base = float(ub @ (A_b @ ub))
    uf = unfold(u_eps, brush)
    ref = brush.reference
    area, g = element_geometry(ref.vertices, ref.triangles)
    blk = uf.blocks[:, ref.triangles]                 # (N, m, 3)
    grad = np.einsum("nma,mad->nmd", blk, g)
    l = brush.spec.lengths[:, None]
    dens = (grad[..., 0] / l) ** 2 + grad[..., 1] ** 2 + np.sum((blk @ QUAD_BARY.T) ** 2, axis=2) / 3.0
    e_teeth = float(np.sum(l * area[None, :] * dens))
    E_eps = e_base + e_teeth

    eb, eg = limit.energy()
    E = eb + eg
    Mchi = indicator_mass(limit.x, brush.spec.base_intervals())
    Tchi = sps.kron(Mchi, limit.graph.K, format="csr")
    u = limit.U.ravel()
    Ebar = eb + float(u @ (Tchi @ u))
    return E_eps, E, Ebar


def flux_residuals(limit: LimitSolution):
    """Kirchhoff, top Neumann and base-flux residuals over surviving trace nodes.

    Returns a dict with ``joints`` {(i, k): value}, ``top`` (max |u'(a_M)|
    over last-slab edges), ``base_flux`` (L2 norm over Ω' of
    ∂_y u^b - θ p(0) u'(0)) and ``base_flux_max``; the maximum is dominated
    by the corners of Ω' and does not decay like the L2 norm.
    """
    graph = limit.graph
    decomp = graph.decomp
    U = limit.U[~limit.dropped]
    out = {"joints": {}, "top": 0.0, "base_flux": 0.0, "base_flux_max": 0.0}
    if len(U) == 0:
        return out
    for jt in decomp.joints:
        a = decomp.levels[jt.i]
        r = np.zeros(len(U))
        for j in jt.below:
            e = decomp.edge_index(jt.i, j)
            r += decomp.edges[e].p(a) * graph.one_sided_derivative(U, e, "top")
        for j in jt.above:
            e = decomp.edge_index(jt.i + 1, j)
            r -= decomp.edges[e].p(a) * graph.one_sided_derivative(U, e, "bottom")
        out["joints"][(jt.i, jt.k)] = float(np.max(np.abs(r)))
    tops = [n for n, e in enumerate(decomp.edges) if e.i == decomp.M]
    out["top"] = float(max(np.max(np.abs(graph.one_sided_derivative(U, e, "top"))) for e in tops))

    root = decomp.edge_index(1, 1)
    g = limit.density.values[~limit.dropped] * decomp.root.p(0.0) * graph.one_sided_derivative(U, root, "bottom")
    dyb = _base_top_dy(limit.base, limit.graph_nodes)
    r = dyb - g
    x = limit.x[~limit.dropped]
    w = np.zeros(len(x)) if len(x) > 1 else np.ones(1)
    w[:-1] += 0.5 * np.diff(x)   # trapezoid weights
    w[1:] += 0.5 * np.diff(x)
    out["base_flux"] = float(np.sqrt(np.sum(w * r * r)))
    out["base_flux_max"] = float(np.max(np.abs(r)))
    return out


def _base_top_dy(base: DiscreteField, nodes):
    """∂_y u^b at top nodes: length-weighted mean over the adjacent boundary triangles."""
    mesh = base.mesh
    grads = base.gradients()
    y = mesh.vertices[:, 1]
    top_tri = np.nonzero(np.sum(np.abs(y[mesh.triangles]) <= 1e-14, axis=1) == 2)[0]
    acc = np.zeros(mesh.n_vertices)
    cnt = np.zeros(mesh.n_vertices)
    for t in top_tri:
        vs = [v for v in mesh.triangles[t] if abs(y[v]) <= 1e-14]
        w = abs(mesh.vertices[vs[0], 0] - mesh.vertices[vs[1], 0])
        for v in vs:
            acc[v] += w * grads[t, 1]
            cnt[v] += w
    return acc[nodes] / np.where(cnt[nodes] > 0, cnt[nodes], 1.0)


def write_limit(fh, limit: LimitSolution):
    """Graph export, base coefficients, then per trace node the nodal values of each edge."""
    write_graph(fh, limit.graph.decomp)
    fh.write("# brushhom-limit v1\n")
    fh.write(f"base_coefficients {len(limit.base.coefficients)}\n")
    np.savetxt(fh, limit.base.coefficients, fmt="%.17g")
    fh.write(f"trace_nodes {len(limit.x)}\n")
    for s, (x, t, d) in enumerate(zip(limit.x, limit.density.values, limit.dropped)):
        if d:
            fh.write(f"node {s} {x:.17g} {t:.17g} dropped\n")
            continue
        fh.write(f"node {s} {x:.17g} {t:.17g}\n")
        for e, dofs in zip(limit.graph.decomp.edges, limit.graph.dofs):
            fh.write(f"edge {e.i} {e.j} " + " ".join(f"{v:.17g}" for v in limit.U[s, dofs]) + "\n")
