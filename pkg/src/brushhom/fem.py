"""P1 finite elements on triangle meshes and on 1D grids.

The bilinear form is a_w(u, v) = int w (grad u . grad v + u v) with the
interior 3-point rule on triangles. Constant-gradient stiffness only needs
the mean of w over the element, which that rule gives exactly for affine w.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sps

from .errors import AssemblyError, ConvergenceError, NotSPDError
from .functions import as_field
from .kernels import QUAD_BARY, assemble_triplets, element_geometry, pcg, quad_points


@dataclass(eq=False)
class DiscreteField:
    mesh: object
    coefficients: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coefficients, dtype=np.float64)
        if c.shape != (self.mesh.n_vertices,):
            raise ValueError(f"expected {self.mesh.n_vertices} coefficients, got {c.shape}")
        if not np.all(np.isfinite(c)):
            raise ValueError("non-finite coefficients")
        self.coefficients = c

    def gradients(self):
        """Constant gradient on each triangle, shape (m, 2)."""
        _, g = element_geometry(self.mesh.vertices, self.mesh.triangles)
        return np.einsum("ma,mad->md", self.coefficients[self.mesh.triangles], g)


def _weights_at_quad(mesh, weight, triangles):
    m = len(triangles)
    if weight is None:
        return np.ones((m, 3))
    if isinstance(weight, (int, float, np.number)):
        return np.full((m, 3), float(weight))
    if isinstance(weight, np.ndarray):
        w = weight.astype(float)
        if w.shape == (m,):
            return np.repeat(w[:, None], 3, axis=1)
        if w.shape == (m, 3):
            return w
        raise AssemblyError(f"weight array has shape {w.shape}, expected ({m},) or ({m}, 3)")
    qp = quad_points(mesh.vertices, triangles)
    return as_field(weight)(qp[..., 0], qp[..., 1])


def assemble(mesh, weight=None, parallel: bool = False) -> sps.csr_matrix:
    """Weighted stiffness+mass matrix in CSR form.

    ``weight`` may be None (w = 1), a number, a per-element array of shape
    (m,) or (m, 3) (values at the quadrature points) or a field. The
    triplets are summed in element order, so the result is bitwise
    reproducible; ``parallel`` only changes how triplets are produced.
    """
    area, grads = element_geometry(mesh.vertices, mesh.triangles)
    wq = _weights_at_quad(mesh, weight, mesh.triangles)
    if not np.all(np.isfinite(wq)) or np.any(wq < 0):
        raise AssemblyError("weight must be finite and nonnegative at every quadrature point")
    rows, cols, vals = assemble_triplets(mesh.triangles, area, grads, wq, parallel)
    n = mesh.n_vertices
    A = sps.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    A.sum_duplicates()
    A.sort_indices()
    return A


def load(mesh, f, weight=None) -> np.ndarray:
    """b[v] = int w f phi_v with f evaluated at quadrature points."""
    area, _ = element_geometry(mesh.vertices, mesh.triangles)
    qp = quad_points(mesh.vertices, mesh.triangles)
    fq = as_field(f)(qp[..., 0], qp[..., 1]) * _weights_at_quad(mesh, weight, mesh.triangles)
    local = np.einsum("mq,qa->ma", fq, QUAD_BARY) * (area / 3.0)[:, None]
    return np.bincount(mesh.triangles.ravel(), local.ravel(), minlength=mesh.n_vertices)


def check_spd(A):
    """Cheap SPD preconditions: symmetry (1e-14 relative) and positive diagonal."""
    scale = abs(A).max() if A.nnz else 0.0
    asym = abs(A - A.T).max() if A.nnz else 0.0
    if asym > 1e-14 * scale:
        raise NotSPDError(f"matrix not symmetric (|A - A^T| = {asym:.3e})")
    if np.any(A.diagonal() <= 0):
        raise NotSPDError("matrix has a nonpositive diagonal entry")


def solve_spd(A, b, tol: float = 1e-10, max_iter: int | None = None, x0=None) -> np.ndarray:
    """Jacobi-preconditioned CG with relative residual ``tol``."""
    A = sps.csr_matrix(A)
    check_spd(A)
    b = np.asarray(b, dtype=np.float64)
    if not np.any(b):
        return np.zeros_like(b)
    n = len(b)
    max_iter = 10 * n + 100 if max_iter is None else max_iter
    x0 = np.zeros(n) if x0 is None else x0
    x, _, relres, status = pcg(A, b, x0, 1.0 / A.diagonal(), tol, max_iter)
    if status == 1:
        raise ConvergenceError(f"CG did not converge in {max_iter} iterations", relres)
    if status == 2:
        raise NotSPDError("CG breakdown: matrix is not positive definite")
    return x


def energy_norm(A, u):
    return float(np.sqrt(max(u @ (A @ u), 0.0)))


def h1_error(mesh, u, v, triangles=None):
    """(L2 norm, H1 seminorm) of u - v over the mesh or a triangle subset.

    ``u`` is a DiscreteField (or coefficient vector) on ``mesh``; ``v`` is a
    DiscreteField on the same mesh, or any field offering ``v(x, y)`` and
    ``v.grad(x, y)``.
    """
    uc = u.coefficients if isinstance(u, DiscreteField) else np.asarray(u, dtype=float)
    tris = mesh.triangles if triangles is None else mesh.triangles[triangles]
    area, grads = element_geometry(mesh.vertices, tris)
    if isinstance(v, DiscreteField):
        d = uc - v.coefficients
        dl = d[tris]
        dq = dl @ QUAD_BARY.T
        dg = np.einsum("ma,mad->md", dl, grads)
        l2 = np.sum(area / 3.0 * np.sum(dq ** 2, axis=1))
        semi = np.sum(area * np.sum(dg ** 2, axis=1))
        return float(np.sqrt(l2)), float(np.sqrt(semi))
    qp = quad_points(mesh.vertices, tris)
    ul = uc[tris]
    uq = ul @ QUAD_BARY.T
    ug = np.einsum("ma,mad->md", ul, grads)
    vq = v(qp[..., 0], qp[..., 1])
    gx, gy = v.grad(qp[..., 0], qp[..., 1])
    l2 = np.sum(area / 3.0 * np.sum((uq - vq) ** 2, axis=1))
    semi = np.sum(area / 3.0 * np.sum((ug[:, None, 0] - gx) ** 2 + (ug[:, None, 1] - gy) ** 2, axis=1))
    return float(np.sqrt(l2)), float(np.sqrt(semi))


def h1_norm(mesh, u, triangles=None):
    """Full H1 norm of a discrete field (exact for P1)."""
    zero = DiscreteField(mesh, np.zeros(mesh.n_vertices))
    l2, semi = h1_error(mesh, u, zero, triangles)
    return float(np.hypot(l2, semi))


# ------------------------------------------------------------ 1D

_G2 = np.array([-1.0, 1.0]) / np.sqrt(3.0)
_G3 = np.array([-np.sqrt(0.6), 0.0, np.sqrt(0.6)])
_W3 = np.array([5.0, 8.0, 5.0]) / 9.0


def assemble_1d(nodes, p=None):
    """int p (u'v' + u v) on a 1D P1 grid, as a dense-free CSR matrix.

    ``p`` is None or a callable affine on each element; the 2-point Gauss
    rule then integrates both terms exactly.
    """
    x = np.asarray(nodes, dtype=float)
    h = np.diff(x)
    n = len(x)
    k = np.zeros((n - 1, 2, 2))
    for s in _G2:
        t = 0.5 * (1 + s)
        xq = x[:-1] + t * h
        pq = np.ones_like(xq) if p is None else np.asarray(p(xq), dtype=float)
        phi = np.array([1 - t, t])
        k += 0.5 * (pq * h)[:, None, None] * np.outer(phi, phi)[None]
        k += 0.5 * (pq / h)[:, None, None] * np.array([[1, -1], [-1, 1]])[None]
    idx = np.stack([np.arange(n - 1), np.arange(1, n)], axis=1)
    rows = np.repeat(idx, 2, axis=1).ravel()
    cols = np.tile(idx, (1, 2)).ravel()
    return sps.csr_matrix((k.ravel(), (rows, cols)), shape=(n, n))


def load_1d(nodes, g, p=None):
    """int p g phi_v with 3-point Gauss per element; g is a callable of y."""
    x = np.asarray(nodes, dtype=float)
    h = np.diff(x)
    b = np.zeros(len(x))
    for s, w in zip(_G3, _W3):
        t = 0.5 * (1 + s)
        xq = x[:-1] + t * h
        pq = np.ones_like(xq) if p is None else np.asarray(p(xq), dtype=float)
        v = 0.5 * w * h * pq * np.asarray(g(xq), dtype=float)
        b[:-1] += v * (1 - t)
        b[1:] += v * t
    return b


def l2_error_1d(nodes, u, exact):
    """L2 norm of (P1 u) - exact with 3-point Gauss per element."""
    x = np.asarray(nodes, dtype=float)
    h = np.diff(x)
    s2 = 0.0
    for s, w in zip(_G3, _W3):
        t = 0.5 * (1 + s)
        xq = x[:-1] + t * h
        uq = (1 - t) * u[:-1] + t * u[1:]
        s2 += np.sum(0.5 * w * h * (uq - exact(xq)) ** 2)
    return float(np.sqrt(s2))


# degree-5 rule on the reference triangle (7 points, barycentric)
_r15 = np.sqrt(15.0)
_a, _b = (9 - 2 * _r15) / 21, (6 + _r15) / 21
_c, _d = (9 + 2 * _r15) / 21, (6 - _r15) / 21
TRI5_BARY = np.array([[1 / 3, 1 / 3, 1 / 3],
                      [_a, _b, _b], [_b, _a, _b], [_b, _b, _a],
                      [_c, _d, _d], [_d, _c, _d], [_d, _d, _c]])
TRI5_W = np.array([9 / 40] + [(155 + _r15) / 1200] * 3 + [(155 - _r15) / 1200] * 3)


def tri5_points(vertices, triangles):
    """Points (m, 7, 2) and weights (m, 7) of the degree-5 rule."""
    p = vertices[triangles]
    area, _ = element_geometry(vertices, triangles)
    return np.einsum("qa,mad->mqd", TRI5_BARY, p), area[:, None] * TRI5_W[None, :]
