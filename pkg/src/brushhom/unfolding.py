"""Unfolding of tooth fields onto W = Ω' x Y.

Because every tooth mesh is an affine copy of the reference mesh, the
unfolded field on ω^n x Y is the tooth-n coefficient block read through
the instancing map: no interpolation is involved. Outside ω_ε the
unfolded field is zero, so integrals over W reduce to sums over teeth with
x-measure l^n.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import MeshError
from .fem import DiscreteField, tri5_points
from .functions import as_field
from .geometry import BrushSpec
from .kernels import QUAD_BARY, element_geometry
from .meshing import BrushMesh, TriMesh


@dataclass(eq=False)
class UnfoldedField:
    """Per-tooth blocks ``blocks[n, r]`` = u at reference vertex r of tooth n."""
    spec: BrushSpec
    reference: TriMesh
    blocks: np.ndarray

    def _ref_geometry(self):
        return element_geometry(self.reference.vertices, self.reference.triangles)

    def l2_norm_sq_per_tooth(self):
        """||τ u||^2 over ω^n x Y for each n (exact for P1 data)."""
        area, _ = self._ref_geometry()
        q = self.blocks[:, self.reference.triangles] @ QUAD_BARY.T  # (N, m, 3)
        cell = np.sum(area[None, :] / 3.0 * np.sum(q ** 2, axis=2), axis=1)
        return self.spec.lengths * cell

    def l2_norm(self):
        return float(np.sqrt(np.sum(self.l2_norm_sq_per_tooth())))

    def integral(self):
        area, _ = self._ref_geometry()
        cell = np.sum(area[None, :] * self.blocks[:, self.reference.triangles].mean(axis=2), axis=1)
        return float(np.sum(self.spec.lengths * cell))

    def value_zero_region(self, x):
        """True where x lies outside every tooth base ω^n (the field is 0 there)."""
        x = np.asarray(x, dtype=float)
        lo, hi = self.spec.base_intervals().T
        inside = (x[..., None] > lo) & (x[..., None] < hi)
        return ~inside.any(axis=-1)


def _brush_of(u: DiscreteField, brush: BrushMesh | None):
    owner = u.mesh.meta.get("brush") if isinstance(u.mesh.meta, dict) else None
    if brush is None:
        brush = owner
    if brush is None or u.mesh is not brush.mesh:
        raise MeshError("field does not live on an instanced brush mesh")
    return brush


def unfold(u: DiscreteField, brush: BrushMesh | None = None) -> UnfoldedField:
    brush = _brush_of(u, brush)
    return UnfoldedField(brush.spec, brush.reference, u.coefficients[brush.tooth_nodes])


def unfold_derivatives(u: DiscreteField, brush: BrushMesh | None = None):
    """(∂_y, ∂_ξ) of the unfolded field, one value per (tooth, reference triangle)."""
    uf = unfold(u, brush)
    _, g = element_geometry(uf.reference.vertices, uf.reference.triangles)
    grad = np.einsum("nma,mad->nmd", uf.blocks[:, uf.reference.triangles], g)
    return grad[..., 1], grad[..., 0]


def tau_grad_x_l2(u: DiscreteField, brush: BrushMesh | None = None) -> float:
    """||τ_ε(∂_x u)||_{L2(W)}, computed on the unfolded side as ∂_ξ/l."""
    uf = unfold(u, brush)
    area, _ = element_geometry(uf.reference.vertices, uf.reference.triangles)
    _, dxi = unfold_derivatives(u, brush)
    dx = dxi / uf.spec.lengths[:, None]
    return float(np.sqrt(np.sum(uf.spec.lengths[:, None] * area[None, :] * dx ** 2)))


def trace_compat(u: DiscreteField, brush: BrushMesh) -> float:
    """Max |Tr^a(τ u) - Tr^b(u)(x̄ + lξ)| over all reference base nodes.

    The tooth side is read through ``tooth_nodes``; the base side is the
    base-mesh vertex located geometrically at (x̄ + lξ, 0).
    """
    bnodes = brush.reference.meta["base_nodes"]
    xi = brush.reference.vertices[bnodes, 0]
    tx = brush.mesh.vertices[brush.trace, 0]
    worst = 0.0
    for n in range(brush.spec.n_teeth):
        x = brush.spec.centers[n] + brush.spec.lengths[n] * xi
        k = np.clip(np.searchsorted(tx, x), 0, len(tx) - 1)
        k = np.where(np.abs(tx[np.maximum(k - 1, 0)] - x) < np.abs(tx[k] - x), np.maximum(k - 1, 0), k)
        if np.max(np.abs(tx[k] - x)) > 1e-12:
            raise MeshError(f"tooth {n} base node has no matching base vertex")
        base_vals = u.coefficients[brush.trace[k]]
        tooth_vals = u.coefficients[brush.tooth_nodes[n, bnodes]]
        worst = max(worst, float(np.max(np.abs(tooth_vals - base_vals))))
    return worst


_GX = np.polynomial.legendre.leggauss(5)


def f_unfold_gap(f, spec: BrushSpec, reference: TriMesh) -> float:
    """∫_W |τ_ε(f) - f(x, y) χ_{ω_ε}(x)|^2, by quadrature.

    x runs over each ω^n with 5-point Gauss, (ξ, y) over the reference mesh
    with the degree-5 triangle rule.
    """
    f = as_field(f)
    pts, w = tri5_points(reference.vertices, reference.triangles)
    xi, y = pts[..., 0].ravel(), pts[..., 1].ravel()
    w = w.ravel()
    s, gw = _GX
    total = 0.0
    for (lo, hi), c, l in zip(spec.base_intervals(), spec.centers, spec.lengths):
        xs = 0.5 * (lo + hi) + 0.5 * (hi - lo) * s
        ftau = f(c + l * xi, y)
        for xk, wk in zip(xs, gw):
            total += 0.5 * (hi - lo) * wk * np.sum(w * (ftau - f(np.full_like(y, xk), y)) ** 2)
    return float(total)


def write_unfolded(fh, uf: UnfoldedField):
    """``# brushhom-unfolded v1`` then, per tooth, ``tooth n xbar l`` + one value per reference vertex."""
    fh.write("# brushhom-unfolded v1\n")
    fh.write(f"reference_vertices {uf.reference.n_vertices}\n")
    for n, (c, l) in enumerate(zip(uf.spec.centers, uf.spec.lengths)):
        fh.write(f"tooth {n + 1} {c:.17g} {l:.17g}\n")
        np.savetxt(fh, uf.blocks[n], fmt="%.17g")
