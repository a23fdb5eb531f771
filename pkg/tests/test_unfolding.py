import copy
import io

import numpy as np
import pytest

from brushhom.errors import MeshError
from brushhom.direct import solve_direct
from brushhom.fem import DiscreteField, h1_error, h1_norm
from brushhom.geometry import cylinder, figure5_normalized, place_periodic
from brushhom.kernels import element_geometry
from brushhom.meshing import BrushMesh, TriMesh, mesh_brush, mesh_tooth_reference
from brushhom.unfolding import (f_unfold_gap, tau_grad_x_l2, trace_compat, unfold, unfold_derivatives,
                                write_unfolded)


@pytest.fixture(scope="module")
def fig_brush():
    spec = place_periodic((0, 1), 0.25, 0.5, figure5_normalized())
    return mesh_brush(spec, 1 / 16, 1 / 8)


def teeth_l2(bm, u):
    teeth, used = bm.teeth
    return h1_error(teeth, u.coefficients[used], DiscreteField(teeth, np.zeros(teeth.n_vertices)))[0]


def test_constant_unfolds_to_constant(brush4):
    u = DiscreteField(brush4.mesh, np.full(brush4.mesh.n_vertices, 2.5))
    uf = unfold(u)
    assert np.all(uf.blocks == 2.5)
    assert uf.value_zero_region(np.array([0.0, 0.05, 0.125, 0.2, 0.99])).tolist() == [True, True, False, True, True]


def test_l2_isometry(fig_brush, rng):
    bm = fig_brush
    teeth, used = bm.teeth
    for _ in range(5):
        u = DiscreteField(bm.mesh, rng.standard_normal(bm.mesh.n_vertices))
        uf = unfold(u)
        assert uf.l2_norm() == pytest.approx(teeth_l2(bm, u), rel=1e-12)
        per = uf.l2_norm_sq_per_tooth()
        for n in range(bm.spec.n_teeth):
            sel = bm.mesh.tooth_id[bm.mesh.tooth_id >= 0] == n
            zero = DiscreteField(teeth, np.zeros(teeth.n_vertices))
            direct = h1_error(teeth, u.coefficients[used], zero, triangles=sel)[0] ** 2
            assert per[n] == pytest.approx(direct, rel=1e-12)


def test_derivative_relations(fig_brush, rng):
    bm = fig_brush
    u = DiscreteField(bm.mesh, rng.standard_normal(bm.mesh.n_vertices))
    dy, dxi = unfold_derivatives(u)
    g = u.gradients()[bm.tooth_triangles]
    scale = np.abs(g).max()
    assert np.max(np.abs(dy - g[..., 1])) <= 1e-13 * scale
    assert np.max(np.abs(dxi - bm.spec.lengths[:, None] * g[..., 0])) <= 1e-13 * scale


def test_linear_in_y_gives_constant_dy(brush4):
    y = brush4.mesh.vertices[:, 1]
    dy, dxi = unfold_derivatives(DiscreteField(brush4.mesh, 3 * y - 1))
    np.testing.assert_allclose(dy, 3.0, atol=1e-12)
    np.testing.assert_allclose(dxi, 0.0, atol=1e-12)


def test_dxi_bound(fig_brush, rng):
    bm = fig_brush
    u = DiscreteField(bm.mesh, rng.standard_normal(bm.mesh.n_vertices))
    uf = unfold(u)
    _, dxi = unfold_derivatives(u)
    area, _ = element_geometry(bm.reference.vertices, bm.reference.triangles)
    lhs = np.sqrt(np.sum(bm.spec.lengths[:, None] * area * dxi ** 2))
    rhs = bm.spec.c_scale * bm.spec.epsilon * tau_grad_x_l2(u)
    assert lhs <= rhs * (1 + 1e-12)


def test_linearity_and_product(brush4, rng):
    n = brush4.mesh.n_vertices
    a, b = rng.standard_normal(n), rng.standard_normal(n)
    ua, ub = unfold(DiscreteField(brush4.mesh, a)), unfold(DiscreteField(brush4.mesh, b))
    lin = unfold(DiscreteField(brush4.mesh, 2 * a - 3 * b))
    assert np.array_equal(lin.blocks, 2 * ua.blocks - 3 * ub.blocks)
    prod = unfold(DiscreteField(brush4.mesh, a * b))
    assert np.array_equal(prod.blocks, ua.blocks * ub.blocks)


def test_integral_preservation(fig_brush, rng):
    bm = fig_brush
    u = DiscreteField(bm.mesh, rng.standard_normal(bm.mesh.n_vertices))
    teeth, used = bm.teeth
    direct = float(np.sum(teeth.areas() * u.coefficients[used][teeth.triangles].mean(axis=1)))
    assert unfold(u).integral() == pytest.approx(direct, rel=1e-12, abs=1e-12)


def test_trace_compat_zero(brush4, rng):
    u = DiscreteField(brush4.mesh, rng.standard_normal(brush4.mesh.n_vertices))
    assert trace_compat(u, brush4) == 0.0
    assert trace_compat(solve_direct(brush4, "1 + y + x"), brush4) == 0.0


def broken_copy(bm):
    """Tooth 0 gets its own copies of the base nodes: a mesh glued nowhere."""
    mesh = bm.mesh
    bn = bm.reference.meta["base_nodes"]
    old = bm.tooth_nodes[0, bn]
    new = np.arange(mesh.n_vertices, mesh.n_vertices + len(bn))
    remap = np.arange(mesh.n_vertices + len(bn))
    remap[old] = new
    tris = mesh.triangles.copy()
    tt = bm.tooth_triangles[0]
    tris[tt] = remap[tris[tt]]
    verts = np.concatenate([mesh.vertices, mesh.vertices[old]])
    m2 = TriMesh(verts, tris, mesh.tooth_id, mesh.component)
    tn = bm.tooth_nodes.copy()
    tn[0, bn] = new
    b2 = BrushMesh(bm.spec, m2, bm.reference, tn, bm.tooth_triangles, bm.n_base, bm.trace, bm.h_base)
    m2.meta["brush"] = b2
    return b2


def test_trace_compat_detects_broken_mesh(brush4):
    b2 = broken_copy(brush4)
    c = np.zeros(b2.mesh.n_vertices)
    c[brush4.mesh.n_vertices:] = 1.0
    assert trace_compat(DiscreteField(b2.mesh, c), b2) == 1.0


def test_foreign_mesh_rejected(brush4):
    other = mesh_tooth_reference(cylinder(), 0.25)
    with pytest.raises(MeshError):
        unfold(DiscreteField(other, np.zeros(other.n_vertices)))
    with pytest.raises(MeshError):
        unfold(DiscreteField(other, np.zeros(other.n_vertices)), brush4)


def test_f_gap_constant():
    ref = mesh_tooth_reference(cylinder(), 1 / 8)
    assert f_unfold_gap(3.0, place_periodic((0, 1), 0.125, 0.5, cylinder()), ref) == 0.0


def test_f_gap_lipschitz_rate():
    ref = mesh_tooth_reference(cylinder(), 1 / 8)
    g = [f_unfold_gap("x", place_periodic((0, 1), 2.0 ** -k, 0.5, cylinder()), ref) for k in (3, 4)]
    assert g[1] / g[0] <= 0.5


def test_f_gap_oscillatory_decreasing():
    ref = mesh_tooth_reference(figure5_normalized(), 1 / 8)
    g = [f_unfold_gap("sin(3*x)*cos(y)", place_periodic((0, 1), 2.0 ** -k, 0.5, figure5_normalized()), ref)
         for k in range(3, 7)]
    assert all(b < a for a, b in zip(g, g[1:]))


def test_unfolded_export(brush4):
    u = DiscreteField(brush4.mesh, brush4.mesh.vertices[:, 1].copy())
    buf = io.StringIO()
    write_unfolded(buf, unfold(u))
    text = buf.getvalue()
    assert text.startswith("# brushhom-unfolded v1\n")
    heads = [ln for ln in text.splitlines() if ln.startswith("tooth ")]
    assert len(heads) == 4 and heads[0].split()[1] == "1"
    assert float(heads[1].split()[2]) == brush4.spec.centers[1]
