import os
import subprocess
import sys

import numpy as np
import pytest
import scipy.linalg as sla
import scipy.sparse as sps
from hypothesis import given, settings, strategies as st

from brushhom.errors import AssemblyError, ConvergenceError, NotSPDError
from brushhom.fem import (TRI5_BARY, TRI5_W, DiscreteField, assemble, assemble_1d, h1_error, load, solve_spd)
from brushhom.functions import ExprField
from brushhom.kernels import (_assemble_triplets_numba, _assemble_triplets_numpy, _pcg_numba, _pcg_numpy,
                              element_geometry)
from brushhom.meshing import TriMesh


def square_mesh(n):
    """Structured mesh of the unit square, 2 n^2 triangles."""
    x = np.linspace(0, 1, n + 1)
    X, Y = np.meshgrid(x, x, indexing="ij")
    v = np.stack([X.ravel(), Y.ravel()], axis=1)
    idx = lambda i, j: i * (n + 1) + j
    tris = []
    for i in range(n):
        for j in range(n):
            tris.append((idx(i, j), idx(i + 1, j), idx(i + 1, j + 1)))
            tris.append((idx(i, j), idx(i + 1, j + 1), idx(i, j + 1)))
    return TriMesh(v, np.array(tris))


def dense_oracle(mesh, w=lambda x, y: 1.0 + 0 * x):
    """Independent dense assembler: explicit formulas, python loops."""
    n = mesh.n_vertices
    A = np.zeros((n, n))
    bary = [(2 / 3, 1 / 6, 1 / 6), (1 / 6, 2 / 3, 1 / 6), (1 / 6, 1 / 6, 2 / 3)]
    for t in mesh.triangles:
        P = mesh.vertices[t]
        J = np.array([P[1] - P[0], P[2] - P[0]]).T
        area = 0.5 * abs(np.linalg.det(J))
        G = np.linalg.solve(J.T, np.array([[-1, 1, 0], [-1, 0, 1]], dtype=float))  # columns: grads
        pts = [sum(l * P[k] for k, l in enumerate(b)) for b in bary]
        ws = [w(*p) for p in pts]
        for a in range(3):
            for c in range(3):
                stiff = np.mean(ws) * area * G[:, a] @ G[:, c]
                mass = area / 3 * sum(wq * b[a] * b[c] for wq, b in zip(ws, bary))
                A[t[a], t[c]] += stiff + mass
    return A


def test_two_triangle_partition_of_unity():
    m = square_mesh(1)
    assert load(m, 1.0).sum() == pytest.approx(1.0, abs=1e-15)


@pytest.mark.parametrize("c", [0.0, 1.0, -2.5])
def test_constant_energy(c):
    m = square_mesh(4)
    u = np.full(m.n_vertices, c)
    assert u @ (assemble(m) @ u) == pytest.approx(c * c, abs=1e-13)


def test_random_field_matches_dense_oracle(rng):
    m = square_mesh(2)  # 8 triangles
    m.vertices[4] += [0.07, -0.05]  # break the structure
    A = assemble(m).toarray()
    D = dense_oracle(m)
    for _ in range(5):
        u = rng.standard_normal(m.n_vertices)
        assert u @ A @ u == pytest.approx(u @ D @ u, rel=1e-12, abs=1e-12)
    np.testing.assert_allclose(A, D, atol=1e-13)


def test_weighted_matches_dense_oracle():
    m = square_mesh(3)
    w = lambda x, y: 1.0 + x + 2 * y * y
    np.testing.assert_allclose(assemble(m, "1 + x + 2*y**2").toarray(), dense_oracle(m, w), atol=1e-13)


def test_negative_weight_rejected():
    with pytest.raises(AssemblyError):
        assemble(square_mesh(2), "x - 0.5")


def test_zero_weight_allowed():
    assert assemble(square_mesh(2), 0.0).nnz >= 0


def test_symmetry_and_positive_diagonal():
    A = assemble(square_mesh(5), "1 + x*y")
    assert abs(A - A.T).max() <= 1e-14 * abs(A).max()
    assert np.all(A.diagonal() > 0)


def test_linearity_in_weight_and_source(rng):
    m = square_mesh(4)
    A1, A2 = assemble(m, "1 + x"), assemble(m, "2 + y")
    A12 = assemble(m, "3*(1 + x) - 2*(2 + y) + 5")
    np.testing.assert_allclose(A12.toarray(), (3 * A1 - 2 * A2 + 5 * assemble(m)).toarray(), atol=1e-13)
    b = load(m, "2*sin(x) - 3*y")
    np.testing.assert_allclose(b, 2 * load(m, "sin(x)") - 3 * load(m, "y"), atol=1e-15)


def test_identity_solve(rng):
    b = rng.standard_normal(7)
    np.testing.assert_allclose(solve_spd(sps.identity(7, format="csr"), b), b, atol=1e-14)


def test_tridiagonal_vs_lu():
    n = 5
    A = sps.diags([-np.ones(n - 1), 2 * np.ones(n), -np.ones(n - 1)], [-1, 0, 1], format="csr")
    b = np.eye(n)[0]
    x = solve_spd(A, b, tol=1e-12)
    ref = sla.lu_solve(sla.lu_factor(A.toarray()), b)
    np.testing.assert_allclose(x, ref, atol=1e-10)


@pytest.mark.parametrize("M", [np.diag([1.0, -1.0]), np.array([[1.0, 2.0], [2.0, 1.0]]),
                               np.array([[1.0, 1.0], [0.0, 1.0]])])
def test_indefinite_or_nonsymmetric_rejected(M):
    with pytest.raises(NotSPDError):
        solve_spd(sps.csr_matrix(M), np.array([1.0, 0.3]))


def test_max_iter_carries_residual():
    m = square_mesh(8)
    A = assemble(m)
    with pytest.raises(ConvergenceError) as exc:
        solve_spd(A, load(m, "cos(7*x)*y"), tol=1e-14, max_iter=2)
    assert exc.value.residual > 1e-14


def test_residual_per_basis_function():
    m = square_mesh(8)
    A, b = assemble(m), load(m, "1 + x*y + cos(3*y)")
    u = solve_spd(A, b)
    assert np.max(np.abs(A @ u - b)) <= 1e-10 * np.linalg.norm(b)


def test_h1_error_self_interpolant_of_linear():
    m = square_mesh(4)
    v = ExprField("2*x - y + 0.5")
    u = v(m.vertices[:, 0], m.vertices[:, 1])
    l2, semi = h1_error(m, u, v)
    assert l2 < 1e-14 and semi < 1e-13


def test_h1_error_zero_vs_one():
    m = square_mesh(3)
    l2, semi = h1_error(m, np.zeros(m.n_vertices), ExprField("1"))
    assert l2 == pytest.approx(1.0, abs=1e-14) and semi == 0.0


def test_interpolation_order():
    v = ExprField("sin(pi*x)*sin(pi*y)")
    errs = []
    for n in [8, 16, 32]:
        m = square_mesh(n)
        errs.append(h1_error(m, v(m.vertices[:, 0], m.vertices[:, 1]), v)[0])
    ratios = np.array(errs[:-1]) / np.array(errs[1:])
    assert np.all((3.5 <= ratios) & (ratios <= 4.5)), ratios


def test_tri5_rule_degree_five():
    # monomials x^a y^b on the reference triangle: a! b! / (a+b+2)!
    from math import factorial
    pts = TRI5_BARY[:, 1:]
    for a in range(6):
        for b in range(6 - a):
            exact = factorial(a) * factorial(b) / factorial(a + b + 2)
            got = 0.5 * np.sum(TRI5_W * pts[:, 0] ** a * pts[:, 1] ** b)
            assert got == pytest.approx(exact, abs=1e-16)


def test_assembly_1d_affine_weight():
    x = np.linspace(0, 1, 5)
    A = assemble_1d(x, lambda y: 1 + y)
    u = np.ones(5)
    assert u @ A @ u == pytest.approx(1.5, abs=1e-15)
    assert x @ A @ x == pytest.approx(1.5 + (1 / 3 + 1 / 4), abs=1e-14)


def triplet_inputs(rng, n=6):
    m = square_mesh(n)
    area, grads = element_geometry(m.vertices, m.triangles)
    wq = rng.uniform(0.5, 2.0, size=(m.n_triangles, 3))
    return m.triangles.astype(np.int64), area, grads, wq


def test_numba_numpy_assembly_agree(rng):
    args = triplet_inputs(rng)
    r1, c1, v1 = _assemble_triplets_numpy(*args)
    r2, c2, v2 = _assemble_triplets_numba(*args)
    np.testing.assert_array_equal(r1, r2)
    np.testing.assert_array_equal(c1, c2)
    np.testing.assert_allclose(v1, v2, rtol=1e-14, atol=1e-14)


def test_parallel_assembly_bitwise(rng):
    args = triplet_inputs(rng, 20)
    s = _assemble_triplets_numba(*args, parallel=False)
    p = _assemble_triplets_numba(*args, parallel=True)
    for a, b in zip(s, p):
        assert np.array_equal(a, b)
    m = square_mesh(20)
    A1, A2 = assemble(m, "1+x", parallel=False), assemble(m, "1+x", parallel=True)
    assert np.array_equal(A1.data, A2.data) and np.array_equal(A1.indices, A2.indices)


def test_numba_numpy_pcg_agree():
    m = square_mesh(10)
    A, b = assemble(m), load(m, "x + y*y")
    d = 1 / A.diagonal()
    n = len(b)
    x1, it1, _, s1 = _pcg_numpy(A, b, np.zeros(n), d, 1e-12, 1000)
    x2, it2, _, s2 = _pcg_numba(A.indptr.astype(np.int64), A.indices.astype(np.int64), A.data, b,
                                np.zeros(n), d, 1e-12, 1000)
    assert s1 == s2 == 0 and abs(it1 - it2) <= 1
    np.testing.assert_allclose(x1, x2, atol=1e-12)


def test_numpy_fallback_flag():
    code = ("from brushhom import _accel; from brushhom.kernels import USE_NUMBA; assert not USE_NUMBA;"
            "from brushhom.fem import assemble, load, solve_spd;"
            "import sys; sys.path.insert(0, 'tests'); from test_fem import square_mesh;"
            "m = square_mesh(4); u = solve_spd(assemble(m), load(m, 1.0)); assert abs(u - 1).max() < 1e-9")
    env = dict(os.environ, BRUSHHOM_DISABLE_NUMBA="1")
    root = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
    subprocess.run([sys.executable, "-c", code], check=True, env=env, cwd=root)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=16, max_size=16), st.floats(0.1, 5))
def test_energy_is_nonnegative_and_scales(vals, w):
    m = square_mesh(3)
    u = np.array(vals)
    A = assemble(m)
    e = u @ (A @ u)
    assert e >= -1e-12
    assert u @ (assemble(m, w) @ u) == pytest.approx(w * e, rel=1e-12, abs=1e-12)


def test_discrete_field_rejects_bad_input():
    m = square_mesh(1)
    with pytest.raises(ValueError):
        DiscreteField(m, np.zeros(3))
    with pytest.raises(ValueError):
        DiscreteField(m, np.array([0, 0, np.nan, 0]))
