"""Inner loops: P1 element assembly and preconditioned CG on CSR arrays.

Every kernel has a numba implementation (``*_numba``) and a numpy one
(``*_numpy``); the undecorated name dispatches on ``USE_NUMBA``. Both
variants are kept importable so the benchmark and the tests can compare
them directly.
"""
import numpy as np

from ._accel import USE_NUMBA, njit, prange

# barycentric coordinates of the interior 3-point rule (degree 2)
QUAD_BARY = np.array([[2 / 3, 1 / 6, 1 / 6],
                      [1 / 6, 2 / 3, 1 / 6],
                      [1 / 6, 1 / 6, 2 / 3]])


def element_geometry(vertices, triangles):
    """Signed areas and constant basis gradients of every triangle.

    Returns ``area`` of shape (m,) and ``grads`` of shape (m, 3, 2) where
    ``grads[t, a]`` is the gradient of the hat function of local vertex a.
    """
    p = vertices[triangles]
    e1 = p[:, 1] - p[:, 0]
    e2 = p[:, 2] - p[:, 0]
    det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
    area = 0.5 * det
    # rows of inv(J)^T give grads of lambda_1, lambda_2
    g1 = np.stack([e2[:, 1], -e2[:, 0]], axis=1) / det[:, None]
    g2 = np.stack([-e1[:, 1], e1[:, 0]], axis=1) / det[:, None]
    g0 = -g1 - g2
    return area, np.stack([g0, g1, g2], axis=1)


def quad_points(vertices, triangles):
    """Physical coordinates of the 3 quadrature points, shape (m, 3, 2)."""
    p = vertices[triangles]
    return np.einsum("qa,mad->mqd", QUAD_BARY, p)


# ---------------------------------------------------------------- assembly

def _assemble_triplets_numpy(triangles, area, grads, wq):
    wbar = wq.mean(axis=1)
    stiff = np.einsum("mad,mbd->mab", grads, grads) * (area * wbar)[:, None, None]
    mass = np.einsum("mq,qa,qb->mab", wq, QUAD_BARY, QUAD_BARY) * (area / 3.0)[:, None, None]
    vals = (stiff + mass).reshape(-1)
    rows = np.repeat(triangles, 3, axis=1).reshape(-1)
    cols = np.tile(triangles, (1, 3)).reshape(-1)
    return rows.astype(np.int64), cols.astype(np.int64), vals


def _triplet_body(t, triangles, area, grads, wq, bary, rows, cols, vals):
    wbar = (wq[t, 0] + wq[t, 1] + wq[t, 2]) / 3.0
    k = 9 * t
    for a in range(3):
        for b in range(3):
            s = grads[t, a, 0] * grads[t, b, 0] + grads[t, a, 1] * grads[t, b, 1]
            m = 0.0
            for q in range(3):
                m += wq[t, q] * bary[q, a] * bary[q, b]
            rows[k] = triangles[t, a]
            cols[k] = triangles[t, b]
            vals[k] = area[t] * wbar * s + area[t] / 3.0 * m
            k += 1


_triplet_body_jit = njit(cache=True)(_triplet_body)


@njit(cache=True)
def _assemble_triplets_serial(triangles, area, grads, wq, bary):
    m = triangles.shape[0]
    rows = np.empty(9 * m, dtype=np.int64)
    cols = np.empty(9 * m, dtype=np.int64)
    vals = np.empty(9 * m)
    for t in range(m):
        _triplet_body_jit(t, triangles, area, grads, wq, bary, rows, cols, vals)
    return rows, cols, vals


@njit(cache=True, parallel=True)
def _assemble_triplets_parallel(triangles, area, grads, wq, bary):
    m = triangles.shape[0]
    rows = np.empty(9 * m, dtype=np.int64)
    cols = np.empty(9 * m, dtype=np.int64)
    vals = np.empty(9 * m)
    # each element owns its 9 slots, so the output does not depend on scheduling
    for t in prange(m):
        _triplet_body_jit(t, triangles, area, grads, wq, bary, rows, cols, vals)
    return rows, cols, vals


def _assemble_triplets_numba(triangles, area, grads, wq, parallel=False):
    fn = _assemble_triplets_parallel if parallel else _assemble_triplets_serial
    return fn(np.ascontiguousarray(triangles, dtype=np.int64), area, grads,
              np.ascontiguousarray(wq, dtype=np.float64), QUAD_BARY)


def assemble_triplets(triangles, area, grads, wq, parallel=False):
    """COO triplets of the weighted stiffness+mass form, element order."""
    if USE_NUMBA:
        return _assemble_triplets_numba(triangles, area, grads, wq, parallel)
    return _assemble_triplets_numpy(triangles, area, grads, wq)


# ---------------------------------------------------------------- CG

@njit(cache=True)
def _csr_matvec(indptr, indices, data, x, out):
    n = indptr.shape[0] - 1
    for i in range(n):
        s = 0.0
        for k in range(indptr[i], indptr[i + 1]):
            s += data[k] * x[indices[k]]
        out[i] = s


@njit(cache=True)
def _pcg_numba(indptr, indices, data, b, x, dinv, tol, maxiter):
    n = b.shape[0]
    r = np.empty(n)
    ap = np.empty(n)
    _csr_matvec(indptr, indices, data, x, ap)
    for i in range(n):
        r[i] = b[i] - ap[i]
    bnorm = np.sqrt(np.dot(b, b))
    z = r * dinv
    p = z.copy()
    rz = np.dot(r, z)
    rnorm = np.sqrt(np.dot(r, r))
    it = 0
    while rnorm > tol * bnorm:
        if it >= maxiter:
            return x, it, rnorm / bnorm, 1
        _csr_matvec(indptr, indices, data, p, ap)
        pap = np.dot(p, ap)
        if pap <= 0.0:
            return x, it, rnorm / bnorm, 2
        alpha = rz / pap
        for i in range(n):
            x[i] += alpha * p[i]
            r[i] -= alpha * ap[i]
            z[i] = r[i] * dinv[i]
        rz_new = np.dot(r, z)
        beta = rz_new / rz
        rz = rz_new
        for i in range(n):
            p[i] = z[i] + beta * p[i]
        rnorm = np.sqrt(np.dot(r, r))
        it += 1
    return x, it, rnorm / bnorm, 0


def _pcg_numpy(A, b, x, dinv, tol, maxiter):
    r = b - A @ x
    bnorm = np.linalg.norm(b)
    z = r * dinv
    p = z.copy()
    rz = r @ z
    rnorm = np.linalg.norm(r)
    it = 0
    while rnorm > tol * bnorm:
        if it >= maxiter:
            return x, it, rnorm / bnorm, 1
        ap = A @ p
        pap = p @ ap
        if pap <= 0.0:
            return x, it, rnorm / bnorm, 2
        alpha = rz / pap
        x += alpha * p
        r -= alpha * ap
        z = r * dinv
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
        rnorm = np.linalg.norm(r)
        it += 1
    return x, it, rnorm / bnorm, 0


def pcg(A, b, x0, dinv, tol, maxiter):
    """Jacobi-preconditioned CG on a scipy CSR matrix.

    Returns ``(x, iterations, relative_residual, status)`` with status 0 on
    convergence, 1 when ``maxiter`` is hit and 2 on a non-positive
    curvature ``p.Ap <= 0``.
    """
    x = np.array(x0, dtype=np.float64, copy=True)
    if USE_NUMBA:
        return _pcg_numba(A.indptr.astype(np.int64), A.indices.astype(np.int64),
                          A.data, b, x, dinv, tol, maxiter)
    return _pcg_numpy(A, b, x, dinv, tol, maxiter)
