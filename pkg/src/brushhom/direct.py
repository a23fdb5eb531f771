"""Neumann problem -Δu + u = f on the whole brush."""
from __future__ import annotations

import numpy as np

from .fem import DiscreteField, assemble, load, solve_spd
from .functions import as_field
from .meshing import BrushMesh, write_mesh


def solve_direct(brush: BrushMesh, f, tol: float = 1e-10, parallel: bool = False) -> DiscreteField:
    """P1 solution of int grad u.grad v + u v = int f v; no boundary conditions."""
    A = assemble(brush.mesh, parallel=parallel)
    b = load(brush.mesh, as_field(f))
    return DiscreteField(brush.mesh, solve_spd(A, b, tol=tol))


def write_solution(fh, field: DiscreteField):
    """Mesh export followed by ``coefficients <n>`` and one value per line."""
    write_mesh(fh, field.mesh)
    fh.write(f"coefficients {len(field.coefficients)}\n")
    np.savetxt(fh, field.coefficients, fmt="%.17g")
