"""One ε-instance end to end: brush, direct solve, limit solve, error columns."""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .config import Config
from .density import theta_empirical, theta_exact
from .direct import solve_direct
from .errors import BrushError
from .fem import h1_error
from .graph import decompose
from .limit import energies, reconstruct_ubar, solve_limit_on_brush
from .meshing import mesh_brush
from .unfolding import tau_grad_x_l2

CSV_HEADER = "# brushhom converge v1"
CSV_COLUMNS = ["eps", "err_base_h1", "err_teeth_h1", "tau_grad_x_l2", "E_eps", "E", "abs_dE", "status", "note"]
NO_LIMIT_INFO = "no limit info (theta = 0: Omega^a column carries no limit information)"


def density_for(cfg: Config, spec, nodes):
    if cfg.density_mode == "exact" and spec.family.get("kind") in ("periodic", "linear_gaps", "single"):
        return theta_exact(spec, nodes)
    window = cfg.window if cfg.window is not None else 4.0 * spec.c_scale * spec.epsilon
    return theta_empirical(spec, window, nodes)


@dataclass
class EpsResult:
    eps: float
    brush: object
    direct: object
    limit: object
    ubar: object
    decomp: object


def solve_instance(cfg: Config, eps: float, parallel: bool = False) -> EpsResult:
    spec = cfg.spec(eps)
    brush = mesh_brush(spec, cfg.mesh.h_base, cfg.mesh.tooth_h(eps), cfg.mesh.h_xi)
    decomp = decompose(brush.reference)
    nodes = brush.trace_x[brush.trace_in_omega_prime()]
    theta = density_for(cfg, spec, nodes)
    limit = solve_limit_on_brush(brush, decomp, theta, cfg.source, cfg.mesh.h_y, cfg.cg_tol)
    u = solve_direct(brush, cfg.source, cfg.cg_tol, parallel)
    return EpsResult(eps, brush, u, limit, reconstruct_ubar(limit, brush), decomp)


def error_columns(res: EpsResult) -> dict:
    bm, u, lim = res.brush, res.direct, res.limit
    eb = np.hypot(*h1_error(bm.base, u.coefficients[:bm.n_base], lim.base))
    teeth, used = bm.teeth
    ea = np.hypot(*h1_error(teeth, u.coefficients[used], res.ubar))
    E_eps, E, _ = energies(u, lim, bm)
    note = NO_LIMIT_INFO if np.all(lim.dropped) else ""
    return dict(eps=res.eps, err_base_h1=float(eb), err_teeth_h1=float(ea),
                tau_grad_x_l2=tau_grad_x_l2(u, bm), E_eps=E_eps, E=E, abs_dE=abs(E_eps - E),
                status="ok", note=note)


def converge_row(cfg: Config, eps: float, parallel: bool = False) -> dict:
    """Error columns for one ε; a failing stage yields a tagged failure row."""
    t0 = time.perf_counter()
    try:
        row = error_columns(solve_instance(cfg, eps, parallel))
    except BrushError as exc:
        row = {c: "" for c in CSV_COLUMNS}
        row.update(eps=eps, status=f"failed:{type(exc).__name__}", note=str(exc).replace(",", ";"))
    row["seconds"] = time.perf_counter() - t0
    return row


def format_row(row: dict) -> str:
    out = []
    for c in CSV_COLUMNS:
        v = row[c]
        out.append(f"{v:.10e}" if isinstance(v, float) else str(v))
    return ",".join(out)
