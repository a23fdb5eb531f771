"""Thin-tooth brush domains: direct P1 solves, graph decomposition of the
model tooth and the homogenized limit problem."""
from .config import Config, load_config, parse_config
from .density import DensityField, theta_empirical, theta_exact
from .direct import solve_direct
from .errors import (AssemblyError, BrushError, ConfigError, ContinuityError, ConvergenceError,
                     GeometryError, MeshError, NotNicelyDecomposedError, NotSPDError, PlacementError)
from .fem import DiscreteField, assemble, h1_error, load, solve_spd
from .geometry import (BUILTIN_TEETH, BrushSpec, ModelTooth, place_explicit, place_linear_gaps,
                       place_periodic, place_single, validate_tooth)
from .graph import GraphDecomposition, decompose, extend_to_cell, graph_norm_sq, joins
from .limit import energies, flux_residuals, reconstruct_ubar, solve_limit, solve_limit_on_brush
from .meshing import BrushMesh, TriMesh, mesh_base, mesh_brush, mesh_tooth_reference
from .unfolding import f_unfold_gap, tau_grad_x_l2, trace_compat, unfold

__version__ = "0.1.0"
