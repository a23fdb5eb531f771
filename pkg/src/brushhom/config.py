"""YAML run configuration.

Schema (all lengths in abstract units)::

    tooth: cylinder                 # built-in name, or a mapping:
    #  builtin: cylinder            #   built-in with keyword overrides (height, R1, ...)
    #  vertices: [[xi, y], ...]     #   or an explicit polygon
    #  omega: [lo, hi]
    #  height: L
    #  R1: bound
    #  delta0: collar
    #  holes: [[[xi, y], ...], ...] #   optional
    #  slab_levels: [a_0, ..., a_M] #   optional
    base: {x0: 0.0, x1: 1.0, depth: 1.0}
    omega_prime: [0.0, 1.0]
    family: {kind: periodic, rho: 0.5}
    #  kind: linear_gaps | single (optional center) | explicit
    #  explicit: placements: [[center, length], ...], c_scale: C
    epsilon: [0.25, 0.125]
    source: "1 + y + sin(2*x)"      # sympy expression in x, y or a built-in name
    mesh: {h_base: 0.015625, h_tooth: 0.015625, h_tooth_eps: null, h_xi: null, h_y: 0.015625}
    solver: {cg_tol: 1.0e-10}
    density: {mode: exact, window: null}   # mode exact | empirical

``h_tooth_eps``, when set, caps the tooth row height at h_tooth_eps * eps
so that the layer at the tooth base stays resolved as eps shrinks.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import yaml

from .errors import ConfigError
from .geometry import (BUILTIN_TEETH, BrushSpec, ModelTooth, place_explicit, place_linear_gaps,
                       place_periodic, place_single)


@dataclass
class MeshParams:
    h_base: float = 2.0 ** -5
    h_tooth: float = 2.0 ** -5
    h_tooth_eps: float | None = None
    h_xi: float | None = None
    h_y: float = 2.0 ** -5

    def tooth_h(self, eps):
        if self.h_tooth_eps is None:
            return self.h_tooth
        return min(self.h_tooth, self.h_tooth_eps * eps)


@dataclass
class Config:
    tooth: ModelTooth
    x0: float
    x1: float
    depth: float
    omega_prime: tuple
    family: dict
    epsilons: list
    source: str
    mesh: MeshParams = field(default_factory=MeshParams)
    cg_tol: float = 1e-10
    density_mode: str = "exact"
    window: float | None = None

    def spec(self, eps) -> BrushSpec:
        kind = self.family.get("kind")
        common = dict(x0=self.x0, x1=self.x1, depth=self.depth)
        if kind == "periodic":
            return place_periodic(self.omega_prime, eps, float(self.family.get("rho", 0.5)), self.tooth, **common)
        if kind == "linear_gaps":
            if tuple(self.omega_prime) != (0.0, 1.0):
                raise ConfigError("linear_gaps family requires omega_prime = [0, 1]")
            return place_linear_gaps(eps, self.tooth, **common)
        if kind == "single":
            return place_single(self.omega_prime, eps, self.tooth, self.family.get("center"), **common)
        if kind == "explicit":
            return place_explicit(self.omega_prime, self.family["placements"], eps,
                                  float(self.family.get("c_scale", 1.0)), self.tooth, **common)
        raise ConfigError(f"unknown family kind {kind!r}")


def _num(d, key, default=None, required=False):
    if key not in d or d[key] is None:
        if required:
            raise ConfigError(f"missing required key {key!r}")
        return default
    try:
        return float(d[key])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{key!r} must be a number") from exc


def parse_tooth(obj) -> ModelTooth:
    if isinstance(obj, str):
        if obj not in BUILTIN_TEETH:
            raise ConfigError(f"unknown built-in tooth {obj!r}; choose from {sorted(BUILTIN_TEETH)}")
        return BUILTIN_TEETH[obj]()
    if not isinstance(obj, dict):
        raise ConfigError("tooth must be a built-in name or a mapping")
    if "builtin" in obj:
        name = obj["builtin"]
        if name not in BUILTIN_TEETH:
            raise ConfigError(f"unknown built-in tooth {name!r}")
        kwargs = {k: v for k, v in obj.items() if k != "builtin"}
        try:
            return BUILTIN_TEETH[name](**kwargs)
        except TypeError as exc:
            raise ConfigError(f"bad arguments for tooth {name!r}: {exc}") from exc
    try:
        verts = np.asarray(obj["vertices"], dtype=float)
        omega = tuple(float(v) for v in obj["omega"])
        holes = tuple(np.asarray(h, dtype=float) for h in obj.get("holes", []) or [])
        levels = obj.get("slab_levels")
        return ModelTooth(verts, omega, _num(obj, "height", required=True), _num(obj, "R1", required=True),
                          _num(obj, "delta0", required=True), holes, obj.get("name", "tooth"),
                          tuple(float(a) for a in levels) if levels is not None else None)
    except KeyError as exc:
        raise ConfigError(f"tooth mapping lacks key {exc}") from exc


def parse_config(data: dict) -> Config:
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping")
    tooth = parse_tooth(data.get("tooth", "cylinder"))
    base = data.get("base", {}) or {}
    op = data.get("omega_prime", [0.0, 1.0])
    if not (isinstance(op, (list, tuple)) and len(op) == 2):
        raise ConfigError("omega_prime must be a pair [a, b]")
    op = (float(op[0]), float(op[1]))
    family = dict(data.get("family", {"kind": "periodic", "rho": 0.5}))
    eps = data.get("epsilon", [0.25])
    eps = [float(e) for e in (eps if isinstance(eps, (list, tuple)) else [eps])]
    if not eps or any(not e > 0 or not math.isfinite(e) for e in eps):
        raise ConfigError("epsilon must be a nonempty list of positive numbers")
    m = data.get("mesh", {}) or {}
    mesh = MeshParams(_num(m, "h_base", 2.0 ** -5), _num(m, "h_tooth", 2.0 ** -5),
                      _num(m, "h_tooth_eps"), _num(m, "h_xi"), _num(m, "h_y", 2.0 ** -5))
    solver = data.get("solver", {}) or {}
    dens = data.get("density", {}) or {}
    mode = dens.get("mode", "exact")
    if mode not in ("exact", "empirical"):
        raise ConfigError("density.mode must be 'exact' or 'empirical'")
    return Config(tooth, _num(base, "x0", op[0]), _num(base, "x1", op[1]), _num(base, "depth", 1.0), op,
                  family, eps, str(data.get("source", "1")), mesh, _num(solver, "cg_tol", 1e-10),
                  mode, _num(dens, "window"))


def load_config(path) -> Config:
    try:
        with open(path) as fh:
            data = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML: {exc}") from exc
    return parse_config(data)
