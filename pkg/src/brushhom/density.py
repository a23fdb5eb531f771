"""Limit density θ of the teeth bases and its zero set Θ₀."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .geometry import BrushSpec, linear_gaps_density

THETA_MIN_EXACT = 1e-12
THETA_MIN_EMPIRICAL = 1e-3


@dataclass(eq=False)
class DensityField:
    """θ sampled at trace nodes; ``kind`` is constant, linear or sampled."""
    kind: str
    nodes: np.ndarray
    values: np.ndarray
    theta_min: float = THETA_MIN_EXACT

    def __post_init__(self):
        self.nodes = np.asarray(self.nodes, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.nodes.shape != self.values.shape:
            raise ValueError("nodes and values differ in length")
        if np.any(self.values < -1e-14) or np.any(self.values > 1 + 1e-14):
            raise ValueError("density values must lie in [0, 1]")

    @property
    def theta0_mask(self):
        return self.values <= self.theta_min

    def __call__(self, x):
        """Piecewise-linear interpolant of the samples."""
        return np.interp(x, self.nodes, self.values)


def _family(obj):
    return obj.family if isinstance(obj, BrushSpec) else dict(obj)


def theta_exact(family, nodes, theta_min: float = THETA_MIN_EXACT) -> DensityField:
    """Closed-form θ for the built-in placement families.

    ``family`` is a BrushSpec or its ``family`` dict: periodic (θ ≡ ρ),
    linear_gaps (θ = (1 - x)/2) or single (θ ≡ 0, one tooth of vanishing
    width).
    """
    fam = _family(family)
    nodes = np.asarray(nodes, dtype=float)
    kind = fam.get("kind")
    if kind == "periodic":
        return DensityField("constant", nodes, np.full(len(nodes), float(fam["rho"])), theta_min)
    if kind == "linear_gaps":
        return DensityField("linear", nodes, linear_gaps_density(nodes), theta_min)
    if kind == "single":
        return DensityField("constant", nodes, np.zeros(len(nodes)), theta_min)
    raise ConfigError(f"no closed-form density for placement family {kind!r}")


def covered_length(intervals, lo, hi):
    """|∪ intervals ∩ (lo, hi)| for pairwise disjoint intervals, vectorised over lo/hi."""
    lo = np.asarray(lo, dtype=float)[..., None]
    hi = np.asarray(hi, dtype=float)[..., None]
    a, b = intervals[:, 0], intervals[:, 1]
    return np.sum(np.clip(np.minimum(b, hi) - np.maximum(a, lo), 0.0, None), axis=-1)


def theta_empirical(spec: BrushSpec, h_w: float, nodes,
                    theta_min: float = THETA_MIN_EMPIRICAL) -> DensityField:
    """Moving average θ_h(x) = |ω_ε ∩ window| / |window| with window (x ± h_w) ∩ Ω'."""
    if not h_w > 2 * spec.c_scale * spec.epsilon:
        raise ConfigError(f"window {h_w} must exceed 2 C eps = {2 * spec.c_scale * spec.epsilon}")
    x = np.asarray(nodes, dtype=float)
    a, b = spec.omega_prime
    lo = np.clip(x - h_w, a, b)
    hi = np.clip(x + h_w, a, b)
    width = hi - lo
    cov = covered_length(spec.base_intervals(), lo, hi)
    theta = np.where(width > 0, cov / np.where(width > 0, width, 1.0), 0.0)
    return DensityField("sampled", x, np.clip(theta, 0.0, 1.0), theta_min)


def write_density_csv(fh, d: DensityField):
    fh.write("x,theta\n")
    for x, t in zip(d.nodes, d.values):
        fh.write(f"{x:.17g},{t:.17g}\n")
