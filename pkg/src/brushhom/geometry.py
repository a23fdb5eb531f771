"""Model tooth, brush specifications and teeth placement families.

Only the 2D setting is implemented: teeth are rescaled in the single
horizontal direction and every domain lives in the (x, y) plane.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import GeometryError, PlacementError

TOL = 1e-12


def polygon_area(vertices):
    """Signed shoelace area (positive for counter-clockwise loops)."""
    v = np.asarray(vertices, dtype=float)
    x, y = v[:, 0], v[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def _ring_edges(ring):
    ring = np.asarray(ring, dtype=float)
    return np.stack([ring, np.roll(ring, -1, axis=0)], axis=1)


def _orient(a, b, c):
    return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])


def _on_segment(a, b, p):
    return (min(a[0], b[0]) - TOL <= p[0] <= max(a[0], b[0]) + TOL
            and min(a[1], b[1]) - TOL <= p[1] <= max(a[1], b[1]) + TOL)


def _segments_intersect(p1, p2, q1, q2):
    d1 = _orient(q1, q2, p1)
    d2 = _orient(q1, q2, p2)
    d3 = _orient(p1, p2, q1)
    d4 = _orient(p1, p2, q2)
    if ((d1 > TOL and d2 < -TOL) or (d1 < -TOL and d2 > TOL)) and \
       ((d3 > TOL and d4 < -TOL) or (d3 < -TOL and d4 > TOL)):
        return True
    return ((abs(d1) <= TOL and _on_segment(q1, q2, p1))
            or (abs(d2) <= TOL and _on_segment(q1, q2, p2))
            or (abs(d3) <= TOL and _on_segment(p1, p2, q1))
            or (abs(d4) <= TOL and _on_segment(p1, p2, q2)))


def check_simple(rings):
    """Raise GeometryError unless the rings form disjoint simple loops."""
    edges = []
    for r, ring in enumerate(rings):
        ring = np.asarray(ring, dtype=float)
        if ring.ndim != 2 or ring.shape[1] != 2 or len(ring) < 3:
            raise GeometryError(f"ring {r} needs at least 3 (xi, y) vertices")
        if abs(polygon_area(ring)) <= TOL:
            raise GeometryError(f"ring {r} has zero area")
        n = len(ring)
        for k in range(n):
            edges.append((r, k, n, ring[k], ring[(k + 1) % n]))
    for a in range(len(edges)):
        ra, ka, na, p1, p2 = edges[a]
        if np.allclose(p1, p2, atol=TOL):
            raise GeometryError(f"ring {ra} has a repeated vertex at index {ka}")
        for b in range(a + 1, len(edges)):
            rb, kb, nb, q1, q2 = edges[b]
            if ra == rb and (kb == ka + 1 or (ka == 0 and kb == na - 1)):
                continue  # consecutive edges share a vertex by construction
            if _segments_intersect(p1, p2, q1, q2):
                raise GeometryError(
                    f"polygon is not simple: edge {ka} of ring {ra} meets edge {kb} of ring {rb}")


@dataclass(frozen=True, eq=False)
class ModelTooth:
    """Reference cell Y: a polygon (optionally with holes) above y = 0.

    ``omega`` is the base interval, ``height`` the bound L with
    Y inside (-R1, R1) x (0, L), and ``delta0`` the height of the collar
    omega x (0, delta0) contained in Y.
    """
    vertices: np.ndarray
    omega: tuple
    height: float
    R1: float
    delta0: float
    holes: tuple = ()
    name: str = "tooth"
    slab_levels: tuple | None = None

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] != 2:
            raise GeometryError("tooth vertices must be an (n, 2) array")
        if polygon_area(v) < 0:
            v = v[::-1].copy()
        holes = []
        for h in self.holes:
            h = np.asarray(h, dtype=float)
            if polygon_area(h) > 0:
                h = h[::-1].copy()
            holes.append(h)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "holes", tuple(holes))
        object.__setattr__(self, "omega", (float(self.omega[0]), float(self.omega[1])))

    @property
    def rings(self):
        return (self.vertices,) + tuple(self.holes)

    @property
    def area(self):
        return polygon_area(self.vertices) + sum(polygon_area(h) for h in self.holes)

    @property
    def base_width(self):
        return self.omega[1] - self.omega[0]

    def edges(self):
        """All boundary segments as an (k, 2, 2) array."""
        return np.concatenate([_ring_edges(r) for r in self.rings])

    def levels(self):
        """Sorted distinct y-coordinates of all polygon vertices."""
        ys = np.concatenate([r[:, 1] for r in self.rings])
        ys = np.unique(np.round(ys, 14))
        return ys

    def crossing_pairs(self, y):
        """Section of Y at a height y that is not a vertex level.

        Returns a list of ``(edge_left, edge_right)`` index pairs, sorted from
        left to right; the section is the union of the open intervals between
        the two edges of each pair.
        """
        edges = self.edges()
        y0, y1 = edges[:, 0, 1], edges[:, 1, 1]
        hit = np.nonzero((np.minimum(y0, y1) < y) & (np.maximum(y0, y1) > y))[0]
        xs = np.array([edge_x(edges[k], y) for k in hit])
        order = np.argsort(xs, kind="stable")
        hit = hit[order]
        if len(hit) % 2:
            raise GeometryError(f"odd number of boundary crossings at y={y}")
        return [(int(hit[2 * k]), int(hit[2 * k + 1])) for k in range(len(hit) // 2)]

    def section(self, y):
        """Intervals of the horizontal section at non-level height y."""
        edges = self.edges()
        return [(edge_x(edges[a], y), edge_x(edges[b], y)) for a, b in self.crossing_pairs(y)]

    def contains(self, xi, y):
        """Even-odd point-in-polygon test (boundary points count as outside)."""
        inside = False
        for e in self.edges():
            (x0, y0), (x1, y1) = e
            if (y0 > y) != (y1 > y):
                xc = x0 + (y - y0) * (x1 - x0) / (y1 - y0)
                if xc > xi:
                    inside = not inside
        return inside


def edge_x(edge, y):
    """x-coordinate of the line through a non-horizontal edge at height y."""
    (x0, y0), (x1, y1) = edge
    return x0 + (y - y0) * (x1 - x0) / (y1 - y0)


@dataclass
class Validation:
    ok: bool
    violation: str | None = None

    def __bool__(self):
        return self.ok


def _base_segments(tooth):
    segs = []
    points = []
    for ring in tooth.rings:
        for (x0, y0), (x1, y1) in _ring_edges(ring):
            if abs(y0) <= TOL and abs(y1) <= TOL:
                segs.append((min(x0, x1), max(x0, x1)))
        points.extend(ring[np.abs(ring[:, 1]) <= TOL, 0].tolist())
    segs.sort()
    merged = []
    for a, b in segs:
        if merged and a <= merged[-1][1] + TOL:
            merged[-1][1] = max(merged[-1][1], b)
        else:
            merged.append([a, b])
    return merged, points


def _segment_enters_open_box(p, q, box):
    """Whether segment [p, q] meets the open rectangle ``box`` (Liang-Barsky)."""
    x0, x1, y0, y1 = box
    d = q - p
    t0, t1 = 0.0, 1.0
    for pk, qk in ((-d[0], p[0] - x0), (d[0], x1 - p[0]), (-d[1], p[1] - y0), (d[1], y1 - p[1])):
        if pk == 0:
            if qk < 0:
                return False
        else:
            t = qk / pk
            if pk < 0:
                t0 = max(t0, t)
            else:
                t1 = min(t1, t)
    if t0 > t1:
        return False
    m = p + 0.5 * (t0 + t1) * d
    # midpoint of the clipped piece is interior iff the piece crosses the interior
    return x0 + TOL < m[0] < x1 - TOL and y0 + TOL < m[1] < y1 - TOL


def validate_tooth(t: ModelTooth) -> Validation:
    """Check the standing assumptions on the model tooth, in order.

    Raises GeometryError for a non-simple polygon; otherwise returns a
    Validation whose ``violation`` names the first failed assumption.
    """
    check_simple(t.rings)
    lo, hi = t.omega
    allv = np.concatenate(t.rings)
    if not (t.height > 0 and t.R1 > 0):
        return Validation(False, "L and R1 must be positive")
    if np.any(np.abs(allv[:, 0]) >= t.R1 - TOL):
        return Validation(False, "Y not contained in (-R1, R1) x (0, L): |xi| >= R1")
    if np.any(allv[:, 1] < -TOL) or np.any(allv[:, 1] > t.height + TOL):
        return Validation(False, "Y not contained in (-R1, R1) x (0, L): y outside [0, L]")
    if any(np.any(np.abs(h[:, 1]) <= TOL) for h in t.holes):
        return Validation(False, "boundary of Y on y = 0 is not the closure of omega (hole touches base)")
    merged, points = _base_segments(t)
    if len(merged) != 1 or abs(merged[0][0] - lo) > TOL or abs(merged[0][1] - hi) > TOL:
        return Validation(False, "boundary of Y on y = 0 is not the closure of omega")
    if any(p < lo - TOL or p > hi + TOL for p in points):
        return Validation(False, "boundary of Y on y = 0 is not the closure of omega (isolated base point)")
    if not lo < 0 < hi:
        return Validation(False, "0 not in omega")
    if abs((hi - lo) - 1.0) > TOL:
        return Validation(False, "|ω| ≠ 1")
    if not t.delta0 > 0:
        return Validation(False, "delta0 must be positive")
    box = (lo, hi, 0.0, t.delta0)
    for p, q in t.edges():
        if _segment_enters_open_box(p, q, box):
            return Validation(False, "collar omega x (0, delta0) not contained in Y")
    if not t.contains(0.5 * (lo + hi), 0.5 * t.delta0):
        return Validation(False, "collar omega x (0, delta0) not contained in Y")
    return Validation(True)


# ------------------------------------------------------------ built-in teeth

def cylinder(height=1.0, R1=0.6, delta0=None):
    """Pure cylinder (-1/2, 1/2) x (0, height)."""
    v = [(-0.5, 0.0), (0.5, 0.0), (0.5, height), (-0.5, height)]
    return ModelTooth(np.array(v), (-0.5, 0.5), height, R1,
                      height if delta0 is None else delta0, name="cylinder")


def figure5(scale=1.0):
    """Nicely decomposed tooth with a stem, a tapering branch and a top cap.

    With ``scale=1`` the edge thicknesses are p_1^1 = 2, p_2^1 = 1/2,
    p_2^2(y) = (3 - y)/2 and p_3^1 = 1 on the levels 0 < 1 < 2 < 3. The base
    then has width 2; ``scale=0.5`` gives the normalized tooth with |omega| = 1.
    """
    v = np.array([(-1.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.5, 2.0), (0.0, 2.0),
                  (0.0, 1.0), (-0.5, 1.0), (-0.5, 2.0), (-0.2, 2.0), (-0.2, 3.0),
                  (-1.2, 3.0), (-1.2, 2.0), (-1.0, 2.0)])
    v[:, 0] *= scale
    return ModelTooth(v, (-scale, scale), 3.0, 1.25 * scale, 1.0,
                      name="figure5" if scale == 1.0 else "figure5_normalized")


def figure5_normalized():
    return figure5(0.5)


def t_shape():
    """Stem (-1/2, 1/2) x (0, 1) under a crossbar (-3/2, 3/2) x (1, 3/2)."""
    v = [(-0.5, 0.0), (0.5, 0.0), (0.5, 1.0), (1.5, 1.0), (1.5, 1.5),
         (-1.5, 1.5), (-1.5, 1.0), (-0.5, 1.0)]
    return ModelTooth(np.array(v), (-0.5, 0.5), 1.5, 1.6, 1.0, name="t_shape")


def holed(height=2.0):
    """Cylinder of given height with a square hole, two branches around it."""
    v = [(-0.5, 0.0), (0.5, 0.0), (0.5, height), (-0.5, height)]
    hole = [(-0.2, 0.8), (0.2, 0.8), (0.2, 1.2), (-0.2, 1.2)]
    return ModelTooth(np.array(v), (-0.5, 0.5), height, 0.6, 0.8,
                      holes=(np.array(hole),), name="holed")


BUILTIN_TEETH = {
    "cylinder": cylinder,
    "figure5": figure5,
    "figure5_normalized": figure5_normalized,
    "t_shape": t_shape,
    "holed": holed,
}


# ------------------------------------------------------------ brush spec

@dataclass(eq=False)
class BrushSpec:
    """Brush domain: rectangle base, attachment interval and teeth placements.

    The base is ``[x0, x1] x [-depth, 0]``; tooth n has base
    ``centers[n] + lengths[n] * omega``. ``family`` records how the
    placements were generated (used for the exact limit density).
    """
    x0: float
    x1: float
    depth: float
    omega_prime: tuple
    tooth: ModelTooth
    centers: np.ndarray
    lengths: np.ndarray
    epsilon: float
    c_scale: float
    family: dict = field(default_factory=lambda: {"kind": "explicit"})

    def __post_init__(self):
        self.centers = np.asarray(self.centers, dtype=float)
        self.lengths = np.asarray(self.lengths, dtype=float)
        self.omega_prime = (float(self.omega_prime[0]), float(self.omega_prime[1]))

    @property
    def n_teeth(self):
        return len(self.centers)

    def base_intervals(self):
        """(N, 2) array of tooth base intervals omega^n."""
        lo, hi = self.tooth.omega
        return np.stack([self.centers + self.lengths * lo, self.centers + self.lengths * hi], axis=1)

    @property
    def teeth_measure(self):
        """|omega_eps| = sum of tooth base lengths."""
        return float(np.sum(self.lengths) * self.tooth.base_width)

    @property
    def base_area(self):
        return (self.x1 - self.x0) * self.depth

    @property
    def area(self):
        return self.base_area + float(np.sum(self.lengths)) * self.tooth.area

    def validate(self):
        """Raise PlacementError on the first violated brush assumption."""
        a, b = self.omega_prime
        if not (self.x0 <= a < b <= self.x1):
            raise PlacementError("omega' must lie on the top side of the base rectangle")
        if self.depth < 1.0 - TOL:
            raise PlacementError("base must contain omega' x (-1, 0): depth < 1")
        if self.n_teeth == 0:
            raise PlacementError("no teeth")
        if np.any(self.lengths <= 0) or np.any(self.lengths > self.c_scale * self.epsilon * (1 + 1e-12)):
            raise PlacementError("tooth lengths must satisfy 0 < l <= C eps")
        iv = self.base_intervals()
        if np.any(iv[:, 0] <= a + TOL) or np.any(iv[:, 1] >= b - TOL):
            raise PlacementError("tooth base not strictly inside omega'")
        order = np.argsort(self.centers)
        c = self.centers[order]
        r = self.tooth.R1 * self.lengths[order]
        if np.any(c[:-1] + r[:-1] >= c[1:] - r[1:] - TOL):
            raise PlacementError("guard intervals (x_n -/+ R1 l_n) of neighbouring teeth intersect")
        return self


def place_periodic(omega_prime, eps, rho, tooth, x0=None, x1=None, depth=1.0):
    """One tooth of length rho*eps centred in every eps-cell of omega'."""
    a, b = map(float, omega_prime)
    if not 0 < rho <= 1:
        raise PlacementError("fill fraction must be in (0, 1]")
    n = int(math.floor((b - a) / eps + 1e-9))
    if n < 1:
        raise PlacementError("omega' shorter than one cell")
    centers = a + (np.arange(n) + 0.5) * eps
    lengths = np.full(n, rho * eps)
    spec = BrushSpec(a if x0 is None else x0, b if x1 is None else x1, depth, (a, b), tooth,
                     centers, lengths, eps, rho, {"kind": "periodic", "rho": rho})
    return spec.validate()


def linear_gaps_density(x):
    return 0.5 * (1.0 - np.asarray(x, dtype=float))


def place_linear_gaps(eps, tooth, x0=0.0, x1=1.0, depth=1.0):
    """Equal teeth with increasing gaps on omega' = (0, 1), density (1 - x)/2.

    All teeth have length eps/2. Tooth n sits at the centre of the n-th cell
    carrying density mass eps/2, i.e. between c_{n-1} and
    c_n = 1 - sqrt(1 - 4 n l); cells and gaps grow towards x = 1.
    """
    length = 0.5 * eps
    n = int(math.floor(0.25 / length + 1e-9))
    if n < 2:
        raise PlacementError("fewer than 2 teeth fit for this eps")
    cuts = 1.0 - np.sqrt(np.clip(1.0 - 4.0 * length * np.arange(n + 1), 0.0, None))
    centers = 0.5 * (cuts[:-1] + cuts[1:])
    spec = BrushSpec(x0, x1, depth, (0.0, 1.0), tooth, centers, np.full(n, length),
                     eps, 0.5, {"kind": "linear_gaps"})
    return spec.validate()


def place_single(omega_prime, eps, tooth, center=None, x0=None, x1=None, depth=1.0):
    """A single tooth of length eps (limit density identically 0)."""
    a, b = map(float, omega_prime)
    c = 0.5 * (a + b) if center is None else float(center)
    spec = BrushSpec(a if x0 is None else x0, b if x1 is None else x1, depth, (a, b), tooth,
                     np.array([c]), np.array([eps]), eps, 1.0, {"kind": "single"})
    return spec.validate()


def place_explicit(omega_prime, placements, eps, c_scale, tooth, x0=None, x1=None, depth=1.0):
    a, b = map(float, omega_prime)
    pl = np.asarray(placements, dtype=float).reshape(-1, 2)
    spec = BrushSpec(a if x0 is None else x0, b if x1 is None else x1, depth, (a, b), tooth,
                     pl[:, 0], pl[:, 1], eps, c_scale, {"kind": "explicit"})
    return spec.validate()
