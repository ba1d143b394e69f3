"""Free energy of polygonal sets and the comparison functionals around it.

``F`` is the anisotropic perimeter, ``G`` the potential integral and the
free energy is their sum.  The deficit and asymmetry measure distance from
the Wulff shape; truncation, convexification and inclusion-exclusion are the
set moves used to compare competitors.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
import shapely
from shapely.geometry.polygon import orient

from . import kernels
from .errors import DegenerateInputError, PlateauError
from .geom2d import Polygon, PolygonSet, convex_hull
from .potential import Gravity, LinearGravity, Potential, SublevelGrid
from .quadrature import integrate_rings
from .tension import SurfaceTension, wulff_shape

DEFAULT_QUAD_ORDER = 6


# ---------------------------------------------------------------------------
# surface energy


def ring_energy(xy: np.ndarray, f: SurfaceTension) -> float:
    """``sum_e f(rot(e))`` over the closed ring ``xy`` (orientation as given)."""
    xy = np.ascontiguousarray(xy, dtype=float)
    spec = f.kernel_spec()
    if spec is not None:
        kind, params, table = spec
        return float(kernels.tension_energy_grad(xy, kind, params, table, False)[0])
    e = np.roll(xy, -1, axis=0) - xy
    return float(np.sum(f.values(np.ascontiguousarray(np.column_stack([e[:, 1], -e[:, 0]])))[0]))


def geometry_energy(geom, f: SurfaceTension) -> float:
    """Surface energy of a shapely (multi)polygon, holes included."""
    total = 0.0
    for g in getattr(geom, "geoms", [geom]):
        if g.is_empty or g.geom_type != "Polygon" or g.area <= 0:
            continue
        g = orient(g, 1.0)
        total += ring_energy(np.asarray(g.exterior.coords)[:-1], f)
        for hole in g.interiors:
            total += ring_energy(np.asarray(hole.coords)[:-1], f)
    return total


def surface_energy(E, f: SurfaceTension) -> float:
    """Anisotropic perimeter ``F(E)``: sum of edge energies over all parts."""
    E = PolygonSet.of(E)
    return float(sum(ring_energy(p.vertices, f) for p in E.parts))


# ---------------------------------------------------------------------------
# potential energy


@dataclass(frozen=True)
class PotentialEnergy:
    value: float | None
    feasible: bool
    error: float


def potential_energy(E, g: Potential, quad_order: int = DEFAULT_QUAD_ORDER) -> PotentialEnergy:
    """``G(E)`` by triangulation and Gauss quadrature.

    The error estimate is the change when the order is raised by two.  An
    infeasible set (touching ``{g = inf}``) has ``value=None``.
    """
    E = PolygonSet.of(E)
    rings = [p.vertices for p in E.parts]
    if not g.set_feasible(rings):
        return PotentialEnergy(None, False, 0.0)
    lines = tuple(g.seams)
    lo = float(integrate_rings(g.value, rings, quad_order, lines))
    if not math.isfinite(lo):
        return PotentialEnergy(None, False, 0.0)
    hi = float(integrate_rings(g.value, rings, quad_order + 2, lines))
    return PotentialEnergy(lo, True, abs(hi - lo))


@dataclass(frozen=True)
class EnergyReport:
    surface: float
    potential: float | None
    total: float | None
    mass: float
    feasible: bool
    potential_error: float = 0.0

    def to_dict(self) -> dict:
        return asdict(self)


def free_energy(E, f: SurfaceTension, g: Potential, quad_order: int = DEFAULT_QUAD_ORDER) -> EnergyReport:
    E = PolygonSet.of(E)
    F = surface_energy(E, f)
    G = potential_energy(E, g, quad_order)
    total = F + G.value if G.feasible else None
    return EnergyReport(F, G.value, total, E.area, G.feasible, G.error)


# ---------------------------------------------------------------------------
# deficit and asymmetry


@dataclass(frozen=True)
class DeficitReport:
    deficit: float
    asymmetry: float
    best_translation: tuple
    n_param: int = 2
    asymmetry_is_upper_bound: bool = True

    def to_dict(self) -> dict:
        d = asdict(self)
        d["best_translation"] = list(self.best_translation)
        return d


def deficit_value(F: float, wulff_area: float, mass: float, n: int = 2) -> float:
    """``F / (n |K|^(1/n) |E|^((n-1)/n)) - 1``."""
    return F / (n * wulff_area ** (1.0 / n) * mass ** ((n - 1.0) / n)) - 1.0


def asymmetry(E, ref, max_rounds: int = 60, tol: float = 1e-7):
    """``inf_x |(E + x) delta ref| / |E|`` by centroid alignment, a 5x5 grid
    around it and coordinate descent.  Returns ``(value, x)``; the value is
    an upper bound for the true infimum."""
    E = PolygonSet.of(E)
    ref_geom = PolygonSet.of(ref).to_shapely()
    shapely.prepare(ref_geom)
    base = E.to_shapely()
    mass = E.area

    def cost(x):
        moved = shapely.transform(base, lambda c: c + x)
        return shapely.area(shapely.symmetric_difference(moved, ref_geom)) / mass

    x = PolygonSet.of(ref).centroid - E.centroid
    best = cost(x)
    h = 0.05 * math.sqrt(mass)
    for i in range(-2, 3):
        for j in range(-2, 3):
            if i == 0 and j == 0:
                continue
            y = x + h * np.array([i, j])
            c = cost(y)
            if c < best:
                best, x = c, y
    step = h
    floor = tol * math.sqrt(mass)
    for _ in range(max_rounds):
        improved = False
        for d in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            y = x + step * np.asarray(d, dtype=float)
            c = cost(y)
            if c < best:
                best, x, improved = c, y, True
        if not improved:
            step *= 0.5
            if step < floor:
                break
    return min(max(best, 0.0), 2.0), x


def deficit(E, f: SurfaceTension, wulff_resolution: int = 256, n: int = 2,
            K: Polygon | None = None) -> DeficitReport:
    """Isoperimetric deficit and asymmetry index against the Wulff shape.

    ``K`` defaults to ``wulff_shape(f, wulff_resolution)``; the reference for
    the asymmetry is ``K`` rescaled to the mass of ``E``.
    """
    E = PolygonSet.of(E)
    mass = E.area
    if not mass > 0:
        raise DegenerateInputError("deficit needs positive mass")
    if K is None:
        K = wulff_shape(f, wulff_resolution)
    d = deficit_value(surface_energy(E, f), K.area, mass, n)
    gamma = math.sqrt(mass / K.area)
    ref = K.scale(gamma, K.centroid)
    a, x = asymmetry(E, ref)
    return DeficitReport(float(d), float(a), (float(x[0]), float(x[1])), n)


# ---------------------------------------------------------------------------
# truncation to a sub-level set


@dataclass(frozen=True)
class TruncationResult:
    shape: PolygonSet
    level: float
    mass: float
    plateau: bool = False
    note: str = ""


def _geom_area(geom) -> float:
    return float(shapely.area(geom)) if geom is not None and not geom.is_empty else 0.0


def _bisect(fun, lo, hi, target, rel_tol, max_iter=200):
    """Largest-progress bisection for a non-decreasing ``fun`` on [lo, hi]."""
    a_lo, a_hi = fun(lo), fun(hi)
    for _ in range(max_iter):
        if abs(a_hi - target) <= rel_tol * target:
            return hi, a_hi, lo, a_lo
        if abs(a_lo - target) <= rel_tol * target:
            return lo, a_lo, lo, a_lo
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        a_mid = fun(mid)
        if a_mid < target:
            lo, a_lo = mid, a_mid
        else:
            hi, a_hi = mid, a_mid
    return hi, a_hi, lo, a_lo


def _halfplane_below(geom, s: float, ymin: float, pad: float):
    x0, y0, x1, y1 = geom.bounds
    return shapely.intersection(geom, shapely.box(x0 - pad, min(y0, ymin) - pad, x1 + pad, s))


def truncate_to_mass(E, g: Potential, m: float, resolution: int = 400,
                     rel_tol: float = 1e-9, on_plateau: str = "sweep") -> TruncationResult:
    """``[E]_m = {g <= lambda} cap E`` with ``lambda`` chosen so the area is ``m``.

    Gravity-type potentials (depending only on the height) are clipped
    exactly; other potentials use a marching-squares level field over the
    bounding box of ``E``.  When a plateau of ``g`` makes the area jump past
    ``m``, ``on_plateau="sweep"`` fills the plateau band from below with a
    horizontal half-plane and marks the result; ``"raise"`` raises
    :class:`PlateauError` with the attainable interval.
    """
    E = PolygonSet.of(E)
    total = E.area
    if not (0 < m <= total * (1 + 1e-12)):
        raise ValueError(f"mass {m} outside (0, |E|] = (0, {total}]")
    geom = E.to_shapely()
    x0, y0, x1, y1 = E.bounds()
    pad = 1.0 + (x1 - x0) + (y1 - y0)

    def finish(region, level, plateau=False, note=""):
        ps = PolygonSet.from_shapely(region, min_area=1e-14 * total)
        return TruncationResult(ps, float(level), ps.area, plateau, note)

    if m >= total * (1 - 1e-12):
        vals = g.value(E.all_vertices())
        return finish(geom, float(np.max(vals)), note="whole set")

    if isinstance(g, (LinearGravity, Gravity)):
        s, _, _, _ = _bisect(lambda s: _geom_area(_halfplane_below(geom, s, y0, pad)),
                             y0, y1, m, rel_tol)
        level = float(g.value(np.array([[0.0, max(s, 0.0)]]))[0])
        return finish(_halfplane_below(geom, s, y0, pad), level)

    span = max(x1 - x0, y1 - y0)
    margin = 2.0 * span / resolution
    grid = SublevelGrid(g, (x0 - margin, y0 - margin, x1 + margin, y1 + margin), resolution)
    cache: dict = {}

    def region(t):
        if t not in cache:
            cache[t] = shapely.intersection(grid.region(t), geom)
        return cache[t]

    lo = grid.vmin
    hi = grid.vmax + 0.25 * (grid.cap - grid.vmax)
    t, a_t, t_lo, a_lo = _bisect(lambda t: _geom_area(region(t)), lo, hi, m, rel_tol)
    if abs(a_t - m) <= rel_tol * m:
        return finish(region(t), t)
    # plateau: area jumps from a_lo < m to a_t > m across a vanishing interval
    if on_plateau == "raise":
        raise PlateauError(f"g has a plateau at level {t:.6g}; mass {m} not attainable by level",
                           level=t, mass_interval=(a_lo, a_t))
    inner = region(t_lo) if a_lo > 0 else shapely.Polygon()
    band = shapely.difference(region(t), inner) if a_lo > 0 else region(t)

    def swept(s):
        return shapely.union(inner, _halfplane_below(band, s, y0, pad))

    s, _, _, _ = _bisect(lambda s: _geom_area(swept(s)), y0 - margin, y1 + margin, m, rel_tol)
    rp = band.representative_point()
    level = float(g.value(np.array([[rp.x, rp.y]]))[0])
    return finish(swept(s), level, True,
                  f"plateau at level {level:.6g}: band filled from below; one of many selections")


# ---------------------------------------------------------------------------
# convexification and inclusion-exclusion


@dataclass(frozen=True)
class ConvexifyRecord:
    F_union: float
    F_hull: float
    connected: bool
    translated: bool
    holds: bool
    slack: float

    def to_dict(self) -> dict:
        return asdict(self)


def _connect(geoms, tol):
    """Translate pieces toward the first one until every closure touches."""
    cluster = geoms[0]
    moved = False
    out = [geoms[0]]
    for g in geoms[1:]:
        d = shapely.distance(cluster, g)
        if d > tol:
            line = shapely.shortest_line(g, cluster)
            (px, py), (qx, qy) = line.coords
            g = shapely.transform(g, lambda c, v=np.array([qx - px, qy - py]): c + v)
            moved = True
        out.append(g)
        cluster = shapely.union(cluster, g)
    return out, moved


def convexify_components_check(E, f: SurfaceTension, translate: bool = True,
                               tol: float = 1e-9) -> ConvexifyRecord:
    """Compare ``F`` of the union with ``F`` of its convex hull.

    Parts may touch (this function does not enforce separation).  If the
    closure of the union is disconnected and ``translate`` is set, parts are
    slid together until they touch before comparing.
    """
    parts = [p if isinstance(p, Polygon) else Polygon(p)
             for p in (E.parts if isinstance(E, PolygonSet) else
                       [E] if isinstance(E, Polygon) else E)]
    geoms = [p.to_shapely() for p in parts]
    union = shapely.union_all(geoms)
    connected = _closure_connected(geoms, tol)
    moved = False
    if not connected and translate:
        geoms, moved = _connect(geoms, tol)
        union = shapely.union_all(geoms)
        connected = _closure_connected(geoms, tol)
    F_union = geometry_energy(union, f)
    hull = convex_hull(np.vstack([np.asarray(g.exterior.coords) for g in geoms]))
    F_hull = surface_energy(hull, f)
    slack = F_union - F_hull
    return ConvexifyRecord(F_union, F_hull, connected, moved,
                           bool(slack >= -tol) if connected else True, slack)


def _closure_connected(geoms, tol) -> bool:
    n = len(geoms)
    seen = {0}
    stack = [0]
    while stack:
        i = stack.pop()
        for j in range(n):
            if j not in seen and shapely.distance(geoms[i], geoms[j]) <= tol:
                seen.add(j)
                stack.append(j)
    return len(seen) == n


@dataclass(frozen=True)
class InclusionExclusionRecord:
    F_A: float
    F_B: float
    F_union: float
    F_intersection: float
    slack: float

    def to_dict(self) -> dict:
        return asdict(self)


def inclusion_exclusion_check(A, B, f: SurfaceTension) -> InclusionExclusionRecord:
    """``F(A) + F(B) - F(A u B) - F(A n B)``, which is ``>= 0`` for convex ``f``."""
    A = A if isinstance(A, Polygon) else Polygon(A)
    B = B if isinstance(B, Polygon) else Polygon(B)
    ga, gb = A.to_shapely(), B.to_shapely()
    FA, FB = surface_energy(A, f), surface_energy(B, f)
    Fu = geometry_energy(shapely.union(ga, gb), f)
    Fi = geometry_energy(shapely.intersection(ga, gb), f)
    return InclusionExclusionRecord(FA, FB, Fu, Fi, FA + FB - Fu - Fi)
