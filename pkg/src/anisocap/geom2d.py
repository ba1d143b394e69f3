"""Polygon geometry with explicit tolerances.

Polygons are immutable, counter-clockwise and simple.  A :class:`PolygonSet`
is a finite union of polygons whose closures are pairwise disjoint.  Boolean
operations go through shapely (GEOS); everything that touches vertex loops in
the optimizer inner loop goes through :mod:`anisocap.kernels`.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
import shapely
from shapely.errors import GEOSException
from shapely.geometry import MultiPolygon
from shapely.geometry import Polygon as ShapelyPolygon

from . import kernels
from .errors import (
    DegenerateInputError,
    EmptyIntersectionError,
    InvariantViolationError,
    RobustnessError,
    UnboundedIntersectionError,
)

MERGE_TOL = 1e-9
AREA_TOL = 1e-12
SEPARATION_TOL = 1e-7


def _merge_close(xy: np.ndarray, tol: float) -> np.ndarray:
    """Drop vertices closer than ``tol`` to their predecessor (cyclically)."""
    if len(xy) == 0:
        return xy
    keep = [0]
    for k in range(1, len(xy)):
        if np.hypot(*(xy[k] - xy[keep[-1]])) > tol:
            keep.append(k)
    while len(keep) > 1 and np.hypot(*(xy[keep[-1]] - xy[keep[0]])) <= tol:
        keep.pop()
    return xy[keep]


class Polygon:
    """Simple polygon, stored counter-clockwise without the closing vertex."""

    __slots__ = ("_xy", "_area")

    def __init__(self, vertices, merge_tol: float = MERGE_TOL, area_tol: float = AREA_TOL,
                 validate: bool = True):
        xy = np.array(vertices, dtype=float).reshape(-1, 2)
        if not np.all(np.isfinite(xy)):
            raise DegenerateInputError("polygon has non-finite coordinates")
        xy = _merge_close(xy, merge_tol)
        if len(xy) < 3:
            raise DegenerateInputError(f"polygon needs >= 3 distinct vertices, got {len(xy)}")
        a = kernels.polygon_area(np.ascontiguousarray(xy))
        if a < 0:
            xy = xy[::-1].copy()
            a = -a
        if a <= area_tol:
            raise DegenerateInputError(f"polygon area {a:.3e} below tolerance {area_tol:.1e}")
        if validate and kernels.rings_intersect(np.ascontiguousarray(xy),
                                                np.array([0, len(xy)]), 0.0):
            raise DegenerateInputError("polygon is not simple")
        xy.setflags(write=False)
        self._xy = xy
        self._area = a

    @classmethod
    def _trusted(cls, xy: np.ndarray) -> "Polygon":
        """Wrap an array already known to be CCW, simple and merged."""
        obj = cls.__new__(cls)
        xy = np.array(xy, dtype=float)
        xy.setflags(write=False)
        obj._xy = xy
        obj._area = kernels.polygon_area(np.ascontiguousarray(xy))
        return obj

    @property
    def vertices(self) -> np.ndarray:
        return self._xy

    @property
    def area(self) -> float:
        return self._area

    @property
    def centroid(self) -> np.ndarray:
        return polygon_centroid(self._xy)

    def __len__(self):
        return len(self._xy)

    def __repr__(self):
        return f"Polygon(n={len(self._xy)}, area={self._area:.6g})"

    def __eq__(self, other):
        return isinstance(other, Polygon) and np.array_equal(self._xy, other._xy)

    def __hash__(self):
        return hash(self._xy.tobytes())

    def edges(self) -> np.ndarray:
        return np.roll(self._xy, -1, axis=0) - self._xy

    def translate(self, t) -> "Polygon":
        return Polygon._trusted(self._xy + np.asarray(t, dtype=float))

    def scale(self, a: float, center=(0.0, 0.0)) -> "Polygon":
        if a <= 0:
            raise ValueError("scale factor must be positive")
        c = np.asarray(center, dtype=float)
        return Polygon._trusted(c + a * (self._xy - c))

    def is_convex(self, tol: float = 1e-12) -> bool:
        e = self.edges()
        cr = e[:, 0] * np.roll(e[:, 1], -1) - e[:, 1] * np.roll(e[:, 0], -1)
        return bool(np.all(cr >= -tol * np.max(np.abs(e)) ** 2))

    def to_shapely(self) -> ShapelyPolygon:
        return ShapelyPolygon(self._xy)

    def to_list(self) -> list:
        return [[float(x), float(y)] for x, y in self._xy]


def polygon_centroid(xy: np.ndarray) -> np.ndarray:
    x, y = xy[:, 0], xy[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cr = x * yn - xn * y
    a = 0.5 * cr.sum()
    return np.array([((x + xn) * cr).sum(), ((y + yn) * cr).sum()]) / (6.0 * a)


class PolygonSet:
    """Finite union of polygons with pairwise separated closures."""

    __slots__ = ("parts",)

    def __init__(self, parts: Iterable, separation_tol: float = SEPARATION_TOL,
                 validate: bool = True):
        ps = tuple(p if isinstance(p, Polygon) else Polygon(p) for p in parts)
        if validate and len(ps) > 1:
            geoms = [p.to_shapely() for p in ps]
            for i in range(len(ps)):
                for j in range(i + 1, len(ps)):
                    d = geoms[i].distance(geoms[j])
                    if d < separation_tol:
                        raise InvariantViolationError(
                            f"parts {i} and {j} are {d:.3e} apart (< {separation_tol:.1e})")
        self.parts = ps

    @classmethod
    def of(cls, obj) -> "PolygonSet":
        if isinstance(obj, PolygonSet):
            return obj
        if isinstance(obj, Polygon):
            return cls([obj])
        return cls(obj)

    @classmethod
    def from_shapely(cls, geom, separation_tol: float = SEPARATION_TOL,
                     min_area: float = AREA_TOL) -> "PolygonSet":
        polys = []
        for g in getattr(geom, "geoms", [geom]):
            if g.is_empty or g.geom_type != "Polygon":
                continue
            if g.area <= min_area:
                continue
            if len(g.interiors):
                raise DegenerateInputError("region has holes; PolygonSet parts are simply connected")
            polys.append(Polygon(np.asarray(g.exterior.coords)[:-1]))
        return cls(polys, separation_tol=separation_tol, validate=False)

    def __len__(self):
        return len(self.parts)

    def __iter__(self):
        return iter(self.parts)

    def __repr__(self):
        return f"PolygonSet({len(self.parts)} parts, area={self.area:.6g})"

    @property
    def area(self) -> float:
        return float(sum(p.area for p in self.parts))

    @property
    def centroid(self) -> np.ndarray:
        w = np.array([p.area for p in self.parts])
        c = np.array([p.centroid for p in self.parts])
        return (w[:, None] * c).sum(axis=0) / w.sum()

    def is_empty(self) -> bool:
        return not self.parts

    def all_vertices(self) -> np.ndarray:
        if not self.parts:
            return np.zeros((0, 2))
        return np.vstack([p.vertices for p in self.parts])

    def bounds(self):
        v = self.all_vertices()
        return (*v.min(axis=0), *v.max(axis=0))

    def translate(self, t) -> "PolygonSet":
        return PolygonSet([p.translate(t) for p in self.parts], validate=False)

    def scale(self, a: float, center=(0.0, 0.0)) -> "PolygonSet":
        return PolygonSet([p.scale(a, center) for p in self.parts], validate=False)

    def to_shapely(self):
        return MultiPolygon([p.to_shapely() for p in self.parts])

    def to_list(self) -> list:
        return [p.to_list() for p in self.parts]


# ---------------------------------------------------------------------------
# serialisation


def polygon_to_json(poly: Polygon) -> str:
    return json.dumps(poly.to_list())


def polygon_from_json(text: str) -> Polygon:
    return Polygon(json.loads(text))


def polygon_set_to_json(E: PolygonSet) -> str:
    return json.dumps(E.to_list())


def polygon_set_from_json(text: str) -> PolygonSet:
    data = json.loads(text)
    if data and isinstance(data[0][0], (int, float)):
        data = [data]
    return PolygonSet(data)


def to_svg(shapes, stroke: str = "#1f4e79", fill: str = "#9ec5e8", margin: float = 0.05,
           width: int = 480) -> str:
    """SVG document with one <path> per polygon; the viewBox fits all shapes."""
    polys = []
    for s in shapes if isinstance(shapes, (list, tuple)) else [shapes]:
        polys.extend(PolygonSet.of(s).parts)
    v = np.vstack([p.vertices for p in polys])
    lo, hi = v.min(axis=0), v.max(axis=0)
    span = max(hi - lo)
    pad = margin * span if span > 0 else 1.0
    x0, y0 = lo - pad
    w, h = (hi - lo) + 2 * pad
    paths = []
    for p in polys:
        # flip y so that the plot is in the usual orientation
        pts = " L ".join(f"{x:.9g} {-y:.9g}" for x, y in p.vertices)
        paths.append(f'<path d="M {pts} Z" fill="{fill}" fill-opacity="0.6" stroke="{stroke}" '
                     f'stroke-width="{span / 300 if span > 0 else 0.01:.6g}"/>')
    height = int(round(width * h / w))
    return (f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
            f'viewBox="{x0:.9g} {-(y0 + h):.9g} {w:.9g} {h:.9g}">\n' + "\n".join(paths) + "\n</svg>\n")


# ---------------------------------------------------------------------------
# operations


def area(E) -> float:
    return PolygonSet.of(E).area


def half_plane_intersection(planes: Sequence, merge_tol: float = MERGE_TOL,
                            check_tol: float = 1e-9) -> Polygon:
    """Convex polygon ``{x : <x, d_i> <= c_i for all i}``.

    ``planes`` is a sequence of ``(direction, offset)`` pairs; directions are
    normalised (offsets rescaled accordingly).
    """
    if len(planes) < 3:
        raise UnboundedIntersectionError("need at least 3 half-planes for a bounded region")
    d = np.array([p[0] for p in planes], dtype=float).reshape(-1, 2)
    c = np.array([p[1] for p in planes], dtype=float)
    norms = np.hypot(d[:, 0], d[:, 1])
    if np.any(norms == 0):
        raise ValueError("zero direction in half-plane list")
    d = d / norms[:, None]
    c = c / norms

    ang = np.sort(np.mod(np.arctan2(d[:, 1], d[:, 0]), 2 * math.pi))
    gaps = np.diff(np.concatenate([ang, [ang[0] + 2 * math.pi]]))
    if gaps.max() >= math.pi - 1e-12:
        raise UnboundedIntersectionError("directions do not positively span the plane")

    d = np.ascontiguousarray(d)
    L = 4.0 * (np.max(np.abs(c)) + 1.0)
    for _ in range(64):
        box = np.array([[-L, -L], [L, -L], [L, L], [-L, L]])
        out = kernels.clip_halfplanes(box, d, c)
        if len(out) == 0 or np.max(np.abs(out)) < 0.5 * L:
            break
        L *= 8.0
    out = _merge_close(out, merge_tol)
    if len(out) < 3 or abs(kernels.polygon_area(np.ascontiguousarray(out))) <= AREA_TOL:
        raise EmptyIntersectionError("half-plane intersection is empty")
    poly = Polygon(out, merge_tol=merge_tol, validate=False)
    viol = (poly.vertices @ d.T - c).max()
    if viol > check_tol * max(1.0, np.max(np.abs(c))):
        raise RobustnessError(f"half-plane clipping violated a constraint by {viol:.3e}")
    return poly


def convex_hull(points) -> Polygon:
    """Andrew's monotone chain; collinear boundary points are dropped."""
    pts = np.unique(np.asarray(points, dtype=float).reshape(-1, 2), axis=0)
    if len(pts) < 3:
        raise DegenerateInputError("hull needs at least 3 distinct points")

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    lower: list = []
    for p in pts:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    upper: list = []
    for p in pts[::-1]:
        while len(upper) >= 2 and cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    return Polygon(np.array(lower[:-1] + upper[:-1]), validate=False)


def _robust(op, a, b, grid: float = MERGE_TOL):
    try:
        return op(a, b)
    except GEOSException:
        pass
    for g in (grid, 10 * grid, 100 * grid):
        try:
            return op(shapely.set_precision(a, g), shapely.set_precision(b, g))
        except GEOSException:
            continue
    raise RobustnessError("boolean operation failed after snap-rounding retries; "
                          "perturb the inputs by a few merge tolerances and retry")


def _as_geom(E):
    if isinstance(E, (Polygon, PolygonSet)):
        return PolygonSet.of(E).to_shapely()
    return E


def intersection(A, B):
    return _robust(shapely.intersection, _as_geom(A), _as_geom(B))


def union(A, B):
    return _robust(shapely.union, _as_geom(A), _as_geom(B))


def symmetric_difference_area(A, B) -> float:
    ga, gb = _as_geom(A), _as_geom(B)
    return float(_robust(shapely.symmetric_difference, ga, gb).area)


@dataclass(frozen=True)
class ConvexityReport:
    is_convex: bool
    defect: float
    hull: Polygon

    def to_dict(self):
        return {"is_convex": self.is_convex, "defect": self.defect,
                "hull": self.hull.to_list()}


def convexity_report(E, tol: float = 1e-9) -> ConvexityReport:
    """Convexity defect ``|conv(E) minus E| / |E|`` of a polygon set."""
    E = PolygonSet.of(E)
    a = E.area
    if a <= 0:
        raise DegenerateInputError("empty set has no convexity report")
    hull = convex_hull(E.all_vertices())
    # E lies inside its hull, so the set difference area is a plain subtraction
    defect = max(0.0, (hull.area - a) / a)
    return ConvexityReport(is_convex=defect <= tol, defect=defect, hull=hull)


@dataclass(frozen=True)
class Components:
    parts: tuple
    distances: np.ndarray  # pairwise minimum boundary distances

    @property
    def count(self) -> int:
        return len(self.parts)

    @property
    def min_distance(self) -> float:
        if len(self.parts) < 2:
            return math.inf
        iu = np.triu_indices(len(self.parts), k=1)
        return float(self.distances[iu].min())


def components(E, separation_tol: float = SEPARATION_TOL) -> Components:
    E = PolygonSet.of(E)
    geoms = [p.to_shapely() for p in E.parts]
    n = len(geoms)
    dist = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            dist[i, j] = dist[j, i] = geoms[i].distance(geoms[j])
            if dist[i, j] < separation_tol:
                raise InvariantViolationError(f"components {i} and {j} have overlapping closures")
    return Components(parts=E.parts, distances=dist)


def regular_polygon(n: int, radius: float = 1.0, center=(0.0, 0.0), phase: float = 0.0) -> Polygon:
    t = phase + 2 * math.pi * np.arange(n) / n
    return Polygon(np.column_stack([center[0] + radius * np.cos(t),
                                    center[1] + radius * np.sin(t)]))


def rectangle(x0: float, y0: float, x1: float, y1: float) -> Polygon:
    return Polygon([[x0, y0], [x1, y0], [x1, y1], [x0, y1]])


def resample(xy: np.ndarray, n: int) -> np.ndarray:
    """``n`` points equally spaced in arc length along a closed polyline."""
    closed = np.vstack([xy, xy[:1]])
    seg = np.hypot(*np.diff(closed, axis=0).T)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    t = np.linspace(0.0, s[-1], n, endpoint=False)
    return np.column_stack([np.interp(t, s, closed[:, 0]), np.interp(t, s, closed[:, 1])])
