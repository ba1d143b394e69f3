"""Triangle and edge quadrature for integrals over polygons."""

from __future__ import annotations

from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi, roots_legendre
from shapely.geometry import Polygon as ShapelyPolygon

from . import kernels


@lru_cache(maxsize=None)
def triangle_rule(order: int):
    """Conical product rule on the triangle (0,0), (1,0), (0,1).

    ``order`` points per direction; exact for polynomials of total degree
    ``2 * order - 1``.  Weights sum to 1/2.
    """
    xj, wj = roots_jacobi(order, 1.0, 0.0)  # weight (1 - x) on [-1, 1]
    xl, wl = roots_legendre(order)
    s = 0.5 * (1.0 + xj)
    ws = wj / 4.0
    t = 0.5 * (1.0 + xl)
    wt = wl / 2.0
    S, T = np.meshgrid(s, t, indexing="ij")
    pts = np.column_stack([S.ravel(), (T * (1.0 - S)).ravel()])
    w = np.outer(ws, wt).ravel()
    pts.setflags(write=False)
    w.setflags(write=False)
    return pts, w


@lru_cache(maxsize=None)
def line_rule(order: int):
    """Gauss-Legendre nodes and weights on [0, 1]."""
    x, w = roots_legendre(order)
    t = 0.5 * (1.0 + x)
    w = 0.5 * w
    t.setflags(write=False)
    w.setflags(write=False)
    return t, w


def _is_convex_ccw(xy: np.ndarray) -> bool:
    e = np.roll(xy, -1, axis=0) - xy
    cr = e[:, 0] * np.roll(e[:, 1], -1) - e[:, 1] * np.roll(e[:, 0], -1)
    return bool(np.all(cr >= 0))


def triangulate(xy: np.ndarray) -> np.ndarray:
    """Triangle index array for a simple CCW polygon (fan when convex)."""
    n = len(xy)
    if _is_convex_ccw(xy):
        k = np.arange(1, n - 1)
        return np.column_stack([np.zeros(n - 2, dtype=np.int64), k, k + 1])
    return kernels.ear_clip(np.ascontiguousarray(xy))


def quadrature_points(xy: np.ndarray, order: int):
    """Physical quadrature points and weights covering one polygon."""
    tris = triangulate(xy)
    ref, w = triangle_rule(order)
    A = xy[tris[:, 0]]
    B = xy[tris[:, 1]]
    C = xy[tris[:, 2]]
    AB = B - A
    AC = C - A
    det = AB[:, 0] * AC[:, 1] - AB[:, 1] * AC[:, 0]
    pts = (A[:, None, :] + ref[None, :, 0, None] * AB[:, None, :]
           + ref[None, :, 1, None] * AC[:, None, :])
    wts = det[:, None] * w[None, :]
    return pts.reshape(-1, 2), wts.ravel()


def split_by_lines(rings: list, lines, tol: float = 1e-12) -> list:
    """Cut polygon rings along lines ``(point, normal)`` they straddle."""
    out = [np.asarray(r, dtype=float) for r in rings]
    for p0, nrm in lines:
        p0 = np.asarray(p0, dtype=float)
        nrm = np.asarray(nrm, dtype=float)
        nxt = []
        for r in out:
            s = (r - p0) @ nrm
            if s.min() >= -tol or s.max() <= tol:
                nxt.append(r)
                continue
            poly = ShapelyPolygon(r)
            lo, hi = r.min(axis=0), r.max(axis=0)
            L = 4.0 * (np.max(np.abs(np.concatenate([lo - p0, hi - p0]))) + 1.0)
            tang = np.array([-nrm[1], nrm[0]])
            for side in (1.0, -1.0):
                half = ShapelyPolygon([p0 + L * tang, p0 - L * tang,
                                       p0 - L * tang + side * L * nrm,
                                       p0 + L * tang + side * L * nrm])
                piece = poly.intersection(half)
                for g in getattr(piece, "geoms", [piece]):
                    if g.geom_type == "Polygon" and g.area > 0:
                        ring = np.asarray(g.exterior.coords)[:-1]
                        if kernels.polygon_area(np.ascontiguousarray(ring)) < 0:
                            ring = ring[::-1]
                        nxt.append(np.ascontiguousarray(ring))
        out = nxt
    return out


def integrate_rings(fn, rings, order: int, lines=()) -> np.ndarray:
    """Sum of ``integral fn`` over CCW rings; ``fn`` maps (m,2) -> (m,) or (m,k)."""
    pieces = split_by_lines(list(rings), lines) if lines else list(rings)
    total = None
    for r in pieces:
        pts, w = quadrature_points(np.ascontiguousarray(r), order)
        vals = np.asarray(fn(pts), dtype=float)
        contrib = np.tensordot(w, vals, axes=(0, 0))
        total = contrib if total is None else total + contrib
    return total if total is not None else np.float64(0.0)
