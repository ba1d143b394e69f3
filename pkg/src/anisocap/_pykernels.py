"""NumPy implementations of the hot geometric kernels.

Every function here has a twin with the same signature in ``_ckernels.pyx``.
This module is used when the extension is not built or when
``ANISOCAP_PURE_PYTHON=1`` is set.
"""

import math

import numpy as np

KIND_ISOTROPIC = 0
KIND_PNORM = 1
KIND_CRYSTAL = 2
KIND_TABLE = 3


def polygon_area(xy):
    x = xy[:, 0]
    y = xy[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def _cross(ax, ay, bx, by):
    return ax * by - ay * bx


def rings_intersect(xy, offsets, tol):
    """True if the closed polylines share a point other than ring-adjacent joints.

    ``xy`` concatenates all rings, ``offsets`` holds ring start indices
    followed by ``len(xy)``.  Non-adjacent edges closer than ``tol`` count
    as intersecting, and so does an edge folding back onto its neighbour.
    """
    xy = np.asarray(xy, dtype=float)
    offsets = np.asarray(offsets, dtype=np.int64)
    n = len(xy)
    nxt = np.empty(n, dtype=np.int64)
    ring_id = np.empty(n, dtype=np.int64)
    for r in range(len(offsets) - 1):
        s, e = offsets[r], offsets[r + 1]
        nxt[s:e - 1] = np.arange(s + 1, e)
        nxt[e - 1] = s
        ring_id[s:e] = r
    a = xy
    b = xy[nxt]
    d = b - a

    # fold-back between consecutive edges
    dn = d[nxt]
    cr = _cross(d[:, 0], d[:, 1], dn[:, 0], dn[:, 1])
    dt = np.einsum("ij,ij->i", d, dn)
    ln = np.hypot(d[:, 0], d[:, 1]) * np.hypot(dn[:, 0], dn[:, 1])
    if np.any((np.abs(cr) <= tol * ln) & (dt < 0)):
        return True

    i, j = np.triu_indices(n, k=1)
    adjacent = (nxt[i] == j) | (nxt[j] == i)
    i = i[~adjacent]
    j = j[~adjacent]
    if len(i) == 0:
        return False
    return bool(np.any(_segments_close(a[i], b[i], a[j], b[j], tol)))


def _segments_close(p1, p2, q1, q2, tol):
    """Vectorised closed-segment intersection test with distance slack ``tol``."""
    r = p2 - p1
    s = q2 - q1
    d1 = _cross(r[:, 0], r[:, 1], q1[:, 0] - p1[:, 0], q1[:, 1] - p1[:, 1])
    d2 = _cross(r[:, 0], r[:, 1], q2[:, 0] - p1[:, 0], q2[:, 1] - p1[:, 1])
    d3 = _cross(s[:, 0], s[:, 1], p1[:, 0] - q1[:, 0], p1[:, 1] - q1[:, 1])
    d4 = _cross(s[:, 0], s[:, 1], p2[:, 0] - q1[:, 0], p2[:, 1] - q1[:, 1])
    proper = (d1 * d2 < 0) & (d3 * d4 < 0)
    close = (
        (_point_segment_dist(q1, p1, p2) <= tol)
        | (_point_segment_dist(q2, p1, p2) <= tol)
        | (_point_segment_dist(p1, q1, q2) <= tol)
        | (_point_segment_dist(p2, q1, q2) <= tol)
    )
    return proper | close


def _point_segment_dist(p, a, b):
    ab = b - a
    denom = np.einsum("ij,ij->i", ab, ab)
    t = np.einsum("ij,ij->i", p - a, ab) / np.where(denom > 0, denom, 1.0)
    t = np.clip(t, 0.0, 1.0)
    proj = a + t[:, None] * ab
    return np.hypot(p[:, 0] - proj[:, 0], p[:, 1] - proj[:, 1])


def ear_clip(xy):
    """Triangulate a simple CCW polygon; returns an (n-2, 3) index array."""
    n = len(xy)
    idx = list(range(n))
    tris = []
    pts = [(float(p[0]), float(p[1])) for p in xy]

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    def inside(p, a, b, c):
        return cross(a, b, p) > 0 and cross(b, c, p) > 0 and cross(c, a, p) > 0

    guard = 0
    while len(idx) > 3:
        m = len(idx)
        found = False
        best_k, best_c = 0, -math.inf
        for k in range(m):
            ia, ib, ic = idx[k - 1], idx[k], idx[(k + 1) % m]
            a, b, c = pts[ia], pts[ib], pts[ic]
            cr = cross(a, b, c)
            if cr > best_c:
                best_k, best_c = k, cr
            if cr <= 0:
                continue
            ok = True
            for q in idx:
                if q in (ia, ib, ic):
                    continue
                if inside(pts[q], a, b, c):
                    ok = False
                    break
            if ok:
                tris.append((ia, ib, ic))
                del idx[k]
                found = True
                break
        if not found:
            # numerically stuck (collinear runs); drop the most convex vertex
            k = best_k
            tris.append((idx[k - 1], idx[k], idx[(k + 1) % m]))
            del idx[k]
        guard += 1
        if guard > 4 * n:
            break
    tris.append(tuple(idx))
    return np.asarray(tris, dtype=np.int64)


def clip_halfplanes(poly, normals, offsets):
    """Clip a convex CCW polygon by every half-plane ``<x, normal> <= offset``."""
    pts = [(float(p[0]), float(p[1])) for p in poly]
    for (a, b), c in zip(normals, offsets):
        if not pts:
            break
        out = []
        m = len(pts)
        for k in range(m):
            p = pts[k]
            q = pts[(k + 1) % m]
            vp = a * p[0] + b * p[1] - c
            vq = a * q[0] + b * q[1] - c
            if vp <= 0:
                out.append(p)
            if (vp < 0 < vq) or (vq < 0 < vp):
                t = vp / (vp - vq)
                out.append((p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])))
        pts = out
    return np.asarray(pts, dtype=float).reshape(-1, 2)


def tension_values(normals, kind, params, table):
    """f and grad f at an (m, 2) array of vectors."""
    v = np.asarray(normals, dtype=float)
    x = v[:, 0]
    y = v[:, 1]
    if kind == KIND_ISOTROPIC:
        R = params[0]
        r = np.hypot(x, y)
        safe = np.where(r > 0, r, 1.0)
        g = R * v / safe[:, None]
        g[r == 0] = 0.0
        return R * r, g
    if kind == KIND_PNORM:
        p = params[0]
        ax, ay = np.abs(x), np.abs(y)
        if math.isinf(p):
            val = np.maximum(ax, ay)
            g = np.zeros_like(v)
            use_x = ax >= ay
            g[use_x, 0] = np.sign(x[use_x])
            g[~use_x, 1] = np.sign(y[~use_x])
            return val, g
        if p == 1.0:
            return ax + ay, np.sign(v)
        val = (ax**p + ay**p) ** (1.0 / p)
        safe = np.where(val > 0, val, 1.0)
        g = np.sign(v) * (np.abs(v) / safe[:, None]) ** (p - 1.0)
        g[val == 0] = 0.0
        return val, g
    if kind == KIND_CRYSTAL:
        gens = np.asarray(params, dtype=float).reshape(-1, 2)
        dots = v @ gens.T
        k = np.argmax(dots, axis=1)
        return dots[np.arange(len(v)), k], gens[k].copy()
    if kind == KIND_TABLE:
        return _table_values(v, table)
    raise ValueError(f"unknown tension kind {kind}")


def _table_values(v, table):
    n = len(table)
    h = 2.0 * math.pi / n
    r = np.hypot(v[:, 0], v[:, 1])
    theta = np.mod(np.arctan2(v[:, 1], v[:, 0]), 2.0 * math.pi)
    u = theta / h
    j = np.floor(u).astype(np.int64) % n
    t = u - np.floor(u)
    j1 = (j + 1) % n
    s0, s1 = table[j, 0], table[j1, 0]
    m0, m1 = table[j, 1] * h, table[j1, 1] * h
    t2, t3 = t * t, t * t * t
    s = (2 * t3 - 3 * t2 + 1) * s0 + (t3 - 2 * t2 + t) * m0 + (-2 * t3 + 3 * t2) * s1 + (t3 - t2) * m1
    ds = ((6 * t2 - 6 * t) * s0 + (3 * t2 - 4 * t + 1) * m0 + (-6 * t2 + 6 * t) * s1 + (3 * t2 - 2 * t) * m1) / h
    c, sn = np.cos(theta), np.sin(theta)
    g = np.stack([s * c - ds * sn, s * sn + ds * c], axis=1)
    return r * s, g


def tension_energy_grad(xy, kind, params, table, want_grad):
    """Anisotropic perimeter of one closed CCW ring and its vertex gradient."""
    e = np.roll(xy, -1, axis=0) - xy
    normals = np.stack([e[:, 1], -e[:, 0]], axis=1)
    vals, g = tension_values(normals, kind, params, table)
    F = float(vals.sum())
    if not want_grad:
        return F, None
    jt = np.stack([-g[:, 1], g[:, 0]], axis=1)  # J^T grad f
    return F, np.roll(jt, 1, axis=0) - jt
