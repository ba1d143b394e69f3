# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled twins of the kernels in ``_pykernels``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport atan2, cos, sin, sqrt, fabs, floor, pow, fmod, M_PI, INFINITY

cnp.import_array()

DEF KIND_ISOTROPIC = 0
DEF KIND_PNORM = 1
DEF KIND_CRYSTAL = 2
DEF KIND_TABLE = 3


def polygon_area(const double[:, ::1] xy):
    cdef Py_ssize_t n = xy.shape[0], i, j
    cdef double s = 0.0
    with nogil:
        for i in range(n):
            j = i + 1
            if j == n:
                j = 0
            s += xy[i, 0] * xy[j, 1] - xy[j, 0] * xy[i, 1]
    return 0.5 * s


cdef inline double _cross(double ax, double ay, double bx, double by) nogil:
    return ax * by - ay * bx


cdef inline double _pt_seg_dist(double px, double py, double ax, double ay,
                                double bx, double by) nogil:
    cdef double abx = bx - ax, aby = by - ay
    cdef double den = abx * abx + aby * aby
    cdef double t = 0.0
    if den > 0:
        t = ((px - ax) * abx + (py - ay) * aby) / den
        if t < 0:
            t = 0.0
        elif t > 1:
            t = 1.0
    cdef double dx = px - (ax + t * abx), dy = py - (ay + t * aby)
    return sqrt(dx * dx + dy * dy)


cdef inline bint _seg_close(double p1x, double p1y, double p2x, double p2y,
                            double q1x, double q1y, double q2x, double q2y,
                            double tol) nogil:
    cdef double rx = p2x - p1x, ry = p2y - p1y
    cdef double sx = q2x - q1x, sy = q2y - q1y
    cdef double d1 = _cross(rx, ry, q1x - p1x, q1y - p1y)
    cdef double d2 = _cross(rx, ry, q2x - p1x, q2y - p1y)
    cdef double d3 = _cross(sx, sy, p1x - q1x, p1y - q1y)
    cdef double d4 = _cross(sx, sy, p2x - q1x, p2y - q1y)
    if d1 * d2 < 0 and d3 * d4 < 0:
        return True
    if _pt_seg_dist(q1x, q1y, p1x, p1y, p2x, p2y) <= tol:
        return True
    if _pt_seg_dist(q2x, q2y, p1x, p1y, p2x, p2y) <= tol:
        return True
    if _pt_seg_dist(p1x, p1y, q1x, q1y, q2x, q2y) <= tol:
        return True
    if _pt_seg_dist(p2x, p2y, q1x, q1y, q2x, q2y) <= tol:
        return True
    return False


def rings_intersect(xy_in, offsets_in, double tol):
    cdef const double[:, ::1] xy = np.ascontiguousarray(xy_in, dtype=np.float64)
    cdef long long[::1] off = np.ascontiguousarray(offsets_in, dtype=np.int64)
    cdef Py_ssize_t n = xy.shape[0], nr = off.shape[0] - 1
    cdef long long[::1] nxt = np.empty(n, dtype=np.int64)
    cdef Py_ssize_t r, i, j, s, e, k
    cdef double dx, dy, ex, ey, cr, dt, ln
    cdef bint hit = False
    for r in range(nr):
        s = off[r]
        e = off[r + 1]
        for i in range(s, e - 1):
            nxt[i] = i + 1
        nxt[e - 1] = s
    with nogil:
        for i in range(n):
            k = nxt[i]
            dx = xy[k, 0] - xy[i, 0]
            dy = xy[k, 1] - xy[i, 1]
            ex = xy[nxt[k], 0] - xy[k, 0]
            ey = xy[nxt[k], 1] - xy[k, 1]
            cr = _cross(dx, dy, ex, ey)
            dt = dx * ex + dy * ey
            ln = sqrt(dx * dx + dy * dy) * sqrt(ex * ex + ey * ey)
            if fabs(cr) <= tol * ln and dt < 0:
                hit = True
                break
        if not hit:
            for i in range(n):
                if hit:
                    break
                for j in range(i + 1, n):
                    if nxt[i] == j or nxt[j] == i:
                        continue
                    if _seg_close(xy[i, 0], xy[i, 1], xy[nxt[i], 0], xy[nxt[i], 1],
                                  xy[j, 0], xy[j, 1], xy[nxt[j], 0], xy[nxt[j], 1], tol):
                        hit = True
                        break
    return bool(hit)


cdef inline double _tri_cross(const double[:, ::1] p, long a, long b, long c) nogil:
    return (p[b, 0] - p[a, 0]) * (p[c, 1] - p[a, 1]) - (p[b, 1] - p[a, 1]) * (p[c, 0] - p[a, 0])


def ear_clip(xy_in):
    cdef const double[:, ::1] p = np.ascontiguousarray(xy_in, dtype=np.float64)
    cdef Py_ssize_t n = p.shape[0]
    out = np.empty((max(n - 2, 1), 3), dtype=np.int64)
    cdef long long[:, ::1] tris = out
    cdef long long[::1] idx = np.arange(n, dtype=np.int64)
    cdef Py_ssize_t m = n, k, q, ntri = 0, best_k, guard = 0
    cdef long ia, ib, ic, iq
    cdef double cr, best_c
    cdef bint ok, found
    with nogil:
        while m > 3:
            found = False
            best_k = 0
            best_c = -INFINITY
            for k in range(m):
                ia = idx[(k + m - 1) % m]
                ib = idx[k]
                ic = idx[(k + 1) % m]
                cr = _tri_cross(p, ia, ib, ic)
                if cr > best_c:
                    best_c = cr
                    best_k = k
                if cr <= 0:
                    continue
                ok = True
                for q in range(m):
                    iq = idx[q]
                    if iq == ia or iq == ib or iq == ic:
                        continue
                    if (_tri_cross(p, ia, ib, iq) > 0 and _tri_cross(p, ib, ic, iq) > 0
                            and _tri_cross(p, ic, ia, iq) > 0):
                        ok = False
                        break
                if ok:
                    found = True
                    best_k = k
                    break
            k = best_k
            tris[ntri, 0] = idx[(k + m - 1) % m]
            tris[ntri, 1] = idx[k]
            tris[ntri, 2] = idx[(k + 1) % m]
            ntri += 1
            for q in range(k, m - 1):
                idx[q] = idx[q + 1]
            m -= 1
            guard += 1
            if guard > 4 * n:
                break
        tris[ntri, 0] = idx[0]
        tris[ntri, 1] = idx[1]
        tris[ntri, 2] = idx[2]
        ntri += 1
    return out[:ntri]


def clip_halfplanes(poly_in, normals_in, offsets_in):
    cdef const double[:, ::1] nrm = np.ascontiguousarray(normals_in, dtype=np.float64)
    cdef const double[::1] off = np.ascontiguousarray(offsets_in, dtype=np.float64)
    cdef Py_ssize_t nplanes = nrm.shape[0]
    cdef Py_ssize_t cap = poly_in.shape[0] + nplanes + 4
    a_buf = np.zeros((cap, 2))
    b_buf = np.zeros((cap, 2))
    cdef double[:, ::1] cur = a_buf
    cdef double[:, ::1] nxt = b_buf
    cdef double[:, ::1] tmp
    cdef Py_ssize_t m = poly_in.shape[0], mo, k, k1, pl
    cdef double a, b, c, vp, vq, t
    a_buf[:m, :] = np.asarray(poly_in, dtype=np.float64)
    with nogil:
        for pl in range(nplanes):
            if m == 0:
                break
            a = nrm[pl, 0]
            b = nrm[pl, 1]
            c = off[pl]
            mo = 0
            for k in range(m):
                k1 = k + 1
                if k1 == m:
                    k1 = 0
                vp = a * cur[k, 0] + b * cur[k, 1] - c
                vq = a * cur[k1, 0] + b * cur[k1, 1] - c
                if vp <= 0:
                    nxt[mo, 0] = cur[k, 0]
                    nxt[mo, 1] = cur[k, 1]
                    mo += 1
                if (vp < 0 and vq > 0) or (vq < 0 and vp > 0):
                    t = vp / (vp - vq)
                    nxt[mo, 0] = cur[k, 0] + t * (cur[k1, 0] - cur[k, 0])
                    nxt[mo, 1] = cur[k, 1] + t * (cur[k1, 1] - cur[k, 1])
                    mo += 1
            tmp = cur
            cur = nxt
            nxt = tmp
            m = mo
    return np.asarray(cur[:m, :]).copy()


cdef inline double _sign(double x) nogil:
    if x > 0:
        return 1.0
    if x < 0:
        return -1.0
    return 0.0


cdef inline void _tension(double x, double y, int kind, const double[::1] prm,
                          const double[:, ::1] table, double* val, double* gx,
                          double* gy) noexcept nogil:
    cdef double r, p, ax, ay, s, best, d, h, theta, u, t, t2, t3
    cdef double s0, s1, m0, m1, sv, dsv, cth, sth
    cdef Py_ssize_t i, j, j1, ng, best_i, nt
    if kind == KIND_ISOTROPIC:
        r = sqrt(x * x + y * y)
        val[0] = prm[0] * r
        if r > 0:
            gx[0] = prm[0] * x / r
            gy[0] = prm[0] * y / r
        else:
            gx[0] = 0.0
            gy[0] = 0.0
    elif kind == KIND_PNORM:
        p = prm[0]
        ax = fabs(x)
        ay = fabs(y)
        if p == INFINITY:
            gx[0] = 0.0
            gy[0] = 0.0
            if ax >= ay:
                val[0] = ax
                gx[0] = _sign(x)
            else:
                val[0] = ay
                gy[0] = _sign(y)
        elif p == 1.0:
            val[0] = ax + ay
            gx[0] = _sign(x)
            gy[0] = _sign(y)
        else:
            s = pow(pow(ax, p) + pow(ay, p), 1.0 / p)
            val[0] = s
            if s > 0:
                gx[0] = _sign(x) * pow(ax / s, p - 1.0)
                gy[0] = _sign(y) * pow(ay / s, p - 1.0)
            else:
                gx[0] = 0.0
                gy[0] = 0.0
    elif kind == KIND_CRYSTAL:
        ng = prm.shape[0] // 2
        best = -INFINITY
        best_i = 0
        for i in range(ng):
            d = prm[2 * i] * x + prm[2 * i + 1] * y
            if d > best:
                best = d
                best_i = i
        val[0] = best
        gx[0] = prm[2 * best_i]
        gy[0] = prm[2 * best_i + 1]
    else:
        nt = table.shape[0]
        h = 2.0 * M_PI / nt
        r = sqrt(x * x + y * y)
        theta = atan2(y, x)
        if theta < 0:
            theta += 2.0 * M_PI
        u = theta / h
        j = <Py_ssize_t>floor(u)
        t = u - j
        j = j % nt
        j1 = (j + 1) % nt
        s0 = table[j, 0]
        s1 = table[j1, 0]
        m0 = table[j, 1] * h
        m1 = table[j1, 1] * h
        t2 = t * t
        t3 = t2 * t
        sv = (2 * t3 - 3 * t2 + 1) * s0 + (t3 - 2 * t2 + t) * m0 + (-2 * t3 + 3 * t2) * s1 + (t3 - t2) * m1
        dsv = ((6 * t2 - 6 * t) * s0 + (3 * t2 - 4 * t + 1) * m0 + (-6 * t2 + 6 * t) * s1 + (3 * t2 - 2 * t) * m1) / h
        cth = cos(theta)
        sth = sin(theta)
        val[0] = r * sv
        gx[0] = sv * cth - dsv * sth
        gy[0] = sv * sth + dsv * cth


def tension_values(normals_in, int kind, params_in, table_in):
    cdef const double[:, ::1] v = np.ascontiguousarray(normals_in, dtype=np.float64)
    cdef const double[::1] prm = np.ascontiguousarray(params_in, dtype=np.float64)
    cdef const double[:, ::1] table = np.ascontiguousarray(table_in, dtype=np.float64).reshape(-1, 2)
    cdef Py_ssize_t m = v.shape[0], i
    vals = np.empty(m)
    grads = np.empty((m, 2))
    cdef double[::1] vv = vals
    cdef double[:, ::1] gg = grads
    cdef double fv, gx, gy
    with nogil:
        for i in range(m):
            _tension(v[i, 0], v[i, 1], kind, prm, table, &fv, &gx, &gy)
            vv[i] = fv
            gg[i, 0] = gx
            gg[i, 1] = gy
    return vals, grads


def tension_energy_grad(xy_in, int kind, params_in, table_in, bint want_grad):
    cdef const double[:, ::1] xy = np.ascontiguousarray(xy_in, dtype=np.float64)
    cdef const double[::1] prm = np.ascontiguousarray(params_in, dtype=np.float64)
    cdef const double[:, ::1] table = np.ascontiguousarray(table_in, dtype=np.float64).reshape(-1, 2)
    cdef Py_ssize_t n = xy.shape[0], i, j
    cdef double F = 0.0, fv, gx, gy, jx, jy
    grad = np.zeros((n, 2)) if want_grad else None
    cdef double[:, ::1] g
    if want_grad:
        g = grad
    with nogil:
        for i in range(n):
            j = i + 1
            if j == n:
                j = 0
            # outward normal of a CCW edge is the edge rotated by -90 degrees
            _tension(xy[j, 1] - xy[i, 1], -(xy[j, 0] - xy[i, 0]), kind, prm, table,
                     &fv, &gx, &gy)
            F += fv
            if want_grad:
                jx = -gy
                jy = gx
                g[j, 0] += jx
                g[j, 1] += jy
                g[i, 0] -= jx
                g[i, 1] -= jy
    return F, grad
