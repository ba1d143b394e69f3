"""Potentials ``g >= 0`` with gradients, sub-level sets and audits.

Values are extended reals: points outside the finite domain evaluate to
``math.inf`` (IEEE infinity), never to a large float.  Every model works on
``(m, 2)`` arrays of points.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
import shapely
from scipy.interpolate import PchipInterpolator
from skimage.measure import find_contours

from .errors import InfeasibleError
from .geom2d import Polygon, PolygonSet
from .quadrature import integrate_rings

INF = math.inf


def _pts(x) -> tuple[np.ndarray, bool]:
    a = np.asarray(x, dtype=float)
    return a.reshape(-1, 2), a.ndim == 1


# ---------------------------------------------------------------------------
# scalar profiles used by the gravity and radial families


@dataclass(frozen=True, eq=False)
class Profile:
    """Scalar function on ``[0, inf)``: ``coef * t**exponent`` or a table.

    Tables are interpolated with a monotone cubic (PCHIP).
    """

    kind: str = "power"
    coef: float = 1.0
    exponent: float = 1.0
    xs: tuple = ()
    ys: tuple = ()
    _interp: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.kind == "tabulated":
            xs = np.asarray(self.xs, dtype=float)
            ys = np.asarray(self.ys, dtype=float)
            if len(xs) < 2 or np.any(np.diff(xs) <= 0):
                raise ValueError("tabulated profile needs increasing abscissae")
            f = PchipInterpolator(xs, ys, extrapolate=True)
            self._interp.update(f=f, df=f.derivative(), d2f=f.derivative(2))
        elif self.kind != "power":
            raise ValueError(f"unknown profile kind {self.kind!r}")

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind == "power":
            return self.coef * np.power(t, self.exponent)
        return self._interp["f"](t)

    def deriv(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind == "power":
            p = self.exponent
            if p == 1.0:
                return np.full_like(t, self.coef)
            with np.errstate(divide="ignore", invalid="ignore"):
                return np.where(t > 0, self.coef * p * np.power(t, p - 1.0), 0.0 if p > 1 else INF)
        return self._interp["df"](t)

    def second(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind == "power":
            p = self.exponent
            if p in (1.0, 2.0):
                return np.full_like(t, 0.0 if p == 1.0 else 2.0 * self.coef)
            with np.errstate(divide="ignore", invalid="ignore"):
                return np.where(t > 0, self.coef * p * (p - 1) * np.power(t, p - 2.0), 0.0)
        return self._interp["d2f"](t)

    def descriptor(self):
        if self.kind == "power":
            return {"kind": "power", "coef": self.coef, "exponent": self.exponent}
        return {"kind": "tabulated", "xs": list(self.xs), "ys": list(self.ys)}

    @classmethod
    def from_descriptor(cls, d):
        if d.get("kind", "power") == "power":
            return cls("power", float(d.get("coef", 1.0)), float(d.get("exponent", 1.0)))
        return cls("tabulated", xs=tuple(d["xs"]), ys=tuple(d["ys"]))


# ---------------------------------------------------------------------------


class Potential:
    """Base class.  Subclasses implement ``value`` and usually ``grad``."""

    name = "potential"
    translation_invariant = False
    convex_sublevels = False
    # lines (point, normal) across which g is not smooth; used to split
    # quadrature cells
    seams: tuple = ()

    def value(self, pts: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def grad(self, pts: np.ndarray) -> np.ndarray:
        """Central differences with step ``1e-6 (1 + |x|)``; models override."""
        pts = np.asarray(pts, dtype=float).reshape(-1, 2)
        h = 1e-6 * (1.0 + np.hypot(pts[:, 0], pts[:, 1]))
        out = np.empty_like(pts)
        for k in range(2):
            e = np.zeros(2)
            e[k] = 1.0
            out[:, k] = (self.value(pts + h[:, None] * e) - self.value(pts - h[:, None] * e)) / (2 * h)
        return out

    def hessian(self, pts: np.ndarray):
        """Closed-form Hessian ``(m, 2, 2)`` or None when unavailable."""
        return None

    def feasible(self, pts: np.ndarray) -> np.ndarray:
        return np.isfinite(self.value(pts))

    def project(self, pts: np.ndarray) -> np.ndarray:
        """Closest points of the closed finite domain."""
        return np.asarray(pts, dtype=float)

    def set_feasible(self, rings) -> bool:
        """Whether a union of CCW rings lies in ``{g < inf}``."""
        return all(bool(np.all(self.feasible(r))) for r in rings)

    def nonsmooth(self, pts: np.ndarray, tol: float = 1e-9) -> np.ndarray:
        pts = np.asarray(pts, dtype=float).reshape(-1, 2)
        out = np.zeros(len(pts), dtype=bool)
        for p0, nrm in self.seams:
            out |= np.abs((pts - p0) @ np.asarray(nrm)) <= tol
        return out

    def descriptor(self) -> dict:
        raise NotImplementedError

    def __call__(self, x):
        p, single = _pts(x)
        v = self.value(p)
        return float(v[0]) if single else v


class Zero(Potential):
    name = "zero"
    translation_invariant = True
    convex_sublevels = True

    def value(self, pts):
        return np.zeros(len(np.asarray(pts).reshape(-1, 2)))

    def grad(self, pts):
        return np.zeros((len(np.asarray(pts).reshape(-1, 2)), 2))

    def hessian(self, pts):
        return np.zeros((len(np.asarray(pts).reshape(-1, 2)), 2, 2))

    def descriptor(self):
        return {"model": "zero"}


class _Floor(Potential):
    """Shared handling of the half-plane domain ``x2 >= 0``."""

    convex_sublevels = True

    def feasible(self, pts):
        return np.asarray(pts, dtype=float).reshape(-1, 2)[:, 1] >= 0

    def project(self, pts):
        out = np.array(pts, dtype=float).reshape(-1, 2)
        out[:, 1] = np.maximum(out[:, 1], 0.0)
        return out

    def nonsmooth(self, pts, tol=1e-9):
        return np.abs(np.asarray(pts, dtype=float).reshape(-1, 2)[:, 1]) <= tol


@dataclass(frozen=True, eq=False)
class LinearGravity(_Floor):
    """``alpha * x2`` above the floor ``x2 = 0``, infinite below."""

    alpha: float = 1.0
    name = "linear-gravity"

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError("gravity needs alpha > 0")

    def value(self, pts):
        y = np.asarray(pts, dtype=float).reshape(-1, 2)[:, 1]
        with np.errstate(invalid="ignore"):
            return np.where(y >= 0, self.alpha * y, INF)

    def grad(self, pts):
        m = len(np.asarray(pts).reshape(-1, 2))
        return np.tile([0.0, self.alpha], (m, 1))

    def hessian(self, pts):
        return np.zeros((len(np.asarray(pts).reshape(-1, 2)), 2, 2))

    def descriptor(self):
        return {"model": "linear-gravity", "alpha": self.alpha}


@dataclass(frozen=True, eq=False)
class Gravity(_Floor):
    """``phi(x2)`` above the floor with ``phi(0) = 0``, ``phi' > 0``."""

    phi: Profile = Profile("power", 1.0, 1.0)
    name = "gravity"

    def __post_init__(self):
        if abs(float(self.phi(0.0))) > 1e-12:
            raise ValueError("gravity profile must satisfy phi(0) = 0")

    def value(self, pts):
        y = np.asarray(pts, dtype=float).reshape(-1, 2)[:, 1]
        return np.where(y >= 0, self.phi(np.maximum(y, 0.0)), INF)

    def grad(self, pts):
        y = np.asarray(pts, dtype=float).reshape(-1, 2)[:, 1]
        return np.column_stack([np.zeros_like(y), self.phi.deriv(np.maximum(y, 0.0))])

    def hessian(self, pts):
        y = np.asarray(pts, dtype=float).reshape(-1, 2)[:, 1]
        H = np.zeros((len(y), 2, 2))
        H[:, 1, 1] = self.phi.second(np.maximum(y, 0.0))
        return H

    def descriptor(self):
        return {"model": "gravity", "phi": self.phi.descriptor()}


@dataclass(frozen=True, eq=False)
class Radial(Potential):
    """``h(|x|)`` for a profile ``h >= 0`` with ``h(0) = 0``."""

    h: Profile = Profile("power", 1.0, 2.0)
    name = "radial"

    def __post_init__(self):
        if abs(float(self.h(0.0))) > 1e-12:
            raise ValueError("radial profile must satisfy h(0) = 0")

    def value(self, pts):
        p = np.asarray(pts, dtype=float).reshape(-1, 2)
        return self.h(np.hypot(p[:, 0], p[:, 1]))

    def grad(self, pts):
        p = np.asarray(pts, dtype=float).reshape(-1, 2)
        r = np.hypot(p[:, 0], p[:, 1])
        with np.errstate(divide="ignore", invalid="ignore"):
            scale = np.where(r > 0, self.h.deriv(r) / r, 0.0)
        return p * scale[:, None]

    def nonsmooth(self, pts, tol=1e-9):
        p = np.asarray(pts, dtype=float).reshape(-1, 2)
        return (np.hypot(p[:, 0], p[:, 1]) <= tol) & (np.abs(self.h.deriv(0.0)) > 0)

    def descriptor(self):
        return {"model": "radial", "h": self.h.descriptor()}


@dataclass(frozen=True, eq=False)
class PowerRadial(Potential):
    """``|x|**p`` with ``p >= 1`` (coercive and convex)."""

    p: float = 2.0
    name = "power-radial"
    convex_sublevels = True

    def __post_init__(self):
        if not self.p >= 1:
            raise ValueError("power-radial needs p >= 1")

    def value(self, pts):
        q = np.asarray(pts, dtype=float).reshape(-1, 2)
        r2 = q[:, 0] ** 2 + q[:, 1] ** 2
        return r2 if self.p == 2 else np.power(np.sqrt(r2), self.p)

    def grad(self, pts):
        q = np.asarray(pts, dtype=float).reshape(-1, 2)
        if self.p == 2:
            return 2.0 * q
        r = np.hypot(q[:, 0], q[:, 1])
        with np.errstate(divide="ignore", invalid="ignore"):
            s = np.where(r > 0, self.p * np.power(r, self.p - 2.0), 0.0)
        return q * s[:, None]

    def hessian(self, pts):
        q = np.asarray(pts, dtype=float).reshape(-1, 2)
        p = self.p
        r = np.hypot(q[:, 0], q[:, 1])
        with np.errstate(divide="ignore", invalid="ignore"):
            a = np.where(r > 0, p * np.power(r, p - 2.0), 2.0 if p == 2 else 0.0)
            u = np.where(r[:, None] > 0, q / np.where(r > 0, r, 1.0)[:, None], 0.0)
        H = a[:, None, None] * (np.eye(2)[None] + (p - 2.0) * u[:, :, None] * u[:, None, :])
        return H

    def nonsmooth(self, pts, tol=1e-9):
        q = np.asarray(pts, dtype=float).reshape(-1, 2)
        return (np.hypot(q[:, 0], q[:, 1]) <= tol) & (self.p < 2)

    def descriptor(self):
        return {"model": "power-radial", "p": self.p}


def _counter_lower(x, y):
    return x * x * (1.0 - y) + x * x * y * y


def _counter_upper(x, y):
    return x * x / (1.0 + y)


class Counterexample(Potential):
    """Piecewise potential that is non-increasing in ``x2``.

    ``x1^2 (1 - x2) + x1^2 x2^2`` for ``x2 <= 0`` and ``x1^2 / (1 + x2)``
    above.  Both branches agree to first order on ``x2 = 0``.
    """

    name = "counterexample"
    seams = ((np.zeros(2), np.array([0.0, 1.0])),)

    def value(self, pts):
        p = np.asarray(pts, dtype=float).reshape(-1, 2)
        x, y = p[:, 0], p[:, 1]
        lower = y <= 0
        out = np.empty(len(p))
        out[lower] = _counter_lower(x[lower], y[lower])
        up = ~lower
        out[up] = _counter_upper(x[up], y[up])
        return out

    def grad(self, pts):
        p = np.asarray(pts, dtype=float).reshape(-1, 2)
        x, y = p[:, 0], p[:, 1]
        lower = y <= 0
        gx = np.where(lower, 2 * x * (1 - y + y * y), 2 * x / (1 + np.abs(y)))
        gy = np.where(lower, x * x * (-1 + 2 * y), -x * x / (1 + np.abs(y)) ** 2)
        return np.column_stack([gx, gy])

    def hessian(self, pts):
        p = np.asarray(pts, dtype=float).reshape(-1, 2)
        x, y = p[:, 0], p[:, 1]
        lower = y <= 0
        yy = np.abs(y)
        H = np.empty((len(p), 2, 2))
        H[:, 0, 0] = np.where(lower, 2 * (1 - y + y * y), 2 / (1 + yy))
        H[:, 0, 1] = H[:, 1, 0] = np.where(lower, 4 * x * y - 2 * x, -2 * x / (1 + yy) ** 2)
        H[:, 1, 1] = np.where(lower, 2 * x * x, 2 * x * x / (1 + yy) ** 3)
        return H

    @staticmethod
    def closed_form_det(pts):
        p = np.asarray(pts, dtype=float).reshape(-1, 2)
        x, y = p[:, 0], p[:, 1]
        return np.where(y <= 0, 12 * x * x * y * (1 - y), 0.0)

    @staticmethod
    def closed_form_trace(pts):
        p = np.asarray(pts, dtype=float).reshape(-1, 2)
        x, y = p[:, 0], p[:, 1]
        yy = np.abs(y)
        return np.where(y <= 0, 2 * (1 - y + y * y + x * x),
                        2 / (1 + yy) * (1 + x * x / (1 + yy) ** 2))

    @staticmethod
    def closed_form_dy(pts):
        p = np.asarray(pts, dtype=float).reshape(-1, 2)
        x, y = p[:, 0], p[:, 1]
        return np.where(y <= 0, x * x * (-1 + 2 * y), -x * x / (1 + np.abs(y)) ** 2)

    def descriptor(self):
        return {"model": "counterexample"}


@dataclass(frozen=True, eq=False)
class CounterexampleStrip(Potential):
    """The strip variant: finite only on ``|x1| <= sqrt(eps / 2)``.

    ``x1^2 (1 - x2) + (eps/2) x2^2`` below the seam, ``x1^2 / (1 + x2)``
    above.  The convex-envelope extension outside the strip is not built.
    """

    eps: float = 0.5
    name = "counterexample-strip"
    seams = ((np.zeros(2), np.array([0.0, 1.0])),)

    def __post_init__(self):
        if not self.eps > 0:
            raise ValueError("strip needs eps > 0")

    @property
    def half_width(self):
        return math.sqrt(self.eps / 2.0)

    def value(self, pts):
        p = np.asarray(pts, dtype=float).reshape(-1, 2)
        x, y = p[:, 0], p[:, 1]
        inside = np.abs(x) <= self.half_width
        yy = np.abs(y)
        v = np.where(y <= 0, x * x * (1 - y) + 0.5 * self.eps * y * y, x * x / (1 + yy))
        return np.where(inside, v, INF)

    def grad(self, pts):
        p = np.asarray(pts, dtype=float).reshape(-1, 2)
        x, y = p[:, 0], p[:, 1]
        yy = np.abs(y)
        lower = y <= 0
        gx = np.where(lower, 2 * x * (1 - y), 2 * x / (1 + yy))
        gy = np.where(lower, -x * x + self.eps * y, -x * x / (1 + yy) ** 2)
        return np.column_stack([gx, gy])

    def hessian(self, pts):
        p = np.asarray(pts, dtype=float).reshape(-1, 2)
        x, y = p[:, 0], p[:, 1]
        lower = y <= 0
        yy = np.abs(y)
        H = np.empty((len(p), 2, 2))
        H[:, 0, 0] = np.where(lower, 2 * (1 - y), 2 / (1 + yy))
        H[:, 0, 1] = H[:, 1, 0] = np.where(lower, -2 * x, -2 * x / (1 + yy) ** 2)
        H[:, 1, 1] = np.where(lower, self.eps, 2 * x * x / (1 + yy) ** 3)
        return H

    def feasible(self, pts):
        p = np.asarray(pts, dtype=float).reshape(-1, 2)
        return np.abs(p[:, 0]) <= self.half_width

    def project(self, pts):
        out = np.array(pts, dtype=float).reshape(-1, 2)
        out[:, 0] = np.clip(out[:, 0], -self.half_width, self.half_width)
        return out

    def nonsmooth(self, pts, tol=1e-9):
        p = np.asarray(pts, dtype=float).reshape(-1, 2)
        return (np.abs(p[:, 1]) <= tol) | (np.abs(np.abs(p[:, 0]) - self.half_width) <= tol)

    def descriptor(self):
        return {"model": "counterexample-strip", "eps": self.eps}


class Container(Potential):
    """Zero on the closed polygon ``A``, infinite outside."""

    name = "container"
    convex_sublevels = True

    def __init__(self, A: Polygon, tol: float = 1e-9):
        self.A = A if isinstance(A, Polygon) else Polygon(A)
        self.tol = tol
        self._geom = self.A.to_shapely()
        shapely.prepare(self._geom)
        self.convex_sublevels = self.A.is_convex()

    def feasible(self, pts):
        p = np.asarray(pts, dtype=float).reshape(-1, 2)
        inside = shapely.intersects_xy(self._geom, p[:, 0], p[:, 1])
        if np.all(inside):
            return inside
        d = shapely.distance(self._geom, shapely.points(p[~inside]))
        inside[~inside] = d <= self.tol
        return inside

    def value(self, pts):
        return np.where(self.feasible(pts), 0.0, INF)

    def grad(self, pts):
        return np.zeros((len(np.asarray(pts).reshape(-1, 2)), 2))

    def hessian(self, pts):
        return np.zeros((len(np.asarray(pts).reshape(-1, 2)), 2, 2))

    def project(self, pts):
        p = np.array(pts, dtype=float).reshape(-1, 2)
        out = p.copy()
        outside = ~shapely.intersects_xy(self._geom, p[:, 0], p[:, 1])
        if np.any(outside):
            v = self.A.vertices
            w = np.roll(v, -1, axis=0)
            q = p[outside]
            ab = w - v
            t = np.einsum("mkj,kj->mk", q[:, None, :] - v[None], ab) / np.einsum("kj,kj->k", ab, ab)
            t = np.clip(t, 0.0, 1.0)
            proj = v[None] + t[:, :, None] * ab[None]
            d = np.hypot(*(proj - q[:, None, :]).transpose(2, 0, 1))
            k = np.argmin(d, axis=1)
            out[outside] = proj[np.arange(len(q)), k]
        return out

    def set_feasible(self, rings):
        geom = shapely.MultiPolygon([shapely.Polygon(r) for r in rings])
        return bool(self._geom.buffer(self.tol).covers(geom))

    def nonsmooth(self, pts, tol=1e-9):
        p = np.asarray(pts, dtype=float).reshape(-1, 2)
        return shapely.distance(self._geom.exterior, shapely.points(p)) <= tol

    def descriptor(self):
        return {"model": "container", "A": self.A.to_list()}


@dataclass(frozen=True, eq=False)
class DoubleWell(Potential):
    """``min(|x - p|, |x - q|) ** p_exp``: two wells, non-convex sub-levels."""

    p: tuple = (-2.0, 0.0)
    q: tuple = (2.0, 0.0)
    p_exp: float = 2.0
    name = "double-well"

    def __post_init__(self):
        if not self.p_exp >= 1:
            raise ValueError("double well needs p_exp >= 1")
        object.__setattr__(self, "p", tuple(map(float, self.p)))
        object.__setattr__(self, "q", tuple(map(float, self.q)))

    @property
    def seams(self):
        P, Q = np.asarray(self.p), np.asarray(self.q)
        n = Q - P
        return ((0.5 * (P + Q), n / np.linalg.norm(n)),)

    def _nearest(self, pts):
        x = np.asarray(pts, dtype=float).reshape(-1, 2)
        dp = x - np.asarray(self.p)
        dq = x - np.asarray(self.q)
        rp = np.hypot(dp[:, 0], dp[:, 1])
        rq = np.hypot(dq[:, 0], dq[:, 1])
        use_p = rp <= rq
        d = np.where(use_p[:, None], dp, dq)
        r = np.where(use_p, rp, rq)
        return d, r

    def value(self, pts):
        _, r = self._nearest(pts)
        return r * r if self.p_exp == 2 else np.power(r, self.p_exp)

    def grad(self, pts):
        d, r = self._nearest(pts)
        if self.p_exp == 2:
            return 2.0 * d
        with np.errstate(divide="ignore", invalid="ignore"):
            s = np.where(r > 0, self.p_exp * np.power(r, self.p_exp - 2.0), 0.0)
        return d * s[:, None]

    def descriptor(self):
        return {"model": "double-well", "p": list(self.p), "q": list(self.q), "p_exp": self.p_exp}


# ---------------------------------------------------------------------------
# descriptors


def from_descriptor(desc: dict) -> Potential:
    d = dict(desc)
    model = d.pop("model", None)
    if model == "zero":
        return Zero()
    if model == "linear-gravity":
        return LinearGravity(float(d["alpha"]))
    if model == "gravity":
        return Gravity(Profile.from_descriptor(d["phi"]))
    if model == "radial":
        return Radial(Profile.from_descriptor(d["h"]))
    if model == "power-radial":
        return PowerRadial(float(d.get("p", 2.0)))
    if model == "counterexample":
        return Counterexample()
    if model == "counterexample-strip":
        return CounterexampleStrip(float(d["eps"]))
    if model == "container":
        return Container(Polygon(d["A"]))
    if model == "double-well":
        return DoubleWell(tuple(d["p"]), tuple(d["q"]), float(d.get("p_exp", 2.0)))
    raise ValueError(f"unknown potential model {model!r}")


def parse(spec) -> Potential:
    """Potential from a descriptor dict or a short string.

    Short forms: ``zero``, ``linear-gravity:ALPHA``, ``power-radial:P``,
    ``counterexample``, ``counterexample-strip:EPS``,
    ``double-well:px,py;qx,qy;EXP``, ``container:x1,y1;x2,y2;...``.
    """
    if isinstance(spec, Potential):
        return spec
    if isinstance(spec, dict):
        return from_descriptor(spec)
    name, _, arg = str(spec).partition(":")
    name = name.strip().lower().replace("_", "-")
    if name == "zero":
        return Zero()
    if name in ("linear-gravity", "gravity"):
        return LinearGravity(float(arg or 1.0))
    if name == "power-radial":
        return PowerRadial(float(arg or 2.0))
    if name == "counterexample":
        return Counterexample()
    if name == "counterexample-strip":
        return CounterexampleStrip(float(arg or 0.5))
    if name == "double-well":
        parts = arg.split(";") if arg else ["-2,0", "2,0", "2"]
        return DoubleWell(tuple(map(float, parts[0].split(","))),
                          tuple(map(float, parts[1].split(","))),
                          float(parts[2]) if len(parts) > 2 else 2.0)
    if name == "container":
        pts = [tuple(map(float, q.split(","))) for q in arg.split(";") if q]
        return Container(Polygon(pts))
    raise ValueError(f"cannot parse potential {spec!r}")


# ---------------------------------------------------------------------------
# operations


def evaluate(g: Potential, x) -> float:
    return float(g.value(np.asarray(x, dtype=float).reshape(1, 2))[0])


class GradientResult(NamedTuple):
    vector: np.ndarray
    nonsmooth: bool


def gradient(g: Potential, x) -> GradientResult:
    """Gradient at one point, flagged when the point sits on a seam or the
    boundary of the finite domain (where only a one-sided value exists)."""
    p = np.asarray(x, dtype=float).reshape(1, 2)
    flag = bool(g.nonsmooth(p)[0]) or not bool(g.feasible(p)[0])
    return GradientResult(g.grad(p)[0], flag)


class SublevelGrid:
    """Samples of ``g`` on a grid over ``bbox`` for repeated level queries.

    ``bbox`` is ``(xmin, ymin, xmax, ymax)``; ``resolution`` is the number of
    cells along its longer side.  Infinite values are capped above every
    finite sample so that ``{g = inf}`` never enters a sub-level set, and the
    grid is padded by one capped row so every contour closes.
    """

    def __init__(self, g: Potential, bbox, resolution: int = 256):
        x0, y0, x1, y1 = map(float, bbox)
        h = max(x1 - x0, y1 - y0) / resolution
        nx = max(2, int(math.ceil((x1 - x0) / h)) + 1)
        ny = max(2, int(math.ceil((y1 - y0) / h)) + 1)
        xs = np.linspace(x0, x1, nx)
        ys = np.linspace(y0, y1, ny)
        X, Y = np.meshgrid(xs, ys, indexing="ij")
        V = g.value(np.column_stack([X.ravel(), Y.ravel()])).reshape(nx, ny)
        finite = V[np.isfinite(V)]
        self.vmin = float(finite.min()) if finite.size else INF
        self.vmax = float(finite.max()) if finite.size else INF
        top = self.vmax if finite.size else 0.0
        self.cap = top + 1.0 + abs(top)
        V = np.where(np.isfinite(V), V, self.cap)
        self.V = np.pad(V, 1, constant_values=self.cap)
        self.origin = (x0, y0)
        self.h = ((x1 - x0) / (nx - 1), (y1 - y0) / (ny - 1))
        self.cell = h

    def region(self, t: float):
        """Shapely geometry approximating ``{g < t}`` (empty if none)."""
        if not t > self.vmin:
            return shapely.Polygon()
        t = min(t, 0.5 * (self.vmax + self.cap)) if self.vmax < INF else t
        x0, y0 = self.origin
        hx, hy = self.h
        region = shapely.Polygon()
        for c in find_contours(self.V, level=t):
            if len(c) < 4:
                continue
            xy = np.column_stack([x0 + (c[:, 0] - 1) * hx, y0 + (c[:, 1] - 1) * hy])
            poly = shapely.make_valid(shapely.Polygon(xy))
            region = shapely.symmetric_difference(region, poly)
        return region


def sublevel_polygon(g: Potential, t: float, bbox, resolution: int = 256) -> PolygonSet:
    """Marching-squares polygonisation of ``{g < t}`` inside ``bbox``."""
    grid = SublevelGrid(g, bbox, resolution)
    region = grid.region(t)
    if region.is_empty:
        return PolygonSet([])
    x0, y0, x1, y1 = map(float, bbox)
    region = shapely.intersection(region, shapely.box(x0, y0, x1, y1))
    return PolygonSet.from_shapely(region, min_area=grid.cell ** 2 * 1e-6)


@dataclass
class HessianAuditReport:
    grid: np.ndarray
    fd_gradient: np.ndarray
    closed_form_gradient: np.ndarray
    fd_hessian: np.ndarray
    closed_form_det: np.ndarray | None
    fd_det: np.ndarray
    closed_form_trace: np.ndarray | None
    fd_trace: np.ndarray
    max_rel_error: np.ndarray
    sign_summary: dict
    excluded: int = 0

    @property
    def worst_rel_error(self) -> float:
        return float(self.max_rel_error.max()) if len(self.max_rel_error) else 0.0

    def to_dict(self) -> dict:
        def arr(a):
            return None if a is None else np.asarray(a).tolist()

        return {
            "points": [
                {
                    "x": arr(self.grid[i]),
                    "fd_gradient": arr(self.fd_gradient[i]),
                    "closed_form_gradient": arr(self.closed_form_gradient[i]),
                    "fd_hessian": arr(self.fd_hessian[i]),
                    "closed_form_det": None if self.closed_form_det is None else float(self.closed_form_det[i]),
                    "fd_det": float(self.fd_det[i]),
                    "closed_form_trace": None if self.closed_form_trace is None else float(self.closed_form_trace[i]),
                    "fd_trace": float(self.fd_trace[i]),
                    "max_rel_error": float(self.max_rel_error[i]),
                }
                for i in range(len(self.grid))
            ],
            "sign_summary": self.sign_summary,
            "worst_rel_error": self.worst_rel_error,
            "excluded_points": self.excluded,
            "error_metric": "|fd - closed| / max(|closed|, 1)",
        }


def _grid_points(grid_spec) -> np.ndarray:
    if isinstance(grid_spec, str):
        lo, hi, step = map(float, grid_spec.split(":"))
        grid_spec = (lo, hi, step)
    if isinstance(grid_spec, tuple) and len(grid_spec) == 3 and np.isscalar(grid_spec[0]):
        lo, hi, step = grid_spec
        ax = lo + step * np.arange(int(round((hi - lo) / step)) + 1)
        X, Y = np.meshgrid(ax, ax, indexing="ij")
        return np.column_stack([X.ravel(), Y.ravel()])
    return np.asarray(grid_spec, dtype=float).reshape(-1, 2)


def hessian_audit(g: Potential, grid_spec, step: float = 1e-3) -> HessianAuditReport:
    """Compare finite-difference derivatives of ``g`` with its closed forms.

    ``grid_spec`` is ``"lo:hi:step"``, a ``(lo, hi, step)`` tuple for a square
    grid, or an explicit ``(m, 2)`` point list.  Points whose stencil meets a
    seam or leaves ``{g < inf}`` are excluded.  Fourth-order central stencils
    are used throughout.
    """
    pts = _grid_points(grid_spec)
    h = step
    keep = np.ones(len(pts), dtype=bool)
    for p0, nrm in g.seams:
        keep &= np.abs((pts - p0) @ np.asarray(nrm)) > 4 * h
    offs = np.array([[i * h, j * h] for i in range(-2, 3) for j in range(-2, 3)])
    for o in offs:
        keep &= np.isfinite(g.value(pts + o))
    excluded = int((~keep).sum())
    pts = pts[keep]

    def G(di, dj):
        return g.value(pts + np.array([di * h, dj * h]))

    c1 = {-2: 1 / 12, -1: -8 / 12, 1: 8 / 12, 2: -1 / 12}
    c2 = {-2: -1 / 12, -1: 16 / 12, 0: -30 / 12, 1: 16 / 12, 2: -1 / 12}
    gx = sum(w * G(k, 0) for k, w in c1.items()) / h
    gy = sum(w * G(0, k) for k, w in c1.items()) / h
    hxx = sum(w * G(k, 0) for k, w in c2.items()) / h**2
    hyy = sum(w * G(0, k) for k, w in c2.items()) / h**2
    hxy = sum(wi * wj * G(i, j) for i, wi in c1.items() for j, wj in c1.items()) / h**2
    fd_grad = np.column_stack([gx, gy])
    fd_hess = np.stack([np.stack([hxx, hxy], -1), np.stack([hxy, hyy], -1)], -2)
    fd_det = hxx * hyy - hxy * hxy
    fd_trace = hxx + hyy

    cf_grad = g.grad(pts)
    if isinstance(g, Counterexample):
        cf_det = g.closed_form_det(pts)
        cf_trace = g.closed_form_trace(pts)
        cf_grad = np.column_stack([cf_grad[:, 0], g.closed_form_dy(pts)])
    else:
        H = g.hessian(pts)
        cf_det = None if H is None else np.linalg.det(H)
        cf_trace = None if H is None else np.trace(H, axis1=1, axis2=2)

    def rel(a, b):
        return np.abs(a - b) / np.maximum(np.abs(b), 1.0)

    errs = [rel(fd_grad[:, 0], cf_grad[:, 0]), rel(fd_grad[:, 1], cf_grad[:, 1])]
    if cf_det is not None:
        errs += [rel(fd_det, cf_det), rel(fd_trace, cf_trace)]
    max_rel = np.max(np.stack(errs), axis=0) if len(pts) else np.zeros(0)

    det_for_sign = cf_det if cf_det is not None else fd_det
    zero_tol = 1e-9
    summary = {}
    for region, mask in (("y<0", pts[:, 1] < 0), ("y>0", pts[:, 1] > 0)):
        d = det_for_sign[mask]
        summary[region] = {"det<0": int((d < -zero_tol).sum()),
                           "det=0": int((np.abs(d) <= zero_tol).sum()),
                           "det>0": int((d > zero_tol).sum())}
    m = (pts[:, 1] < 0) & (pts[:, 0] != 0)
    summary["y<0,x!=0"] = {"det<0": int((det_for_sign[m] < -zero_tol).sum()),
                           "total": int(m.sum())}
    return HessianAuditReport(pts, fd_grad, cf_grad, fd_hess, cf_det, fd_det, cf_trace,
                              fd_trace, max_rel, summary, excluded)


class IntegralResult(NamedTuple):
    value: np.ndarray
    error: float


def condition_iv_integral(E, g: Potential, quad_order: int = 6) -> IntegralResult:
    """``integral over E of grad g`` with an order-refinement error estimate."""
    E = PolygonSet.of(E)
    rings = [p.vertices for p in E.parts]
    if not g.set_feasible(rings):
        raise InfeasibleError("set meets the region where g is infinite")
    lines = tuple(g.seams)
    v1 = integrate_rings(g.grad, rings, quad_order, lines)
    v2 = integrate_rings(g.grad, rings, quad_order + 2, lines)
    return IntegralResult(np.asarray(v1, dtype=float), float(np.max(np.abs(v2 - v1))))
