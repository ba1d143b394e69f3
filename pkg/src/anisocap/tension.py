"""Surface tensions and the Wulff shape.

A surface tension is a convex, positively 1-homogeneous function on the
plane, positive away from the origin.  All models evaluate on ``(m, 2)``
arrays and return values plus gradients; the fused per-polygon energy is in
:func:`anisocap.kernels.tension_energy_grad`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import DegenerateInputError
from .geom2d import Polygon, convex_hull, half_plane_intersection

TABLE_SIZE = 8192
DEFAULT_SMOOTHING = 0.02
_EMPTY = np.zeros((1, 2))


def _as_vectors(v) -> tuple[np.ndarray, bool]:
    a = np.asarray(v, dtype=float)
    single = a.ndim == 1
    return np.ascontiguousarray(a.reshape(-1, 2)), single


class SurfaceTension:
    """Base class; subclasses define ``kernel_spec`` or override ``values``."""

    smooth: bool = True
    name: str = "tension"

    def kernel_spec(self):
        """``(kind, params, table)`` for the compiled kernels, or None."""
        return None

    def values(self, v: np.ndarray):
        kind, params, table = self.kernel_spec()
        return kernels.tension_values(v, kind, params, table)

    def __call__(self, v):
        a, single = _as_vectors(v)
        out = self.values(a)[0]
        return float(out[0]) if single else out

    def grad(self, v):
        a, single = _as_vectors(v)
        out = self.values(a)[1]
        return out[0] if single else out

    def profile(self, theta) -> np.ndarray:
        th = np.asarray(theta, dtype=float)
        return self(np.column_stack([np.cos(th), np.sin(th)]))

    def smoothed(self, width: float = DEFAULT_SMOOTHING) -> "SurfaceTension":
        """A smooth tension for gradient descent (self if already smooth)."""
        if self.smooth:
            return self
        return TabulatedTension.from_profile(self.profile, width, source=self.descriptor())

    def descriptor(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True, eq=False)
class Isotropic(SurfaceTension):
    R: float = 1.0
    name = "isotropic"

    def __post_init__(self):
        if not self.R > 0:
            raise ValueError("isotropic tension needs R > 0")

    def kernel_spec(self):
        return kernels.KIND_ISOTROPIC, np.array([float(self.R)]), _EMPTY

    def descriptor(self):
        return {"model": "isotropic", "R": self.R}


@dataclass(frozen=True, eq=False)
class PNorm(SurfaceTension):
    """``f(v) = (|v1|^p + |v2|^p)^(1/p)``; ``p = inf`` gives the max-norm."""

    p: float = 2.0
    name = "pnorm"

    def __post_init__(self):
        if not self.p >= 1:
            raise ValueError("p-norm tension needs p >= 1")

    @property
    def smooth(self):
        return 1.0 < self.p < math.inf

    def kernel_spec(self):
        return kernels.KIND_PNORM, np.array([float(self.p)]), _EMPTY

    def descriptor(self):
        return {"model": "pnorm", "p": "inf" if math.isinf(self.p) else self.p}


@dataclass(frozen=True, eq=False)
class Crystalline(SurfaceTension):
    """``f(v) = max_i <x_i, v>``; the Wulff shape is the hull of the generators."""

    generators: tuple = ()
    smooth = False
    name = "crystalline"

    def __post_init__(self):
        g = np.asarray(self.generators, dtype=float).reshape(-1, 2)
        if len(g) < 3:
            raise ValueError("crystalline tension needs at least 3 generators")
        object.__setattr__(self, "generators", tuple(map(tuple, g.tolist())))
        th = np.linspace(0, 2 * math.pi, 720, endpoint=False)
        if np.min(self.profile(th)) <= 0:
            raise ValueError("origin must be interior to the hull of the generators")

    @property
    def _gens(self):
        return np.asarray(self.generators, dtype=float)

    def kernel_spec(self):
        return kernels.KIND_CRYSTAL, self._gens.ravel(), _EMPTY

    def descriptor(self):
        return {"model": "crystalline", "generators": [list(g) for g in self.generators]}


@dataclass(frozen=True, eq=False)
class SampledSupport(SurfaceTension):
    """Tension given by its values on a set of directions.

    Between neighbouring sample directions ``u_i, u_j`` the tension is the
    1-homogeneous linear interpolant ``f(a u_i + b u_j) = a f_i + b f_j``.
    The result is convex exactly when the samples come from a convex
    tension, which is validated on construction.  ``smoothing > 0`` applies
    a Gaussian of that angular width (radians) to the angular profile.
    ``interpolation="log-angle"`` interpolates log-values linearly in angle
    instead; it is rarely convex and is kept for comparison only.
    """

    directions: tuple = ()
    values_: tuple = ()
    smoothing: float = 0.0
    interpolation: str = "homogeneous"
    name = "sampled"
    _data: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        d = np.asarray(self.directions, dtype=float).reshape(-1, 2)
        vals = np.asarray(self.values_, dtype=float).ravel()
        if len(d) != len(vals) or len(d) < 3:
            raise ValueError("need >= 3 directions with one value each")
        if np.any(vals <= 0):
            raise ValueError("sampled tension values must be positive")
        if self.smoothing < 0:
            raise ValueError("smoothing must be >= 0")
        if self.interpolation not in ("homogeneous", "log-angle"):
            raise ValueError(f"unknown interpolation {self.interpolation!r}")
        nrm = np.hypot(d[:, 0], d[:, 1])
        d = d / nrm[:, None]
        ang = np.mod(np.arctan2(d[:, 1], d[:, 0]), 2 * math.pi)
        order = np.argsort(ang)
        d, vals, ang = d[order], vals[order], ang[order]
        gaps = np.diff(np.concatenate([ang, [ang[0] + 2 * math.pi]]))
        if gaps.max() >= math.pi:
            raise ValueError("sample directions leave an angular gap >= pi")
        object.__setattr__(self, "directions", tuple(map(tuple, d.tolist())))
        object.__setattr__(self, "values_", tuple(vals.tolist()))
        # vertices w_i of the Wulff polygon: <w_i, u_i> = f_i, <w_i, u_{i+1}> = f_{i+1}
        nxt = np.roll(np.arange(len(d)), -1)
        w = np.empty_like(d)
        for i in range(len(d)):
            M = np.array([d[i], d[nxt[i]]])
            w[i] = np.linalg.solve(M, [vals[i], vals[nxt[i]]])
        self._data.update(dirs=d, vals=vals, ang=ang, w=w)
        if self.interpolation == "homogeneous":
            self._check_convex()
        if self.smoothing > 0:
            base = SampledSupport(self.directions, self.values_, 0.0, self.interpolation)
            tab = TabulatedTension.from_profile(base.profile, self.smoothing)
            self._data["table"] = tab.table

    def _check_convex(self):
        d, vals = self._data["dirs"], self._data["vals"]
        n = len(d)
        for i in range(n):
            a_, b_ = d[i - 1], d[(i + 1) % n]
            M = np.column_stack([a_, b_])
            det = np.linalg.det(M)
            if abs(det) < 1e-14:
                continue
            coef = np.linalg.solve(M, d[i])
            if np.all(coef > 0):
                bound = coef[0] * vals[i - 1] + coef[1] * vals[(i + 1) % n]
                if vals[i] > bound * (1 + 1e-12):
                    raise ValueError(f"sampled values are not convex at direction {i}")

    @property
    def smooth(self):
        return self.smoothing > 0

    def kernel_spec(self):
        if self.smoothing > 0:
            return kernels.KIND_TABLE, np.zeros(1), self._data["table"]
        if self.interpolation == "homogeneous":
            return kernels.KIND_CRYSTAL, self._data["w"].ravel(), _EMPTY
        return None

    def values(self, v):
        spec = self.kernel_spec()
        if spec is not None:
            return kernels.tension_values(v, *spec)
        return self._log_angle_values(v)

    def _log_angle_values(self, v):
        ang, vals = self._data["ang"], self._data["vals"]
        xs = np.concatenate([ang[-1:] - 2 * math.pi, ang, ang[:1] + 2 * math.pi])
        ls = np.log(np.concatenate([vals[-1:], vals, vals[:1]]))
        r = np.hypot(v[:, 0], v[:, 1])
        th = np.mod(np.arctan2(v[:, 1], v[:, 0]), 2 * math.pi)
        k = np.clip(np.searchsorted(xs, th, side="right") - 1, 0, len(xs) - 2)
        slope = (ls[k + 1] - ls[k]) / (xs[k + 1] - xs[k])
        s = np.exp(ls[k] + slope * (th - xs[k]))
        ds = s * slope
        c, sn = np.cos(th), np.sin(th)
        return r * s, np.column_stack([s * c - ds * sn, s * sn + ds * c])

    @property
    def wulff_vertices(self) -> np.ndarray:
        return self._data["w"]

    def descriptor(self):
        out = {"model": "sampled", "directions": [list(u) for u in self.directions],
               "values": list(self.values_), "smoothing": self.smoothing}
        if self.interpolation != "homogeneous":
            out["interpolation"] = self.interpolation
        return out


class TabulatedTension(SurfaceTension):
    """Smooth tension ``f(v) = |v| s(theta)`` from a periodic table of s and s'."""

    name = "tabulated"
    smooth = True

    def __init__(self, table: np.ndarray, source: dict | None = None, width: float = 0.0):
        self.table = np.ascontiguousarray(table, dtype=float)
        self.source = source
        self.width = width

    @classmethod
    def from_profile(cls, profile, width: float, n: int = TABLE_SIZE, source=None):
        theta = 2 * math.pi * np.arange(n) / n
        s = np.asarray(profile(theta), dtype=float)
        k = np.fft.fftfreq(n, d=1.0 / n)
        sh = np.fft.fft(s) * np.exp(-0.5 * (width * k) ** 2)
        sm = np.fft.ifft(sh).real
        ds = np.fft.ifft(sh * 1j * k).real
        return cls(np.column_stack([sm, ds]), source=source, width=width)

    def kernel_spec(self):
        return kernels.KIND_TABLE, np.zeros(1), self.table

    def descriptor(self):
        return {"model": "tabulated", "smoothing": self.width, "source": self.source}


# ---------------------------------------------------------------------------


def edge_energy(f: SurfaceTension, edge_vector) -> float:
    """Energy of one CCW edge: ``|e| f(nu_e) = f(rot(e))`` by homogeneity."""
    e = np.asarray(edge_vector, dtype=float)
    if not np.any(e):
        raise DegenerateInputError("zero-length edge")
    return f(np.array([e[1], -e[0]]))


def wulff_shape(f: SurfaceTension, n_dirs: int = 256) -> Polygon:
    """Polygonal Wulff shape ``{x : <x, v> <= f(v)}`` over ``n_dirs`` directions.

    Crystalline tensions (and unsmoothed sampled ones, which are crystalline
    in disguise) return the exact polygon and ignore ``n_dirs``.
    """
    if isinstance(f, Crystalline):
        return convex_hull(np.asarray(f.generators))
    if isinstance(f, SampledSupport) and f.kernel_spec() is not None and f.smoothing == 0:
        return convex_hull(f.wulff_vertices)
    if n_dirs < 3:
        raise ValueError("n_dirs must be >= 3")
    theta = 2 * math.pi * np.arange(n_dirs) / n_dirs
    dirs = np.column_stack([np.cos(theta), np.sin(theta)])
    offs = f(dirs)
    return half_plane_intersection(list(zip(dirs, offs)))


def from_descriptor(desc: dict) -> SurfaceTension:
    d = dict(desc)
    model = d.pop("model", None)
    if model == "isotropic":
        return Isotropic(float(d.pop("R", 1.0)))
    if model == "pnorm":
        p = d.pop("p")
        return PNorm(math.inf if str(p).lower() in ("inf", "infinity") else float(p))
    if model == "crystalline":
        return Crystalline(tuple(map(tuple, d.pop("generators"))))
    if model == "sampled":
        return SampledSupport(tuple(map(tuple, d.pop("directions"))), tuple(d.pop("values")),
                              float(d.pop("smoothing", 0.0)),
                              d.pop("interpolation", "homogeneous"))
    raise ValueError(f"unknown tension model {model!r}")


def parse(spec) -> SurfaceTension:
    """Tension from a descriptor dict or a short string such as ``isotropic:1``.

    Short forms: ``isotropic[:R]``, ``pnorm:P`` (``P`` may be ``inf``),
    ``crystalline:x1,y1;x2,y2;...``.
    """
    if isinstance(spec, SurfaceTension):
        return spec
    if isinstance(spec, dict):
        return from_descriptor(spec)
    name, _, arg = str(spec).partition(":")
    name = name.strip().lower()
    if name == "isotropic":
        return Isotropic(float(arg) if arg else 1.0)
    if name == "pnorm":
        return from_descriptor({"model": "pnorm", "p": arg or 2})
    if name == "crystalline":
        gens = [tuple(map(float, g.split(","))) for g in arg.split(";") if g]
        return Crystalline(tuple(gens))
    raise ValueError(f"cannot parse tension {spec!r}")
