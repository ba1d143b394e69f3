"""Mass-constrained minimization of the free energy over polygonal sets.

Each run descends from a rescaled Wulff shape (or ``k`` of them) with a
Sobolev-smoothed shape gradient projected onto the area constraint.  After a
step the vertices are projected into ``{g < inf}`` and every part is scaled
about its centroid by a common factor so that the total area is exactly the
target mass again.  Steps that do not lower the energy are halved.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import shapely
from scipy.optimize import brentq, linprog

from . import kernels
from .energy import EnergyReport, free_energy, surface_energy
from .errors import ConfigError, InfeasibleError, OptimizationError
from .geom2d import (ConvexityReport, Polygon, PolygonSet, convexity_report, polygon_centroid,
                     resample)
from .potential import Container, Potential, Zero
from .quadrature import integrate_rings, line_rule
from .tension import DEFAULT_SMOOTHING, SurfaceTension, wulff_shape

SEPARATION = 1e-7


# ---------------------------------------------------------------------------
# configuration and results


@dataclass
class MinimizeConfig:
    mass: float
    tension: SurfaceTension
    potential: Potential
    vertices_per_part: int = 64
    max_parts: int = 3
    restarts: int = 8
    max_iters: int = 600
    step: float | None = None          # initial max vertex move; 0.1 sqrt(m) if None
    energy_rel: float = 1e-8
    grad_norm: float = 1e-6
    seed: int = 0
    search_radius: float = 4.0
    center: tuple = (0.0, 0.0)
    smoothing: float = DEFAULT_SMOOTHING
    quad_order: int = 6
    remesh_every: int = 50
    threads: int = 1
    snapshot_every: int = 0            # keep the polygon every k accepted iterations (0: never)

    def __post_init__(self):
        if not self.mass > 0:
            raise ConfigError("mass must be positive")
        if self.max_parts < 1 or self.restarts < 1 or self.vertices_per_part < 8:
            raise ConfigError("max_parts, restarts >= 1 and vertices_per_part >= 8 required")
        if not self.search_radius > 0 or self.max_iters < 1:
            raise ConfigError("search_radius and max_iters must be positive")

    @property
    def initial_step(self) -> float:
        return self.step if self.step is not None else 0.1 * math.sqrt(self.mass)


@dataclass
class RunRecord:
    restart: int
    parts: int
    energy: float
    shape: PolygonSet
    iterations: int
    converged: bool
    drift_trace: list
    snapshots: list = field(default_factory=list)


@dataclass
class MinimizeResult:
    shape: PolygonSet
    report: EnergyReport
    convexity: ConvexityReport
    component_count: int
    iterations: int
    converged: bool
    restart_energies: list
    drift_trace: list
    runs: list = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)
    snapshots: list = field(default_factory=list)  # (iteration, list of rings) of the best run

    def to_dict(self, with_runs: bool = False) -> dict:
        d = {
            "shape": self.shape.to_list(),
            "report": self.report.to_dict(),
            "convexity": self.convexity.to_dict(),
            "component_count": self.component_count,
            "iterations": self.iterations,
            "converged": self.converged,
            "restart_energies": [[r, k, e] for r, k, e in self.restart_energies],
            "drift_trace": [[i, list(map(float, c)), float(e)] for i, c, e in self.drift_trace],
            "diagnostics": self.diagnostics,
        }
        if with_runs:
            d["runs"] = [{"restart": r.restart, "parts": r.parts, "energy": r.energy,
                          "shape": r.shape.to_list(), "converged": r.converged}
                         for r in self.runs]
        return d


# ---------------------------------------------------------------------------
# gradients


def _rot(e):
    return np.column_stack([e[:, 1], -e[:, 0]])


def _surface_grad(xy: np.ndarray, f: SurfaceTension):
    spec = f.kernel_spec()
    if spec is not None:
        kind, params, table = spec
        F, grad = kernels.tension_energy_grad(np.ascontiguousarray(xy), kind, params, table, True)
        return float(F), np.asarray(grad)
    e = np.roll(xy, -1, axis=0) - xy
    vals, grads = f.values(np.ascontiguousarray(_rot(e)))
    w = np.column_stack([-grads[:, 1], grads[:, 0]])  # R^T grad f
    return float(vals.sum()), np.roll(w, 1, axis=0) - w


def _potential_grad(xy: np.ndarray, g: Potential, order: int = 8) -> np.ndarray:
    """``dG/dv_i``: ``g`` integrated against the hat function on both edges.

    Edges crossing a seam of ``g`` are integrated piecewise so the kink does
    not spoil the Gauss rule.
    """
    t, w = line_rule(order)
    nxt = np.roll(xy, -1, axis=0)
    e = nxt - xy
    pts = xy[:, None, :] + t[None, :, None] * e[:, None, :]
    vals = g.value(pts.reshape(-1, 2)).reshape(len(xy), len(t))
    up = vals @ (w * t)          # weight rising toward the edge end
    down = vals @ (w * (1 - t))  # weight falling from the edge start
    for p0, nrm in g.seams:
        a = (xy - p0) @ nrm
        b = (nxt - p0) @ nrm
        for i in np.flatnonzero(a * b < 0):
            cut = a[i] / (a[i] - b[i])
            up[i] = down[i] = 0.0
            for lo, hi in ((0.0, cut), (cut, 1.0)):
                ts = lo + (hi - lo) * t
                ws = (hi - lo) * w
                v = g.value(xy[i] + ts[:, None] * e[i])
                up[i] += v @ (ws * ts)
                down[i] += v @ (ws * (1 - ts))
    n = _rot(e)
    return np.roll(n * up[:, None], 1, axis=0) + n * down[:, None]


def _area_grad(xy: np.ndarray) -> np.ndarray:
    prv = np.roll(xy, 1, axis=0)
    nxt = np.roll(xy, -1, axis=0)
    return 0.5 * np.column_stack([nxt[:, 1] - prv[:, 1], prv[:, 0] - nxt[:, 0]])


@dataclass
class ShapeGradient:
    total: list
    surface: list
    potential: list
    boundary_flags: list

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.total])


def shape_gradient(E, f: SurfaceTension, g: Potential, quad_order: int = 8) -> ShapeGradient:
    """Per-vertex gradient of ``F + G``.

    Vertices on the boundary of ``{g < inf}`` are flagged and keep only the
    part of their gradient that does not push them out of the domain.
    """
    rings = _rings_of(E)
    tot, surf, pot, flags = [], [], [], []
    for xy in rings:
        _, gf = _surface_grad(xy, f)
        gg = _potential_grad(xy, g, quad_order) if not isinstance(g, Zero) else np.zeros_like(xy)
        total = gf + gg
        flag = _on_boundary(xy, g)
        if np.any(flag):
            total = _tangential(xy, total, g, flag)
        tot.append(total)
        surf.append(gf)
        pot.append(gg)
        flags.append(flag)
    return ShapeGradient(tot, surf, pot, flags)


def _on_boundary(xy, g, rel=1e-9):
    scale = 1.0 + np.abs(xy).max()
    probe = rel * scale
    flags = np.zeros(len(xy), dtype=bool)
    for d in ((1, 0), (-1, 0), (0, 1), (0, -1)):
        q = xy + probe * np.asarray(d, dtype=float)
        flags |= ~g.feasible(q)
    return flags


def _tangential(xy, grad, g, mask):
    """Remove the outward component of a descent move ``-grad`` at ``mask``."""
    out = grad.copy()
    d = -grad[mask]
    nrm = np.linalg.norm(d, axis=1, keepdims=True)
    tau = 1e-6 * (1.0 + np.abs(xy).max()) / np.maximum(nrm, 1e-300)
    p = xy[mask] + tau * d
    q = g.project(p)
    out[mask] = -(q - xy[mask]) / tau
    return out


def _rings_of(E) -> list:
    if isinstance(E, (list, tuple)) and E and isinstance(E[0], np.ndarray):
        return [np.ascontiguousarray(r, dtype=float) for r in E]
    return [np.ascontiguousarray(p.vertices) for p in PolygonSet.of(E).parts]


# ---------------------------------------------------------------------------
# the descent engine


def _ring_area(xy):
    return kernels.polygon_area(np.ascontiguousarray(xy))


def _clean(xy: np.ndarray, n: int, tol: float) -> np.ndarray:
    """Drop coincident neighbours, then split the longest edges back up to ``n``."""
    keep = np.hypot(*(np.roll(xy, -1, axis=0) - xy).T) > tol
    if keep.all():
        return xy
    xy = xy[keep]
    while len(xy) < n:
        e = np.hypot(*(np.roll(xy, -1, axis=0) - xy).T)
        i = int(np.argmax(e))
        mid = 0.5 * (xy[i] + xy[(i + 1) % len(xy)])
        xy = np.insert(xy, i + 1, mid, axis=0)
    return xy


class _Problem:
    """Energy, gradient and constraint handling for one descent run."""

    def __init__(self, f_descent, f_report, g, mass, n_vertices, quad_order):
        self.f = f_descent
        self.f_report = f_report
        self.g = g
        self.mass = mass
        self.n = n_vertices
        self.order = quad_order
        self.zero_g = isinstance(g, Zero)
        self.merge_tol = 1e-9 * math.sqrt(mass)

    def energy(self, rings) -> float:
        F = sum(_surface_grad(r, self.f)[0] if self.f.kernel_spec() is None
                else float(kernels.tension_energy_grad(r, *self.f.kernel_spec(), False)[0])
                for r in rings)
        if self.zero_g:
            return F
        if not self.g.set_feasible(rings):
            return math.inf
        return F + float(integrate_rings(self.g.value, rings, self.order, tuple(self.g.seams)))

    def gradient(self, rings) -> list:
        out = []
        for r in rings:
            gf = _surface_grad(r, self.f)[1]
            out.append(gf if self.zero_g else gf + _potential_grad(r, self.g))
        return out

    def valid(self, rings) -> bool:
        if any(_ring_area(r) <= 0 for r in rings):
            return False
        xy = np.ascontiguousarray(np.vstack(rings))
        offs = np.cumsum([0] + [len(r) for r in rings]).astype(np.int64)
        if kernels.rings_intersect(xy, offs, 0.0):
            return False
        if len(rings) > 1:
            geoms = [shapely.Polygon(r) for r in rings]
            for i in range(len(geoms)):
                for j in range(i + 1, len(geoms)):
                    if shapely.distance(geoms[i], geoms[j]) < SEPARATION * 10:
                        return False
        return True

    def project(self, rings) -> list:
        return [_clean(self.g.project(r), self.n if len(r) >= self.n else len(r), self.merge_tol)
                for r in rings]

    def restore_mass(self, rings, scaling: bool = False):
        """Move the boundary so the total area is exactly the target mass.

        The default is a common offset along the area gradient with vertices
        on the boundary of the finite domain held fixed, which keeps contact
        sets intact.  ``scaling`` (and the fallback when the offset cannot
        bracket the mass) rescales every part about its centroid.
        """
        if not scaling:
            out = self._offset_mass(rings)
            if out is not None:
                return out
        cents = [polygon_centroid(r) for r in rings]

        def build(s):
            return self.project([c + s * (r - c) for r, c in zip(rings, cents)])

        def resid(s):
            return sum(_ring_area(r) for r in build(s)) - self.mass

        r1 = resid(1.0)
        if abs(r1) <= 1e-13 * self.mass:
            return build(1.0)
        s0 = math.sqrt(self.mass / max(sum(_ring_area(r) for r in rings), 1e-300))
        lo, hi = min(1.0, s0), max(1.0, s0)
        for _ in range(10):
            if resid(lo) <= 0 <= resid(hi):
                break
            lo, hi = lo / 1.5, hi * 1.5
        else:
            return None
        s = brentq(resid, lo, hi, xtol=1e-15, rtol=1e-15, maxiter=200)
        out = build(s)
        if abs(sum(_ring_area(r) for r in out) - self.mass) > 1e-9 * self.mass:
            return None
        return out


    def _offset_mass(self, rings):
        a = [_area_grad(r) for r in rings]
        if not self.zero_g:
            a = [np.where(_on_boundary(r, self.g)[:, None], 0.0, ai) for r, ai in zip(rings, a)]
        aa = sum(np.sum(ai * _area_grad(r)) for ai, r in zip(a, rings))
        if not aa > 0:
            return None

        def build(t):
            return self.project([r + t * ai for r, ai in zip(rings, a)])

        def resid(t):
            return sum(_ring_area(r) for r in build(t)) - self.mass

        r0 = resid(0.0)
        if abs(r0) <= 1e-13 * self.mass:
            return build(0.0)
        t1 = -r0 / aa
        lo, hi = sorted((0.0, 2.0 * t1))
        for _ in range(6):
            rl, rh = resid(lo), resid(hi)
            if rl <= 0 <= rh:
                break
            lo, hi = lo - (hi - lo), hi + (hi - lo)
        else:
            return None
        t = brentq(resid, lo, hi, xtol=1e-16, rtol=1e-15, maxiter=200)
        out = build(t)
        if abs(sum(_ring_area(r) for r in out) - self.mass) > 1e-9 * self.mass:
            return None
        return out


def _precondition(grad: np.ndarray, kappa: float) -> np.ndarray:
    """Solve ``(I + kappa L) d = grad`` for the cyclic Laplacian ``L``."""
    n = len(grad)
    k = np.arange(n)
    eig = 1.0 + kappa * (2.0 - 2.0 * np.cos(2 * np.pi * k / n))
    return np.real(np.fft.ifft(np.fft.fft(grad, axis=0) / eig[:, None], axis=0))


def _active_normals(prob: _Problem, rings, moves):
    """Outward unit normals at vertices whose move would leave ``{g < inf}``."""
    out = []
    for r, mv in zip(rings, moves):
        nrm = np.zeros_like(r)
        if not prob.zero_g:
            on = _on_boundary(r, prob.g)
            if np.any(on):
                scale = 1.0 + np.abs(r).max()
                size = np.linalg.norm(mv[on], axis=1, keepdims=True)
                tau = 1e-6 * scale / np.maximum(size, 1e-300)
                p = r[on] + tau * mv[on]
                q = prob.g.project(p)
                gap = p - q
                gl = np.linalg.norm(gap, axis=1, keepdims=True)
                nrm[on] = np.where(gl > 1e-3 * tau * size, gap / np.maximum(gl, 1e-300), 0.0)
        out.append(nrm)
    return out


def _restrict(vecs, normals):
    return [v - np.sum(v * n, axis=1, keepdims=True) * n for v, n in zip(vecs, normals)]


def _tangent_combo(pg, pa, a_dot):
    num = sum(a_dot(i, p) for i, p in enumerate(pg))
    den = sum(a_dot(i, p) for i, p in enumerate(pa))
    lam = num / den if den > 0 else 0.0
    return [p - lam * q for p, q in zip(pg, pa)]


def _constraint_columns(rings, normals):
    """Area gradient plus one column per active vertex normal, flattened."""
    sizes = [2 * len(r) for r in rings]
    total = sum(sizes)
    cols = [np.concatenate([_area_grad(r).ravel() for r in rings])]
    off = 0
    for r, nrm in zip(rings, normals):
        for i in np.flatnonzero(np.any(nrm != 0, axis=1)):
            c = np.zeros(total)
            c[off + 2 * i: off + 2 * i + 2] = nrm[i]
            cols.append(c)
        off += 2 * len(r)
    return np.column_stack(cols)


def _metric_projection(g, C, apply):
    """``d = P^-1 (g - C mu)`` with ``C^T d = 0``: the P-metric projection."""
    Pg = apply(g)
    PC = np.column_stack([apply(C[:, j]) for j in range(C.shape[1])])
    mu = np.linalg.lstsq(C.T @ PC, C.T @ Pg, rcond=None)[0]
    return Pg - PC @ mu


def _descent_direction(prob: _Problem, rings, grads):
    """Preconditioned descent direction ``d`` (the move is ``-d``).

    ``d`` solves the Sobolev system on the tangent space of the area
    constraint and of the active domain boundary: vertices on the boundary
    whose move would leave the domain keep no outward component.  Returns
    ``d``, the norm of the constrained raw gradient and ``<grad, d>``.
    """
    kappa = (prob.n / (2 * np.pi)) ** 2
    sizes = [len(r) for r in rings]
    splits = np.cumsum([2 * n for n in sizes])[:-1]

    def unflat(v):
        return [x.reshape(-1, 2) for x in np.split(v, splits)]

    def flat(vs):
        return np.concatenate([v.ravel() for v in vs])

    def apply_pinv(v):
        return flat([_precondition(x, kappa) for x in unflat(v)])

    g = flat(grads)
    normals = [np.zeros_like(r) for r in rings]
    for _ in range(4):
        C = _constraint_columns(rings, normals)
        cg = _metric_projection(g, C, lambda v: v)
        new = _active_normals(prob, rings, [-c for c in unflat(cg)])
        merged = [np.where(np.any(o != 0, axis=1, keepdims=True), o, nn)
                  for o, nn in zip(normals, new)]
        if all(np.array_equal(m, o) for m, o in zip(merged, normals)):
            break
        normals = merged
        if prob.zero_g:
            break
    C = _constraint_columns(rings, normals)
    cg = _metric_projection(g, C, lambda v: v)
    d = _metric_projection(g, C, apply_pinv)
    slope = float(g @ d)
    if not slope > 0:
        d, slope = cg, float(g @ cg)
    return unflat(d), float(np.linalg.norm(cg)), slope


def _remesh(rings, n):
    return [resample(r, n) if len(r) == n else resample(r, len(r)) for r in rings]


def _descend(prob: _Problem, rings, cfg: MinimizeConfig):
    E = prob.energy(rings)
    step = cfg.initial_step
    min_step = 1e-13 * math.sqrt(prob.mass)
    max_step = cfg.initial_step
    trace = [(0, _centroid(rings), E)]
    every = cfg.snapshot_every
    snaps = [(0, [r.copy() for r in rings])] if every else []
    quiet = 0
    converged = False
    it = 0
    for it in range(1, cfg.max_iters + 1):
        grads = prob.gradient(rings)
        d, cnorm, slope = _descent_direction(prob, rings, grads)
        if cnorm <= cfg.grad_norm:
            converged = True
            break
        dmax = max(float(np.abs(di).max()) for di in d)
        if not (dmax > 0 and slope > 0):
            converged = True
            break
        accepted = False
        while step >= min_step:
            s = step / dmax
            trial = prob.project([r - s * di for r, di in zip(rings, d)])
            trial = prob.restore_mass(trial) if trial is not None else None
            if trial is not None and prob.valid(trial):
                E_new = prob.energy(trial)
                # sufficient decrease measured along the projected arc
                if all(len(t) == len(r) for t, r in zip(trial, rings)) and len(trial) == len(rings):
                    pred = sum(np.sum(g * (r - t)) for g, r, t in zip(grads, rings, trial))
                else:
                    pred = s * slope
                if E_new <= E - 1e-4 * max(pred, 0.0) and E_new < E:
                    accepted = True
                    break
            step *= 0.5
        if not accepted:
            converged = abs(slope) * 1e-4 <= cfg.energy_rel * abs(E) or cnorm <= 10 * cfg.grad_norm
            break
        drop = E - E_new
        rings, E = trial, E_new
        trace.append((it, _centroid(rings), E))
        if every and it % every == 0:
            snaps.append((it, [r.copy() for r in rings]))
        step = min(2.0 * step, max_step)
        quiet = quiet + 1 if drop <= cfg.energy_rel * max(abs(E), 1e-300) else 0
        if quiet >= 5:
            converged = True
            break
        if cfg.remesh_every and it % cfg.remesh_every == 0:
            cand = prob.restore_mass(prob.project(_remesh(rings, prob.n)))
            if cand is not None and prob.valid(cand):
                Ec = prob.energy(cand)
                if Ec <= E:
                    rings, E = cand, Ec
        # drop vanishing parts and keep going with the rest
        if len(rings) > 1:
            keep = [r for r in rings if _ring_area(r) > 1e-4 * prob.mass]
            if len(keep) < len(rings):
                cand = prob.restore_mass(keep)
                if cand is not None and prob.valid(cand):
                    rings, E = cand, prob.energy(cand)
    if every and snaps[-1][0] != it:
        snaps.append((it, [r.copy() for r in rings]))
    return rings, E, it, converged, trace, snaps


def _centroid(rings):
    a = np.array([_ring_area(r) for r in rings])
    c = np.array([polygon_centroid(r) for r in rings])
    return tuple(float(v) for v in (a[:, None] * c).sum(axis=0) / a.sum())


# ---------------------------------------------------------------------------
# initialization


def _template(f: SurfaceTension, n: int) -> np.ndarray:
    """Unit-area Wulff polygon with ``n`` vertices, centred at its centroid."""
    K = wulff_shape(f, max(256, n))
    xy = K.vertices
    if len(xy) != n:
        xy = resample(xy, n)
    c = polygon_centroid(xy)
    xy = xy - c
    return xy / math.sqrt(_ring_area(xy))


def _candidate_centers(cfg: MinimizeConfig, n_grid: int = 15):
    c = np.asarray(cfg.center, dtype=float)
    ax = np.linspace(-cfg.search_radius, cfg.search_radius, n_grid)
    X, Y = np.meshgrid(ax, ax, indexing="ij")
    pts = np.column_stack([X.ravel(), Y.ravel()])
    pts = pts[np.hypot(pts[:, 0], pts[:, 1]) <= cfg.search_radius + 1e-12]
    return c + pts


def _footprint_scores(cfg, template, mass_part, centers, g):
    r = math.sqrt(mass_part)
    scores = np.empty(len(centers))
    bad = np.empty(len(centers), dtype=int)
    for i, c in enumerate(centers):
        ring = c + r * template
        feas = g.feasible(ring)
        bad[i] = int((~feas).sum())
        if bad[i] or isinstance(g, Zero):
            scores[i] = 0.0 if not bad[i] else math.inf
            continue
        if not g.set_feasible([ring]):
            bad[i] = 1
            scores[i] = math.inf
            continue
        scores[i] = float(integrate_rings(g.value, [ring], 3, tuple(g.seams)))
    return scores, bad


def _initial_rings(cfg: MinimizeConfig, template, k, restart, rng, f, g):
    n = cfg.vertices_per_part
    if k == 1:
        fracs = np.array([1.0])
    else:
        fracs = np.ones(k) / k if restart == 0 else rng.dirichlet(np.full(k, 8.0))
    masses = cfg.mass * fracs
    centers = _candidate_centers(cfg)
    dist = np.hypot(*(centers - np.asarray(cfg.center)).T)
    scores, bad = _footprint_scores(cfg, template, masses.max(), centers, g)
    finite = np.isfinite(scores)
    if finite.any():
        ref = scores[finite]
        spread = max(ref.max() - ref.min(), 1e-12 * (1 + abs(ref.min())))
        order_key = np.where(finite, (scores - ref.min()) / spread, np.inf)
    else:
        order_key = bad.astype(float)
    if restart == 0:
        order = np.lexsort((dist, order_key))
    else:
        noise = rng.uniform(0.0, 0.25, len(centers))
        order = np.lexsort((dist, order_key + noise))
    rings = []
    geoms = []
    for mk in masses:
        r = math.sqrt(mk)
        phase = 0 if restart == 0 else int(rng.integers(n))
        for idx in order:
            c = centers[idx]
            if restart > 0:
                c = c + rng.normal(scale=0.05 * r, size=2)
            ring = np.roll(c + r * template, phase, axis=0)
            geom = shapely.Polygon(ring)
            if all(shapely.distance(geom, o) > 0.05 * r for o in geoms):
                rings.append(ring)
                geoms.append(geom)
                break
        else:
            return None
    return rings


# ---------------------------------------------------------------------------
# public driver


def _run(cfg: MinimizeConfig, f_descent, f_report, template, restart: int, k: int):
    ss = np.random.SeedSequence([cfg.seed, restart, k])
    rng = np.random.default_rng(ss)
    prob = _Problem(f_descent, f_report, cfg.potential, cfg.mass, cfg.vertices_per_part,
                    cfg.quad_order)
    rings = _initial_rings(cfg, template, k, restart, rng, f_descent, cfg.potential)
    if rings is None:
        return None
    rings = prob.restore_mass(prob.project(rings), scaling=True)
    if rings is None or not prob.valid(rings) or not math.isfinite(prob.energy(rings)):
        return None
    rings, E, iters, converged, trace, snaps = _descend(prob, rings, cfg)
    shape = PolygonSet([Polygon(r) for r in rings], validate=False)
    energy = free_energy(shape, f_report, cfg.potential, cfg.quad_order).total
    if energy is None:
        return None
    return RunRecord(restart, len(rings), float(energy), shape, iters, converged, trace, snaps)


def descent_tension(f: SurfaceTension, width: float = DEFAULT_SMOOTHING) -> SurfaceTension:
    return f.smoothed(width)


def minimize(cfg: MinimizeConfig) -> MinimizeResult:
    """Best shape over ``restarts x {1..max_parts}`` descent runs."""
    f_report = cfg.tension
    f_descent = descent_tension(f_report, cfg.smoothing)
    template = _template(f_descent, cfg.vertices_per_part)
    jobs = [(r, k) for r in range(cfg.restarts) for k in range(1, cfg.max_parts + 1)]
    if cfg.threads > 1:
        with ThreadPoolExecutor(cfg.threads) as ex:
            runs = list(ex.map(lambda rk: _run(cfg, f_descent, f_report, template, *rk), jobs))
    else:
        runs = [_run(cfg, f_descent, f_report, template, r, k) for r, k in jobs]
    done = [r for r in runs if r is not None]
    if not done:
        raise InfeasibleError("no feasible initial placement inside the search ball")
    # deterministic reduction: min energy, ties by (restart, parts)
    best = min(done, key=lambda r: (r.energy, r.restart, r.parts))
    report = free_energy(best.shape, f_report, cfg.potential, cfg.quad_order)
    if not report.feasible:
        raise OptimizationError("best shape left the finite domain")
    return MinimizeResult(
        shape=best.shape,
        report=report,
        convexity=convexity_report(best.shape),
        component_count=len(best.shape.parts),
        iterations=best.iterations,
        converged=best.converged,
        restart_energies=[(r.restart, r.parts, r.energy) for r in done],
        drift_trace=best.drift_trace,
        runs=done,
        snapshots=best.snapshots,
        diagnostics={"failed_runs": len(runs) - len(done),
                     "smoothed_descent": f_descent is not f_report},
    )


# ---------------------------------------------------------------------------
# set moves and probes


@dataclass(frozen=True)
class MergeRecord:
    h: float
    r: float
    dilated: Polygon
    energy_before: float
    energy_after: float
    improves: bool
    collision: bool

    def to_dict(self) -> dict:
        return {"h": self.h, "r": self.r, "dilated": self.dilated.to_list(),
                "energy_before": self.energy_before, "energy_after": self.energy_after,
                "improves": self.improves, "collision": self.collision}


def dilation_merge(E1, E2, f: SurfaceTension, g: Potential | None = None, others=()) -> MergeRecord:
    """Absorb ``E2`` into ``E1`` by dilating ``E1`` about its centroid.

    ``h = sqrt(1 + |E2|/|E1|)`` so ``|h E1| = |E1| + |E2|``; ``r = sqrt(h^2 - 1)``
    is the matching radius.  ``collision`` is set when ``h E1`` meets any of
    ``others`` (the remaining components).
    """
    g = g if g is not None else Zero()
    E1 = E1 if isinstance(E1, Polygon) else Polygon(E1)
    E2 = E2 if isinstance(E2, Polygon) else Polygon(E2)
    if not E1.area >= E2.area > 0:
        raise ValueError("need |E1| >= |E2| > 0")
    h = math.sqrt(1.0 + E2.area / E1.area)
    hE1 = E1.scale(h, E1.centroid)
    before = free_energy(E1, f, g).total
    before2 = free_energy(E2, f, g).total
    after = free_energy(hE1, f, g).total
    total_before = (before + before2) if before is not None and before2 is not None else math.inf
    geom = hE1.to_shapely()
    collision = any(geom.intersects(o.to_shapely() if isinstance(o, Polygon) else Polygon(o).to_shapely())
                    for o in others)
    after_v = after if after is not None else math.inf
    return MergeRecord(h, math.sqrt(h * h - 1.0), hE1, float(total_before), float(after_v),
                       bool(after_v < total_before), bool(collision))


class Confined(Potential):
    """``g`` restricted to the closed ball of radius ``R`` about ``center``."""

    def __init__(self, g: Potential, R: float, center=(0.0, 0.0)):
        self.g = g
        self.R = float(R)
        self.c = np.asarray(center, dtype=float)
        self.seams = g.seams
        self.name = f"{g.name}|B_{R:g}"

    def _inside(self, pts):
        p = np.asarray(pts, dtype=float).reshape(-1, 2) - self.c
        return np.hypot(p[:, 0], p[:, 1]) <= self.R * (1 + 1e-12)

    def value(self, pts):
        v = self.g.value(pts)
        return np.where(self._inside(pts), v, math.inf)

    def grad(self, pts):
        return self.g.grad(pts)

    def feasible(self, pts):
        return self._inside(pts) & self.g.feasible(pts)

    def project(self, pts):
        p = self.g.project(pts)
        for _ in range(4):
            q = p - self.c
            r = np.hypot(q[:, 0], q[:, 1])
            out = r > self.R
            if not out.any():
                break
            p = p.copy()
            p[out] = self.c + q[out] * (self.R / r[out])[:, None]
            p = self.g.project(p)
        return p

    def set_feasible(self, rings):
        # the ball is convex, so checking vertices suffices for it
        return all(bool(np.all(self._inside(r))) for r in rings) and self.g.set_feasible(rings)

    def nonsmooth(self, pts, tol=1e-9):
        return self.g.nonsmooth(pts, tol)

    def descriptor(self):
        return {"model": "confined", "R": self.R, "center": self.c.tolist(),
                "potential": self.g.descriptor()}


@dataclass
class ProbeRecord:
    verdict: str
    radii: list
    energies: list
    centroids: list
    direction: list
    energy_decreasing: bool
    drift_monotone: bool

    def to_dict(self) -> dict:
        return {"verdict": self.verdict, "radii": self.radii, "energies": self.energies,
                "centroids": self.centroids, "direction": self.direction,
                "energy_decreasing": self.energy_decreasing,
                "drift_monotone": self.drift_monotone}


def nonexistence_probe(g: Potential, f: SurfaceTension, m: float, budget: int = 3,
                       R0: float = 4.0, direction=None, restarts: int = 2, seed: int = 0,
                       vertices_per_part: int = 48, energy_tol: float = 1e-6,
                       drift_tol: float = 1e-3) -> ProbeRecord:
    """Minimize inside growing balls ``B_R``, ``R = R0, 2 R0, ...``.

    "escape detected" when the best energy strictly decreases with ``R`` and
    the centroid moves monotonically along ``direction`` (by default minus the
    integral of ``grad g`` over the first minimizer, falling back to the
    observed drift).
    """
    radii = [R0 * 2 ** i for i in range(budget)]
    energies, cents = [], []
    first_shape = None
    for R in radii:
        cfg = MinimizeConfig(mass=m, tension=f, potential=Confined(g, R), max_parts=1,
                             restarts=restarts, seed=seed, search_radius=R,
                             vertices_per_part=vertices_per_part)
        res = minimize(cfg)
        energies.append(float(res.report.total))
        cents.append([float(v) for v in res.shape.centroid])
        if first_shape is None:
            first_shape = res.shape
    C = np.asarray(cents)
    if direction is None:
        from .potential import condition_iv_integral
        try:
            v = -condition_iv_integral(first_shape, g).value
        except Exception:
            v = np.zeros(2)
        if np.linalg.norm(v) <= 1e-12:
            v = C[-1] - C[0]
        direction = v / np.linalg.norm(v) if np.linalg.norm(v) > 0 else np.array([0.0, 1.0])
    direction = np.asarray(direction, dtype=float)
    direction = direction / np.linalg.norm(direction)
    proj = C @ direction
    scale = abs(energies[0]) if energies[0] else 1.0
    dec = all(b < a - energy_tol * scale for a, b in zip(energies, energies[1:]))
    mono = all(b > a + drift_tol * math.sqrt(m) for a, b in zip(proj, proj[1:]))
    verdict = "escape detected" if dec and mono else "stable"
    return ProbeRecord(verdict, radii, energies, cents, direction.tolist(), dec, mono)


def largest_inscribed_wulff(A: Polygon, f: SurfaceTension, n_dirs: int = 256):
    """Largest ``c + s K`` inside ``A``; returns ``(s, c, area)``.

    Convex ``A`` is an exact linear program in ``(c, s)``; otherwise a centre
    grid with bisection on ``s`` is used.
    """
    K = wulff_shape(f, n_dirs)
    kv = K.vertices
    if A.is_convex():
        v = A.vertices
        e = np.roll(v, -1, axis=0) - v
        nrm = np.column_stack([e[:, 1], -e[:, 0]])
        nrm /= np.linalg.norm(nrm, axis=1, keepdims=True)
        b = np.einsum("ij,ij->i", nrm, v)
        hK = (kv @ nrm.T).max(axis=0)
        res = linprog(c=[0, 0, -1], A_ub=np.column_stack([nrm, hK]), b_ub=b,
                      bounds=[(None, None), (None, None), (0, None)], method="highs")
        s = float(res.x[2])
        return s, res.x[:2], s * s * K.area
    geom = A.to_shapely()
    shapely.prepare(geom)
    x0, y0, x1, y1 = geom.bounds
    best = (0.0, np.array(A.centroid))
    for cx in np.linspace(x0, x1, 21):
        for cy in np.linspace(y0, y1, 21):
            c = np.array([cx, cy])
            lo, hi = 0.0, max(x1 - x0, y1 - y0)
            if not geom.covers(shapely.Polygon(c + 1e-9 * kv)):
                continue
            for _ in range(40):
                mid = 0.5 * (lo + hi)
                if geom.covers(shapely.Polygon(c + mid * kv)):
                    lo = mid
                else:
                    hi = mid
            if lo > best[0]:
                best = (lo, c)
    return best[0], best[1], best[0] ** 2 * K.area


def container_minimize(A, f: SurfaceTension, m: float, **kw) -> MinimizeResult:
    """Minimize ``F`` among sets of mass ``m`` inside the polygon ``A``."""
    A = A if isinstance(A, Polygon) else Polygon(A)
    if m > A.area * (1 + 1e-12):
        raise InfeasibleError(f"mass {m} exceeds container area {A.area}")
    s, c, Ka = largest_inscribed_wulff(A, f)
    extra = {"inscribed_wulff_area": Ka, "mass_exceeds_inscribed_wulff": bool(m > Ka)}
    g = Container(A)
    if m >= A.area * (1 - 1e-12):
        shape = PolygonSet([A])
        report = free_energy(shape, f, g)
        return MinimizeResult(shape, report, convexity_report(shape), 1, 0, True,
                              [(0, 1, report.total)], [(0, tuple(A.centroid), report.total)],
                              diagnostics=extra | {"full_container": True})
    v = A.vertices
    R = float(np.max(np.hypot(*(v - A.centroid).T)))
    opts = dict(mass=m, tension=f, potential=g, search_radius=R, center=tuple(A.centroid),
                max_parts=1)
    opts.update(kw)
    res = minimize(MinimizeConfig(**opts))
    res.diagnostics.update(extra)
    return res
