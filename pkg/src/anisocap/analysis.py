"""Diagnostics built on the optimizer: modulus of the free energy,
uniqueness by restart clustering, critical-mass scans, openness of the
convex-mass set and the deficit-asymmetry exponent.

All verdicts are heuristic: they describe what the sampled competitors and
restarts show at the resolution of the inputs, nothing more.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .energy import asymmetry, deficit, free_energy
from .errors import AnisocapError
from .geom2d import Polygon, PolygonSet, symmetric_difference_area
from .optimize import MinimizeConfig, MinimizeResult, minimize
from .potential import Potential, Zero, condition_iv_integral
from .tension import SurfaceTension, wulff_shape

DEFAULT_THRESHOLD = 0.05
DEFAULT_DEFECT_THRESHOLD = 1e-2
DEFAULT_TIE_REL = 1e-4


def shape_distance(A, B, g: Potential) -> float:
    """Asymmetry between two sets of (nearly) equal mass.

    Translations are factored out only when ``g`` is translation invariant;
    otherwise a translate is a different configuration.
    """
    A, B = PolygonSet.of(A), PolygonSet.of(B)
    if getattr(g, "translation_invariant", False):
        return asymmetry(A, B)[0]
    return symmetric_difference_area(A, B) / A.area


# ---------------------------------------------------------------------------
# modulus of the free energy


@dataclass
class ModulusEstimate:
    m: float
    epsilon: float
    w_lower: float
    w_upper: float
    samples: int
    perturbation_families: list
    censored: bool = False
    witness: dict | None = None
    lower_form: str = "none"

    def to_dict(self) -> dict:
        return {"m": self.m, "epsilon": self.epsilon, "w_lower": self.w_lower,
                "w_upper": None if math.isinf(self.w_upper) else self.w_upper,
                "samples": self.samples, "perturbation_families": self.perturbation_families,
                "censored": self.censored, "witness": self.witness,
                "lower_form": self.lower_form}


FAMILIES = ("ellipse", "translation", "split", "bump")


def _affine(E: PolygonSet, M: np.ndarray, c: np.ndarray) -> PolygonSet:
    return PolygonSet([Polygon(c + (p.vertices - c) @ M.T) for p in E.parts], validate=False)


def _ellipse(E: PolygonSet, s: float, theta: float) -> PolygonSet:
    """Area-preserving stretch by ``exp(s)`` along angle ``theta``."""
    c = E.centroid
    R = np.array([[math.cos(theta), -math.sin(theta)], [math.sin(theta), math.cos(theta)]])
    D = np.diag([math.exp(s), math.exp(-s)])
    return _affine(E, R @ D @ R.T, c)


def _bump(E: PolygonSet, amp: float, k: int, phase: float) -> PolygonSet:
    parts = []
    for p in E.parts:
        c = p.centroid
        d = p.vertices - c
        th = np.arctan2(d[:, 1], d[:, 0])
        parts.append(Polygon(c + d * (1.0 + amp * np.cos(k * th + phase))[:, None]))
    out = PolygonSet(parts, validate=False)
    return out.scale(math.sqrt(E.area / out.area), E.centroid)


def _split(E: PolygonSet, q: float, direction: np.ndarray) -> PolygonSet:
    """Move mass fraction ``q`` into a scaled copy placed beside ``E``."""
    c = E.centroid
    main = E.scale(math.sqrt(1.0 - q), c)
    x0, y0, x1, y1 = E.bounds()
    reach = math.hypot(x1 - x0, y1 - y0)
    drop = E.scale(math.sqrt(q), c).translate(direction * (reach * (0.5 + 0.5 * math.sqrt(q)) + 0.1 * math.sqrt(E.area)))
    return PolygonSet(list(main.parts) + list(drop.parts))


def _uphill(E: PolygonSet, g: Potential, rng) -> np.ndarray:
    try:
        v = condition_iv_integral(E, g, 4).value
    except AnisocapError:
        v = np.zeros(2)
    n = np.linalg.norm(v)
    if n > 1e-12:
        return v / n
    a = rng.uniform(0, 2 * math.pi)
    return np.array([math.cos(a), math.sin(a)])


def competitor_pool(E_m, g: Potential, samples: int = 240, seed: int = 0):
    """Seed-determined same-mass competitors ``(family, amplitude, shape)``.

    The pool does not depend on the asymmetry threshold, which makes the
    resulting upper bound monotone in it.
    """
    E_m = PolygonSet.of(E_m)
    rng = np.random.default_rng(np.random.SeedSequence([seed, 7919]))
    per = max(4, samples // len(FAMILIES))
    scale = math.sqrt(E_m.area)
    out = []
    for s in np.geomspace(1e-3, 1.5, per):
        out.append(("ellipse", float(s), lambda s=s, t=rng.uniform(0, math.pi): _ellipse(E_m, s, t)))
    up = _uphill(E_m, g, rng)
    for t in np.geomspace(1e-3, 2.0, per):
        out.append(("translation", float(t), lambda t=t: E_m.translate(up * t * scale)))
    dirs = [np.array(d, dtype=float) for d in ((1, 0), (-1, 0), (0, 1), (0, -1))]
    for q in np.geomspace(1e-3, 0.5, per):
        d = dirs[int(rng.integers(4))]
        out.append(("split", float(q), lambda q=q, d=d: _split(E_m, q, d)))
    for a in np.geomspace(1e-3, 0.4, per):
        k = int(rng.integers(2, 7))
        ph = rng.uniform(0, 2 * math.pi)
        out.append(("bump", float(a), lambda a=a, k=k, ph=ph: _bump(E_m, a, k, ph)))
    return out


@dataclass
class _Scored:
    family: str
    amplitude: float
    asym: float
    gap: float


def _score_pool(E_m, f, g, samples, seed, quad_order=6):
    E_m = PolygonSet.of(E_m)
    e_ref = free_energy(E_m, f, g, quad_order).total
    scored = [_Scored("identity", 0.0, 0.0, 0.0)]
    for fam, amp, build in competitor_pool(E_m, g, samples, seed):
        try:
            E = build()
        except AnisocapError:
            continue
        rep = free_energy(E, f, g, quad_order)
        if not rep.feasible:
            continue
        scored.append(_Scored(fam, amp, shape_distance(E, E_m, g), abs(rep.total - e_ref)))
    return scored


def _w_upper(scored, eps):
    best = None
    for s in scored:
        if s.asym >= eps and (best is None or s.gap < best.gap):
            best = s
    return best


def modulus_estimate(m: float, f: SurfaceTension, g: Potential, epsilon: float,
                     samples: int = 240, seed: int = 0, E_m=None, c: float | None = None,
                     n: int = 2, scored=None) -> ModulusEstimate:
    """Interval ``[w_lower, w_upper]`` for the modulus at asymmetry ``epsilon``.

    ``w_upper`` is the smallest energy gap over sampled competitors at least
    ``epsilon`` away from ``E_m``.  ``w_lower`` is ``c eps^2 m^((n-1)/n)``
    when ``g`` is zero and a constant ``c`` is supplied, else 0.
    """
    if E_m is None:
        E_m = minimize(MinimizeConfig(mass=m, tension=f, potential=g, restarts=2, max_parts=1,
                                      seed=seed)).shape
    if scored is None:
        scored = _score_pool(E_m, f, g, samples, seed)
    best = _w_upper(scored, epsilon)
    lower, form = 0.0, "none"
    if isinstance(g, Zero) and c is not None:
        lower = c * epsilon ** 2 * m ** ((n - 1.0) / n)
        form = "c * eps^2 * m^((n-1)/n)"
    if best is None:
        return ModulusEstimate(m, epsilon, lower, math.inf, len(scored) - 1, list(FAMILIES),
                               True, None, form)
    upper = best.gap
    lower = min(lower, upper)
    return ModulusEstimate(m, epsilon, lower, upper, len(scored) - 1, list(FAMILIES), False,
                           {"family": best.family, "amplitude": best.amplitude,
                            "asymmetry": best.asym}, form)


# ---------------------------------------------------------------------------
# uniqueness and critical-mass scans


def uniqueness_proxy(result: MinimizeResult, g: Potential, tie_rel: float = DEFAULT_TIE_REL):
    """Max pairwise asymmetry among runs whose energy ties the best one.

    Returns ``(proxy, tied_runs)``.
    """
    runs = sorted(result.runs, key=lambda r: (r.energy, r.restart, r.parts))
    e0 = runs[0].energy
    tied = [r for r in runs if r.energy - e0 <= tie_rel * abs(e0)]
    worst = 0.0
    for i in range(len(tied)):
        for j in range(i + 1, len(tied)):
            worst = max(worst, shape_distance(tied[i].shape, tied[j].shape, g))
    return float(worst), len(tied)


@dataclass
class ScanConfig:
    restarts: int = 6
    max_parts: int = 2
    vertices_per_part: int = 48
    search_radius: float = 4.0
    seed: int = 0
    max_iters: int = 400
    threshold: float = DEFAULT_THRESHOLD
    defect_threshold: float = DEFAULT_DEFECT_THRESHOLD
    tie_rel: float = DEFAULT_TIE_REL
    epsilon: float = 0.1
    ratio_form: str = "general"       # "general": exponent (n-1)/n, "planar": exponent 1
    n: int = 2
    modulus_samples: int = 120


@dataclass
class ScanReport:
    masses: list
    rows: list
    critical_mass_estimate: float | None
    ratio_trace: list
    gamma_estimate: float | None
    formulas: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"masses": self.masses, "rows": self.rows,
                "critical_mass_estimate": self.critical_mass_estimate,
                "ratio_trace": self.ratio_trace, "gamma_estimate": self.gamma_estimate,
                "formulas": self.formulas}

    def to_csv(self) -> str:
        buf = io.StringIO()
        cols = ["mass", "energy", "convexity_defect", "uniqueness_proxy", "component_count",
                "tied_runs", "verdict", "error"]
        w = csv.DictWriter(buf, fieldnames=cols, extrasaction="ignore", lineterminator="\n")
        w.writeheader()
        for r in self.rows:
            w.writerow({k: r.get(k, "") for k in cols})
        return buf.getvalue()


def _minimize_at(f, g, m, cfg: ScanConfig, seed_offset: int = 0) -> MinimizeResult:
    return minimize(MinimizeConfig(mass=m, tension=f, potential=g, restarts=cfg.restarts,
                                   max_parts=cfg.max_parts,
                                   vertices_per_part=cfg.vertices_per_part,
                                   search_radius=cfg.search_radius, seed=cfg.seed + seed_offset,
                                   max_iters=cfg.max_iters))


def critical_mass_scan(f: SurfaceTension, g: Potential, mass_grid, config: ScanConfig | None = None,
                       keep_results: bool = False) -> ScanReport:
    """Per-mass verdicts and the first mass where convexity or uniqueness fails."""
    cfg = config or ScanConfig()
    masses = [float(m) for m in mass_grid]
    if any(b <= a for a, b in zip(masses, masses[1:])):
        raise ValueError("mass grid must be strictly increasing")
    rows, results = [], {}
    M_hat = None
    for m in masses:
        try:
            res = _minimize_at(f, g, m, cfg)
        except AnisocapError as exc:
            rows.append({"mass": m, "error": f"{type(exc).__name__}: {exc}", "verdict": "gap"})
            continue
        proxy, tied = uniqueness_proxy(res, g, cfg.tie_rel)
        convex = res.convexity.defect <= cfg.defect_threshold
        unique = proxy <= cfg.threshold
        verdict = "convex+unique" if convex and unique else (
            "nonconvex" if not convex else "nonunique")
        rows.append({"mass": m, "energy": res.report.total, "convexity_defect": res.convexity.defect,
                     "uniqueness_proxy": proxy, "component_count": res.component_count,
                     "tied_runs": tied, "verdict": verdict})
        results[m] = res
        if M_hat is None and not (convex and unique):
            M_hat = m
    n = cfg.n
    expo = (n - 1.0) / n if cfg.ratio_form == "general" else 1.0
    ratio, gamma = [], None
    if M_hat is not None:
        E_M = results[M_hat].shape
        for m in masses:
            if m >= M_hat or m not in results:
                continue
            w = modulus_estimate(m, f, g, cfg.epsilon, cfg.modulus_samples, cfg.seed,
                                 E_m=results[m].shape)
            num = M_hat ** expo - m ** expo
            ratio.append([m, num / w.w_upper if w.w_upper > 0 and math.isfinite(w.w_upper) else None])
            scaled = E_M.scale(math.sqrt(m / M_hat))
            rep = free_energy(scaled, f, g)
            den = M_hat ** ((n - 1.0) / n) - m ** ((n - 1.0) / n)
            if rep.feasible and den > 0:
                val = abs(rep.total - results[m].report.total) / den
                gamma = val if gamma is None else max(gamma, val)
    formulas = {
        "ratio": ("(M^((n-1)/n) - m^((n-1)/n)) / w_m(eps)" if cfg.ratio_form == "general"
                  else "(M - m) / w_m(eps)"),
        "w_m": "upper end of the sampled modulus interval at eps",
        "gamma": "sup_m |E(sqrt(m/M) E_M) - E(E_m)| / (M^((n-1)/n) - m^((n-1)/n))",
        "uniqueness_proxy": "max pairwise asymmetry among energy-tied restarts",
        "n": n, "epsilon": cfg.epsilon,
    }
    report = ScanReport(masses, rows, M_hat, ratio, gamma, formulas)
    if keep_results:
        report.results = results  # type: ignore[attr-defined]
    return report


def openness_probe(f: SurfaceTension, g: Potential, m: float, delta_grid,
                   config: ScanConfig | None = None) -> dict:
    """Convexity on both sides of ``m`` for each offset in ``delta_grid``."""
    cfg = config or ScanConfig()
    rows = []
    largest, flip = 0.0, None
    for d in sorted(float(x) for x in delta_grid):
        side = {}
        for tag, mm in (("minus", m - d), ("plus", m + d)):
            if mm <= 0:
                side[tag] = None
                continue
            res = _minimize_at(f, g, mm, cfg)
            side[tag] = res.convexity.defect
        ok = all(v is not None and v <= cfg.defect_threshold for v in side.values())
        rows.append({"delta": d, "defect_minus": side["minus"], "defect_plus": side["plus"],
                     "convex_both_sides": ok})
        if ok and flip is None:
            largest = d
        elif not ok and flip is None:
            flip = d
    return {"mass": m, "rows": rows, "largest_convex_delta": largest, "flip_delta": flip,
            "threshold": cfg.defect_threshold}


# ---------------------------------------------------------------------------
# deficit versus asymmetry


@dataclass
class StabilityFit:
    slope: float
    intercept: float
    points: list

    def to_dict(self) -> dict:
        return {"slope": self.slope, "intercept": self.intercept, "points": self.points}


def stability_fit(f: SurfaceTension, m: float = math.pi, stretches=None,
                  wulff_resolution: int = 256, asym_range=(0.05, 0.4)) -> StabilityFit:
    """Least-squares slope of ``log deficit`` against ``log asymmetry`` over
    area-preserving stretches of the Wulff shape."""
    K = wulff_shape(f, wulff_resolution)
    E0 = PolygonSet([K.scale(math.sqrt(m / K.area), K.centroid)])
    if stretches is None:
        stretches = np.linspace(0.02, 0.5, 25)
    pts = []
    for s in stretches:
        rep = deficit(_ellipse(E0, float(s), 0.0), f, wulff_resolution, K=K)
        if asym_range[0] <= rep.asymmetry <= asym_range[1] and rep.deficit > 0:
            pts.append([rep.asymmetry, rep.deficit])
    if len(pts) < 3:
        raise AnisocapError("too few points inside the asymmetry range for a fit")
    x = np.log([p[0] for p in pts])
    y = np.log([p[1] for p in pts])
    slope, intercept = np.polyfit(x, y, 1)
    return StabilityFit(float(slope), float(intercept), pts)


__all__ = [
    "ModulusEstimate", "ScanConfig", "ScanReport", "StabilityFit", "competitor_pool",
    "critical_mass_scan", "modulus_estimate", "openness_probe", "shape_distance",
    "stability_fit", "uniqueness_proxy",
]
