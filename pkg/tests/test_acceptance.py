"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v``; the lines are printed even
when output capture is on.
"""

import json
import math
import time

import numpy as np
import pytest
import shapely

from anisocap import analysis, cli, energy, optimize, potential, tension
from anisocap.geom2d import Polygon, PolygonSet, convex_hull, rectangle, regular_polygon
from anisocap.potential import (
    Counterexample,
    LinearGravity,
    PowerRadial,
    Profile,
    Radial,
    Zero,
)
from anisocap.tension import Crystalline, Isotropic, PNorm, SampledSupport

ISO = Isotropic(1.0)


@pytest.fixture
def verdict(capsys):
    def emit(num, ok, detail):
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {num:>2}: {detail}")
        assert ok, detail
    return emit


def _disk(m, n=1024):
    P = regular_polygon(n, 1.0)
    return P.scale(math.sqrt(m / P.area))


# 1 -------------------------------------------------------------------------
def test_c01_wulff_construction(verdict):
    t0 = time.perf_counter()
    K = tension.wulff_shape(ISO, 64)
    L1 = tension.wulff_shape(PNorm(1), 64)
    dt = time.perf_counter() - t0
    e1 = abs(K.area - 64 * math.tan(math.pi / 64))
    e2 = abs(L1.area - 4.0)
    ok = e1 <= 1e-9 and e2 <= 1e-9 and dt < 1.0
    verdict(1, ok, f"64-gon area error {e1:.2e}, l1 square area error {e2:.2e}, {dt:.3f} s")


# 2 -------------------------------------------------------------------------
def _sampled_ellipse():
    th = 2 * math.pi * np.arange(24) / 24
    d = np.column_stack([np.cos(th), np.sin(th)])
    return SampledSupport(tuple(map(tuple, d)), tuple(np.hypot(1.5 * d[:, 0], d[:, 1])))


EQUALITY_MODELS = [ISO, Isotropic(3.0), PNorm(1), PNorm(2.5), PNorm(math.inf),
                   Crystalline(((1, 0), (0, 1), (-1, 0), (0, -1))),
                   Crystalline(((1, 0), (0, 2), (-1, 1), (-0.5, -1))),
                   _sampled_ellipse()]


def test_c02_equality_case(verdict):
    worst_rel, worst_def = 0.0, 0.0
    for f in EQUALITY_MODELS:
        K = tension.wulff_shape(f, 256)
        F = energy.surface_energy(K, f)
        worst_rel = max(worst_rel, abs(F - 2 * K.area) / (2 * K.area))
        worst_def = max(worst_def, energy.deficit(K, f, K=K).deficit)
    ok = worst_rel <= 1e-6 and worst_def <= 1e-6
    verdict(2, ok, f"{len(EQUALITY_MODELS)} models: max |F(K)-2|K||/2|K| = {worst_rel:.2e}, "
                   f"max deficit = {worst_def:.2e}")


# 3 -------------------------------------------------------------------------
def test_c03_isoperimetric_optimum(verdict):
    t0 = time.perf_counter()
    res = optimize.minimize(optimize.MinimizeConfig(mass=math.pi, tension=ISO, potential=Zero(),
                                                    restarts=8))
    dt = time.perf_counter() - t0
    asym, _ = energy.asymmetry(res.shape, _disk(math.pi))
    ferr = abs(res.report.surface - 2 * math.pi) / (2 * math.pi)
    ok = asym <= 0.02 and ferr <= 0.01 and dt < 60
    verdict(3, ok, f"asymmetry {asym:.2e}, F rel. error {ferr:.2e}, {dt:.1f} s")


# 4 -------------------------------------------------------------------------
def test_c04_deficit_spot_value(verdict):
    d = energy.deficit(rectangle(0, 0, 1, 1), ISO).deficit
    target = 4 / (2 * math.sqrt(math.pi)) - 1
    verdict(4, abs(d - target) <= 1e-3, f"deficit {d:.6f} vs {target:.6f}")


# 5 -------------------------------------------------------------------------
def test_c05_counterexample_audit(verdict):
    g = Counterexample()
    rep = potential.hessian_audit(g, "-2:2:0.25")
    pts = rep.grid
    assert not np.any(pts[:, 1] == 0.0)
    x, y = pts[:, 0], pts[:, 1]
    lower = y < 0
    # closed forms written out here, independent of the model code
    det_cf = 12 * x**2 * y * (1 - y)
    tr_cf = 2 * (1 - y + y**2 + x**2)
    dy_cf = x**2 * (-1 + 2 * y)

    def rel(a, b):
        return np.abs(a - b) / np.maximum(np.abs(b), 1.0)

    e_det = rel(rep.fd_det[lower], det_cf[lower]).max()
    e_tr = rel(rep.fd_trace[lower], tr_cf[lower]).max()
    e_dy = rel(rep.fd_gradient[lower, 1], dy_cf[lower]).max()
    e_all = rep.worst_rel_error  # both branches against the model's closed forms
    signs = rep.sign_summary["y<0,x!=0"]
    ok = max(e_det, e_tr, e_dy, e_all) <= 1e-4 and signs["total"] > 0
    verdict(5, ok, f"{len(pts)} points (seam excluded: {rep.excluded}); max rel err det {e_det:.1e}, "
                   f"trace {e_tr:.1e}, d_y {e_dy:.1e}, all {e_all:.1e}; "
                   f"y<0,x!=0: det<0 at {signs['det<0']}/{signs['total']} points (recorded)")


# 6 -------------------------------------------------------------------------
def test_c06_nonexistence_probe(verdict):
    t0 = time.perf_counter()
    esc = optimize.nonexistence_probe(Counterexample(), ISO, 1.0, budget=3, R0=4.0)
    dt = time.perf_counter() - t0
    E = esc.energies
    cy = [c[1] for c in esc.centroids]
    dec = all(b < a for a, b in zip(E, E[1:]))
    inc = all(b > a for a, b in zip(cy, cy[1:]))
    ctrl = optimize.nonexistence_probe(PowerRadial(2), ISO, math.pi, budget=3, R0=4.0)
    ok = (esc.radii == [4.0, 8.0, 16.0] and dec and inc and esc.verdict == "escape detected"
          and ctrl.verdict == "stable" and dt < 300)
    verdict(6, ok, f"R={esc.radii} energies {[round(e, 5) for e in E]} centroid y "
                   f"{[round(c, 3) for c in cy]} -> '{esc.verdict}' in {dt:.1f} s; "
                   f"PowerRadial(2) -> '{ctrl.verdict}'")


# 7 -------------------------------------------------------------------------
def test_c07_sessile_drop(verdict):
    energies, defects, floors = [], [], []
    for seed in (0, 1, 2):
        res = optimize.minimize(optimize.MinimizeConfig(
            mass=math.pi, tension=ISO, potential=LinearGravity(0.5), restarts=4, seed=seed))
        energies.append(res.report.total)
        defects.append(res.convexity.defect)
        floors.append(float(res.shape.all_vertices()[:, 1].min()))
    spread = (max(energies) - min(energies)) / min(energies)
    ok = max(defects) <= 1e-2 and max(abs(f) for f in floors) <= 1e-2 and spread <= 5e-3
    verdict(7, ok, f"seeds 0-2: energies {[round(e, 6) for e in energies]} (spread {spread:.1e}), "
                   f"max defect {max(defects):.1e}, max floor gap {max(abs(f) for f in floors):.1e}")


# 8 -------------------------------------------------------------------------
def test_c08_radial_convex_potential(verdict):
    rep = analysis.critical_mass_scan(ISO, PowerRadial(2), [0.5, 1.0, 2.0, 4.0])
    defects = [r["convexity_defect"] for r in rep.rows]
    proxies = [r["uniqueness_proxy"] for r in rep.rows]
    ok = max(defects) <= 1e-2 and max(proxies) <= 0.05 and rep.critical_mass_estimate is None
    verdict(8, ok, f"defects {[f'{d:.1e}' for d in defects]}, proxies {[f'{p:.1e}' for p in proxies]}, "
                   f"critical mass {rep.critical_mass_estimate}")


# 9 -------------------------------------------------------------------------
def test_c09_stability_fit(verdict):
    fit = analysis.stability_fit(ISO)
    verdict(9, abs(fit.slope - 2.0) <= 0.3,
            f"log deficit vs log asymmetry slope {fit.slope:.3f} over {len(fit.points)} ellipses")


# 10 ------------------------------------------------------------------------
def _random_convex(rng, spread=2.0):
    pts = rng.uniform(-1, 1, size=(int(rng.integers(3, 10)), 2)) * rng.uniform(0.3, 1.5, 2)
    return convex_hull(pts + rng.uniform(-spread, spread, 2))


STRUCT_TENSIONS = [ISO, PNorm(1), PNorm(3), PNorm(math.inf),
                   Crystalline(((1, 0), (0, 2), (-1, 1), (-0.5, -1)))]


def _mass_cut(E, direction, m):
    """E intersected with {<x, d> <= s}, s chosen so the area is m."""
    geom = E.to_shapely()
    proj = E.all_vertices() @ direction
    lo, hi = proj.min(), proj.max()
    big = 10 * (1 + np.abs(E.all_vertices()).max())
    perp = np.array([-direction[1], direction[0]])

    def cut(s):
        c = s * direction
        hp = shapely.Polygon([c + big * perp, c - big * perp, c - big * perp - big * direction,
                              c + big * perp - big * direction])
        return shapely.intersection(geom, hp)

    for _ in range(100):
        mid = 0.5 * (lo + hi)
        if cut(mid).area < m:
            lo = mid
        else:
            hi = mid
    return cut(0.5 * (lo + hi))


def test_c10_structural_checks(verdict):
    rng = np.random.default_rng(2024)
    # inclusion-exclusion on random convex pairs
    ie = min(energy.inclusion_exclusion_check(_random_convex(rng), _random_convex(rng),
                                              STRUCT_TENSIONS[k % 5]).slack
             for k in range(500))
    # hull comparison on unions whose closure is connected
    hull_gap, n_hull = -math.inf, 0
    while n_hull < 200:
        A, B = _random_convex(rng, 0.5), _random_convex(rng, 0.5)
        u = shapely.union(A.to_shapely(), B.to_shapely())
        if u.geom_type != "Polygon":
            continue
        f = STRUCT_TENSIONS[n_hull % 5]
        H = convex_hull(np.vstack([A.vertices, B.vertices]))
        hull_gap = max(hull_gap, energy.surface_energy(H, f) - energy.geometry_energy(u, f))
        n_hull += 1
    # truncation: exact mass and bathtub dominance over same-mass subsets
    cases = [(regular_polygon(64, 2.0, (0.3, 2.5)), PowerRadial(2), 3.0),
             (rectangle(-1, 0, 2, 2), LinearGravity(1), 2.5),
             (regular_polygon(7, 1.5, (0.5, 1.0)), Counterexample(), 2.0),
             (regular_polygon(48, 1.0, (2, 2)), Radial(Profile("power", 1.0, 1.5)), 1.2)]
    mass_err, bath_gap, n_sub = 0.0, -math.inf, 0
    for E, g, m in cases:
        E = PolygonSet.of(E)
        tr = energy.truncate_to_mass(E, g, m)
        mass_err = max(mass_err, abs(tr.mass - m) / m)
        G_tr = energy.potential_energy(tr.shape, g).value
        for _ in range(50):
            th = rng.uniform(0, 2 * math.pi)
            S = PolygonSet.from_shapely(_mass_cut(E, np.array([math.cos(th), math.sin(th)]), m))
            bath_gap = max(bath_gap, G_tr - energy.potential_energy(S, g).value)
            n_sub += 1
    ok = ie >= -1e-9 and hull_gap <= 1e-9 and mass_err <= 1e-6 and bath_gap <= 1e-9
    verdict(10, ok, f"min IE slack {ie:.1e} (500 pairs); max F(conv)-F(union) {hull_gap:.1e} "
                    f"(200 unions); truncation mass err {mass_err:.1e}, max G(trunc)-G(S) "
                    f"{bath_gap:.1e} ({n_sub} subsets)")


# 11 ------------------------------------------------------------------------
GRAD_TENSIONS = [ISO, PNorm(3), PNorm(1.5),
                 Crystalline(((1, 0), (0, 1), (-1, 0), (0, -1))).smoothed(0.05)]
GRAD_POTENTIALS = [Zero(), PowerRadial(2), PowerRadial(3), LinearGravity(0.7), Counterexample(),
                   Radial(Profile("tabulated", xs=(0, 1, 2, 4, 8), ys=(0, 0.5, 3, 10, 20)))]


def _fd(rings, f, g, h=1e-6):
    def total(rs):
        E = PolygonSet([Polygon(r, validate=False) for r in rs], validate=False)
        return energy.free_energy(E, f, g, quad_order=10).total

    out = []
    for p in range(len(rings)):
        gr = np.zeros_like(rings[p])
        for i in range(len(rings[p])):
            for k in range(2):
                up = [r.copy() for r in rings]
                dn = [r.copy() for r in rings]
                up[p][i, k] += h
                dn[p][i, k] -= h
                gr[i, k] = (total(up) - total(dn)) / (2 * h)
        out.append(gr)
    return np.concatenate([a.ravel() for a in out])


def test_c11_gradient_correctness(verdict):
    rng = np.random.default_rng(11)
    worst = 0.0
    for trial in range(20):
        f = GRAD_TENSIONS[trial % len(GRAD_TENSIONS)]
        g = GRAD_POTENTIALS[trial % len(GRAD_POTENTIALS)]
        rings = []
        for part in range(1 + trial % 2):
            n = int(rng.integers(6, 16))
            th = np.sort(rng.uniform(0, 2 * math.pi, n))
            r = rng.uniform(0.6, 1.2, n)
            # upper half-plane keeps every model smooth and finite
            c = np.array([3.0 * part + rng.uniform(-0.5, 0.5), rng.uniform(1.5, 2.5)])
            rings.append(c + np.column_stack([r * np.cos(th), r * np.sin(th)]))
        E = PolygonSet([Polygon(r) for r in rings])
        rings = [p.vertices.copy() for p in E.parts]
        an = optimize.shape_gradient(E, f, g).flat()
        fd = _fd(rings, f, g)
        worst = max(worst, np.linalg.norm(an - fd) / np.linalg.norm(fd))
    verdict(11, worst <= 1e-4, f"20 configurations, max ||analytic - fd|| / ||fd|| = {worst:.1e}")


# 12 ------------------------------------------------------------------------
SQUARE = "[[0,0],[1,0],[1,1],[0,1]]"
COMMANDS = {
    "wulff": ["--tension", "pnorm:3", "--dirs", "128"],
    "energy": ["--shape", SQUARE, "--potential", "counterexample"],
    "minimize": ["--mass", "1.0", "--potential", "linear-gravity:0.5", "--restarts", "2",
                 "--max-parts", "2", "--vertices-per-part", "32", "--max-iters", "150"],
    "truncate": ["--shape", SQUARE, "--potential", "power-radial:2", "--mass", "0.4"],
    "deficit": ["--shape", SQUARE, "--tension", "pnorm:1"],
    "audit-hessian": ["--potential", "counterexample", "--grid", "-2:2:0.5"],
    "nonexistence": ["--potential", "counterexample", "--mass", "1", "--budget", "2",
                     "--restarts", "1"],
    "scan": ["--potential", "power-radial:2", "--masses", "0.5,1", "--restarts", "2"],
    "modulus": ["--mass", "1", "--epsilon", "0.1", "--samples", "40"],
    "container": ["--container", "0,0;2,0;2,2;0,2", "--mass", "3", "--restarts", "1"],
}


def test_c12_determinism(tmp_path, verdict):
    same, codes = [], {}
    for cmd, args in COMMANDS.items():
        texts = []
        for k in range(2):
            out = tmp_path / f"{cmd}-{k}"
            codes[cmd] = cli.run([cmd, *args, "--seed", "7", "--out", str(out)])
            stem = cmd.replace("-", "_")
            texts.append((out / f"{stem}.json").read_bytes() if codes[cmd] == 0 else b"")
            man = json.loads((out / "manifest.json").read_text()) if codes[cmd] == 0 else {}
            texts[-1] += json.dumps(man.get("config_hash")).encode()
        if codes[cmd] == 0 and texts[0] == texts[1]:
            same.append(cmd)
    ok = len(same) == len(COMMANDS)
    verdict(12, ok, f"byte-identical reports for {len(same)}/{len(COMMANDS)} subcommands"
                    + ("" if ok else f"; differing or failing: {sorted(set(COMMANDS) - set(same))}"))
