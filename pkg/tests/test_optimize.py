import math

import numpy as np
import pytest

from anisocap import optimize
from anisocap.energy import deficit, free_energy
from anisocap.errors import ConfigError, InfeasibleError
from anisocap.geom2d import Polygon, PolygonSet, rectangle, regular_polygon, symmetric_difference_area
from anisocap.optimize import MinimizeConfig
from anisocap.potential import Counterexample, DoubleWell, LinearGravity, PowerRadial, Zero
from anisocap.tension import Isotropic, PNorm

ISO = Isotropic(1.0)


def _fd_gradient(xy, f, g, h=1e-6):
    def energy(z):
        return free_energy(PolygonSet([Polygon(z, validate=False)]), f, g, quad_order=10).total

    out = np.zeros_like(xy)
    for i in range(len(xy)):
        for k in range(2):
            zp, zm = xy.copy(), xy.copy()
            zp[i, k] += h
            zm[i, k] -= h
            out[i, k] = (energy(zp) - energy(zm)) / (2 * h)
    return out


def test_square_surface_gradient_points_along_diagonals():
    G = optimize.shape_gradient(rectangle(-1, -1, 1, 1), ISO, Zero()).surface[0]
    for v, gv in zip(rectangle(-1, -1, 1, 1).vertices, G):
        # dF/dv for perimeter: the sum of the two unit edge directions into v
        assert np.linalg.norm(gv) == pytest.approx(math.sqrt(2))
        assert gv == pytest.approx(np.sign(v) * 1.0)


def test_gravity_gradient_matches_differences():
    rng = np.random.default_rng(4)
    th = np.sort(rng.uniform(0, 2 * math.pi, 9))
    xy = np.column_stack([np.cos(th), 2 + np.sin(th)])
    G = optimize.shape_gradient(Polygon(xy), ISO, LinearGravity(0.8)).potential[0]
    fd = _fd_gradient(xy, ISO, LinearGravity(0.8)) - _fd_gradient(xy, ISO, Zero())
    assert np.linalg.norm(G - fd) / np.linalg.norm(fd) <= 1e-4


def test_gradient_across_potential_seam():
    xy = regular_polygon(11, 1.0, (0.1, 0.2)).vertices.copy()
    g = DoubleWell((-2, 0), (2, 0), 2.0)
    G = optimize.shape_gradient(Polygon(xy), PNorm(3), g).total[0]
    fd = _fd_gradient(xy, PNorm(3), g)
    assert np.linalg.norm(G - fd) / np.linalg.norm(fd) <= 1e-4


def test_wulff_polygon_is_stationary_under_area_constraint():
    P = regular_polygon(64, 1.0)
    G = optimize.shape_gradient(P, ISO, Zero()).flat()
    a = optimize._area_grad(P.vertices).ravel()
    constrained = G - (G @ a) / (a @ a) * a
    assert np.linalg.norm(constrained) <= 1e-6


def test_boundary_vertices_are_flagged_and_do_not_push_out():
    E = rectangle(0, 0, 1, 1)
    sg = optimize.shape_gradient(E, ISO, LinearGravity(1))
    flags = sg.boundary_flags[0]
    assert flags.sum() == 2
    # a descent move (-grad) must not push floor vertices below y = 0
    assert np.all(-sg.total[0][flags][:, 1] >= -1e-12)


def test_config_validation():
    with pytest.raises(ConfigError):
        MinimizeConfig(mass=-1, tension=ISO, potential=Zero())
    with pytest.raises(ConfigError):
        MinimizeConfig(mass=1, tension=ISO, potential=Zero(), max_parts=0)


def test_minimize_small_isoperimetric_run():
    cfg = MinimizeConfig(mass=math.pi, tension=ISO, potential=Zero(), restarts=2, max_parts=1,
                         vertices_per_part=48)
    res = optimize.minimize(cfg)
    assert res.report.mass == pytest.approx(math.pi, rel=1e-6)
    assert res.report.surface == pytest.approx(2 * math.pi, rel=0.01)
    assert res.component_count == 1 and res.report.feasible
    # accepted iterations never raise the energy
    energies = [e for _, _, e in res.drift_trace]
    assert all(b <= a + 1e-12 for a, b in zip(energies, energies[1:]))


def test_minimize_l1_tension_finds_square():
    cfg = MinimizeConfig(mass=4.0, tension=PNorm(1), potential=Zero(), restarts=1, max_parts=1,
                         vertices_per_part=48)
    res = optimize.minimize(cfg)
    assert res.report.surface == pytest.approx(8.0, rel=0.02)
    assert res.diagnostics["smoothed_descent"]


def test_minimize_is_deterministic_and_thread_independent():
    base = dict(mass=1.0, tension=ISO, potential=PowerRadial(2), restarts=2, max_parts=2,
                vertices_per_part=32, max_iters=80)
    a = optimize.minimize(MinimizeConfig(**base)).to_dict()
    b = optimize.minimize(MinimizeConfig(**base)).to_dict()
    c = optimize.minimize(MinimizeConfig(**base, threads=2)).to_dict()
    assert a == b == c


def test_mass_preserved_for_every_run():
    cfg = MinimizeConfig(mass=2.0, tension=ISO, potential=LinearGravity(1), restarts=2, max_parts=2,
                         vertices_per_part=32, max_iters=120)
    res = optimize.minimize(cfg)
    for run in res.runs:
        assert run.shape.area == pytest.approx(2.0, rel=1e-6)
        assert np.all(run.shape.all_vertices()[:, 1] >= -1e-12)
        assert len(run.shape.parts) <= 2


def test_dilation_merge_examples():
    r = optimize.dilation_merge(regular_polygon(4, math.sqrt(0.5)), regular_polygon(4, math.sqrt(0.105)), ISO)
    assert r.h == pytest.approx(1.1)
    assert r.r == pytest.approx(math.sqrt(0.21))
    E1 = rectangle(0, 0, 1, 1)
    E2 = rectangle(5, 5, 5.1, 5.1)
    r = optimize.dilation_merge(E1, E2, ISO)
    assert r.energy_after == pytest.approx(4 * math.sqrt(1.01))
    assert r.energy_before == pytest.approx(4.4)
    assert r.improves and not r.collision
    tiny = optimize.dilation_merge(E1, rectangle(5, 5, 5.001, 5.001), ISO)
    assert tiny.h == pytest.approx(1.0, abs=1e-6)
    hit = optimize.dilation_merge(E1, E2, ISO, others=[rectangle(1.001, 0, 2, 1)])
    assert hit.collision
    with pytest.raises(ValueError):
        optimize.dilation_merge(E2, E1, ISO)


def test_largest_inscribed_wulff():
    s, c, area = optimize.largest_inscribed_wulff(rectangle(0, 0, 2, 2), ISO)
    assert area == pytest.approx(math.pi, rel=1e-3)
    assert c == pytest.approx((1, 1), abs=1e-6)


def test_container_examples():
    A = rectangle(0, 0, 2, 2)
    full = optimize.container_minimize(A, ISO, 4.0)
    assert symmetric_difference_area(full.shape, A) == pytest.approx(0, abs=1e-12)
    with pytest.raises(InfeasibleError):
        optimize.container_minimize(A, ISO, 5.0)
    m = math.pi * 0.5
    res = optimize.container_minimize(A, ISO, m, restarts=1, vertices_per_part=48)
    assert not res.diagnostics["mass_exceeds_inscribed_wulff"]
    assert res.report.surface == pytest.approx(2 * math.sqrt(math.pi * m), rel=0.02)
    v = res.shape.all_vertices()
    assert v.min() >= -1e-9 and v.max() <= 2 + 1e-9


def test_probe_controls_are_stable():
    r = optimize.nonexistence_probe(Zero(), ISO, math.pi, budget=2, restarts=1, vertices_per_part=32)
    assert r.verdict == "stable"
    assert len(r.radii) == 2


def test_probe_direction_auto_detected_for_counterexample():
    r = optimize.nonexistence_probe(Counterexample(), ISO, 1.0, budget=2, restarts=1,
                                    vertices_per_part=32)
    assert r.direction == pytest.approx([0, 1], abs=0.2)
    assert r.energies[1] < r.energies[0]
