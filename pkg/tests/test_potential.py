import math

import numpy as np
import pytest

from anisocap import potential
from anisocap.errors import InfeasibleError
from anisocap.geom2d import convexity_report, rectangle, regular_polygon
from anisocap.potential import (
    Container,
    Counterexample,
    CounterexampleStrip,
    DoubleWell,
    Gravity,
    LinearGravity,
    PowerRadial,
    Profile,
    Radial,
    Zero,
)

CE = Counterexample()


def test_counterexample_values():
    assert CE((1, 0)) == pytest.approx(1.0)
    assert CE((1, 1)) == pytest.approx(0.5)
    assert CE((2, -1)) == pytest.approx(12.0)


def test_counterexample_branches_match_to_first_order_on_seam():
    x = np.linspace(-3, 3, 61)
    pts = np.column_stack([x, np.zeros_like(x)])
    assert np.allclose(CE.value(pts), x**2, atol=1e-10)
    lower = np.column_stack([x, np.full_like(x, -1e-7)])
    upper = np.column_stack([x, np.full_like(x, 1e-7)])
    assert np.allclose(CE.grad(lower)[:, 1], -(x**2), atol=1e-6)
    assert np.allclose(CE.grad(upper)[:, 1], -(x**2), atol=1e-6)


def test_infinite_regions():
    assert LinearGravity(9.8)((5, -0.1)) == math.inf
    s = CounterexampleStrip(0.5)
    assert s((0.6, 0.0)) == math.inf and math.isfinite(s((0.4, 0.0)))
    box = Container(rectangle(0, 0, 2, 2))
    assert box((1, 1)) == 0.0 and box((3, 1)) == math.inf


def test_gradient_examples():
    assert potential.gradient(CE, (1, 1)).vector[1] == pytest.approx(-0.25)
    assert potential.gradient(Radial(Profile("power", 1.0, 2.0)), (1, 2)).vector == pytest.approx([2, 4])
    for x in [(0, 0.5), (3, 7)]:
        assert potential.gradient(LinearGravity(0.7), x).vector == pytest.approx([0, 0.7])


def test_gradient_flags_seam_and_boundary():
    assert potential.gradient(CE, (1, 0)).nonsmooth
    assert potential.gradient(LinearGravity(1), (0, 0)).nonsmooth
    assert not potential.gradient(CE, (1, 0.5)).nonsmooth


MODELS = [
    Zero(),
    LinearGravity(0.5),
    Gravity(Profile("power", 2.0, 1.5)),
    Radial(Profile("tabulated", xs=(0, 1, 2, 4), ys=(0, 0.5, 3, 10))),
    PowerRadial(2.0),
    PowerRadial(3.0),
    CE,
    DoubleWell((-2, 0), (2, 0), 2.0),
]


@pytest.mark.parametrize("g", MODELS, ids=lambda g: g.descriptor()["model"])
def test_grad_matches_central_differences(g):
    rng = np.random.default_rng(3)
    pts = rng.uniform(-3, 3, size=(200, 2))
    pts[:, 1] = np.abs(pts[:, 1]) + 0.05  # stay above any floor
    pts = pts[~g.nonsmooth(pts, tol=1e-3)]
    h = 1e-6 * (1 + np.hypot(*pts.T))
    fd = np.column_stack([
        (g.value(pts + h[:, None] * e) - g.value(pts - h[:, None] * e)) / (2 * h)
        for e in (np.array([1.0, 0]), np.array([0, 1.0]))
    ])
    an = g.grad(pts)
    scale = np.maximum(np.abs(an), 1.0)
    assert np.max(np.abs(fd - an) / scale) <= 1e-5


def test_radial_gradient_is_parallel_to_position():
    rng = np.random.default_rng(5)
    pts = rng.uniform(-3, 3, size=(100, 2))
    for g in (Radial(Profile("power", 1.0, 3.0)), PowerRadial(1.5)):
        gr = g.grad(pts)
        assert np.max(np.abs(gr[:, 0] * pts[:, 1] - gr[:, 1] * pts[:, 0])) <= 1e-10


def test_nonnegative_and_zero_at_origin():
    rng = np.random.default_rng(9)
    pts = rng.uniform(-4, 4, size=(500, 2))
    for g in MODELS:
        v = g.value(pts)
        assert np.all(v[np.isfinite(v)] >= 0)
        if g.feasible(np.zeros((1, 2)))[0] and not isinstance(g, DoubleWell):
            assert g((0, 0)) == 0.0


def test_sublevel_examples():
    disk = potential.sublevel_polygon(PowerRadial(2), 1.0, (-2, -2, 2, 2), 256)
    assert disk.area == pytest.approx(math.pi, rel=0.02)
    strip = potential.sublevel_polygon(LinearGravity(1), 2.0, (-1, -1, 1, 3), 256)
    assert strip.area == pytest.approx(4.0, rel=0.02)
    wells = potential.sublevel_polygon(DoubleWell((-2, 0), (2, 0), 2.0), 1.0, (-4, -2, 4, 2), 256)
    assert len(wells) == 2
    assert wells.area == pytest.approx(2 * math.pi, rel=0.02)
    assert len(potential.sublevel_polygon(PowerRadial(2), -1.0, (-2, -2, 2, 2), 64)) == 0


@pytest.mark.parametrize("g,t,bbox", [
    (PowerRadial(2), 2.0, (-2, -2, 2, 2)),
    (LinearGravity(1), 1.5, (-1, -1, 1, 3)),
    (Container(regular_polygon(6, 1.5)), 0.5, (-2, -2, 2, 2)),
])
def test_convex_models_have_convex_sublevels(g, t, bbox):
    res = 128
    E = potential.sublevel_polygon(g, t, bbox, res)
    assert convexity_report(E).defect <= 10 / res


def test_hessian_audit_examples():
    rep = potential.hessian_audit(CE, [(1, -1), (1, 1)])
    assert rep.closed_form_det[0] == pytest.approx(-24)
    assert rep.closed_form_trace[0] == pytest.approx(8)
    assert rep.closed_form_det[1] == pytest.approx(0, abs=1e-12)
    assert rep.closed_form_trace[1] == pytest.approx(1.25)
    assert rep.worst_rel_error <= 1e-4
    z = potential.hessian_audit(Zero(), "-1:1:0.5")
    assert np.all(z.fd_hessian == 0) and np.all(z.fd_gradient == 0)


def test_hessian_audit_grid_excludes_seam_and_tallies_signs():
    rep = potential.hessian_audit(CE, "-2:2:0.25")
    assert not np.any(np.abs(rep.grid[:, 1]) < 1e-12)
    assert rep.worst_rel_error <= 1e-4
    neg = rep.sign_summary["y<0,x!=0"]
    assert neg["det<0"] == neg["total"] > 0


def test_counterexample_midpoint_sample():
    # endpoints (1,0) and (0,-2) against their midpoint
    assert CE((0.5, -1)) == pytest.approx(0.75)
    assert 0.5 * (CE((1, 0)) + CE((0, -2))) == pytest.approx(0.5)


def test_condition_iv_examples():
    r = potential.condition_iv_integral(rectangle(0, 0, 1, 1), LinearGravity(0.5))
    assert r.value == pytest.approx([0, 0.5])
    r = potential.condition_iv_integral(rectangle(1, 1, 2, 2), PowerRadial(2))
    assert r.value == pytest.approx([3, 3])
    assert potential.condition_iv_integral(rectangle(3, 3, 4, 5), Zero()).value == pytest.approx([0, 0])
    with pytest.raises(InfeasibleError):
        potential.condition_iv_integral(rectangle(0, -1, 1, 1), LinearGravity(1))


@pytest.mark.parametrize("g", MODELS + [CounterexampleStrip(0.3), Container(rectangle(0, 0, 1, 1))],
                         ids=lambda g: g.descriptor()["model"])
def test_descriptor_roundtrip(g):
    h = potential.from_descriptor(g.descriptor())
    pts = np.random.default_rng(1).uniform(-2, 2, size=(50, 2))
    assert np.array_equal(np.isinf(h.value(pts)), np.isinf(g.value(pts)))
    fin = np.isfinite(g.value(pts))
    assert np.allclose(h.value(pts)[fin], g.value(pts)[fin])


def test_parse_short_forms():
    assert isinstance(potential.parse("counterexample"), Counterexample)
    assert potential.parse("linear_gravity:2")((0, 1)) == 2
    assert potential.parse("container:0,0;1,0;1,1;0,1")((0.5, 0.5)) == 0
    with pytest.raises(ValueError):
        potential.parse("nope")
