import math

import numpy as np
import pytest

from anisocap import kernels
from anisocap.geom2d import regular_polygon
from anisocap.tension import Crystalline, Isotropic, PNorm

BACKENDS = kernels.backends()
needs_both = pytest.mark.skipif("cython" not in BACKENDS, reason="compiled extension not built")


def test_backend_selected():
    assert kernels.BACKEND in BACKENDS


def _star(n=40, seed=0):
    rng = np.random.default_rng(seed)
    th = np.sort(rng.uniform(0, 2 * math.pi, n))
    r = rng.uniform(0.5, 1.5, n)
    return np.ascontiguousarray(np.column_stack([r * np.cos(th), r * np.sin(th)]))


TENSION_SPECS = [
    Isotropic(1.5).kernel_spec(),
    PNorm(1).kernel_spec(),
    PNorm(3.5).kernel_spec(),
    PNorm(math.inf).kernel_spec(),
    Crystalline(((1, 0), (0, 1), (-1, 0), (0, -1))).kernel_spec(),
    Crystalline(((1, 0), (0, 1), (-1, 0), (0, -1))).smoothed(0.05).kernel_spec(),
]


@needs_both
@pytest.mark.parametrize("spec", TENSION_SPECS, ids=lambda s: f"kind{s[0]}")
def test_tension_kernels_agree(spec):
    py, cy = BACKENDS["python"], BACKENDS["cython"]
    v = np.ascontiguousarray(np.random.default_rng(1).normal(size=(500, 2)))
    a, ga = py.tension_values(v, *spec)
    b, gb = cy.tension_values(v, *spec)
    # same formulas, different evaluation order: agreement to rounding
    assert np.allclose(a, b, rtol=1e-12, atol=1e-12)
    assert np.allclose(ga, gb, rtol=1e-10, atol=1e-10)
    xy = _star()
    Fa, Ga = py.tension_energy_grad(xy, *spec, True)
    Fb, Gb = cy.tension_energy_grad(xy, *spec, True)
    assert Fa == pytest.approx(Fb, rel=1e-12)
    assert np.allclose(Ga, Gb, rtol=1e-10, atol=1e-10)


@needs_both
def test_geometry_kernels_agree():
    py, cy = BACKENDS["python"], BACKENDS["cython"]
    for seed in range(10):
        xy = _star(30, seed)
        assert py.polygon_area(xy) == pytest.approx(cy.polygon_area(xy), rel=1e-13)
        ta = np.asarray(py.ear_clip(xy))
        tb = np.asarray(cy.ear_clip(xy))
        # both triangulations cover the polygon exactly
        for t in (ta, tb):
            tri = xy[t]
            u, w = tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0]
            a = 0.5 * np.abs(u[:, 0] * w[:, 1] - u[:, 1] * w[:, 0])
            assert a.sum() == pytest.approx(py.polygon_area(xy), rel=1e-12)
        off = np.array([0, len(xy)])
        assert py.rings_intersect(xy, off, 0.0) == cy.rings_intersect(xy, off, 0.0) is False
    bow = np.array([[0, 0], [1, 1], [1, 0], [0, 1]], dtype=float)
    off = np.array([0, 4])
    assert py.rings_intersect(bow, off, 0.0) and cy.rings_intersect(bow, off, 0.0)
    two = np.vstack([_star(12, 1), _star(12, 2) + 0.3])
    off = np.array([0, 12, 24])
    assert bool(py.rings_intersect(two, off, 0.0)) == bool(cy.rings_intersect(two, off, 0.0))


@needs_both
def test_clip_halfplanes_agree():
    py, cy = BACKENDS["python"], BACKENDS["cython"]
    P = np.ascontiguousarray(regular_polygon(32, 2.0).vertices)
    rng = np.random.default_rng(3)
    nrm = rng.normal(size=(8, 2))
    nrm /= np.linalg.norm(nrm, axis=1, keepdims=True)
    nrm = np.ascontiguousarray(nrm)
    off = np.ascontiguousarray(rng.uniform(0.5, 1.5, 8))
    a = np.asarray(py.clip_halfplanes(P, nrm, off))
    b = np.asarray(cy.clip_halfplanes(P, nrm, off))
    assert a.shape == b.shape
    assert np.allclose(a, b, atol=1e-12)


def test_read_only_inputs_accepted():
    xy = _star()
    xy.setflags(write=False)
    assert kernels.polygon_area(xy) > 0
    kernels.tension_energy_grad(xy, *Isotropic(1).kernel_spec(), True)
