import math

import numpy as np
import pytest

from anisocap import tension
from anisocap.energy import surface_energy
from anisocap.errors import DegenerateInputError
from anisocap.tension import Crystalline, Isotropic, PNorm, SampledSupport

AXES = ((1, 0), (0, 1), (-1, 0), (0, -1))


def _hexagonal_sampled(smoothing=0.0):
    th = 2 * math.pi * np.arange(12) / 12
    d = np.column_stack([np.cos(th), np.sin(th)])
    # support function of an ellipse with semi-axes 1.5 and 1: convex samples
    vals = np.hypot(1.5 * d[:, 0], d[:, 1])
    return SampledSupport(tuple(map(tuple, d)), tuple(vals), smoothing)


ALL_MODELS = [
    Isotropic(1.0),
    Isotropic(2.5),
    PNorm(1.0),
    PNorm(3.0),
    PNorm(math.inf),
    Crystalline(AXES),
    Crystalline(((1, 0), (0, 2), (-1, 1), (-0.5, -1))),  # non-even
    _hexagonal_sampled(),
    _hexagonal_sampled(0.05),
]


def test_eval_examples():
    assert Isotropic(2)((0, 3)) == pytest.approx(6)
    assert PNorm(1)((1, 1)) == pytest.approx(2)
    assert Crystalline(AXES)((0.6, 0.8)) == pytest.approx(0.8)
    assert Isotropic(1)((0, 0)) == 0.0


def test_edge_energy_examples():
    assert tension.edge_energy(Isotropic(1), (0, 2)) == pytest.approx(2)
    assert tension.edge_energy(PNorm(1), (1, 1)) == pytest.approx(2)
    assert tension.edge_energy(Crystalline(AXES), (3, 0)) == pytest.approx(3)
    with pytest.raises(DegenerateInputError):
        tension.edge_energy(Isotropic(1), (0, 0))


def test_wulff_examples():
    K = tension.wulff_shape(Isotropic(1), 64)
    assert len(K) == 64
    assert K.area == pytest.approx(64 * math.tan(math.pi / 64), abs=1e-9)
    # dual-norm oracle: the l1 tension has the max-norm unit ball as Wulff body
    assert tension.wulff_shape(PNorm(1), 64).area == pytest.approx(4.0, abs=1e-9)
    assert tension.wulff_shape(PNorm(math.inf), 64).area == pytest.approx(2.0, abs=1e-9)
    assert tension.wulff_shape(Crystalline(AXES)).area == pytest.approx(2.0, abs=1e-12)


def test_wulff_support_bounded_by_tension():
    for f in ALL_MODELS:
        K = tension.wulff_shape(f, 128)
        th = np.linspace(0, 2 * math.pi, 333)
        dirs = np.column_stack([np.cos(th), np.sin(th)])
        h = np.max(dirs @ K.vertices.T, axis=1)
        if isinstance(f, (Crystalline, SampledSupport)) and not f.smooth:
            assert np.all(h <= f(dirs) + 1e-9)
        else:
            sampled = 2 * math.pi * np.arange(128) / 128
            sd = np.column_stack([np.cos(sampled), np.sin(sampled)])
            assert np.all(np.max(sd @ K.vertices.T, axis=1) <= f(sd) + 1e-9)


def test_isotropic_wulff_converges_at_second_order():
    ns = np.array([32, 64, 128, 256, 512])
    err = np.array([tension.wulff_shape(Isotropic(1), int(n)).area - math.pi for n in ns])
    order = -np.polyfit(np.log(ns), np.log(err), 1)[0]
    assert 1.8 <= order <= 2.2


@pytest.mark.parametrize("f", ALL_MODELS, ids=lambda f: f.descriptor()["model"])
def test_equality_case(f):
    K = tension.wulff_shape(f, 256)
    assert surface_energy(K, f) == pytest.approx(2 * K.area, rel=1e-6)


@pytest.mark.parametrize("f", ALL_MODELS, ids=lambda f: f.descriptor()["model"])
def test_homogeneity_convexity_positivity(f):
    rng = np.random.default_rng(7)
    u = rng.normal(size=(300, 2))
    v = rng.normal(size=(300, 2))
    t = rng.uniform(0.01, 50, size=300)
    assert np.allclose(f(u * t[:, None]), t * f(u), rtol=1e-12, atol=0)
    assert np.all(f(0.5 * (u + v)) <= 0.5 * (f(u) + f(v)) + 1e-10)
    th = np.linspace(0, 2 * math.pi, 720, endpoint=False)
    assert np.all(f(np.column_stack([np.cos(th), np.sin(th)])) > 0)


def test_non_convex_samples_rejected():
    th = 2 * math.pi * np.arange(8) / 8
    d = np.column_stack([np.cos(th), np.sin(th)])
    vals = np.ones(8)
    vals[0] = 3.0  # spike: not a support function
    with pytest.raises(ValueError):
        SampledSupport(tuple(map(tuple, d)), tuple(vals))


def test_sampled_from_isotropic_samples_is_regular_polygon():
    th = 2 * math.pi * np.arange(16) / 16
    d = np.column_stack([np.cos(th), np.sin(th)])
    f = SampledSupport(tuple(map(tuple, d)), tuple(np.ones(16)))
    assert tension.wulff_shape(f).area == pytest.approx(16 * math.tan(math.pi / 16))


def test_smoothed_crystalline_is_close_and_smooth():
    f = Crystalline(AXES)
    fs = f.smoothed(0.02)
    assert fs.smooth and not f.smooth
    th = np.linspace(0, 2 * math.pi, 100)
    d = np.column_stack([np.cos(th), np.sin(th)])
    assert np.max(np.abs(fs(d) - f(d))) < 0.03


@pytest.mark.parametrize("f", ALL_MODELS, ids=lambda f: f.descriptor()["model"])
def test_descriptor_roundtrip(f):
    g = tension.from_descriptor(f.descriptor())
    v = np.random.default_rng(0).normal(size=(20, 2))
    assert np.allclose(g(v), f(v))


def test_parse_short_forms():
    assert tension.parse("isotropic:2")((1, 0)) == 2
    assert tension.parse("pnorm:inf")((1, 2)) == 2
    assert tension.parse("crystalline:1,0;0,1;-1,0;0,-1")((0.6, 0.8)) == pytest.approx(0.8)
    with pytest.raises(ValueError):
        tension.parse("nonsense")
