import math

import numpy as np
import pytest

from henonlab import core
from henonlab.errors import IndeterminacyError

from conftest import sample_bidisk


def fd_jacobian_det(f, x, h=1e-6):
    """Finite-difference determinant, independent of the symbolic value."""
    z, w = complex(x[0]), complex(x[1])
    fz = core.apply(f, (z + h, w))
    fz2 = core.apply(f, (z - h, w))
    fw = core.apply(f, (z, w + h))
    fw2 = core.apply(f, (z, w - h))
    dzz = (fz[0] - fz2[0]) / (2 * h)
    dwz = (fz[1] - fz2[1]) / (2 * h)
    dzw = (fw[0] - fw2[0]) / (2 * h)
    dww = (fw[1] - fw2[1]) / (2 * h)
    return dzz * dww - dzw * dwz


def test_compose_single_factor_degree_and_jacobian():
    f = core.compose([core.HenonFactor(a=0.1, p=(-1.0, 0.0, 1.0))])
    assert f.degree == 2
    assert abs(f.jacobian - (-0.01)) < 1e-15
    # independent finite-difference check of the determinant
    for x in [(0.3, 0.2), (1.0 + 0.5j, -0.2j), (-0.7, 0.9)]:
        assert abs(fd_jacobian_det(f, x) - f.jacobian) < 1e-6


def test_compose_two_factors():
    fac = core.HenonFactor(a=0.1, p=(0.0, 0.0, 1.0))
    f = core.compose([fac, fac])
    assert f.degree == 4
    assert abs(f.jacobian - 1e-4) < 1e-18
    assert abs(fd_jacobian_det(f, (0.4, -0.3)) - 1e-4) < 1e-7


def test_compose_rejects_linear_factor():
    with pytest.raises(ValueError):
        core.HenonFactor(a=0.1, p=(1.0, 2.0))


def test_compose_rejects_empty():
    with pytest.raises(ValueError):
        core.compose([])


def test_factor_invariants():
    with pytest.raises(ValueError):
        core.HenonFactor(a=0.0, p=(0.0, 0.0, 1.0))
    with pytest.raises(ValueError):
        core.HenonFactor(a=0.1, p=(0.0, 0.0, 1.0), b=(0.0, 0.0, 1.0))
    with pytest.raises(ValueError):
        core.HenonFactor(a=0.1, p=(1.0, 0.0, 0.0))
    # legal birational factor: deg b <= deg p - 1
    core.HenonFactor(a=0.1, p=(0.0, 0.0, 1.0), b=(0.0, 0.01))


def test_apply_examples():
    f = core.quadratic_map(-1.0, 0.1)
    assert core.apply(f, (1.0, 0.0)) == (0.0, 0.1)
    assert core.apply(f, (0.0, 0.0)) == (-1.0, 0.0)
    fb = core.compose([core.HenonFactor(a=0.1, p=(0.0, 0.0, 1.0), b=(0.0, 0.01))])
    z, w = core.apply(fb, (1.0, 1.0))
    assert abs(z - 1.11) < 1e-15
    assert abs(w - 0.1) < 1e-15


def test_apply_inverse_example():
    f = core.quadratic_map(-1.0, 0.1)
    z, w = core.apply_inverse(f, (-1.0, 0.0))
    assert abs(z) < 1e-14 and abs(w) < 1e-14


def test_roundtrip_property(fixtures):
    f, geom = fixtures["basilica"]
    z, w = sample_bidisk(geom, 1000, seed=11)
    Z, W = core.apply_many(f, z, w)
    z2, w2, bad = core.apply_inverse_many(f, Z, W)
    assert not bad.any()
    rel = (np.abs(z2 - z) + np.abs(w2 - w)) / (1.0 + np.abs(z) + np.abs(w))
    assert rel.max() < 1e-12


def test_roundtrip_birational():
    fb = core.compose([core.HenonFactor(a=0.1, p=(-1.0, 0.0, 1.0), b=(0.0, 0.02))])
    rng = np.random.default_rng(3)
    z = rng.uniform(-2, 2, 500) + 1j * rng.uniform(-2, 2, 500)
    w = rng.uniform(-2, 2, 500) + 1j * rng.uniform(-2, 2, 500)
    Z, W = core.apply_many(fb, z, w)
    z2, w2, bad = core.apply_inverse_many(fb, Z, W)
    clear = ~bad & (np.abs(0.1 + 0.02 * z) > 1e-3)
    rel = (np.abs(z2 - z) + np.abs(w2 - w))[clear] / (1.0 + np.abs(z[clear]))
    assert rel.max() < 1e-12


def test_inverse_indeterminacy():
    # a + b(z) vanishes identically: every fiber is bad
    fb = core.compose([core.HenonFactor(a=0.1, p=(0.0, 0.0, 1.0), b=(-0.1,))])
    with pytest.raises(IndeterminacyError):
        core.apply_inverse(fb, (1.0, 1.0))


def test_choose_radius_closed_forms():
    cases = [
        (-1.0, 1.0 + math.sqrt(2.0)),
        (-10.0, 1.0 + math.sqrt(11.0)),
        (0.0, 2.0),
    ]
    for c, expected in cases:
        f = core.quadratic_map(c, 0.1)
        geom = core.choose_radius(f, margin=1.0)
        assert abs(geom.minimal_R - expected) < 1e-6
    geom = core.choose_radius(core.quadratic_map(-1.0, 0.1), margin=1.25)
    assert abs(geom.R - 1.25 * (1.0 + math.sqrt(2.0))) < 1e-6


def test_choose_radius_rejects_small_margin():
    with pytest.raises(ValueError):
        core.choose_radius(core.quadratic_map(0.0, 0.1), margin=0.9)


def test_certify_examples(fixtures):
    f, geom = fixtures["basilica"]
    cert = core.certify_henonlike(f, core.FiltrationGeometry(R=3.0, minimal_R=geom.minimal_R))
    assert cert.verdict == "certified"
    assert cert.clearance > 0

    cert2 = core.certify_henonlike(f, core.FiltrationGeometry(R=0.5, minimal_R=0.5))
    assert cert2.verdict == "violated"
    assert cert2.witness is not None

    cert3 = core.certify_henonlike(
        f, core.FiltrationGeometry(R=geom.minimal_R, minimal_R=geom.minimal_R)
    )
    assert cert3.verdict == "inconclusive"
    assert abs(cert3.clearance) < 1e-6


def test_certify_requires_min_samples(fixtures):
    f, geom = fixtures["disk"]
    with pytest.raises(ValueError):
        core.certify_henonlike(f, geom, samples=100)


def test_orbit_escape_fixed_point(fixtures):
    f, geom = fixtures["basilica"]
    zs = np.roots([1, 0.05 ** 2 - 1, -1.0])
    x = (complex(zs[1]), 0.05 * complex(zs[1]))
    for nmax in (10, 500):
        rec = core.orbit_escape(f, x, nmax, geom)
        assert rec.verdict == "inside"


def test_orbit_escape_horseshoe(fixtures):
    f, geom = fixtures["horseshoe"]
    rec = core.orbit_escape(f, (0.0, 0.0), 50, geom)
    assert rec.verdict == "escaped"
    assert rec.exit_time <= 3
    assert geom.in_vplus(rec.last_point[0], rec.last_point[1])


def test_orbit_escape_already_escaped(fixtures):
    f, geom = fixtures["disk"]
    rec = core.orbit_escape(f, (geom.R * 5.0, 0.0), 10, geom)
    assert rec.verdict == "escaped"
    assert rec.exit_time == 0


def test_jacobian_constancy(fixtures):
    f, geom = fixtures["horseshoe"]
    z, w = sample_bidisk(geom, 100, seed=5)
    for zz, ww in zip(z, w):
        det = fd_jacobian_det(f, (zz, ww))
        assert abs(det - f.jacobian) / abs(f.jacobian) < 1e-6


def test_jacobian_at_birational():
    fb = core.compose([core.HenonFactor(a=0.1, p=(-1.0, 0.0, 1.0), b=(0.0, 0.02))])
    for x in [(0.5, 0.2), (1.0 + 0.3j, -0.4)]:
        det = core.jacobian_at(fb, x)
        assert abs(det - fd_jacobian_det(fb, x)) < 1e-6
    # constant part falls back to the plain value
    assert abs(fb.jacobian - (-0.01)) < 1e-15


def test_filtration_forward_invariance(fixtures):
    f, geom = fixtures["basilica"]
    rng = np.random.default_rng(7)
    # points of the escape region with moduli up to 1e6
    r = np.exp(rng.uniform(np.log(geom.R * 1.0001), np.log(1e6), 10000))
    z = r * np.exp(2j * np.pi * rng.random(10000))
    w = z * rng.random(10000) * 0.999 * np.exp(2j * np.pi * rng.random(10000))
    assert geom.in_vplus(z, w).all()
    Z, W = core.apply_many(f, z, w)
    assert geom.in_vplus(Z, W).all()


def test_monotone_escape(fixtures):
    f, geom = fixtures["disk"]
    rng = np.random.default_rng(9)
    for _ in range(50):
        x = (complex(rng.uniform(-2, 2), rng.uniform(-2, 2)),
             complex(rng.uniform(-2, 2), rng.uniform(-2, 2)))
        rec = core.orbit_escape(f, x, 200, geom)
        if rec.verdict != "escaped":
            continue
        z, w = rec.last_point
        prev = abs(z)
        for _ in range(6):
            z, w = core.apply(f, (z, w))
            if abs(z) > 1e100:
                break
            assert abs(z) > prev
            prev = abs(z)


def test_inverse_spec_matches_swapped_inverse(fixtures):
    f, geom = fixtures["basilica"]
    g = core.inverse_spec(f)
    rng = np.random.default_rng(13)
    for _ in range(50):
        x = (complex(rng.uniform(-2, 2), rng.uniform(-2, 2)),
             complex(rng.uniform(-2, 2), rng.uniform(-2, 2)))
        # swapped inverse: swap, invert, swap
        y = core.apply_inverse(f, (x[1], x[0]))
        expect = (y[1], y[0])
        got = core.apply(g, x)
        assert abs(got[0] - expect[0]) + abs(got[1] - expect[1]) < 1e-10
    assert abs(g.jacobian) > 1.0  # inverse of a dissipative map expands


def test_mapspec_json_roundtrip():
    fb = core.compose([
        core.HenonFactor(a=0.1 + 0.05j, p=(-1.0, 0.2j, 1.0), b=(0.0, 0.01)),
        core.HenonFactor(a=0.2, p=(0.5, 0.0, 0.0, 2.0)),
    ])
    d = core.mapspec_to_dict(fb)
    f2 = core.mapspec_from_dict(d)
    assert f2 == fb


def test_overflow_counts_as_escape(fixtures):
    f, geom = fixtures["disk"]
    v, t, _, _ = core.orbit_escape_many(
        f, np.asarray([1e200 + 0j]), np.asarray([0j]), 5, geom
    )
    assert v[0] == core.ESCAPED
