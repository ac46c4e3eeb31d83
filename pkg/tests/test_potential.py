import numpy as np
import pytest

from henonlab import core, potential
from henonlab.errors import BranchError

from conftest import sample_bidisk

LOG_1E6 = 13.815510557964274   # log(1e6), high-depth escape-rate oracle value


def escape_rate_oracle(f, x, geom, depth_mag=1e15):
    """Plain high-depth iteration of the rate quotient, no tail handling."""
    z, w = complex(x[0]), complex(x[1])
    n = 0
    while not (abs(z) > geom.R and abs(z) > abs(w)):
        z, w = core.apply(f, (z, w))
        n += 1
        if n > 2000:
            return 0.0
    while abs(z) < depth_mag:
        z, w = core.apply(f, (z, w))
        n += 1
    return np.log(abs(z)) / f.degree ** n


def test_green_deep_point(evaluators):
    ev = evaluators["basilica"]
    g = potential.green_plus(ev, (1e6, 0.0))
    assert abs(g - LOG_1E6) < 1e-3
    assert abs(g - LOG_1E6) < 1e-9   # the tail-corrected value is far tighter


def test_green_zero_on_bounded_orbit(evaluators):
    ev = evaluators["basilica"]
    zs = np.roots([1, 0.05 ** 2 - 1, -1.0])
    x = (complex(zs[1]), 0.05 * complex(zs[1]))
    assert potential.green_plus(ev, x) == 0.0


def test_green_matches_oracle(evaluators, fixtures):
    ev = evaluators["horseshoe"]
    f, geom = fixtures["horseshoe"]
    rng = np.random.default_rng(2)
    for _ in range(10):
        x = (complex(rng.uniform(-4, 4), rng.uniform(-4, 4)),
             complex(rng.uniform(-4, 4), rng.uniform(-4, 4)))
        g = potential.green_plus(ev, x)
        if g > 0:
            assert abs(g - escape_rate_oracle(f, x, geom)) < 1e-3


def test_green_functional_equation(evaluators, fixtures):
    for name in ("disk", "basilica", "horseshoe"):
        ev = evaluators[name]
        f, geom = fixtures[name]
        z, w = sample_bidisk(geom, 2000, seed=21)
        vals, verdict = potential.green_many(ev, z, w)
        esc = (verdict == core.ESCAPED) & (vals > 1e-4)
        Z, W = core.apply_many(f, z[esc], w[esc])
        vals2, _ = potential.green_many(ev, Z, W)
        assert np.max(np.abs(vals2 - f.degree * vals[esc])) < 1e-8


def test_green_minus_zero_at_fixed_point(evaluators):
    # (0, 0) is an exactly representable fixed point of the c = 0 map;
    # approximate saddles drift off under backward iteration because the
    # contracting direction reverses into expansion
    ev = evaluators["disk"]
    assert potential.green_minus(ev, (0.0, 0.0)) == 0.0
    assert potential.green_plus(ev, (0.0, 0.0)) == 0.0


def test_green_minus_functional_identity(evaluators, fixtures):
    ev = evaluators["basilica"]
    f, _ = fixtures["basilica"]
    rng = np.random.default_rng(4)
    hits = 0
    for _ in range(200):
        x = (complex(rng.uniform(-3, 3), rng.uniform(-3, 3)),
             complex(rng.uniform(-3, 3), rng.uniform(-3, 3)))
        g = potential.green_minus(ev, x)
        if g > 1e-3:
            fx = core.apply_inverse(f, x)
            g2 = potential.green_minus(ev, fx)
            assert abs(g2 - f.degree * g) < 1e-8
            hits += 1
    assert hits > 10


def test_green_minus_oracle(evaluators, fixtures):
    ev = evaluators["basilica"]
    f, geom = fixtures["basilica"]
    x = (0.3, 1e5)
    g = potential.green_minus(ev, x)
    # independent backward high-depth iteration; eliminating the constant
    # offset between consecutive depths removes the leading-coefficient
    # tail without referencing the implementation's formula
    z, w = complex(x[0]), complex(x[1])
    n = 0
    raw = {}
    while abs(w) < 1e15:
        z, w = core.apply_inverse(f, (z, w))
        n += 1
        raw[n] = np.log(abs(w)) / f.degree ** n
    oracle = (f.degree * raw[n] - raw[n - 1]) / (f.degree - 1)
    assert g > 0
    assert abs(g - oracle) < 1e-3


def test_bottcher_asymptotic(evaluators):
    ev = evaluators["basilica"]
    bv = potential.bottcher(ev, (1e6, 0.0))
    assert abs(bv.value - 1e6) < 1.0
    assert abs(np.log(abs(bv.value)) - potential.green_plus(ev, (1e6, 0.0))) < 2 * ev.tol


def test_bottcher_functional_equation(evaluators, fixtures):
    ev = evaluators["basilica"]
    f, geom = fixtures["basilica"]
    rng = np.random.default_rng(6)
    for _ in range(50):
        r = rng.uniform(geom.R * 1.3, geom.R * 3)
        z = r * np.exp(2j * np.pi * rng.random())
        w = 0.5 * r * np.exp(2j * np.pi * rng.random())
        bv = potential.bottcher(ev, (z, w))
        fx = core.apply(f, (z, w))
        bv2 = potential.bottcher(ev, fx)
        assert abs(bv2.value - bv.value ** f.degree) < 1e-6
        assert bv.residual < 1e-6


def test_bottcher_branch_error(fixtures):
    f, _ = fixtures["basilica"]
    # a deliberately undersized radius puts escape-region points where the
    # multiplicative corrections are far from 1
    small = core.FiltrationGeometry(R=0.62, minimal_R=0.62)
    ev = potential.PotentialEvaluator(map=f, geom=small)
    with pytest.raises(BranchError):
        potential.bottcher(ev, (0.65, 0.6))


def test_bottcher_green_consistency(evaluators, fixtures):
    ev = evaluators["disk"]
    f, geom = fixtures["disk"]
    rng = np.random.default_rng(8)
    n = 1000
    r = np.exp(rng.uniform(np.log(geom.R * 1.01), np.log(1e5), n))
    z = r * np.exp(2j * np.pi * rng.random(n))
    w = z * rng.random(n) * 0.99
    S, _, bad = potential.log_bottcher_many(ev, z, w)
    assert not bad.any()
    vals, _ = potential.green_many(ev, z, w)
    assert np.max(np.abs(S.real - vals)) < 2 * ev.tol


def test_k_membership_examples(evaluators, fixtures):
    ev = evaluators["basilica"]
    zs = np.roots([1, 0.05 ** 2 - 1, -1.0])
    x = (complex(zs[1]), 0.05 * complex(zs[1]))
    assert potential.k_membership(ev, x, "forward") == "inside"
    assert potential.k_membership(ev, (1e6, 0.0), "forward") == "escaped"
    evh = evaluators["horseshoe"]
    evh = potential.PotentialEvaluator(map=evh.map, geom=evh.geom, nmax=200)
    assert potential.k_membership(evh, (0.1, 0.0), "forward") == "escaped"


def test_tristate_soundness(evaluators, fixtures):
    """A definite verdict never flips to the other definite state."""
    f, geom = fixtures["basilica"]
    z, w = sample_bidisk(geom, 3000, seed=31)
    results = []
    for nmax in (100, 400, 1600):
        ev = potential.PotentialEvaluator(map=f, geom=geom, nmax=nmax)
        results.append(potential.k_membership_many(ev, z, w))
    for lo, hi in ((0, 1), (1, 2), (0, 2)):
        a, b = results[lo], results[hi]
        flip = ((a == core.INSIDE) & (b == core.ESCAPED)) | \
               ((a == core.ESCAPED) & (b == core.INSIDE))
        assert not flip.any()


def test_projection_continuity_probe(evaluators, fixtures):
    """Consecutive projection values along a radial path stay coherent."""
    ev = evaluators["basilica"]
    geom = fixtures["basilica"][1]
    n = 1000
    r = np.linspace(geom.R * 1.05, geom.R * 6.0, n)
    z = r * np.exp(1j * 0.7)
    w = np.full(n, 0.3 + 0.2j)
    S, _, bad = potential.log_bottcher_many(ev, z, w)
    assert not bad.any()
    phi = np.exp(S)
    step = r[1] - r[0]
    dphi = np.abs(np.diff(phi))
    # a branch jump would spike one increment far above the local
    # derivative scale; regular variation stays within a small factor
    lipschitz_estimate = float(np.median(dphi) / step)
    assert dphi.max() < 10.0 * step * lipschitz_estimate


def test_determinism(evaluators):
    ev = evaluators["horseshoe"]
    x = (2.0 + 1.0j, 0.5)
    vals = {potential.green_plus(ev, x) for _ in range(3)}
    assert len(vals) == 1
    bvs = {potential.bottcher(ev, (20.0, 1.0)).value for _ in range(3)}
    assert len(bvs) == 1


def test_evaluate_csv(tmp_path, evaluators):
    ev = evaluators["basilica"]
    src = tmp_path / "pts.csv"
    dst = tmp_path / "out.csv"
    rows = ["re_z,im_z,re_w,im_w", "1e6,0,0,0", "0.1,0,0.05,0"]
    src.write_text("\n".join(rows) + "\n")
    n = potential.evaluate_csv(ev, src, dst, "green_plus")
    assert n == 2
    lines = dst.read_text().strip().split("\n")
    assert lines[0] == "re_z,im_z,re_w,im_w,value,verdict"
    first = lines[1].split(",")
    assert abs(float(first[4]) - LOG_1E6) < 1e-3
    assert first[5] == "escaped"
