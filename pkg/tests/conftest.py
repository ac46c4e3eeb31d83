import numpy as np
import pytest

from henonlab import core, potential, saddles

# fixture parameters: three well-understood quadratic regimes plus two
# more strongly stretched ones for panel tests
PARAMS = {
    "disk": (0.0, 0.05),
    "basilica": (-1.0, 0.05),
    "cardioid": (-0.5, 0.05),
    "horseshoe": (-10.0, 0.1),
    "horseshoe3": (-3.0, 0.1),
    "horseshoe6": (-6.0, 0.1),
}

CONNECTED = ("disk", "basilica", "cardioid")
DISCONNECTED = ("horseshoe", "horseshoe3", "horseshoe6")


@pytest.fixture(scope="session")
def fixtures():
    out = {}
    for name, (c, a) in PARAMS.items():
        f = core.quadratic_map(c, a)
        geom = core.choose_radius(f)
        out[name] = (f, geom)
    return out


@pytest.fixture(scope="session")
def evaluators(fixtures):
    return {
        name: potential.PotentialEvaluator(map=f, geom=geom)
        for name, (f, geom) in fixtures.items()
    }


@pytest.fixture(scope="session")
def leaves(fixtures):
    """One unstable-manifold parametrization per fixture (largest saddle)."""
    out = {}
    for name, (f, geom) in fixtures.items():
        sads = [o for o in saddles.periodic_points(f, geom, 1) if o.is_saddle]
        sads.sort(key=lambda o: -abs(o.multipliers[0]))
        out[name] = saddles.unstable_parametrization(f, sads[0])
    return out


def sample_bidisk(geom, n, seed):
    rng = np.random.default_rng(seed)
    z = geom.R * np.sqrt(rng.random(n)) * np.exp(2j * np.pi * rng.random(n))
    w = geom.R * np.sqrt(rng.random(n)) * np.exp(2j * np.pi * rng.random(n))
    return z, w
