"""Numerical laboratory for polynomial diffeomorphisms of C^2.

Compositions of Henon-type maps (optionally with birational
perturbation terms): escape-rate potentials, filled-Julia-set slices,
connectivity diagnostics on transversals and unstable leaves, external
rays, and parameter-plane scans.
"""

__version__ = "0.1.0"

from .core import (
    FiltrationGeometry,
    HenonFactor,
    MapSpec,
    apply,
    apply_inverse,
    certify_henonlike,
    choose_radius,
    compose,
    orbit_escape,
    quadratic_map,
)
from .potential import PotentialEvaluator, bottcher, green_minus, green_plus, k_membership

__all__ = [
    "FiltrationGeometry",
    "HenonFactor",
    "MapSpec",
    "PotentialEvaluator",
    "apply",
    "apply_inverse",
    "bottcher",
    "certify_henonlike",
    "choose_radius",
    "compose",
    "green_minus",
    "green_plus",
    "k_membership",
    "orbit_escape",
    "quadratic_map",
]
