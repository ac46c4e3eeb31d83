"""Escape-rate potentials, the invariant projection on the escape region,
and certified bounded/escaped/unresolved membership verdicts.

The forward potential is the escape rate

    G+(x) = lim d^{-n} log |z_n|,

zero exactly on the bounded-orbit set.  Once an orbit is deep in the
escape region the limit telescopes,

    G+ = d^{-m} (log|z_m| + log|C|/(d-1)) + sum_{k>=m} d^{-(k+1)} log|1+eps_k|,

where C is the leading coefficient of one full composition step, so a
finite orbit plus an explicit tail bound gives a certified value.  The
invariant projection phi (|phi| = exp G+) is accumulated in log form
from the same orbit using principal-branch roots of the multiplicative
corrections.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import core
from .core import ESCAPED, INSIDE, UNRESOLVED, FiltrationGeometry, MapSpec
from .errors import BranchError, UnresolvedError


@dataclass(frozen=True)
class PotentialEvaluator:
    """Immutable bundle of map, geometry and iteration policy."""

    map: MapSpec
    geom: FiltrationGeometry
    nmax: int = 1000
    tol: float = 1e-10

    def __post_init__(self):
        if self.nmax < 1:
            raise ValueError("nmax must be >= 1")
        if self.tol <= 0:
            raise ValueError("tol must be positive")

    @property
    def degree(self) -> int:
        return self.map.degree

    @property
    def z_stop(self) -> float:
        # keep |z|^d representable one step past the stopping magnitude
        return 10.0 ** min(100.0, 250.0 / self.map.degree)


@dataclass(frozen=True)
class BottcherValue:
    value: complex
    log_value: complex
    branch_path: tuple[int, ...]
    residual: float


def _climb(ev: PotentialEvaluator, z, w, steps0, backward=False):
    """Push escaped points until the dominant coordinate passes z_stop.

    Returns (m, dominant coordinate array, last correction magnitude).
    """
    f = ev.map
    z = z.copy()
    w = w.copy()
    m = steps0.astype(np.int64).copy()
    last_corr = np.zeros(z.shape)
    d = f.degree
    lead = core.leading_backward(f) if backward else core.leading_forward(f)
    dom = np.abs(w) if backward else np.abs(z)
    active = dom < ev.z_stop
    guard = 0
    while active.any():
        idx = np.flatnonzero(active)
        if backward:
            zn, wn, bad = core.apply_inverse_many(f, z[idx], w[idx])
            if bad.any():
                # indeterminacy cannot occur once inside the backward
                # escape region of a certified radius; fail loudly
                raise UnresolvedError("indeterminacy hit while evaluating backward potential")
            prev = np.abs(w[idx])
            cur = np.abs(wn)
        else:
            zn, wn = core.apply_many(f, z[idx], w[idx])
            prev = np.abs(z[idx])
            cur = np.abs(zn)
        last_corr[idx] = np.abs(np.log(cur) - d * np.log(prev) - np.log(abs(lead)))
        z[idx], w[idx] = zn, wn
        m[idx] += 1
        active[idx] = cur < ev.z_stop
        guard += 1
        if guard > 300:
            raise UnresolvedError("escape-region growth stalled; geometry may be invalid")
    dom = w if backward else z
    return m, dom, last_corr


def green_many(ev: PotentialEvaluator, z, w, side: str = "forward"):
    """Batched potential values.

    Returns (values, verdicts).  Values are 0 where the verdict is
    ``inside`` and NaN where ``unresolved``.
    """
    z = np.asarray(z, dtype=complex)
    w = np.asarray(w, dtype=complex)
    backward = side == "backward"
    verdict, exit_time, zl, wl = core.orbit_escape_many(
        ev.map, z, w, ev.nmax, ev.geom, "backward" if backward else "forward"
    )
    vals = np.full(z.shape, np.nan)
    vals[verdict == INSIDE] = 0.0
    esc = verdict == ESCAPED
    if esc.any():
        lead = core.leading_backward(ev.map) if backward else core.leading_forward(ev.map)
        d = ev.map.degree
        m, dom, last_corr = _climb(
            ev, zl[esc].ravel(), wl[esc].ravel(), exit_time[esc].ravel(), backward
        )
        scale = np.power(float(d), -m.astype(float))
        g = scale * (np.log(np.abs(dom)) + np.log(abs(lead)) / (d - 1))
        # tail after the last computed correction is geometrically dominated
        tail = scale * 2.0 * np.maximum(last_corr, 1e-60)
        if np.any(tail > ev.tol):
            raise UnresolvedError("tail bound exceeds tolerance; raise nmax or z_stop")
        out = np.zeros(esc.sum())
        out[:] = np.maximum(g, 0.0)
        vals[esc] = out
    return vals, verdict


def green_plus(ev: PotentialEvaluator, x) -> float:
    """Forward escape rate at a point; 0 on bounded orbits."""
    vals, verdict = green_many(ev, np.asarray([x[0]]), np.asarray([x[1]]), "forward")
    if verdict[0] == UNRESOLVED:
        raise UnresolvedError(f"orbit of {x} unresolved at budget {ev.nmax}")
    return float(vals[0])


def green_minus(ev: PotentialEvaluator, x) -> float:
    """Backward escape rate; the escape region is reflected to |w| > max(|z|, R)."""
    if ev.map.is_birational:
        # let indeterminacy surface as an exception in the scalar interface
        core.orbit_escape(ev.map, x, ev.nmax, ev.geom, "backward")
    vals, verdict = green_many(ev, np.asarray([x[0]]), np.asarray([x[1]]), "backward")
    if verdict[0] == UNRESOLVED:
        raise UnresolvedError(f"backward orbit of {x} unresolved at budget {ev.nmax}")
    return float(vals[0])


# ---------------------------------------------------------------------------
# invariant projection


def log_bottcher_many(ev: PotentialEvaluator, z, w):
    """Principal-branch log of the invariant projection on the escape region.

    Every input must lie in V+.  Returns (log phi, max branch depth,
    bad mask) where ``bad`` marks points whose multiplicative correction
    left the principal-branch disk.
    """
    f = ev.map
    d = f.degree
    z = np.array(z, dtype=complex).ravel()
    w = np.array(w, dtype=complex).ravel()
    if not np.all(ev.geom.in_vplus(z, w)):
        raise ValueError("log_bottcher_many requires points in the escape region")
    lead = core.leading_forward(f)
    log_lead = np.log(complex(lead))

    S = np.log(z.astype(complex)) + log_lead / (d - 1)
    bad = np.zeros(z.shape, dtype=bool)
    active = np.abs(z) < ev.z_stop
    depth = 0
    scale = 1.0
    while active.any():
        depth += 1
        scale /= d
        idx = np.flatnonzero(active)
        zn, wn = core.apply_many(f, z[idx], w[idx])
        ratio = zn / (lead * z[idx] ** d)
        off = np.abs(ratio - 1.0) >= 1.0
        bad[idx[off]] = True
        corr = np.where(off, 0.0, np.log(np.where(off, 1.0, ratio)))
        S[idx] = S[idx] + scale * corr
        z[idx], w[idx] = zn, wn
        keep = (np.abs(zn) < ev.z_stop) & ~off
        active[idx] = keep
        if depth > 300:
            raise UnresolvedError("projection iteration stalled")
    return S, depth, bad


def bottcher(ev: PotentialEvaluator, x) -> BottcherValue:
    """Invariant projection at a point of V+.

    The branch is fixed by continuity along the orbit: every correction
    factor is taken with its principal root, which is valid while the
    corrections stay inside the unit disk around 1.
    """
    z = np.asarray([x[0]], dtype=complex)
    w = np.asarray([x[1]], dtype=complex)
    S, depth, bad = log_bottcher_many(ev, z, w)
    if bad[0]:
        raise BranchError(f"correction left the principal branch at {x}")
    value = complex(np.exp(S[0]))
    # functional-equation residual from one forward step
    fx = core.apply(ev.map, x)
    if ev.geom.in_vplus(fx[0], fx[1]):
        S2, _, bad2 = log_bottcher_many(ev, np.asarray([fx[0]]), np.asarray([fx[1]]))
        if not bad2[0]:
            residual = abs(np.exp(S2[0]) - value ** ev.map.degree)
        else:
            residual = float("nan")
    else:
        residual = float("nan")
    return BottcherValue(
        value=value,
        log_value=complex(S[0]),
        branch_path=tuple(range(1, depth + 1)),
        residual=float(residual),
    )


# ---------------------------------------------------------------------------
# membership


def k_membership_many(ev: PotentialEvaluator, z, w, side: str = "forward"):
    """Tri-state verdict grid (0 inside, 1 escaped, 2 unresolved)."""
    direction = "backward" if side == "backward" else "forward"
    verdict, _, _, _ = core.orbit_escape_many(ev.map, z, w, ev.nmax, ev.geom, direction)
    return verdict


def k_membership(ev: PotentialEvaluator, x, side: str = "forward") -> str:
    rec = core.orbit_escape(ev.map, x, ev.nmax, ev.geom, "backward" if side == "backward" else "forward")
    return rec.verdict


# ---------------------------------------------------------------------------
# CSV batch interface


def evaluate_csv(ev: PotentialEvaluator, src, dst, quantity: str = "green_plus") -> int:
    """Evaluate a potential over a CSV point list.

    Input columns: re(z), im(z), re(w), im(w).  Output appends value and
    verdict columns.  Returns the number of rows written.
    """
    import csv

    rows = []
    with open(src, newline="") as fh:
        for rec in csv.reader(fh):
            if not rec or rec[0].strip().startswith("#") or rec[0].strip() == "re_z":
                continue
            rows.append([float(v) for v in rec[:4]])
    pts = np.asarray(rows, dtype=float)
    if pts.size == 0:
        z = np.zeros(0, complex)
        w = np.zeros(0, complex)
    else:
        z = pts[:, 0] + 1j * pts[:, 1]
        w = pts[:, 2] + 1j * pts[:, 3]
    side = "backward" if quantity == "green_minus" else "forward"
    vals, verdict = green_many(ev, z, w, side)
    names = {INSIDE: "inside", ESCAPED: "escaped", UNRESOLVED: "unresolved"}
    with open(dst, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["re_z", "im_z", "re_w", "im_w", "value", "verdict"])
        for i in range(z.size):
            out.writerow(
                [
                    f"{z[i].real:.17g}",
                    f"{z[i].imag:.17g}",
                    f"{w[i].real:.17g}",
                    f"{w[i].imag:.17g}",
                    f"{vals[i]:.17g}",
                    names[int(verdict[i])],
                ]
            )
    return int(z.size)
