"""Transversal slices of the bounded-orbit sets and the tangency calculus.

A transversal is an affine holomorphic disk t -> x0 + t v.  Rasters
classify cell centers with the tri-state escape iteration; component
counts treat unresolved cells as wildcards, reported as a lower bound
(merging through unresolved) and an upper bound (unresolved treated as
escaped).  Vertical-tangency and intersection counts are certified
integers obtained from winding numbers on refined contours.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import numpy.polynomial.polynomial as npoly
from scipy import ndimage

from . import core, potential
from .core import ESCAPED, INSIDE, UNRESOLVED, FiltrationGeometry, MapSpec
from .errors import ContourThroughZeroError, NonHorizontalError, ZeroClusterError


@dataclass(frozen=True)
class Transversal:
    """Affine disk t -> x0 + t v, |t| <= rho."""

    x0: tuple[complex, complex]
    v: tuple[complex, complex]
    rho: float
    kind: str = "generic_disk"

    def __post_init__(self):
        if self.v[0] == 0 and self.v[1] == 0:
            raise ValueError("direction vector must be nonzero")
        if self.rho <= 0:
            raise ValueError("rho must be positive")
        if self.kind == "horizontal_line" and (self.v[0] != 1 or self.v[1] != 0):
            raise ValueError("horizontal_line requires direction (1, 0)")

    def points(self, t):
        t = np.asarray(t, dtype=complex)
        return self.x0[0] + t * self.v[0], self.x0[1] + t * self.v[1]


def horizontal_line(w0: complex, rho: float) -> Transversal:
    return Transversal(x0=(0.0 + 0.0j, complex(w0)), v=(1.0 + 0.0j, 0.0 + 0.0j),
                       rho=float(rho), kind="horizontal_line")


# ---------------------------------------------------------------------------
# rasters and components


@dataclass(frozen=True)
class SliceGrid:
    resolution: int
    cells: np.ndarray          # uint8, {0 inside, 1 escaped, 2 unresolved}
    budget: int
    transversal: Transversal
    side: str

    def cell_centers(self):
        rho = self.transversal.rho
        g = (np.arange(self.resolution) + 0.5) * (2.0 * rho / self.resolution) - rho
        return g[None, :] + 1j * g[:, None]

    @property
    def unresolved_fraction(self) -> float:
        return float(np.mean(self.cells == UNRESOLVED))


def rasterize_slice(
    f: MapSpec,
    geom: FiltrationGeometry,
    V: Transversal,
    N: int,
    budget: int,
    side: str = "forward",
) -> SliceGrid:
    """Tri-state raster of the slice against the bounded-orbit set."""
    if N < 16:
        raise ValueError("resolution must be at least 16")
    if V.kind == "horizontal_line" and abs(V.x0[1]) >= geom.R:
        raise ValueError("horizontal line must sit inside the bidisk")
    rho = V.rho
    g = (np.arange(N) + 0.5) * (2.0 * rho / N) - rho
    t = g[None, :] + 1j * g[:, None]
    z, w = V.points(t)
    verdict, _, _, _ = core.orbit_escape_many(
        f, z, w, budget, geom, "backward" if side == "backward" else "forward"
    )
    return SliceGrid(resolution=N, cells=verdict, budget=budget, transversal=V, side=side)


_STRUCT4 = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)
_STRUCT8 = np.ones((3, 3), dtype=bool)


@dataclass(frozen=True)
class ComponentReport:
    count_lower: int
    count_upper: int
    components: tuple          # (pixel_count, bbox, diameter) per merged component
    unresolved_fraction: float

    @property
    def count(self) -> int | None:
        """Definite component count, or None while the bounds disagree."""
        return self.count_lower if self.count_lower == self.count_upper else None


def _diameter(points: np.ndarray) -> float:
    if len(points) <= 1:
        return 0.0
    pts = points
    if len(pts) > 16:
        try:
            from scipy.spatial import ConvexHull

            pts = points[ConvexHull(points).vertices]
        except Exception:
            # degenerate (collinear) sets: extremes along the axes suffice
            sel = [pts[:, 0].argmin(), pts[:, 0].argmax(), pts[:, 1].argmin(), pts[:, 1].argmax()]
            pts = points[sorted(set(int(i) for i in sel))]
    d2 = ((pts[:, None, :] - pts[None, :, :]) ** 2).sum(-1)
    return float(np.sqrt(d2.max()))


def label_components(grid: SliceGrid, adjacency: int = 4) -> ComponentReport:
    """Connected components of the inside set with wildcard unresolved cells.

    The lower count merges through unresolved cells (components of
    inside+unresolved that contain at least one inside cell); the upper
    count treats unresolved as escaped.
    """
    if adjacency not in (4, 8):
        raise ValueError("adjacency must be 4 or 8")
    struct = _STRUCT4 if adjacency == 4 else _STRUCT8
    # cells beyond the parameter disk are not part of the transversal
    domain = np.abs(grid.cell_centers()) <= grid.transversal.rho
    inside = (grid.cells == INSIDE) & domain
    merged = inside | ((grid.cells == UNRESOLVED) & domain)

    lab_up, n_up = ndimage.label(inside, structure=struct)
    lab_lo, n_lo = ndimage.label(merged, structure=struct)
    has_inside = np.unique(lab_lo[inside])
    has_inside = has_inside[has_inside > 0]

    centers = grid.cell_centers()
    h = 2.0 * grid.transversal.rho / grid.resolution
    comps = []
    for L in has_inside:
        mask = lab_lo == L
        ii, jj = np.nonzero(mask)
        pts = np.stack([centers.real[ii, jj], centers.imag[ii, jj]], axis=1)
        bbox = (float(pts[:, 0].min()), float(pts[:, 0].max()),
                float(pts[:, 1].min()), float(pts[:, 1].max()))
        comps.append((int(mask.sum()), bbox, _diameter(pts) + h))
    comps.sort(key=lambda c: -c[0])
    return ComponentReport(
        count_lower=int(len(has_inside)),
        count_upper=int(n_up),
        components=tuple(comps),
        unresolved_fraction=grid.unresolved_fraction,
    )


@dataclass(frozen=True)
class ConnectivityReport:
    verdict: str               # "connected" | "disconnected" | "unresolved"
    levels: tuple              # (N, budget, lower, upper, unresolved_fraction)


def connectivity_verdict(
    f: MapSpec,
    geom: FiltrationGeometry,
    V: Transversal,
    side: str,
    schedule,
    adjacency: int = 4,
) -> ConnectivityReport:
    """Decide connectivity of the slice trace from a refinement schedule.

    ``connected`` needs both component bounds equal to 1 at the two
    finest levels; ``disconnected`` needs a lower bound >= 2 at two
    consecutive levels with unresolved fraction below 1%.
    """
    schedule = list(schedule)
    if not schedule:
        raise ValueError("schedule must be nonempty")
    rows = []
    for N, budget in schedule:
        rep = label_components(rasterize_slice(f, geom, V, N, budget, side), adjacency)
        rows.append((N, budget, rep.count_lower, rep.count_upper, rep.unresolved_fraction))

    connected = (
        len(rows) >= 2
        and all(r[2] == 1 and r[3] == 1 for r in rows[-2:])
    )
    disconnected = any(
        rows[i][2] >= 2 and rows[i + 1][2] >= 2
        and rows[i][4] < 0.01 and rows[i + 1][4] < 0.01
        for i in range(len(rows) - 1)
    )
    if connected and not disconnected:
        verdict = "connected"
    elif disconnected and not connected:
        verdict = "disconnected"
    else:
        verdict = "unresolved"
    return ConnectivityReport(verdict=verdict, levels=tuple(rows))


# ---------------------------------------------------------------------------
# slice orbits with parameter derivatives


def slice_orbit(f: MapSpec, V: Transversal, t, n: int, order: int = 1):
    """z coordinate of the n-th image of V(t) with derivatives in t.

    Returns (Z, dZ, d2Z, (z_final, w_final)); dZ/d2Z are None when the
    requested order is lower.
    """
    t = np.asarray(t, dtype=complex)
    z, w = V.points(t)
    dz = np.full(t.shape, V.v[0], dtype=complex)
    dw = np.full(t.shape, V.v[1], dtype=complex)
    d2z = np.zeros(t.shape, dtype=complex)
    d2w = np.zeros(t.shape, dtype=complex)
    for _ in range(n):
        for fac in f.factors:
            pz = npoly.polyval(z, fac.p)
            dp = npoly.polyval(z, npoly.polyder(fac.p))
            if fac.b is None:
                coef = fac.a
                db = 0.0
                d2b = 0.0
            else:
                coef = fac.a + npoly.polyval(z, fac.b)
                db = npoly.polyval(z, npoly.polyder(fac.b))
                d2b = npoly.polyval(z, npoly.polyder(fac.b, 2))
            if order >= 2:
                d2p = npoly.polyval(z, npoly.polyder(fac.p, 2))
                nd2z = (d2b * dz * dz + db * d2z) * w + 2.0 * db * dz * dw \
                    + coef * d2w + d2p * dz * dz + dp * d2z
                nd2w = fac.a * d2z
            ndz = db * dz * w + coef * dw + dp * dz
            ndw = fac.a * dz
            z, w = coef * w + pz, fac.a * z
            dz, dw = ndz, ndw
            if order >= 2:
                d2z, d2w = nd2z, nd2w
    return z, (dz if order >= 1 else None), (d2z if order >= 2 else None), (z, w)


def _slice_final_point(f, V, t, n):
    tt = np.asarray(t, dtype=complex)
    z, w = V.points(tt)
    for _ in range(n):
        z, w = core.apply_many(f, z, w)
    return z, w


# ---------------------------------------------------------------------------
# winding numbers


def _loop_winding(vals: np.ndarray):
    ph = np.angle(vals)
    d = np.diff(np.concatenate([ph, ph[:1]]))
    d = (d + np.pi) % (2.0 * np.pi) - np.pi
    return float(d.sum() / (2.0 * np.pi)), float(np.max(np.abs(d)))


def certified_winding(sample_fn, n0: int = 256, residual: float = 0.1,
                      max_doublings: int = 8, zero_rtol: float = 1e-11) -> int:
    """Integer winding number of a closed loop of integrand samples.

    ``sample_fn(n)`` returns n samples along the loop.  The sample count
    doubles until no phase step exceeds pi/2, the sum is within
    ``residual`` of an integer, and the rounded value is stable across
    one refinement.
    """
    n = n0
    prev = None
    for _ in range(max_doublings + 1):
        vals = np.asarray(sample_fn(n))
        scale = float(np.max(np.abs(vals)))
        if scale == 0.0 or float(np.min(np.abs(vals))) < zero_rtol * scale:
            raise ContourThroughZeroError("integrand vanishes on the contour")
        wnd, step = _loop_winding(vals)
        ok = step < 0.5 * np.pi and abs(wnd - round(wnd)) < residual
        if ok and prev is not None and prev == round(wnd):
            return int(round(wnd))
        prev = round(wnd) if ok else None
        n *= 2
    raise ZeroClusterError("winding number failed to stabilize under refinement")


def _circle_loop(center: complex, radius: float):
    def fn(n, eval_fn):
        th = np.linspace(0.0, 2.0 * np.pi, n, endpoint=False)
        return eval_fn(center + radius * np.exp(1j * th))
    return fn


def _square_loop(center: complex, half: float):
    def fn(n, eval_fn):
        m = max(n // 4, 8)
        s = np.linspace(-1.0, 1.0, m, endpoint=False)
        edges = np.concatenate([
            center + half * (s + 1j * -1.0),
            center + half * (1.0 + 1j * s),
            center + half * (-s + 1j * 1.0),
            center + half * (-1.0 + 1j * -s),
        ])
        return eval_fn(edges)
    return fn


def _count_zeros(eval_fn, loop, **kw) -> int:
    return certified_winding(lambda n: loop(n, eval_fn), **kw)


# ---------------------------------------------------------------------------
# zero localization


def _newton_refine(ffn, dffn, t0: complex, steps: int = 40, tol: float = 1e-12):
    t = complex(t0)
    for _ in range(steps):
        fv = complex(ffn(np.asarray([t]))[0])
        dv = complex(dffn(np.asarray([t]))[0])
        if dv == 0:
            return t, False
        step = fv / dv
        t -= step
        if abs(step) < tol:
            return t, True
    return t, abs(complex(ffn(np.asarray([t]))[0])) < 1e-9


def locate_zeros(eval_fn, deriv_fn, center: complex, radius: float,
                 cluster_floor: float = 1e-7) -> list[tuple[complex, int]]:
    """All zeros (with multiplicity) of a holomorphic function in a disk.

    Quad subdivision with certified winding counts per box; isolated
    simple zeros are polished by Newton, unseparable clusters below the
    floor are returned with their total multiplicity.
    """
    total = _count_zeros(eval_fn, _circle_loop(center, radius))
    if total == 0:
        return []
    found: list[tuple[complex, int]] = []
    stack = [(center, radius, total)]
    guard = 0
    while stack:
        guard += 1
        if guard > 20000:
            raise ZeroClusterError("zero localization exceeded subdivision budget")
        c, h, cnt = stack.pop()
        if cnt == 0:
            continue
        if h < cluster_floor:
            found.append((c, cnt))
            continue
        if cnt == 1 and h < 1e-3 * radius:
            t, ok = _newton_refine(eval_fn, deriv_fn, c)
            if ok and abs(t - c) < 4.0 * h:
                found.append((t, 1))
                continue
        # split into four children, jiggling the split point when an edge
        # passes too close to a zero
        for shift in (0.0, 0.137 + 0.093j, -0.211 + 0.171j, 0.293 - 0.127j):
            cc = c + shift * h
            try:
                counts = []
                for q in (-0.5 - 0.5j, 0.5 - 0.5j, -0.5 + 0.5j, 0.5 + 0.5j):
                    child = cc + q * h
                    counts.append(_count_zeros(eval_fn, _square_loop(child, 0.5 * h)))
                if sum(counts) == cnt:
                    for q, k in zip((-0.5 - 0.5j, 0.5 - 0.5j, -0.5 + 0.5j, 0.5 + 0.5j), counts):
                        stack.append((cc + q * h, 0.5 * h, k))
                    break
            except (ContourThroughZeroError, ZeroClusterError):
                continue
        else:
            raise ZeroClusterError(f"could not separate {cnt} zeros near {c}")
    return found


def _polynomial_slice_coeffs(f: MapSpec, V: Transversal, n: int) -> np.ndarray:
    """Coefficients of t -> z(f^n(V(t))) for plain compositions."""
    Zc = np.array([V.x0[0], V.v[0]], dtype=complex)
    Wc = np.array([V.x0[1], V.v[1]], dtype=complex)
    for _ in range(n):
        for fac in f.factors:
            pz = np.array([fac.p[-1]], dtype=complex)
            for c in fac.p[-2::-1]:
                pz = npoly.polymul(pz, Zc)
                pz[0] += c
            nz = npoly.polyadd(pz, fac.a * Wc)
            Wc = fac.a * Zc
            Zc = nz
    return Zc


def _tangency_zeros(f, geom, V, n, contour_radius):
    """Zeros of d/dt z(f^n(V(t))) inside the contour, with multiplicity."""

    def dfn(t):
        return slice_orbit(f, V, t, n, order=1)[1]

    def d2fn(t):
        return slice_orbit(f, V, t, n, order=2)[2]

    if not f.is_birational:
        coeffs = _polynomial_slice_coeffs(f, V, n)
        dco = npoly.polyder(coeffs)
        roots = np.roots(dco[::-1]) if len(dco) > 1 else np.array([])
        roots = roots[np.abs(roots) < contour_radius]
        # Newton polish, merge clusters, then certify the total count
        polished = []
        for r in roots:
            t, ok = _newton_refine(dfn, d2fn, complex(r))
            polished.append(t if ok and abs(t) < contour_radius else complex(r))
        groups: list[list[complex]] = []
        for t in sorted(polished, key=lambda v: (v.real, v.imag)):
            for g in groups:
                if abs(t - g[0]) < 1e-7 * max(1.0, contour_radius):
                    g.append(t)
                    break
            else:
                groups.append([t])
        zeros = [(complex(np.mean(g)), len(g)) for g in groups]
        try:
            total = _count_zeros(dfn, _circle_loop(0.0, contour_radius))
            if total == sum(m for _, m in zeros):
                return zeros
        except (ContourThroughZeroError, ZeroClusterError):
            pass
    return locate_zeros(dfn, d2fn, 0.0 + 0.0j, contour_radius)


def _require_horizontal(f, geom, V, n, samples=256):
    """Boundary of the transversal must have escaped by time n."""
    th = np.linspace(0.0, 2.0 * np.pi, samples, endpoint=False)
    for frac in (1.0, 0.9995, 0.999):
        z, w = V.points(frac * V.rho * np.exp(1j * th))
        verdict, exit_time, _, _ = core.orbit_escape_many(f, z, w, n, geom, "forward")
        if not np.all((verdict == ESCAPED) & (exit_time <= n)):
            raise NonHorizontalError(
                f"transversal boundary has not escaped by iterate {n}"
            )


def horizontal_degree(
    f: MapSpec,
    geom: FiltrationGeometry,
    V: Transversal,
    n: int,
    z0: complex = 0.17 + 0.11j,
) -> int:
    """Intersection count of the n-th slice image with a vertical line.

    Counts solutions of z(f^n(V(t))) = z0 whose image lies in the
    bidisk, by the argument principle on a contour just inside the
    parameter disk.  ``z0`` must avoid branch values; near-hits are
    retried with a deterministically perturbed z0.
    """
    if f.is_birational:
        raise ValueError("tangency calculus requires plain compositions")
    if abs(z0) >= geom.R:
        raise ValueError("z0 must lie inside the bidisk")
    _require_horizontal(f, geom, V, n)
    radius = V.rho * (1.0 - 1e-3)

    def make_eval(z0c):
        def fn(t):
            return slice_orbit(f, V, t, n, order=0)[0] - z0c
        return fn

    z0c = complex(z0)
    for attempt in range(4):
        try:
            return _count_zeros(make_eval(z0c), _circle_loop(0.0, radius))
        except ContourThroughZeroError:
            z0c = z0c + (1e-5 + 1e-5j) * geom.R * (attempt + 1)
    raise ContourThroughZeroError("vertical line kept hitting the slice boundary")


def tangency_count(
    f: MapSpec,
    geom: FiltrationGeometry,
    V: Transversal,
    n: int,
    region: str = "bidisk",
) -> int:
    """Vertical tangencies of the n-th slice image, counted in the region."""
    if f.is_birational:
        raise ValueError("tangency calculus requires plain compositions")
    if region != "bidisk":
        raise ValueError("only the bidisk region is supported")
    _require_horizontal(f, geom, V, n)
    zeros = _tangency_zeros(f, geom, V, n, V.rho * (1.0 - 1e-3))
    count = 0
    for t, mult in zeros:
        z, w = _slice_final_point(f, V, np.asarray([t]), n)
        if max(abs(z[0]), abs(w[0])) <= geom.R * (1.0 + 1e-9):
            count += mult
    return count


@dataclass(frozen=True)
class RiemannHurwitzReport:
    n: int
    degree: int
    component_count: int | None
    tangencies_inside: int
    consistent: bool | None


def rh_consistency(
    f: MapSpec,
    geom: FiltrationGeometry,
    V: Transversal,
    n: int,
    raster_n: int = 512,
) -> RiemannHurwitzReport:
    """Check tangencies = degree - components for the n-th slice image."""
    delta = horizontal_degree(f, geom, V, n)
    tangencies = tangency_count(f, geom, V, n, "bidisk")
    rep = label_components(rasterize_slice(f, geom, V, raster_n, n, "forward"))
    k = rep.count
    consistent = None if k is None else (tangencies == delta - k)
    return RiemannHurwitzReport(
        n=n, degree=delta, component_count=k,
        tangencies_inside=tangencies, consistent=consistent,
    )


# ---------------------------------------------------------------------------
# tangency escape test


@dataclass(frozen=True)
class TangencyEscapeResult:
    status: str                      # "all_confined" | "some_escape" | "unresolved"
    witness: dict | None
    checked: tuple                   # (n, zero count) per level


def tangency_escape_test(
    f: MapSpec,
    geom: FiltrationGeometry,
    V: Transversal,
    N: int,
    confine_budget: int = 200,
) -> TangencyEscapeResult:
    """Track every vertical tangency of the first N slice images forward.

    A tangency whose forward orbit escapes is a definite witness against
    connectivity of the slice trace; confinement of all of them up to N
    is the sufficient-condition side.
    """
    if f.is_birational:
        raise ValueError("tangency calculus requires plain compositions")
    checked = []
    saw_unresolved = False
    for n in range(1, N + 1):
        _require_horizontal(f, geom, V, n)
        zeros = _tangency_zeros(f, geom, V, n, V.rho * (1.0 - 1e-3))
        checked.append((n, sum(m for _, m in zeros)))
        for t, mult in zeros:
            z, w = _slice_final_point(f, V, np.asarray([t]), n)
            rec = core.orbit_escape(f, (complex(z[0]), complex(w[0])), confine_budget, geom)
            if rec.verdict == "escaped":
                return TangencyEscapeResult(
                    status="some_escape",
                    witness={
                        "n": n,
                        "t": complex(t),
                        "point": (complex(z[0]), complex(w[0])),
                        "exit_time": rec.exit_time,
                        "multiplicity": mult,
                    },
                    checked=tuple(checked),
                )
            if rec.verdict == "unresolved":
                saw_unresolved = True
    status = "unresolved" if saw_unresolved else "all_confined"
    return TangencyEscapeResult(status=status, witness=None, checked=tuple(checked))
