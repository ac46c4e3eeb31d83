"""Periodic orbits, unstable manifold parametrizations, and the
compact-component diagnostics on unstable leaves.

Periodic orbits are found by Newton iteration.  For single-factor maps
the cyclic shooting system in the z coordinates, seeded from backward
branch sequences of the degenerate one-dimensional limit, enumerates
complete orbit lists up to moderate periods; a coarse grid of planar
Newton seeds catches attracting cycles and serves as the general
fallback.

The unstable manifold of a saddle is represented by a truncated power
series conjugating multiplication by the multiplier to the return map,
extended beyond its validated radius by the dynamics.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from . import core, potential
from .core import ESCAPED, INSIDE, UNRESOLVED, FiltrationGeometry, MapSpec
from .errors import NotASaddleError, ResonanceError

NEUTRAL_BAND = 1e-6


@dataclass(frozen=True)
class PeriodicOrbit:
    period: int
    points: tuple                   # orbit points, canonical point first
    multipliers: tuple              # eigenvalues of the return map, |.| descending
    classification: str             # saddle | attracting | repelling | neutral
    residual: float                 # max cyclic one-step defect over the orbit

    @property
    def is_saddle(self) -> bool:
        return self.classification == "saddle"


def _classify(multipliers) -> str:
    mags = [abs(m) for m in multipliers]
    if any(abs(m - 1.0) <= NEUTRAL_BAND for m in mags):
        return "neutral"
    if all(m < 1.0 for m in mags):
        return "attracting"
    if all(m > 1.0 for m in mags):
        return "repelling"
    return "saddle"


def _iterate_with_jacobian(f: MapSpec, z, w, n: int):
    J = np.zeros(z.shape + (2, 2), dtype=complex)
    J[..., 0, 0] = 1.0
    J[..., 1, 1] = 1.0
    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(n):
            J = core.derivative_many(f, z, w) @ J
            z, w = core.apply_many(f, z, w)
    return z, w, J


def _orbit_multipliers(f: MapSpec, pts) -> tuple:
    """Both eigenvalues of the return map along a stored orbit.

    The dominant eigenvalue comes from the forward Jacobian product;
    the contracting one from the inverse product, whose dominant
    eigenvalue is its reciprocal.  Extracting the small eigenvalue from
    the forward product alone would drown in roundoff scaled by the
    large one.
    """
    Jf = np.eye(2, dtype=complex)
    Jb = np.eye(2, dtype=complex)
    for p in pts:
        D = core.derivative(f, p)
        Jf = D @ Jf
        det = D[0, 0] * D[1, 1] - D[0, 1] * D[1, 0]
        Dinv = np.array([[D[1, 1], -D[0, 1]], [-D[1, 0], D[0, 0]]], dtype=complex) / det
        Jb = Jb @ Dinv
    ef = np.linalg.eigvals(Jf)
    lam_u = ef[int(np.argmax(np.abs(ef)))]
    eb = np.linalg.eigvals(Jb)
    lam_s = 1.0 / eb[int(np.argmax(np.abs(eb)))]
    out = sorted([complex(lam_u), complex(lam_s)], key=lambda m: -abs(m))
    return (out[0], out[1])


def _solve2(J, F):
    # batched 2x2 solve
    a, b = J[..., 0, 0], J[..., 0, 1]
    c, d = J[..., 1, 0], J[..., 1, 1]
    with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
        det = a * d - b * c
        det = np.where(det == 0, np.nan, det)
        s0 = (d * F[..., 0] - b * F[..., 1]) / det
        s1 = (-c * F[..., 0] + a * F[..., 1]) / det
    return s0, s1


def _newton_fixed_points_of_iterate(f: MapSpec, z0, w0, n: int, iters: int = 50):
    z = np.asarray(z0, dtype=complex).ravel().copy()
    w = np.asarray(w0, dtype=complex).ravel().copy()
    for _ in range(iters):
        zi, wi, J = _iterate_with_jacobian(f, z, w, n)
        F = np.stack([zi - z, wi - w], axis=-1)
        J[..., 0, 0] -= 1.0
        J[..., 1, 1] -= 1.0
        s0, s1 = _solve2(J, F)
        bad = ~(np.isfinite(s0) & np.isfinite(s1))
        s0 = np.where(bad, 0, s0)
        s1 = np.where(bad, 0, s1)
        z, w = z - s0, w - s1
        wild = np.maximum(np.abs(z), np.abs(w)) > 1e8
        z[wild], w[wild] = np.nan, np.nan
        if np.nanmax(np.abs(s0) + np.abs(s1), initial=0.0) < 1e-13:
            break
    return z, w


def _branch_seeds(fac, n: int):
    """Backward branch iteration of the one-dimensional limit.

    One seed row per symbol sequence; quadratic factors use the closed
    form inverse, higher degrees fall back to per-value root extraction.
    """
    d = fac.degree
    m = d ** n
    pc = np.asarray(fac.p, dtype=complex)
    if d == 2:
        # normalize z^2 alpha + z beta + gamma to a sqrt form
        gamma, beta, alpha = pc
        signs = ((np.arange(m)[:, None] >> np.arange(n)[None, :]) & 1) * 2.0 - 1.0
        z = np.ones((m, n), dtype=complex)
        shift = beta / (2.0 * alpha)
        with np.errstate(invalid="ignore"):
            for _ in range(3 * n + 24):
                tgt = np.roll(z, -1, axis=1)
                z = signs * np.sqrt((tgt - gamma) / alpha + shift * shift) - shift
        return z
    digits = (np.arange(m)[:, None] // d ** np.arange(n)[None, :]) % d
    z = np.full((m, n), 1.0 + 0.1j, dtype=complex)
    for _ in range(3 * n + 24):
        tgt = np.roll(z, -1, axis=1)
        nz = np.empty_like(z)
        for j in range(n):
            col = np.empty(m, dtype=complex)
            for val in np.unique(tgt[:, j].round(10)):
                sel = tgt[:, j].round(10) == val
                q = pc.copy()
                q[0] -= val
                roots = np.sort_complex(np.roots(q[::-1]))
                col[sel] = roots[digits[sel, j] % len(roots)]
            nz[:, j] = col
        z = nz
    return z


def _shooting_candidates(f: MapSpec, n: int):
    """z-cycles of the single-factor return map via branch-seeded shooting."""
    fac = f.factors[0]
    d = fac.degree
    a = fac.a
    pc = np.asarray(fac.p, dtype=complex)
    if n == 1:
        # z = p(z) + a^2 z has exactly d roots
        coeffs = list(fac.p)
        coeffs[1] = coeffs[1] + a * a - 1.0
        return np.roots(coeffs[::-1]).reshape(-1, 1)
    if d ** n > 1 << 15:
        return np.zeros((0, n), dtype=complex)
    z = _branch_seeds(fac, n)
    z = z[np.isfinite(z).all(axis=1)]
    # cyclic Newton on F_i = p(z_i) + a^2 z_{i-1} - z_{i+1}
    idx = np.arange(n)
    dp = np.polynomial.polynomial.polyder(pc)
    for _ in range(60):
        pz = np.polynomial.polynomial.polyval(z, pc)
        F = pz + a * a * np.roll(z, 1, axis=1) - np.roll(z, -1, axis=1)
        if np.max(np.abs(F)) < 1e-13:
            break
        J = np.zeros((z.shape[0], n, n), dtype=complex)
        J[:, idx, idx] = np.polynomial.polynomial.polyval(z, dp)
        J[:, idx, (idx - 1) % n] += a * a
        J[:, idx, (idx + 1) % n] += -1.0
        try:
            z = z - np.linalg.solve(J, F[..., None])[..., 0]
        except np.linalg.LinAlgError:
            break
    pz = np.polynomial.polynomial.polyval(z, pc)
    F = pz + a * a * np.roll(z, 1, axis=1) - np.roll(z, -1, axis=1)
    ok = np.isfinite(z).all(axis=1) & (np.max(np.abs(F), axis=1) < 1e-11)
    return z[ok]


def periodic_points(
    f: MapSpec,
    geom: FiltrationGeometry,
    n: int,
    grid: int = 24,
    symbolic: bool = True,
) -> list[PeriodicOrbit]:
    """All detected orbits of exact period n inside the bidisk.

    Non-convergent seeds are discarded silently; orbits are polished to
    residual 1e-10, deduplicated, and canonicalized to start at their
    lexicographically minimal point.
    """
    if n < 1:
        raise ValueError("period must be >= 1")
    orbit_rows: list[np.ndarray] = []   # each row: (n, 2) orbit points in order
    if symbolic and len(f.factors) == 1 and f.factors[0].b is None:
        rows = _shooting_candidates(f, n)
        if rows.size:
            a = f.factors[0].a
            pts = np.stack([rows, a * np.roll(rows, 1, axis=1)], axis=-1)
            orbit_rows.extend(pts)
    if grid > 0:
        g = np.linspace(-0.92 * geom.R, 0.92 * geom.R, grid)
        zz = (g[None, :] + 1j * g[:, None]).ravel()
        ww = f.factors[-1].a * zz
        zs, ws = _newton_fixed_points_of_iterate(f, zz, ww, n)
        keep = np.isfinite(zs) & np.isfinite(ws) \
            & (np.maximum(np.abs(zs), np.abs(ws)) <= geom.R * 1.01)
        for z0, w0 in zip(zs[keep], ws[keep]):
            row = np.empty((n, 2), dtype=complex)
            row[0] = (z0, w0)
            for i in range(1, n):
                row[i] = core.apply(f, (row[i - 1, 0], row[i - 1, 1]))
            orbit_rows.append(row)
    if not orbit_rows:
        return []

    orbits: list[PeriodicOrbit] = []
    seen: set = set()
    for row in orbit_rows:
        # cyclic one-step residual avoids the |multiplier|^n amplification
        # of the iterated fixed-point residual
        zi, wi = core.apply_many(f, row[:, 0], row[:, 1])
        res = float(np.max(np.abs(zi - np.roll(row[:, 0], -1))
                           + np.abs(wi - np.roll(row[:, 1], -1))))
        if not np.isfinite(res) or res > 1e-10:
            continue
        if np.max(np.abs(row)) > geom.R * 1.0001:
            continue
        key = tuple(sorted((round(p[0].real, 7), round(p[0].imag, 7),
                            round(p[1].real, 7), round(p[1].imag, 7)) for p in row))
        if key in seen:
            continue
        seen.add(key)
        # exact period: the stored sequence must not close at a proper divisor
        exact = True
        for k in range(1, n):
            if n % k == 0:
                if np.max(np.abs(row - np.roll(row, -k, axis=0))) < 1e-8:
                    exact = False
                    break
        if not exact:
            continue
        pts = [(complex(p[0]), complex(p[1])) for p in row]
        base_idx = min(range(n), key=lambda i: (pts[i][0].real, pts[i][0].imag,
                                                pts[i][1].real, pts[i][1].imag))
        pts = pts[base_idx:] + pts[:base_idx]
        mults = _orbit_multipliers(f, pts)
        orbits.append(
            PeriodicOrbit(
                period=n,
                points=tuple(pts),
                multipliers=mults,
                classification=_classify(mults),
                residual=res,
            )
        )
    orbits.sort(key=lambda o: (o.points[0][0].real, o.points[0][0].imag,
                               o.points[0][1].real, o.points[0][1].imag))
    return orbits


def saddle_orbits(f: MapSpec, geom: FiltrationGeometry, max_period: int, **kw) -> list[PeriodicOrbit]:
    out = []
    for n in range(1, max_period + 1):
        out.extend(o for o in periodic_points(f, geom, n, **kw) if o.is_saddle)
    return out


def find_attracting_orbits(
    f: MapSpec,
    geom: FiltrationGeometry,
    nmax: int,
    grid: int = 24,
    probe_grid: int = 16,
    probe_budget: int = 600,
) -> list[PeriodicOrbit]:
    """Attracting cycles of period <= nmax, from Newton plus basin probes."""
    found: dict = {}
    for n in range(1, nmax + 1):
        for o in periodic_points(f, geom, n, grid=grid):
            if o.classification == "attracting":
                key = tuple(sorted((round(p[0].real, 6), round(p[0].imag, 6)) for p in o.points))
                found.setdefault(key, o)
    if nmax >= 1 and probe_grid > 0:
        g = np.linspace(-0.9 * geom.R, 0.9 * geom.R, probe_grid)
        z = np.repeat(g, probe_grid).astype(complex)
        w = np.tile(g, probe_grid).astype(complex)
        verdict, _, zl, wl = core.orbit_escape_many(f, z, w, probe_budget, geom, "forward")
        zi, wi = zl[verdict == INSIDE], wl[verdict == INSIDE]
        # a bounded probe endpoint near a cycle yields a Newton seed
        for n in range(1, nmax + 1):
            if zi.size == 0:
                break
            zn, wn = zi.copy(), wi.copy()
            for _ in range(n):
                zn, wn = core.apply_many(f, zn, wn)
            near = (np.abs(zn - zi) + np.abs(wn - wi)) < 1e-3
            if not near.any():
                continue
            zs, ws = _newton_fixed_points_of_iterate(f, zi[near], wi[near], n)
            ok = np.isfinite(zs) & np.isfinite(ws)
            for zz0, ww0 in zip(zs[ok], ws[ok]):
                pts = [(complex(zz0), complex(ww0))]
                for _ in range(n - 1):
                    pts.append(core.apply(f, pts[-1]))
                xk = core.apply(f, pts[-1])
                if abs(xk[0] - pts[0][0]) + abs(xk[1] - pts[0][1]) > 1e-10:
                    continue
                exact = True
                for k in range(1, n):
                    if n % k == 0:
                        xj = pts[0]
                        for _ in range(k):
                            xj = core.apply(f, xj)
                        if abs(xj[0] - pts[0][0]) + abs(xj[1] - pts[0][1]) < 1e-8:
                            exact = False
                            break
                if not exact:
                    continue
                mults = _orbit_multipliers(f, pts)
                if _classify(mults) != "attracting":
                    continue
                key = tuple(sorted((round(p[0].real, 6), round(p[0].imag, 6)) for p in pts))
                if key not in found:
                    found[key] = PeriodicOrbit(
                        period=n, points=tuple(pts),
                        multipliers=mults,
                        classification="attracting",
                        residual=float(abs(xk[0] - pts[0][0]) + abs(xk[1] - pts[0][1])),
                    )
    out = list(found.values())
    out.sort(key=lambda o: (o.period, o.points[0][0].real, o.points[0][0].imag))
    return out


# ---------------------------------------------------------------------------
# unstable manifold series


@dataclass(frozen=True, eq=False)
class LeafParametrization:
    """Truncated series psi with f^period(psi(t)) = psi(lambda t)."""

    map: MapSpec
    period: int
    base: tuple
    lam: complex
    coeffs: np.ndarray              # (order + 1, 2) complex
    order: int
    radius: float
    residual: float


def _series_apply(f: MapSpec, Cz: np.ndarray, Cw: np.ndarray, period: int):
    L = len(Cz)
    for _ in range(period):
        for fac in f.factors:
            res = np.zeros(L, dtype=complex)
            res[0] = fac.p[-1]
            for c in fac.p[-2::-1]:
                res = np.convolve(res, Cz)[:L]
                res[0] += c
            if fac.b is None:
                nz = fac.a * Cw + res
            else:
                bs = np.zeros(L, dtype=complex)
                bs[0] = fac.b[-1]
                for c in fac.b[-2::-1]:
                    bs = np.convolve(bs, Cz)[:L]
                    bs[0] += c
                bs[0] += fac.a
                nz = np.convolve(bs, Cw)[:L] + res
            nw = fac.a * Cz
            Cz, Cw = nz, nw
    return Cz, Cw


def _series_eval(coeffs: np.ndarray, t):
    t = np.asarray(t, dtype=complex)
    out = np.zeros(t.shape + (2,), dtype=complex)
    for k in range(coeffs.shape[0] - 1, -1, -1):
        out = out * t[..., None] + coeffs[k]
    return out


def _conjugacy_residual(psi_coeffs, lam, f, period, r, samples=100):
    th = np.exp(2j * np.pi * np.arange(samples) / samples)
    t = np.concatenate([r * th[: samples * 2 // 3], 0.7 * r * th[samples * 2 // 3:]])
    P = _series_eval(psi_coeffs, t)
    z, w = P[..., 0], P[..., 1]
    for _ in range(period):
        z, w = core.apply_many(f, z, w)
    Q = _series_eval(psi_coeffs, lam * t)
    return float(np.max(np.abs(z - Q[..., 0]) + np.abs(w - Q[..., 1])))


def unstable_parametrization(f: MapSpec, orbit: PeriodicOrbit, order: int = 30) -> LeafParametrization:
    """Series for the unstable manifold of a saddle orbit.

    Coefficients are solved recursively from the homological equations
    (lam^k I - A) c_k = N_k; the radius is validated a posteriori as the
    largest dyadic radius with conjugacy residual below 1e-9.
    """
    if not orbit.is_saddle:
        raise NotASaddleError(f"orbit is {orbit.classification}")
    base = orbit.points[0]
    n = orbit.period
    _, _, J = _iterate_with_jacobian(f, np.asarray([base[0]]), np.asarray([base[1]]), n)
    A = J[0]
    evals, evecs = np.linalg.eig(A)
    iu = int(np.argmax(np.abs(evals)))
    lam = complex(evals[iu])
    v = evecs[:, iu]
    # deterministic phase: largest component real positive
    j = int(np.argmax(np.abs(v)))
    v = v / v[j] * abs(v[j])
    v = v / np.linalg.norm(v)

    C = np.zeros((order + 1, 2), dtype=complex)
    C[0] = (base[0], base[1])
    C[1] = v
    I2 = np.eye(2, dtype=complex)
    for k in range(2, order + 1):
        Cz = C[: k + 1, 0].copy()
        Cw = C[: k + 1, 1].copy()
        Cz[k] = 0.0
        Cw[k] = 0.0
        Sz, Sw = _series_apply(f, Cz, Cw, n)
        Nk = np.array([Sz[k], Sw[k]])
        Mk = lam ** k * I2 - A
        if abs(np.linalg.det(Mk)) < 1e-10 * max(1.0, abs(lam) ** (2 * k)):
            raise ResonanceError(f"multiplier power lam^{k} collides with the linearization")
        C[k] = np.linalg.solve(Mk, Nk)

    radius = None
    achieved = np.inf
    r = 4.0
    for _ in range(50):
        res = _conjugacy_residual(C, lam, f, n, r)
        if res <= 1e-9:
            radius = r
            achieved = res
            break
        r *= 0.5
    if radius is None:
        raise ResonanceError("series failed to validate at any dyadic radius")
    return LeafParametrization(
        map=f, period=n, base=base, lam=lam, coeffs=C,
        order=order, radius=radius, residual=achieved,
    )


def leaf_eval_many(psi: LeafParametrization, t, with_bound: bool = False):
    """Evaluate the leaf at any chart parameter via dynamics extension.

    Parameters beyond half the validated radius are contracted by the
    multiplier and pushed forward; the reported error bound is the
    conjugacy residual amplified by the product of (clipped) Jacobian
    norms along the push.
    """
    t = np.asarray(t, dtype=complex)
    shape = t.shape
    t = t.ravel()
    # lifting deeper than the validated radius would require keeps the
    # series truncation error far below the push-forward amplification
    r2 = psi.radius / 4.0
    absl = abs(psi.lam)
    m = np.zeros(t.shape, dtype=np.int64)
    big = np.abs(t) > r2
    m[big] = np.ceil(np.log(np.abs(t[big]) / r2) / np.log(absl)).astype(np.int64)
    tt = t / psi.lam ** m
    P = _series_eval(psi.coeffs, tt)
    z, w = P[..., 0].copy(), P[..., 1].copy()
    bound = np.full(t.shape, psi.residual if psi.residual > 0 else 1e-16)
    mmax = int(m.max()) if m.size else 0
    with np.errstate(over="ignore", invalid="ignore"):
        for j in range(mmax):
            # points that already left the representable range stop moving
            act = (m > j) & (np.maximum(np.abs(z), np.abs(w)) < core.OVERFLOW_LIMIT)
            if not act.any():
                break
            zi, wi = z[act], w[act]
            for _ in range(psi.period):
                if with_bound:
                    Jm = core.derivative_many(psi.map, zi, wi)
                    nrm = np.sqrt(np.abs(Jm[..., 0, 0]) ** 2 + np.abs(Jm[..., 0, 1]) ** 2
                                  + np.abs(Jm[..., 1, 0]) ** 2 + np.abs(Jm[..., 1, 1]) ** 2)
                    bound[act] = bound[act] * np.maximum(1.0, nrm)
                zi, wi = core.apply_many(psi.map, zi, wi)
            z[act], w[act] = zi, wi
    pts = np.stack([z, w], axis=-1).reshape(shape + (2,))
    if with_bound:
        return pts, bound.reshape(shape)
    return pts


def leaf_eval(psi: LeafParametrization, t) -> tuple[complex, complex]:
    P = leaf_eval_many(psi, np.asarray([t]))
    return (complex(P[0, 0]), complex(P[0, 1]))


def leaf_eval_bound(psi: LeafParametrization, t):
    P, b = leaf_eval_many(psi, np.asarray([t]), with_bound=True)
    return (complex(P[0, 0]), complex(P[0, 1])), float(b[0])


# ---------------------------------------------------------------------------
# unstable connectivity


@dataclass(frozen=True)
class UnstableConnectivityResult:
    status: str                 # connected_evidence | disconnected_evidence | unresolved
    witness: dict | None
    islands: tuple              # (level_rho, budget, count)
    critical_points: tuple      # (level_rho, annulus, count or None)
    coverage_ok: bool


def _enclosed_islands(inb: np.ndarray, N: int):
    """Components of the in-mask fully ringed by out-cells, center excluded."""
    lab, nlab = ndimage.label(inb)
    hits = []
    center_label = lab[N // 2, N // 2]
    for L in range(1, nlab + 1):
        if L == center_label:
            continue
        mask = lab == L
        if mask[0, :].any() or mask[-1, :].any() or mask[:, 0].any() or mask[:, -1].any():
            continue
        ring = ndimage.binary_dilation(mask) & ~mask
        if (~inb[ring]).all():
            hits.append(mask)
    return hits


def _verify_enclosure(f, geom, psi, T, mask, budget, chart_res, rho, samples_per_edge=256):
    """Certify a candidate island with a closed curve of escaping points.

    A rectangle around the island is sampled densely; the enclosure is
    genuine only if every sample escapes within the budget.  This
    rejects raster artifacts where the trace connects onward through a
    sub-cell channel, e.g. near pinch points of a connected slice.
    """
    ii, jj = np.nonzero(mask)
    h = 2.0 * rho / chart_res
    re_min, re_max = T.real[ii, jj].min(), T.real[ii, jj].max()
    im_min, im_max = T.imag[ii, jj].min(), T.imag[ii, jj].max()
    for margin in (1.0, 1.75, 2.5):
        m = margin * h
        a, b = re_min - m, re_max + m
        c, d = im_min - m, im_max + m
        if max(abs(a), abs(b), abs(c), abs(d)) >= rho:
            continue
        s = np.linspace(0.0, 1.0, samples_per_edge, endpoint=False)
        edge = np.concatenate([
            a + s * (b - a) + 1j * c,
            b + 1j * (c + s * (d - c)),
            b - s * (b - a) + 1j * d,
            a + 1j * (d - s * (d - c)),
        ])
        P = leaf_eval_many(psi, edge)
        verdict, _, _, _ = core.orbit_escape_many(
            f, P[..., 0], P[..., 1], budget, geom, "forward"
        )
        if np.all(verdict == core.ESCAPED):
            return True
    return False


def unstable_connectivity_test(
    f: MapSpec,
    geom: FiltrationGeometry,
    psi: LeafParametrization,
    levels: int = 8,
    chart_res: int = 160,
    budgets=(1, 2, 3, 4, 6, 8),
    annulus_budget: int = 200,
    ev: potential.PotentialEvaluator | None = None,
) -> UnstableConnectivityResult:
    """Two-detector search for compactly enclosed pieces of the leaf trace.

    Detector one rasters the leaf chart against the finite-depth bounded
    sets and looks for an inside component enclosed by an escaped ring.
    Detector two counts critical points of the escape rate restricted to
    the leaf on fully escaped annuli by the argument principle.  Either
    witness is definite evidence against unstable connectivity; a clean
    sweep over all levels is reported as supporting evidence only.
    """
    if ev is None:
        ev = potential.PotentialEvaluator(map=f, geom=geom)
    rho0 = psi.radius / 2.0
    island_rows = []
    crit_rows = []
    witness = None
    unresolved_seen = False

    for j in range(levels):
        rho = rho0 * 2.0 ** j
        g = (np.arange(chart_res) + 0.5) * (2.0 * rho / chart_res) - rho
        T = g[None, :] + 1j * g[:, None]
        P = leaf_eval_many(psi, T)
        z, w = P[..., 0], P[..., 1]
        for budget in budgets:
            verdict, _, _, _ = core.orbit_escape_many(f, z, w, budget, geom, "forward")
            if np.mean(verdict == UNRESOLVED) > 0.05:
                unresolved_seen = True
            inb = verdict != ESCAPED      # merge unresolved into the island mask
            hits = _enclosed_islands(inb, chart_res)
            # a witness must contain a cell that is definitely not escaped
            # and survive the continuous enclosing-curve certificate
            hits = [h for h in hits if (verdict[h] == INSIDE).any()]
            verified = [
                h for h in hits
                if _verify_enclosure(f, geom, psi, T, h, budget, chart_res, rho)
            ]
            island_rows.append((rho, budget, len(verified)))
            if verified and witness is None:
                cur = verified[0]
                ii, jj = np.nonzero(cur)
                tc = complex(T[ii[0], jj[0]])
                witness = {
                    "kind": "enclosed_component",
                    "level_rho": rho,
                    "budget": budget,
                    "t": tc,
                    "point": leaf_eval(psi, tc),
                    "pixels": int(cur.sum()),
                }
        # detector two: escape-rate critical points on escaped annuli
        for r_in, r_out in ((0.55 * rho, 0.75 * rho), (0.75 * rho, 0.95 * rho)):
            cnt = _leaf_critical_count(ev, psi, r_in, r_out, annulus_budget)
            crit_rows.append((rho, (r_in, r_out), cnt))
            if cnt is not None and cnt > 0 and witness is None:
                witness = {
                    "kind": "leaf_critical_point",
                    "level_rho": rho,
                    "annulus": (r_in, r_out),
                    "count": cnt,
                }

    # an exhaustive clean sweep needs the level ladder to cover at least one
    # fundamental annulus of the leaf dynamics
    coverage_ok = levels >= 2 and 2.0 ** (levels - 1) >= abs(psi.lam)
    if witness is not None:
        status = "disconnected_evidence"
    elif coverage_ok and not unresolved_seen:
        status = "connected_evidence"
    else:
        status = "unresolved"
    return UnstableConnectivityResult(
        status=status,
        witness=witness,
        islands=tuple(island_rows),
        critical_points=tuple(crit_rows),
        coverage_ok=coverage_ok,
    )


def _leaf_critical_count(ev, psi, r_in, r_out, budget, samples=512):
    """Zeros of the derivative of the escape rate along the leaf in an annulus.

    Returns None when the annulus is not fully escaped or the winding
    fails to certify.
    """
    f = ev.map
    d = f.degree
    # the annulus must consist of escaped points with a common lift depth
    th = np.linspace(0.0, 2.0 * np.pi, 64, endpoint=False)
    probe = np.concatenate([r * np.exp(1j * th) for r in np.linspace(r_in, r_out, 5)])
    P = leaf_eval_many(psi, probe)
    verdict, exit_time, _, _ = core.orbit_escape_many(
        f, P[..., 0], P[..., 1], budget, ev.geom, "forward"
    )
    if not np.all(verdict == ESCAPED):
        return None
    m = int(exit_time.max()) + 2
    if 2.0 * np.pi * d ** (-m) < 1e-3:
        return None                      # lift too deep for stable branch snapping
    h = 1e-6 * (r_out - r_in)
    two_pi_dm = 2.0 * np.pi * d ** (-m)

    def lifted_log(t):
        # lift each point only as deep as doubles allow; the functional
        # equation keeps mixed depths consistent modulo 2 pi d^-m
        P = leaf_eval_many(psi, t)
        z, w = P[..., 0].copy().ravel(), P[..., 1].copy().ravel()
        k = np.zeros(z.shape, dtype=np.int64)
        with np.errstate(over="ignore", invalid="ignore"):
            for _ in range(m):
                act = np.abs(z) < 1e40
                if not act.any():
                    break
                zn, wn = core.apply_many(f, z[act], w[act])
                z[act], w[act] = zn, wn
                k[act] += 1
        if not np.all(ev.geom.in_vplus(z, w)):
            raise ValueError("annulus lift failed to reach the escape region")
        S, _, bad = potential.log_bottcher_many(ev, z, w)
        if bad.any():
            raise ValueError("branch failure inside annulus lift")
        return (S * np.power(float(d), -k.astype(float))).reshape(np.shape(t))

    def deriv(t):
        t = np.asarray(t, dtype=complex)
        a = lifted_log(t + h)
        b = lifted_log(t - h)
        diff = a - b
        # realign the 2 pi d^-m branch jumps of the lifted log
        k = np.round(diff.imag / two_pi_dm)
        diff = diff - 1j * k * two_pi_dm
        return diff / (2.0 * h)

    from .slices import certified_winding
    from .errors import ContourThroughZeroError, ZeroClusterError

    def loop(radius):
        def fn(n):
            ang = np.linspace(0.0, 2.0 * np.pi, n, endpoint=False)
            return deriv(radius * np.exp(1j * ang))
        return fn

    try:
        w_out = certified_winding(loop(r_out), n0=256, max_doublings=4)
        w_in = certified_winding(loop(r_in), n0=256, max_doublings=4)
    except (ContourThroughZeroError, ZeroClusterError, ValueError):
        return None
    count = w_out - w_in
    return count if count >= 0 else None


@dataclass(frozen=True)
class SaddleIndependenceReport:
    statuses: tuple
    failure: bool


def saddle_independence_check(
    f: MapSpec,
    geom: FiltrationGeometry,
    saddles,
    **kwargs,
) -> SaddleIndependenceReport:
    """Run the unstable connectivity test on several saddles and compare.

    Definite verdicts must agree across saddles of the same map; any
    contradiction is flagged as a failure.
    """
    saddles = list(saddles)
    if len(saddles) < 2:
        raise ValueError("at least two saddles are required")
    statuses = []
    for orbit in saddles:
        psi = unstable_parametrization(f, orbit)
        res = unstable_connectivity_test(f, geom, psi, **kwargs)
        statuses.append((orbit.period, orbit.points[0], res.status))
    definite = {s for _, _, s in statuses if s != "unresolved"}
    return SaddleIndependenceReport(statuses=tuple(statuses), failure=len(definite) > 1)
