"""External rays on unstable leaves and empirical measure comparison.

Rays are descending gradient lines of the escape rate restricted to a
leaf chart.  Starts are placed on a level curve of the potential,
equidistributed with respect to the conjugate differential (equal
increments of the lifted projection argument); landings accumulate into
a weighted point cloud comparable against the saddle-orbit measure by
coarse-box total variation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import core, potential, saddles
from .core import ESCAPED, INSIDE, UNRESOLVED, FiltrationGeometry, MapSpec
from .errors import EmptySetError, LevelNotFoundError


@dataclass(frozen=True)
class RayPath:
    samples: tuple                 # (t, potential value) pairs, strictly decreasing
    landing: tuple | None          # point of C^2 or None
    status: str                    # landed | hit_critical_point | budget_exhausted
    t_final: complex


@dataclass(frozen=True)
class EmpiricalMeasure:
    points: np.ndarray             # (n, 2) complex
    weights: np.ndarray            # (n,) nonnegative, sums to 1
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.points) == 0:
            raise EmptySetError("empirical measure needs at least one point")
        s = float(np.sum(self.weights))
        if abs(s - 1.0) > 1e-12:
            raise ValueError("weights must sum to 1")
        if np.any(self.weights < 0):
            raise ValueError("weights must be nonnegative")


def _leaf_green_many(ev, psi, t):
    P = saddles.leaf_eval_many(psi, t)
    vals, verdict = potential.green_many(ev, P[..., 0], P[..., 1], "forward")
    vals = np.where(verdict == INSIDE, 0.0, vals)
    return vals


def _flow_evaluator(ev, floor=250):
    """Budget-reduced clone for flow stencils.

    Points that stay bounded this long sit far below any landing
    threshold of interest, so the cheaper verdict changes nothing.
    """
    import dataclasses

    if ev.nmax <= floor:
        return ev
    return dataclasses.replace(ev, nmax=floor)


def _leaf_green_grad(ev, psi, t, h):
    """Value and gradient (as u_x + i u_y) of the leaf potential."""
    t = np.asarray(t, dtype=complex)
    pts = np.stack([t, t + h, t - h, t + 1j * h, t - 1j * h])
    vals = _leaf_green_many(ev, psi, pts)
    u = vals[0]
    ux = (vals[1] - vals[2]) / (2.0 * h)
    uy = (vals[3] - vals[4]) / (2.0 * h)
    return u, ux + 1j * uy


# ---------------------------------------------------------------------------
# level curve and ray starts


def _find_level_crossing(ev, psi, level, chart_rho, probes=64):
    """First crossing of the potential level along radial probes."""
    radii = np.linspace(1e-3 * chart_rho, chart_rho, 48)
    for k in range(probes):
        th = 2.0 * np.pi * k / probes
        tline = radii * np.exp(1j * th)
        vals = _leaf_green_many(ev, psi, tline)
        vals = np.where(np.isnan(vals), np.inf, vals)
        below = vals < level
        above = vals >= level
        idx = np.nonzero(below[:-1] & above[1:])[0]
        if idx.size == 0:
            continue
        a, b = radii[idx[0]], radii[idx[0] + 1]
        for _ in range(60):
            mfrac = 0.5 * (a + b)
            v = float(_leaf_green_many(ev, psi, np.asarray([mfrac * np.exp(1j * th)]))[0])
            if v < level:
                a = mfrac
            else:
                b = mfrac
        return 0.5 * (a + b) * np.exp(1j * th)
    raise LevelNotFoundError(f"no crossing of level {level} on the probed chart")


def _lifted_log_factory(ev, psi, depth):
    """Complexified leaf potential d^-m log(projection of the m-th image).

    Real part is the leaf escape rate, imaginary part the conjugate flow
    coordinate; values carry a branch ambiguity of 2 pi d^-m.
    """
    f = ev.map
    d = f.degree

    def lifted(t):
        t = np.asarray(t, dtype=complex)
        P = saddles.leaf_eval_many(psi, t)
        z, w = P[..., 0].copy().ravel(), P[..., 1].copy().ravel()
        k = np.zeros(z.shape, dtype=np.int64)
        with np.errstate(over="ignore", invalid="ignore"):
            for _ in range(depth):
                act = np.abs(z) < 1e40
                if not act.any():
                    break
                zn, wn = core.apply_many(f, z[act], w[act])
                z[act], w[act] = zn, wn
                k[act] += 1
        if not np.all(ev.geom.in_vplus(z, w)):
            raise LevelNotFoundError("lift failed to reach the escape region")
        S, _, bad = potential.log_bottcher_many(ev, z, w)
        if bad.any():
            raise LevelNotFoundError("projection branch failure during lift")
        return (S * np.power(float(d), -k.astype(float))).reshape(t.shape)

    return lifted


def _level_crossings(ev, psi, level, chart_rho, probes):
    """First crossings of the level along radial probes, bisected in batch."""
    radii = np.linspace(1e-3 * chart_rho, chart_rho, 96)
    th = np.linspace(0.0, 2.0 * np.pi, probes, endpoint=False)
    ey = np.exp(1j * th)
    vals = _leaf_green_many(ev, psi, radii[None, :] * ey[:, None])
    vals = np.where(np.isnan(vals), np.inf, vals)
    below = (vals[:, :-1] < level) & (vals[:, 1:] >= level)
    has = below.any(axis=1)
    if not has.any():
        raise LevelNotFoundError(f"no crossing of level {level} on the probed chart")
    first = np.argmax(below, axis=1)
    idx = np.flatnonzero(has)
    lo = radii[first][idx]
    hi = radii[first + 1][idx]
    e = ey[idx]
    for _ in range(52):
        mid = 0.5 * (lo + hi)
        v = _leaf_green_many(ev, psi, mid * e)
        low = v < level
        lo = np.where(low, mid, lo)
        hi = np.where(low, hi, mid)
    return 0.5 * (lo + hi) * e


def _leaf_log_projection(ev, psi, t):
    """log of the invariant projection along the leaf, direct domain only."""
    t = np.asarray(t, dtype=complex)
    P = saddles.leaf_eval_many(psi, t)
    z, w = P[..., 0].ravel(), P[..., 1].ravel()
    if not np.all(ev.geom.in_vplus(z, w)):
        raise LevelNotFoundError("point left the projection domain")
    S, _, bad = potential.log_bottcher_many(ev, z, w)
    if bad.any():
        raise LevelNotFoundError("projection branch failure")
    return S.reshape(t.shape)


def _wrap_angle(x):
    return (x + np.pi) % (2.0 * np.pi) - np.pi


def sample_ray_starts(
    ev: potential.PotentialEvaluator,
    psi: saddles.LeafParametrization,
    level: float,
    count: int,
    chart_rho: float | None = None,
    probes: int = 512,
) -> list[complex]:
    """Starts on the level set of the leaf potential, flow-equidistributed.

    On levels inside the projection domain each start solves
    log-projection = level + i alpha_j for equally spaced target
    arguments by complex Newton, seeded from radial-probe crossings.
    Lower levels are sampled at a projection-domain level first and
    carried down the gradient flow, under which the flow measure is
    invariant.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    if chart_rho is None:
        chart_rho = psi.radius * 2.0 ** 7
    probes = max(probes, 8 * count)
    ev = _flow_evaluator(ev)

    # prefer solving at the requested level; raise it into the projection
    # domain only when needed, descending back along the flow afterwards
    tpts = S = None
    level_direct = level
    for cand in (level, max(level, float(np.log(ev.geom.R)) + 0.35)):
        try:
            pts = _level_crossings(ev, psi, cand, chart_rho, probes)
            S = _leaf_log_projection(ev, psi, pts)
            tpts, level_direct = pts, cand
            break
        except LevelNotFoundError:
            continue
    if tpts is None:
        raise LevelNotFoundError(f"no usable crossing of level {level}")
    args = S.imag

    alpha0 = float(args[0])
    targets = alpha0 + 2.0 * np.pi * (np.arange(count) + 0.5) / count
    starts: list[complex] = []
    for alpha in targets:
        order = np.argsort(np.abs(_wrap_angle(args - alpha)))
        t_sol = None
        for seed_idx in order[:8]:
            t = complex(tpts[seed_idx])
            h = 1e-7 * abs(t) + 1e-14
            ok = False
            try:
                for _ in range(24):
                    s0 = complex(_leaf_log_projection(ev, psi, np.asarray([t]))[0])
                    err = (s0.real - level_direct) + 1j * _wrap_angle(s0.imag - alpha)
                    if abs(err) < 1e-12:
                        ok = True
                        break
                    s1 = complex(_leaf_log_projection(ev, psi, np.asarray([t + h]))[0])
                    der = (s1 - s0) / h
                    if der == 0 or not np.isfinite(der):
                        break
                    t = t - err / der
            except LevelNotFoundError:
                ok = False
            if ok:
                t_sol = t
                break
        if t_sol is None:
            raise LevelNotFoundError(
                f"could not place a start at target argument {alpha:.6f}"
            )
        starts.append(complex(t_sol))

    if level_direct > level:
        starts = _descend_to_level(ev, psi, starts, level)
    return starts


def _descend_to_level(ev, psi, starts, level, max_steps=2000, kappa=0.3):
    """Carry level-set points down the gradient flow to a lower level."""
    out = []
    for t0 in starts:
        t = complex(t0)
        h = 1e-7 * (abs(t) + 1.0)
        u, g = _leaf_green_grad_batch(ev, psi, np.asarray([t]), np.asarray([h]))
        ui, gi = float(u[0]), complex(g[0])
        for _ in range(max_steps):
            if ui <= level:
                break
            gn = abs(gi)
            if gn < 1e-12:
                raise LevelNotFoundError("gradient vanished while descending levels")
            sigma = min(kappa * (ui - level * 0.5) / gn, 0.25 * abs(t) + 0.05 * psi.radius)
            tn = t - sigma * gi / gn
            hn = max(1e-4 * sigma, 1e-250)
            un, gg = _leaf_green_grad_batch(ev, psi, np.asarray([tn]), np.asarray([hn]))
            for _ in range(8):
                if float(un[0]) < ui:
                    break
                sigma *= 0.5
                tn = t - sigma * gi / gn
                hn = max(1e-4 * sigma, 1e-250)
                un, gg = _leaf_green_grad_batch(ev, psi, np.asarray([tn]), np.asarray([hn]))
            if not float(un[0]) < ui:
                raise LevelNotFoundError("descent stalled while changing levels")
            t, ui, gi, h = tn, float(un[0]), complex(gg[0]), hn
        # polish onto the target level along the gradient
        for _ in range(12):
            u, g = _leaf_green_grad_batch(ev, psi, np.asarray([t]), np.asarray([h]))
            ui, gi = float(u[0]), complex(g[0])
            if abs(ui - level) < 1e-9 or abs(gi) < 1e-14:
                break
            t = t - (ui - level) * gi / abs(gi) ** 2
        out.append(complex(t))
    return out


# ---------------------------------------------------------------------------
# ray tracing


def trace_ray(
    ev: potential.PotentialEvaluator,
    psi: saddles.LeafParametrization,
    t0: complex,
    eps: float = 1e-4,
    max_steps: int = 2000,
    kappa: float = 0.3,
) -> RayPath:
    paths = trace_rays(ev, psi, [t0], eps, max_steps, kappa)
    return paths[0]


def trace_rays(
    ev: potential.PotentialEvaluator,
    psi: saddles.LeafParametrization,
    starts,
    eps: float = 1e-4,
    max_steps: int = 2000,
    kappa: float = 0.3,
) -> list[RayPath]:
    """Descend the leaf potential from every start until landing.

    Steps are proportional to G/|grad G| (capped), so the potential
    decays geometrically along the ray; a vanishing gradient above the
    landing threshold reports a critical-point hit.  Recorded samples
    are strictly decreasing in G by construction.
    """
    starts = np.asarray(starts, dtype=complex)
    ev = _flow_evaluator(ev)
    n = starts.size
    t = starts.copy()
    # finite-difference scale tracks the local step size, which shrinks
    # with the potential as the ray threads ever finer channels
    h = 1e-7 * (np.abs(starts) + 1.0)
    status = np.full(n, -1, dtype=np.int8)   # -1 active, 0 landed, 1 critical, 2 budget
    samples: list[list] = [[] for _ in range(n)]

    u, g = _leaf_green_grad_batch(ev, psi, t, h)
    for i in range(n):
        samples[i].append((complex(t[i]), float(u[i])))
    landed_now = u <= eps
    status[landed_now] = 0

    for _ in range(max_steps):
        act = status == -1
        if not act.any():
            break
        idx = np.flatnonzero(act)
        gi = g[idx]
        ui = u[idx]
        gn = np.abs(gi)
        crit = gn < 1e-12
        status[idx[crit]] = 1
        keep = ~crit
        idx = idx[keep]
        if idx.size == 0:
            continue
        gi, ui, gn = gi[keep], ui[keep], gn[keep]
        sigma = np.minimum(kappa * ui / gn, 0.25 * np.abs(t[idx]) + 0.05 * psi.radius)
        stalled_mask = np.zeros(idx.size, dtype=bool)
        tn = t[idx] - sigma * gi / gn
        hn = np.maximum(1e-4 * sigma, 1e-250)
        un, gnn = _leaf_green_grad_batch(ev, psi, tn, hn)
        # enforce strict descent, halving on failure
        for _ in range(8):
            fail = ~(un < ui)
            if not fail.any():
                break
            sigma[fail] *= 0.5
            tn[fail] = t[idx[fail]] - sigma[fail] * gi[fail] / gn[fail]
            hn[fail] = np.maximum(1e-4 * sigma[fail], 1e-250)
            un2, gn2 = _leaf_green_grad_batch(ev, psi, tn[fail], hn[fail])
            un[fail], gnn[fail] = un2, gn2
        ok = un < ui
        status[idx[~ok]] = 2
        good = idx[ok]
        t[good] = tn[ok]
        u[good], g[good] = un[ok], gnn[ok]
        h[good] = hn[ok]
        for i in good:
            samples[i].append((complex(t[i]), float(u[i])))
        landed_now = np.flatnonzero((status == -1) & (u <= eps))
        status[landed_now] = 0
    status[status == -1] = 2

    # landing refinement: a few bisection steps along the final segment
    out = []
    names = {0: "landed", 1: "hit_critical_point", 2: "budget_exhausted"}
    for i in range(n):
        st = names[int(status[i])]
        t_fin = complex(t[i])
        landing = None
        if st == "landed" and len(samples[i]) >= 2:
            ta = samples[i][-2][0]
            tb = samples[i][-1][0]
            for _ in range(3):
                tm = 0.5 * (ta + tb)
                um = float(_leaf_green_many(ev, psi, np.asarray([tm]))[0])
                if um > eps:
                    ta = tm
                else:
                    tb = tm
            t_fin = tb
        if st == "landed":
            landing = saddles.leaf_eval(psi, t_fin)
        out.append(RayPath(samples=tuple(samples[i]), landing=landing,
                           status=st, t_final=t_fin))
    return out


def _leaf_green_grad_batch(ev, psi, t, h):
    t = np.asarray(t, dtype=complex)
    h = np.asarray(h, dtype=float)
    pts = np.concatenate([t, t + h, t - h, t + 1j * h, t - 1j * h])
    vals = _leaf_green_many(ev, psi, pts)
    n = t.size
    u = vals[:n]
    ux = (vals[n:2 * n] - vals[2 * n:3 * n]) / (2.0 * h)
    uy = (vals[3 * n:4 * n] - vals[4 * n:]) / (2.0 * h)
    u = np.where(np.isnan(u), np.inf, u)
    return u, ux + 1j * uy


# ---------------------------------------------------------------------------
# measures


def landing_measure(
    ev: potential.PotentialEvaluator,
    psi: saddles.LeafParametrization,
    level: float,
    eps: float,
    count: int,
    chart_rho: float | None = None,
) -> EmpiricalMeasure:
    """Equal-weight measure on ray landing points from one leaf chart."""
    if count < 1:
        raise ValueError("count must be >= 1")
    starts = sample_ray_starts(ev, psi, level, count, chart_rho)
    paths = trace_rays(ev, psi, starts, eps)
    pts = [p.landing for p in paths if p.status == "landed"]
    if not pts:
        raise EmptySetError("no ray landed; measure would be empty")
    arr = np.asarray(pts, dtype=complex)
    wts = np.full(len(arr), 1.0 / len(arr))
    frac = 1.0 - len(arr) / count
    return EmpiricalMeasure(points=arr, weights=wts,
                            metadata={"non_landed_fraction": frac, "rays": count,
                                      "level": level, "eps": eps})


def mu_samples_periodic(f: MapSpec, geom: FiltrationGeometry, nmax: int) -> EmpiricalMeasure:
    """Equal weights on every point of every saddle orbit of period <= nmax."""
    if nmax < 1:
        raise ValueError("nmax must be >= 1")
    pts = []
    counts = {}
    for n in range(1, nmax + 1):
        sads = [o for o in saddles.periodic_points(f, geom, n) if o.is_saddle]
        counts[n] = sum(o.period for o in sads)
        for o in sads:
            pts.extend(o.points)
    if not pts:
        raise EmptySetError("no saddle orbits found")
    arr = np.asarray(pts, dtype=complex)
    wts = np.full(len(arr), 1.0 / len(arr))
    return EmpiricalMeasure(points=arr, weights=wts,
                            metadata={"per_period_counts": counts, "nmax": nmax})


def compare_measures(A: EmpiricalMeasure, B: EmpiricalMeasure, boxes: int, R: float) -> float:
    """Total variation distance between box histograms of the z projections."""
    if boxes < 1:
        raise ValueError("boxes must be >= 1")

    def hist(m):
        x = np.clip(m.points[:, 0].real, -R, R)
        y = np.clip(m.points[:, 0].imag, -R, R)
        H, _, _ = np.histogram2d(x, y, bins=boxes, range=[[-R, R], [-R, R]],
                                 weights=m.weights)
        return H / H.sum()

    return float(0.5 * np.abs(hist(A) - hist(B)).sum())
