"""Command line entry point.

Every subcommand reads a map (or family) description in the canonical
JSON format, runs one pipeline, and writes its artifacts plus a
metadata file echoing the fully resolved configuration.  Exit codes:
0 definite result, 2 unresolved, 1 internal error, 64 usage error,
74 input/output error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import __version__, core, formats, paramscan, potential, rays, saddles, slices
from .errors import HenonLabError, UsageError

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_UNRESOLVED = 2
EXIT_USAGE = 64
EXIT_IO = 74


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _write_metadata(outdir, subcommand, config):
    meta = {
        "tool": "henonlab",
        "version": __version__,
        "subcommand": subcommand,
        "config": config,
    }
    meta["config_hash"] = formats.sha256_hex(formats.canonical_json(config))
    formats.write_json(os.path.join(outdir, "metadata.json"), meta)


def _load_map(path):
    try:
        return formats.load_mapspec(path)
    except OSError as exc:
        raise _IOFail(str(exc))
    except (KeyError, ValueError, json.JSONDecodeError) as exc:
        raise UsageError(f"bad map file {path}: {exc}")


class _IOFail(Exception):
    pass


def _geometry(f, margin):
    geom = core.choose_radius(f, margin)
    return geom


def _caveats(f):
    notes = []
    if f.is_birational:
        notes.append(
            "birational perturbation: support identities for the escape "
            "potentials are only proved for polynomial diffeomorphisms"
        )
    return notes


# ---------------------------------------------------------------------------
# subcommands


def _cmd_certify(args):
    f = _load_map(args.map)
    geom = _geometry(f, args.margin)
    cert = core.certify_henonlike(f, geom, samples=args.samples)
    os.makedirs(args.out, exist_ok=True)
    report = {
        "radius": geom.R,
        "minimal_radius": geom.minimal_R,
        "verdict": cert.verdict,
        "clearance": cert.clearance,
        "checks": {k: v for k, v in cert.checks.items()},
        "witness": None if cert.witness is None else
            [[cert.witness[0].real, cert.witness[0].imag],
             [cert.witness[1].real, cert.witness[1].imag]],
        "caveats": _caveats(f),
    }
    formats.write_json(os.path.join(args.out, "certification.json"), report)
    _write_metadata(args.out, "certify", {
        "map": core.mapspec_to_dict(f), "margin": args.margin, "samples": args.samples,
    })
    print(f"certify: {cert.verdict} (clearance {cert.clearance:.3e})")
    return EXIT_OK if cert.verdict != "inconclusive" else EXIT_UNRESOLVED


def _cmd_slice(args):
    f = _load_map(args.map)
    geom = _geometry(f, args.margin)
    rho = args.rho if args.rho is not None else geom.R
    V = slices.horizontal_line(complex(args.w0_re, args.w0_im), rho)
    grid = slices.rasterize_slice(f, geom, V, args.res, args.budget, args.side)
    rep = slices.label_components(grid, args.adjacency)
    os.makedirs(args.out, exist_ok=True)
    formats.write_pgm(os.path.join(args.out, "slice.pgm"),
                      formats.grid_to_pgm_pixels(grid.cells))
    formats.write_json(os.path.join(args.out, "components.json"), {
        "count_lower": rep.count_lower,
        "count_upper": rep.count_upper,
        "unresolved_fraction": rep.unresolved_fraction,
        "components": [
            {"pixels": c[0], "bbox": list(c[1]), "diameter": c[2]}
            for c in rep.components
        ],
    })
    config = {
        "map": core.mapspec_to_dict(f), "margin": args.margin, "rho": rho,
        "w0": [args.w0_re, args.w0_im], "res": args.res, "budget": args.budget,
        "side": args.side, "adjacency": args.adjacency, "caveats": _caveats(f),
    }
    _write_metadata(args.out, "slice", config)
    print(f"slice: components in [{rep.count_lower}, {rep.count_upper}], "
          f"unresolved {rep.unresolved_fraction:.2%}")
    return EXIT_OK


def _parse_schedule(text):
    out = []
    for part in text.split(","):
        n, b = part.split(":")
        out.append((int(n), int(b)))
    return tuple(out)


def _cmd_connect(args):
    f = _load_map(args.map)
    geom = _geometry(f, args.margin)
    schedule = _parse_schedule(args.schedule)
    V = slices.horizontal_line(complex(args.w0_re, args.w0_im), geom.R)
    rep = slices.connectivity_verdict(f, geom, V, args.side, schedule)
    os.makedirs(args.out, exist_ok=True)
    formats.write_json(os.path.join(args.out, "connectivity.json"), {
        "verdict": rep.verdict,
        "levels": [
            {"res": r[0], "budget": r[1], "count_lower": r[2],
             "count_upper": r[3], "unresolved_fraction": r[4]}
            for r in rep.levels
        ],
    })
    _write_metadata(args.out, "connect", {
        "map": core.mapspec_to_dict(f), "margin": args.margin,
        "schedule": [list(s) for s in schedule], "side": args.side,
        "w0": [args.w0_re, args.w0_im], "caveats": _caveats(f),
    })
    print(f"connect: {rep.verdict}")
    return EXIT_OK if rep.verdict != "unresolved" else EXIT_UNRESOLVED


def _cmd_tangency(args):
    f = _load_map(args.map)
    geom = _geometry(f, args.margin)
    V = slices.horizontal_line(complex(args.w0_re, args.w0_im), geom.R * 1.02)
    rows = []
    ok = True
    for n in range(1, args.n + 1):
        rep = slices.rh_consistency(f, geom, V, n, raster_n=args.res)
        rows.append({
            "n": n, "degree": rep.degree, "components": rep.component_count,
            "tangencies_inside": rep.tangencies_inside,
            "consistent": rep.consistent,
        })
        if rep.consistent is None:
            ok = False
    os.makedirs(args.out, exist_ok=True)
    formats.write_json(os.path.join(args.out, "tangency.json"), {"rows": rows})
    _write_metadata(args.out, "tangency", {
        "map": core.mapspec_to_dict(f), "margin": args.margin, "n": args.n,
        "res": args.res, "w0": [args.w0_re, args.w0_im], "caveats": _caveats(f),
    })
    for r in rows:
        print(f"tangency n={r['n']}: degree={r['degree']} components={r['components']} "
              f"inside={r['tangencies_inside']} consistent={r['consistent']}")
    return EXIT_OK if ok else EXIT_UNRESOLVED


def _cmd_saddles(args):
    f = _load_map(args.map)
    geom = _geometry(f, args.margin)
    orbits = []
    for n in range(1, args.period_max + 1):
        orbits.extend(saddles.periodic_points(f, geom, n))
    os.makedirs(args.out, exist_ok=True)
    formats.write_json(os.path.join(args.out, "orbits.json"), {
        "orbits": [
            {
                "period": o.period,
                "classification": o.classification,
                "points": [[[p[0].real, p[0].imag], [p[1].real, p[1].imag]]
                           for p in o.points],
                "multipliers": [[m.real, m.imag] for m in o.multipliers],
                "residual": o.residual,
            }
            for o in orbits
        ],
    })
    _write_metadata(args.out, "saddles", {
        "map": core.mapspec_to_dict(f), "margin": args.margin,
        "period_max": args.period_max, "caveats": _caveats(f),
    })
    by_class: dict = {}
    for o in orbits:
        by_class[o.classification] = by_class.get(o.classification, 0) + 1
    print(f"saddles: {len(orbits)} orbits {by_class}")
    return EXIT_OK


def _pick_saddle(f, geom, period_max):
    for n in range(1, period_max + 1):
        for o in saddles.periodic_points(f, geom, n):
            if o.is_saddle:
                return o
    raise HenonLabError("no saddle orbit found")


def _cmd_leaf(args):
    f = _load_map(args.map)
    geom = _geometry(f, args.margin)
    orbit = _pick_saddle(f, geom, args.period_max)
    psi = saddles.unstable_parametrization(f, orbit, order=args.order)
    res = saddles.unstable_connectivity_test(f, geom, psi, levels=args.levels,
                                             chart_res=args.res)
    os.makedirs(args.out, exist_ok=True)
    formats.write_json(os.path.join(args.out, "leaf.json"), {
        "base": [[psi.base[0].real, psi.base[0].imag],
                 [psi.base[1].real, psi.base[1].imag]],
        "period": psi.period,
        "multiplier": [psi.lam.real, psi.lam.imag],
        "order": psi.order,
        "radius": psi.radius,
        "residual": psi.residual,
        "coefficients": [[[c[0].real, c[0].imag], [c[1].real, c[1].imag]]
                         for c in psi.coeffs],
        "connectivity": {
            "status": res.status,
            "witness": None if res.witness is None else {
                k: (str(v) if isinstance(v, complex) else v)
                for k, v in res.witness.items()
            },
        },
    })
    _write_metadata(args.out, "leaf", {
        "map": core.mapspec_to_dict(f), "margin": args.margin, "order": args.order,
        "levels": args.levels, "res": args.res, "period_max": args.period_max,
        "caveats": _caveats(f),
    })
    print(f"leaf: period {psi.period} radius {psi.radius:.3g} "
          f"residual {psi.residual:.2e} connectivity {res.status}")
    return EXIT_OK if res.status != "unresolved" else EXIT_UNRESOLVED


def _cmd_rays(args):
    f = _load_map(args.map)
    geom = _geometry(f, args.margin)
    ev = potential.PotentialEvaluator(map=f, geom=geom)
    orbit = _pick_saddle(f, geom, args.period_max)
    psi = saddles.unstable_parametrization(f, orbit)
    starts = rays.sample_ray_starts(ev, psi, args.level, args.count)
    paths = rays.trace_rays(ev, psi, starts, args.eps)
    os.makedirs(args.out, exist_ok=True)
    rows = []
    for i, p in enumerate(paths):
        for k, (t, g) in enumerate(p.samples):
            rows.append((i, k, float(t.real), float(t.imag), float(g)))
    formats.write_csv(os.path.join(args.out, "rays.csv"),
                      ["ray", "step", "re_t", "im_t", "potential"], rows)
    landed = [p for p in paths if p.status == "landed"]
    formats.write_csv(
        os.path.join(args.out, "landings.csv"),
        ["ray", "re_z", "im_z", "re_w", "im_w"],
        [
            (i, float(p.landing[0].real), float(p.landing[0].imag),
             float(p.landing[1].real), float(p.landing[1].imag))
            for i, p in enumerate(paths) if p.status == "landed"
        ],
    )
    _write_metadata(args.out, "rays", {
        "map": core.mapspec_to_dict(f), "margin": args.margin, "level": args.level,
        "eps": args.eps, "count": args.count, "period_max": args.period_max,
        "caveats": _caveats(f),
    })
    print(f"rays: {len(landed)}/{len(paths)} landed")
    return EXIT_OK if landed else EXIT_UNRESOLVED


def _cmd_measure(args):
    f = _load_map(args.map)
    geom = _geometry(f, args.margin)
    ev = potential.PotentialEvaluator(map=f, geom=geom)
    orbit = _pick_saddle(f, geom, args.period_max)
    psi = saddles.unstable_parametrization(f, orbit)
    landing = rays.landing_measure(ev, psi, args.level, args.eps, args.count)
    periodic = rays.mu_samples_periodic(f, geom, args.nmax)
    tv = rays.compare_measures(landing, periodic, args.boxes, geom.R)
    os.makedirs(args.out, exist_ok=True)
    formats.write_csv(
        os.path.join(args.out, "landing_measure.csv"),
        ["re_z", "im_z", "re_w", "im_w", "weight"],
        [(float(p[0].real), float(p[0].imag), float(p[1].real), float(p[1].imag),
          float(wt)) for p, wt in zip(landing.points, landing.weights)],
    )
    formats.write_csv(
        os.path.join(args.out, "periodic_measure.csv"),
        ["re_z", "im_z", "re_w", "im_w", "weight"],
        [(float(p[0].real), float(p[0].imag), float(p[1].real), float(p[1].imag),
          float(wt)) for p, wt in zip(periodic.points, periodic.weights)],
    )
    formats.write_json(os.path.join(args.out, "comparison.json"), {
        "total_variation": tv,
        "boxes": args.boxes,
        "landing_metadata": landing.metadata,
        "periodic_metadata": {k: v for k, v in periodic.metadata.items()},
    })
    _write_metadata(args.out, "measure", {
        "map": core.mapspec_to_dict(f), "margin": args.margin, "level": args.level,
        "eps": args.eps, "count": args.count, "nmax": args.nmax, "boxes": args.boxes,
        "period_max": args.period_max, "caveats": _caveats(f),
    })
    print(f"measure: total variation {tv:.4f}")
    return EXIT_OK


def _cmd_scan(args):
    try:
        with open(args.family) as fh:
            fam = paramscan.family_from_dict(json.load(fh))
    except OSError as exc:
        raise _IOFail(str(exc))
    except (KeyError, ValueError, json.JSONDecodeError) as exc:
        raise UsageError(f"bad family file {args.family}: {exc}")
    policy = paramscan.BudgetPolicy(
        tangency_n=args.tangency_n,
        confine_budget=args.budget,
        unstable_enabled=args.unstable,
    )
    os.makedirs(args.out, exist_ok=True)
    checkpoint = os.path.join(args.out, "checkpoint.jsonl") if args.checkpoint else None
    result = paramscan.scan(fam, policy, workers=args.workers, checkpoint=checkpoint)
    grid = paramscan.verdict_grid(result)
    formats.write_ppm(os.path.join(args.out, "scan.ppm"),
                      formats.verdicts_to_ppm_pixels(grid))
    formats.write_csv(
        os.path.join(args.out, "cells.csv"),
        ["re_c", "im_c", "verdict", "evidence", "cost", "swapped"],
        [
            (float(c.parameter.real), float(c.parameter.imag), c.verdict,
             c.evidence.replace(",", ";"), c.cost, int(c.swapped))
            for c in result.cells
        ],
    )
    probe = paramscan.boundary_probe(fam, result, levels=args.probe_levels, policy=policy) \
        if args.probe_levels > 0 else None
    if probe is not None:
        formats.write_json(os.path.join(args.out, "boundary_probe.json"), {
            "interface_cells": probe.interface_cells,
            "refined_cells": probe.refined_cells,
            "violations": list(probe.violations),
            "note": probe.note,
        })
    _write_metadata(args.out, "scan", {
        "family": paramscan._family_to_dict(fam),
        "policy": policy.to_dict(),
        "probe_levels": args.probe_levels,
        "config_hash": paramscan.scan_config_hash(fam, policy),
    })
    unresolved = int((grid == 2).sum())
    print(f"scan: {int((grid == 0).sum())} connected, {int((grid == 1).sum())} "
          f"disconnected, {unresolved} unresolved")
    return EXIT_OK if unresolved == 0 else EXIT_UNRESOLVED


def _cmd_green(args):
    f = _load_map(args.map)
    geom = _geometry(f, args.margin)
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, "green.pgm")
    render_green(f, geom, (args.re_min, args.re_max, args.im_min, args.im_max),
                 args.res, path, w0=complex(args.w0_re, args.w0_im))
    _write_metadata(args.out, "green", {
        "map": core.mapspec_to_dict(f), "margin": args.margin,
        "window": [args.re_min, args.re_max, args.im_min, args.im_max],
        "res": args.res, "w0": [args.w0_re, args.w0_im], "caveats": _caveats(f),
    })
    print(f"green: wrote {path}")
    return EXIT_OK


def render_green(f, geom, window, resolution, path, w0=0j, nmax=400):
    """Grayscale raster of the forward potential over a z window.

    Pixel values are 255 G / G_max clamped; an all-bounded window
    renders black.
    """
    re_min, re_max, im_min, im_max = window
    if max(abs(re_min), abs(re_max), abs(im_min), abs(im_max)) > geom.R:
        raise ValueError("window must lie within the bidisk")
    ev = potential.PotentialEvaluator(map=f, geom=geom, nmax=nmax)
    gx = re_min + (np.arange(resolution) + 0.5) * (re_max - re_min) / resolution
    gy = im_min + (np.arange(resolution) + 0.5) * (im_max - im_min) / resolution
    Z = gx[None, :] + 1j * gy[:, None]
    W = np.full_like(Z, w0)
    vals, verdict = potential.green_many(ev, Z, W, "forward")
    vals = np.where(np.isnan(vals), 0.0, vals)
    gmax = float(vals.max())
    if gmax > 0:
        pix = np.clip(255.0 * vals / gmax, 0, 255).astype(np.uint8)
    else:
        pix = np.zeros(vals.shape, dtype=np.uint8)
    formats.write_pgm(path, pix[::-1, :])
    return path


# ---------------------------------------------------------------------------
# parser


def _build_parser() -> _Parser:
    ap = _Parser(prog="henonlab", description=__doc__)
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="subcommand")

    def common(p):
        p.add_argument("--map", required=True, help="map description JSON")
        p.add_argument("--margin", type=float, default=1.25)
        p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("certify", help="boundary certification of the crossed-map conditions")
    common(p)
    p.add_argument("--samples", type=int, default=20000)
    p.set_defaults(func=_cmd_certify)

    p = sub.add_parser("slice", help="tri-state raster of a transversal slice")
    common(p)
    p.add_argument("--res", type=int, default=512)
    p.add_argument("--budget", type=int, default=100)
    p.add_argument("--side", choices=["forward", "backward"], default="forward")
    p.add_argument("--rho", type=float, default=None)
    p.add_argument("--w0-re", type=float, default=0.0)
    p.add_argument("--w0-im", type=float, default=0.0)
    p.add_argument("--adjacency", type=int, choices=[4, 8], default=4)
    p.set_defaults(func=_cmd_slice)

    p = sub.add_parser("connect", help="connectivity verdict from a refinement schedule")
    common(p)
    p.add_argument("--schedule", default="128:2,256:3,512:4,512:8,512:12",
                   help="comma list of res:budget pairs")
    p.add_argument("--side", choices=["forward", "backward"], default="forward")
    p.add_argument("--w0-re", type=float, default=0.0)
    p.add_argument("--w0-im", type=float, default=0.0)
    p.set_defaults(func=_cmd_connect)

    p = sub.add_parser("tangency", help="degree, tangency and component bookkeeping")
    common(p)
    p.add_argument("--n", type=int, default=3)
    p.add_argument("--res", type=int, default=512)
    p.add_argument("--w0-re", type=float, default=0.0)
    p.add_argument("--w0-im", type=float, default=0.0)
    p.set_defaults(func=_cmd_tangency)

    p = sub.add_parser("saddles", help="periodic orbit search and classification")
    common(p)
    p.add_argument("--period-max", type=int, default=4)
    p.set_defaults(func=_cmd_saddles)

    p = sub.add_parser("leaf", help="unstable manifold series and connectivity search")
    common(p)
    p.add_argument("--order", type=int, default=30)
    p.add_argument("--levels", type=int, default=8)
    p.add_argument("--res", type=int, default=160)
    p.add_argument("--period-max", type=int, default=2)
    p.set_defaults(func=_cmd_leaf)

    p = sub.add_parser("rays", help="trace descending gradient rays on a leaf")
    common(p)
    p.add_argument("--level", type=float, default=1.0)
    p.add_argument("--eps", type=float, default=1e-4)
    p.add_argument("--count", type=int, default=100)
    p.add_argument("--period-max", type=int, default=2)
    p.set_defaults(func=_cmd_rays)

    p = sub.add_parser("measure", help="landing measure against the periodic-orbit measure")
    common(p)
    p.add_argument("--level", type=float, default=1.0)
    p.add_argument("--eps", type=float, default=1e-4)
    p.add_argument("--count", type=int, default=1000)
    p.add_argument("--nmax", type=int, default=12)
    p.add_argument("--boxes", type=int, default=16)
    p.add_argument("--period-max", type=int, default=2)
    p.set_defaults(func=_cmd_measure)

    p = sub.add_parser("scan", help="parameter-plane connectivity scan")
    p.add_argument("--family", required=True, help="family description JSON")
    p.add_argument("--out", required=True)
    p.add_argument("--tangency-n", type=int, default=2)
    p.add_argument("--budget", type=int, default=150)
    p.add_argument("--unstable", action="store_true")
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--checkpoint", action="store_true")
    p.add_argument("--probe-levels", type=int, default=0)
    p.set_defaults(func=_cmd_scan)

    p = sub.add_parser("green", help="grayscale raster of the forward potential")
    common(p)
    p.add_argument("--re-min", type=float, required=True)
    p.add_argument("--re-max", type=float, required=True)
    p.add_argument("--im-min", type=float, required=True)
    p.add_argument("--im-max", type=float, required=True)
    p.add_argument("--res", type=int, default=512)
    p.add_argument("--w0-re", type=float, default=0.0)
    p.add_argument("--w0-im", type=float, default=0.0)
    p.set_defaults(func=_cmd_green)

    return ap


def run(argv=None) -> int:
    ap = _build_parser()
    try:
        args = ap.parse_args(argv)
        if not getattr(args, "subcommand", None):
            raise UsageError("a subcommand is required")
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except _IOFail as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except HenonLabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except Exception as exc:  # pragma: no cover - last resort
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR


def main() -> None:
    sys.exit(run())
