"""Parameter-plane scanning of connectivity verdicts.

Each grid cell instantiates the family template, normalizes to
|Jacobian| <= 1 (switching to the swapped inverse otherwise), and runs
an escalation of tests from cheapest to most expensive: tangency
tracking, slice component analysis, then the unstable-leaf search.
Cells are pure functions of their parameters, so scans are
deterministic, checkpointable by row, and trivially parallel.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, replace

import numpy as np

from . import core, saddles, slices
from .core import HenonFactor, MapSpec
from .errors import ContourThroughZeroError, NonHorizontalError, ZeroClusterError


@dataclass(frozen=True)
class ParamSlot:
    """Addresses one complex coefficient inside a MapSpec template."""

    factor: int
    field: str                  # "a" | "p" | "b"
    index: int | None = None    # coefficient index for polynomial fields

    def substitute(self, f: MapSpec, value: complex) -> MapSpec:
        fac = f.factors[self.factor]
        if self.field == "a":
            fac = HenonFactor(a=value, p=fac.p, b=fac.b)
        elif self.field == "p":
            coeffs = list(fac.p)
            coeffs[self.index] = value
            fac = HenonFactor(a=fac.a, p=tuple(coeffs), b=fac.b)
        elif self.field == "b":
            coeffs = list(fac.b if fac.b is not None else ())
            coeffs[self.index] = value
            fac = HenonFactor(a=fac.a, p=fac.p, b=tuple(coeffs))
        else:
            raise ValueError(f"unknown field {self.field!r}")
        factors = list(f.factors)
        factors[self.factor] = fac
        return core.compose(factors)


@dataclass(frozen=True)
class Window:
    re_min: float
    re_max: float
    im_min: float
    im_max: float
    nx: int
    ny: int

    def values(self) -> np.ndarray:
        re = self.re_min + (np.arange(self.nx) + 0.5) * (self.re_max - self.re_min) / self.nx
        im = self.im_min + (np.arange(self.ny) + 0.5) * (self.im_max - self.im_min) / self.ny
        return re[None, :] + 1j * im[:, None]


@dataclass(frozen=True)
class FamilySpec:
    template: MapSpec
    slot: ParamSlot
    window: Window

    def instantiate(self, value: complex) -> MapSpec:
        return self.slot.substitute(self.template, value)


def quadratic_family(a: complex, window: Window) -> FamilySpec:
    """The standard family (z^2 + c + a w, a z) scanned over c."""
    return FamilySpec(
        template=core.quadratic_map(0.0, a),
        slot=ParamSlot(factor=0, field="p", index=0),
        window=window,
    )


@dataclass(frozen=True)
class BudgetPolicy:
    tangency_n: int = 2
    confine_budget: int = 150
    slice_schedule: tuple = ((96, 1), (192, 2), (384, 3))
    unstable_enabled: bool = False
    unstable_levels: int = 6
    unstable_res: int = 96
    unstable_budgets: tuple = (1, 2, 3, 4, 6)

    def to_dict(self) -> dict:
        return {
            "tangency_n": self.tangency_n,
            "confine_budget": self.confine_budget,
            "slice_schedule": [list(x) for x in self.slice_schedule],
            "unstable_enabled": self.unstable_enabled,
            "unstable_levels": self.unstable_levels,
            "unstable_res": self.unstable_res,
            "unstable_budgets": list(self.unstable_budgets),
        }


@dataclass(frozen=True)
class ParamVerdict:
    parameter: complex
    verdict: str                # connected | disconnected | unresolved
    evidence: str
    cost: int
    swapped: bool


def evaluate_cell(family: FamilySpec, value: complex, policy: BudgetPolicy) -> ParamVerdict:
    """Verdict for one parameter value, escalating tests by cost."""
    cost = 0
    try:
        f = family.instantiate(value)
    except ValueError as exc:
        return ParamVerdict(parameter=complex(value), verdict="unresolved",
                            evidence=f"error: {exc}", cost=0, swapped=False)
    swapped = False
    if abs(f.jacobian) > 1.0:
        f = core.inverse_spec(f)
        swapped = True
    try:
        geom = core.choose_radius(f)
    except RuntimeError as exc:
        return ParamVerdict(parameter=complex(value), verdict="unresolved",
                            evidence=f"error: {exc}", cost=0, swapped=swapped)
    V = slices.horizontal_line(0.0, geom.R * 1.02)

    # stage one: tangency tracking
    try:
        res = slices.tangency_escape_test(f, geom, V, policy.tangency_n,
                                          policy.confine_budget)
        cost += sum(policy.confine_budget * k for _, k in res.checked) + 512 * policy.tangency_n
        if res.status == "some_escape":
            return ParamVerdict(parameter=complex(value), verdict="disconnected",
                                evidence=f"tangency_escape(n={res.witness['n']})",
                                cost=cost, swapped=swapped)
        if res.status == "all_confined":
            return ParamVerdict(parameter=complex(value), verdict="connected",
                                evidence=f"tangency_confined(n<={policy.tangency_n})",
                                cost=cost, swapped=swapped)
    except (ZeroClusterError, ContourThroughZeroError, NonHorizontalError):
        pass

    # stage two: slice component analysis
    rep = slices.connectivity_verdict(f, geom, slices.horizontal_line(0.0, geom.R),
                                      "forward", policy.slice_schedule)
    cost += sum(N * N * b for N, b in policy.slice_schedule)
    if rep.verdict != "unresolved":
        return ParamVerdict(parameter=complex(value), verdict=rep.verdict,
                            evidence="slice_components", cost=cost, swapped=swapped)

    # stage three: unstable-leaf search
    if policy.unstable_enabled:
        try:
            sads = [o for o in saddles.periodic_points(f, geom, 1) if o.is_saddle]
            if sads:
                psi = saddles.unstable_parametrization(f, sads[0])
                res3 = saddles.unstable_connectivity_test(
                    f, geom, psi,
                    levels=policy.unstable_levels,
                    chart_res=policy.unstable_res,
                    budgets=policy.unstable_budgets,
                )
                cost += policy.unstable_res ** 2 * sum(policy.unstable_budgets) \
                    * policy.unstable_levels
                if res3.status == "disconnected_evidence":
                    return ParamVerdict(parameter=complex(value), verdict="disconnected",
                                        evidence=f"unstable_leaf({res3.witness['kind']})",
                                        cost=cost, swapped=swapped)
                if res3.status == "connected_evidence":
                    return ParamVerdict(parameter=complex(value), verdict="connected",
                                        evidence="unstable_leaf_clean",
                                        cost=cost, swapped=swapped)
        except Exception as exc:  # honest absorption: this stage never decides falsely
            return ParamVerdict(parameter=complex(value), verdict="unresolved",
                                evidence=f"unstable_stage_error: {type(exc).__name__}",
                                cost=cost, swapped=swapped)
    return ParamVerdict(parameter=complex(value), verdict="unresolved",
                        evidence="exhausted", cost=cost, swapped=swapped)


# ---------------------------------------------------------------------------
# scan driver


@dataclass(frozen=True)
class ScanResult:
    family: FamilySpec
    policy: BudgetPolicy
    cells: tuple                # row-major tuple of ParamVerdict


def _family_to_dict(family: FamilySpec) -> dict:
    return {
        "template": core.mapspec_to_dict(family.template),
        "slot": {"factor": family.slot.factor, "field": family.slot.field,
                 "index": family.slot.index},
        "window": {
            "re_min": family.window.re_min, "re_max": family.window.re_max,
            "im_min": family.window.im_min, "im_max": family.window.im_max,
            "nx": family.window.nx, "ny": family.window.ny,
        },
    }


def family_from_dict(d: dict) -> FamilySpec:
    return FamilySpec(
        template=core.mapspec_from_dict(d["template"]),
        slot=ParamSlot(factor=d["slot"]["factor"], field=d["slot"]["field"],
                       index=d["slot"]["index"]),
        window=Window(**d["window"]),
    )


def scan_config_hash(family: FamilySpec, policy: BudgetPolicy) -> str:
    from .formats import canonical_json, sha256_hex

    payload = {"family": _family_to_dict(family), "policy": policy.to_dict()}
    return sha256_hex(canonical_json(payload))


def _cell_worker(args):
    fam_dict, value_re, value_im, policy_dict = args
    family = family_from_dict(fam_dict)
    policy = BudgetPolicy(
        tangency_n=policy_dict["tangency_n"],
        confine_budget=policy_dict["confine_budget"],
        slice_schedule=tuple(tuple(x) for x in policy_dict["slice_schedule"]),
        unstable_enabled=policy_dict["unstable_enabled"],
        unstable_levels=policy_dict["unstable_levels"],
        unstable_res=policy_dict["unstable_res"],
        unstable_budgets=tuple(policy_dict["unstable_budgets"]),
    )
    v = evaluate_cell(family, complex(value_re, value_im), policy)
    return [v.parameter.real, v.parameter.imag, v.verdict, v.evidence, v.cost, v.swapped]


def worker_count(requested: int | None = None) -> int:
    cap = os.environ.get("HENONLAB_THREADS")
    n = requested if requested is not None else (os.cpu_count() or 1)
    if cap:
        n = min(n, max(1, int(cap)))
    return max(1, n)


def scan(
    family: FamilySpec,
    policy: BudgetPolicy | None = None,
    workers: int | None = None,
    checkpoint: str | None = None,
) -> ScanResult:
    """Scan the window, cheapest decisive test per cell.

    Deterministic for a fixed configuration regardless of worker count;
    resumable from a row-level checkpoint holding the configuration
    hash.
    """
    policy = policy or BudgetPolicy()
    values = family.window.values()
    ny, nx = values.shape
    cfg_hash = scan_config_hash(family, policy)

    done_rows: dict[int, list] = {}
    if checkpoint and os.path.exists(checkpoint):
        with open(checkpoint) as fh:
            header = None
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                rec = json.loads(line)
                if header is None:
                    header = rec
                    if rec.get("config_hash") != cfg_hash:
                        raise ValueError("checkpoint does not match the configuration")
                    continue
                done_rows[int(rec["row"])] = rec["cells"]

    fam_dict = _family_to_dict(family)
    policy_dict = policy.to_dict()
    todo = [i for i in range(ny) if i not in done_rows]
    nworkers = worker_count(workers)

    def run_row(i: int):
        return [
            _cell_worker((fam_dict, values[i, j].real, values[i, j].imag, policy_dict))
            for j in range(nx)
        ]

    ckpt_fh = None
    if checkpoint:
        new_file = not os.path.exists(checkpoint)
        ckpt_fh = open(checkpoint, "a")
        if new_file:
            ckpt_fh.write(json.dumps({"config_hash": cfg_hash, "rows": ny, "cols": nx}) + "\n")
            ckpt_fh.flush()

    try:
        if nworkers <= 1 or len(todo) <= 1:
            for i in todo:
                row = run_row(i)
                done_rows[i] = row
                if ckpt_fh:
                    ckpt_fh.write(json.dumps({"row": i, "cells": row}) + "\n")
                    ckpt_fh.flush()
        else:
            import multiprocessing as mp

            args = [
                (i, [(fam_dict, values[i, j].real, values[i, j].imag, policy_dict)
                     for j in range(nx)])
                for i in todo
            ]
            with mp.get_context("fork").Pool(nworkers) as pool:
                for i, row in pool.imap(_row_worker, args):
                    done_rows[i] = row
                    if ckpt_fh:
                        ckpt_fh.write(json.dumps({"row": i, "cells": row}) + "\n")
                        ckpt_fh.flush()
    finally:
        if ckpt_fh:
            ckpt_fh.close()

    cells = []
    for i in range(ny):
        for rec in done_rows[i]:
            cells.append(ParamVerdict(parameter=complex(rec[0], rec[1]), verdict=rec[2],
                                      evidence=rec[3], cost=int(rec[4]), swapped=bool(rec[5])))
    return ScanResult(family=family, policy=policy, cells=tuple(cells))


def _row_worker(arg):
    i, cell_args = arg
    return i, [_cell_worker(a) for a in cell_args]


def verdict_grid(result: ScanResult) -> np.ndarray:
    """Row-major verdict codes: 0 connected, 1 disconnected, 2 unresolved."""
    code = {"connected": 0, "disconnected": 1, "unresolved": 2}
    w = result.family.window
    return np.asarray([code[c.verdict] for c in result.cells], dtype=np.uint8).reshape(w.ny, w.nx)


# ---------------------------------------------------------------------------
# boundary probe


@dataclass(frozen=True)
class BoundaryProbeReport:
    interface_cells: int
    refined_cells: int
    violations: tuple
    note: str


def boundary_probe(
    family: FamilySpec,
    result: ScanResult,
    levels: int = 1,
    policy: BudgetPolicy | None = None,
    evaluate=None,
) -> BoundaryProbeReport:
    """Empirical openness check at the connected/disconnected interface.

    Every disconnected cell is refined; a definitely connected refined
    cell inside a disconnected parent is recorded as a violation.  The
    ``evaluate`` hook (value -> verdict string) exists for detector
    self-tests.
    """
    policy = policy or result.policy
    if evaluate is None:
        def evaluate(value):
            return evaluate_cell(family, value, policy).verdict

    grid = verdict_grid(result)
    ny, nx = grid.shape
    w = result.family.window
    hx = (w.re_max - w.re_min) / nx
    hy = (w.im_max - w.im_min) / ny
    values = w.values()

    conn = grid == 0
    disc = grid == 1
    if not disc.any() or not conn.any():
        return BoundaryProbeReport(interface_cells=0, refined_cells=0,
                                   violations=(), note="no interface")

    # disconnected cells with a connected neighbor
    from scipy import ndimage

    near_conn = ndimage.binary_dilation(conn, structure=np.ones((3, 3), bool))
    interface = disc & near_conn
    targets = [(i, j) for i, j in zip(*np.nonzero(interface))]

    violations = []
    refined = 0
    for i, j in targets:
        cx, cy = values[i, j].real, values[i, j].imag
        sx, sy = hx, hy
        for lev in range(levels):
            sx, sy = sx / 2.0, sy / 2.0
            children = [complex(cx + dx * sx, cy + dy * sy)
                        for dx in (-0.5, 0.5) for dy in (-0.5, 0.5)]
            verdicts = [evaluate(v) for v in children]
            refined += len(children)
            for v, vd in zip(children, verdicts):
                if vd == "connected":
                    violations.append({"parent": (i, j), "child": (v.real, v.imag),
                                       "level": lev + 1})
            # keep refining around a disconnected child when possible
            sub = [v for v, vd in zip(children, verdicts) if vd == "disconnected"]
            if not sub:
                break
            cx, cy = sub[0].real, sub[0].imag
    return BoundaryProbeReport(
        interface_cells=len(targets),
        refined_cells=refined,
        violations=tuple(violations),
        note="ok" if not violations else "violations found",
    )


# ---------------------------------------------------------------------------
# perturbation-regime harness


@dataclass(frozen=True)
class PerturbationRegimeReport:
    rows: tuple                  # (a, status, witness n or None)
    largest_confined: float | None
    lemma_bound: float | None
    radius: float


def perturbation_regime_check(
    p_coeffs,
    a_values,
    n_iterates: int,
    delta: float | None = None,
    confine_budget: int = 200,
) -> PerturbationRegimeReport:
    """Confinement of slice tangencies across a range of couplings.

    For each coupling the tangencies of the first iterates of a
    horizontal line are tracked; the report carries the largest coupling
    magnitude with all tangencies confined, next to the sufficient
    bound min(delta/R, 1) when a separation constant is supplied.
    """
    a_values = [complex(a) for a in a_values]
    rows = []
    largest = None
    radius = None
    for a in a_values:
        f = core.compose([HenonFactor(a=a, p=tuple(p_coeffs))])
        geom = core.choose_radius(f)
        radius = geom.R
        V = slices.horizontal_line(0.0, geom.R * 1.02)
        res = slices.tangency_escape_test(f, geom, V, n_iterates, confine_budget)
        wit = res.witness["n"] if res.witness else None
        rows.append((a, res.status, wit))
        if res.status == "all_confined":
            if largest is None or abs(a) > largest:
                largest = abs(a)
    lemma_bound = None
    if delta is not None and radius is not None:
        lemma_bound = min(delta / radius, 1.0)
    return PerturbationRegimeReport(
        rows=tuple(rows),
        largest_confined=largest,
        lemma_bound=lemma_bound,
        radius=radius if radius is not None else float("nan"),
    )
