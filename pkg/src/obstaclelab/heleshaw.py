"""Monotone families in a time-like parameter: singular times and cleaning.

Each u^t is an independent obstacle solve (warm-started from the previous
parameter value).  The contact sets of a monotone family shrink in t; the
audits here measure how fast they recede from singular points.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .obstacle import (
    GridField,
    MonotoneFamily,
    ObstacleProblem,
    SolverParams,
    check_free_boundary_interior,
    check_monotone,
    contact_set,
    detect_singular,
    heleshaw_problem,
    solve,
)


class GraphViolation(RuntimeError):
    def __init__(self, msg: str, nodes: list):
        super().__init__(msg)
        self.nodes = nodes


# ------------------------------------------------------------ families


def pinch_problem(t: float, n_cells: int = 128, depth: float = 0.7, width: float = 0.5, params: SolverParams | None = None) -> ObstacleProblem:
    """Contact set with a neck at the origin that pinches as t grows.

    Box [-2, 2] x [-1, 1] with ``n_cells`` cells per unit length along x2,
    data g = t on the faces and f = 1 - depth exp(-x1^2 / width^2).
    """
    grid = GridField.on_box([-2.0, -1.0], [2.0, 1.0], (2 * n_cells, n_cells))
    x1 = grid.points()[..., 0]
    f = 1.0 - depth * np.exp(-(x1**2) / width**2)
    return ObstacleProblem(grid.with_values(f), grid.like(max(t, 0.0)), params or SolverParams(omega="auto"))


def solve_times(ts: Sequence[float], make_problem: Callable[[float], ObstacleProblem], mono_tol: float = 1e-9) -> MonotoneFamily:
    """Independent solves at sorted parameter values, each warm-started."""
    ts = sorted(float(t) for t in ts)
    fields: list[GridField] = []
    prev = None
    for t in ts:
        # warm start from below: the previous solution is a subsolution-side guess
        u = solve(make_problem(t), prev)
        fields.append(u)
        prev = u
    fam = MonotoneFamily(ts, fields)
    check_monotone(fam, mono_tol)
    return fam


def bisect_time(
    make_problem: Callable[[float], ObstacleProblem],
    predicate: Callable[[GridField], bool],
    lo: float,
    hi: float,
    tol: float = 1e-6,
) -> tuple[float, float]:
    """Shrink [lo, hi] with predicate(u^lo) true and predicate(u^hi) false."""
    ulo = solve(make_problem(lo))
    if not predicate(ulo):
        raise ValueError("predicate must hold at the lower end")
    if predicate(solve(make_problem(hi), ulo)):
        raise ValueError("predicate must fail at the upper end")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        u = solve(make_problem(mid), ulo)
        if predicate(u):
            lo, ulo = mid, u
        else:
            hi = mid
    return lo, hi


def times_after(t0: float, first: float, last: float, count: int) -> list[float]:
    """t0 followed by geometric offsets from ``first`` to ``last``."""
    offs = np.geomspace(first, last, count - 1)
    return [t0] + [t0 + float(o) for o in offs]


# ------------------------------------------------------- space-time set


@dataclass
class SingularRecord:
    x: tuple[float, ...]
    t: float
    index: tuple[int, ...]
    report: dict | None = None


@dataclass
class SpaceTimeSingularSet:
    records: list[SingularRecord]
    ts: list[float]
    violations: list[tuple[tuple[int, ...], list[float]]] = field(default_factory=list)
    counts: list[int] = field(default_factory=list)
    areas: list[float] = field(default_factory=list)

    def pi_x(self) -> list[tuple[float, ...]]:
        return sorted({r.x for r in self.records})

    def pi_t(self) -> list[float]:
        return sorted({r.t for r in self.records})

    def to_json_obj(self) -> dict:
        return {
            "ts": self.ts,
            "records": [{"x": list(r.x), "t": r.t, "index": list(r.index), "report": r.report} for r in self.records],
            "violations": [{"index": list(i), "ts": t} for i, t in self.violations],
            "singular_times": self.pi_t(),
        }

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "singular_nodes", "contact_area"])
            for t, c, a in zip(self.ts, self.counts, self.areas):
                w.writerow([f"{t:.12g}", c, f"{a:.12g}"])


def detect_singular_times(
    family: MonotoneFamily,
    kappa: float = 10.0,
    tau: float = 0.25,
    radii_cells: Sequence[float] = (8, 16),
    stationary_tol: float = 1e-10,
    strict: bool = True,
) -> SpaceTimeSingularSet:
    """Singular nodes of every u^t plus the graph audit.

    A node flagged at several parameter values is a graph violation when u
    is stationary around it between the first and the last of them.  Under
    strict monotonicity a receding free boundary can keep a node flagged for
    a few closely spaced samples (one-cell quantization); that is not one.
    """
    records: list[SingularRecord] = []
    seen: dict[tuple[int, ...], list[int]] = {}
    counts, areas = [], []
    for i, (t, u) in enumerate(zip(family.ts, family.fields)):
        det = detect_singular(u, kappa, tau, radii_cells)
        counts.append(len(det.indices))
        areas.append(float(np.count_nonzero(contact_set(u, kappa))) * u.h**u.dims)
        for idx, x in zip(det.indices, det.points):
            key = tuple(int(a) for a in idx)
            records.append(SingularRecord(tuple(float(c) for c in x), t, key))
            seen.setdefault(key, []).append(i)
    r = int(math.ceil(min(radii_cells)))
    viol = []
    for key, where in seen.items():
        distinct = sorted({family.ts[i] for i in where})
        if len(distinct) < 2:
            continue
        first, last = family.fields[min(where)], family.fields[max(where)]
        box = tuple(slice(max(c - r, 0), c + r + 1) for c in key)
        if float(np.max(np.abs(last.values[box] - first.values[box]))) <= stationary_tol:
            viol.append((key, distinct))
    out = SpaceTimeSingularSet(records, list(family.ts), viol, counts, areas)
    if viol and strict:
        raise GraphViolation(f"{len(viol)} singular nodes sit in stationary regions", viol)
    return out


# -------------------------------------------------------------- audits


@dataclass
class CleaningAudit:
    x0: tuple[float, ...]
    t0: float
    k: int
    C0: float
    exponent: float | None
    radii: list[tuple[float, float]]  # (t - t0, distance to nearest contact node)
    violations: list[tuple[tuple[float, ...], float]]

    @property
    def passed(self) -> bool:
        return math.isfinite(self.C0) and not self.violations


def cleaning_audit(
    family: MonotoneFamily,
    x0: Sequence[float],
    t0: float,
    k: int,
    R: float = 0.5,
    kappa: float | None = None,
    C0: float | None = None,
    fit_band: tuple[float, float] | None = None,
) -> CleaningAudit:
    """Fit C0 with no contact node (x, t) in B_R(x0) having t - t0 > C0 |x - x0|^k.

    Contact is {u = 0} by default and {u < kappa h^2} when ``kappa`` is set.
    With ``C0`` given, nodes breaking that bound are reported as violations;
    otherwise only contact at x0 itself (an infinite ratio) is.  The
    exponent is the log-log slope of t - t0 against the distance from x0 to
    the nearest contact node, over ``fit_band`` distances when given.
    """
    x0 = np.asarray(x0, float)
    best = 0.0
    viol: list[tuple[tuple[float, ...], float]] = []
    rad: list[tuple[float, float]] = []
    for t, u in zip(family.ts, family.fields):
        if t <= t0:
            continue
        mask = contact_set(u, kappa) if kappa is not None else (u.values <= 0)
        pts = u.points()[mask]
        d = np.sqrt(np.sum((pts - x0) ** 2, axis=-1))
        near = d <= R
        if not np.any(near):
            continue
        dn, pn = d[near], pts[near]
        rad.append((t - t0, float(dn.min())))
        at0 = dn == 0
        for p in pn[at0]:
            viol.append((tuple(float(c) for c in p), t))
        if np.any(~at0):
            ratio = (t - t0) / dn[~at0] ** k
            best = max(best, float(ratio.max()))
            if C0 is not None:
                bad = ratio > C0
                viol.extend((tuple(float(c) for c in p), t) for p in pn[~at0][bad])
        if np.any(at0):
            best = math.inf
    exp = None
    sel = [(dt, r) for dt, r in rad if r > 0 and (fit_band is None or fit_band[0] <= r <= fit_band[1])]
    if len(sel) >= 3:
        dts, rs = zip(*sel)
        exp = float(np.polyfit(np.log(rs), np.log(dts), 1)[0])
    return CleaningAudit(tuple(float(c) for c in x0), float(t0), k, best, exp, rad, viol)


def uniform_monotonicity_constant(family: MonotoneFamily, K: np.ndarray) -> float:
    """min over consecutive t-pairs and x in K of (u^{t'} - u^t)/(t' - t)."""
    K = np.asarray(K, dtype=bool)
    for t, u in zip(family.ts, family.fields):
        if np.any(u.values[K] <= 0):
            raise ValueError(f"K meets the contact set at t = {t}")
    out = math.inf
    for (ta, ua), (tb, ub) in zip(zip(family.ts, family.fields), zip(family.ts[1:], family.fields[1:])):
        if tb == ta:
            continue
        q = (ub.values[K] - ua.values[K]) / (tb - ta)
        out = min(out, float(q.min()))
    return 0.0 if out is math.inf else out


def annulus_mask(u: GridField, r_in: float, r_out: float, center=(0.0, 0.0)) -> np.ndarray:
    pts = u.points()
    d = np.sqrt(np.sum((pts - np.asarray(center, float)) ** 2, axis=-1))
    return (d >= r_in) & (d <= r_out)


def heleshaw_family(ts: Sequence[float], n_cells: int = 256, box: float = 2.0, radius: float = 0.2, cap: float = 0.0) -> MonotoneFamily:
    """Discretized exterior Hele-Shaw configuration: u = t on a disk, cap on the box."""
    fam = solve_times(ts, lambda t: heleshaw_problem(t, n_cells, box, radius, cap))
    for u in fam.fields:
        check_free_boundary_interior(u)
    return fam


def contact_inclusion(family: MonotoneFamily) -> bool:
    """{u^{t'} = 0} is contained in {u^t = 0} for t <= t'."""
    for ua, ub in zip(family.fields, family.fields[1:]):
        if np.any((ub.values <= 0) & (ua.values > 0)):
            return False
    return True


def spacetime_to_json(st: SpaceTimeSingularSet) -> str:
    return json.dumps(st.to_json_obj(), indent=2, sort_keys=True)
