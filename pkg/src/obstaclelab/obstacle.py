"""Grid fields, the discrete obstacle problem and manufactured problems.

The discrete problem is the linear complementarity system

    u >= 0,   f - Lap_h u >= 0,   u (f - Lap_h u) = 0

on the interior nodes of a uniform box grid, with Dirichlet data on the
box faces (and optionally on extra fixed nodes).  Lap_h is the standard
(2n+1)-point stencil.  The solver is projected SOR with red-black ordering.
"""

from __future__ import annotations

import csv
import io
import itertools
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy import ndimage, signal

from .ansatz import AnsatzFamily
from .polycore import PolyLike, evaluate_array, laplacian

GRID_FORMAT = "lab-grid/1"


class ObstacleError(RuntimeError):
    pass


class NonConvergence(ObstacleError):
    def __init__(self, msg: str, residual: float, iterations: int, last=None):
        super().__init__(f"{msg} (residual {residual:.3e} after {iterations} sweeps)")
        self.residual = residual
        self.iterations = iterations
        self.last = last  # final iterate, for inspection


class BoxTooLarge(ObstacleError):
    pass


class MonotonicityViolation(ObstacleError):
    def __init__(self, msg: str, worst_node: tuple, amount: float):
        super().__init__(f"{msg}: node {worst_node} decreases by {amount:.3e}")
        self.worst_node = worst_node
        self.amount = amount


class FreeBoundaryNotInterior(ObstacleError):
    pass


# ---------------------------------------------------------------- GridField


@dataclass(frozen=True, eq=False)
class GridField:
    """Node values on a uniform box grid; node (0,...,0) sits at ``origin``."""

    values: np.ndarray
    h: float
    origin: tuple[float, ...]

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "origin", tuple(float(o) for o in self.origin))
        if v.ndim not in (2, 3):
            raise ValueError("grid fields are 2-D or 3-D")
        if len(self.origin) != v.ndim:
            raise ValueError("origin length does not match dimension")
        if not self.h > 0:
            raise ValueError("spacing must be positive")
        if not np.all(np.isfinite(v)):
            raise ValueError("grid values must be finite")

    @classmethod
    def on_box(cls, lo: Sequence[float], hi: Sequence[float], n_cells: int | Sequence[int], values=None) -> "GridField":
        lo, hi = np.asarray(lo, float), np.asarray(hi, float)
        cells = np.broadcast_to(np.asarray(n_cells), lo.shape).astype(int)
        hs = (hi - lo) / cells
        if not np.allclose(hs, hs[0], rtol=1e-12, atol=0):
            raise ValueError("box and cell counts give non-uniform spacing")
        shape = tuple(int(c) + 1 for c in cells)
        vals = np.zeros(shape) if values is None else np.broadcast_to(values, shape).copy()
        return cls(vals, float(hs[0]), tuple(lo))

    @property
    def dims(self) -> int:
        return self.values.ndim

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape

    @property
    def upper(self) -> tuple[float, ...]:
        return tuple(o + self.h * (s - 1) for o, s in zip(self.origin, self.shape))

    def axes(self) -> list[np.ndarray]:
        return [o + self.h * np.arange(s) for o, s in zip(self.origin, self.shape)]

    def points(self) -> np.ndarray:
        """Node coordinates, shape ``shape + (dims,)``."""
        return np.stack(np.meshgrid(*self.axes(), indexing="ij"), axis=-1)

    def with_values(self, values) -> "GridField":
        return GridField(np.asarray(values, float), self.h, self.origin)

    def like(self, fill: float = 0.0) -> "GridField":
        return self.with_values(np.full(self.shape, fill))

    def sample(self, func: Callable[[np.ndarray], np.ndarray]) -> "GridField":
        return self.with_values(func(self.points()))

    def sample_poly(self, p: PolyLike) -> "GridField":
        return self.with_values(evaluate_array(p, self.points()))

    def __sub__(self, other: "GridField") -> "GridField":
        self._check(other)
        return self.with_values(self.values - other.values)

    def __add__(self, other: "GridField") -> "GridField":
        self._check(other)
        return self.with_values(self.values + other.values)

    def _check(self, other: "GridField") -> None:
        if other.shape != self.shape or not math.isclose(other.h, self.h) or not np.allclose(other.origin, self.origin):
            raise ValueError("grid fields live on different grids")

    def index_of(self, x: Sequence[float]) -> tuple[int, ...]:
        """Nearest node index."""
        idx = np.rint((np.asarray(x, float) - np.asarray(self.origin)) / self.h).astype(int)
        return tuple(int(i) for i in idx)

    def node(self, idx: Sequence[int]) -> np.ndarray:
        return np.asarray(self.origin) + self.h * np.asarray(idx, float)

    def distance_to_boundary(self, x: Sequence[float]) -> float:
        x = np.asarray(x, float)
        return float(min(np.min(x - np.asarray(self.origin)), np.min(np.asarray(self.upper) - x)))

    def header(self) -> dict:
        return {
            "format": GRID_FORMAT,
            "dims": self.dims,
            "shape": list(self.shape),
            "h": self.h,
            "origin": list(self.origin),
            "dtype": "<f8",
            "order": "C",
        }

    def save(self, path) -> None:
        head = json.dumps(self.header(), sort_keys=True).encode() + b"\n"
        with open(path, "wb") as fh:
            fh.write(head)
            fh.write(np.ascontiguousarray(self.values, dtype="<f8").tobytes())

    @classmethod
    def load(cls, path) -> "GridField":
        with open(path, "rb") as fh:
            head = json.loads(fh.readline().decode())
            if head.get("format") != GRID_FORMAT:
                raise ValueError(f"{path}: not a {GRID_FORMAT} file")
            data = np.frombuffer(fh.read(), dtype="<f8")
        shape = tuple(head["shape"])
        if data.size != int(np.prod(shape)):
            raise ValueError(f"{path}: payload size does not match header shape")
        return cls(data.reshape(shape).astype(float), float(head["h"]), tuple(head["origin"]))


# ------------------------------------------------------------------ stencil


def _interior(shape) -> tuple[slice, ...]:
    return tuple(slice(1, s - 1) for s in shape)


def discrete_laplacian(values: np.ndarray, h: float) -> np.ndarray:
    """Lap_h on interior nodes (shape reduced by 2 on every axis).

    Summed as neighbour differences, which avoids the cancellation of
    sum(neighbours) - 2n u and keeps the rounding floor far below 1e-10.
    """
    core = _interior(values.shape)
    c = values[core]
    acc = np.zeros_like(c)
    for d in range(values.ndim):
        lo = list(core)
        hi = list(core)
        lo[d] = slice(0, values.shape[d] - 2)
        hi[d] = slice(2, values.shape[d])
        acc += values[tuple(lo)] - c
        acc += values[tuple(hi)] - c
    return acc / (h * h)


def discrete_laplacian_field(u: GridField) -> GridField:
    out = np.zeros(u.shape)
    out[_interior(u.shape)] = discrete_laplacian(u.values, u.h)
    return u.with_values(out)


# ------------------------------------------------------------------ problem


@dataclass(frozen=True)
class SolverParams:
    omega: float | str = 1.8  # a number or "auto" for the Jacobi-optimal value
    tol: float = 1e-10
    max_iter: int = 200_000
    check_every: int = 25
    nested: bool = False  # warm start from coarser grids
    stall_checks: int = 20  # checks without progress before switching to omega = 1


@dataclass(frozen=True, eq=False)
class ObstacleProblem:
    f: GridField
    g: GridField  # Dirichlet data; values on the box faces and ``fixed`` nodes are used
    params: SolverParams = field(default_factory=SolverParams)
    fixed: np.ndarray | None = None  # extra Dirichlet nodes (bool mask)

    def __post_init__(self):
        self.f._check(self.g)
        if np.min(self.f.values) <= 0:
            raise ObstacleError("rhs must be positive")
        bmask = boundary_mask(self.g.shape)
        if self.fixed is not None:
            bmask = bmask | self.fixed
        if np.min(self.g.values[bmask]) < 0:
            raise ObstacleError("boundary data must be nonnegative")

    @property
    def h(self) -> float:
        return self.f.h

    def dirichlet_mask(self) -> np.ndarray:
        m = boundary_mask(self.g.shape)
        return m | self.fixed if self.fixed is not None else m


def boundary_mask(shape) -> np.ndarray:
    m = np.ones(shape, dtype=bool)
    m[_interior(shape)] = False
    return m


def optimal_omega(shape) -> float:
    mu = float(np.mean([math.cos(math.pi / (s - 1)) for s in shape]))
    return 2.0 / (1.0 + math.sqrt(1.0 - mu * mu))


def complementarity_residual(u: np.ndarray, f: np.ndarray, h: float, free: np.ndarray) -> float:
    """max over free interior nodes of |min(u, f - Lap_h u)|."""
    core = _interior(u.shape)
    r = f[core] - discrete_laplacian(u, h)
    comp = np.minimum(u[core], r)
    m = free[core]
    return float(np.max(np.abs(comp[m]))) if np.any(m) else 0.0


def _sublattices(shape):
    """Interior sublattices grouped by colour (parity of the index sum)."""
    n = len(shape)
    colours: list[list[tuple]] = [[], []]
    for par in itertools.product((0, 1), repeat=n):
        sl, shifts = [], []
        ok = True
        for d, (p, s) in enumerate(zip(par, shape)):
            start = 1 if p == 1 else 2
            if start > s - 2:
                ok = False
                break
            sl.append(slice(start, s - 1, 2))
        if not ok:
            continue
        sl = tuple(sl)
        for d in range(n):
            lo, hi = list(sl), list(sl)
            lo[d] = slice(sl[d].start - 1, sl[d].stop - 1, 2)
            hi[d] = slice(sl[d].start + 1, sl[d].stop + 1, 2)
            shifts.append((tuple(lo), tuple(hi)))
        colours[sum(par) % 2].append((sl, shifts))
    return colours


def _psor(u, h2f, g, omega, n_sweeps, lattices, n):
    scale = omega / (2 * n)
    for _ in range(n_sweeps):
        for colour in lattices:
            for sl, shifts, fx in colour:
                cur = u[sl]
                acc = -h2f[sl]
                for lo, hi in shifts:
                    acc += u[lo] - cur
                    acc += u[hi] - cur
                new = cur + scale * acc
                np.maximum(new, 0.0, out=new)
                if fx is not None:
                    new[fx] = g[sl][fx]
                u[sl] = new


def _prolong(coarse: np.ndarray, shape) -> np.ndarray:
    """Multilinear interpolation onto the refined grid (corners to corners)."""
    axes = [np.arange(s) * (c - 1) / (s - 1) for s, c in zip(shape, coarse.shape)]
    coords = np.stack(np.meshgrid(*axes, indexing="ij"))
    return ndimage.map_coordinates(coarse, coords, order=1)


def _coarsen(p: ObstacleProblem) -> ObstacleProblem | None:
    if any((s - 1) % 2 or (s - 1) < 32 for s in p.f.shape):
        return None
    sl = tuple(slice(None, None, 2) for _ in p.f.shape)
    f = GridField(p.f.values[sl], 2 * p.h, p.f.origin)
    g = GridField(p.g.values[sl], 2 * p.h, p.g.origin)
    fixed = p.fixed[sl] if p.fixed is not None else None
    return ObstacleProblem(f, g, p.params, fixed)


@dataclass
class SolveInfo:
    iterations: int
    residual: float
    omega: float


def solve(problem: ObstacleProblem, initial: GridField | np.ndarray | None = None, info: dict | None = None) -> GridField:
    """Projected SOR; returns u with complementarity residual <= tol."""
    p = problem.params
    shape = problem.f.shape
    n = len(shape)
    h = problem.h
    omega = optimal_omega(shape) if p.omega == "auto" else float(p.omega)
    if not 0 < omega < 2:
        raise ObstacleError("relaxation factor must lie in (0, 2)")
    dmask = problem.dirichlet_mask()
    g = problem.g.values
    if initial is not None:
        u = np.array(initial.values if isinstance(initial, GridField) else initial, dtype=float)
    elif p.nested and (coarse := _coarsen(problem)) is not None:
        uc = solve(coarse, None, None)
        u = _prolong(uc.values, shape)
    else:
        u = np.zeros(shape)
    np.maximum(u, 0.0, out=u)
    u[dmask] = g[dmask]
    h2f = h * h * problem.f.values
    fixed = problem.fixed
    lattices = []
    for colour in _sublattices(shape):
        lattices.append([(sl, shifts, (fixed[sl] if fixed is not None and fixed[sl].any() else None)) for sl, shifts in colour])
    free = ~dmask
    done = 0
    res = complementarity_residual(u, problem.f.values, h, free)
    best, stalled, polished = res, 0, False
    while res > p.tol:
        if done >= p.max_iter:
            raise NonConvergence("projected SOR did not converge", res, done, problem.f.with_values(u))
        step = min(p.check_every, p.max_iter - done)
        _psor(u, h2f, g, omega, step, lattices, n)
        done += step
        res = complementarity_residual(u, problem.f.values, h, free)
        if res < 0.9 * best:
            best, stalled = res, 0
        else:
            stalled += 1
        # Over-relaxation amplifies rounding noise; once the residual stops
        # improving, plain Gauss-Seidel sweeps settle it at the rounding floor.
        if stalled >= p.stall_checks and not polished:
            omega, polished, stalled = 1.0, True, 0
    if info is not None:
        info.update(iterations=done, residual=res, omega=omega, polished=polished)
    return problem.f.with_values(u)


# --------------------------------------------------------------- contact set


def contact_set(u: GridField, kappa: float = 10.0) -> np.ndarray:
    """{u < kappa h^2}; kappa = 0 selects the exact discrete contact set {u = 0}."""
    if kappa == 0:
        return u.values <= 0
    return u.values < kappa * u.h * u.h


def free_boundary_nodes(contact: np.ndarray) -> np.ndarray:
    """Contact nodes with a non-contact axis neighbour."""
    out = np.zeros_like(contact)
    n = contact.ndim
    for d in range(n):
        for s in (1, -1):
            nb = np.roll(contact, s, axis=d)
            edge = [slice(None)] * n
            edge[d] = 0 if s == 1 else -1
            nb[tuple(edge)] = True
            out |= contact & ~nb
    return out


def _ball_kernel(radius_cells: float, n: int) -> np.ndarray:
    r = int(math.ceil(radius_cells))
    ax = np.arange(-r, r + 1)
    mesh = np.meshgrid(*([ax] * n), indexing="ij")
    return (sum(m * m for m in mesh) <= radius_cells**2).astype(float)


def contact_density(contact: np.ndarray, radius_cells: float) -> np.ndarray:
    k = _ball_kernel(radius_cells, contact.ndim)
    dens = signal.fftconvolve(contact.astype(float), k, mode="same") / k.sum()
    return np.clip(dens, 0.0, 1.0)


@dataclass
class SingularDetection:
    indices: np.ndarray  # (m, n) node indices
    points: np.ndarray  # (m, n) coordinates
    density: np.ndarray  # (m, len(radii_cells))
    radii_cells: tuple[float, ...]
    kappa: float
    tau: float


def detect_singular(
    u: GridField,
    kappa: float = 10.0,
    tau: float = 0.25,
    radii_cells: Sequence[float] = (32, 64),
    spine: bool = True,
    region: np.ndarray | None = None,
) -> SingularDetection:
    """Contact nodes whose contact density stays below ``tau`` at all radii.

    The contact set is {u < kappa h^2}.  With ``spine`` only nodes that are
    minima of u along their most curved axis are kept, which localizes a
    thickened lower-dimensional contact set to its centre within one cell.
    """
    contact = contact_set(u, kappa)
    cand = contact.copy()
    rmax = int(math.ceil(max(radii_cells)))
    inner = np.zeros_like(cand)
    inner[tuple(slice(rmax, s - rmax) for s in cand.shape)] = True
    cand &= inner
    if region is not None:
        cand &= region
    if spine:
        # minimum along the axis of largest curvature; flat nodes tie on every axis
        v = u.values
        lo = [np.roll(v, 1, axis=d) for d in range(v.ndim)]
        hi = [np.roll(v, -1, axis=d) for d in range(v.ndim)]
        curv = np.stack([a + b - 2 * v for a, b in zip(lo, hi)])
        top = np.argmax(curv, axis=0)
        minimal = np.zeros_like(cand)
        for d in range(v.ndim):
            minimal |= (top == d) & (v <= lo[d]) & (v <= hi[d])
        cand &= minimal
    dens = np.stack([contact_density(contact, r) for r in radii_cells], axis=-1)
    sing = cand & np.all(dens < tau, axis=-1)
    idx = np.argwhere(sing)
    pts = np.asarray(u.origin) + u.h * idx
    return SingularDetection(idx, pts, dens[sing], tuple(radii_cells), kappa, tau)


def export_contact_csv(u: GridField, path, kappa: float = 10.0) -> None:
    """One row per contact node: indices, coordinates and u."""
    contact = contact_set(u, kappa)
    n = u.dims
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"i{d + 1}" for d in range(n)] + [f"x{d + 1}" for d in range(n)] + ["u"])
        for idx in np.argwhere(contact):
            x = u.node(idx)
            w.writerow([int(i) for i in idx] + [f"{c:.12g}" for c in x] + [f"{u.values[tuple(idx)]:.12g}"])


# ---------------------------------------------------------- manufactured


@dataclass(frozen=True, eq=False)
class ManufacturedProblem:
    problem: ObstacleProblem
    exact: GridField
    label: str = ""


def _box(box, n: int) -> tuple[list[float], list[float]]:
    if isinstance(box, (int, float)):
        return [-float(box)] * n, [float(box)] * n
    lo, hi = box
    if isinstance(lo, (int, float)):
        return [float(lo)] * n, [float(hi)] * n
    return [float(c) for c in lo], [float(c) for c in hi]


def manufacture(
    exact: Callable[[np.ndarray], np.ndarray],
    lap: Callable[[np.ndarray], np.ndarray],
    box,
    n_cells: int,
    dim: int = 2,
    rhs: str = "analytic",
    params: SolverParams | None = None,
    label: str = "",
) -> ManufacturedProblem:
    """Problem with continuum solution ``exact`` (which must be >= 0).

    ``rhs="analytic"`` samples f = Lap(exact).  ``rhs="discrete"`` uses
    Lap_h of the sampled solution at interior nodes, so the sampled exact
    field solves the discrete system and only diagnostic error remains.
    """
    lo, hi = _box(box, dim)
    grid = GridField.on_box(lo, hi, n_cells)
    pts = grid.points()
    ue = exact(pts)
    if np.min(ue) < 0:
        raise ObstacleError("manufactured solution must be nonnegative")
    fv = lap(pts)
    if rhs == "discrete":
        fv = fv.copy()
        fv[_interior(grid.shape)] = discrete_laplacian(ue, grid.h)
    elif rhs != "analytic":
        raise ValueError("rhs must be 'analytic' or 'discrete'")
    if np.min(fv) <= 0:
        raise BoxTooLarge(f"rhs reaches {np.min(fv):.3g} on the box")
    ex = grid.with_values(ue)
    prob = ObstacleProblem(grid.with_values(fv), ex, params or SolverParams())
    return ManufacturedProblem(prob, ex, label)


def manufacture_from_ansatz(
    family: AnsatzFamily,
    box,
    n_cells: int,
    rhs: str = "analytic",
    params: SolverParams | None = None,
) -> ManufacturedProblem:
    """u* = (f0/2) A^2 with f* = Lap u*; raises BoxTooLarge if min f* <= 0."""
    half = family.halfA2
    lap = laplacian(half)
    return manufacture(
        lambda x: evaluate_array(half, x),
        lambda x: evaluate_array(lap, x),
        box,
        n_cells,
        family.dim,
        rhs,
        params,
        label=f"ansatz k={family.order}",
    )


def manufacture_quadratic(box=1.0, n_cells: int = 64, params: SolverParams | None = None) -> ManufacturedProblem:
    """u* = x_n^2 / 2 with f = 1 in two dimensions."""
    return manufacture(
        lambda x: 0.5 * x[..., -1] ** 2,
        lambda x: np.ones(x.shape[:-1]),
        box,
        n_cells,
        2,
        "analytic",
        params,
        label="x2^2/2",
    )


def manufacture_graph_perturbation(eps: float = 0.1, box=1.0, n_cells: int = 64, params: SolverParams | None = None) -> ManufacturedProblem:
    """u* = x2^2/2 + eps (1 - cos 2 x1): contact only at the origin."""
    return manufacture(
        lambda x: 0.5 * x[..., 1] ** 2 + eps * (1 - np.cos(2 * x[..., 0])),
        lambda x: 1.0 + 4 * eps * np.cos(2 * x[..., 0]),
        box,
        n_cells,
        2,
        "analytic",
        params,
        label="graph perturbation",
    )


# ----------------------------------------------------------- families


@dataclass
class MonotoneFamily:
    ts: list[float]
    fields: list[GridField]
    c_K: float | None = None
    labels: dict = field(default_factory=dict)

    def __post_init__(self):
        if any(b < a for a, b in zip(self.ts, self.ts[1:])):
            raise ValueError("parameter values must be nondecreasing")


def check_monotone(fam: MonotoneFamily, tol: float = 1e-9) -> None:
    for (ta, ua), (tb, ub) in zip(zip(fam.ts, fam.fields), zip(fam.ts[1:], fam.fields[1:])):
        drop = ua.values - ub.values
        worst = np.unravel_index(int(np.argmax(drop)), drop.shape)
        if drop[worst] > tol:
            raise MonotonicityViolation(f"u^{tb} < u^{ta}", tuple(int(i) for i in worst), float(drop[worst]))


def solve_family(
    ts: Sequence[float],
    make_problem: Callable[[float], ObstacleProblem],
    warm_start: bool = True,
    mono_tol: float = 1e-9,
    K: np.ndarray | None = None,
) -> MonotoneFamily:
    """Solve u^t for increasing t; checks nodewise monotonicity."""
    ts = [float(t) for t in ts]
    if any(b < a for a, b in zip(ts, ts[1:])):
        raise ValueError("parameter values must be sorted")
    fields: list[GridField] = []
    prev: GridField | None = None
    for t in ts:
        prob = make_problem(t)
        u = solve(prob, prev if warm_start else None)
        fields.append(u)
        prev = u
    fam = MonotoneFamily(ts, fields)
    check_monotone(fam, mono_tol)
    if K is not None:
        from .heleshaw import uniform_monotonicity_constant

        fam.c_K = uniform_monotonicity_constant(fam, K)
    return fam


def constant_data_problem(t: float, n_cells: int = 64, box=1.0, params: SolverParams | None = None) -> ObstacleProblem:
    """f = 1 with g = t on the box faces."""
    lo, hi = _box(box, 2)
    grid = GridField.on_box(lo, hi, n_cells)
    return ObstacleProblem(grid.like(1.0), grid.like(max(t, 0.0)), params or SolverParams())


def heleshaw_problem(
    t: float,
    n_cells: int = 256,
    box: float = 2.0,
    radius: float = 0.2,
    cap: float = 0.0,
    params: SolverParams | None = None,
) -> ObstacleProblem:
    """Exterior problem around a disk O: u = t on O, u = cap on the outer box."""
    grid = GridField.on_box([-box, -box], [box, box], n_cells)
    pts = grid.points()
    disk = np.hypot(pts[..., 0], pts[..., 1]) <= radius
    g = np.full(grid.shape, float(cap))
    g[disk] = t
    return ObstacleProblem(grid.like(1.0), grid.with_values(g), params or SolverParams(omega="auto"), fixed=disk)


def check_free_boundary_interior(u: GridField, margin: int = 2) -> None:
    """Raise if the positivity set reaches within ``margin`` nodes of the box."""
    band = np.zeros(u.shape, dtype=bool)
    band[...] = True
    band[tuple(slice(margin, s - margin) for s in u.shape)] = False
    if np.any(u.values[band] > 0):
        raise FreeBoundaryNotInterior("positivity set reaches the outer box; enlarge the box or raise the cap")
