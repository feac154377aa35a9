"""Frequency-type quantities on grid fields.

H(r, w) = r^(1-n) * integral of w^2 over the sphere of radius r, and
D(r, w) = r^(2-n) * integral of |grad w|^2 over the ball.  Both are computed
by quadrature on exact spheres and balls, sampling a cubic spline of the
grid field (and of its fourth-order finite-difference gradient).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np
from scipy import ndimage

from .ansatz import AnsatzFamily
from .obstacle import GridField
from .polycore import Poly, PolyLike, as_poly, evaluate_array

EPS_GRID = (0.25, 0.5, 1.0)
RADIUS_RATIO = 2.0**0.25


class RadiusOutOfRange(ValueError):
    pass


# ----------------------------------------------------------------- samplers


class Sampler:
    """Point evaluation of a field and its gradient."""

    dim: int
    h: float | None = None

    def values(self, pts: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def grad(self, pts: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def check_ball(self, x0, r: float) -> None:
        pass


def _fd_gradient(v: np.ndarray, h: float) -> list[np.ndarray]:
    """Fourth-order central differences, second order in the two outer layers."""
    out = []
    for d in range(v.ndim):
        g = np.gradient(v, h, axis=d, edge_order=2)
        if v.shape[d] >= 5:
            sl = lambda a, b: tuple(slice(a, b) if k == d else slice(None) for k in range(v.ndim))
            n = v.shape[d]
            g[sl(2, n - 2)] = (
                -v[sl(4, n)] + 8 * v[sl(3, n - 1)] - 8 * v[sl(1, n - 3)] + v[sl(0, n - 4)]
            ) / (12 * h)
        out.append(g)
    return out


class GridSampler(Sampler):
    def __init__(self, v: GridField, margin_cells: float = 3.0):
        self.field = v
        self.dim = v.dims
        self.h = v.h
        self.margin = margin_cells * v.h
        self._origin = np.asarray(v.origin)
        self._coef = ndimage.spline_filter(v.values, order=3, mode="mirror")
        self._gcoef = [ndimage.spline_filter(g, order=3, mode="mirror") for g in _fd_gradient(v.values, v.h)]

    def _coords(self, pts: np.ndarray) -> np.ndarray:
        pts = np.asarray(pts, float)
        return np.moveaxis((pts - self._origin) / self.h, -1, 0).reshape(self.dim, -1)

    def _interp(self, coef, pts) -> np.ndarray:
        vals = ndimage.map_coordinates(coef, self._coords(pts), order=3, prefilter=False, mode="mirror")
        return vals.reshape(np.asarray(pts).shape[:-1])

    def values(self, pts):
        return self._interp(self._coef, pts)

    def grad(self, pts):
        return np.stack([self._interp(c, pts) for c in self._gcoef], axis=-1)

    def check_ball(self, x0, r: float) -> None:
        if r < 4 * self.h * (1 - 1e-12):
            raise RadiusOutOfRange(f"r = {r:.4g} is below 4h = {4 * self.h:.4g}")
        if r + self.margin > self.field.distance_to_boundary(x0) + 1e-12:
            raise RadiusOutOfRange(f"ball of radius {r:.4g} at {tuple(x0)} leaves the grid")


class PolySampler(Sampler):
    """Exact polynomial field (synthetic input for estimator tests)."""

    def __init__(self, p: PolyLike):
        self.poly = as_poly(p)
        self.dim = self.poly.dim
        self._grad = [self.poly.derivative(i) for i in range(self.dim)]

    def values(self, pts):
        return evaluate_array(self.poly, np.asarray(pts, float))

    def grad(self, pts):
        pts = np.asarray(pts, float)
        return np.stack([evaluate_array(g, pts) for g in self._grad], axis=-1)


class FunctionSampler(Sampler):
    def __init__(self, dim: int, func: Callable, grad: Callable):
        self.dim = dim
        self._f = func
        self._g = grad

    def values(self, pts):
        return self._f(np.asarray(pts, float))

    def grad(self, pts):
        return self._g(np.asarray(pts, float))


class DifferenceSampler(Sampler):
    """a - b; keeps the grid checks of ``a``."""

    def __init__(self, a: Sampler, b: Sampler):
        self.a, self.b = a, b
        self.dim = a.dim
        self.h = a.h

    def values(self, pts):
        return self.a.values(pts) - self.b.values(pts)

    def grad(self, pts):
        return self.a.grad(pts) - self.b.grad(pts)

    def check_ball(self, x0, r):
        self.a.check_ball(x0, r)


class ShiftedPoly(PolySampler):
    """p(x - center)."""

    def __init__(self, p: PolyLike, center):
        super().__init__(p)
        self.center = np.asarray(center, float)

    def values(self, pts):
        return super().values(np.asarray(pts, float) - self.center)

    def grad(self, pts):
        return super().grad(np.asarray(pts, float) - self.center)


class Rescaled(Sampler):
    """v_r(y) = v(x0 + r y)."""

    def __init__(self, base: Sampler, x0, r: float):
        self.base = base
        self.x0 = np.asarray(x0, float)
        self.r = float(r)
        self.dim = base.dim
        self.h = None if base.h is None else base.h / r

    def values(self, pts):
        return self.base.values(self.x0 + self.r * np.asarray(pts, float))

    def grad(self, pts):
        return self.r * self.base.grad(self.x0 + self.r * np.asarray(pts, float))


def as_sampler(v) -> Sampler:
    if isinstance(v, Sampler):
        return v
    if isinstance(v, GridField):
        return GridSampler(v)
    if isinstance(v, Poly) or hasattr(v, "to_poly"):
        return PolySampler(v)
    raise TypeError(f"cannot sample {type(v).__name__}")


def residual_sampler(u, family: AnsatzFamily, x0) -> Sampler:
    """w = u - P_k(x - x0)."""
    return DifferenceSampler(as_sampler(u), ShiftedPoly(family.P, x0))


# -------------------------------------------------------------- quadrature


@lru_cache(maxsize=64)
def sphere_rule(dim: int, m: int) -> tuple[np.ndarray, np.ndarray]:
    """Directions and weights on the unit sphere; weights sum to its area."""
    if dim == 2:
        th = 2 * math.pi * np.arange(m) / m
        return np.stack([np.cos(th), np.sin(th)], axis=-1), np.full(m, 2 * math.pi / m)
    if dim == 3:
        z, wz = np.polynomial.legendre.leggauss(m)
        phi = math.pi * np.arange(2 * m) / m
        zz, pp = np.meshgrid(z, phi, indexing="ij")
        s = np.sqrt(1 - zz**2)
        dirs = np.stack([s * np.cos(pp), s * np.sin(pp), zz], axis=-1).reshape(-1, 3)
        w = np.repeat(wz * (math.pi / m), 2 * m)
        return dirs, w
    raise ValueError("only dimensions 2 and 3 are supported")


def _angular_count(dim: int, r: float, h: float | None) -> int:
    if h is None:
        return 256 if dim == 2 else 48
    if dim == 2:
        m = max(64, int(math.ceil(8 * math.pi * r / h)))
        return min(8 * int(math.ceil(m / 8)), 8192)
    return min(max(24, int(math.ceil(2 * math.pi * r / h))), 256)


def _radial_count(r: float, h: float | None) -> int:
    if h is None:
        return 48
    return min(max(16, int(math.ceil(2 * r / h))), 512)


def compute_H(v, x0, r: float) -> float:
    s = as_sampler(v)
    x0 = np.asarray(x0, float)
    s.check_ball(x0, r)
    dirs, w = sphere_rule(s.dim, _angular_count(s.dim, r, s.h))
    vals = s.values(x0 + r * dirs)
    return float(np.dot(w, vals * vals))


def compute_D(v, x0, r: float) -> float:
    s = as_sampler(v)
    x0 = np.asarray(x0, float)
    s.check_ball(x0, r)
    n = s.dim
    dirs, w = sphere_rule(n, _angular_count(n, r, s.h))
    t, wt = np.polynomial.legendre.leggauss(_radial_count(r, s.h))
    rho = 0.5 * r * (t + 1)
    wrho = 0.5 * r * wt * rho ** (n - 1)
    pts = x0 + rho[:, None, None] * dirs[None, :, :]
    g = s.grad(pts)
    sq = np.sum(g * g, axis=-1)
    return float(r ** (2 - n) * np.dot(wrho, sq @ w))


def phi_from(H: float, D: float, r: float, gamma: float) -> float:
    # written as gamma + (D - gamma H)/(H + r^(2 gamma)) so that v = 0 gives gamma exactly
    t = r ** (2 * gamma)
    return gamma + (D - gamma * H) / (H + t)


def phi_gamma(v, x0, r: float, gamma: float) -> float:
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    s = as_sampler(v)
    return phi_from(compute_H(s, x0, r), compute_D(s, x0, r), r, gamma)


def weiss(v, x0, r: float, lam: float) -> float:
    s = as_sampler(v)
    return r ** (-2 * lam) * (compute_D(s, x0, r) - lam * compute_H(s, x0, r))


def default_radii(v: GridField, x0, ratio: float = RADIUS_RATIO, r_min: float | None = None, r_max: float | None = None) -> list[float]:
    """Geometric radii from 4h up to a third of the distance to the box, decreasing."""
    lo = 4 * v.h if r_min is None else r_min
    hi = v.distance_to_boundary(x0) / 3 if r_max is None else r_max
    if hi < lo:
        raise RadiusOutOfRange("no admissible radii at this center")
    out = []
    r = lo
    while r <= hi * (1 + 1e-12):
        out.append(r)
        r *= ratio
    return out[::-1]


# --------------------------------------------------------------- profiles


@dataclass
class DriftFit:
    mode: str
    eps: float
    C: float
    violations: list[tuple[float, float, float]]  # (r_small, r_large, raw decrease)
    residual: float  # worst decrease left after correction
    sensitivity: dict[float, float] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return math.isfinite(self.C)


def _drift_weight(mode: str, r: np.ndarray, eps: float) -> np.ndarray:
    if mode == "phi":
        return r**eps / eps
    if mode == "monneau":
        return r**eps
    raise ValueError("mode must be 'phi' or 'monneau'")


def _fit_C(radii: np.ndarray, vals: np.ndarray, mode: str, eps: float) -> float:
    order = np.argsort(radii)
    r, a = radii[order], vals[order]
    g = _drift_weight(mode, r, eps)
    need = (a[:-1] - a[1:]) / (g[1:] - g[:-1])
    return float(max(0.0, np.max(need))) if len(need) else 0.0


def audit_monotonicity(radii: Sequence[float], values: Sequence[float], mode: str = "phi", eps: float = 0.5, min_radii: int = 8) -> DriftFit:
    """Smallest C >= 0 making a(r) + C g(r) nondecreasing in r.

    g(r) = r^eps / eps for the frequency and r^eps for the Monneau quantity.
    """
    radii = np.asarray(radii, float)
    vals = np.asarray(values, float)
    if len(radii) != len(vals):
        raise ValueError("radii and values differ in length")
    if len(radii) < min_radii:
        raise ValueError(f"need at least {min_radii} radii")
    if np.any(radii <= 0) or len(set(radii.tolist())) != len(radii):
        raise ValueError("radii must be positive and distinct")
    C = _fit_C(radii, vals, mode, eps)
    order = np.argsort(radii)
    r, a = radii[order], vals[order]
    viol = [(float(r[i]), float(r[i + 1]), float(a[i] - a[i + 1])) for i in range(len(r) - 1) if a[i] > a[i + 1]]
    corr = a + C * _drift_weight(mode, r, eps)
    resid = float(max(0.0, np.max(corr[:-1] - corr[1:]))) if len(r) > 1 else 0.0
    sens = {e: _fit_C(radii, vals, mode, e) for e in EPS_GRID}
    return DriftFit(mode, eps, C, viol, resid, sens)


@dataclass
class FrequencyProfile:
    center: tuple[float, ...]
    radii: list[float]
    H: list[float]
    D: list[float]
    gamma: float
    phi: list[float]
    lam: float
    W: list[float]
    k: int | None = None
    M: list[float] | None = None
    drift: DriftFit | None = None
    synthetic: bool = False

    def rows(self):
        M = self.M if self.M is not None else [float("nan")] * len(self.radii)
        return zip(self.radii, self.H, self.D, self.phi, self.W, M)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["r", "H", "D", "phi_gamma", "W_lambda", "M_k"])
            for row in self.rows():
                w.writerow([f"{x:.12e}" for x in row])

    def to_svg(self, path) -> None:
        write_loglog_svg(path, self.radii, {"H": self.H, "D": self.D}, title=f"center {self.center}")


def frequency_profile(
    u,
    x0,
    family: AnsatzFamily | None = None,
    gamma: float | None = None,
    lam: float | None = None,
    radii: Sequence[float] | None = None,
    eps: float = 0.5,
) -> FrequencyProfile:
    """Profile of v = u - P_k (or of u itself without a family)."""
    x0 = tuple(float(c) for c in x0)
    k = family.order if family is not None else None
    if gamma is None:
        gamma = k + 1.5 if k is not None else 2.5
    if lam is None:
        lam = float(k) if k is not None else 2.0
    s = residual_sampler(u, family, x0) if family is not None else as_sampler(u)
    if radii is None:
        if not isinstance(u, GridField):
            raise ValueError("radii are required for non-grid input")
        radii = default_radii(u, x0)
    radii = sorted((float(r) for r in radii), reverse=True)
    H = [compute_H(s, x0, r) for r in radii]
    D = [compute_D(s, x0, r) for r in radii]
    phi = [phi_from(a, b, r, gamma) for a, b, r in zip(H, D, radii)]
    W = [r ** (-2 * lam) * (b - lam * a) for a, b, r in zip(H, D, radii)]
    M = [r ** (-2 * k) * a for a, r in zip(H, radii)] if k is not None else None
    drift = audit_monotonicity(radii, phi, "phi", eps) if len(radii) >= 8 else None
    return FrequencyProfile(x0, radii, H, D, gamma, phi, lam, W, k, M, drift, synthetic=not isinstance(u, GridField))


@dataclass
class MonneauResult:
    radii: list[float]
    values: list[float]
    k: int
    eps: float
    C: float


def monneau(u, family: AnsatzFamily, x0, radii: Sequence[float], eps: float = 0.5) -> MonneauResult:
    """M_k(r) = r^(-2k) H(r, u - P_k) and its drift constant."""
    s = residual_sampler(u, family, x0)
    k = family.order
    radii = sorted((float(r) for r in radii), reverse=True)
    vals = [r ** (-2 * k) * compute_H(s, x0, r) for r in radii]
    C = _fit_C(np.asarray(radii), np.asarray(vals), "monneau", eps) if len(radii) > 1 else 0.0
    return MonneauResult(radii, vals, k, eps, C)


def log_slope(radii: Sequence[float], values: Sequence[float]) -> float:
    """Least-squares slope of log(values) against log(radii)."""
    lr = np.log(np.asarray(radii, float))
    lv = np.log(np.asarray(values, float))
    return float(np.polyfit(lr, lv, 1)[0])


# ---------------------------------------------------------- Lipschitz audit


@dataclass
class LipschitzRow:
    r: float
    tangential: float
    normal: float
    base: float
    C_tangential: float
    C_normal: float


@dataclass
class LipschitzAudit:
    rows: list[LipschitzRow]
    beta: float
    C_tangential: float
    C_normal: float
    flagged: list[float]
    cap: float

    @property
    def passed(self) -> bool:
        return not self.flagged


def lipschitz_audit(
    u: GridField,
    family: AnsatzFamily,
    x0,
    radii: Sequence[float],
    beta: float = 0.05,
    theta: float = 0.5,
    cap: float = 1e6,
) -> LipschitzAudit:
    """Tangential and normal gradient bounds for v = u - P_k at dyadic radii.

    Left sides are max-over-nodes norms of the rescaled gradients on B_1;
    the right side base is the L^2 norm of v_{theta r} on B_2 minus B_{1/2}
    plus r^(k+2).
    """
    if not 0 < beta < 1:
        raise ValueError("beta must lie in (0, 1)")
    x0 = np.asarray(x0, float)
    k = family.order
    pts = u.points()
    v = u.values - evaluate_array(family.P, pts - x0)
    grads = np.gradient(v, u.h, edge_order=2)
    nu = family.input.nu.index
    dist = np.sqrt(np.sum((pts - x0) ** 2, axis=-1))
    n = u.dims
    rows, flagged = [], []
    for r in sorted(radii, reverse=True):
        if max(r, 2 * theta * r) > u.distance_to_boundary(x0) - u.h:
            raise RadiusOutOfRange(f"r = {r:.4g} leaves the grid")
        ball = dist <= r
        tang = r * max((float(np.max(np.abs(grads[j][ball]))) for j in range(n) if j != nu), default=0.0)
        norm = r * float(np.max(np.abs(grads[nu][ball])))
        rs = theta * r
        ann = (dist >= rs / 2) & (dist <= 2 * rs)
        l2 = math.sqrt(u.h**n * float(np.sum(v[ann] ** 2)) / rs**n)
        base = l2 + r ** (k + 2)
        ct = tang / base
        cn = norm / base ** (1 - beta)
        if not (ct <= cap and cn <= cap):
            flagged.append(r)
        rows.append(LipschitzRow(r, tang, norm, base, ct, cn))
    return LipschitzAudit(rows, beta, max(rw.C_tangential for rw in rows), max(rw.C_normal for rw in rows), flagged, cap)


# --------------------------------------------------------------------- SVG


def write_loglog_svg(path, xs: Sequence[float], series: dict[str, Sequence[float]], title: str = "") -> None:
    """Minimal log-log line plot; nonpositive values are skipped."""
    W, Hh, pad = 480, 360, 40
    colours = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"]
    pts = {k: [(math.log10(x), math.log10(y)) for x, y in zip(xs, ys) if x > 0 and y > 0] for k, ys in series.items()}
    allp = [p for v in pts.values() for p in v]
    lines = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{Hh}">']
    lines.append(f'<text x="{pad}" y="20" font-size="12">{title}</text>')
    if allp:
        x0, x1 = min(p[0] for p in allp), max(p[0] for p in allp)
        y0, y1 = min(p[1] for p in allp), max(p[1] for p in allp)
        sx = (W - 2 * pad) / ((x1 - x0) or 1)
        sy = (Hh - 2 * pad) / ((y1 - y0) or 1)
        for i, (name, ps) in enumerate(pts.items()):
            c = colours[i % len(colours)]
            coords = " ".join(f"{pad + (a - x0) * sx:.2f},{Hh - pad - (b - y0) * sy:.2f}" for a, b in ps)
            lines.append(f'<polyline fill="none" stroke="{c}" points="{coords}"/>')
            lines.append(f'<text x="{W - pad - 60}" y="{pad + 14 * i}" fill="{c}" font-size="12">{name}</text>')
    lines.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
