"""Homogeneous solutions of the thin obstacle problem.

A candidate q on R^n with thin obstacle L = {x_nu = 0} should be harmonic
off L, nonnegative on L, have Lap q <= 0 across L (nonpositive jump of the
normal derivative) and satisfy q Lap q = 0.

Three representations are supported:

* :class:`Polynomial` - a polynomial on all of R^n;
* :class:`HalfSpacePoly` - the even extension q(x) = Q(x', |x_n|) of a polynomial;
* :class:`HalfSpaceAnalytic` - in 2-D, A r^lam cos(lam theta + phase) with
  theta in [0, pi] measured from the positive tangential axis, reflected evenly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence, Union

import numpy as np
from scipy.stats import qmc

from .ansatz import Axis, harmonic_completion_odd, odd_harmonic_basis, tangential_monomials
from .polycore import (
    HomoPoly,
    NotDivisible,
    Poly,
    PolyLike,
    as_poly,
    divide_by_linear,
    evaluate_array,
    from_json_obj,
    laplacian,
    to_json_obj,
)


class StructureMismatch(ValueError):
    pass


@dataclass(frozen=True)
class Polynomial:
    poly: Poly


@dataclass(frozen=True)
class HalfSpacePoly:
    """q(x) = Q(x', |x_n|); ``Q`` is the restriction to {x_n > 0}."""

    Q: Poly


@dataclass(frozen=True)
class HalfSpaceAnalytic:
    amplitude: float = 1.0
    phase: float = 0.0


Representation = Union[Polynomial, HalfSpacePoly, HalfSpaceAnalytic]


@dataclass(frozen=True)
class SignoriniCandidate:
    dim: int
    nu: Axis
    lam: Fraction
    rep: Representation
    parity: str | None = None  # "even", "odd" or None when mixed
    label: str = ""

    def __post_init__(self):
        if isinstance(self.rep, HalfSpaceAnalytic) and self.dim != 2:
            raise ValueError("analytic half-space forms are 2-D only")
        if self.nu.index >= self.dim:
            raise ValueError("axis out of range")

    # evaluation ---------------------------------------------------------
    def _tangential_index(self) -> int:
        return 1 - self.nu.index

    def evaluate(self, pts) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        rep = self.rep
        if isinstance(rep, Polynomial):
            return evaluate_array(rep.poly, pts)
        if isinstance(rep, HalfSpacePoly):
            up = pts.copy()
            up[..., self.nu.index] = np.abs(up[..., self.nu.index])
            return evaluate_array(rep.Q, up)
        s = pts[..., self._tangential_index()]
        y = np.abs(pts[..., self.nu.index])
        r = np.hypot(s, y)
        th = np.arctan2(y, s)
        lam = float(self.lam)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = rep.amplitude * r**lam * np.cos(lam * th + rep.phase)
        return np.where(r > 0, out, 0.0) if lam > 0 else out

    def gradient(self, pts, side: int = 1) -> np.ndarray:
        """Gradient; on L the one-sided limit from ``side * x_nu > 0``."""
        pts = np.asarray(pts, dtype=float)
        n = self.dim
        i = self.nu.index
        rep = self.rep
        if isinstance(rep, Polynomial):
            return np.stack([evaluate_array(rep.poly.derivative(j), pts) for j in range(n)], axis=-1)
        xn = pts[..., i]
        sgn = np.where(xn > 0, 1.0, np.where(xn < 0, -1.0, float(side)))
        if isinstance(rep, HalfSpacePoly):
            up = pts.copy()
            up[..., i] = np.abs(xn)
            g = np.stack([evaluate_array(rep.Q.derivative(j), up) for j in range(n)], axis=-1)
            g[..., i] *= sgn
            return g
        s = pts[..., self._tangential_index()]
        y = np.abs(xn)
        r = np.hypot(s, y)
        th = np.arctan2(y, s)
        lam = float(self.lam)
        with np.errstate(divide="ignore", invalid="ignore"):
            mag = rep.amplitude * lam * r ** (lam - 1)
            gs = mag * np.cos((lam - 1) * th + rep.phase)
            gy = -mag * np.sin((lam - 1) * th + rep.phase)
        g = np.zeros(pts.shape)
        g[..., self._tangential_index()] = gs
        g[..., i] = gy * sgn
        return g

    def jump(self, pts_on_L) -> np.ndarray:
        """[d_nu q]^+ - [d_nu q]^- at points of L (the singular part of Lap q)."""
        up = self.gradient(pts_on_L, side=1)[..., self.nu.index]
        down = self.gradient(pts_on_L, side=-1)[..., self.nu.index]
        return up - down


# ------------------------------------------------------------- reflections


def reflect_poly(p: PolyLike, nu: Axis) -> Poly:
    """p(x - 2 (x.nu) nu) for an axis direction."""
    p = as_poly(p)
    terms = {e: (-c if e[nu.index] % 2 else c) for e, c in p.terms().items()}
    return Poly.from_terms(p.dim, terms)


def even_odd_split(q, nu: Axis | None = None):
    """Split into parts fixed and negated by the reflection across L."""
    if isinstance(q, SignoriniCandidate):
        if isinstance(q.rep, Polynomial):
            ev, od = even_odd_split(q.rep.poly, q.nu)
            mk = lambda p, par: SignoriniCandidate(q.dim, q.nu, q.lam, Polynomial(p), par, q.label)
            return mk(ev, "even"), mk(od, "odd")
        zero = SignoriniCandidate(q.dim, q.nu, q.lam, Polynomial(Poly.zero(q.dim)), "odd", q.label)
        return q, zero
    if nu is None:
        raise ValueError("nu required for polynomial input")
    p = as_poly(q)
    r = reflect_poly(p, nu)
    half = Fraction(1, 2)
    return (p + r).scale(half), (p - r).scale(half)


# ------------------------------------------------------------------ verify


@dataclass
class SignoriniReport:
    harmonic_off_L: bool
    nonneg_on_L: bool
    jump_nonpositive: bool
    complementarity: bool
    max_laplacian_residual: float
    min_on_L: float
    max_jump: float
    sampled: bool = True  # sign checks are semi-decisions on samples
    notes: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.harmonic_off_L and self.nonneg_on_L and self.jump_nonpositive and self.complementarity


def _samples_on_L(dim: int, nu: Axis, spacing: float, extent: float, n_qmc: int = 1000) -> np.ndarray:
    if dim == 2:
        m = int(round(2 * extent / spacing))
        s = np.linspace(-extent, extent, m + 1)
        pts = np.zeros((s.size, 2))
        pts[:, 1 - nu.index] = s
        return pts
    sob = qmc.Halton(d=dim - 1, scramble=False).random(n_qmc + 1)[1:]
    tang = (2 * sob - 1) * extent
    pts = np.zeros((tang.shape[0], dim))
    cols = [j for j in range(dim) if j != nu.index]
    pts[:, cols] = tang
    return pts


def _fd_laplacian(c: SignoriniCandidate, pts: np.ndarray, eps: float) -> np.ndarray:
    def lap(e):
        acc = -2 * c.dim * c.evaluate(pts)
        for j in range(c.dim):
            d = np.zeros(c.dim)
            d[j] = e
            acc = acc + c.evaluate(pts + d) + c.evaluate(pts - d)
        return acc / e**2

    # Richardson extrapolation of the 5-point formula
    return (4 * lap(eps / 2) - lap(eps)) / 3


def verify_signorini(c: SignoriniCandidate, tol: float = 1e-8, spacing: float = 1e-3, extent: float = 1.0) -> SignoriniReport:
    notes: list[str] = []
    rep = c.rep
    on_L = _samples_on_L(c.dim, c.nu, spacing, extent)
    if isinstance(rep, (Polynomial, HalfSpacePoly)):
        poly = rep.poly if isinstance(rep, Polynomial) else rep.Q
        harmonic = laplacian(poly).is_zero()
        lap_res = 0.0 if harmonic else math.inf
        notes.append("harmonicity checked symbolically")
    else:
        # lam-homogeneous, so checking on the unit circle off L is enough
        th = np.linspace(0.05, math.pi - 0.05, 400)
        up = np.stack([np.cos(th), np.sin(th)], axis=-1)
        if c.nu.index == 0:
            up = up[:, ::-1]
        pts = np.concatenate([up, up * np.where(np.arange(2) == c.nu.index, -1.0, 1.0)])
        lap_res = float(np.max(np.abs(_fd_laplacian(c, pts, 1e-2))))
        harmonic = lap_res <= tol
        notes.append("harmonicity by finite differences on the unit circle")
    vals = c.evaluate(on_L)
    min_L = float(np.min(vals))
    nonneg = min_L >= -tol
    jumps = c.jump(on_L)
    max_jump = float(np.max(jumps))
    jump_ok = max_jump <= tol
    positive = vals > tol
    comp = bool(np.all(np.abs(jumps[positive]) <= tol * max(1.0, float(np.max(np.abs(vals), initial=0.0)))))
    return SignoriniReport(harmonic, nonneg, jump_ok, comp, lap_res, min_L, max_jump, True, notes)


def homogeneity_defect(c: SignoriniCandidate, t: float, pts: np.ndarray) -> float:
    """max |q(t x) - t^lam q(x)| over the sample points."""
    if isinstance(c.rep, (Polynomial, HalfSpacePoly)) and Fraction(t) == t:
        poly = c.rep.poly if isinstance(c.rep, Polynomial) else c.rep.Q
        lam = int(c.lam)
        for j, hp in poly.parts.items():
            if j != lam:
                return math.inf
        return 0.0
    return float(np.max(np.abs(c.evaluate(t * pts) - t ** float(c.lam) * c.evaluate(pts))))


# ----------------------------------------------------------------- catalog


def _z_power(lam: int) -> tuple[Poly, Poly]:
    """Real and imaginary parts of (x1 + i x2)^lam."""
    re, im = Poly.const(2, 1), Poly.zero(2)
    x1, x2 = Poly.var(2, 0), Poly.var(2, 1)
    for _ in range(lam):
        re, im = re * x1 - im * x2, re * x2 + im * x1
    return re, im


def _as_fraction(lam) -> Fraction:
    if isinstance(lam, Fraction):
        return lam
    if isinstance(lam, float):
        return Fraction(str(lam))
    return Fraction(lam)


def admissibility(lam, dim: int) -> str:
    """'admissible', 'inadmissible' or 'unknown' for a homogeneity."""
    lam = _as_fraction(lam)
    if lam < 0:
        return "inadmissible"
    if lam.denominator == 1:
        return "admissible"
    if dim == 2:
        m = lam - Fraction(3, 2)
        return "admissible" if m >= 0 and m.denominator == 1 and m.numerator % 2 == 0 else "inadmissible"
    return "unknown"


def catalog_2d(lam, nu: Axis | None = None) -> list[SignoriniCandidate]:
    """Generators of the even and odd lam-homogeneous solutions in the plane.

    L = {x2 = 0} by default; ``nu`` may select the other axis.
    """
    lam = _as_fraction(lam)
    nu = nu or Axis(1)
    if admissibility(lam, 2) != "admissible":
        return []
    swap = nu.index == 0

    def orient(p: Poly) -> Poly:
        if not swap:
            return p
        return Poly.from_terms(2, {(e[1], e[0]): c for e, c in p.terms().items()})

    def cand(rep, parity, label):
        return SignoriniCandidate(2, nu, lam, rep, parity, label)

    if lam.denominator != 1:
        return [cand(HalfSpaceAnalytic(1.0, 0.0), "even", f"r^{lam} cos({lam} theta)")]
    m = int(lam)
    if m == 0:
        return [cand(Polynomial(Poly.const(2, 1)), "even", "1")]
    re, im = _z_power(m)
    odd = cand(Polynomial(orient(im.scale(Fraction(1, m)))), "odd", f"Im(z^{m})/{m}")
    if m % 2 == 0:
        even = cand(Polynomial(orient(re)), "even", f"Re(z^{m})")
    else:
        even = cand(HalfSpacePoly(orient(im.scale(Fraction(-1, m)))), "even", f"-Im((x1+i|x2|)^{m})/{m}")
    return [even, odd]


@dataclass
class CatalogResult:
    candidates: list[SignoriniCandidate]
    status: str  # admissible | inadmissible | unknown
    semi_decision: bool = False


def even_harmonic_completion(q0: HomoPoly, index: int) -> Poly:
    """Even-in-x_index harmonic h with h = q0 + O(x_index^2)."""
    xn = Poly.var(q0.dim, index)
    out, term, j, fact = Poly.zero(q0.dim), as_poly(q0), 0, 1
    while not term.is_zero():
        out = out + (xn ** (2 * j) * term).scale(Fraction((-1) ** j, fact))
        term = laplacian(term)
        j += 1
        fact *= (2 * j - 1) * (2 * j)
    return out


def catalog(lam, dim: int, nu: Axis | None = None) -> CatalogResult:
    """Catalog in any dimension; non-integer lam is 'unknown' for dim >= 3."""
    lam = _as_fraction(lam)
    nu = nu or Axis(dim - 1)
    if dim == 2:
        status = admissibility(lam, 2)
        return CatalogResult(catalog_2d(lam, nu), status)
    status = admissibility(lam, dim)
    if status != "admissible":
        return CatalogResult([], status)
    m = int(lam)
    out = [SignoriniCandidate(dim, nu, lam, Polynomial(as_poly(b)), "odd", "odd harmonic") for b in odd_harmonic_basis(dim, nu, m)]
    pts = _samples_on_L(dim, nu, 0.0, 1.0)
    for mono in tangential_monomials(dim, nu.index, m):
        h = even_harmonic_completion(mono, nu.index)
        if np.min(evaluate_array(h, pts)) >= 0:
            out.append(SignoriniCandidate(dim, nu, lam, Polynomial(h), "even", "even harmonic, sampled sign"))
    return CatalogResult(out, status, semi_decision=True)


# ------------------------------------------------------------ singular set


@dataclass
class SingularSetResult:
    points: np.ndarray  # grid points of L flagged singular
    exact_roots: list[float] | None  # n = 2: real common zeros on L
    all_of_L: bool = False


def _upoly_from_restriction(p: Poly, tang: int) -> list[Fraction]:
    """Coefficients (low to high) of p restricted to L as a polynomial in x_tang."""
    out: dict[int, Fraction] = {}
    for e, c in p.terms().items():
        if all(a == 0 for j, a in enumerate(e) if j != tang):
            out[e[tang]] = out.get(e[tang], Fraction(0)) + c
    deg = max(out, default=-1)
    return [out.get(i, Fraction(0)) for i in range(deg + 1)]


def _utrim(a: list[Fraction]) -> list[Fraction]:
    while a and a[-1] == 0:
        a = a[:-1]
    return a


def _ugcd(a: list[Fraction], b: list[Fraction]) -> list[Fraction]:
    a, b = _utrim(a), _utrim(b)
    while b:
        r = a[:]
        while len(_utrim(r)) >= len(b):
            r = _utrim(r)
            f = r[-1] / b[-1]
            shift = len(r) - len(b)
            for i, bc in enumerate(b):
                r[i + shift] -= f * bc
            r = _utrim(r)
            if not r:
                break
        a, b = b, _utrim(r)
    return [c / a[-1] for c in a] if a else []


def singular_set(c: SignoriniCandidate | PolyLike, h: float, extent: float = 1.0, nu: Axis | None = None) -> SingularSetResult:
    """Points of L where |q| <= h^2 and |grad q| <= h, plus exact roots in 2-D."""
    if not isinstance(c, SignoriniCandidate):
        p = as_poly(c)
        c = SignoriniCandidate(p.dim, nu or Axis(p.dim - 1), Fraction(max(p.degree, 0)), Polynomial(p))
    if isinstance(c.rep, HalfSpaceAnalytic):
        raise ValueError("singular_set needs a polynomial representation")
    n = c.dim
    m = int(round(2 * extent / h))
    s = np.linspace(-extent, extent, m + 1)
    grids = np.meshgrid(*([s] * (n - 1)), indexing="ij")
    tang_cols = [j for j in range(n) if j != c.nu.index]
    pts = np.zeros(grids[0].shape + (n,))
    for j, g in zip(tang_cols, grids):
        pts[..., j] = g
    pts = pts.reshape(-1, n)
    val = np.abs(c.evaluate(pts))
    grad = np.maximum(np.linalg.norm(c.gradient(pts, 1), axis=-1), np.linalg.norm(c.gradient(pts, -1), axis=-1))
    mask = (val <= h * h) & (grad <= h)
    roots = None
    all_L = False
    if n == 2:
        tang = tang_cols[0]
        poly = c.rep.poly if isinstance(c.rep, Polynomial) else c.rep.Q
        restr = [poly] + [poly.derivative(j) for j in range(2)]
        coeff_lists = [_utrim(_upoly_from_restriction(r, tang)) for r in restr]
        nonzero = [cl for cl in coeff_lists if cl]
        if not nonzero:
            all_L = True
            roots = []
        else:
            g = nonzero[0]
            for cl in nonzero[1:]:
                g = _ugcd(g, cl)
            if len(g) <= 1:
                roots = []
            else:
                rts = np.roots([float(x) for x in reversed(g)])
                roots = sorted({round(float(r.real), 12) for r in rts if abs(r.imag) < 1e-9})
    return SingularSetResult(pts[mask], roots, all_L)


# --------------------------------------------------------- odd structure


@dataclass
class OddStructure:
    q0: Poly
    q1_input: Poly
    q1_harmonic: Poly
    completion: Poly
    q0_nonneg: bool
    harmonic: bool

    @property
    def passed(self) -> bool:
        return self.q0_nonneg and self.harmonic


def odd_structure_check(q, nu: Axis | None = None, tol: float = 0.0) -> OddStructure:
    """Decompose an even, odd-degree half-space form as -x_n q0 + x_n^3 q1.

    ``q`` is a candidate with :class:`HalfSpacePoly` representation or the
    polynomial ``Q`` giving q on {x_n > 0}.  ``q1_harmonic`` is the unique
    even-in-x_n polynomial making the completion harmonic.
    """
    if isinstance(q, SignoriniCandidate):
        if not isinstance(q.rep, HalfSpacePoly):
            raise StructureMismatch("expected an even half-space representation")
        Q, nu = q.rep.Q, q.nu
    else:
        Q = as_poly(q)
        nu = nu or Axis(Q.dim - 1)
    n, i = Q.dim, nu.index
    if Q.is_zero():
        z = Poly.zero(n)
        return OddStructure(z, z, z, z, True, True)
    if Q.min_degree != Q.degree:
        raise StructureMismatch("q is not homogeneous")
    lam = Q.degree
    if lam % 2 == 0:
        raise StructureMismatch("homogeneity must be an odd integer")
    if reflect_poly(Q, Axis(i)) != -Q:
        raise StructureMismatch("restriction is not odd in the normal variable")
    e_n = [1 if j == i else 0 for j in range(n)]
    try:
        quot = divide_by_linear(Q.part(lam), e_n)
    except NotDivisible as exc:
        raise StructureMismatch("restriction does not vanish on L") from exc
    q0 = Poly.from_terms(n, {e: -c for e, c in quot.items() if e[i] == 0})
    xn = Poly.var(n, i)
    rest = Q + xn * q0
    q1_in = Poly.zero(n)
    if not rest.is_zero():
        r = rest.part(lam)
        for _ in range(3):
            r = divide_by_linear(r, e_n)
        q1_in = as_poly(r)
    completion = harmonic_completion_odd(q0.part(lam - 1) if not q0.is_zero() else HomoPoly.zero(n, lam - 1), i).scale(-1)
    rest_c = completion + xn * q0
    q1_h = Poly.zero(n)
    if not rest_c.is_zero():
        r = rest_c.part(lam)
        for _ in range(3):
            r = divide_by_linear(r, e_n)
        q1_h = as_poly(r)
    pts = _samples_on_L(n, nu, 1e-3, 1.0)
    q0_min = float(np.min(evaluate_array(q0, pts))) if not q0.is_zero() else 0.0
    if q0_min < -tol:
        raise StructureMismatch(f"q0 takes the negative value {q0_min:.3g} on L")
    return OddStructure(q0, q1_in, q1_h, completion, True, laplacian(Q).is_zero())


# ------------------------------------------------------------- JSON files


def candidate_to_json_obj(c: SignoriniCandidate) -> dict:
    rep = c.rep
    if isinstance(rep, Polynomial):
        r = {"kind": "polynomial", "poly": to_json_obj(rep.poly)}
    elif isinstance(rep, HalfSpacePoly):
        r = {"kind": "halfspace", "Q": to_json_obj(rep.Q)}
    else:
        r = {"kind": "analytic", "amplitude": rep.amplitude, "phase": rep.phase}
    return {
        "dim": c.dim,
        "nu": {"index": c.nu.index, "sign": c.nu.sign},
        "lam": str(c.lam),
        "rep": r,
        "parity": c.parity,
        "label": c.label,
    }


def candidate_from_json_obj(obj: dict) -> SignoriniCandidate:
    r = obj["rep"]
    if r["kind"] == "polynomial":
        rep: Representation = Polynomial(from_json_obj(r["poly"]))
    elif r["kind"] == "halfspace":
        rep = HalfSpacePoly(from_json_obj(r["Q"]))
    elif r["kind"] == "analytic":
        rep = HalfSpaceAnalytic(float(r["amplitude"]), float(r["phase"]))
    else:
        raise ValueError(f"unknown representation {r['kind']!r}")
    nu = Axis(int(obj["nu"]["index"]), int(obj["nu"]["sign"]))
    return SignoriniCandidate(int(obj["dim"]), nu, Fraction(obj["lam"]), rep, obj.get("parity"), obj.get("label", ""))
