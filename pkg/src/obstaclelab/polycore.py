"""Exact multivariate polynomials with rational coefficients.

Two value types live here.  :class:`HomoPoly` is a homogeneous polynomial
stored as a map from exponent tuples to :class:`fractions.Fraction`;
:class:`Poly` is a graded sum of them.  Both are immutable and hashable.

Sphere integrals use closed-form monomial moments, reported as an exact
rational multiple of the sphere area together with a float value.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from itertools import combinations_with_replacement
from typing import Iterable, Iterator, Mapping, Sequence, Union

import numpy as np

Exponent = tuple[int, ...]
Rational = Union[int, Fraction]
Scalar = Union[int, float, Fraction]


class PolyError(ValueError):
    """Base class for polynomial errors."""


class NotDivisible(PolyError):
    """Raised when a polynomial is not divisible by a linear form."""


class DimensionMismatch(PolyError):
    """Raised when operands live in different ambient dimensions."""


def _frac(c: Scalar) -> Fraction:
    if isinstance(c, Fraction):
        return c
    if isinstance(c, int):
        return Fraction(c)
    if isinstance(c, float):
        return Fraction(c)
    if isinstance(c, str):
        return Fraction(c)
    raise TypeError(f"cannot use {type(c).__name__} as an exact coefficient")


def monomials(dim: int, degree: int) -> list[Exponent]:
    """All exponents of total ``degree`` in ``dim`` variables, graded-lex descending."""
    out = []
    for combo in combinations_with_replacement(range(dim), degree):
        e = [0] * dim
        for i in combo:
            e[i] += 1
        out.append(tuple(e))
    out.sort(reverse=True)
    return out


def _grlex_key(e: Exponent) -> tuple:
    # ascending total degree, then lexicographically descending
    return (sum(e), tuple(-a for a in e))


# ---------------------------------------------------------------- HomoPoly


@dataclass(frozen=True, eq=False)
class HomoPoly:
    """Homogeneous polynomial of fixed degree in ``dim`` variables."""

    dim: int
    degree: int
    _terms: tuple[tuple[Exponent, Fraction], ...]

    def __init__(self, dim: int, degree: int, coeffs: Mapping[Exponent, Scalar] | None = None):
        if dim < 1:
            raise PolyError("dim must be positive")
        if degree < 0:
            raise PolyError("degree must be nonnegative")
        terms = {}
        for e, c in (coeffs or {}).items():
            e = tuple(int(a) for a in e)
            if len(e) != dim:
                raise DimensionMismatch(f"exponent {e} has length {len(e)}, expected {dim}")
            if sum(e) != degree or min(e) < 0:
                raise PolyError(f"exponent {e} is not of degree {degree}")
            c = _frac(c)
            if c:
                terms[e] = terms.get(e, Fraction(0)) + c
        items = tuple(sorted(((e, c) for e, c in terms.items() if c), key=lambda t: _grlex_key(t[0])))
        object.__setattr__(self, "dim", dim)
        object.__setattr__(self, "degree", degree)
        object.__setattr__(self, "_terms", items)

    @classmethod
    def zero(cls, dim: int, degree: int) -> "HomoPoly":
        return cls(dim, degree, {})

    @classmethod
    def monomial(cls, exponent: Sequence[int], coeff: Scalar = 1) -> "HomoPoly":
        e = tuple(exponent)
        return cls(len(e), sum(e), {e: coeff})

    @classmethod
    def from_vector(cls, dim: int, degree: int, vec: Sequence[Scalar]) -> "HomoPoly":
        basis = monomials(dim, degree)
        return cls(dim, degree, dict(zip(basis, vec)))

    @property
    def coeffs(self) -> dict[Exponent, Fraction]:
        return dict(self._terms)

    def items(self) -> Iterator[tuple[Exponent, Fraction]]:
        return iter(self._terms)

    def to_vector(self) -> list[Fraction]:
        c = self.coeffs
        return [c.get(e, Fraction(0)) for e in monomials(self.dim, self.degree)]

    def is_zero(self) -> bool:
        return not self._terms

    def __bool__(self) -> bool:
        return bool(self._terms)

    def __eq__(self, other: object) -> bool:
        if isinstance(other, HomoPoly):
            return self.dim == other.dim and self.degree == other.degree and self._terms == other._terms
        if isinstance(other, Poly):
            return Poly.from_homo(self) == other
        return NotImplemented

    def __hash__(self) -> int:
        return hash((self.dim, self.degree, self._terms))

    def __repr__(self) -> str:
        return f"HomoPoly({format_poly(Poly.from_homo(self))})"

    def _check(self, other: "HomoPoly") -> None:
        if self.dim != other.dim:
            raise DimensionMismatch(f"dims {self.dim} and {other.dim}")

    def __add__(self, other: "HomoPoly") -> "HomoPoly":
        if not isinstance(other, HomoPoly):
            return NotImplemented
        self._check(other)
        if self.degree != other.degree:
            raise PolyError("adding homogeneous polynomials of different degree; use Poly")
        c = self.coeffs
        for e, v in other._terms:
            c[e] = c.get(e, Fraction(0)) + v
        return HomoPoly(self.dim, self.degree, c)

    def __neg__(self) -> "HomoPoly":
        return HomoPoly(self.dim, self.degree, {e: -c for e, c in self._terms})

    def __sub__(self, other: "HomoPoly") -> "HomoPoly":
        return self + (-other)

    def scale(self, s: Scalar) -> "HomoPoly":
        s = _frac(s)
        return HomoPoly(self.dim, self.degree, {e: c * s for e, c in self._terms})

    def __mul__(self, other):
        if isinstance(other, HomoPoly):
            self._check(other)
            out: dict[Exponent, Fraction] = {}
            for e1, c1 in self._terms:
                for e2, c2 in other._terms:
                    e = tuple(a + b for a, b in zip(e1, e2))
                    out[e] = out.get(e, Fraction(0)) + c1 * c2
            return HomoPoly(self.dim, self.degree + other.degree, out)
        if isinstance(other, (int, Fraction)):
            return self.scale(other)
        return NotImplemented

    __rmul__ = __mul__

    def derivative(self, i: int) -> "HomoPoly":
        if self.degree == 0:
            return HomoPoly.zero(self.dim, 0)
        out = {}
        for e, c in self._terms:
            if e[i]:
                d = list(e)
                d[i] -= 1
                out[tuple(d)] = c * e[i]
        return HomoPoly(self.dim, self.degree - 1, out)

    def laplacian(self) -> "HomoPoly":
        if self.degree < 2:
            return HomoPoly.zero(self.dim, 0)
        out: dict[Exponent, Fraction] = {}
        for e, c in self._terms:
            for i, a in enumerate(e):
                if a >= 2:
                    d = list(e)
                    d[i] -= 2
                    d = tuple(d)
                    out[d] = out.get(d, Fraction(0)) + c * a * (a - 1)
        return HomoPoly(self.dim, self.degree - 2, out)

    def to_poly(self) -> "Poly":
        return Poly.from_homo(self)


# -------------------------------------------------------------------- Poly


@dataclass(frozen=True, eq=False)
class Poly:
    """Polynomial stored by its homogeneous parts."""

    dim: int
    _parts: tuple[tuple[int, HomoPoly], ...]

    def __init__(self, dim: int, parts: Mapping[int, HomoPoly] | Iterable[HomoPoly] | None = None):
        acc: dict[int, HomoPoly] = {}
        if isinstance(parts, Mapping):
            seq: Iterable[HomoPoly] = parts.values()
            for j, hp in parts.items():
                if hp.degree != j:
                    raise PolyError(f"part stored under degree {j} has degree {hp.degree}")
        else:
            seq = parts or ()
        for hp in seq:
            if hp.dim != dim:
                raise DimensionMismatch(f"part of dim {hp.dim} in Poly of dim {dim}")
            acc[hp.degree] = acc[hp.degree] + hp if hp.degree in acc else hp
        object.__setattr__(self, "dim", dim)
        object.__setattr__(self, "_parts", tuple(sorted((j, p) for j, p in acc.items() if p)))

    # construction helpers
    @classmethod
    def zero(cls, dim: int) -> "Poly":
        return cls(dim)

    @classmethod
    def const(cls, dim: int, c: Scalar) -> "Poly":
        return cls(dim, [HomoPoly(dim, 0, {(0,) * dim: c})])

    @classmethod
    def var(cls, dim: int, i: int, coeff: Scalar = 1) -> "Poly":
        e = [0] * dim
        e[i] = 1
        return cls(dim, [HomoPoly(dim, 1, {tuple(e): coeff})])

    @classmethod
    def from_homo(cls, hp: HomoPoly) -> "Poly":
        return cls(hp.dim, [hp])

    @classmethod
    def from_terms(cls, dim: int, terms: Mapping[Exponent, Scalar]) -> "Poly":
        by_deg: dict[int, dict[Exponent, Scalar]] = {}
        for e, c in terms.items():
            by_deg.setdefault(sum(e), {})[tuple(e)] = c
        return cls(dim, [HomoPoly(dim, j, t) for j, t in by_deg.items()])

    @property
    def parts(self) -> dict[int, HomoPoly]:
        return dict(self._parts)

    def part(self, j: int) -> HomoPoly:
        return dict(self._parts).get(j, HomoPoly.zero(self.dim, j))

    def terms(self) -> dict[Exponent, Fraction]:
        out = {}
        for _, hp in self._parts:
            out.update(hp.coeffs)
        return out

    @property
    def degree(self) -> int:
        """Top degree; -1 for the zero polynomial."""
        return self._parts[-1][0] if self._parts else -1

    @property
    def min_degree(self) -> int:
        return self._parts[0][0] if self._parts else -1

    def is_zero(self) -> bool:
        return not self._parts

    def __bool__(self) -> bool:
        return bool(self._parts)

    def __eq__(self, other: object) -> bool:
        if isinstance(other, HomoPoly):
            other = Poly.from_homo(other)
        if isinstance(other, Poly):
            return self.dim == other.dim and self._parts == other._parts
        if isinstance(other, (int, Fraction)):
            return self == Poly.const(self.dim, other)
        return NotImplemented

    def __hash__(self) -> int:
        return hash((self.dim, self._parts))

    def __repr__(self) -> str:
        return f"Poly({format_poly(self)})"

    # arithmetic
    def _coerce(self, other) -> "Poly":
        if isinstance(other, Poly):
            q = other
        elif isinstance(other, HomoPoly):
            q = Poly.from_homo(other)
        elif isinstance(other, (int, Fraction)):
            q = Poly.const(self.dim, other)
        else:
            raise TypeError(f"cannot combine Poly with {type(other).__name__}")
        if q.dim != self.dim:
            raise DimensionMismatch(f"dims {self.dim} and {q.dim}")
        return q

    def __add__(self, other) -> "Poly":
        q = self._coerce(other)
        return Poly(self.dim, [hp for _, hp in self._parts] + [hp for _, hp in q._parts])

    __radd__ = __add__

    def __neg__(self) -> "Poly":
        return Poly(self.dim, [-hp for _, hp in self._parts])

    def __sub__(self, other) -> "Poly":
        return self + (-self._coerce(other))

    def __rsub__(self, other) -> "Poly":
        return self._coerce(other) - self

    def scale(self, s: Scalar) -> "Poly":
        return Poly(self.dim, [hp.scale(s) for _, hp in self._parts])

    def __mul__(self, other) -> "Poly":
        if isinstance(other, (int, Fraction)):
            return self.scale(other)
        q = self._coerce(other)
        prods = [a * b for _, a in self._parts for _, b in q._parts]
        return Poly(self.dim, prods)

    __rmul__ = __mul__

    def __pow__(self, m: int) -> "Poly":
        out = Poly.const(self.dim, 1)
        for _ in range(m):
            out = out * self
        return out

    def derivative(self, i: int) -> "Poly":
        return Poly(self.dim, [hp.derivative(i) for _, hp in self._parts if hp.degree > 0])

    def laplacian(self) -> "Poly":
        return laplacian(self)

    def project(self, j: int, mode: str = "exact") -> "Poly":
        return project(self, j, mode)

    def __call__(self, x: Sequence[Scalar]):
        return evaluate(self, x)


PolyLike = Union[Poly, HomoPoly]


def as_poly(p: PolyLike) -> Poly:
    return Poly.from_homo(p) if isinstance(p, HomoPoly) else p


# -------------------------------------------------------------- operations


def laplacian(p: PolyLike) -> Poly:
    """Sum of pure second derivatives; each part drops two degrees."""
    p = as_poly(p)
    return Poly(p.dim, [hp.laplacian() for _, hp in p._parts if hp.degree >= 2])


def project(p: PolyLike, j: int, mode: str = "exact") -> Poly:
    """``exact`` keeps the degree-j part, ``upto`` keeps all parts of degree <= j."""
    p = as_poly(p)
    if mode == "exact":
        return Poly(p.dim, [hp for d, hp in p._parts if d == j])
    if mode == "upto":
        return Poly(p.dim, [hp for d, hp in p._parts if d <= j])
    raise ValueError(f"unknown projection mode {mode!r}")


def _linear_form(nu, dim: int) -> list[Fraction]:
    if isinstance(nu, int):
        raise TypeError("pass a direction vector, not an int")
    if hasattr(nu, "vector"):
        nu = nu.vector()
    v = [_frac(c) for c in nu]
    if len(v) != dim:
        raise DimensionMismatch(f"direction of length {len(v)} in dimension {dim}")
    if not any(v):
        raise PolyError("zero direction")
    return v


def divide_by_linear(p: HomoPoly, nu) -> HomoPoly:
    """Exact quotient of ``p`` by the linear form ``nu . x``.

    Long division in the pivot variable (the last nonzero entry of ``nu``);
    raises :class:`NotDivisible` on a nonzero remainder.
    """
    v = _linear_form(nu, p.dim)
    piv = max(i for i, c in enumerate(v) if c)
    if p.degree == 0:
        if p.is_zero():
            return HomoPoly.zero(p.dim, 0)
        raise NotDivisible("nonzero constant is not divisible by a linear form")
    rem = p.coeffs
    quot: dict[Exponent, Fraction] = {}
    while True:
        tops = [e for e, c in rem.items() if c and e[piv] > 0]
        if not tops:
            break
        e = max(tops, key=lambda t: (t[piv], t))
        c = rem[e] / v[piv]
        qe = list(e)
        qe[piv] -= 1
        qe = tuple(qe)
        quot[qe] = quot.get(qe, Fraction(0)) + c
        for i, vi in enumerate(v):
            if vi:
                te = list(qe)
                te[i] += 1
                te = tuple(te)
                rem[te] = rem.get(te, Fraction(0)) - c * vi
        rem = {k: val for k, val in rem.items() if val}
    if any(rem.values()):
        raise NotDivisible("remainder of division by the linear form is nonzero")
    return HomoPoly(p.dim, p.degree - 1, quot)


def multiply_by_linear(p: PolyLike, nu) -> Poly:
    p = as_poly(p)
    v = _linear_form(nu, p.dim)
    lin = Poly(p.dim, [HomoPoly(p.dim, 1, {tuple(int(i == j) for j in range(p.dim)): c for i, c in enumerate(v) if c})])
    return p * lin


# ------------------------------------------------------------ sphere moments


@dataclass(frozen=True)
class SphereValue:
    """An integral over the unit sphere: ``ratio`` times the sphere area."""

    ratio: Fraction
    dim: int

    @property
    def value(self) -> float:
        return float(self.ratio) * sphere_area(self.dim)

    def __float__(self) -> float:
        return self.value


def sphere_area(dim: int) -> float:
    """Surface measure of the unit sphere in R^dim."""
    return 2.0 * math.pi ** (dim / 2) / math.gamma(dim / 2)


@lru_cache(maxsize=None)
def sphere_moment(exponent: Exponent) -> Fraction:
    """Mean of x^exponent over the unit sphere, as an exact rational."""
    if any(a % 2 for a in exponent):
        return Fraction(0)
    n = len(exponent)
    m = [a // 2 for a in exponent]
    num = Fraction(1)
    for mi in m:
        # Gamma(mi + 1/2) / Gamma(1/2)
        num *= Fraction(math.factorial(2 * mi), 4**mi * math.factorial(mi))
    den = Fraction(1)
    half_n = Fraction(n, 2)
    for j in range(sum(m)):
        den *= half_n + j
    return num / den


def sphere_inner(p: PolyLike, q: PolyLike) -> SphereValue:
    """Integral of p*q over the unit sphere."""
    p, q = as_poly(p), as_poly(q)
    if p.dim != q.dim:
        raise DimensionMismatch(f"dims {p.dim} and {q.dim}")
    tp, tq = p.terms(), q.terms()
    total = Fraction(0)
    for e1, c1 in tp.items():
        for e2, c2 in tq.items():
            e = tuple(a + b for a, b in zip(e1, e2))
            mom = sphere_moment(e)
            if mom:
                total += c1 * c2 * mom
    return SphereValue(total, p.dim)


def sphere_norm(p: PolyLike) -> float:
    return math.sqrt(sphere_inner(p, p).value)


# --------------------------------------------------------------- evaluation


def evaluate(p: PolyLike, x: Sequence[Scalar]):
    """Value at a point; exact when every coordinate is int or Fraction."""
    p = as_poly(p)
    if len(x) != p.dim:
        raise DimensionMismatch(f"point of length {len(x)} in dimension {p.dim}")
    exact = all(isinstance(c, (int, Fraction)) for c in x)
    xs = [Fraction(c) for c in x] if exact else [float(c) for c in x]
    total = Fraction(0) if exact else 0.0
    for e, c in p.terms().items():
        t = c if exact else float(c)
        for xi, a in zip(xs, e):
            if a:
                t = t * xi**a
        total += t
    return total


def gradient(p: PolyLike, x: Sequence[Scalar]) -> list:
    p = as_poly(p)
    return [evaluate(p.derivative(i), x) for i in range(p.dim)]


def evaluate_array(p: PolyLike, pts: np.ndarray) -> np.ndarray:
    """Vectorized float evaluation at points of shape (..., dim)."""
    p = as_poly(p)
    pts = np.asarray(pts, dtype=float)
    if pts.shape[-1] != p.dim:
        raise DimensionMismatch(f"points of width {pts.shape[-1]} in dimension {p.dim}")
    out = np.zeros(pts.shape[:-1])
    terms = p.terms()
    if not terms:
        return out
    maxdeg = max(max(e) for e in terms)
    pows = [[np.ones(pts.shape[:-1])] for _ in range(p.dim)]
    for i in range(p.dim):
        xi = pts[..., i]
        for _ in range(maxdeg):
            pows[i].append(pows[i][-1] * xi)
    for e, c in terms.items():
        t = np.full(pts.shape[:-1], float(c))
        for i, a in enumerate(e):
            if a:
                t = t * pows[i][a]
        out += t
    return out


def evaluate_grid(p: PolyLike, axes: Sequence[np.ndarray]) -> np.ndarray:
    """Evaluate on the tensor grid spanned by 1-D coordinate arrays."""
    mesh = np.meshgrid(*axes, indexing="ij")
    return evaluate_array(p, np.stack(mesh, axis=-1))


# ------------------------------------------------------------ change of basis


def substitute_linear(p: PolyLike, matrix: Sequence[Sequence[Scalar]]) -> Poly:
    """Return p(M x) for an exact square matrix M."""
    p = as_poly(p)
    n = p.dim
    M = [[_frac(c) for c in row] for row in matrix]
    if len(M) != n or any(len(r) != n for r in M):
        raise DimensionMismatch("matrix shape does not match dimension")
    rows = [Poly(n, [HomoPoly(n, 1, {tuple(int(i == j) for j in range(n)): M[r][i] for i in range(n)})]) for r in range(n)]
    out = Poly.zero(n)
    for e, c in p.terms().items():
        t = Poly.const(n, c)
        for r, a in enumerate(e):
            if a:
                t = t * rows[r] ** a
        out = out + t
    return out


# ------------------------------------------------------------ serialization


def _fmt_frac(c: Fraction) -> str:
    return f"{c.numerator}/{c.denominator}"


def to_text(p: PolyLike) -> str:
    """Canonical text form: a ``dim`` header then ``num/den : a1 ... an`` per term."""
    p = as_poly(p)
    lines = [f"dim {p.dim}"]
    for e, c in sorted(p.terms().items(), key=lambda t: _grlex_key(t[0])):
        lines.append(f"{_fmt_frac(c)} : {' '.join(str(a) for a in e)}")
    return "\n".join(lines) + "\n"


def from_text(text: str) -> Poly:
    dim = None
    terms: dict[Exponent, Fraction] = {}
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("dim"):
            dim = int(line.split()[1])
            continue
        coeff, _, exps = line.partition(":")
        e = tuple(int(a) for a in exps.split())
        if dim is None:
            dim = len(e)
        terms[e] = terms.get(e, Fraction(0)) + Fraction(coeff.strip())
    if dim is None:
        raise PolyError("empty polynomial text without a dim header")
    return Poly.from_terms(dim, terms)


def to_json_obj(p: PolyLike) -> dict:
    p = as_poly(p)
    items = sorted(p.terms().items(), key=lambda t: _grlex_key(t[0]))
    return {"dim": p.dim, "terms": [{"exp": list(e), "coeff": _fmt_frac(c)} for e, c in items]}


def from_json_obj(obj: Mapping) -> Poly:
    dim = int(obj["dim"])
    terms: dict[Exponent, Fraction] = {}
    for t in obj["terms"]:
        e = tuple(int(a) for a in t["exp"])
        terms[e] = terms.get(e, Fraction(0)) + Fraction(t["coeff"])
    return Poly.from_terms(dim, terms)


def to_json(p: PolyLike) -> str:
    return json.dumps(to_json_obj(p), sort_keys=True)


def from_json(s: str) -> Poly:
    return from_json_obj(json.loads(s))


def format_poly(p: PolyLike, names: Sequence[str] | None = None) -> str:
    """Human-readable rendering such as ``x2^3 - 3*x1^2*x2``."""
    p = as_poly(p)
    names = names or [f"x{i + 1}" for i in range(p.dim)]
    items = sorted(p.terms().items(), key=lambda t: _grlex_key(t[0]))
    if not items:
        return "0"
    out = []
    for e, c in items:
        mono = "*".join(f"{names[i]}^{a}" if a > 1 else names[i] for i, a in enumerate(e) if a)
        mag = abs(c)
        if mono:
            body = mono if mag == 1 else f"{mag}*{mono}"
        else:
            body = str(mag)
        sign = "-" if c < 0 else "+"
        out.append((sign, body))
    s = ("-" if out[0][0] == "-" else "") + out[0][1]
    for sign, body in out[1:]:
        s += f" {sign} {body}"
    return s


def parse_poly(expr: str, dim: int) -> Poly:
    """Parse a small arithmetic expression in x1..xn with rational constants.

    Supports ``+ - * / ^ **`` and parentheses; division only by constants.
    """
    import ast

    tree = ast.parse(expr.replace("^", "**"), mode="eval")

    def ev(node) -> Poly:
        if isinstance(node, ast.Expression):
            return ev(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            return Poly.const(dim, _frac(node.value) if isinstance(node.value, int) else Fraction(str(node.value)))
        if isinstance(node, ast.Name):
            name = node.id
            if name.startswith("x") and name[1:].isdigit():
                i = int(name[1:]) - 1
                if not 0 <= i < dim:
                    raise PolyError(f"variable {name} out of range for dim {dim}")
                return Poly.var(dim, i)
            raise PolyError(f"unknown name {name!r}")
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
            v = ev(node.operand)
            return -v if isinstance(node.op, ast.USub) else v
        if isinstance(node, ast.BinOp):
            a, b = ev(node.left), ev(node.right)
            if isinstance(node.op, ast.Add):
                return a + b
            if isinstance(node.op, ast.Sub):
                return a - b
            if isinstance(node.op, ast.Mult):
                return a * b
            if isinstance(node.op, ast.Div):
                if b.degree > 0 or b.is_zero():
                    raise PolyError("division only by nonzero constants")
                return a.scale(1 / b.part(0).coeffs[(0,) * dim])
            if isinstance(node.op, ast.Pow):
                if b.degree > 0:
                    raise PolyError("exponent must be a constant")
                k = b.part(0).coeffs.get((0,) * dim, Fraction(0))
                if k.denominator != 1 or k < 0:
                    raise PolyError("exponent must be a nonnegative integer")
                return a ** int(k)
        raise PolyError(f"unsupported syntax: {ast.dump(node)}")

    return ev(tree)
