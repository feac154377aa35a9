"""Polynomial Ansatz around a top-stratum singular point.

Given harmonic p_3..p_k vanishing on {x_nu = 0} (p_2 = x_nu^2 / 2), the
correctors R_1..R_{k-1} are fixed so that

    A = x_nu + sum_j x_nu R_j + sum_j p_j / x_nu

satisfies pi_{<=k-1} Lap(A^2 / 2) = 1 (or the Taylor polynomial of a general
right-hand side).  P_k is the truncation of A^2 / 2 at degree k+1.

Each corrector is obtained by recomputing the degree-m part of Lap(A^2 / 2)
from scratch and inverting delta_m(q) = Lap(p_2 q) on it.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Sequence, Union

from .polycore import (
    HomoPoly,
    NotDivisible,
    Poly,
    PolyError,
    as_poly,
    divide_by_linear,
    from_json_obj,
    laplacian,
    monomials,
    project,
    to_json_obj,
)


class AnsatzError(ValueError):
    pass


class InvalidInput(AnsatzError):
    """Input tuple is not admissible."""


class SingularSystem(AnsatzError):
    """delta_m turned out singular; never expected for a valid p_2."""


@dataclass(frozen=True)
class Axis:
    """Signed coordinate direction ``sign * e_index``."""

    index: int
    sign: int = 1

    def __post_init__(self):
        if self.sign not in (1, -1):
            raise ValueError("sign must be +1 or -1")
        if self.index < 0:
            raise ValueError("index must be nonnegative")

    def vector(self, dim: int | None = None) -> list[int]:
        n = dim if dim is not None else self.index + 1
        return [self.sign if i == self.index else 0 for i in range(n)]

    def linear(self, dim: int) -> Poly:
        return Poly.var(dim, self.index, self.sign)

    def flipped(self) -> "Axis":
        return Axis(self.index, -self.sign)

    @classmethod
    def from_vector(cls, v: Sequence) -> "Axis":
        nz = [(i, c) for i, c in enumerate(v) if c]
        if len(nz) != 1 or abs(Fraction(nz[0][1])) != 1:
            raise InvalidInput(f"direction {list(v)} is not a signed coordinate axis")
        return cls(nz[0][0], 1 if nz[0][1] > 0 else -1)


@dataclass(frozen=True)
class UnitRhs:
    """f identically 1."""


@dataclass(frozen=True)
class TaylorData:
    """Taylor polynomial ``F`` of f at ``center`` (variables are h = x - center)."""

    center: tuple
    F: Poly
    f0: Fraction

    def __post_init__(self):
        if self.F.part(0).coeffs.get((0,) * self.F.dim, Fraction(0)) != self.f0:
            raise InvalidInput("constant term of F must equal f(x0)")
        if self.f0 <= 0:
            raise InvalidInput("f(x0) must be positive")


Rhs = Union[UnitRhs, TaylorData]


@dataclass(frozen=True)
class AnsatzInput:
    dim: int
    order: int
    nu: Axis
    p_list: tuple[HomoPoly, ...] = ()
    rhs: Rhs = field(default_factory=UnitRhs)

    def __post_init__(self):
        object.__setattr__(self, "p_list", tuple(self.p_list))

    def p(self, j: int) -> HomoPoly:
        return self.p_list[j - 3]

    def truncated(self, k: int) -> "AnsatzInput":
        return AnsatzInput(self.dim, k, self.nu, self.p_list[: max(k - 2, 0)], self.rhs)


@dataclass(frozen=True)
class AnsatzFamily:
    input: AnsatzInput
    R_list: tuple[HomoPoly, ...]
    A: Poly
    halfA2: Poly
    P: Poly

    @property
    def order(self) -> int:
        return self.input.order

    @property
    def dim(self) -> int:
        return self.input.dim

    @property
    def p2(self) -> HomoPoly:
        x = self.input.nu.linear(self.dim)
        return (x * x).scale(Fraction(1, 2)).part(2)

    @property
    def f0(self) -> Fraction:
        rhs = self.input.rhs
        return rhs.f0 if isinstance(rhs, TaylorData) else Fraction(1)


# ------------------------------------------------------------------ delta map


def delta_map(nu: Axis, q: HomoPoly) -> HomoPoly:
    """delta_m(q) = Lap(p_2 q) with p_2 = (nu.x)^2 / 2."""
    x = nu.linear(q.dim)
    p2 = (x * x).scale(Fraction(1, 2))
    return laplacian(p2 * q).part(q.degree)


def _solve_exact(M: list[list[Fraction]], b: list[Fraction]) -> list[Fraction]:
    """Gauss-Jordan elimination over the rationals."""
    n = len(M)
    A = [row[:] + [bi] for row, bi in zip(M, b)]
    for col in range(n):
        piv = next((r for r in range(col, n) if A[r][col] != 0), None)
        if piv is None:
            raise SingularSystem(f"singular column {col}")
        A[col], A[piv] = A[piv], A[col]
        pv = A[col][col]
        A[col] = [a / pv for a in A[col]]
        for r in range(n):
            if r != col and A[r][col] != 0:
                fac = A[r][col]
                A[r] = [a - fac * c for a, c in zip(A[r], A[col])]
    return [A[r][n] for r in range(n)]


@lru_cache(maxsize=None)
def _delta_matrix(dim: int, index: int, m: int) -> tuple[tuple[Fraction, ...], ...]:
    basis = monomials(dim, m)
    nu = Axis(index)
    cols = [delta_map(nu, HomoPoly(dim, m, {e: 1})).to_vector() for e in basis]
    return tuple(tuple(cols[j][i] for j in range(len(basis))) for i in range(len(basis)))


def delta_inverse(nu: Axis, r: HomoPoly) -> HomoPoly:
    """Unique q of degree m with delta_m(q) = r."""
    if r.is_zero():
        return HomoPoly.zero(r.dim, r.degree)
    M = [list(row) for row in _delta_matrix(r.dim, nu.index, r.degree)]
    q = HomoPoly.from_vector(r.dim, r.degree, _solve_exact(M, r.to_vector()))
    if delta_map(nu, q) != r:
        raise SingularSystem("round trip failed")
    return q


# --------------------------------------------------------------- validation


def is_harmonic(p: HomoPoly) -> bool:
    return laplacian(p).is_zero()


def validate(inp: AnsatzInput) -> None:
    """Raise :class:`InvalidInput` unless the tuple is admissible."""
    n, k = inp.dim, inp.order
    if n < 2:
        raise InvalidInput("dimension must be at least 2")
    if k < 2:
        raise InvalidInput("order must be at least 2")
    if inp.nu.index >= n:
        raise InvalidInput(f"axis {inp.nu.index} out of range for dim {n}")
    if len(inp.p_list) != k - 2:
        raise InvalidInput(f"expected {k - 2} polynomials p_3..p_k, got {len(inp.p_list)}")
    for j, p in enumerate(inp.p_list, start=3):
        if p.dim != n:
            raise InvalidInput(f"p_{j} has dim {p.dim}, expected {n}")
        if p.degree != j:
            raise InvalidInput(f"p_{j} has degree {p.degree}")
        if not is_harmonic(p):
            raise InvalidInput(f"p_{j} is not harmonic")
        try:
            divide_by_linear(p, inp.nu.vector(n))
        except NotDivisible as exc:
            raise InvalidInput(f"p_{j} does not vanish on the hyperplane") from exc
    rhs = inp.rhs
    if isinstance(rhs, TaylorData):
        if rhs.F.dim != n:
            raise InvalidInput("Taylor data dimension mismatch")
        if rhs.F.degree > k - 1:
            raise InvalidInput(f"Taylor polynomial must have degree <= {k - 1}")
    elif not isinstance(rhs, UnitRhs):
        raise InvalidInput("rhs must be UnitRhs or TaylorData")


# -------------------------------------------------------------------- build


def _target(inp: AnsatzInput) -> Poly:
    if isinstance(inp.rhs, TaylorData):
        return project(inp.rhs.F, inp.order - 1, "upto")
    return Poly.const(inp.dim, 1)


def build(inp: AnsatzInput) -> AnsatzFamily:
    validate(inp)
    n, k, nu = inp.dim, inp.order, inp.nu
    f0 = inp.rhs.f0 if isinstance(inp.rhs, TaylorData) else Fraction(1)
    half_f0 = f0 / 2
    target = _target(inp)
    x = nu.linear(n)
    A = x + Poly(n, [divide_by_linear(p, nu.vector(n)) for p in inp.p_list])
    R_list: list[HomoPoly] = []
    for m in range(1, k):
        lap = laplacian((A * A).scale(half_f0))
        residual = lap.part(m) - target.part(m)
        R = delta_inverse(nu, residual.scale(Fraction(-1) / (2 * f0))) if residual else HomoPoly.zero(n, m)
        R_list.append(R)
        A = A + x * R
    halfA2 = (A * A).scale(half_f0)
    P = project(halfA2, k + 1, "upto")
    fam = AnsatzFamily(inp, tuple(R_list), A, halfA2, P)
    _check_family(fam, target)
    return fam


def _check_family(fam: AnsatzFamily, target: Poly) -> None:
    k = fam.order
    lhs = project(laplacian(fam.halfA2), k - 1, "upto")
    if lhs != target:
        raise AnsatzError("internal: Laplacian identity failed")
    rest = fam.P - fam.halfA2
    if not rest.is_zero() and rest.min_degree < k + 2:
        raise AnsatzError("internal: P and A^2/2 differ below degree k+2")


def exactness_defect(fam: AnsatzFamily) -> Poly:
    """pi_{<=k-1} Lap(halfA2) minus the target; zero for a valid family."""
    return project(laplacian(fam.halfA2), fam.order - 1, "upto") - _target(fam.input)


def sign_flip_check(inp: AnsatzInput) -> bool:
    """Rebuild with -nu; A must negate and halfA2 must agree."""
    a = build(inp)
    b = build(AnsatzInput(inp.dim, inp.order, inp.nu.flipped(), inp.p_list, inp.rhs))
    return b.A == -a.A and b.halfA2 == a.halfA2


def increment_consistency(inp_k: AnsatzInput, inp_km1: AnsatzInput) -> Poly:
    """P_k - P_{k-1} - p_k, whose parts of degree <= k must vanish."""
    k = inp_k.order
    if inp_km1.order != k - 1 or inp_k.dim != inp_km1.dim or inp_k.nu != inp_km1.nu:
        raise InvalidInput("inputs must be consecutive orders with the same axis")
    if tuple(inp_k.p_list[: k - 3]) != tuple(inp_km1.p_list):
        raise InvalidInput("inputs must share p_2..p_{k-1}")
    if inp_k.rhs != inp_km1.rhs:
        raise InvalidInput("inputs must share the right-hand side")
    disc = build(inp_k).P - build(inp_km1).P - inp_k.p(k)
    if not project(disc, k, "upto").is_zero():
        raise AnsatzError("increment discrepancy has low-degree parts")
    return disc


# --------------------------------------------------------- harmonic bases


def harmonic_completion_odd(q0: HomoPoly, index: int) -> Poly:
    """Odd-in-x_index harmonic polynomial h with h = x_index q0 + O(x_index^3).

    Closed form: sum_j (-1)^j x^(2j+1)/(2j+1)! Lap'^j q0 where Lap' is the
    Laplacian in the remaining variables.  ``q0`` must not depend on x_index.
    """
    n = q0.dim
    if any(e[index] for e, _ in q0.items()):
        raise InvalidInput("q0 must not depend on the normal variable")
    xn = Poly.var(n, index)
    out = Poly.zero(n)
    term = as_poly(q0)
    j = 0
    fact = 1
    while not term.is_zero():
        out = out + (xn ** (2 * j + 1) * term).scale(Fraction((-1) ** j, fact))
        term = laplacian(term)
        j += 1
        fact *= (2 * j) * (2 * j + 1)
    return out


def tangential_monomials(dim: int, index: int, degree: int) -> list[HomoPoly]:
    return [HomoPoly(dim, degree, {e: 1}) for e in monomials(dim, degree) if e[index] == 0]


def odd_harmonic_basis(dim: int, nu: Axis, degree: int) -> list[HomoPoly]:
    """Basis of ``degree``-homogeneous harmonics vanishing on {nu.x = 0}."""
    if degree < 1:
        return []
    out = []
    for m in tangential_monomials(dim, nu.index, degree - 1):
        h = harmonic_completion_odd(m, nu.index).part(degree)
        out.append(h.scale(nu.sign))
    return out


def random_admissible(dim: int, order: int, nu: Axis, rng, bound: int = 10) -> AnsatzInput:
    """Random tuple p_3..p_k with small rational coefficients."""
    ps = []
    for j in range(3, order + 1):
        basis = odd_harmonic_basis(dim, nu, j)
        p = HomoPoly.zero(dim, j)
        for b in basis:
            num = int(rng.integers(-bound, bound + 1))
            den = int(rng.integers(1, bound + 1))
            if num:
                p = p + b.scale(Fraction(num, den))
        ps.append(p)
    return AnsatzInput(dim, order, nu, tuple(ps))


# ------------------------------------------------------------ serialization


def family_to_json_obj(fam: AnsatzFamily) -> dict:
    inp = fam.input
    rhs: dict
    if isinstance(inp.rhs, TaylorData):
        rhs = {
            "kind": "taylor",
            "center": [str(Fraction(c)) if isinstance(c, (int, Fraction)) else c for c in inp.rhs.center],
            "F": to_json_obj(inp.rhs.F),
            "f0": str(inp.rhs.f0),
        }
    else:
        rhs = {"kind": "unit"}
    return {
        "dim": inp.dim,
        "order": inp.order,
        "nu": {"index": inp.nu.index, "sign": inp.nu.sign},
        "p_list": [to_json_obj(p) for p in inp.p_list],
        "rhs": rhs,
        "R_list": [to_json_obj(r) for r in fam.R_list],
        "A": to_json_obj(fam.A),
        "halfA2": to_json_obj(fam.halfA2),
        "P": to_json_obj(fam.P),
    }


def input_from_json_obj(obj: dict) -> AnsatzInput:
    n = int(obj["dim"])
    k = int(obj["order"])
    nu = Axis(int(obj["nu"]["index"]), int(obj["nu"].get("sign", 1)))
    ps = []
    for j, pj in enumerate(obj.get("p_list", []), start=3):
        poly = from_json_obj(pj)
        ps.append(poly.part(j) if not poly.is_zero() else HomoPoly.zero(n, j))
    rhs_obj = obj.get("rhs", {"kind": "unit"})
    if rhs_obj.get("kind") == "taylor":
        rhs: Rhs = TaylorData(tuple(rhs_obj.get("center", [0] * n)), from_json_obj(rhs_obj["F"]), Fraction(rhs_obj["f0"]))
    else:
        rhs = UnitRhs()
    return AnsatzInput(n, k, nu, tuple(ps), rhs)


def family_from_json_obj(obj: dict) -> AnsatzFamily:
    """Rebuild from stored input and check the stored polynomials agree."""
    fam = build(input_from_json_obj(obj))
    if "P" in obj and from_json_obj(obj["P"]) != fam.P:
        raise AnsatzError("stored P does not match the rebuilt family")
    return fam


def save_family(fam: AnsatzFamily, path) -> None:
    with open(path, "w") as fh:
        json.dump(family_to_json_obj(fam), fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_family(path) -> AnsatzFamily:
    with open(path) as fh:
        return family_from_json_obj(json.load(fh))


__all__ = [
    "AnsatzError",
    "AnsatzFamily",
    "AnsatzInput",
    "Axis",
    "InvalidInput",
    "PolyError",
    "SingularSystem",
    "TaylorData",
    "UnitRhs",
    "build",
    "delta_inverse",
    "delta_map",
    "exactness_defect",
    "harmonic_completion_odd",
    "increment_consistency",
    "odd_harmonic_basis",
    "random_admissible",
    "sign_flip_check",
]
