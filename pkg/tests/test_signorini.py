from fractions import Fraction

import numpy as np
import pytest

from obstaclelab.ansatz import Axis
from obstaclelab.polycore import Poly, parse_poly
from obstaclelab.signorini import (
    HalfSpaceAnalytic,
    Polynomial,
    SignoriniCandidate,
    StructureMismatch,
    candidate_from_json_obj,
    candidate_to_json_obj,
    catalog,
    catalog_2d,
    even_odd_split,
    odd_structure_check,
    singular_set,
    verify_signorini,
)

E2 = Axis(1)


def P(s, n=2):
    return parse_poly(s, n)


def test_even_odd_split():
    assert even_odd_split(P("x2"), E2) == (Poly.zero(2), P("x2"))
    assert even_odd_split(P("x1^2"), E2) == (P("x1^2"), Poly.zero(2))
    assert even_odd_split(P("x1*x2 + x1^2"), E2) == (P("x1^2"), P("x1*x2"))


def test_verify_examples():
    odd = SignoriniCandidate(2, E2, Fraction(3), Polynomial(P("x2^3 - 3*x1^2*x2")), "odd")
    assert verify_signorini(odd).passed
    half = SignoriniCandidate(2, E2, Fraction(3, 2), HalfSpaceAnalytic(), "even")
    assert verify_signorini(half).passed
    quad = SignoriniCandidate(2, E2, Fraction(2), Polynomial(P("x1^2 - x2^2")), "even")
    assert verify_signorini(quad).passed


def test_verify_rejects_negative_on_L():
    bad = SignoriniCandidate(2, E2, Fraction(2), Polynomial(P("x2^2 - x1^2")), "even")
    assert not verify_signorini(bad).passed


def test_catalog_2d_examples():
    two = [c.rep.poly for c in catalog_2d(2) if isinstance(c.rep, Polynomial)]
    assert P("x1^2 - x2^2") in two
    assert any(p == P("x1*x2") or p == P("x1*x2").scale(Fraction(1, 2)) for p in two)
    assert any(isinstance(c.rep, HalfSpaceAnalytic) for c in catalog_2d(Fraction(3, 2)))
    assert catalog_2d(Fraction(5, 4)) == []


@pytest.mark.parametrize("lam", [1, Fraction(3, 2), 2, 3, Fraction(7, 2)])
def test_catalog_elements_verify(lam):
    cands = catalog_2d(lam)
    assert cands
    for c in cands:
        assert verify_signorini(c, tol=1e-8).passed, c.label


def test_higher_dimension_non_integer_is_unknown():
    res = catalog(Fraction(3, 2), 3)
    assert res.status == "unknown" and res.candidates == []
    res = catalog(2, 3)
    assert res.status == "admissible" and res.semi_decision
    assert all(verify_signorini(c).passed for c in res.candidates)


def test_singular_set_examples():
    r = singular_set(P("x1^2"), 0.01)
    assert np.allclose(r.points[:, 0], 0) and len(r.points) >= 1
    r = singular_set(P("x2^3 - 3*x1^2*x2"), 0.01)
    assert not r.all_of_L
    assert np.max(np.abs(r.points[:, 0])) < 0.2
    assert singular_set(Poly.zero(2), 0.1, nu=E2).all_of_L


def test_odd_structure():
    res = odd_structure_check(P("-x2*x1^2"), E2)
    assert res.q0 == P("x1^2")
    assert res.q1_harmonic == P("1/3")
    assert not res.harmonic  # the bare -|x2| x1^2 needs the x2^3 term
    assert odd_structure_check(P("-x2*x1^2 + 1/3*x2^3"), E2).passed
    assert odd_structure_check(P("-x2^3"), E2).q0_nonneg
    with pytest.raises(StructureMismatch):
        odd_structure_check(P("x2*x1^2"), E2)


def test_candidate_json_round_trip():
    for c in catalog_2d(3) + catalog_2d(Fraction(3, 2)):
        back = candidate_from_json_obj(candidate_to_json_obj(c))
        assert back == c
