import math
from fractions import Fraction

import numpy as np
import pytest

from obstaclelab.polycore import (
    NotDivisible,
    Poly,
    divide_by_linear,
    evaluate,
    evaluate_array,
    from_json,
    gradient,
    laplacian,
    parse_poly,
    project,
    sphere_inner,
    to_json,
)


def P(s, n=2):
    return parse_poly(s, n)


def test_laplacian_examples():
    assert laplacian(P("x2^2/2")) == Poly.const(2, 1)
    assert laplacian(P("x2^3 - 3*x1^2*x2")).is_zero()
    assert laplacian(P("x1^4 - 6*x1^2*x2^2 + x2^4")).is_zero()
    assert laplacian(P("x1^2*x2^2")) == P("2*x1^2 + 2*x2^2")


def test_project_modes():
    p = P("1 + x2^2 + x1^3")
    assert project(p, 2, "exact") == P("x2^2")
    assert project(p, 2, "upto") == P("1 + x2^2")
    assert project(P("x2^2"), 5, "exact").is_zero()


def test_divide_by_linear():
    e2 = [0, 1]
    assert divide_by_linear(P("x2^3 - 3*x1^2*x2").part(3), e2).to_poly() == P("x2^2 - 3*x1^2")
    assert divide_by_linear(P("x2^2").part(2), e2).to_poly() == P("x2")
    with pytest.raises(NotDivisible):
        divide_by_linear(P("x1^2").part(2), e2)


def test_sphere_inner_examples():
    assert sphere_inner(P("x1"), P("x2")).ratio == 0
    assert math.isclose(sphere_inner(P("x2"), P("x2")).value, math.pi, rel_tol=1e-14)
    assert math.isclose(sphere_inner(P("x2^2/2"), P("x2^2/2")).value, 3 * math.pi / 16, rel_tol=1e-14)


def test_sphere_inner_against_quadrature():
    th = 2 * math.pi * np.arange(4096) / 4096
    pts = np.stack([np.cos(th), np.sin(th)], axis=-1)
    p, q = P("x1^3*x2 + 2*x2^2"), P("x1^2 - 1/3*x2^4")
    quad = float(np.sum(evaluate_array(p, pts) * evaluate_array(q, pts))) * 2 * math.pi / 4096
    assert math.isclose(sphere_inner(p, q).value, quad, rel_tol=1e-12)


def test_parity_orthogonality():
    # an odd and an even homogeneous polynomial are orthogonal on the sphere
    assert sphere_inner(P("x1^3 - x1*x2^2", 2), P("x1^2*x2^2 + x2^4", 2)).ratio == 0
    assert sphere_inner(P("x1*x2*x3", 3), P("x3^2", 3)).ratio == 0


def test_evaluate_and_gradient():
    assert evaluate(P("x2^2/2"), [0, 2]) == 2
    assert gradient(P("x2^2/2"), [1, 3]) == [0, 3]
    assert evaluate(P("x2^3 - 3*x1^2*x2"), [1, 1]) == -2


def test_exact_arithmetic_and_json_round_trip():
    p = P("1/3*x1^2*x2 - 7/5*x2^3 + 2")
    assert isinstance(evaluate(p, [Fraction(1, 2), 1]), Fraction)
    assert from_json(to_json(p)) == p
