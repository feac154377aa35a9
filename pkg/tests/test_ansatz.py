from fractions import Fraction

import numpy as np
import pytest

from obstaclelab.ansatz import (
    AnsatzInput,
    Axis,
    InvalidInput,
    TaylorData,
    build,
    delta_inverse,
    delta_map,
    exactness_defect,
    family_from_json_obj,
    family_to_json_obj,
    increment_consistency,
    random_admissible,
    sign_flip_check,
)
from obstaclelab.polycore import Poly, laplacian, parse_poly, project

E2 = Axis(1)


def H(s, deg, n=2):
    return parse_poly(s, n).part(deg)


def test_delta_map_examples():
    assert delta_map(E2, H("x1", 1)).to_poly() == parse_poly("x1", 2)
    assert delta_map(E2, H("x2", 1)).to_poly() == parse_poly("3*x2", 2)
    assert delta_map(E2, H("x1*x2", 2)).to_poly() == parse_poly("3*x1*x2", 2)


def test_delta_inverse_examples():
    q = delta_inverse(E2, H("x1^2", 2))
    assert q.to_poly() == parse_poly("x1^2 - x2^2/6", 2)
    assert delta_map(E2, q) == H("x1^2", 2)
    assert delta_inverse(E2, H("0", 2)).is_zero()
    assert delta_inverse(E2, H("x1", 1)).to_poly() == parse_poly("x1", 2)


def test_base_case():
    fam = build(AnsatzInput(2, 2, E2, ()))
    assert fam.R_list == [] or all(r.is_zero() for r in fam.R_list)
    assert fam.A == parse_poly("x2", 2)
    assert fam.P == parse_poly("x2^2/2", 2)


def test_zero_perturbation_reproduces_base():
    fam = build(AnsatzInput(2, 3, E2, (H("0", 3),)))
    assert fam.R_list[-1].is_zero()
    assert fam.A == parse_poly("x2", 2)
    assert fam.P == parse_poly("x2^2/2", 2)


def test_worked_k3_family_is_exact():
    fam = build(AnsatzInput(2, 3, E2, (H("x2^3 - 3*x1^2*x2", 3),)))
    # the value forced by the exactness identity
    assert fam.R_list[1] == parse_poly("-24*x1^2 + 4*x2^2", 2)
    assert project(laplacian(fam.halfA2), 2, "upto") == Poly.const(2, 1)
    assert exactness_defect(fam).is_zero()


def test_non_harmonic_input_rejected():
    with pytest.raises(InvalidInput):
        build(AnsatzInput(2, 3, E2, (H("x1^2*x2", 3),)))


def test_sign_flip_and_increments():
    inp3 = AnsatzInput(2, 3, E2, (H("x2^3 - 3*x1^2*x2", 3),))
    assert sign_flip_check(AnsatzInput(2, 2, E2, ()))
    assert sign_flip_check(inp3)
    rng = np.random.default_rng(5)
    assert sign_flip_check(random_admissible(2, 5, E2, rng))
    d = increment_consistency(inp3, AnsatzInput(2, 2, E2, ()))
    assert project(d, 3, "upto").is_zero()
    zero3 = AnsatzInput(2, 3, E2, (H("0", 3),))
    assert project(increment_consistency(zero3, AnsatzInput(2, 2, E2, ())), 3, "upto").is_zero()
    inp4 = random_admissible(2, 4, E2, rng)
    inp3r = AnsatzInput(2, 3, E2, inp4.p_list[:1])
    assert project(increment_consistency(inp4, inp3r), 4, "upto").is_zero()


@pytest.mark.parametrize("dim", [2, 3])
def test_random_tuples_exact(dim):
    rng = np.random.default_rng(dim)
    for k in range(2, 6):
        inp = random_admissible(dim, k, Axis(dim - 1), rng)
        assert exactness_defect(build(inp)).is_zero()


def test_general_rhs():
    F = parse_poly("1 + x1", 2)
    fam = build(AnsatzInput(2, 2, E2, (), TaylorData((0, 0), F, Fraction(1))))
    assert fam.R_list[0] == parse_poly("x1/2", 2)


def test_json_round_trip():
    fam = build(AnsatzInput(2, 3, E2, (H("x2^3 - 3*x1^2*x2", 3),)))
    back = family_from_json_obj(family_to_json_obj(fam))
    assert back.P == fam.P and back.R_list == fam.R_list and back.A == fam.A
