from fractions import Fraction

import numpy as np
import pytest

from obstaclelab.ansatz import AnsatzInput, Axis, TaylorData, build
from obstaclelab.obstacle import (
    BoxTooLarge,
    GridField,
    MonotonicityViolation,
    MonotoneFamily,
    NonConvergence,
    ObstacleProblem,
    SolverParams,
    check_monotone,
    complementarity_residual,
    constant_data_problem,
    contact_set,
    detect_singular,
    discrete_laplacian,
    export_contact_csv,
    manufacture_from_ansatz,
    manufacture_graph_perturbation,
    manufacture_quadratic,
    solve,
    solve_family,
)
from obstaclelab.polycore import evaluate_array, laplacian, parse_poly


def test_grid_round_trip(tmp_path):
    g = GridField.on_box([-1, -1], [1, 1], 8).sample(lambda x: x[..., 0] * x[..., 1])
    g.save(tmp_path / "a.grid")
    back = GridField.load(tmp_path / "a.grid")
    assert back.h == g.h and back.origin == g.origin
    assert np.array_equal(back.values, g.values)


def test_discrete_laplacian_exact_on_quadratics():
    g = GridField.on_box([-1, -1], [1, 1], 16).sample(lambda x: 3 * x[..., 0] ** 2 - x[..., 0] * x[..., 1] + 0.5 * x[..., 1] ** 2)
    assert np.allclose(discrete_laplacian(g.values, g.h), 7.0, atol=1e-10)


def test_zero_data_gives_zero():
    grid = GridField.on_box([-1, -1], [1, 1], 32)
    u = solve(ObstacleProblem(grid.like(1.0), grid.like(0.0), SolverParams()))
    assert np.all(u.values == 0)


def test_quadratic_recovered():
    mp = manufacture_quadratic(1.0, 64, SolverParams(omega="auto"))
    info = {}
    u = solve(mp.problem, info=info)
    assert np.max(np.abs(u.values - mp.exact.values)) < 1e-9
    assert info["residual"] <= 1e-10
    assert np.all(u.values >= 0)


def test_nested_matches_plain():
    mp = manufacture_quadratic(1.0, 64, SolverParams(omega="auto", nested=True))
    u = solve(mp.problem)
    assert np.max(np.abs(u.values - mp.exact.values)) < 1e-9


def test_graph_perturbation_converges_at_second_order():
    errs = []
    for n in (32, 64):
        mp = manufacture_graph_perturbation(0.1, 1.0, n, SolverParams(omega="auto"))
        errs.append(np.max(np.abs(solve(mp.problem).values - mp.exact.values)))
    assert errs[1] < errs[0] / 2.5


def test_nonconvergence_carries_last_iterate():
    mp = manufacture_quadratic(1.0, 32, SolverParams(max_iter=10, check_every=5))
    with pytest.raises(NonConvergence) as exc:
        solve(mp.problem)
    assert exc.value.last is not None and exc.value.residual > 0


def test_manufacture_from_ansatz():
    fam2 = build(AnsatzInput(2, 2, Axis(1), ()))
    mp = manufacture_from_ansatz(fam2, 0.5, 16)
    assert np.allclose(mp.problem.f.values, 1.0)
    assert np.allclose(mp.exact.values, 0.5 * mp.exact.points()[..., 1] ** 2)
    p3 = parse_poly("x2^3 - 3*x1^2*x2", 2).part(3)
    fam3 = build(AnsatzInput(2, 3, Axis(1), (p3,)))
    mp = manufacture_from_ansatz(fam3, 0.05, 16)
    f = laplacian(fam3.halfA2)
    assert f.part(0).to_poly() == parse_poly("1", 2) and f.part(1).is_zero()
    assert mp.problem.f.values.min() > 0
    tilted = build(AnsatzInput(2, 2, Axis(1), (), TaylorData((0, 0), parse_poly("1 - 4*x1", 2), Fraction(1))))
    manufacture_from_ansatz(tilted, 0.1, 16)
    with pytest.raises(BoxTooLarge):
        manufacture_from_ansatz(tilted, 0.5, 16)
    zero = build(AnsatzInput(2, 3, Axis(1), (parse_poly("0", 2).part(3),)))
    assert zero.P == fam2.P


def test_discrete_rhs_is_consistent():
    p3 = parse_poly("1/4*(x2^3 - 3*x1^2*x2)", 2).part(3)
    fam = build(AnsatzInput(2, 3, Axis(1), (p3,)))
    mp = manufacture_from_ansatz(fam, 0.5, 64, rhs="discrete", params=SolverParams(omega="auto"))
    u = solve(mp.problem)
    assert np.max(np.abs(u.values - mp.exact.values)) < 1e-11


def test_monotone_family_constant_data():
    fam = solve_family([0.0, 0.05, 0.1, 0.1], lambda t: constant_data_problem(t, 32))
    assert np.array_equal(fam.fields[2].values, fam.fields[3].values)
    assert np.all(fam.fields[0].values == 0)
    for a, b in zip(fam.fields, fam.fields[1:]):
        assert np.all(b.values >= a.values - 1e-12)


def test_monotone_check_flags_decrease():
    g = GridField.on_box([0, 0], [1, 1], 4)
    fam = MonotoneFamily([0.0, 1.0], [g.like(1.0), g.like(0.5)])
    with pytest.raises(MonotonicityViolation):
        check_monotone(fam)


def test_contact_csv_and_residual(tmp_path):
    mp = manufacture_quadratic(1.0, 16, SolverParams(omega="auto"))
    u = solve(mp.problem)
    export_contact_csv(u, tmp_path / "c.csv", kappa=0.0)
    rows = (tmp_path / "c.csv").read_text().strip().splitlines()
    assert rows[0] == "i1,i2,x1,x2,u"
    assert len(rows) - 1 == int(np.count_nonzero(contact_set(u, 0.0)))
    free = np.zeros(u.shape, bool)
    free[1:-1, 1:-1] = True
    assert complementarity_residual(u.values, mp.problem.f.values, u.h, free) <= 1e-10


def test_detect_singular_on_a_line():
    # the kappa h^2 strip is about nine cells thick, so the radii must be wider
    u = GridField.on_box([-1, -1], [1, 1], 256).sample(lambda x: 0.5 * x[..., 1] ** 2)
    det = detect_singular(u, kappa=10.0, radii_cells=(32, 64))
    assert len(det.points) > 0
    assert np.allclose(det.points[:, 1], 0.0)
    full = GridField.on_box([-1, -1], [1, 1], 64).sample(lambda x: np.maximum(x[..., 1], 0) ** 2)
    assert len(detect_singular(full, radii_cells=(8, 16)).points) == 0
