import math

import numpy as np
import pytest

from obstaclelab.ansatz import AnsatzInput, Axis, build
from obstaclelab.blowup import (
    Ambiguous,
    Anomalous,
    NoConvergence,
    analyze_point,
    classify,
    estimate_lambda,
    estimate_lambda_k,
    fit_p2,
    harmonic_basis,
    recover_next,
    taylor_shift,
    whitney_check,
)
from obstaclelab.diagnostics import FunctionSampler
from obstaclelab.obstacle import GridField
from obstaclelab.polycore import Poly, parse_poly, sphere_inner

X0 = (0.0, 0.0)
E2 = Axis(1)


def P(s, n=2):
    return parse_poly(s, n)


def grid_of(p, n=256, box=0.5):
    return GridField.on_box([-box, -box], [box, box], n).sample_poly(p)


def k3_family():
    return build(AnsatzInput(2, 3, E2, (P("1/4*(x2^3 - 3*x1^2*x2)").part(3),)))


def test_fit_p2_axis_and_stratum():
    fit = fit_p2(grid_of(P("x2^2/2")), X0, f0=1.0)
    assert fit.stratum_dim == 1 and fit.nu is not None and fit.nu.index == 1
    assert fit.p2_axis.to_poly() == P("x2^2/2")
    radial = fit_p2(grid_of(P("(x1^2 + x2^2)/2")), X0, f0=2.0)
    assert radial.stratum_dim == 0


def test_harmonic_basis_orthogonal():
    b = harmonic_basis(2, E2, 3)
    polys = b.odd + b.even
    for i, p in enumerate(polys):
        for q in polys[i + 1:]:
            assert sphere_inner(p, q).ratio == 0


def test_recover_planted_p3():
    fam3 = k3_family()
    fam2 = build(AnsatzInput(2, 2, E2, ()))
    rec = recover_next(grid_of(fam3.halfA2, 512), fam2, X0)
    got = rec.p_next.to_poly()
    want = P("1/4*(x2^3 - 3*x1^2*x2)")
    for e, c in want.terms().items():
        assert abs(float(got.terms().get(e, 0)) - float(c)) <= 0.01 * abs(float(c))


def test_recover_zero():
    fam2 = build(AnsatzInput(2, 2, E2, ()))
    rec = recover_next(grid_of(P("x2^2/2")), fam2, X0)
    assert max(abs(c) for c in rec.coefficients) < 1e-6


def test_even_plant_does_not_converge():
    fam2 = build(AnsatzInput(2, 2, E2, ()))
    u = grid_of(P("x2^2/2 + 1/100*(x1^3 - 3*x1*x2^2)"))
    with pytest.raises(NoConvergence) as exc:
        recover_next(u, fam2, X0)
    even = exc.value.even_norms
    assert min(even) > 0.5 * max(even)


def test_lambda_estimates():
    fam2 = build(AnsatzInput(2, 2, E2, ()))
    odd = grid_of(P("x2^2/2 + 1/1000*(x2^3 - 3*x1^2*x2)"))
    assert abs(estimate_lambda_k(odd, fam2, X0).value - 3) < 0.1
    exact = estimate_lambda_k(grid_of(k3_family().halfA2, 512), k3_family(), X0)
    assert exact.band[0] >= 4.5 and classify(3, exact.band, False) == "Ascends"


def test_non_integer_synthetic():
    lam = 3.5

    def f(x):
        r = np.hypot(x[..., 0], x[..., 1])
        th = np.arctan2(np.abs(x[..., 1]), x[..., 0])
        return r**lam * np.cos(lam * th)

    def g(x):
        e = 1e-6
        out = []
        for d in range(2):
            dx = np.zeros(2)
            dx[d] = e
            out.append((f(x + dx) - f(x - dx)) / (2 * e))
        return np.stack(out, -1)

    v = FunctionSampler(2, f, g)
    est = estimate_lambda(v, X0, 3, np.geomspace(0.01, 0.2, 10), synthetic=True)
    assert abs(est.value - lam) < 0.05
    assert classify(3, est.band, False) == "NonInteger"


def test_classify_rules():
    assert classify(3, (3.0, 3.05), False) == "FrequencyK"
    assert classify(2, (2.95, 3.02), True) == "KPlusOneEven"
    assert classify(2, (3.9, 4.0), False) == "Ascends"
    with pytest.raises(Anomalous):
        classify(2, (2.0, 2.02), False)
    with pytest.raises(Ambiguous):
        classify(3, (3.05, 3.6), False)


def test_analyze_point_ascends():
    res = analyze_point(grid_of(k3_family().halfA2, 512), X0, None, maxk=3)
    assert res.report.cls == "Ascends"
    assert res.report.stratum_dim == 1
    assert res.report.to_json_obj()["class"] == "Ascends"


def test_whitney_global_polynomial():
    # shifted fields of one global polynomial: P_x(y) = P(x + y)
    Pk = P("x2^2/2 + x1^2*x2 - x2^3/3")
    pts = [((x, 0.0), taylor_shift(Pk, (x, 0.0), 3)) for x in np.linspace(0, 0.4, 5)]
    res = whitney_check(pts, 3)
    assert all(c < 1e-12 for c in res.C_fit.values()) and res.passed


def test_whitney_adversarial():
    Pk = P("x2^2/2")
    xs = [(0.0, 0.0), (0.05, 0.0), (0.1, 0.0), (0.2, 0.0), (0.4, 0.0)]
    pts = [(x, taylor_shift(Pk, x, 3)) for x in xs]
    pts[0] = (xs[0], pts[0][1] + P("x1^3"))
    res = whitney_check(pts, 3)
    # |alpha| = 0 ratios grow like 1/d as the pair distance shrinks
    by = dict(res.by_distance[0])
    assert by[min(by)] > 1.5 * by[max(by)]
    assert not res.passed
