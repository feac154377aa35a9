import math

import numpy as np
import pytest

from obstaclelab.ansatz import AnsatzInput, Axis, build
from obstaclelab.diagnostics import (
    FunctionSampler,
    PolySampler,
    RadiusOutOfRange,
    audit_monotonicity,
    compute_D,
    compute_H,
    frequency_profile,
    lipschitz_audit,
    monneau,
    phi_gamma,
    weiss,
)
from obstaclelab.obstacle import GridField
from obstaclelab.polycore import Poly, parse_poly

X0 = (0.0, 0.0)


def P(s, n=2):
    return parse_poly(s, n)


def test_zero_field_gives_gamma_exactly():
    zero = PolySampler(Poly.zero(2))
    for r in (0.01, 0.1, 0.5):
        for g in (1.5, 3.5, 4.5):
            assert phi_gamma(zero, X0, r, g) == g


def test_homogeneous_frequency_polynomial():
    for s, lam in (("x1*x2", 2), ("x1^5 - 10*x1^3*x2^2 + 5*x1*x2^4", 5)):
        v = PolySampler(P(s))
        for r in (0.1, 0.3, 1.0):
            assert math.isclose(compute_D(v, X0, r) / compute_H(v, X0, r), lam, rel_tol=1e-10)
            assert abs(weiss(v, X0, r, lam)) < 1e-8 * compute_H(v, X0, r) * r ** (-2 * lam)


def test_homogeneous_frequency_on_grid():
    g = GridField.on_box([-1, -1], [1, 1], 256).sample(lambda x: x[..., 0] * x[..., 1])
    for r in (0.1, 0.2, 0.3):
        assert abs(compute_D(g, X0, r) / compute_H(g, X0, r) - 2) < 1e-6


def test_truncation_limits():
    # lambda < gamma: phi -> lambda; lambda > gamma: phi -> gamma
    v2 = PolySampler(P("x1*x2"))
    assert abs(phi_gamma(v2, X0, 1e-3, 3.5) - 2) < 1e-6
    v5 = PolySampler(P("x1^5 - 10*x1^3*x2^2 + 5*x1*x2^4"))
    assert abs(phi_gamma(v5, X0, 1e-3, 3.5) - 3.5) < 1e-6


def test_weiss_linear_closed_form():
    v = PolySampler(P("x2"))
    for r in (0.2, 0.5):
        assert math.isclose(weiss(v, X0, r, 2), -math.pi / r**2, rel_tol=1e-10)


def test_drift_fit_cases():
    radii = np.geomspace(0.01, 1, 10)
    fit = audit_monotonicity(radii, radii**2)
    assert fit.C == 0 and not fit.violations
    # a decreasing two-point pair: a(0.5) = 1, a(1) = 0.5
    eps = 0.5
    fit = audit_monotonicity([1.0, 0.5], [0.5, 1.0], "monneau", eps, min_radii=2)
    assert math.isclose(fit.C, 0.5 / (1 - 0.5**eps), rel_tol=1e-12)
    assert fit.residual <= 1e-12
    # the pair given as (1, 0.5) at radii (1, 0.5) is already nondecreasing in r
    assert audit_monotonicity([1.0, 0.5], [1.0, 0.5], "monneau", eps, min_radii=2).C == 0
    with pytest.raises(ValueError):
        audit_monotonicity([1.0, 0.5], [1.0, 0.5])


def test_drift_fit_recovers_planted_constant():
    r = np.geomspace(0.01, 0.5, 20)
    eps = 0.5
    vals = 2.0 - 0.7 * r**eps / eps
    fit = audit_monotonicity(r, vals, "phi", eps)
    assert math.isclose(fit.C, 0.7, rel_tol=1e-9)
    assert fit.residual <= 1e-12


def _k3_field(n=128, box=0.5):
    p3 = P("1/4*(x2^3 - 3*x1^2*x2)").part(3)
    fam = build(AnsatzInput(2, 3, Axis(1), (p3,)))
    u = GridField.on_box([-box, -box], [box, box], n).sample_poly(fam.halfA2)
    return fam, u


def test_monneau_exact_family_is_small():
    fam, u = _k3_field()
    radii = np.geomspace(8 * u.h, 0.1, 8)
    m = monneau(u, fam, X0, radii)
    assert max(m.values) < 1e-4
    w0 = monneau(PolySampler(fam.P), fam, X0, radii)
    assert max(w0.values) == 0


def test_frequency_profile_csv(tmp_path):
    fam, u = _k3_field()
    prof = frequency_profile(u, X0, fam, gamma=4.5)
    prof.to_csv(tmp_path / "p.csv")
    head = (tmp_path / "p.csv").read_text().splitlines()[0]
    assert head == "r,H,D,phi_gamma,W_lambda,M_k"
    assert prof.drift is not None and math.isfinite(prof.drift.C)
    prof.to_svg(tmp_path / "p.svg")
    assert (tmp_path / "p.svg").read_text().startswith("<svg")


def test_radius_guard():
    g = GridField.on_box([-1, -1], [1, 1], 32).like(0.0)
    with pytest.raises(RadiusOutOfRange):
        compute_H(g, X0, 0.99)


def test_lipschitz_audit_exact_family():
    fam, u = _k3_field()
    radii = [0.2, 0.1, 0.05]
    la = lipschitz_audit(u, fam, X0, radii, beta=0.05)
    assert la.passed and math.isfinite(la.C_tangential) and math.isfinite(la.C_normal)
    # u = p2 alone: v is a fixed polynomial, constants stay finite
    p2 = u.sample_poly(P("x2^2/2"))
    assert lipschitz_audit(p2, fam, X0, radii).passed


def test_function_sampler_matches_poly():
    p = P("x1^2*x2 - x2^3/3")
    f = FunctionSampler(2, lambda x: x[..., 0] ** 2 * x[..., 1] - x[..., 1] ** 3 / 3,
                        lambda x: np.stack([2 * x[..., 0] * x[..., 1], x[..., 0] ** 2 - x[..., 1] ** 2], -1))
    assert math.isclose(compute_D(f, X0, 0.4), compute_D(PolySampler(p), X0, 0.4), rel_tol=1e-12)
