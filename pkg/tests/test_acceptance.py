"""Acceptance suite: one PASS/FAIL line per criterion at the stated tolerances."""

import math
import time
from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest

from obstaclelab.ansatz import AnsatzInput, Axis, TaylorData, build, exactness_defect, random_admissible
from obstaclelab.blowup import recover_next, whitney_check, whitney_fields
from obstaclelab.cli import run, run_family
from obstaclelab.config import load_config
from obstaclelab.diagnostics import (
    PolySampler,
    audit_monotonicity,
    compute_D,
    compute_H,
    default_radii,
    monneau,
    phi_gamma,
    residual_sampler,
)
from obstaclelab.heleshaw import cleaning_audit
from obstaclelab.obstacle import GridField, SolverParams, detect_singular, manufacture, manufacture_from_ansatz, solve
from obstaclelab.polycore import Poly, format_poly, evaluate_array, laplacian, parse_poly, sphere_inner
from obstaclelab.signorini import catalog_2d, verify_signorini

CONFIGS = Path(__file__).resolve().parents[1] / "configs"
X0 = (0.0, 0.0)
E2 = Axis(1)
P3 = "1/4*(x2^3 - 3*x1^2*x2)"


def P(s, n=2):
    return parse_poly(s, n)


@pytest.fixture(scope="module")
def k3():
    """Manufactured k = 3 problem at 512^2 with a discretely consistent rhs."""
    fam = build(AnsatzInput(2, 3, E2, (P(P3).part(3),)))
    mp = manufacture_from_ansatz(fam, 0.5, 512, rhs="discrete", params=SolverParams(omega="auto", nested=True))
    info = {}
    u = solve(mp.problem, info=info)
    return fam, u, info


# ------------------------------------------------------------------ 1


def test_c01_ansatz_exactness(record):
    rng = np.random.default_rng(2024)
    t = time.perf_counter()
    bad = 0
    for n in (2, 3):
        for k in range(2, 7):
            for _ in range(25):
                bad += not exactness_defect(build(random_admissible(n, k, Axis(n - 1), rng))).is_zero()
    dt = time.perf_counter() - t
    ok = bad == 0 and dt < 60
    assert record(1, ok, f"{10 * 25 - bad}/250 exact identities, {dt:.1f} s")


# ------------------------------------------------------------------ 2


def _lap(terms: dict) -> dict:
    """Term-by-term Laplacian on {exponent: Fraction} (independent oracle)."""
    out: dict = {}
    for e, c in terms.items():
        for d in range(len(e)):
            if e[d] >= 2:
                f = list(e)
                f[d] -= 2
                out[tuple(f)] = out.get(tuple(f), 0) + c * e[d] * (e[d] - 1)
    return {e: c for e, c in out.items() if c}


def _eliminate(M, b):
    n = len(b)
    A = [list(map(Fraction, row)) + [Fraction(v)] for row, v in zip(M, b)]
    for i in range(n):
        piv = next(r for r in range(i, n) if A[r][i] != 0)
        A[i], A[piv] = A[piv], A[i]
        for r in range(n):
            if r != i and A[r][i]:
                m = A[r][i] / A[i][i]
                A[r] = [x - m * y for x, y in zip(A[r], A[i])]
    return [A[i][n] / A[i][i] for i in range(n)]


def test_c02_worked_R2(record):
    # oracle: q = a x1^2 + b x1 x2 + c x2^2 with delta_2(q) = Lap(x2^2 q / 2) = 96 x1^2
    monos = [(2, 0), (1, 1), (0, 2)]
    cols = []
    for m in monos:
        img = _lap({(m[0], m[1] + 2): Fraction(1, 2)})
        cols.append([img.get(e, 0) for e in monos])
    M = [[cols[j][i] for j in range(3)] for i in range(3)]
    q = _eliminate(M, [96, 0, 0])
    oracle = {e: -c / 2 for e, c in zip(monos, q) if c}
    assert oracle == {(2, 0): -48, (0, 2): 8}
    fam = build(AnsatzInput(2, 3, E2, (P("x2^3 - 3*x1^2*x2").part(3),)))
    got = fam.R_list[1].coeffs
    ok = got == oracle
    assert record(2, ok, f"expected R2 = -48 x1^2 + 8 x2^2, built {format_poly(fam.R_list[1])}")


# ------------------------------------------------------------------ 3


def test_c03_general_rhs(record):
    fam = build(AnsatzInput(2, 2, E2, (), TaylorData((0, 0), P("1 + x1"), Fraction(1))))
    ok = fam.R_list[0] == P("x1/2")
    assert record(3, ok, f"R1 = {format_poly(fam.R_list[0])}")


# ------------------------------------------------------------------ 4


def test_c04_solver_order(record):
    t = time.perf_counter()
    errs, res = [], []
    for n in (64, 128, 256):
        mp = manufacture(
            lambda x: 0.5 * x[..., 1] ** 2, lambda x: np.ones(x.shape[:-1]), 1.0, n, 2, "analytic", SolverParams(omega="auto")
        )
        info = {}
        u = solve(mp.problem, info=info)
        errs.append(float(np.max(np.abs(u.values - mp.exact.values))))
        res.append(info["residual"])
    dt = time.perf_counter() - t
    ratios = [a / b if b > 0 else math.inf for a, b in zip(errs, errs[1:])]
    ok = all(3.5 <= q <= 4.5 for q in ratios) and max(res) <= 1e-10 and dt < 120
    detail = f"errors {', '.join(f'{e:.2e}' for e in errs)}, ratios {', '.join(f'{q:.3g}' for q in ratios)}, residual {max(res):.1e}, {dt:.1f} s"
    assert record(4, ok, detail)


# ------------------------------------------------------------------ 5


def test_c05_frequency_characterization(record):
    grid = GridField.on_box([-1, -1], [1, 1], 512)
    worst = 0.0
    for s, lam in (("x1*x2", 2), ("x1^5 - 10*x1^3*x2^2 + 5*x1*x2^4", 5)):
        v = grid.sample_poly(P(s))
        for r in np.linspace(0.1, 0.3, 9):
            worst = max(worst, abs(compute_D(v, X0, r) / compute_H(v, X0, r) - lam))
    assert record(5, worst <= 1e-2, f"max |D/H - lambda| = {worst:.2e}")


# ------------------------------------------------------------------ 6


def test_c06_truncation(record):
    zero = PolySampler(Poly.zero(2))
    exact_zero = all(phi_gamma(zero, X0, r, g) == g for r in np.geomspace(1e-3, 0.5, 12) for g in (0.5, 1.5, 2.5, 4.5))
    fields = [(Fraction(2), PolySampler(P("x1*x2"))), (Fraction(5), PolySampler(P("x1^5 - 10*x1^3*x2^2 + 5*x1*x2^4")))]
    half = catalog_2d(Fraction(3, 2))[0]

    class Half(PolySampler):
        def __init__(self):
            self.dim, self.h = 2, None

        def values(self, pts):
            return half.evaluate(pts)

        def grad(self, pts):
            return half.gradient(pts)

    fields.append((Fraction(3, 2), Half()))
    worst = 0.0
    for lam, v in fields:
        for g in (float(lam) - 1, float(lam) + 1):
            r = 1e-3
            phi = phi_gamma(v, X0, r, g)
            worst = max(worst, abs(phi - min(float(lam), g)))
    ok = exact_zero and worst <= 0.05
    assert record(6, ok, f"v = 0 exact: {exact_zero}, worst |phi - min(lambda, gamma)| = {worst:.2e}")


# ------------------------------------------------------------------ 7


def test_c07_almost_monotonicity(k3, record):
    fam, u, _ = k3
    radii = default_radii(u, X0, r_min=8 * u.h, r_max=0.2)
    v = residual_sampler(u, fam, X0)
    phis = [phi_gamma(v, X0, r, 4.5) for r in radii]
    fit = audit_monotonicity(radii, phis, "phi", 0.5)
    ok = math.isfinite(fit.C) and fit.residual <= 1e-6
    assert record(7, ok, f"C_fit = {fit.C:.3g}, residual {fit.residual:.1e} over {len(radii)} radii in [8h, 0.2]")


# ------------------------------------------------------------------ 8


def test_c08_monneau_plateau(k3, record):
    fam, u, _ = k3
    radii = default_radii(u, X0, r_min=8 * u.h, r_max=0.2)
    p3 = P(P3)
    lines, ok = [], True
    scales = []
    for c in (Fraction(0), Fraction(1, 2)):
        q = p3.scale(c)
        planted = build(AnsatzInput(2, 3, E2, (q.part(3),)))
        scale = sphere_inner(p3 - q, p3 - q).value
        scales.append(scale)
        low = min(monneau(u, planted, X0, radii).values[-3:])
        ok &= low >= 0.5 * scale
        lines.append(f"q = {c} p3: min M3 {low:.3g} vs {0.5 * scale:.3g}")
    exact = max(monneau(u, fam, X0, radii).values[-3:])
    ok &= exact <= 1e-3 * min(scales)
    lines.append(f"q = p3: max M3 {exact:.2e}")
    assert record(8, ok, "; ".join(lines))


# ------------------------------------------------------------------ 9


def test_c09_recovery(k3, record):
    _, u, _ = k3
    fam2 = build(AnsatzInput(2, 2, E2, ()))
    rec = recover_next(u, fam2, X0)
    want = P(P3).terms()
    got = rec.p_next.to_poly().terms()
    err = max(abs(float(got.get(e, 0)) - float(c)) / abs(float(c)) for e, c in want.items())
    extra = [e for e in got if e not in want and got[e] != 0]
    ok = err <= 0.02 and not extra
    assert record(9, ok, f"relative coefficient error {err:.1e}")


# ------------------------------------------------------------------ 10


def test_c10_signorini_catalog(record):
    count, failed = 0, []
    for lam in (Fraction(1), Fraction(3, 2), Fraction(2), Fraction(3), Fraction(7, 2)):
        for c in catalog_2d(lam):
            count += 1
            if not verify_signorini(c, tol=1e-8).passed:
                failed.append(f"{lam}:{c.label}")
    empty = catalog_2d(Fraction(5, 4)) == []
    ok = count > 0 and not failed and empty
    assert record(10, ok, f"{count - len(failed)}/{count} elements verified, lambda = 5/4 empty: {empty}")


# ------------------------------------------------------------------ 11


def test_c11_whitney(record):
    u_star = P("1/2*x2^2*(1 + x1^4)")
    lap = laplacian(u_star)
    mp = manufacture(
        lambda x: evaluate_array(u_star, x), lambda x: evaluate_array(lap, x), 1.0, 256, 2, "discrete", SolverParams(omega="auto", nested=True)
    )
    u = solve(mp.problem)
    det = detect_singular(u, 10.0, 0.25, (32, 64))
    line = sorted(tuple(float(c) for c in p) for p in det.points if p[0] >= 0.1)
    pts = line[::4][:9]
    fields = whitney_fields(u, pts, lap, 3)
    res = whitney_check(fields, 3)
    finite = all(math.isfinite(c) for c in res.C_fit.values())
    ok = len(pts) == 9 and finite and res.stable
    cs = ", ".join(f"|a|={m}: {c:.3g}" for m, c in sorted(res.C_fit.items()))
    assert record(11, ok, f"{len(pts)} points, C_fit {cs}, stable under halving: {res.stable}")


# ------------------------------------------------------------------ 12


def test_c12_cleaning_exponent(record):
    cfg = load_config(CONFIGS / "pinch_k2.json")
    t = time.perf_counter()
    fam, t0 = run_family(cfg.family)
    cl = cfg.family["cleaning"]
    audit = cleaning_audit(fam, cl["center"], t0, cl["k"], cl["R"])
    dt = time.perf_counter() - t
    e = audit.exponent
    ok = e is not None and 1.5 <= e <= 2.5 and math.isfinite(audit.C0) and dt < 600
    assert record(12, ok, f"t0 = {t0:.7f}, C0 = {audit.C0:.3g}, exponent {e:.3f}, {len(fam.ts)} samples in {dt:.1f} s")


# ------------------------------------------------------------------ 13


def test_c13_determinism(tmp_path, record):
    configs = sorted(CONFIGS.glob("*.json"))
    same = []
    for path in configs:
        cfg = load_config(path)
        run(cfg, tmp_path / path.stem / "a")
        run(cfg, tmp_path / path.stem / "b")
        a = (tmp_path / path.stem / "a" / "manifest.json").read_bytes()
        b = (tmp_path / path.stem / "b" / "manifest.json").read_bytes()
        same.append(a == b)
    ok = bool(configs) and all(same)
    assert record(13, ok, f"{sum(same)}/{len(configs)} shipped configs give byte-identical manifests")
