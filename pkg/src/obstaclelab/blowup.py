"""Blow-up analysis at singular points of grid solutions.

Pipeline at a point x0: fit the quadratic blow-up p2, build the order-2
Ansatz, then alternate between estimating the frequency of u - P_k and
recovering the next polynomial p_{k+1} by projection onto harmonic
polynomials vanishing on {p2 = 0}.  On a grid only decay of sampled norms is
observable, so membership statements are "consistent with", not proofs.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .ansatz import AnsatzFamily, AnsatzInput, Axis, TaylorData, UnitRhs, build, odd_harmonic_basis, tangential_monomials
from .diagnostics import (
    DifferenceSampler,
    PolySampler,
    Sampler,
    ShiftedPoly,
    as_sampler,
    compute_D,
    compute_H,
    log_slope,
    phi_from,
    sphere_rule,
)
from .obstacle import GridField
from .polycore import HomoPoly, Poly, PolyLike, as_poly, evaluate, evaluate_array, format_poly, monomials, project, sphere_inner
from .signorini import even_harmonic_completion

DELTA = 0.1
CLASSES = ("FrequencyK", "NonInteger", "KPlusOneEven", "Ascends")


class BlowupError(RuntimeError):
    pass


class NotSingular(BlowupError):
    pass


class NoConvergence(BlowupError):
    def __init__(self, msg: str, even_norms: Sequence[float] = (), residuals: Sequence[float] = ()):
        super().__init__(msg)
        self.even_norms = list(even_norms)
        self.residuals = list(residuals)


class ClassificationError(BlowupError):
    pass


class Ambiguous(ClassificationError):
    pass


class Anomalous(ClassificationError):
    pass


class UnsupportedAxis(BlowupError):
    pass


def _to_fraction(c: float, max_den: int = 10**9) -> Fraction:
    return Fraction(float(c)).limit_denominator(max_den)


def geometric(lo: float, hi: float, ratio: float = 2.0**0.25) -> list[float]:
    """Geometric radii in [lo, hi], decreasing."""
    out, r = [], lo
    while r <= hi * (1 + 1e-12):
        out.append(r)
        r *= ratio
    return out[::-1]


def _grid_h(u) -> float | None:
    return u.h if isinstance(u, GridField) else getattr(u, "h", None)


def _field_values(f, x0) -> float:
    if f is None:
        return 1.0
    if isinstance(f, (int, float, Fraction)):
        return float(f)
    if isinstance(f, GridField):
        return float(as_sampler(f).values(np.asarray(x0, float)[None, :])[0])
    return float(evaluate(as_poly(f), [Fraction(float(c)) for c in x0]))


def taylor_shift(p: PolyLike, center: Sequence, degree: int) -> Poly:
    """Taylor polynomial of p at ``center`` in the variables h = x - center."""
    p = as_poly(p)
    n = p.dim
    c = [Fraction(float(v)) if not isinstance(v, (int, Fraction)) else Fraction(v) for v in center]
    shifted = [Poly.var(n, i) + Poly.const(n, c[i]) for i in range(n)]
    out = Poly.zero(n)
    for e, coef in p.terms().items():
        term = Poly.const(n, coef)
        for i, a in enumerate(e):
            if a:
                term = term * shifted[i] ** a
        out = out + project(term, degree, "upto")
    return out


# ------------------------------------------------------------------ fit p2


@dataclass
class P2Fit:
    center: tuple[float, ...]
    hessian: np.ndarray
    eigenvalues: list[float]
    stratum_dim: int
    f0: float
    radii: list[float]
    residuals: list[float]
    nu: Axis | None
    p2: HomoPoly  # fitted, rational approximation

    @property
    def p2_axis(self) -> HomoPoly | None:
        """(f0/2) x_nu^2 when the kernel is a coordinate hyperplane."""
        if self.nu is None:
            return None
        n = len(self.center)
        e = tuple(2 if i == self.nu.index else 0 for i in range(n))
        return HomoPoly(n, 2, {e: _to_fraction(self.f0) / 2})


def _quadratic_design(pts: np.ndarray) -> tuple[np.ndarray, list[tuple[int, int]]]:
    n = pts.shape[-1]
    pairs = [(i, j) for i in range(n) for j in range(i, n)]
    cols = [pts[:, i] * pts[:, j] * (0.5 if i == j else 1.0) for i, j in pairs]
    return np.stack(cols, axis=-1), pairs


def fit_p2(
    u,
    x0,
    radii: Sequence[float] | None = None,
    f0: float | None = None,
    kernel_tol: float = 0.05,
    axis_tol: float = 1e-3,
) -> P2Fit:
    """Least-squares quadratic blow-up r^-2 u(x0 + r.) ~ p2 with trace(Hess p2) = f0."""
    s = as_sampler(u)
    x0 = np.asarray(x0, float)
    n = s.dim
    h = _grid_h(u)
    if radii is None:
        if h is None:
            raise ValueError("radii are required for non-grid input")
        radii = geometric(4 * h, 16 * h)
    radii = sorted(radii, reverse=True)
    dirs, _ = sphere_rule(n, 64 if n == 2 else 12)
    shells = np.concatenate([t * dirs for t in (0.5, 0.75, 1.0)])
    X, pairs = _quadratic_design(shells)
    diag = [k for k, (i, j) in enumerate(pairs) if i == j]
    fits = []
    for r in radii:
        y = s.values(x0 + r * shells) / r**2
        if f0 is None:
            coef = np.linalg.lstsq(X, y, rcond=None)[0]
        else:
            # enforce the trace through a reduced basis: H_ii = f0/n + traceless
            base = np.zeros(len(pairs))
            for k in diag:
                base[k] = f0 / n
            T = []
            for k in diag[:-1]:
                t = np.zeros(len(pairs))
                t[k], t[diag[-1]] = 1.0, -1.0
                T.append(t)
            for k, (i, j) in enumerate(pairs):
                if i != j:
                    t = np.zeros(len(pairs))
                    t[k] = 1.0
                    T.append(t)
            T = np.array(T).T
            z = np.linalg.lstsq(X @ T, y - X @ base, rcond=None)[0]
            coef = base + T @ z
        fits.append((coef, float(np.max(np.abs(X @ coef - y)))))
    coef = fits[-1][0]
    H = np.zeros((n, n))
    for c, (i, j) in zip(coef, pairs):
        H[i, j] = H[j, i] = c
    resid = [f[1] for f in fits]
    evals, evecs = np.linalg.eigh(H)
    scale = max(abs(evals).max(), 1e-300)
    if evals.min() < -kernel_tol * scale:
        raise NotSingular(f"fitted Hessian is not convex (eigenvalues {evals})")
    if resid[-1] > 1e-8 * scale and resid[-1] > 0.75 * resid[0]:
        raise NotSingular(f"fit residual does not decay ({resid[0]:.3e} -> {resid[-1]:.3e})")
    m = int(np.sum(np.abs(evals) <= kernel_tol * scale))
    nu = None
    if m == n - 1:
        vec = evecs[:, int(np.argmax(evals))]
        idx = int(np.argmax(np.abs(vec)))
        if abs(vec[idx]) >= 1 - axis_tol:
            nu = Axis(idx, 1)
    trace = float(np.trace(H)) if f0 is None else float(f0)
    p2 = HomoPoly(n, 2, {tuple(int(a == i) + int(b == i) for i in range(n)): _to_fraction(c * (0.5 if a == b else 1.0)) for c, (a, b) in zip(coef, pairs)})
    return P2Fit(tuple(float(c) for c in x0), H, [float(e) for e in evals], m, trace, list(radii), resid, nu, p2)


# ------------------------------------------------------------ bases


@dataclass(frozen=True)
class HarmonicBasis:
    """Exact sphere-orthogonal bases of (degree)-homogeneous harmonics split by parity in x_nu."""

    dim: int
    degree: int
    nu: Axis
    odd: tuple[Poly, ...]
    even: tuple[Poly, ...]
    odd_norm2: tuple[float, ...]
    even_norm2: tuple[float, ...]


def _gram_schmidt(polys: Sequence[Poly]) -> list[Poly]:
    out: list[Poly] = []
    norms: list[Fraction] = []
    for p in polys:
        q = p
        for b, nb in zip(out, norms):
            q = q - b.scale(sphere_inner(p, b).ratio / nb)
        nq = sphere_inner(q, q).ratio
        if nq:
            out.append(q)
            norms.append(nq)
    return out


def harmonic_basis(dim: int, nu: Axis, degree: int) -> HarmonicBasis:
    odd = _gram_schmidt([as_poly(b) for b in odd_harmonic_basis(dim, nu, degree)])
    even = _gram_schmidt([even_harmonic_completion(m, nu.index) for m in tangential_monomials(dim, nu.index, degree)])
    on = tuple(sphere_inner(b, b).value for b in odd)
    en = tuple(sphere_inner(b, b).value for b in even)
    return HarmonicBasis(dim, degree, nu, tuple(odd), tuple(even), on, en)


# ---------------------------------------------------------- recover_next


@dataclass
class Recovery:
    k: int
    p_next: HomoPoly
    coefficients: list[float]  # relative to the exact odd basis
    radii: list[float]
    coefficients_by_radius: list[list[float]]
    residuals: list[float]
    even_norms: list[float]
    member: bool
    residual: float  # orthogonal residual at the smallest radius

    def as_dict(self) -> dict:
        return {
            "k": self.k,
            "p_next": format_poly(self.p_next),
            "coefficients": self.coefficients,
            "radii": self.radii,
            "residuals": self.residuals,
            "even_norms": self.even_norms,
            "member": self.member,
        }


def _decays(seq: Sequence[float], atol: float, factor: float = 0.6) -> bool:
    return seq[-1] <= atol or seq[-1] <= factor * seq[0]


def recover_next(
    u,
    family: AnsatzFamily,
    x0,
    radii: Sequence[float] | None = None,
    extrapolate: bool = True,
    atol: float = 1e-6,
) -> Recovery:
    """Recover p_{k+1} from r^-(k+1) (u - P_k)(x0 + r.) at small radii."""
    k = family.order
    n = family.dim
    x0 = np.asarray(x0, float)
    v = DifferenceSampler(as_sampler(u), ShiftedPoly(family.P, x0))
    h = _grid_h(u)
    if radii is None:
        if h is None:
            raise ValueError("radii are required for non-grid input")
        radii = geometric(8 * h, 32 * h)
    radii = sorted(radii, reverse=True)
    basis = harmonic_basis(n, family.input.nu, k + 1)
    dirs, w = sphere_rule(n, 256 if n == 2 else 32)
    odd_vals = [evaluate_array(b, dirs) for b in basis.odd]
    even_vals = [evaluate_array(b, dirs) for b in basis.even]
    f0 = float(family.f0)
    by_r, resid, even = [], [], []
    for r in radii:
        v.check_ball(x0, r)
        g = v.values(x0 + r * dirs) / r ** (k + 1)
        c = [float(np.dot(w, g * b)) / nb for b, nb in zip(odd_vals, basis.odd_norm2)]
        d = [float(np.dot(w, g * b)) / nb for b, nb in zip(even_vals, basis.even_norm2)]
        rem = g - sum((ci * b for ci, b in zip(c, odd_vals)), np.zeros_like(g)) - sum((di * b for di, b in zip(d, even_vals)), np.zeros_like(g))
        by_r.append(c)
        resid.append(math.sqrt(float(np.dot(w, rem * rem))))
        even.append(math.sqrt(sum(di * di * nb for di, nb in zip(d, basis.even_norm2))))
    C = np.asarray(by_r)
    if extrapolate and len(radii) >= 4 and C.size:
        coef = [float(np.polyfit(radii, C[:, i], 2)[-1]) for i in range(C.shape[1])]
    else:
        coef = list(C[-1]) if C.size else []
    coef = [c / f0 for c in coef]
    p = Poly.zero(n)
    for c, b in zip(coef, basis.odd):
        p = p + b.scale(_to_fraction(c))
    p_next = p.part(k + 1)
    scale = max(1.0, max((abs(c) for c in coef), default=0.0))
    res_ok = _decays(resid, atol * scale)
    even_ok = _decays(even, atol * scale)
    if not even_ok and not res_ok:
        raise NoConvergence("residual and even part stagnate; the point likely leaves the expansion chain", even, resid)
    if not even_ok:
        raise NoConvergence("even part of the blow-up does not decay", even, resid)
    return Recovery(k, p_next, coef, list(radii), [list(c) for c in by_r], resid, even, res_ok and even_ok, resid[-1])


# ---------------------------------------------------------- lambda_k


@dataclass
class LambdaEstimate:
    k: int
    value: float
    band: tuple[float, float]
    phi: float
    slope: float
    gamma: float
    radii: list[float]
    H: list[float]
    phi_by_radius: list[float]
    even_norm: float | None = None
    synthetic: bool = False


def estimate_lambda(v: Sampler, x0, k: int, radii: Sequence[float], gamma: float | None = None, synthetic: bool = False) -> LambdaEstimate:
    """Two estimators of the frequency of v at x0, clamped to [k, k+2].

    (a) phi^gamma at the three smallest radii, (b) half the log-log slope of
    H.  Since phi^gamma saturates at gamma, a saturated (a) only bounds the
    frequency from below and the slope estimate is used as the value.
    """
    gamma = k + 1.5 if gamma is None else gamma
    radii = sorted(radii, reverse=True)
    x0 = np.asarray(x0, float)
    H = [compute_H(v, x0, r) for r in radii]
    D = [compute_D(v, x0, r) for r in radii]
    phis = [phi_from(a, b, r, gamma) for a, b, r in zip(H, D, radii)]
    phi = float(np.mean(phis[-3:]))
    pos = [(r, a) for r, a in zip(radii, H) if a > 0]
    slope = 0.5 * log_slope(*zip(*pos)) if len(pos) >= 3 else float(k + 2)
    saturated = phi >= gamma - 0.05
    value = slope if saturated else 0.5 * (phi + slope)
    lo, hi = (min(gamma, slope), max(gamma, slope)) if saturated else (min(phi, slope), max(phi, slope))
    clamp = lambda t: min(max(t, k), k + 2)
    return LambdaEstimate(k, clamp(value), (clamp(lo), clamp(hi)), phi, slope, gamma, list(radii), H, phis, synthetic=synthetic)


def estimate_lambda_k(u, family: AnsatzFamily, x0, radii: Sequence[float] | None = None, gamma: float | None = None) -> LambdaEstimate:
    x0 = np.asarray(x0, float)
    v = DifferenceSampler(as_sampler(u), ShiftedPoly(family.P, x0))
    h = _grid_h(u)
    if radii is None:
        if h is None:
            raise ValueError("radii are required for non-grid input")
        hi = min(64 * h, (u.distance_to_boundary(x0) - 3 * h) if isinstance(u, GridField) else 64 * h)
        radii = geometric(4 * h, hi)
    return estimate_lambda(v, x0, family.order, radii, gamma)


# ----------------------------------------------------------- classify


def classify(k: int, band: tuple[float, float], even_nonzero: bool, delta: float = DELTA) -> str:
    """Trichotomy class from a frequency band; raises rather than guessing."""
    lo, hi = band
    if lo > hi:
        raise ValueError("band must satisfy lo <= hi")
    if hi < k + delta:
        if k % 2 == 0:
            raise Anomalous(f"band {band} sits at k = {k}, which cannot happen for even k")
        return "FrequencyK"
    if lo > k + delta and hi < k + 1 - delta:
        return "NonInteger"
    if lo >= k + 1 - delta:
        if even_nonzero and lo <= k + 1 + delta:
            return "KPlusOneEven"
        if not even_nonzero:
            return "Ascends"
    raise Ambiguous(f"band {band} does not determine a class for k = {k}")


# ---------------------------------------------------------- reports


@dataclass
class StratumReport:
    center: tuple[float, ...]
    p2: str
    stratum_dim: int
    p_list: list[str]
    k: int
    lam: float | None
    band: tuple[float, float] | None
    cls: str | None
    flag: str | None = None
    whitney: str = "unchecked"
    recoveries: list[dict] = field(default_factory=list)
    provenance: dict = field(default_factory=dict)

    def to_json_obj(self) -> dict:
        d = asdict(self)
        d["class"] = d.pop("cls")
        return d


def _rhs_data(f, x0, degree: int, f0: float) -> TaylorData | UnitRhs:
    if f is None or (isinstance(f, (int, float, Fraction)) and float(f) == 1.0):
        return UnitRhs()
    if isinstance(f, (int, float, Fraction, GridField)):
        c = _to_fraction(f0)
        return UnitRhs() if c == 1 else TaylorData(tuple(x0), Poly.const(len(x0), c), c)
    F = taylor_shift(f, x0, degree)
    c = F.part(0).coeffs.get((0,) * F.dim, Fraction(0))
    if c == 1 and all(F.part(j).is_zero() for j in range(1, degree + 1)):
        return UnitRhs()
    return TaylorData(tuple(float(v) for v in x0), F, c)


def _family(dim: int, k: int, nu: Axis, p_list, f, x0, f0) -> AnsatzFamily:
    return build(AnsatzInput(dim, k, nu, tuple(p_list), _rhs_data(f, x0, k - 1, f0)))


@dataclass
class PointAnalysis:
    report: StratumReport
    families: list[AnsatzFamily]
    estimates: list[LambdaEstimate]


def analyze_point(u: GridField, x0, f=None, maxk: int = 3, p2_radii=None) -> PointAnalysis:
    """Run the ascent from order 2 up to ``maxk`` at one point."""
    x0 = tuple(float(c) for c in x0)
    n = u.dims
    f0 = _field_values(f, x0)
    fit = fit_p2(u, x0, p2_radii, f0=f0)
    if fit.nu is None:
        raise UnsupportedAxis("the Ansatz needs the kernel normal along a coordinate axis")
    p_list: list[HomoPoly] = []
    fams, ests, recs = [], [], []
    cls = flag = None
    est = None
    k = 2
    while True:
        fam = _family(n, k, fit.nu, p_list, f, x0, f0)
        fams.append(fam)
        est = estimate_lambda_k(u, fam, x0)
        try:
            rec = recover_next(u, fam, x0)
            even_nonzero = False
            recs.append(rec.as_dict())
        except NoConvergence as exc:
            rec = None
            even_nonzero = True
            recs.append({"k": k, "error": str(exc), "even_norms": exc.even_norms})
        est.even_norm = 0.0 if rec is not None else (recs[-1]["even_norms"] or [0.0])[-1]
        ests.append(est)
        try:
            cls = classify(k, est.band, even_nonzero)
            flag = None
        except ClassificationError as exc:
            cls, flag = None, f"{type(exc).__name__}: {exc}"
        if cls != "Ascends" or k >= maxk or rec is None:
            break
        p_list.append(rec.p_next)
        k += 1
    report = StratumReport(
        center=x0,
        p2=format_poly(fit.p2_axis if fit.p2_axis is not None else fit.p2),
        stratum_dim=fit.stratum_dim,
        p_list=[format_poly(p) for p in p_list],
        k=k,
        lam=est.value if est else None,
        band=est.band if est else None,
        cls=cls,
        flag=flag,
        recoveries=recs,
        provenance={"p2": "fitted", "p_list": "fitted", "lam": "measured", "band": "measured", "class": "measured"},
    )
    return PointAnalysis(report, fams, ests)


# ----------------------------------------------------------- Whitney


@dataclass
class WhitneyResult:
    k: int
    C_fit: dict[int, float]
    by_distance: dict[int, list[tuple[float, float]]]
    stable: bool
    passed: bool


def _derivative(p: Poly, alpha: Sequence[int]) -> Poly:
    for i, a in enumerate(alpha):
        for _ in range(a):
            p = p.derivative(i)
    return p


def _multi_indices(n: int, k: int):
    for total in range(k + 1):
        for e in monomials(n, total):
            yield e


def whitney_check(points: Sequence[tuple[Sequence[float], PolyLike]], k: int, atol: float = 1e-9, spread: float = 2.0) -> WhitneyResult:
    """Ratios |d^a P_x(0) - d^a P_y(x - y)| / |x - y|^(k - |a| + 1).

    ``points`` pairs a location with its polynomial field P_x in the shifted
    variables.  Stability compares the max ratio at consecutive dyadic pair
    distances; a change by a factor ``spread`` or more fails.
    """
    if len(points) < 2:
        raise ValueError("need at least two points")
    xs = [np.asarray(x, float) for x, _ in points]
    polys = [as_poly(p) for _, p in points]
    n = polys[0].dim
    alphas = list(_multi_indices(n, k))
    ders = [{a: _derivative(p, a) for a in alphas} for p in polys]
    by_dist: dict[int, dict[float, float]] = {}
    C: dict[int, float] = {m: 0.0 for m in range(k + 1)}
    for i, j in itertools.permutations(range(len(points)), 2):
        d = float(np.linalg.norm(xs[i] - xs[j]))
        if d == 0:
            raise ValueError("repeated point")
        key = round(d, 12)
        for a in alphas:
            m = sum(a)
            at0 = evaluate_array(ders[i][a], np.zeros((1, n)))[0]
            aty = evaluate_array(ders[j][a], (xs[i] - xs[j])[None, :])[0]
            ratio = abs(at0 - aty) / d ** (k - m + 1)
            C[m] = max(C[m], ratio)
            slot = by_dist.setdefault(m, {})
            slot[key] = max(slot.get(key, 0.0), ratio)
    finite = all(math.isfinite(c) for c in C.values())
    stable = True
    table: dict[int, list[tuple[float, float]]] = {}
    for m, slot in by_dist.items():
        table[m] = sorted(slot.items())
        ds = dict(table[m])
        for d, c in table[m]:
            half = round(d / 2, 12)
            match = next((ds[e] for e in ds if math.isclose(e, half, rel_tol=1e-6)), None)
            if match is None:
                continue
            if c <= atol and match <= atol:
                continue
            lo, hi = sorted((c, match))
            if lo <= 0 or hi / lo >= spread:
                stable = False
    return WhitneyResult(k, C, table, stable, finite and stable)


def whitney_fields(u: GridField, centers: Sequence[Sequence[float]], f, k: int = 3) -> list[tuple[tuple[float, ...], Poly]]:
    """Per-point jets pi_{<=k} P_{k,x} from the pipeline (p2 fit, recovery, Ansatz)."""
    out = []
    for x0 in centers:
        x0 = tuple(float(c) for c in x0)
        f0 = _field_values(f, x0)
        fit = fit_p2(u, x0, f0=f0)
        if fit.nu is None:
            raise UnsupportedAxis("the Ansatz needs the kernel normal along a coordinate axis")
        p_list: list[HomoPoly] = []
        for j in range(2, k):
            fam = _family(u.dims, j, fit.nu, p_list, f, x0, f0)
            p_list.append(recover_next(u, fam, x0).p_next)
        fam = _family(u.dims, k, fit.nu, p_list, f, x0, f0)
        out.append((x0, project(fam.P, k, "upto")))
    return out


# ---------------------------------------------------------- sequences


@dataclass
class BlowupSequence:
    center: tuple[float, ...]
    radii: list[float]
    directions: np.ndarray
    weights: np.ndarray
    samples: list[np.ndarray]  # normalized v_r on the unit sphere
    limit: dict[str, list[float]]  # projection coefficients at the smallest radius
    synthetic: bool = False

    def shell_norms(self) -> list[float]:
        return [math.sqrt(float(np.dot(self.weights, s * s))) for s in self.samples]


def blowup_sequence(v, x0, radii: Sequence[float], degree: int, nu: Axis, synthetic: bool = False) -> BlowupSequence:
    """Normalized rescalings v(x0 + r.)/H(r, v)^(1/2) sampled on the unit sphere."""
    s = as_sampler(v)
    x0 = np.asarray(x0, float)
    dirs, w = sphere_rule(s.dim, 256 if s.dim == 2 else 32)
    radii = sorted(radii, reverse=True)
    samples = []
    for r in radii:
        s.check_ball(x0, r)
        vals = s.values(x0 + r * dirs)
        H = float(np.dot(w, vals * vals))
        if H <= 0:
            raise BlowupError(f"v vanishes on the sphere of radius {r:.4g}")
        samples.append(vals / math.sqrt(H))
    basis = harmonic_basis(s.dim, nu, degree)
    last = samples[-1]
    odd = [float(np.dot(w, last * evaluate_array(b, dirs))) / nb for b, nb in zip(basis.odd, basis.odd_norm2)]
    even = [float(np.dot(w, last * evaluate_array(b, dirs))) / nb for b, nb in zip(basis.even, basis.even_norm2)]
    return BlowupSequence(tuple(float(c) for c in x0), list(radii), dirs, w, samples, {"odd": odd, "even": even}, synthetic)


def reports_to_json(reports: Sequence[StratumReport]) -> str:
    return json.dumps([r.to_json_obj() for r in reports], indent=2, sort_keys=True)
