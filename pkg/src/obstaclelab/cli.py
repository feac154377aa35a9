"""Command-line entry point ``lab``.

Exit codes: 0 when every audit passes, 1 on an audit failure, 2 on a
configuration or I/O error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import os
import sys
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import ansatz as an
from . import blowup as bu
from . import diagnostics as dg
from . import heleshaw as hs
from . import obstacle as ob
from . import signorini as sg
from .config import ConfigInvalid, CampaignConfig, load_config
from .polycore import Poly, evaluate_array, format_poly, from_json_obj, laplacian, parse_poly, project

MANIFEST_SCHEMA = "lab/manifest-1"
EXIT_OK, EXIT_AUDIT, EXIT_CONFIG = 0, 1, 2


class ManifestMissing(FileNotFoundError):
    pass


def lab_threads() -> int:
    """Validated LAB_THREADS cap (default 1).  Module tasks run sequentially."""
    raw = os.environ.get("LAB_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ConfigInvalid([f"LAB_THREADS: not an integer ({raw!r})"]) from None
    if n < 1:
        raise ConfigInvalid(["LAB_THREADS: must be >= 1"])
    return n


# ------------------------------------------------------------- JSON output


def tag(value, provenance: str) -> dict:
    return {"value": value, "provenance": provenance}


def _plain(obj):
    """JSON-safe copy: numpy scalars unwrapped, non-finite floats as strings."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, Fraction):
        return str(obj)
    return obj


def write_json(path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(_plain(obj), fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


# ---------------------------------------------------------- problem set-up


def _solver_params(cfg: CampaignConfig) -> ob.SolverParams:
    s = cfg.solver
    return ob.SolverParams(omega=s["omega"], tol=s["tol"], max_iter=s["max_iter"], nested=s["nested"])


def _homogeneous(text: str, dim: int, degree: int):
    p = parse_poly(text, dim)
    if p.is_zero():
        return p.part(degree)
    if p.degree != degree or not (p - p.part(degree).to_poly()).is_zero():
        raise an.InvalidInput(f"{text!r} is not homogeneous of degree {degree}")
    return p.part(degree)


def _rhs_from_poly(f: Poly, order: int, center) -> an.UnitRhs | an.TaylorData:
    F = project(f, order - 1, "upto")
    f0 = F.part(0).coeffs.get((0,) * F.dim, Fraction(0))
    if f0 == 1 and F.degree <= 0:
        return an.UnitRhs()
    return an.TaylorData(tuple(center), F, f0)


def build_family(problem: dict) -> an.AnsatzFamily:
    dim, k = problem["dim"], problem["order"]
    p_list = tuple(_homogeneous(s, dim, j) for j, s in zip(range(3, k + 1), problem["p"]))
    rhs = _rhs_from_poly(parse_poly(problem["f"], dim), k, (0,) * dim)
    return an.build(an.AnsatzInput(dim, k, an.Axis(problem["nu"] - 1, problem["sign"]), p_list, rhs))


def exact_solution(problem: dict, family: an.AnsatzFamily | None) -> Poly:
    """The manufactured continuum solution u* as an exact polynomial."""
    kind = problem["kind"]
    if kind == "ansatz":
        return family.halfA2
    if kind == "quadratic":
        return parse_poly("1/2*x2^2", 2)
    return parse_poly(problem["u"], problem["dim"])


def make_problem(cfg: CampaignConfig, family: an.AnsatzFamily | None) -> tuple[ob.ManufacturedProblem, Poly]:
    prob = cfg.problem
    u = exact_solution(prob, family)
    lap = laplacian(u)
    dim = u.dim
    mp = ob.manufacture(
        lambda x: evaluate_array(u, x),
        lambda x: evaluate_array(lap, x),
        cfg.grid["box"],
        cfg.grid["n_cells"],
        dim,
        prob["rhs"],
        _solver_params(cfg),
        label=prob["kind"],
    )
    return mp, lap


# ---------------------------------------------------------------- modules


class _Run:
    def __init__(self, cfg: CampaignConfig, out: Path):
        self.cfg = cfg
        self.out = out
        self.results: dict = {}
        self.audits: dict = {}
        self.errors: list[dict] = []
        self.family: an.AnsatzFamily | None = None
        self.u: ob.GridField | None = None
        self.f_exact: Poly | None = None

    def audit(self, name: str, module: str, passed: bool, violating_radii=(), **detail) -> None:
        self.audits[name] = {
            "module": module,
            "passed": bool(passed),
            "violating_radii": sorted(float(r) for r in violating_radii),
            "detail": detail,
        }

    # ansatz -------------------------------------------------------------
    def do_ansatz(self) -> None:
        fam = build_family(self.cfg.problem)
        self.family = fam
        an.save_family(fam, self.out / "family.json")
        defect = an.exactness_defect(fam)
        self.results["ansatz"] = {
            "order": tag(fam.order, "exact"),
            "R_list": tag([format_poly(r) for r in fam.R_list], "exact"),
            "P": tag(format_poly(fam.P), "exact"),
        }
        self.audit("exactness", "ansatz", defect.is_zero(), defect=format_poly(defect))

    # solve --------------------------------------------------------------
    def do_solve(self) -> None:
        mp, lap = make_problem(self.cfg, self.family)
        self.f_exact = lap
        info: dict = {}
        try:
            u = ob.solve(mp.problem, info=info)
        except ob.NonConvergence as exc:
            self.audit("complementarity", "solve", False, residual=exc.residual, iterations=exc.iterations)
            raise
        self.u = u
        u.save(self.out / "u.grid")
        # the continuum rhs, which is what the blow-up pipeline expands
        mp.problem.f.with_values(evaluate_array(lap, u.points())).save(self.out / "f.grid")
        kappa = self.cfg.analysis["kappa"]
        ob.export_contact_csv(u, self.out / "contact.csv", kappa)
        err = float(np.max(np.abs(u.values - mp.exact.values)))
        self.results["solve"] = {
            "h": tag(u.h, "exact"),
            "iterations": tag(info["iterations"], "measured"),
            "residual": tag(info["residual"], "measured"),
            "omega": tag(info["omega"], "measured"),
            "max_error": tag(err, "measured"),
            "contact_nodes": tag(int(np.count_nonzero(ob.contact_set(u, kappa))), "measured"),
        }
        self.audit("complementarity", "solve", info["residual"] <= self.cfg.solver["tol"], residual=info["residual"])

    def _radii(self) -> list[float]:
        a = self.cfg.analysis
        u = self.u
        x0 = a["center"]
        return dg.default_radii(u, x0, r_min=a["r_min_cells"] * u.h, r_max=a["r_max"])

    # freq ---------------------------------------------------------------
    def do_freq(self) -> None:
        a = self.cfg.analysis
        prof = dg.frequency_profile(self.u, a["center"], self.family, a["gamma"], a["lam"], self._radii(), a["eps"])
        prof.to_csv(self.out / "profile.csv")
        if self.cfg.plots:
            try:
                prof.to_svg(self.out / "profile.svg")
            except OSError:
                pass  # plots never gate the exit code
        drift = prof.drift or dg.audit_monotonicity(prof.radii, prof.phi, "phi", a["eps"], min_radii=2)
        mon = dg.monneau(self.u, self.family, a["center"], prof.radii, a["eps"])
        self.results["freq"] = {
            "gamma": tag(prof.gamma, "exact"),
            "radii": tag(len(prof.radii), "exact"),
            "C_fit": tag(drift.C, "fitted"),
            "drift_residual": tag(drift.residual, "measured"),
            "monneau_C_fit": tag(mon.C, "fitted"),
            "monneau_smallest": tag(mon.values[-3:], "measured"),
        }
        ok = math.isfinite(drift.C) and drift.residual <= a["drift_tol"]
        bad = [] if ok else sorted({v[0] for v in drift.violations})
        self.audit("drift", "freq", ok, bad, C_fit=drift.C, residual=drift.residual, tol=a["drift_tol"])

    # blowup -------------------------------------------------------------
    def do_blowup(self) -> None:
        a = self.cfg.analysis
        res = bu.analyze_point(self.u, a["center"], self.f_exact, a["maxk"])
        rep = res.report
        write_json(self.out / "report.json", [rep.to_json_obj()])
        with open(self.out / "lambda.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["k", "r", "H", "phi_gamma"])
            for est in res.estimates:
                for r, H, phi in zip(est.radii, est.H, est.phi_by_radius):
                    w.writerow([est.k, f"{r:.12e}", f"{H:.12e}", f"{phi:.12e}"])
        self.results["blowup"] = {
            "class": tag(rep.cls, "measured"),
            "flag": rep.flag,
            "k": tag(rep.k, "measured"),
            "lambda": tag(rep.lam, "measured"),
            "band": tag(list(rep.band) if rep.band else None, "measured"),
            "p2": tag(rep.p2, "fitted"),
            "p_list": tag(rep.p_list, "fitted"),
            "stratum_dim": tag(rep.stratum_dim, "fitted"),
        }
        self.audit("classification", "blowup", rep.cls is not None, flag=rep.flag)

    # lipschitz ----------------------------------------------------------
    def do_lipschitz(self) -> None:
        a = self.cfg.analysis
        u = self.u
        x0 = a["center"]
        top = min(u.distance_to_boundary(x0) - 2 * u.h, a["r_max"] or math.inf) / max(1.0, 2 * a["theta"])
        radii = []
        r = top
        while r >= a["r_min_cells"] * u.h:
            radii.append(r)
            r /= 2
        la = dg.lipschitz_audit(u, self.family, x0, radii, a["beta"], a["theta"], a["lipschitz_cap"])
        with open(self.out / "lipschitz.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["r", "tangential", "normal", "base", "C_tangential", "C_normal"])
            for row in la.rows:
                w.writerow([f"{row.r:.12e}", f"{row.tangential:.12e}", f"{row.normal:.12e}", f"{row.base:.12e}", f"{row.C_tangential:.12e}", f"{row.C_normal:.12e}"])
        self.results["lipschitz"] = {"C_tangential": tag(la.C_tangential, "fitted"), "C_normal": tag(la.C_normal, "fitted")}
        self.audit("lipschitz", "lipschitz", la.passed, la.flagged, cap=la.cap)

    # whitney ------------------------------------------------------------
    def do_whitney(self) -> None:
        a = self.cfg.analysis
        w = a["whitney"]
        det = ob.detect_singular(self.u, a["kappa"], 0.25, w["radii_cells"])
        pts = sorted(tuple(float(c) for c in p) for p in det.points)
        if w["x_min"] is not None:
            pts = [p for p in pts if p[0] >= w["x_min"]]
        pts = pts[:: w["stride"]][: w["points"]]
        if len(pts) < 2:
            self.audit("whitney", "whitney", False, detected=len(det.points))
            return
        fields = bu.whitney_fields(self.u, pts, self.f_exact, w["k"])
        res = bu.whitney_check(fields, w["k"])
        write_json(
            self.out / "whitney.json",
            {"points": [list(p) for p in pts], "jets": [format_poly(p) for _, p in fields], "C_fit": res.C_fit, "stable": res.stable},
        )
        self.results["whitney"] = {
            "detected": tag(len(det.points), "measured"),
            "points": tag(len(pts), "exact"),
            "C_fit": tag({str(m): c for m, c in res.C_fit.items()}, "fitted"),
        }
        self.audit("whitney", "whitney", res.passed, stable=res.stable)

    # heleshaw -----------------------------------------------------------
    def do_heleshaw(self) -> None:
        fcfg = self.cfg.family
        fam, t0 = run_family(fcfg)
        st = hs.detect_singular_times(
            fam, fcfg["detect"]["kappa"], fcfg["detect"]["tau"], fcfg["detect"]["radii_cells"], fcfg["detect"]["stationary_tol"], strict=False
        )
        write_json(self.out / "spacetime.json", st.to_json_obj())
        st.write_csv(self.out / "spacetime.csv")
        res: dict = {"samples": tag(len(fam.ts), "exact"), "singular_times": tag(len(st.pi_t()), "measured")}
        self.audit("graph", "heleshaw", not st.violations, violations=len(st.violations))
        cl = fcfg["cleaning"]
        if t0 is not None:
            audit = hs.cleaning_audit(fam, cl["center"], t0, cl["k"], cl["R"])
            lo, hi = cl["exponent_band"]
            ok = audit.passed and audit.exponent is not None and lo <= audit.exponent <= hi
            bad = [math.dist(p, cl["center"]) for p, _ in audit.violations]
            res.update(
                t0=tag(t0, "measured"),
                C0=tag(audit.C0, "fitted"),
                exponent=tag(audit.exponent, "fitted"),
            )
            self.audit("cleaning", "heleshaw", ok, bad, exponent=audit.exponent, band=[lo, hi])
        if fcfg["annulus"]:
            K = hs.annulus_mask(fam.fields[0], *fcfg["annulus"])
            c = hs.uniform_monotonicity_constant(fam, K)
            res["c_K"] = tag(c, "measured")
            self.audit("uniform_monotonicity", "heleshaw", c > 0, c_K=c)
        self.results["heleshaw"] = res


def run_family(fcfg: dict) -> tuple[ob.MonotoneFamily, float | None]:
    """Solve the configured family; returns it with the pinch time if any."""
    if fcfg["kind"] == "pinch":
        mk = lambda t: hs.pinch_problem(t, fcfg["n_cells"], fcfg["depth"], fcfg["width"])
    else:
        mk = lambda t: ob.heleshaw_problem(t, fcfg["n_cells"], fcfg["box"], fcfg["radius"], fcfg["cap"])
    times = fcfg["times"]
    t0 = None
    if times["mode"] == "pinch":
        at_center = lambda u: u.values[u.index_of(fcfg["cleaning"]["center"])] <= 0
        t0, _ = hs.bisect_time(mk, at_center, *times["bracket"], tol=times["tol"])
        ts = hs.times_after(t0, times["first"], times["last"], times["count"])
    else:
        ts = times["values"]
    fam = hs.solve_times(ts, mk, fcfg["mono_tol"])
    if fcfg["kind"] == "heleshaw":
        for u in fam.fields:
            ob.check_free_boundary_interior(u)
    return fam, t0


def run(cfg: CampaignConfig, out) -> dict:
    """Run the enabled modules and write the artifacts plus manifest.json."""
    lab_threads()
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(json.dumps(cfg.to_obj(), indent=2, sort_keys=True) + "\n")
    job = _Run(cfg, out)
    for module in cfg.modules:
        try:
            getattr(job, f"do_{module}")()
        except (an.AnsatzError, ConfigInvalid):
            raise
        except Exception as exc:
            job.errors.append({"module": module, "type": type(exc).__name__, "message": str(exc)})
            job.audits.setdefault(f"{module}_error", {"module": module, "passed": False, "violating_radii": [], "detail": {"error": str(exc)}})
            break
    files = []
    for p in sorted(out.iterdir()):
        if p.is_file() and p.name != "manifest.json":
            files.append({"path": p.name, "bytes": p.stat().st_size, "sha256": _sha256(p)})
    manifest = {
        "schema": MANIFEST_SCHEMA,
        "name": cfg.name,
        "config_hash": cfg.digest(),
        "modules": list(cfg.modules),
        "files": files,
        "results": job.results,
        "audits": job.audits,
        "errors": job.errors,
        "status": "pass" if all(a["passed"] for a in job.audits.values()) else "fail",
    }
    write_json(out / "manifest.json", manifest)
    return _plain(manifest)


# ----------------------------------------------------------------- report


def load_manifest(path) -> dict:
    p = Path(path)
    if p.is_dir():
        p = p / "manifest.json"
    if not p.is_file():
        raise ManifestMissing(f"no manifest at {p}")
    with open(p) as fh:
        return json.load(fh)


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.6g}"
    if isinstance(v, list):
        return "[" + ", ".join(_fmt(x) for x in v) + "]"
    if isinstance(v, dict):
        return "{" + ", ".join(f"{k}: {_fmt(x)}" for k, x in sorted(v.items())) + "}"
    return str(v)


def report(manifest: dict) -> str:
    """One-page plain-text summary of a manifest."""
    results = manifest.get("results") or {}
    audits = manifest.get("audits") or {}
    lines = [f"campaign: {manifest.get('name', '?')}", f"config hash: {manifest.get('config_hash', '?')}"]
    if not results and not audits:
        lines.append("no runs")
        return "\n".join(lines) + "\n"
    blow = results.get("blowup")
    if blow:
        lines.append(f"class: {blow['class']['value']}")
        if blow.get("flag"):
            lines.append(f"flag: {blow['flag']}")
    for module in sorted(results):
        lines.append(f"[{module}]")
        for key, val in sorted(results[module].items()):
            if isinstance(val, dict) and "provenance" in val:
                lines.append(f"  {key} = {_fmt(val['value'])} ({val['provenance']})")
            elif val is not None:
                lines.append(f"  {key} = {_fmt(val)}")
    lines.append("audits:")
    for name in sorted(audits):
        a = audits[name]
        line = f"  {name} ({a.get('module', '?')}): {'PASS' if a['passed'] else 'FAIL'}"
        if not a["passed"] and a.get("violating_radii"):
            line += " violating radii " + ", ".join(f"{r:.6g}" for r in a["violating_radii"])
        lines.append(line)
    for e in manifest.get("errors") or []:
        lines.append(f"error in {e['module']}: {e['type']}: {e['message']}")
    return "\n".join(lines) + "\n"


# -------------------------------------------------------------- commands


def _read_poly_file(path, dim: int) -> Poly:
    text = Path(path).read_text().strip()
    if text.startswith("{"):
        p = from_json_obj(json.loads(text))
        if p.dim != dim:
            raise ConfigInvalid([f"{path}: polynomial has dim {p.dim}, expected {dim}"])
        return p
    return parse_poly(text, dim)


def cmd_ansatz(args) -> int:
    k, dim = args.order, args.dim
    texts: dict[int, Poly] = {}
    for j in range(3, 11):
        path = getattr(args, f"p{j}_file")
        if path:
            texts[j] = _read_poly_file(path, dim)
    for j, expr in enumerate(args.p or [], start=3):
        texts.setdefault(j, parse_poly(expr, dim))
    missing = [j for j in range(3, k + 1) if j not in texts]
    if missing:
        raise ConfigInvalid([f"--p{j}-file: missing" for j in missing])
    extra = [j for j in texts if j > k]
    if extra:
        raise ConfigInvalid([f"--p{j}-file: exceeds --order {k}" for j in extra])
    p_list = []
    for j in range(3, k + 1):
        p = texts[j]
        if not (p - p.part(j).to_poly()).is_zero():
            raise ConfigInvalid([f"--p{j}-file: not homogeneous of degree {j}"])
        p_list.append(p.part(j))
    rhs: an.UnitRhs | an.TaylorData = an.UnitRhs()
    if args.rhs_taylor_file:
        obj = json.loads(Path(args.rhs_taylor_file).read_text())
        F = from_json_obj(obj["F"]) if isinstance(obj["F"], dict) else parse_poly(obj["F"], dim)
        center = tuple(Fraction(str(c)) for c in obj.get("center", [0] * dim))
        rhs = _rhs_from_poly(F, k, center)
    nu = an.Axis((args.nu or dim) - 1, args.sign)
    fam = an.build(an.AnsatzInput(dim, k, nu, tuple(p_list), rhs))
    an.save_family(fam, args.out)
    for j, r in enumerate(fam.R_list, start=1):
        print(f"R_{j} = {format_poly(r)}")
    print(f"wrote {args.out}")
    return EXIT_OK if an.exactness_defect(fam).is_zero() else EXIT_AUDIT


def cmd_solve(args) -> int:
    cfg = load_config(args.config)
    if cfg.problem is None or cfg.grid is None:
        raise ConfigInvalid(["config.problem: required", "config.grid: required"])
    family = build_family(cfg.problem) if cfg.problem["kind"] == "ansatz" else None
    mp, _ = make_problem(cfg, family)
    info: dict = {}
    try:
        u = ob.solve(mp.problem, info=info)
    except ob.NonConvergence as exc:
        print(f"no convergence: residual {exc.residual:.3e} after {exc.iterations} sweeps", file=sys.stderr)
        return EXIT_AUDIT
    u.save(args.out)
    if args.f_out:
        mp.problem.f.save(args.f_out)
    if args.contact_csv:
        ob.export_contact_csv(u, args.contact_csv, args.kappa)
    err = float(np.max(np.abs(u.values - mp.exact.values)))
    print(f"sweeps {info['iterations']} residual {info['residual']:.3e} max error {err:.3e}")
    return EXIT_OK


def cmd_freq(args) -> int:
    u = ob.GridField.load(args.u)
    fam = an.load_family(args.family)
    x0 = args.center
    radii = dg.default_radii(u, x0, r_min=args.r_min_cells * u.h, r_max=args.r_max)
    prof = dg.frequency_profile(u, x0, fam, args.gamma, args.lam, radii, args.eps)
    prof.to_csv(args.out)
    if args.svg:
        prof.to_svg(args.svg)
    d = prof.drift
    if d is None:
        print("too few radii for a drift fit")
        return EXIT_AUDIT
    ok = math.isfinite(d.C) and d.residual <= args.drift_tol
    print(f"C_fit {d.C:.6g} residual {d.residual:.3e} {'PASS' if ok else 'FAIL'}")
    return EXIT_OK if ok else EXIT_AUDIT


def cmd_blowup(args) -> int:
    u = ob.GridField.load(args.u)
    f = ob.GridField.load(args.f) if args.f else None
    res = bu.analyze_point(u, args.center, f, args.maxk)
    write_json(args.out, [res.report.to_json_obj()])
    if args.lambda_csv:
        with open(args.lambda_csv, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["k", "r", "H", "phi_gamma"])
            for est in res.estimates:
                for r, H, phi in zip(est.radii, est.H, est.phi_by_radius):
                    w.writerow([est.k, f"{r:.12e}", f"{H:.12e}", f"{phi:.12e}"])
    rep = res.report
    print(f"class: {rep.cls}" + (f" ({rep.flag})" if rep.flag else ""))
    return EXIT_OK if rep.cls is not None else EXIT_AUDIT


def cmd_signorini(args) -> int:
    lam = Fraction(args.lam)
    cat = sg.catalog(lam, args.dim)
    ok = True
    for c in cat.candidates:
        r = sg.verify_signorini(c)
        ok &= r.passed
        print(f"{c.label}: {'PASS' if r.passed else 'FAIL'} ({c.parity})")
    if not cat.candidates:
        print(f"lambda = {lam}: no candidates ({cat.status})")
    if args.out:
        write_json(args.out, {"lam": str(lam), "dim": args.dim, "status": cat.status, "semi_decision": cat.semi_decision, "candidates": [sg.candidate_to_json_obj(c) for c in cat.candidates]})
    return EXIT_OK if ok else EXIT_AUDIT


def cmd_heleshaw(args) -> int:
    with open(args.config) as fh:
        obj = json.load(fh)
    if "schema" in obj:
        cfg = CampaignConfig.from_obj(obj)
        if cfg.family is None:
            raise ConfigInvalid(["config.family: missing"])
        fcfg = cfg.family
    else:
        fcfg = CampaignConfig.from_obj({"schema": "lab/campaign-1", "modules": ["heleshaw"], "family": obj}).family
    fam, t0 = run_family(fcfg)
    st = hs.detect_singular_times(fam, fcfg["detect"]["kappa"], fcfg["detect"]["tau"], fcfg["detect"]["radii_cells"], fcfg["detect"]["stationary_tol"], strict=False)
    out = st.to_json_obj()
    ok = not st.violations
    if t0 is not None:
        cl = fcfg["cleaning"]
        audit = hs.cleaning_audit(fam, cl["center"], t0, cl["k"], cl["R"])
        out["cleaning"] = {"t0": t0, "C0": audit.C0, "exponent": audit.exponent}
        lo, hi = cl["exponent_band"]
        ok &= audit.passed and audit.exponent is not None and lo <= audit.exponent <= hi
        print(f"t0 {t0:.9g} C0 {audit.C0:.4g} exponent {audit.exponent}")
    write_json(args.out, out)
    if args.csv:
        st.write_csv(args.csv)
    print(f"{len(st.records)} singular records, {len(st.violations)} graph violations")
    return EXIT_OK if ok else EXIT_AUDIT


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    m = run(cfg, args.out)
    sys.stdout.write(report(m))
    return EXIT_OK if m["status"] == "pass" else EXIT_AUDIT


def cmd_report(args) -> int:
    m = load_manifest(args.manifest)
    sys.stdout.write(report(m))
    return EXIT_OK if all(a["passed"] for a in (m.get("audits") or {}).values()) else EXIT_AUDIT


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="lab", description="Obstacle-problem singular set laboratory.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ansatz", help="build the exact Ansatz family")
    p.add_argument("--dim", type=int, required=True)
    p.add_argument("--order", type=int, required=True)
    p.add_argument("--nu", type=int, default=None, help="1-based axis of the normal (default: last)")
    p.add_argument("--sign", type=int, choices=(1, -1), default=1)
    for j in range(3, 11):
        p.add_argument(f"--p{j}-file", default=None, help=f"degree-{j} harmonic polynomial (text or JSON)" if j == 3 else argparse.SUPPRESS)
    p.add_argument("--p", action="append", help="inline p_3, p_4, ... in order")
    p.add_argument("--rhs-taylor-file", default=None, help='JSON {"center": [...], "F": poly}')
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ansatz)

    p = sub.add_parser("solve", help="solve a configured obstacle problem")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--f-out", default=None)
    p.add_argument("--contact-csv", default=None)
    p.add_argument("--kappa", type=float, default=10.0)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("freq", help="frequency profile of u - P_k")
    p.add_argument("--u", required=True)
    p.add_argument("--family", required=True)
    p.add_argument("--center", type=float, nargs="+", required=True)
    p.add_argument("--gamma", type=float, default=None)
    p.add_argument("--lam", type=float, default=None)
    p.add_argument("--eps", type=float, default=0.5)
    p.add_argument("--r-min-cells", type=float, default=8.0)
    p.add_argument("--r-max", type=float, default=None)
    p.add_argument("--drift-tol", type=float, default=1e-6)
    p.add_argument("--out", required=True)
    p.add_argument("--svg", default=None)
    p.set_defaults(func=cmd_freq)

    p = sub.add_parser("blowup", help="stratum report at one point")
    p.add_argument("--u", required=True)
    p.add_argument("--f", default=None)
    p.add_argument("--center", type=float, nargs="+", required=True)
    p.add_argument("--maxk", type=int, default=3)
    p.add_argument("--out", required=True)
    p.add_argument("--lambda-csv", default=None)
    p.set_defaults(func=cmd_blowup)

    p = sub.add_parser("signorini", help="homogeneous thin-obstacle solutions")
    p.add_argument("action", choices=("catalog",))
    p.add_argument("--lambda", dest="lam", required=True)
    p.add_argument("--dim", type=int, default=2)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_signorini)

    p = sub.add_parser("heleshaw", help="monotone family, singular times and cleaning")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--csv", default=None)
    p.set_defaults(func=cmd_heleshaw)

    p = sub.add_parser("run", help="run a campaign config")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("report", help="summarize a manifest")
    p.add_argument("manifest")
    p.set_defaults(func=cmd_report)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        lab_threads()
        return args.func(args)
    except ConfigInvalid as exc:
        for e in exc.errors:
            print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (an.AnsatzError, ValueError) as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, ManifestMissing) as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ob.ObstacleError, bu.BlowupError, hs.GraphViolation) as exc:
        print(f"audit failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_AUDIT


if __name__ == "__main__":
    sys.exit(main())
