"""Command-line entry point: ``qeflow {catalog,verify,qe,flow}``.

Every command emits a report whose ``checks`` list pairs each residual with its
tolerance.  The exit status is computed from that same list, so a report and its
exit code can never disagree.
"""

import argparse
import csv
import io as _io
import math
import os
import sys
import time
from dataclasses import asdict, dataclass, fields, replace

import numpy as np

from . import io as qio
from .convergence import fitted_order, pairwise_orders
from .curvature import (
    CurvatureOperator,
    bianchi_project,
    q_of,
    scal_of,
    sharp,
    sharp_bruteforce,
    trace_identity_residuals,
)
from .flow import curvature_evolution_residual, flow_einstein, flow_product_spheres, residual_series
from .model_spaces import einstein_identity_residual, parse_model_space, space_form_operator
from .profile import ProfileError, build_profile, round_sphere
from .quasi_einstein import (
    INF,
    InducedHError,
    cf_predicate,
    weighted_bochner_residual,
    h_exp,
    h_log,
    h_power,
    h_trig,
    induced_h,
    integral_identity_report,
    mu0_of,
    qe_residual,
    trace_residual,
)
from .solver import SolverError, solve_qe_profile

EXIT_OK = 0
EXIT_TOLERANCE = 1
EXIT_USAGE = 2
EXIT_S_FLOOR = 3
EXIT_TOPOLOGY = 4
EXIT_DIVERGENCE = 5

TOL_ENV = "QEFLOW_TOLERANCES"
DEFAULT_R_MAX = 2.0

DEFAULT_CATALOG = (
    *(f"sphere:n={n},k=1" for n in range(3, 9)),
    *(f"hyperbolic:n={n},k=1" for n in range(3, 9)),
    "flat:n=4",
    "product:sphere(2,1)xsphere(2,1)",
    "product:sphere(3,1)xsphere(3,1)",
    "product:hyperbolic(2,1)xhyperbolic(2,1)",
)


class TopologyMismatch(ValueError):
    pass


@dataclass(frozen=True)
class Tolerances:
    algebra: float = 1e-10
    sharp: float = 1e-12
    integral: float = 1e-8
    compat: float = 1e-6
    s_floor: float = 1e-6
    cert: float = 1e-6
    bochner: float = 1e-5
    flow: float = 1e-6
    closed_form: float = 1e-8
    order: float = 1.8
    order_floor: float = 1e-9

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if not (isinstance(v, (int, float)) and v > 0 and math.isfinite(v)):
                raise ValueError(f"tolerance {f.name} must be a positive finite number")

    @classmethod
    def from_env(cls, environ=None):
        """Read ``key=value`` pairs (comma separated) from ``QEFLOW_TOLERANCES``."""
        text = (os.environ if environ is None else environ).get(TOL_ENV, "").strip()
        if not text:
            return cls()
        known = {f.name for f in fields(cls)}
        vals = {}
        for item in filter(None, (s.strip() for s in text.split(","))):
            key, eq, val = item.partition("=")
            key = key.strip().replace("-", "_")
            if not eq or key not in known:
                raise ValueError(f"{TOL_ENV}: unknown entry {item!r}")
            try:
                vals[key] = float(val)
            except ValueError:
                raise ValueError(f"{TOL_ENV}: {key} is not a number") from None
        return cls(**vals)


class Report:
    def __init__(self, command, tolerances):
        self.command = command
        self.tolerances = tolerances
        self.checks = []
        self.info = {}

    def check(self, name, value, tol, relation="<="):
        value = float(value)
        if relation == "<=":
            ok = math.isfinite(value) and value <= tol
        elif relation == ">=":
            ok = math.isfinite(value) and value >= tol
        else:
            raise ValueError(relation)
        self.checks.append({"name": name, "value": value, "tol": float(tol), "relation": relation, "pass": ok})
        return ok

    def require(self, name, ok):
        """Boolean check, recorded as 0/1 against ``== 1``."""
        self.checks.append({"name": name, "value": float(bool(ok)), "tol": 1.0, "relation": "==", "pass": bool(ok)})
        return ok

    @property
    def passed(self):
        return all(c["pass"] for c in self.checks)

    @property
    def exit_code(self):
        return EXIT_OK if self.passed else EXIT_TOLERANCE

    def to_json(self):
        return {
            "command": self.command,
            "passed": self.passed,
            "exit_code": self.exit_code,
            "tolerances": asdict(self.tolerances),
            "checks": self.checks,
            "failed": [c["name"] for c in self.checks if not c["pass"]],
            **self.info,
        }

    def render(self, fmt):
        if fmt == "json":
            return qio.dumps(self.to_json())
        if fmt == "csv":
            buf = _io.StringIO()
            w = csv.writer(buf)
            w.writerow(["name", "value", "relation", "tol", "pass"])
            for c in self.checks:
                w.writerow([c["name"], repr(c["value"]), c["relation"], repr(c["tol"]), int(c["pass"])])
            return buf.getvalue().rstrip("\n")
        lines = [f"{self.command}: {'PASS' if self.passed else 'FAIL'}"]
        for c in self.checks:
            mark = "ok  " if c["pass"] else "FAIL"
            lines.append(f"  [{mark}] {c['name']}: {c['value']:.3e} {c['relation']} {c['tol']:.3e}")
        for k, v in self.info.items():
            if not isinstance(v, (dict, list)):
                lines.append(f"  {k}: {v}")
        return "\n".join(lines)


# ---- helpers ---------------------------------------------------------------


def _emit(report, args):
    text = report.render(args.format)
    if args.report:
        with open(args.report, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)
    return report.exit_code


def _write_text(text, path):
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(path, "w") as fh:
            fh.write(text)


def _max_masked(x, mask):
    x = np.asarray(x, dtype=float)
    return float(np.max(np.abs(x[mask])))


def _subsample_levels(geom, min_pts=16, count=3):
    """The input grid and its every-other-point subsamples (same function, coarser h)."""
    levels = [geom]
    g = geom
    while len(levels) < count and (g.r.size - 1) % 2 == 0 and (g.r.size - 1) // 2 + 1 >= min_pts:
        g = build_profile(g.n, g.r[::2], g.phi[::2], g.f[::2], g.topology, g.order)
        levels.append(g)
    return levels[::-1]


def _orders(hs, errs):
    o = pairwise_orders(hs, errs)
    return [None if np.isnan(x) else float(x) for x in o], fitted_order(hs, errs)


def _check_order(report, name, hs, errs):
    """Record the observed orders; enforce the last one unless the residual is at roundoff level."""
    orders, fit = _orders(hs, errs)
    report.info.setdefault("orders", {})[name] = {"h": hs, "residual": errs, "pairwise": orders, "fitted": fit}
    if len(errs) < 2:
        return
    if errs[-1] <= report.tolerances.order_floor:
        report.info["orders"][name]["order_enforced"] = False
        return
    report.check(f"{name}_order", orders[-1] if orders[-1] is not None else float("nan"), report.tolerances.order, ">=")


def _load(args):
    return qio.load_structure(args.input, order=args.order, lam=args.lam, m=args.m)


def _h_field(q, spec, a, k, b, s_floor):
    g = q.geom
    spec = spec.replace(" ", "")
    if spec == "induced":
        return induced_h(g, s_floor)
    try:
        return float(spec)
    except ValueError:
        pass
    f = g.f
    if spec == "a*f^k":
        return h_power(f, a, k)
    if spec == "a*exp(f^k)":
        return h_exp(f, a, k, q.lam)
    if spec == "a*log(f^k)":
        return h_log(f, a, k)
    if spec == "a*sin(f^k)+b*cos(f^k)":
        return h_trig(f, a, b, k, q.lam)
    raise ValueError(
        f"unknown h {spec!r}; use induced, a number, a*f^k, a*exp(f^k), a*log(f^k) or a*sin(f^k)+b*cos(f^k)"
    )


def _random_symmetric(rng, n):
    nb = n * (n - 1) // 2
    a = rng.standard_normal((nb, nb))
    return CurvatureOperator(n, 0.5 * (a + a.T))


# ---- catalog -----------------------------------------------------------------


def cmd_catalog(args, tol):
    rep = Report("catalog", tol)
    names = args.space or list(DEFAULT_CATALOG)
    rows = []
    for name in names:
        spec = parse_model_space(name)
        R = spec.operator()
        row = {
            "name": spec.name(),
            "dim": spec.dim,
            "symmetric": spec.symmetric,
            "einstein": spec.is_einstein,
            "einstein_constant": spec.einstein_constant,
            "scalar_curvature_operator": scal_of(R),
        }
        if args.matrix:
            row["matrix"] = R.matrix
        rows.append(row)
    rep.info["spaces"] = rows
    return _emit(rep, args)


# ---- verify ------------------------------------------------------------------


def verify_einstein_identity(args, tol):
    rep = Report("verify einstein-identity", tol)
    names = args.space or list(DEFAULT_CATALOG)
    for name in names:
        spec = parse_model_space(name)
        rep.check(f"{spec.name()}", einstein_identity_residual(spec), tol.algebra)
    return rep


def verify_sharp(args, tol):
    rep = Report("verify sharp", tol)
    rng = np.random.default_rng(args.seed)
    ns = args.n or [3, 4, 5, 6]
    timings = {}
    for n in ns:
        if n < 2:
            raise ValueError("n must be >= 2")
        I = CurvatureOperator.identity(n)
        rep.check(f"n={n} Id#Id-(n-2)Id", np.max(np.abs(sharp(I, I).matrix - (n - 2) * I.matrix)), tol.sharp)
        worst = 0.0
        worst_zero = 0.0
        t_fast = t_slow = 0.0
        for _ in range(args.samples):
            A, B = _random_symmetric(rng, n), _random_symmetric(rng, n)
            t0 = time.perf_counter()
            fast = sharp(A, B).matrix
            t1 = time.perf_counter()
            slow = sharp_bruteforce(A, B).matrix
            t2 = time.perf_counter()
            t_fast += t1 - t0
            t_slow += t2 - t1
            worst = max(worst, float(np.max(np.abs(fast - slow))))
            worst_zero = max(worst_zero, float(np.max(np.abs(fast))))
        rep.check(f"n={n} optimized-vs-bruteforce", worst, tol.sharp)
        if n == 2:
            rep.check("n=2 sharp vanishes", worst_zero, tol.sharp)
        timings[str(n)] = {"optimized_s": t_fast, "bruteforce_s": t_slow,
                           "speedup": t_slow / t_fast if t_fast > 0 else None}
    rep.info["samples"] = args.samples
    rep.info["timings"] = timings
    return rep


def verify_trace_identities(args, tol):
    rep = Report("verify trace-identities", tol)
    ops = []
    if args.input:
        for path in args.input:
            R = qio.load_operator(path)
            ops.append((path, R))
    else:
        rng = np.random.default_rng(args.seed)
        for n in args.n or [3, 4, 5]:
            for i in range(args.samples):
                ops.append((f"n={n}#{i}", bianchi_project(_random_symmetric(rng, n))))
    worst = {}
    for label, R in ops:
        res = trace_identity_residuals(R)
        scale = max(R.norm() ** 2, 1e-300)
        key = label.split("#")[0]
        w = worst.setdefault(key, [0.0, 0.0])
        w[0] = max(w[0], res.scal / scale)
        w[1] = max(w[1], res.ricci / scale)
    for key, (s, r) in worst.items():
        rep.check(f"{key} scal(Q)=|Ric|^2", s, tol.algebra)
        rep.check(f"{key} Ric(Q)", r, tol.algebra)
    # factor audit: conventions behind the numbers above
    I3 = CurvatureOperator.identity(3)
    rep.info["factor_audit"] = {
        "tensor_over_operator": 2.0,
        "unit_sphere_operator_eigenvalue": 2.0,
        "sharp_identity_constant_n3": float(sharp(I3, I3).matrix[0, 0]),
        "scal_operator_unit_S3": scal_of(space_form_operator(3, 1.0)),
        "scal_tensor_unit_S3": scal_of(space_form_operator(3, 1.0), "tensor"),
    }
    return rep


def verify_bochner(args, tol):
    rep = Report("verify bochner", tol)
    if args.input:
        if len(args.input) != 1:
            raise ValueError("bochner takes a single --input profile")
        q = qio.load_structure(args.input[0], order=args.order, lam=0.0 if args.lam is None else args.lam, m=args.m)
        levels = _subsample_levels(q.geom)
        qs = [replace(q, geom=g) for g in levels]
        rep.info["input"] = args.input[0]
    else:
        levels = [round_sphere(3, N, f=np.cos, order=args.order) for N in args.npts]
        qs = None
        rep.info["input"] = "round S^3, f = cos r"
    hs = [float(g.h) for g in levels]
    errs = [float(np.nanmax(g.bochner_residual())) for g in levels]
    rep.info["npts"] = [int(g.r.size) for g in levels]
    rep.check("bochner_max", errs[-1], tol.bochner)
    _check_order(rep, "bochner", hs, errs)
    if qs is not None and (args.lam is not None or _has_lambda(args.input[0])):
        cs = [float(np.nanmax(weighted_bochner_residual(qq))) for qq in qs]
        rep.check("weighted_bochner_max", cs[-1], tol.bochner)
        _check_order(rep, "weighted_bochner", hs, cs)
    return rep


def _has_lambda(path):
    try:
        return "lambda" in qio.read_json(path)
    except qio.SchemaError:
        return False


def verify_flow_evolution(args, tol):
    rep = Report("verify flow-evolution", tol)
    errs, dts = [], [2 * args.dt, args.dt]
    for dt in dts:
        tr = flow_product_spheres(args.p, args.a0, args.q, args.b0, args.T, dt)
        errs.append(curvature_evolution_residual(tr))
    exact = np.column_stack([args.a0 - 2 * (args.p - 1) * tr.times, args.b0 - 2 * (args.q - 1) * tr.times])
    rep.check("radii_closed_form", np.max(np.abs(tr.alphas - exact)), tol.closed_form)
    rep.check("evolution_residual", errs[-1], tol.flow)
    _check_order(rep, "evolution", dts, errs)
    rep.info.update(blowup=tr.blowup, blowup_time=tr.blowup_time, dt=args.dt, T=args.T,
                    steps=int(len(tr.times) - 1))
    return rep


VERIFY = {
    "einstein-identity": verify_einstein_identity,
    "sharp": verify_sharp,
    "trace-identities": verify_trace_identities,
    "bochner": verify_bochner,
    "flow-evolution": verify_flow_evolution,
}


def cmd_verify(args, tol):
    return _emit(VERIFY[args.suite](args, tol), args)


# ---- qe ----------------------------------------------------------------------


def _qe_checks(rep, q, tol):
    g = q.geom
    mask = g.margin_mask(1)
    res = qe_residual(q)
    rep.check("qe_residual_max", max(_max_masked(res.rad, mask), _max_masked(res.sph, mask)), tol.cert)
    rep.info["trace_residual_max"] = _max_masked(trace_residual(q), mask)
    rep.info["weighted_bochner_residual_max"] = float(np.nanmax(weighted_bochner_residual(q)))
    if q.m != INF:
        mean, dev = mu0_of(q)
        rep.info["mu0"] = mean
        rep.check("mu0_variation", dev, tol.cert)
    rep.info.update(n=g.n, m="inf" if q.m == INF else q.m, lam=q.lam, npts=int(g.r.size),
                    h=float(g.h), order=g.order, topology=g.topology)


def qe_solve(args, tol):
    rep = Report("qe solve", tol)
    r_max = args.r_max
    if args.target == "interval" and r_max is None:
        r_max = DEFAULT_R_MAX
    q = solve_qe_profile(args.n, args.m, args.lam, r_max=r_max, target=args.target,
                         f2_0=args.f2_0, npts=args.npts, order=args.order)
    cert = q.certificate
    cert_json = {k: v for k, v in cert.to_json().items() if k != "solve"}
    info = cert.solve
    rep.check("certificate_residual", cert.max_residual, tol.cert)
    if not cert.floor_limited:
        rep.check("certificate_order", cert.order, tol.order, ">=")
    _qe_checks(rep, q, tol)
    rep.info["certificate"] = cert_json
    rep.info["params"] = info.params
    rep.info["iterations"] = info.iterations
    payload_extra = {"certificate": cert_json, "params": info.params}
    if args.output:
        qio.save_structure(q, args.output, payload_extra)
        rep.info["output"] = args.output
    else:
        rep.info["structure"] = {**qio.profile_payload(q), **payload_extra}
    return rep


def qe_residual_cmd(args, tol):
    rep = Report("qe residual", tol)
    q = _load(args)
    _qe_checks(rep, q, tol)
    levels = _subsample_levels(q.geom)
    if len(levels) > 1:
        errs = []
        for g in levels:
            qq = replace(q, geom=g)
            r = qe_residual(qq)
            mk = g.margin_mask(1)
            errs.append(max(_max_masked(r.rad, mk), _max_masked(r.sph, mk)))
        _check_order(rep, "qe_residual", [float(g.h) for g in levels], errs)
    return rep


def qe_rigidity(args, tol):
    rep = Report("qe rigidity", tol)
    q = _load(args)
    if q.geom.topology != "closed_sphere":
        raise TopologyMismatch(f"rigidity needs a closed_sphere profile, got {q.geom.topology}")
    h = _h_field(q, args.h, args.a, args.k, args.b, tol.s_floor)
    r = integral_identity_report(q, h, tol_integral=tol.integral, tol_compat=tol.compat, s_floor=tol.s_floor)
    rep.check("h_compatibility", r.compatibility_residual, tol.compat)
    rep.check("lhs_nonnegative", max(0.0, -r.lhs), tol.integral)
    rep.info["rigidity"] = r.to_json()
    rep.info["verdict"] = r.verdict
    rep.info["identity_gap"] = abs(r.lhs - r.rhs_total)
    rep.info.update(npts=r.npts, h=r.h_grid, lam=q.lam, m="inf" if q.m == INF else q.m)
    return rep


def qe_cf_check(args, tol):
    rep = Report("qe cf-check", tol)
    q = _load(args)
    h = _h_field(q, args.h, args.a, args.k, args.b, tol.s_floor)
    v = cf_predicate(q, h)
    rep.info["verdict"] = "rigid-by-CF" if v.verdict == "rigid" else "not-applicable"
    rep.info["cf"] = asdict(v)
    rep.info["h"] = {"family": args.h, "a": args.a, "k": args.k, "b": args.b}
    if v.verdict == "rigid":
        rep.require("h_max<=2lambda", bool(v.bound_satisfied))
    return rep


QE = {"solve": qe_solve, "residual": qe_residual_cmd, "rigidity": qe_rigidity, "cf-check": qe_cf_check}


def cmd_qe(args, tol):
    return _emit(QE[args.sub](args, tol), args)


# ---- flow --------------------------------------------------------------------


def flow_einstein_cmd(args, tol):
    rep = Report("flow einstein", tol)
    tr = flow_einstein(args.lam, args.T, args.dt, args.n)
    exact = 1 - 2 * args.lam * tr.times
    rep.check("alpha_closed_form", np.max(np.abs(tr.alphas[:, 0] - exact)), tol.closed_form)
    if args.lam > 0 and args.T >= 1 / (2 * args.lam):
        rep.require("blowup_detected", tr.blowup)
        if tr.blowup:
            rep.check("blowup_time_error", abs(tr.blowup_time - 1 / (2 * args.lam)), tol.closed_form)
    _flow_outputs(rep, tr, args, tol)
    return rep


def flow_product_cmd(args, tol):
    rep = Report("flow product-spheres", tol)
    tr = flow_product_spheres(args.p, args.a0, args.q, args.b0, args.T, args.dt)
    exact = np.column_stack([args.a0 - 2 * (args.p - 1) * tr.times, args.b0 - 2 * (args.q - 1) * tr.times])
    rep.check("radii_closed_form", np.max(np.abs(tr.alphas - exact)), tol.closed_form)
    if tr.blowup:
        t_exact = min(args.a0 / (2 * (args.p - 1)), args.b0 / (2 * (args.q - 1)))
        rep.check("blowup_time_error", abs(tr.blowup_time - t_exact), tol.closed_form)
    _flow_outputs(rep, tr, args, tol)
    return rep


def _flow_outputs(rep, tr, args, tol):
    rep.info.update(blowup=tr.blowup, blowup_time=tr.blowup_time, dt=tr.dt, T=args.T,
                    steps=int(len(tr.times) - 1), final_alpha=tr.alphas[-1])
    if getattr(args, "check_evolution", False):
        ts, rs = residual_series(tr)
        rep.check("evolution_residual", float(np.max(rs)), tol.flow)
        if args.residual_output:
            buf = _io.StringIO()
            w = csv.writer(buf)
            w.writerow(["t", "residual"])
            for t, r in zip(ts, rs):
                w.writerow([repr(float(t)), repr(float(r))])
            _write_text(buf.getvalue(), args.residual_output)
    if args.output:
        _write_text(tr.to_csv(), args.output)
        rep.info["trace_csv"] = args.output


FLOW = {"einstein": flow_einstein_cmd, "product-spheres": flow_product_cmd}


def cmd_flow(args, tol):
    return _emit(FLOW[args.sub](args, tol), args)


# ---- parser ------------------------------------------------------------------


def _positive_int(minimum):
    def conv(s):
        v = int(s)
        if v < minimum:
            raise argparse.ArgumentTypeError(f"must be >= {minimum}")
        return v

    return conv


def _positive_float(s):
    v = float(s)
    if not (v > 0 and math.isfinite(v)):
        raise argparse.ArgumentTypeError("must be a positive number")
    return v


def _nonneg_float(s):
    v = float(s)
    if not (v >= 0 and math.isfinite(v)):
        raise argparse.ArgumentTypeError("must be a nonnegative number")
    return v


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--format", choices=("json", "text", "csv"), default="json", help="report format")
    common.add_argument("--report", help="write the report here instead of stdout")
    common.add_argument("--tol", action="append", default=[], metavar="KEY=VALUE",
                        help=f"override a tolerance (also via {TOL_ENV})")

    p = argparse.ArgumentParser(prog="qeflow", description="Curvature operators, quasi-Einstein profiles and Ricci flow checks.")
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("catalog", parents=[common], help="list model spaces and their curvature data")
    c.add_argument("--space", action="append", help="model space name, e.g. sphere:n=5,k=1")
    c.add_argument("--matrix", action="store_true", help="include the operator matrix")
    c.set_defaults(func=cmd_catalog)

    v = sub.add_parser("verify", parents=[common], help="run an identity verification suite")
    v.add_argument("suite", choices=sorted(VERIFY))
    v.add_argument("--space", action="append")
    v.add_argument("--n", type=_positive_int(2), action="append")
    v.add_argument("--samples", type=_positive_int(1), default=100)
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--input", action="append", help="operator JSON (trace-identities) or profile JSON (bochner)")
    v.add_argument("--npts", type=_positive_int(16), nargs="+", default=[200, 400, 800])
    v.add_argument("--order", type=int, choices=(2, 4, 6), default=4)
    v.add_argument("--lambda", dest="lam", type=float)
    v.add_argument("--m")
    v.add_argument("--p", type=_positive_int(2), default=2)
    v.add_argument("--q", type=_positive_int(2), default=3)
    v.add_argument("--a0", type=_positive_float, default=1.0)
    v.add_argument("--b0", type=_positive_float, default=1.0)
    v.add_argument("--T", type=_nonneg_float, default=0.2)
    v.add_argument("--dt", type=_positive_float, default=2e-5)
    v.set_defaults(func=cmd_verify)

    q = sub.add_parser("qe", help="quasi-Einstein profiles")
    qsub = q.add_subparsers(dest="sub", required=True)
    s = qsub.add_parser("solve", parents=[common], help="solve for a profile structure")
    s.add_argument("--n", type=_positive_int(2), required=True)
    s.add_argument("--m", default="inf")
    s.add_argument("--lambda", dest="lam", type=float, required=True)
    s.add_argument("--target", choices=("closed", "interval"), default="closed")
    s.add_argument("--r-max", type=_positive_float, help=f"end of an interval target (default {DEFAULT_R_MAX:g})")
    s.add_argument("--f2-0", type=float, help="f''(0); chosen by shooting when omitted")
    s.add_argument("--npts", type=_positive_int(16), default=201)
    s.add_argument("--order", type=int, choices=(2, 4, 6), default=6)
    s.add_argument("--output", help="write the structure JSON here")
    for name in ("residual", "rigidity", "cf-check"):
        sp = qsub.add_parser(name, parents=[common])
        sp.add_argument("--input", required=True)
        sp.add_argument("--lambda", dest="lam", type=float, help="needed when the input is a bare profile")
        sp.add_argument("--m", help="defaults to the file's value, else inf")
        sp.add_argument("--order", type=int, choices=(2, 4, 6))
        if name != "residual":
            sp.add_argument("--h", default="induced" if name == "rigidity" else "a*f^k")
            sp.add_argument("--a", type=float, default=1.0)
            sp.add_argument("--k", type=float, default=1.0)
            sp.add_argument("--b", type=float, default=0.0)
    q.set_defaults(func=cmd_qe)

    f = sub.add_parser("flow", help="Ricci flow on products of spheres")
    fsub = f.add_subparsers(dest="sub", required=True)
    e = fsub.add_parser("einstein", parents=[common])
    e.add_argument("--lambda", dest="lam", type=float, required=True)
    e.add_argument("--n", type=_positive_int(2), default=3)
    ps = fsub.add_parser("product-spheres", parents=[common])
    ps.add_argument("--p", type=_positive_int(2), required=True)
    ps.add_argument("--q", type=_positive_int(2), required=True)
    ps.add_argument("--a0", type=_positive_float, default=1.0)
    ps.add_argument("--b0", type=_positive_float, default=1.0)
    ps.add_argument("--check-evolution", action="store_true")
    ps.add_argument("--residual-output", help="CSV of the evolution residual per time step")
    for sp, dt in ((e, 1e-3), (ps, 2e-5)):
        sp.add_argument("--T", type=_nonneg_float, required=True)
        sp.add_argument("--dt", type=_positive_float, default=dt)
        sp.add_argument("--output", help="trace CSV path ('-' for stdout)")
    f.set_defaults(func=cmd_flow)
    return p


def _tolerances(args):
    tol = Tolerances.from_env()
    over = {}
    for item in getattr(args, "tol", []) or []:
        key, eq, val = item.partition("=")
        key = key.strip().replace("-", "_")
        if not eq or key not in {f.name for f in fields(Tolerances)}:
            raise ValueError(f"--tol: unknown entry {item!r}")
        over[key] = float(val)
    return replace(tol, **over) if over else tol


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else EXIT_USAGE
    try:
        tol = _tolerances(args)
        return args.func(args, tol)
    except InducedHError as exc:
        print(f"qeflow: s_floor violation: {exc}", file=sys.stderr)
        return EXIT_S_FLOOR
    except TopologyMismatch as exc:
        print(f"qeflow: topology mismatch: {exc}", file=sys.stderr)
        return EXIT_TOPOLOGY
    except SolverError as exc:
        print(f"qeflow: solver divergence: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except (ValueError, ProfileError, qio.SchemaError) as exc:
        print(f"qeflow: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
