"""Quasi-Einstein structures ``Ric + Hess f - (1/m) df (x) df = lambda g`` on profiles.

``m`` is either a positive integer or ``math.inf``; at infinity every ``1/m``
term is exactly zero and ``exp(2f/m)`` is exactly one.
"""

import math
from dataclasses import dataclass, field, asdict

import numpy as np

from . import fd
from .profile import ProfileGeometry, SymField, build_profile

__all__ = [
    "INF",
    "parse_m",
    "inv_m",
    "QEStructure",
    "InducedHError",
    "qe_residual",
    "trace_residual",
    "mu0_of",
    "mu0_field",
    "induced_h",
    "traced_ci_residual",
    "scalar_identity_residual",
    "scalar_identity_residual_const",
    "weighted_bochner_residual",
    "soliton_trace_residuals",
    "rc_pointwise_residual",
    "rc_integral_terms",
    "RigidityReport",
    "integral_identity_report",
    "CFVerdict",
    "cf_predicate",
    "h_power",
    "h_exp",
    "h_log",
    "h_trig",
    "structure_to_json",
    "structure_from_json",
]

INF = math.inf
DEFAULT_S_FLOOR = 1e-6


def parse_m(m):
    """Normalize ``m`` to a positive ``int`` or ``math.inf``."""
    if isinstance(m, str):
        if m.strip().lower() in ("inf", "infinity", "oo"):
            return INF
        try:
            m = int(m)
        except ValueError:
            raise ValueError(f"m must be a positive integer or 'inf', got {m!r}") from None
    if isinstance(m, float) and math.isinf(m) and m > 0:
        return INF
    if isinstance(m, (bool, np.bool_)):
        raise ValueError("m must be a positive integer or infinity")
    if isinstance(m, (int, np.integer)) or (isinstance(m, float) and m.is_integer()):
        m = int(m)
        if m >= 1:
            return m
    raise ValueError(f"m must be a positive integer or infinity, got {m!r}")


def inv_m(m):
    return 0.0 if m == INF else 1.0 / m


@dataclass(frozen=True)
class QEStructure:
    """A profile geometry together with ``(m, lambda)``.

    ``certificate`` holds the solver's certification record when available.
    """

    geom: ProfileGeometry
    m: object
    lam: float
    certificate: object = None

    def __post_init__(self):
        object.__setattr__(self, "m", parse_m(self.m))
        object.__setattr__(self, "lam", float(self.lam))

    @property
    def n(self):
        return self.geom.n

    @property
    def certified(self):
        return bool(self.certificate is not None and self.certificate.certified)


class InducedHError(ValueError):
    """Scalar curvature too close to zero for the induced h field."""

    def __init__(self, points, s_floor):
        self.points = tuple(int(i) for i in points)
        self.s_floor = s_floor
        shown = ", ".join(map(str, self.points[:10]))
        more = "" if len(self.points) <= 10 else f" (+{len(self.points) - 10} more)"
        super().__init__(f"|s| < {s_floor:g} at grid points {shown}{more}")


def qe_residual(q):
    """``Ric + Hess f - (1/m) df(x)df - lambda g`` as radial/spherical components."""
    g = q.geom
    k = inv_m(q.m)
    return SymField(g.ric_rad + g.ddf - k * g.grad_f2 - q.lam, g.ric_sph + g.psi_df - q.lam, g.n)


def trace_residual(q):
    g = q.geom
    return g.s + g.lap_f - inv_m(q.m) * g.grad_f2 - q.lam * g.n


def mu0_field(q):
    if q.m == INF:
        raise ValueError("mu0 is defined for finite m only")
    g = q.geom
    m = q.m
    return -(g.lap_f - g.grad_f2 - m * q.lam) * np.exp(-2 * g.f / m) / m


def mu0_of(q, mask=None):
    """Mean of the pointwise ``mu0`` and its maximal deviation from the mean."""
    mu = mu0_field(q)
    if mask is None:
        mask = q.geom.margin_mask(1)
    vals = mu[mask]
    mean = float(np.mean(vals))
    return mean, float(np.max(np.abs(vals - mean)))


def induced_h(geom, s_floor=DEFAULT_S_FLOOR):
    """``h = (lap s + 2|Ric|^2)/s``: the traced curvature identity then holds exactly."""
    s = geom.s
    bad = np.nonzero(np.abs(s) < s_floor)[0]
    if bad.size:
        raise InducedHError(bad, s_floor)
    return (geom.laplacian(s) + 2 * geom.ric_norm2) / s


def traced_ci_residual(geom, h):
    """``lap s + 2|Ric|^2 - h s`` (tensor normalization)."""
    h = np.broadcast_to(np.asarray(h, dtype=fd.DTYPE), geom.r.shape)
    return geom.laplacian(geom.s) + 2 * geom.ric_norm2 - h * geom.s


def _scalar_identity_rhs(q):
    g = q.geom
    k = inv_m(q.m)
    return (
        4 * k * g.ric_rad * g.grad_f2
        + 2 * k * (g.hess_norm2 - g.lap_f ** 2)
        + g.df * g.d1(g.s)
    )


def scalar_identity_residual(q, h):
    """``|(h - 2 lambda) s - RHS|`` with RHS built from Ricci, Hessian and ``<df, ds>``."""
    g = q.geom
    h = np.broadcast_to(np.asarray(h, dtype=fd.DTYPE), g.r.shape)
    return np.abs((h - 2 * q.lam) * g.s - _scalar_identity_rhs(q))


def scalar_identity_residual_const(q, mu):
    return scalar_identity_residual(q, np.full(q.geom.r.shape, mu, dtype=fd.DTYPE))


def weighted_bochner_residual(q):
    """``|1/2 lap|df|^2 - |Hess f|^2 + Ric(df, df) - (2/m)|df|^2 lap f|``."""
    g = q.geom
    lhs = 0.5 * g.laplacian(g.grad_f2)
    rhs = g.hess_norm2 - g.ric_rad * g.grad_f2 + 2 * inv_m(q.m) * g.grad_f2 * g.lap_f
    return np.abs(lhs - rhs)


def soliton_trace_residuals(q, mu):
    """The two traced identities of the soliton case.

    Returns ``(lap s - <df, ds> + 2|Ric|^2 - 2 lambda s, lap s + 2|Ric|^2 - mu s)``.
    """
    g = q.geom
    lap_s = g.laplacian(g.s)
    first = lap_s - g.df * g.d1(g.s) + 2 * g.ric_norm2 - 2 * q.lam * g.s
    second = lap_s + 2 * g.ric_norm2 - mu * g.s
    return first, second


def _hess_minus(q):
    g = q.geom
    return SymField(g.ddf - inv_m(q.m) * g.grad_f2, g.psi_df, g.n)


def rc_pointwise_residual(q, mu):
    """Left-hand side of the scalar identity forced by the constant-``mu`` curvature identity."""
    g = q.geom
    lam, n, k = q.lam, g.n, inv_m(q.m)
    return (
        g.laplacian(g.s)
        + lam * (2 * lam - mu) * n
        + (mu - 4 * lam) * g.lap_f
        + k * (4 * lam - mu) * g.grad_f2
        + 2 * _hess_minus(q).norm2()
    )


def rc_integral_terms(q, mu):
    """Integral of :func:`rc_pointwise_residual` and the divergence-free prediction.

    On a closed profile the Laplacian terms integrate to zero, leaving
    ``lam (2lam - mu) n Vol + (1/m)(4lam - mu) int|df|^2 + 2 int|Hess f - df(x)df/m|^2``.
    """
    g = q.geom
    lam, n, k = q.lam, g.n, inv_m(q.m)
    integral = g.integrate(rc_pointwise_residual(q, mu))
    offset = lam * (2 * lam - mu) * n * g.volume()
    grad_term = k * (4 * lam - mu) * g.integrate(g.grad_f2)
    hess_term = 2 * g.integrate(_hess_minus(q).norm2())
    return {
        "integral": integral,
        "offset": offset,
        "gradient_term": grad_term,
        "hessian_term": hess_term,
        "predicted": offset + grad_term + hess_term,
    }


@dataclass
class RigidityReport:
    lhs: float
    ricci_traceless: float
    gradient_quartic: float
    gradient_lambda: float
    hessian: float
    verdict: str
    lhs_nonnegative: bool
    h_compatible: bool
    compatibility_residual: float
    f_oscillation: float
    tol_integral: float
    tol_compat: float
    npts: int
    h_grid: float
    extras: dict = field(default_factory=dict)

    @property
    def rhs_terms(self):
        return {
            "ricci_traceless": self.ricci_traceless,
            "gradient_quartic": self.gradient_quartic,
            "gradient_lambda": self.gradient_lambda,
            "hessian": self.hessian,
        }

    @property
    def rhs_total(self):
        return sum(self.rhs_terms.values())

    def to_json(self):
        d = asdict(self)
        d["rhs_total"] = self.rhs_total
        return d


def integral_identity_report(q, h=None, tol_integral=1e-8, tol_compat=1e-6, s_floor=DEFAULT_S_FLOOR):
    """Integral rigidity test on a closed profile.

    ``h=None`` uses :func:`induced_h`.  The verdict is ``inconclusive`` when ``h``
    does not satisfy the traced curvature identity on this metric, ``rigid`` when
    the left side and every right-hand term vanish to ``tol_integral``, and
    ``non_rigid`` otherwise.
    """
    g = q.geom
    if g.topology != "closed_sphere":
        raise ValueError("the integral identity needs a closed profile (divergence theorem)")
    if h is None:
        h = induced_h(g, s_floor)
    h = np.broadcast_to(np.asarray(h, dtype=fd.DTYPE), g.r.shape)
    n, lam, k = g.n, q.lam, inv_m(q.m)
    lhs = g.integrate((h - 2 * lam) * g.s)
    traceless = SymField(g.ric_rad - g.s / n, g.ric_sph - g.s / n, n)
    terms = dict(
        ricci_traceless=2 * g.integrate(traceless.norm2()),
        gradient_quartic=2 * k * k / n * g.integrate(g.grad_f2 ** 2),
        gradient_lambda=2 * lam * k * g.integrate(g.grad_f2),
        hessian=4 / n * g.integrate(g.hess_norm2),
    )
    scale = max(1.0, float(np.max(np.abs(h * g.s))))
    compat = float(np.max(np.abs(traced_ci_residual(g, h)))) / scale
    ok = compat <= tol_compat
    if not ok:
        verdict = "inconclusive"
    elif abs(lhs) <= tol_integral and all(abs(v) <= tol_integral for v in terms.values()):
        verdict = "rigid"
    else:
        verdict = "non_rigid"
    f = np.asarray(g.f, dtype=float)
    return RigidityReport(
        lhs=lhs,
        verdict=verdict,
        lhs_nonnegative=lhs >= -tol_integral,
        h_compatible=ok,
        compatibility_residual=compat,
        f_oscillation=float(np.max(np.abs(f - f.mean()))),
        tol_integral=tol_integral,
        tol_compat=tol_compat,
        npts=int(g.r.size),
        h_grid=float(g.h),
        **terms,
    )


@dataclass(frozen=True)
class CFVerdict:
    verdict: str
    h_max: float
    bound: float
    bound_satisfied: object
    maxima: tuple
    coinciding: tuple


def _is_local_extremum(f, i, left_even, right_even, tol):
    last = f.size - 1
    if i == 0:
        if not left_even:
            return False
        lo = hi = f[1]
    elif i == last:
        if not right_even:
            return False
        lo = hi = f[-2]
    else:
        lo, hi = f[i - 1], f[i + 1]
    return (f[i] >= lo - tol and f[i] >= hi - tol) or (f[i] <= lo + tol and f[i] <= hi + tol)


def cf_predicate(q, h, band=1e-9, tol_f=1e-12):
    """Check whether a global maximum of ``h`` is a local extremum of ``f``.

    Returns ``rigid`` when it is (together with the bound ``h_max <= 2 lambda``
    that the hypotheses imply) and ``not_applicable`` otherwise.
    """
    g = q.geom
    h = np.asarray(np.broadcast_to(np.asarray(h, dtype=float), g.r.shape), dtype=float)
    f = np.asarray(g.f, dtype=float)
    if not np.all(np.isfinite(h)):
        raise ValueError("h must be finite")
    h_max = float(np.max(h))
    scale = max(1.0, abs(h_max))
    maxima = tuple(int(i) for i in np.nonzero(h >= h_max - band * scale)[0])
    f_tol = tol_f * max(1.0, float(np.max(np.abs(f))))
    coinciding = tuple(
        i for i in maxima if _is_local_extremum(f, i, g.left_pole, g.right_pole, f_tol)
    )
    bound = 2 * q.lam
    if coinciding:
        return CFVerdict("rigid", h_max, bound, h_max <= bound + band * scale, maxima, coinciding)
    return CFVerdict("not_applicable", h_max, bound, None, maxima, ())


def _f_pow(f, k):
    f = np.asarray(f, dtype=fd.DTYPE)
    k = float(k)
    if not (k.is_integer() and k >= 0) and np.any(f <= 0):
        raise ValueError("f^k needs f > 0 for this exponent")
    return f ** k


def h_power(f, a, k):
    return a * _f_pow(f, k)


def h_exp(f, a, k, lam):
    if a > 2 * lam:
        raise ValueError("the exponential family needs a <= 2 lambda")
    return a * np.exp(_f_pow(f, k))


def h_log(f, a, k):
    f = np.asarray(f, dtype=fd.DTYPE)
    if np.any(f <= 0):
        raise ValueError("log(f^k) needs f > 0")
    return a * k * np.log(f)


def h_trig(f, a, b, k, lam):
    if abs(a) + abs(b) > 2 * lam:
        raise ValueError("the trigonometric family needs |a| + |b| <= 2 lambda")
    fk = _f_pow(f, k)
    return a * np.sin(fk) + b * np.cos(fk)


def structure_to_json(q):
    d = q.geom.to_json()
    d["m"] = "inf" if q.m == INF else int(q.m)
    d["lambda"] = q.lam
    d["order"] = q.geom.order
    return d


def structure_from_json(obj, order=None):
    try:
        geom = build_profile(
            obj["n"], obj["r"], obj["phi"], obj.get("f"), obj.get("topology", "interval"),
            order if order is not None else obj.get("order", 4),
        )
        return QEStructure(geom, obj["m"], obj["lambda"])
    except KeyError as exc:
        raise ValueError(f"QE structure JSON lacks field {exc}") from None
