"""Shooting solver for rotationally symmetric quasi-Einstein profiles.

With ``psi = phi'/phi`` the quasi-Einstein equation on ``dr^2 + phi^2 g_S`` reads

    phi'' = (n-2)(1 - phi'^2)/phi + phi' f' - lambda phi
    f''   = lambda + (n-1) phi''/phi + f'^2/m

A smooth pole has ``phi = r + O(r^3)`` and ``f = f(0) + (a/2) r^2 + O(r^4)``; the
free parameter is ``a = f''(0)`` (``f(0) = 0`` by gauge).  Near a pole the
solution is started from its power series.

Parameters are located with an adaptive Runge-Kutta integrator.  The returned
samples then come from a long-double Gragg-Bulirsch-Stoer pass whose steps land
on the grid and are converged to roundoff, so that finite differences of up to
fourth order see no integrator error.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import root, root_scalar

from . import fd
from .profile import build_profile, uniform_grid
from .quasi_einstein import INF, QEStructure, inv_m, parse_m, qe_residual

__all__ = [
    "SolverError",
    "SolverDivergence",
    "SingularProfileError",
    "Certificate",
    "pole_series",
    "solve_qe_profile",
    "sample_profile",
    "certify",
    "CERT_RESIDUAL",
    "CERT_ORDER",
]

CERT_RESIDUAL = 1e-6
CERT_ORDER = 1.8
# residuals below this are treated as converged and exempt from the order test
CERT_FLOOR = 1e-12
SERIES_TERMS = 12
BS_LEVELS = 9
STEP_TOL = 4 * float(np.finfo(fd.DTYPE).eps)


class SolverError(RuntimeError):
    pass


class SolverDivergence(SolverError):
    def __init__(self, message, trace=()):
        super().__init__(message)
        self.trace = list(trace)


class SingularProfileError(SolverError):
    pass


@dataclass
class Certificate:
    certified: bool
    max_residual: float
    coarse_residual: float
    order: object
    npts: int
    floor_limited: bool
    reason: str = ""
    solve: object = None

    def to_json(self):
        d = {k: v for k, v in self.__dict__.items() if k != "solve"}
        if self.solve is not None:
            d["solve"] = {
                "target": self.solve.target,
                "params": self.solve.params,
                "iterations": self.solve.iterations,
                "mismatch": self.solve.mismatch,
            }
        return d


@dataclass
class SolveInfo:
    target: str
    params: dict
    iterations: int
    mismatch: float
    trace: list = field(default_factory=list)


def _rhs_factory(n, lam, m):
    k = inv_m(m)

    def rhs(y):
        p, dp, f, df = y
        ddp = (n - 2) * (1 - dp * dp) / p + dp * df - lam * p
        ddf = lam + (n - 1) * ddp / p + k * df * df
        return ddp, ddf

    return rhs


def pole_series(n, lam, m, a, terms=SERIES_TERMS):
    """Odd coefficients of ``phi`` and even coefficients of ``f`` at a smooth pole.

    Returns ``(p, b)`` with ``phi = sum p[j] r^(2j+1)`` and ``f = sum b[j] r^(2j)``,
    ``p[0] = 1``, ``b[0] = 0``, ``b[1] = a/2``.
    """
    k = inv_m(parse_m(m))
    p = np.zeros(terms, dtype=fd.DTYPE)
    b = np.zeros(terms, dtype=fd.DTYPE)
    p[0] = 1
    b[1] = fd.DTYPE(a) / 2
    lam = fd.DTYPE(lam)

    def residuals(j):
        # coefficients of r^(2j) in E1 and r^(2j-1) in E2
        P = np.polynomial.Polynomial(_interleave(p, odd=True))
        F = np.polynomial.Polynomial(_interleave(b, odd=False))
        dP, ddP, dF, ddF = P.deriv(), P.deriv(2), F.deriv(), F.deriv(2)
        e1 = -P * ddP + (n - 2) * (1 - dP * dP) + P * dP * dF - lam * P * P
        e2 = -(n - 1) * ddP + P * (ddF - k * dF * dF - lam)
        c1 = e1.coef
        c2 = e2.coef
        return (c1[2 * j] if c1.size > 2 * j else 0, c2[2 * j - 1] if c2.size > 2 * j - 1 else 0)

    p[1] = (fd.DTYPE(a) - lam) / (6 * (n - 1))
    for j in range(2, terms):
        base = np.array(residuals(j), dtype=fd.DTYPE)
        p[j] = 1
        col_p = np.array(residuals(j), dtype=fd.DTYPE) - base
        p[j] = 0
        b[j] = 1
        col_b = np.array(residuals(j), dtype=fd.DTYPE) - base
        b[j] = 0
        A = np.array([[col_p[0], col_b[0]], [col_p[1], col_b[1]]], dtype=float)
        sol = np.linalg.solve(A, -np.asarray(base, dtype=float))
        p[j], b[j] = sol
        # one refinement step in extended precision
        fix = np.array(residuals(j), dtype=fd.DTYPE)
        corr = np.linalg.solve(A, -np.asarray(fix, dtype=float))
        p[j] += corr[0]
        b[j] += corr[1]
    return p, b


def _interleave(c, odd):
    out = np.zeros(2 * c.size, dtype=fd.DTYPE)
    out[int(odd)::2] = c
    return out


def _series_state(p, b, r):
    r = np.asarray(r, dtype=fd.DTYPE)
    j = np.arange(p.size)
    rp = r[..., None] ** (2 * j + 1)
    rb = r[..., None] ** (2 * j)
    phi = rp @ p
    dphi = (r[..., None] ** (2 * j)) @ (p * (2 * j + 1))
    f = rb @ b
    with np.errstate(invalid="ignore", divide="ignore"):
        df = (np.where(j > 0, r[..., None] ** np.maximum(2 * j - 1, 0), 0)) @ (b * 2 * j)
    return phi, dphi, f, df


def _length_scale(lam, a, scale):
    return min(scale, 1.0 / math.sqrt(max(abs(lam), abs(a), 1e-12)))


def _series_radius(n, lam, m, a, scale, p=None, b=None):
    """Largest radius (up to a quarter length scale) where the truncated series is negligible."""
    if p is None:
        p, b = pole_series(n, lam, m, a)
    r = 0.25 * _length_scale(lam, a, scale)
    last = max(abs(float(p[-1])), abs(float(b[-1])))
    while r > 1e-3 * scale and last * r ** (2 * p.size - 2) > 1e-19 * r:
        r *= 0.8
    return r


def _shoot_adaptive(n, lam, m, a, r_end, events=True):
    """Float64 adaptive integration from the pole series to ``r_end``."""
    p, b = pole_series(n, lam, m, a)
    r_s = min(_series_radius(n, lam, m, a, r_end, p, b), 0.5 * r_end)
    y0 = [float(v) for v in _series_state(p, b, r_s)]
    rhs = _rhs_factory(n, lam, m)

    def fun(_r, y):
        ddp, ddf = rhs(y)
        return [y[1], ddp, y[3], ddf]

    def hit_zero(_r, y):
        return y[0] - 1e-9

    hit_zero.terminal = True
    hit_zero.direction = -1

    def blow(_r, y):
        return 1e8 - max(abs(y[1]), abs(y[3]))

    blow.terminal = True
    sol = solve_ivp(fun, (r_s, r_end), y0, method="RK45", rtol=1e-12, atol=1e-13,
                    events=[hit_zero, blow] if events else None)
    return sol


def _bs_step(F, y, H, tol, kmax=BS_LEVELS):
    """One Gragg-Bulirsch-Stoer step of length ``H``; ``None`` if not converged."""
    seq = [2 * (j + 1) for j in range(kmax)]
    rows = []
    scale = max(fd.DTYPE(1), np.max(np.abs(y)))
    for k, nk in enumerate(seq):
        hs = H / nk
        z0 = y
        z1 = y + hs * F(y)
        for _ in range(nk - 1):
            z0, z1 = z1, z0 + 2 * hs * F(z1)
        row = [(z0 + z1 + hs * F(z1)) / 2]
        for j in range(1, k + 1):
            ratio = fd.DTYPE(nk) / seq[k - j]
            row.append(row[j - 1] + (row[j - 1] - rows[k - 1][j - 1]) / (ratio * ratio - 1))
        rows.append(row)
        if k >= 2 and np.max(np.abs(row[k] - row[k - 1])) <= tol * scale:
            return row[k]
    return None


def _extrapolated_step(F, y, H, tol, depth=0):
    out = _bs_step(F, y, H, tol)
    if out is not None:
        return out
    if depth >= 12:
        raise SolverError("step extrapolation failed to converge")
    half = _extrapolated_step(F, y, H / 2, tol, depth + 1)
    return _extrapolated_step(F, half, H / 2, tol, depth + 1)


def _integrate_on_grid(n, lam, m, a, r):
    """Long-double extrapolated integration through grid points ``r`` (pole at ``r[0] = 0``)."""
    p, b = pole_series(n, lam, m, a)
    rhs = _rhs_factory(n, fd.DTYPE(lam), m)
    out = np.zeros((4, r.size), dtype=fd.DTYPE)
    h = r[1] - r[0]
    scale = float(r[-1] - r[0])
    r_s = _series_radius(n, lam, m, a, scale, p, b)
    k0 = max(1, int(np.searchsorted(r, fd.DTYPE(r_s), side="right")) - 1)
    series = _series_state(p, b, r[: k0 + 1])
    for i in range(4):
        out[i, : k0 + 1] = series[i]
    y = out[:, k0].copy()

    def F(y):
        ddp, ddf = rhs(y)
        return np.array([y[1], ddp, y[3], ddf], dtype=fd.DTYPE)

    for k in range(k0, r.size - 1):
        y = _extrapolated_step(F, y, h, STEP_TOL)
        if not (y[0] > 0 and np.all(np.isfinite(y))):
            raise SingularProfileError(f"phi reached zero or blew up near r = {float(r[k + 1]):.6g}")
        out[:, k + 1] = y
    return out


def _smooth_step(t):
    t = np.clip(t, 0, 1)
    with np.errstate(divide="ignore", over="ignore"):
        e0 = np.where(t > 0, np.exp(-1 / np.where(t > 0, t, 1)), 0)
        e1 = np.where(t < 1, np.exp(-1 / np.where(t < 1, 1 - t, 1)), 0)
    return e0 / (e0 + e1)


def sample_profile(n, lam, m, params, npts, target):
    """Long-double samples ``(r, phi, f)`` of the solution described by ``params``."""
    m = parse_m(m)
    if target == "interval":
        r = uniform_grid(0, params["r_max"], npts)
        y = _integrate_on_grid(n, lam, m, params["a"], r)
        return r, y[0], y[2]
    L = fd.DTYPE(params["L"])
    r = uniform_grid(0, L, npts)
    left = _integrate_on_grid(n, lam, m, params["a_left"], r[: npts - npts // 4])
    rho = uniform_grid(0, L, npts)[: npts - npts // 4]
    right = _integrate_on_grid(n, lam, m, params["a_right"], rho)
    right_phi = np.full(npts, np.nan, dtype=fd.DTYPE)
    right_f = np.full(npts, np.nan, dtype=fd.DTYPE)
    right_phi[npts // 4:] = right[0][::-1]
    right_f[npts // 4:] = right[2][::-1] + fd.DTYPE(params["c"])
    left_phi = np.full(npts, np.nan, dtype=fd.DTYPE)
    left_f = np.full(npts, np.nan, dtype=fd.DTYPE)
    left_phi[: npts - npts // 4] = left[0]
    left_f[: npts - npts // 4] = left[2]
    w = _smooth_step((r / L - fd.DTYPE(1) / 3) * 3)
    phi = np.where(w <= 0, left_phi, np.where(w >= 1, right_phi, (1 - w) * left_phi + w * right_phi))
    f = np.where(w <= 0, left_f, np.where(w >= 1, right_f, (1 - w) * left_f + w * right_f))
    k = np.arange(npts)
    phi = np.where((k == 0) | (k == npts - 1), 0, phi)
    return r, phi, f


def certify(structure_at, npts):
    """Residual on ``npts`` points and on the half-resolution resample of the same solution."""
    fine = structure_at(npts)
    coarse_n = (npts - 1) // 2 + 1
    coarse = structure_at(coarse_n)
    rf = _max_qe(fine)
    rc = _max_qe(coarse)
    floor_limited = rf <= CERT_FLOOR
    if floor_limited:
        order = None
    else:
        order = math.log(rc / rf) / math.log(float(coarse.geom.h / fine.geom.h)) if rc > 0 else float("-inf")
    ok = rf <= CERT_RESIDUAL and (floor_limited or order >= CERT_ORDER)
    reason = "" if ok else (
        f"max residual {rf:.3e} > {CERT_RESIDUAL:g}" if rf > CERT_RESIDUAL
        else f"convergence order {order:.3f} < {CERT_ORDER}"
    )
    cert = Certificate(ok, rf, rc, order, npts, floor_limited, reason)
    return QEStructure(fine.geom, fine.m, fine.lam, cert)


def _max_qe(q):
    res = qe_residual(q)
    mask = q.geom.margin_mask(1)
    return float(max(np.max(np.abs(res.rad[mask])), np.max(np.abs(res.sph[mask]))))


def _closed_guess(n, lam, guess):
    kappa = lam / (n - 1)
    base = {"L": math.pi / math.sqrt(kappa), "a_left": 0.0, "a_right": 0.0, "c": 0.0}
    base.update(guess or {})
    return base


def _closed_mismatch(n, lam, m, x, trace):
    L, a_l, a_r, c = x
    if not (L > 0 and np.isfinite(L)):
        return np.full(4, 1e6)
    mid = L / 2
    out = []
    for a in (a_l, a_r):
        sol = _shoot_adaptive(n, lam, m, a, mid)
        if sol.status != 0 or sol.t[-1] < mid * (1 - 1e-12):
            trace.append(dict(x=list(map(float, x)), failed=True))
            return np.full(4, 1e3)
        out.append(sol.y[:, -1])
    (p1, dp1, f1, df1), (p2, dp2, f2, df2) = out
    # the right branch runs in rho = L - r, which flips first derivatives
    res = np.array([p1 - p2, dp1 + dp2, f1 - (f2 + c), df1 + df2])
    trace.append(dict(x=list(map(float, x)), mismatch=float(np.max(np.abs(res)))))
    return res


def solve_qe_profile(n, m, lam, r_max=None, target="closed", f2_0=None, npts=201,
                     order=6, seed_phi=None, guess=None, tol=1e-12, max_iter=200):
    """Solve for a profile quasi-Einstein structure.

    ``target="closed"`` looks for a smooth metric on ``S^n`` by matching shots from
    both poles at the midpoint; unknowns are the length ``L``, ``f''`` at each pole and
    the offset of ``f`` between the poles.  ``target="interval"`` integrates from one
    pole to ``r_max``; if ``f2_0`` is not given it is chosen so that ``phi(r_max)``
    equals the seed profile there (default ``phi = r``).

    Returns a certified :class:`QEStructure`; raises :class:`SolverDivergence` if the
    shooting fails and :class:`SingularProfileError` if ``phi`` collapses.
    """
    n = int(n)
    if n < 2:
        raise ValueError("n must be >= 2")
    m = parse_m(m)
    lam = float(lam)
    trace = []
    if target == "closed":
        if n < 3:
            raise ValueError("closed targets need n >= 3")
        if lam <= 0:
            raise SolverDivergence("no smooth closed profile exists for lambda <= 0 in this search", trace)
        g = _closed_guess(n, lam, guess)
        x0 = np.array([g["L"], g["a_left"], g["a_right"], g["c"]], dtype=float)
        sol = root(lambda x: _closed_mismatch(n, lam, m, x, trace), x0, method="hybr",
                   options={"xtol": tol, "maxfev": max_iter})
        res = np.max(np.abs(_closed_mismatch(n, lam, m, sol.x, trace)))
        if not sol.success and res > 1e-9:
            raise SolverDivergence(f"closed shooting did not converge ({sol.message}); mismatch {res:.3e}", trace)
        params = dict(zip(("L", "a_left", "a_right", "c"), map(float, sol.x)))
        if params["L"] <= 0:
            raise SolverDivergence("shooting produced a non-positive length", trace)
    elif target == "interval":
        if r_max is None or r_max <= 0:
            raise ValueError("interval targets need r_max > 0")
        if f2_0 is None:
            target_phi = float(r_max) if seed_phi is None else float(
                seed_phi(r_max) if callable(seed_phi) else seed_phi
            )

            def miss(a):
                sol = _shoot_adaptive(n, lam, m, a, r_max)
                if sol.status != 0:
                    trace.append(dict(a=float(a), failed=True))
                    return -target_phi
                val = sol.y[0, -1] - target_phi
                trace.append(dict(a=float(a), mismatch=float(val)))
                return val

            a0 = lam if guess is None else float(guess.get("a", lam))
            try:
                rs = root_scalar(miss, x0=a0, x1=a0 + 0.1, method="secant", xtol=tol, maxiter=max_iter)
            except (ArithmeticError, ValueError) as exc:
                raise SolverDivergence(f"interval shooting failed: {exc}", trace) from exc
            if not rs.converged or abs(miss(rs.root)) > 1e-9:
                raise SolverDivergence("interval shooting did not converge", trace)
            a = float(rs.root)
        else:
            a = float(f2_0)
            sol = _shoot_adaptive(n, lam, m, a, r_max)
            if sol.status != 0:
                raise SingularProfileError(
                    f"phi collapses or the solution blows up near r = {sol.t[-1]:.6g} < r_max"
                )
        params = {"r_max": float(r_max), "a": a}
    else:
        raise ValueError(f"unknown target {target!r}")

    topology = "closed_sphere" if target == "closed" else "interval"

    def structure_at(npts_):
        r, phi, f = sample_profile(n, lam, m, params, npts_, target)
        geom = build_profile(n, r, phi, f, topology, order)
        return QEStructure(geom, m, lam)

    q = certify(structure_at, npts)
    info = SolveInfo(target, params, len(trace), float(trace[-1].get("mismatch", 0.0)) if trace else 0.0, trace)
    q.certificate.solve = info
    return q
