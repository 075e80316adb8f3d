"""Rotationally symmetric metrics ``g = dr^2 + phi(r)^2 g_{S^{n-1}}`` on a uniform grid.

Tensor quantities are stored in the parallel orthonormal frame ``{d/dr, e_2..e_n}``
where every rotationally symmetric symmetric 2-tensor is ``diag(rad, sph, ..., sph)``.
Curvature is described by the two sectional curvatures

    K_rad = -phi''/phi            (planes containing d/dr)
    K_sph = (1 - phi'^2)/phi^2    (planes tangent to the spheres)

At a pole (``phi = 0``) ratios are replaced by their smooth limits, obtained by
even extrapolation from the neighbouring samples.
"""

import csv
import io
from dataclasses import dataclass
from functools import cached_property, lru_cache
from math import gamma, pi

import numpy as np
from scipy.integrate import simpson

from . import fd
from .bivectors import basis_pairs, bivector_dim
from .curvature import CurvatureOperator, q_of

__all__ = [
    "TOPOLOGIES",
    "ProfileGeometry",
    "SymField",
    "build_profile",
    "sphere_area",
    "round_sphere",
    "flat_disk",
    "cylinder",
    "uniform_grid",
    "RField",
    "ProfileError",
]

TOPOLOGIES = ("closed_sphere", "interval")
MIN_POINTS = 16
UNIFORM_RTOL = 1e-8


class ProfileError(ValueError):
    """Invalid profile data."""


def sphere_area(k):
    """Volume of the unit round ``S^k``."""
    return 2.0 * pi ** ((k + 1) / 2) / gamma((k + 1) / 2)


@dataclass(frozen=True)
class SymField:
    """Rotationally symmetric symmetric 2-tensor ``diag(rad, sph, ..., sph)``."""

    rad: np.ndarray
    sph: np.ndarray
    n: int

    def norm2(self):
        return self.rad ** 2 + (self.n - 1) * self.sph ** 2

    def trace(self):
        return self.rad + (self.n - 1) * self.sph

    def __sub__(self, other):
        return SymField(self.rad - other.rad, self.sph - other.sph, self.n)

    def __add__(self, other):
        return SymField(self.rad + other.rad, self.sph + other.sph, self.n)

    def scale(self, c):
        return SymField(self.rad * c, self.sph * c, self.n)

    def max_abs(self):
        return float(np.max(np.maximum(np.abs(self.rad), np.abs(self.sph))))


def uniform_grid(r0, r1, npts):
    """Long-double grid on ``[r0, r1]`` with exact end points."""
    k = np.arange(npts)
    r0, r1 = fd.DTYPE(r0), fd.DTYPE(r1)
    h = (r1 - r0) / (npts - 1)
    r = r0 + k * h
    r[-1] = r1
    return r


class ProfileGeometry:
    """Discretized warped metric with all derived fields.

    Build instances with :func:`build_profile`.  Arrays are long double.
    """

    def __init__(self, n, r, phi, f, topology, order, h, left_pole, right_pole):
        self.n = n
        self.r = r
        self.phi = phi
        self.f = f
        self.topology = topology
        self.order = order
        self.h = h
        self.left_pole = left_pole
        self.right_pole = right_pole
        for arr in (r, phi, f):
            arr.setflags(write=False)

    # ---- differentiation -------------------------------------------------

    def _parities(self, parity):
        left = parity if self.left_pole else None
        right = parity if self.right_pole else None
        return left, right

    def d1(self, u, parity="even"):
        left, right = self._parities(parity)
        return fd.derivative(u, self.h, 1, self.order, left, right)

    def d2(self, u, parity="even"):
        left, right = self._parities(parity)
        return fd.derivative(u, self.h, 2, self.order, left, right)

    @property
    def pole_mask(self):
        m = np.zeros(self.r.size, dtype=bool)
        m[0] = self.left_pole
        m[-1] = self.right_pole
        return m

    def pole_limit(self, g):
        """Replace pole samples of an even field by even extrapolation."""
        g = np.array(g, dtype=fd.DTYPE)
        if self.left_pole:
            g[0] = (15 * g[1] - 6 * g[2] + g[3]) / 10
        if self.right_pole:
            g[-1] = (15 * g[-2] - 6 * g[-3] + g[-4]) / 10
        return g

    def ratio(self, num, den):
        """``num/den`` for an even quotient whose denominator vanishes at poles."""
        num = np.asarray(num, dtype=fd.DTYPE)
        den = np.asarray(den, dtype=fd.DTYPE)
        out = np.empty_like(num)
        ok = ~self.pole_mask
        out[ok] = num[ok] / den[ok]
        out[~ok] = 0
        return self.pole_limit(out)

    def margin_mask(self, depth=3):
        """Points at least ``depth`` stencil reaches away from free ends."""
        m = np.ones(self.r.size, dtype=bool)
        k = depth * fd.stencil_reach(self.order)
        if not self.left_pole:
            m[:k] = False
        if not self.right_pole:
            m[-k:] = False
        return m

    # ---- profile derivatives ---------------------------------------------

    @cached_property
    def dphi(self):
        return self.d1(self.phi, "odd")

    @cached_property
    def ddphi(self):
        return self.d2(self.phi, "odd")

    @cached_property
    def df(self):
        return self.d1(self.f, "even")

    @cached_property
    def ddf(self):
        return self.d2(self.f, "even")

    @cached_property
    def _end_weights(self):
        t = (self.r - self.r[0]) / (self.r[-1] - self.r[0])
        wl = np.cos(fd.DTYPE(pi) * t / 2) ** 2
        return wl, 1 - wl

    # ---- curvature -------------------------------------------------------

    @cached_property
    def k_rad(self):
        return self.ratio(-self.ddphi, self.phi)

    def over_phi2(self, u):
        """``u / phi^2`` for an even field that vanishes at the poles.

        The pole values of ``u`` are pure discretization error; they are removed
        with a smooth partition of unity before dividing so the quotient stays
        smooth.  Genuine non-vanishing (e.g. a cone angle) is rejected at build time.
        """
        u = np.asarray(u, dtype=fd.DTYPE)
        wl, wr = self._end_weights
        if self.left_pole:
            u = u - u[0] * wl
        if self.right_pole:
            u = u - u[-1] * wr
        return self.ratio(u, self.phi ** 2)

    @cached_property
    def k_sph(self):
        return self.over_phi2(1 - self.dphi ** 2)

    @cached_property
    def ricci(self):
        """Tensor-normalized Ricci curvature."""
        n = self.n
        return SymField((n - 1) * self.k_rad, self.k_rad + (n - 2) * self.k_sph, n)

    @property
    def ric_rad(self):
        return self.ricci.rad

    @property
    def ric_sph(self):
        return self.ricci.sph

    @cached_property
    def s(self):
        return self.ricci.trace()

    @cached_property
    def ric_norm2(self):
        return self.ricci.norm2()

    # ---- potential -------------------------------------------------------

    @cached_property
    def psi_df(self):
        """``(phi'/phi) f'``, the spherical Hessian eigenvalue of f."""
        return self.ratio(self.dphi * self.df, self.phi)

    @cached_property
    def hess_f(self):
        return SymField(self.ddf, self.psi_df, self.n)

    @cached_property
    def lap_f(self):
        return self.ddf + (self.n - 1) * self.psi_df

    @cached_property
    def grad_f2(self):
        return self.df ** 2

    @cached_property
    def hess_norm2(self):
        return self.hess_f.norm2()

    def gradient(self, u, parity="even"):
        return self.d1(u, parity)

    def laplacian(self, u):
        """``u'' + (n-1)(phi'/phi) u'`` for a rotationally symmetric scalar."""
        u = self._field(u)
        du = self.d1(u)
        return self.d2(u) + (self.n - 1) * self.ratio(self.dphi * du, self.phi)

    def _field(self, u):
        u = np.asarray(u, dtype=fd.DTYPE)
        if u.shape != self.r.shape:
            raise ValueError(f"field has {u.size} samples, grid has {self.r.size}")
        return u

    # ---- integration -----------------------------------------------------

    @cached_property
    def volume_density(self):
        return sphere_area(self.n - 1) * np.abs(self.phi) ** (self.n - 1)

    def integrate(self, u):
        u = self._field(u)
        return float(simpson(np.asarray(u * self.volume_density, dtype=float), x=np.asarray(self.r, dtype=float)))

    def volume(self):
        return self.integrate(np.ones_like(self.r))

    # ---- identities ------------------------------------------------------

    def bochner_residual(self):
        """``|1/2 lap|df|^2 - |Hess f|^2 - Ric(df, df) - <df, d lap f>|``."""
        lhs = 0.5 * self.laplacian(self.grad_f2)
        rhs = self.hess_norm2 + self.ric_rad * self.grad_f2 + self.df * self.d1(self.lap_f)
        return np.abs(lhs - rhs)

    def curvature_operator_at(self, index):
        """Operator-normalized curvature operator in the adapted frame at a grid point."""
        i = int(index)
        if not -self.r.size <= i < self.r.size:
            raise IndexError(f"grid index {index} out of range")
        i %= self.r.size
        if self.pole_mask[i]:
            raise ProfileError(f"grid index {i} is a pole; the adapted frame is undefined there")
        return CurvatureOperator(
            self.n, float(2 * self.k_sph[i]) * _basis(self.n)[0] + float(2 * (self.k_rad[i] - self.k_sph[i])) * _basis(self.n)[1]
        )

    @cached_property
    def curvature_field(self):
        """``R = b Id + c P`` with ``b = 2 K_sph``, ``c = 2 (K_rad - K_sph)``."""
        b = 2 * self.k_sph
        return RField(self.n, b, 2 * self.k_rad - b, self.excluded_points())

    def excluded_points(self):
        ex = set(np.nonzero(self.pole_mask)[0].tolist())
        k = fd.stencil_reach(self.order)
        if not self.left_pole:
            ex.update(range(k))
        if not self.right_pole:
            ex.update(range(self.r.size - k, self.r.size))
        return tuple(sorted(ex))

    def laplacian_R(self):
        """Rough Laplacian of the curvature operator.

        With ``P`` the operator of the radial planes and ``psi = phi'/phi``, the
        rough Laplacian of ``R = b Id + c P`` has radial and spherical eigenvalues

            lap b + lap c + (4 - 2n) psi^2 c   and   lap b + 4 psi^2 c.
        """
        R = self.curvature_field
        n = self.n
        lb = self.laplacian(R.b)
        lc = self.laplacian(R.c)
        cpsi2 = self.over_phi2(R.c * self.dphi ** 2)
        rad = lb + lc + (4 - 2 * n) * cpsi2
        sph = lb + 4 * cpsi2
        return RField(n, sph, rad - sph, R.excluded)

    def covariant_r_derivative_R(self):
        """``nabla_{d/dr} R``; the adapted frame is parallel along radial geodesics."""
        R = self.curvature_field
        return RField(self.n, self.d1(R.b), self.d1(R.c), R.excluded)

    def ci_residual(self, h):
        """Pointwise ``|lap R + Q(R) - h R|`` (Frobenius, operator normalization).

        ``h`` multiplies the operator directly: for an Einstein metric with tensor
        constant ``lambda`` the identity holds with ``h = 2 lambda``.
        """
        h = np.broadcast_to(np.asarray(h, dtype=fd.DTYPE), self.r.shape)
        R = self.curvature_field
        L = self.laplacian_R()
        res = L.matrices() + R.q_matrices() - h[:, None, None] * R.matrices()
        out = np.sqrt(np.sum(res ** 2, axis=(1, 2)))
        out[list(R.excluded)] = np.nan
        return out

    # ---- export ----------------------------------------------------------

    def to_json(self):
        return {
            "n": self.n,
            "topology": self.topology,
            "r": [float(x) for x in self.r],
            "phi": [float(x) for x in self.phi],
            "f": [float(x) for x in self.f],
        }

    def with_f(self, f):
        return build_profile(self.n, self.r, self.phi, f, self.topology, self.order)

    def fields_csv(self, **fields):
        buf = io.StringIO()
        w = csv.writer(buf)
        names = list(fields)
        w.writerow(["r", *names])
        cols = [np.asarray(fields[k], dtype=float) for k in names]
        for i, r in enumerate(np.asarray(self.r, dtype=float)):
            w.writerow([repr(float(r)), *(repr(float(c[i])) for c in cols)])
        return buf.getvalue()


@lru_cache(maxsize=None)
def _basis(n):
    """Matrices of ``Id`` and of the radial-plane projector ``P`` (first frame vector radial)."""
    nb = bivector_dim(n)
    p = basis_pairs(n)
    P = np.diag((p[:, 0] == 0).astype(float))
    eye = np.eye(nb)
    QI = q_of(CurvatureOperator(n, eye)).matrix
    QP = q_of(CurvatureOperator(n, P)).matrix
    X = 0.5 * (q_of(CurvatureOperator(n, eye + P)).matrix - QI - QP)
    for m in (eye, P, QI, QP, X):
        m.setflags(write=False)
    return eye, P, QI, QP, X


@dataclass(frozen=True)
class RField:
    """Operator field ``b Id + c P`` along the grid (operator normalization)."""

    n: int
    b: np.ndarray
    c: np.ndarray
    excluded: tuple = ()

    @property
    def radial(self):
        return self.b + self.c

    @property
    def spherical(self):
        return self.b

    def matrices(self):
        eye, P, *_ = _basis(self.n)
        return self.b[:, None, None] * eye + self.c[:, None, None] * P

    def q_matrices(self):
        """``Q(R)`` expanded bilinearly in ``Id`` and ``P``."""
        _, _, QI, QP, X = _basis(self.n)
        b = self.b[:, None, None]
        c = self.c[:, None, None]
        return b * b * QI + 2 * b * c * X + c * c * QP

    def operator_at(self, i):
        if i in self.excluded:
            raise ProfileError(f"grid index {i} is excluded from this operator field")
        return CurvatureOperator(self.n, np.asarray(self.matrices()[i], dtype=float))


def build_profile(n, grid, phi, f=None, topology="interval", order=4):
    """Validate samples and construct a :class:`ProfileGeometry`."""
    n = int(n)
    if n < 2:
        raise ProfileError(f"dimension must be >= 2, got {n}")
    if topology not in TOPOLOGIES:
        raise ProfileError(f"topology must be one of {TOPOLOGIES}")
    if order not in fd.ORDERS:
        raise ProfileError(f"order must be one of {fd.ORDERS}")
    r = np.array(grid, dtype=fd.DTYPE).reshape(-1)
    phi = np.array(phi, dtype=fd.DTYPE).reshape(-1)
    f = np.zeros_like(r) if f is None else np.array(f, dtype=fd.DTYPE).reshape(-1)
    if r.size < MIN_POINTS:
        raise ProfileError(f"grid needs at least {MIN_POINTS} points, got {r.size}")
    if phi.shape != r.shape or f.shape != r.shape:
        raise ProfileError("phi and f must have one sample per grid point")
    if not (np.all(np.isfinite(r)) and np.all(np.isfinite(phi)) and np.all(np.isfinite(f))):
        raise ProfileError("profile contains non-finite samples")
    dr = np.diff(r)
    if np.any(dr <= 0):
        raise ProfileError("grid must be strictly increasing")
    h = (r[-1] - r[0]) / (r.size - 1)
    if np.max(np.abs(dr - h)) > UNIFORM_RTOL * h:
        raise ProfileError("grid must be uniform")
    if np.any(phi[1:-1] <= 0):
        raise ProfileError("phi must be positive in the interior")
    scale = float(np.max(np.abs(phi)))
    close_tol = 10 * float(h) ** 2
    if topology == "closed_sphere":
        left = right = True
        if abs(phi[0]) > close_tol * max(1.0, scale) or abs(phi[-1]) > close_tol * max(1.0, scale):
            raise ProfileError("closed profile must vanish at both ends")
    else:
        left = phi[0] <= 1e-12 * scale
        right = phi[-1] <= 1e-12 * scale
        if phi[0] < 0 or phi[-1] < 0:
            raise ProfileError("phi must be nonnegative")
    phi = phi.copy()
    if left:
        phi[0] = 0
    if right:
        phi[-1] = 0
    geom = ProfileGeometry(n, r, phi, f, topology, order, h, bool(left), bool(right))
    for end, is_pole, sgn in ((0, left, 1), (-1, right, -1)):
        if is_pole and abs(sgn * geom.dphi[end] - 1) > close_tol:
            raise ProfileError(
                f"|phi'| = {float(abs(geom.dphi[end])):.6g} at a pole; smooth closure needs 1"
            )
    return geom


def _evaluate(fn, r):
    if fn is None:
        return np.zeros_like(r)
    if callable(fn):
        return np.asarray(fn(r), dtype=fd.DTYPE) * np.ones_like(r)
    return np.asarray(fn, dtype=fd.DTYPE)


def round_sphere(n, npts, radius=1.0, f=None, order=4):
    """Round ``S^n`` of the given radius; ``phi`` is sampled symmetrically about the equator."""
    radius = fd.DTYPE(radius)
    r = uniform_grid(0, fd.DTYPE(pi) * radius, npts)
    k = np.arange(npts)
    h = r[1] - r[0]
    phi = radius * np.sin(h * np.minimum(k, npts - 1 - k) / radius)
    return build_profile(n, r, phi, _evaluate(f, r), "closed_sphere", order)


def flat_disk(n, npts, r_max=1.0, f=None, order=4):
    r = uniform_grid(0, r_max, npts)
    return build_profile(n, r, r.copy(), _evaluate(f, r), "interval", order)


def cylinder(n, npts, length=1.0, f=None, order=4):
    r = uniform_grid(0, length, npts)
    return build_profile(n, r, np.ones_like(r), _evaluate(f, r), "interval", order)
