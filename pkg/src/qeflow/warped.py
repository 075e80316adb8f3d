"""Warped products ``(M x N, g + u^2 g_N)`` with ``u = exp(-f/m)`` over profile bases.

The horizontal restrictions of the curvature identities are evaluated with
generic tensor code: ``R`` is a ``(..., n, n, n, n)`` array of the (0,4) tensor in
an orthonormal frame, ``v`` the gradient of ``f``, ``H`` its Hessian and ``DR`` the
covariant derivative of ``R`` along ``v``.
"""

from dataclasses import dataclass

import numpy as np

from . import fd
from .bivectors import bivector_dim
from .curvature import to_tensor4
from .quasi_einstein import INF, QEStructure, inv_m, mu0_of

__all__ = [
    "WarpedSpec",
    "ContractViolation",
    "warped_ricci_components",
    "warped_ricci_residual",
    "profile_tensors",
    "horizontal_relation_sides",
    "horizontal_relation_residual",
    "traced_relation_rhs",
    "trace_consistency",
    "scalar_trace_chain",
    "warped_term_groups",
    "random_operator_fields",
]


class ContractViolation(ValueError):
    pass


@dataclass(frozen=True)
class WarpedSpec:
    """Base structure and fiber Einstein constant.

    The fiber is the ``m``-dimensional space form whose Ricci constant is
    ``fiber_mu`` (a round sphere when ``fiber_mu > 0``).
    """

    base: QEStructure
    fiber_mu: float

    def __post_init__(self):
        if self.base.m == INF:
            raise ValueError("the warped correspondence needs finite m")
        if self.base.m == 1 and self.fiber_mu != 0:
            raise ValueError("a one-dimensional fiber has zero Ricci curvature")
        u = self.warping
        if not np.all(u > 0):
            raise ValueError("warping function must be positive")

    @property
    def m(self):
        return self.base.m

    @property
    def warping(self):
        return np.exp(-self.base.geom.f / self.base.m)

    @classmethod
    def from_base(cls, base):
        return cls(base, mu0_of(base)[0])


def warped_ricci_components(spec):
    """Ricci eigenvalues of the warped metric: horizontal radial/spherical and vertical.

    Horizontal: ``Ric_M - (m/u) Hess u``; vertical (per unit vector):
    ``(mu_N - u lap u - (m-1)|du|^2) / u^2``.
    """
    g = spec.base.geom
    m = spec.m
    u = spec.warping
    du = g.d1(u)
    ddu = g.d2(u)
    psi_du = g.ratio(g.dphi * du, g.phi)
    lap_u = ddu + (g.n - 1) * psi_du
    rad = g.ric_rad - m / u * ddu
    sph = g.ric_sph - m / u * psi_du
    vert = (fd.DTYPE(spec.fiber_mu) - u * lap_u - (m - 1) * du * du) / u ** 2
    return rad, sph, vert


def warped_ricci_residual(spec, enforce_mu0=True, mu0_tol=1e-6, mask=None):
    """``max |Ric^W - lambda g^W|`` over the grid (free-end margins excluded)."""
    if enforce_mu0:
        mu0, dev = mu0_of(spec.base)
        if abs(spec.fiber_mu - mu0) > mu0_tol * max(1.0, abs(mu0)):
            raise ContractViolation(
                f"fiber Einstein constant {spec.fiber_mu:.12g} differs from mu0 = {mu0:.12g}"
            )
    lam = spec.base.lam
    if mask is None:
        mask = spec.base.geom.margin_mask(1)
    comps = warped_ricci_components(spec)
    return float(max(np.max(np.abs(c[mask] - lam)) for c in comps))


def _tensor_field(rf):
    """(0,4) tensors ``(npts, n, n, n, n)`` of an operator field (operator normalization)."""
    mats = rf.matrices()
    return 0.5 * np.stack([to_tensor4(mk, rf.n) for mk in mats])


def profile_tensors(q):
    """``R``, ``v``, ``H``, ``DR`` and the base ``lap R``, ``Q`` parts in the adapted frame."""
    g = q.geom
    n = g.n
    npts = g.r.size
    R = _tensor_field(g.curvature_field)
    v = np.zeros((npts, n), dtype=fd.DTYPE)
    v[:, 0] = g.df
    H = np.zeros((npts, n, n), dtype=fd.DTYPE)
    H[:, 0, 0] = g.ddf
    for i in range(1, n):
        H[:, i, i] = g.psi_df
    DR = g.df[:, None, None, None, None] * _tensor_field(g.covariant_r_derivative_R())
    return R, v, H, DR


def horizontal_relation_sides(R, v, H, DR, m, lam, mu):
    """Both sides of the horizontal curvature relation on every frame 4-tuple."""
    k = inv_m(m)
    lhs = (2 * lam - mu) * R
    rhs = (
        -k * v[..., :, None, None, None] * np.einsum("...i,...ibcd->...bcd", v, R)[..., None, :, :, :]
        - k * v[..., None, :, None, None] * np.einsum("...i,...aicd->...acd", v, R)[..., :, None, :, :]
        - k * v[..., None, None, :, None] * np.einsum("...i,...abid->...abd", v, R)[..., :, :, None, :]
        - k * v[..., None, None, None, :] * np.einsum("...i,...abci->...abc", v, R)[..., :, :, :, None]
        + 2 * k * (
            H[..., :, None, :, None] * H[..., None, :, None, :]
            - H[..., :, None, None, :] * H[..., None, :, :, None]
        )
        - DR
    )
    return lhs, rhs


def horizontal_relation_residual(q, mu):
    """Max componentwise defect of the horizontal relation, poles and free ends excluded."""
    R, v, H, DR = profile_tensors(q)
    lhs, rhs = horizontal_relation_sides(R, v, H, DR, q.m, q.lam, mu)
    return float(np.max(np.abs(lhs - rhs)[_keep(q.geom)]))


def _keep(g):
    """Grid points away from poles and from the free-end margin of nested stencils."""
    return g.margin_mask(3) & ~g.pole_mask


def traced_relation_rhs(R, v, H, DR, m):
    """Right side of the traced relation written with ``r`` and contractions."""
    k = inv_m(m)
    ric = np.einsum("...aibi->...ab", R)
    rv = np.einsum("...ab,...b->...a", ric, v)
    Rvv = np.einsum("...aibj,...i,...j->...ab", R, v, v)
    trH = np.einsum("...ii->...", H)
    HH = np.einsum("...ai,...bi->...ab", H, H)
    return (
        -k * v[..., :, None] * rv[..., None, :]
        - 2 * k * Rvv
        - k * v[..., None, :] * rv[..., :, None]
        + 2 * k * (H * trH[..., None, None] - HH)
        - np.einsum("...aibi->...ab", DR)
    )


def trace_consistency(R, v, H, DR, m):
    """``max |trace_{2,4}(RHS of the 4-tensor relation) - RHS of the traced relation|``."""
    _, rhs4 = horizontal_relation_sides(R, v, H, DR, m, 0.0, 0.0)
    traced = np.einsum("...aibi->...ab", rhs4)
    return float(np.max(np.abs(traced - traced_relation_rhs(R, v, H, DR, m)))) if traced.size else 0.0


def scalar_trace_chain(q):
    """Frame trace of :func:`traced_relation_rhs` and the scalar expression it should equal.

    Returns ``(traced, predicted)`` with
    ``predicted = -(4/m) r(df,df) - (2/m)(|Hess f|^2 - (lap f)^2) - <df, ds>``; the
    ``<df, ds>`` term arises from the contracted second Bianchi identity.
    """
    R, v, H, DR = profile_tensors(q)
    g = q.geom
    k = inv_m(q.m)
    traced = np.einsum("...ii->...", traced_relation_rhs(R, v, H, DR, q.m))
    predicted = -(4 * k * g.ric_rad * g.grad_f2 + 2 * k * (g.hess_norm2 - g.lap_f ** 2) + g.df * g.d1(g.s))
    return traced, predicted


def _cross_bracket(v, H):
    """``X(f)Z(f)H(Y,W) + Y(f)W(f)H(X,Z) - Y(f)Z(f)H(X,W) - X(f)W(f)H(Y,Z)``."""
    vX = v[..., :, None, None, None]
    vY = v[..., None, :, None, None]
    vZ = v[..., None, None, :, None]
    vW = v[..., None, None, None, :]
    H_YW = H[..., None, :, None, :]
    H_XZ = H[..., :, None, :, None]
    H_XW = H[..., :, None, None, :]
    H_YZ = H[..., None, :, :, None]
    return vX * vZ * H_YW + vY * vW * H_XZ - vY * vZ * H_XW - vX * vW * H_YZ


def warped_term_groups(q):
    """Named term groups of the horizontal Laplacian and quadratic parts of the warped curvature."""
    if q.m == INF:
        raise ValueError("term groups are defined for finite m")
    g = q.geom
    m = q.m
    R, v, H, DR = profile_tensors(q)
    lapR = _tensor_field(g.laplacian_R())
    halfQ = 0.5 * _tensor_q(g)
    k = 1.0 / m
    directional = (
        -k * v[..., :, None, None, None] * np.einsum("...i,...ibcd->...bcd", v, R)[..., None, :, :, :]
        - k * v[..., None, :, None, None] * np.einsum("...i,...aicd->...acd", v, R)[..., :, None, :, :]
        - k * v[..., None, None, :, None] * np.einsum("...i,...abid->...abd", v, R)[..., :, :, None, :]
        - k * v[..., None, None, None, :] * np.einsum("...i,...abci->...abc", v, R)[..., :, :, :, None]
    )
    cross_lap = 2.0 / m ** 2 * _cross_bracket(v, H)
    # written out independently of _cross_bracket
    vX = v[..., :, None, None, None]
    vY = v[..., None, :, None, None]
    vZ = v[..., None, None, :, None]
    vW = v[..., None, None, None, :]
    cross_quad = -(2.0 / m ** 2) * (
        vX * vZ * H[..., None, :, None, :]
        + vY * vW * H[..., :, None, :, None]
        - vY * vZ * H[..., :, None, None, :]
        - vX * vW * H[..., None, :, :, None]
    )
    hess_product = 2.0 / m * (
        H[..., :, None, :, None] * H[..., None, :, None, :]
        - H[..., :, None, None, :] * H[..., None, :, :, None]
    )
    lap_part = lapR + directional + cross_lap - DR
    quad_part = halfQ + hess_product + cross_quad
    keep = _keep(g)

    def mx(a):
        return float(np.max(np.abs(a[keep]))) if a[keep].size else 0.0

    scale = max(mx(cross_lap), mx(cross_quad), 1e-300)
    return {
        "groups": {
            "pullback_laplacian": mx(lapR),
            "directional": mx(directional),
            "cross_laplacian_part": mx(cross_lap),
            "nabla_R": mx(DR),
            "pullback_half_q": mx(halfQ),
            "hessian_product": mx(hess_product),
            "cross_quadratic_part": mx(cross_quad),
        },
        "cancellation_abs": mx(cross_lap + cross_quad),
        "cancellation_rel": mx(cross_lap + cross_quad) / scale if scale > 1e-300 else 0.0,
        "warped_einstein_defect": mx(lap_part + quad_part - 2 * q.lam * R),
    }


def _tensor_q(g):
    rf = g.curvature_field
    mats = rf.q_matrices()
    return np.stack([to_tensor4(mk, rf.n) for mk in mats])


def random_operator_fields(rng, n, npts, scale=1.0):
    """Random symmetric-operator fields and frame data for transcription tests."""
    nb = bivector_dim(n)
    A = rng.normal(size=(npts, nb, nb)) * scale
    A = A + np.swapaxes(A, 1, 2)
    B = rng.normal(size=(npts, nb, nb)) * scale
    B = B + np.swapaxes(B, 1, 2)
    R = 0.5 * np.stack([to_tensor4(a, n) for a in A])
    DR = 0.5 * np.stack([to_tensor4(b, n) for b in B])
    v = rng.normal(size=(npts, n))
    H = rng.normal(size=(npts, n, n))
    H = H + np.swapaxes(H, 1, 2)
    return R, v, H, DR
