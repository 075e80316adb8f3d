"""Algebraic curvature operators on the exterior square of R^n.

A :class:`CurvatureOperator` stores the symmetric matrix of ``R`` acting on
bivectors in the lexicographic orthonormal basis.  Two normalizations are in
use and are never mixed silently:

* ``"operator"``: ``<R(x ^ y), z ^ w> = 2 Rm(x, y, z, w)``.  The round sphere of
  curvature ``k`` is ``2k Id``; Ricci and scalar traces are twice the usual ones.
* ``"tensor"``: the matrix of the (0,4) tensor itself, so the round sphere is
  ``k Id``.

All algebraic operations (sharp, ``Q``, traces) act on operator-normalized data.
"""

from dataclasses import dataclass
from functools import lru_cache
from itertools import combinations

import numpy as np

from .bivectors import (
    Bivector,
    basis_pairs,
    bivector_dim,
    bracket,
    inner_bivector,
    pair_index,
    to_skew,
    from_skew,
    _dim_from_len,
)

__all__ = [
    "CurvatureOperator",
    "RicciMatrix",
    "NORMALIZATIONS",
    "bianchi_residual",
    "bianchi_complement_basis",
    "bianchi_project",
    "ricci_of",
    "scal_of",
    "sharp",
    "sharp_bruteforce",
    "structure_constants",
    "q_of",
    "TraceResiduals",
    "trace_identity_residuals",
    "kulkarni_nomizu_identity",
    "WeylSplit",
    "weyl_split",
    "to_tensor4",
    "from_tensor4",
    "operator_to_json",
    "operator_from_json",
]

NORMALIZATIONS = ("operator", "tensor")
SYM_TOL = 1e-12
BIANCHI_TOL = 1e-10


@dataclass(frozen=True)
class CurvatureOperator:
    """Symmetric bilinear form on the exterior square of R^dim."""

    dim: int
    matrix: np.ndarray
    normalization: str = "operator"
    bianchi: bool = False

    def __post_init__(self):
        if self.normalization not in NORMALIZATIONS:
            raise ValueError(f"normalization must be one of {NORMALIZATIONS}")
        m = np.array(self.matrix, dtype=float)
        nb = bivector_dim(self.dim)
        if m.shape != (nb, nb):
            raise ValueError(f"expected a {nb}x{nb} matrix for n={self.dim}, got {m.shape}")
        if not np.all(np.isfinite(m)):
            raise ValueError("operator contains non-finite entries")
        scale = max(1.0, float(np.abs(m).max(initial=0.0)))
        if np.abs(m - m.T).max(initial=0.0) > SYM_TOL * scale:
            raise ValueError("curvature operator must be symmetric")
        m = 0.5 * (m + m.T)
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)
        if self.bianchi:
            res = bianchi_residual(m, self.dim)
            if res > BIANCHI_TOL * max(1.0, np.linalg.norm(m)):
                raise ValueError(f"operator flagged bianchi has residual {res:.3e}")

    @classmethod
    def identity(cls, n, scale=1.0):
        return cls(n, scale * np.eye(bivector_dim(n)), bianchi=True)

    @classmethod
    def zero(cls, n):
        return cls(n, np.zeros((bivector_dim(n),) * 2), bianchi=True)

    def as_operator(self):
        if self.normalization == "operator":
            return self
        return CurvatureOperator(self.dim, 2.0 * self.matrix, "operator", self.bianchi)

    def as_tensor(self):
        if self.normalization == "tensor":
            return self
        return CurvatureOperator(self.dim, 0.5 * self.matrix, "tensor", self.bianchi)

    def apply(self, b):
        """Image of a bivector under the operator."""
        if b.dim != self.dim:
            raise ValueError(f"dimension mismatch: {b.dim} vs {self.dim}")
        return Bivector(self.dim, self.matrix @ b.coords)

    def form(self, a, b):
        return float(a.coords @ self.matrix @ b.coords)

    def norm(self):
        return float(np.linalg.norm(self.matrix))

    def _combine(self, other, fn):
        if not isinstance(other, CurvatureOperator):
            return NotImplemented
        _check_pair(self, other)
        o = other if other.normalization == self.normalization else (
            other.as_operator() if self.normalization == "operator" else other.as_tensor()
        )
        return CurvatureOperator(
            self.dim, fn(self.matrix, o.matrix), self.normalization, self.bianchi and o.bianchi
        )

    def __add__(self, other):
        return self._combine(other, np.add)

    def __sub__(self, other):
        return self._combine(other, np.subtract)

    def __mul__(self, c):
        return CurvatureOperator(self.dim, float(c) * self.matrix, self.normalization, self.bianchi)

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0


@dataclass(frozen=True)
class RicciMatrix:
    dim: int
    matrix: np.ndarray
    normalization: str = "operator"

    def __post_init__(self):
        if self.normalization not in NORMALIZATIONS:
            raise ValueError(f"normalization must be one of {NORMALIZATIONS}")
        m = np.array(self.matrix, dtype=float)
        if m.shape != (self.dim, self.dim):
            raise ValueError(f"expected {self.dim}x{self.dim} matrix, got {m.shape}")
        scale = max(1.0, float(np.abs(m).max(initial=0.0)))
        if np.abs(m - m.T).max(initial=0.0) > SYM_TOL * scale:
            raise ValueError("Ricci matrix must be symmetric")
        m = 0.5 * (m + m.T)
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    def as_operator(self):
        if self.normalization == "operator":
            return self
        return RicciMatrix(self.dim, 2.0 * self.matrix, "operator")

    def as_tensor(self):
        if self.normalization == "tensor":
            return self
        return RicciMatrix(self.dim, 0.5 * self.matrix, "tensor")

    def trace(self):
        return float(np.trace(self.matrix))


def _check_pair(a, b):
    if a.dim != b.dim:
        raise ValueError(f"dimension mismatch: {a.dim} vs {b.dim}")


def _op(R):
    if not isinstance(R, CurvatureOperator):
        raise TypeError(f"CurvatureOperator expected, got {type(R).__name__}")
    return R.as_operator()


def to_tensor4(matrix, n):
    """Expand an operator matrix into the 4-index array ``T[i,j,k,l] = <R(e_i^e_j), e_k^e_l>``."""
    index, sign = pair_index(n)
    m = np.asarray(matrix)
    s = sign[:, :, None, None] * sign[None, None, :, :]
    return s * m[index[:, :, None, None], index[None, None, :, :]]


def from_tensor4(t):
    """Inverse of :func:`to_tensor4` (restricted to ``i < j``, ``k < l``)."""
    t = np.asarray(t, dtype=float)
    n = t.shape[0]
    p = basis_pairs(n)
    return t[p[:, 0][:, None], p[:, 1][:, None], p[:, 0][None, :], p[:, 1][None, :]]


def bianchi_residual(matrix, n):
    """Max first-Bianchi defect over all index 4-tuples."""
    if n < 4:
        return 0.0
    t = to_tensor4(matrix, n)
    cyc = t + np.einsum("yzxw->xyzw", t) + np.einsum("zxyw->xyzw", t)
    return float(np.abs(cyc).max())


@lru_cache(maxsize=None)
def bianchi_complement_basis(n):
    """Orthogonal basis of the complement of the Bianchi subspace, one element per 4-subset."""
    index, _ = pair_index(n)
    nb = bivector_dim(n)
    out = []
    for a, b, c, d in combinations(range(n), 4):
        m = np.zeros((nb, nb))
        for (p, q), (r, s), v in (((a, b), (c, d), 1.0), ((a, c), (b, d), -1.0), ((a, d), (b, c), 1.0)):
            m[index[p, q], index[r, s]] = v
            m[index[r, s], index[p, q]] = v
        out.append(m)
    arr = np.array(out).reshape(len(out), nb, nb) if out else np.zeros((0, nb, nb))
    arr.setflags(write=False)
    return arr


def bianchi_project(S):
    """Orthogonal projection onto operators satisfying the first Bianchi identity."""
    if not isinstance(S, CurvatureOperator):
        raise TypeError(f"CurvatureOperator expected, got {type(S).__name__}")
    m = np.array(S.matrix)
    for b in bianchi_complement_basis(S.dim):
        m -= (np.sum(m * b) / np.sum(b * b)) * b
    return CurvatureOperator(S.dim, m, S.normalization, bianchi=True)


def ricci_of(R, normalization="operator"):
    """Ricci contraction ``Ric_ij = sum_k <R(e_i ^ e_k), e_j ^ e_k>``.

    The sum is taken with the operator's own entries and then converted to the
    requested normalization: the result for a tensor-normalized input is doubled
    before conversion so the tag always means the same thing.
    """
    if normalization not in NORMALIZATIONS:
        raise ValueError(f"normalization must be one of {NORMALIZATIONS}")
    Ro = _op(R)
    n = Ro.dim
    index, sign = pair_index(n)
    k = np.arange(n)
    ik = index[:, k]
    sk = sign[:, k]
    m = Ro.matrix
    ric = np.einsum("ik,jk,ijk->ij", sk, sk, m[ik[:, None, :], ik[None, :, :]])
    out = RicciMatrix(n, ric, "operator")
    return out if normalization == "operator" else out.as_tensor()


def scal_of(R, normalization="operator"):
    return ricci_of(R, normalization).trace()


def sharp_bruteforce(A, B):
    """Reference double sum over the so(n) basis, built from explicit brackets."""
    _check_pair(A, B)
    n = A.dim
    nb = bivector_dim(n)
    Ao, Bo = _op(A), _op(B)
    basis = [Bivector(n, row) for row in np.eye(nb)]
    out = np.zeros((nb, nb))
    for wa in basis:
        Aw = Ao.apply(wa)
        for wb in basis:
            u = bracket(Aw, Bo.apply(wb)).coords
            v = bracket(wa, wb).coords
            out += np.outer(u, v)
    out *= 0.5
    return CurvatureOperator(n, 0.5 * (out + out.T))


@lru_cache(maxsize=None)
def structure_constants(n):
    """Sparse so(n) structure constants ``c[a,b,g] = <[w_a, w_b], w_g>`` as index/value arrays."""
    nb = bivector_dim(n)
    basis = [Bivector(n, row) for row in np.eye(nb)]
    idx, vals = [], []
    for a in range(nb):
        for b in range(nb):
            c = bracket(basis[a], basis[b]).coords
            for g in np.nonzero(c)[0]:
                idx.append((a, b, g))
                vals.append(c[g])
    ia = np.array(idx, dtype=int).reshape(-1, 3)
    va = np.array(vals, dtype=float)
    ia.setflags(write=False)
    va.setflags(write=False)
    return ia, va


def sharp(A, B):
    """Sharp product ``A # B`` via cached structure constants.

    ``(A # B)_{pq} = 1/2 sum c_{gdp} c_{abq} A_{ag} B_{bd}``.  With the factor 1/2 the
    identity satisfies ``Id # Id = (n - 2) Id``.
    """
    _check_pair(A, B)
    n = A.dim
    nb = bivector_dim(n)
    Ao, Bo = _op(A), _op(B)
    if n == 2:
        return CurvatureOperator(n, np.zeros((nb, nb)))
    ia, va = structure_constants(n)
    a, b, q = ia[:, 0], ia[:, 1], ia[:, 2]
    # K[q, g, d] = sum_{a,b} c_{abq} A_{ag} B_{bd}
    K = np.zeros((nb, nb, nb))
    np.add.at(K, q, va[:, None, None] * Ao.matrix[a][:, :, None] * Bo.matrix[b][:, None, :])
    out = np.zeros((nb, nb))
    np.add.at(out, q, va[:, None] * K[:, a, b].T)
    out *= 0.5
    return CurvatureOperator(n, 0.5 * (out + out.T))


def q_of(R):
    """``Q(R) = R^2 + R # R`` (operator normalization)."""
    Ro = _op(R)
    return CurvatureOperator(Ro.dim, Ro.matrix @ Ro.matrix + sharp(Ro, Ro).matrix, bianchi=False)


@dataclass(frozen=True)
class TraceResiduals:
    scal: float
    ricci: float
    scal_q: float
    ric_square_sum: float


def kulkarni_nomizu_identity(R):
    """``sum_{k,l} Ric_kl <R(e_i ^ e_k), e_j ^ e_l>`` in operator normalization."""
    Ro = _op(R)
    ric = ricci_of(Ro).matrix
    t = to_tensor4(Ro.matrix, Ro.dim)
    return np.einsum("kl,ikjl->ij", ric, t)


def trace_identity_residuals(R, tol=BIANCHI_TOL):
    """Defects of the two trace identities for ``Q`` (operator normalization)."""
    Ro = _op(R)
    res = bianchi_residual(Ro.matrix, Ro.dim)
    if res > tol * max(1.0, Ro.norm()):
        raise ValueError(f"operator fails the Bianchi identity (residual {res:.3e})")
    Q = q_of(Ro)
    ric = ricci_of(Ro).matrix
    scal_q = scal_of(Q)
    sq = float(np.sum(ric ** 2))
    ric_q = ricci_of(Q).matrix
    return TraceResiduals(
        scal=abs(scal_q - sq),
        ricci=float(np.linalg.norm(ric_q - kulkarni_nomizu_identity(Ro))),
        scal_q=scal_q,
        ric_square_sum=sq,
    )


def _kn_with_identity(h):
    """Operator ``X ^ Y -> hX ^ Y + X ^ hY`` for symmetric ``h``."""
    h = np.asarray(h, dtype=float)
    n = h.shape[0]
    p = basis_pairs(n)
    i, j = p[:, 0][:, None], p[:, 1][:, None]
    k, l = p[:, 0][None, :], p[:, 1][None, :]
    eye = np.eye(n)
    return h[i, k] * eye[j, l] - h[i, l] * eye[j, k] + eye[i, k] * h[j, l] - eye[i, l] * h[j, k]


@dataclass(frozen=True)
class WeylSplit:
    scalar: CurvatureOperator
    traceless_ricci: CurvatureOperator
    weyl: CurvatureOperator

    def total(self):
        return self.scalar + self.traceless_ricci + self.weyl


def weyl_split(R):
    """Orthogonal decomposition into scalar, traceless-Ricci and Weyl parts."""
    Ro = _op(R)
    n = Ro.dim
    if n < 3:
        raise ValueError("the Weyl decomposition needs n >= 3")
    ric = ricci_of(Ro).matrix
    s = float(np.trace(ric))
    nb = bivector_dim(n)
    scalar = s / (n * (n - 1)) * np.eye(nb)
    rho0 = ric - s / n * np.eye(n)
    tr = _kn_with_identity(rho0) / (n - 2)
    weyl = Ro.matrix - scalar - tr
    return WeylSplit(
        CurvatureOperator(n, scalar),
        CurvatureOperator(n, tr),
        CurvatureOperator(n, weyl),
    )


def operator_to_json(R):
    return {
        "n": R.dim,
        "matrix": [float(x) for x in np.asarray(R.matrix).reshape(-1)],
        "normalization": R.normalization,
    }


def operator_from_json(obj):
    try:
        n = int(obj["n"])
        flat = np.asarray(obj["matrix"], dtype=float)
        norm = obj.get("normalization", "operator")
    except (KeyError, TypeError) as exc:
        raise ValueError(f"malformed operator JSON: {exc}") from exc
    nb = bivector_dim(n)
    if flat.size != nb * nb:
        raise ValueError(f"matrix must have {nb * nb} entries for n={n}")
    return CurvatureOperator(n, flat.reshape(nb, nb), norm)
