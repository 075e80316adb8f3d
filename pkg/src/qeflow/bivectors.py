"""Exact linear algebra of the exterior square of R^n.

Bivectors are stored in the lexicographic basis ``e_i ^ e_j`` (``i < j``) and
identified with skew-symmetric matrices through

    (x ^ y)(z) = <y, z> x - <x, z> y,

so ``e_i ^ e_j`` corresponds to the matrix with ``+1`` at ``(i, j)`` and ``-1`` at
``(j, i)``. No extra scale factor enters the identification.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

__all__ = [
    "Bivector",
    "ATOL",
    "basis_pairs",
    "pair_index",
    "bivector_dim",
    "wedge",
    "to_skew",
    "from_skew",
    "inner_bivector",
    "decomposable_inner",
    "bracket",
    "basis_bivector",
]

ATOL = 1e-12


def bivector_dim(n):
    return n * (n - 1) // 2


@lru_cache(maxsize=None)
def basis_pairs(n):
    """Lexicographic index pairs ``(i, j)``, ``i < j``, as an ``(N, 2)`` array."""
    if n < 2:
        raise ValueError(f"ambient dimension must be >= 2, got {n}")
    pairs = np.array([(i, j) for i in range(n) for j in range(i + 1, n)], dtype=int)
    pairs.setflags(write=False)
    return pairs


@lru_cache(maxsize=None)
def pair_index(n):
    """Return ``(index, sign)`` arrays of shape ``(n, n)``.

    ``e_i ^ e_j = sign[i, j] * omega[index[i, j]]``; on the diagonal the sign is 0.
    """
    index = np.zeros((n, n), dtype=int)
    sign = np.zeros((n, n))
    for a, (i, j) in enumerate(basis_pairs(n)):
        index[i, j] = index[j, i] = a
        sign[i, j] = 1.0
        sign[j, i] = -1.0
    index.setflags(write=False)
    sign.setflags(write=False)
    return index, sign


def _dim_from_len(length):
    n = int(round((1 + np.sqrt(1 + 8 * length)) / 2))
    if bivector_dim(n) != length or n < 2:
        raise ValueError(f"{length} is not of the form n(n-1)/2 with n >= 2")
    return n


@dataclass(frozen=True)
class Bivector:
    """Element of the exterior square of R^dim in lexicographic coordinates."""

    dim: int
    coords: np.ndarray

    def __post_init__(self):
        if self.dim < 2:
            raise ValueError(f"ambient dimension must be >= 2, got {self.dim}")
        c = np.array(self.coords, dtype=float).reshape(-1)
        if c.size != bivector_dim(self.dim):
            raise ValueError(
                f"expected {bivector_dim(self.dim)} coordinates for n={self.dim}, got {c.size}"
            )
        c.setflags(write=False)
        object.__setattr__(self, "coords", c)

    @classmethod
    def from_coords(cls, coords):
        coords = np.asarray(coords, dtype=float)
        return cls(_dim_from_len(coords.size), coords)

    def skew(self):
        return to_skew(self)

    def __add__(self, other):
        _check_same(self, other)
        return Bivector(self.dim, self.coords + other.coords)

    def __sub__(self, other):
        _check_same(self, other)
        return Bivector(self.dim, self.coords - other.coords)

    def __mul__(self, scalar):
        return Bivector(self.dim, self.coords * float(scalar))

    __rmul__ = __mul__

    def __neg__(self):
        return Bivector(self.dim, -self.coords)

    def norm(self):
        return float(np.sqrt(inner_bivector(self, self)))

    def apply(self, z):
        """Action of the bivector as an endomorphism of R^n."""
        z = np.asarray(z, dtype=float)
        if z.shape != (self.dim,):
            raise ValueError(f"vector of length {self.dim} expected, got shape {z.shape}")
        return to_skew(self) @ z


def _check_same(a, b):
    if a.dim != b.dim:
        raise ValueError(f"dimension mismatch: {a.dim} vs {b.dim}")


def basis_bivector(n, i, j):
    """``e_i ^ e_j`` (0-based indices, any order)."""
    index, sign = pair_index(n)
    c = np.zeros(bivector_dim(n))
    c[index[i, j]] = sign[i, j]
    return Bivector(n, c)


def to_skew(b):
    n = b.dim
    m = np.zeros((n, n))
    pairs = basis_pairs(n)
    m[pairs[:, 0], pairs[:, 1]] = b.coords
    m[pairs[:, 1], pairs[:, 0]] = -b.coords
    return m


def from_skew(m, tol=ATOL):
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"square matrix expected, got shape {m.shape}")
    scale = max(1.0, float(np.abs(m).max(initial=0.0)))
    if np.abs(m + m.T).max(initial=0.0) > tol * scale:
        raise ValueError("matrix is not antisymmetric")
    pairs = basis_pairs(m.shape[0])
    return Bivector(m.shape[0], m[pairs[:, 0], pairs[:, 1]])


def wedge(x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.ndim != 1 or x.shape != y.shape:
        raise ValueError(f"vectors of equal length expected, got {x.shape} and {y.shape}")
    if x.size < 2:
        raise ValueError("ambient dimension must be >= 2")
    m = np.outer(x, y) - np.outer(y, x)
    pairs = basis_pairs(x.size)
    return Bivector(x.size, m[pairs[:, 0], pairs[:, 1]])


def inner_bivector(a, b):
    """``<A, B> = -1/2 tr(AB)`` of the skew representatives."""
    _check_same(a, b)
    return float(-0.5 * np.trace(to_skew(a) @ to_skew(b)))


def decomposable_inner(u, v, w, z):
    """``<u ^ v, w ^ z>`` by the 2x2 Gram determinant."""
    u, v, w, z = (np.asarray(t, dtype=float) for t in (u, v, w, z))
    return float(np.dot(u, w) * np.dot(v, z) - np.dot(u, z) * np.dot(v, w))


def bracket(a, b):
    """so(n) commutator ``AB - BA`` returned as a bivector."""
    _check_same(a, b)
    ma, mb = to_skew(a), to_skew(b)
    return from_skew(ma @ mb - mb @ ma)
