"""Central finite differences on uniform grids with ghost-point closures.

Ghost values come either from a parity reflection about an end point (used at
poles of a rotationally symmetric metric, where the profile is odd and scalar
fields are even) or from polynomial extrapolation at free ends.

Arithmetic is carried out in ``numpy.longdouble``: the curvature identities
nest up to four derivatives, and double-precision roundoff amplified by
``h**-4`` would otherwise swamp fourth-order truncation on moderate grids.
"""

from fractions import Fraction
from functools import lru_cache

import numpy as np

__all__ = [
    "DTYPE",
    "ORDERS",
    "PARITIES",
    "extrapolation_weights",
    "pad",
    "derivative",
    "flip",
    "stencil_reach",
]

DTYPE = np.longdouble
ORDERS = (2, 4, 6)
PARITIES = ("even", "odd", None)

# (integer numerators, denominator) for the k-th derivative at each order
_STENCILS = {
    (2, 1): ((-1, 0, 1), 2),
    (2, 2): ((1, -2, 1), 1),
    (4, 1): ((1, -8, 0, 8, -1), 12),
    (4, 2): ((-1, 16, -30, 16, -1), 12),
    (6, 1): ((-1, 9, -45, 0, 45, -9, 1), 60),
    (6, 2): ((2, -27, 270, -490, 270, -27, 2), 180),
}

# number of samples used to extrapolate ghost values at free ends
_EXTRAP_POINTS = {2: 6, 4: 8, 6: 10}


def stencil_reach(order):
    return len(_STENCILS[(order, 1)][0]) // 2


def flip(parity):
    """Parity of the derivative of a field with the given parity."""
    return {"even": "odd", "odd": "even", None: None}[parity]


@lru_cache(maxsize=None)
def extrapolation_weights(npts, x):
    """Exact Lagrange weights on nodes ``0..npts-1`` evaluated at ``x``."""
    w = []
    for k in range(npts):
        v = Fraction(1)
        for j in range(npts):
            if j != k:
                v *= Fraction(x - j, k - j)
        w.append(v)
    out = np.array([float(v) for v in w], dtype=DTYPE)
    out.setflags(write=False)
    return out


def pad(u, ng, left, right, extrap_points=8):
    """Return ``u`` with ``ng`` ghost values on each side."""
    u = np.asarray(u)
    n = u.size
    if n < max(extrap_points, ng + 1):
        raise ValueError(f"need at least {max(extrap_points, ng + 1)} samples, got {n}")
    out = np.empty(n + 2 * ng, dtype=u.dtype)
    out[ng:ng + n] = u
    rev = u[::-1]
    for g in range(1, ng + 1):
        out[ng - g] = _ghost(u, g, left, extrap_points)
        out[ng + n - 1 + g] = _ghost(rev, g, right, extrap_points)
    return out


def _ghost(u, g, parity, npts):
    if parity == "even":
        return u[g]
    if parity == "odd":
        return -u[g]
    if parity is None:
        return extrapolation_weights(npts, -g) @ u[:npts]
    raise ValueError(f"parity must be one of {PARITIES}, got {parity!r}")


def derivative(u, h, k, order=4, left=None, right=None):
    """k-th derivative (k in {1, 2}) of samples ``u`` with spacing ``h``.

    ``left``/``right`` give the parity of ``u`` about each end point, or ``None``
    for a free end closed by extrapolation.
    """
    if order not in ORDERS:
        raise ValueError(f"order must be one of {ORDERS}, got {order}")
    if k not in (1, 2):
        raise ValueError("only first and second derivatives are provided")
    coeffs, den = _STENCILS[(order, k)]
    ng = len(coeffs) // 2
    u = np.asarray(u, dtype=DTYPE)
    e = pad(u, ng, left, right, _EXTRAP_POINTS[order])
    n = u.size
    acc = np.zeros(n, dtype=DTYPE)
    for i, c in enumerate(coeffs):
        if c:
            acc += c * e[i:i + n]
    return acc / (den * DTYPE(h) ** k)
