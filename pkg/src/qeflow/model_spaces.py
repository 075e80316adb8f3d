"""Closed-form curvature operators of symmetric model spaces and their products."""

import re
from dataclasses import dataclass, field

import numpy as np

from .bivectors import basis_pairs, bivector_dim, pair_index
from .curvature import CurvatureOperator, q_of, ricci_of

__all__ = [
    "ModelSpaceSpec",
    "space_form_operator",
    "product_operator",
    "einstein_identity_residual",
    "best_scalar_fit_residual",
    "space_form",
    "product",
    "parse_model_space",
    "EINSTEIN_TOL",
]

EINSTEIN_TOL = 1e-12


@dataclass(frozen=True)
class ModelSpaceSpec:
    """A catalog entry.

    ``factors`` lists ``(dimension, curvature)`` pairs; a single factor is a
    space form.  ``einstein_constant`` is the tensor Einstein constant, or ``None``.
    """

    kind: str
    factors: tuple
    symmetric: bool = True
    einstein_constant: object = field(default=None)

    def __post_init__(self):
        if self.kind not in ("space_form", "product"):
            raise ValueError(f"unknown model space kind {self.kind!r}")
        facs = tuple((int(d), float(k)) for d, k in self.factors)
        if not facs:
            raise ValueError("at least one factor required")
        if self.kind == "space_form" and len(facs) != 1:
            raise ValueError("a space form has exactly one factor")
        for d, _ in facs:
            if d < 1 or (self.kind == "space_form" and d < 2):
                raise ValueError(f"invalid factor dimension {d}")
        object.__setattr__(self, "factors", facs)
        lam = _einstein_constant(facs)
        if self.einstein_constant is None:
            object.__setattr__(self, "einstein_constant", lam)
        elif lam is None or abs(float(self.einstein_constant) - lam) > EINSTEIN_TOL * max(1.0, abs(lam)):
            raise ValueError("declared Einstein constant disagrees with the factors")

    @property
    def dim(self):
        return sum(d for d, _ in self.factors)

    @property
    def is_einstein(self):
        return self.einstein_constant is not None

    def operator(self):
        """Operator-normalized curvature of the model (line factors are flat)."""
        out = None
        line = False
        for d, k in self.factors:
            op = space_form_operator(d, k) if d >= 2 else None
            if out is None and not line:
                out, line = op, op is None
            else:
                out, line = product_operator(out, op), False
        if out is None:
            raise ValueError("model space must have dimension >= 2")
        return out

    def name(self):
        parts = [f"sphere({d},{_fmt(k)})" if k > 0 else
                 f"hyperbolic({d},{_fmt(-k)})" if k < 0 else f"flat({d})"
                 for d, k in self.factors]
        if self.kind == "space_form":
            d, k = self.factors[0]
            if k > 0:
                return f"sphere:n={d},k={_fmt(k)}"
            if k < 0:
                return f"hyperbolic:n={d},k={_fmt(-k)}"
            return f"flat:n={d}"
        return "product:" + "x".join(parts)


def _fmt(x):
    return f"{x:g}"


def _einstein_constant(facs):
    consts = {(d - 1) * k for d, k in facs if d >= 2}
    if any(d == 1 for d, _ in facs):
        consts.add(0.0)
    vals = sorted(consts)
    if vals and vals[-1] - vals[0] <= EINSTEIN_TOL * max(1.0, abs(vals[-1])):
        return float(vals[0])
    return None


def space_form_operator(n, kappa):
    """Operator ``2 kappa Id`` of the space form of curvature ``kappa``."""
    n = int(n)
    if n < 2:
        raise ValueError(f"space forms need n >= 2, got {n}")
    return CurvatureOperator(n, 2.0 * float(kappa) * np.eye(bivector_dim(n)), bianchi=True)


def product_operator(R1, R2):
    """Block operator of a Riemannian product; ``None`` stands for a line factor."""
    n1 = 1 if R1 is None else R1.dim
    n2 = 1 if R2 is None else R2.dim
    n = n1 + n2
    if n < 2:
        raise ValueError("product must have dimension >= 2")
    index, _ = pair_index(n)
    m = np.zeros((bivector_dim(n),) * 2)
    for R, off in ((R1, 0), (R2, n1)):
        if R is None or R.dim < 2:
            continue
        if not isinstance(R, CurvatureOperator):
            raise TypeError("factors must be curvature operators")
        Ro = R.as_operator()
        p = basis_pairs(R.dim) + off
        ids = index[p[:, 0], p[:, 1]]
        m[np.ix_(ids, ids)] = Ro.matrix
    return CurvatureOperator(n, m, bianchi=True)


def space_form(n, kappa):
    return ModelSpaceSpec("space_form", ((n, kappa),))


def product(*factors):
    return ModelSpaceSpec("product", tuple(factors))


def einstein_identity_residual(spec):
    """Relative defect ``|Q(R) - 2 lambda R| / |R|`` of a symmetric Einstein model."""
    if not isinstance(spec, ModelSpaceSpec):
        raise TypeError("ModelSpaceSpec expected")
    if not spec.symmetric:
        raise ValueError("the Laplacian term can only be dropped on symmetric spaces")
    if not spec.is_einstein:
        raise ValueError(f"{spec.name()} is not Einstein")
    R = spec.operator()
    defect = np.linalg.norm(q_of(R).matrix - 2.0 * spec.einstein_constant * R.matrix)
    scale = np.linalg.norm(R.matrix)
    if scale == 0.0:
        return float(defect)
    return float(defect / scale)


def best_scalar_fit_residual(R):
    """``min_c |Q(R) - c R| / |Q(R)|``; zero exactly when ``Q(R)`` is proportional to ``R``."""
    q = q_of(R).matrix.reshape(-1)
    r = R.as_operator().matrix.reshape(-1)
    rr = float(r @ r)
    if rr == 0.0:
        return 0.0
    c = float(q @ r) / rr
    qn = np.linalg.norm(q)
    return float(np.linalg.norm(q - c * r) / qn) if qn else 0.0


_NUM = r"[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?"
_FACTOR = re.compile(rf"^(sphere|hyperbolic|flat)\(\s*(\d+)\s*(?:,\s*({_NUM})\s*)?\)$")


def _factor(kind, d, k):
    d = int(d)
    if kind == "flat":
        if k is not None:
            raise ValueError("flat factors take no curvature")
        return d, 0.0
    k = 1.0 if k is None else float(k)
    if k <= 0:
        raise ValueError(f"{kind} curvature magnitude must be positive")
    return d, k if kind == "sphere" else -k


def parse_model_space(name):
    """Parse names such as ``sphere:n=5,k=1`` or ``product:sphere(2,1)xsphere(2,1)``."""
    name = name.strip()
    kind, sep, rest = name.partition(":")
    if not sep:
        raise ValueError(f"model space name {name!r} lacks a ':'")
    if kind in ("sphere", "hyperbolic", "flat"):
        params = {}
        for item in filter(None, (s.strip() for s in rest.split(","))):
            key, eq, val = item.partition("=")
            if not eq or key not in ("n", "k"):
                raise ValueError(f"bad parameter {item!r} in {name!r}")
            params[key] = val
        if "n" not in params:
            raise ValueError(f"{name!r} needs n=")
        d, k = _factor(kind, params["n"], params.get("k"))
        if d < 2:
            raise ValueError("space forms need n >= 2")
        return space_form(d, k)
    if kind == "product":
        facs = []
        for part in rest.split("x"):
            m = _FACTOR.match(part.strip())
            if not m:
                raise ValueError(f"bad product factor {part!r}")
            facs.append(_factor(m.group(1), m.group(2), m.group(3)))
        if len(facs) < 2:
            raise ValueError("a product needs at least two factors")
        return product(*facs)
    raise ValueError(f"unknown model space kind {kind!r}")
