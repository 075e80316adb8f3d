"""Ricci flow on products of space forms, reduced to an ODE for the squared radii.

A factor of dimension ``p`` whose reference metric has sectional curvature
``kappa`` evolves as ``alpha(t) g_ref`` with ``d alpha/dt = -2 (p - 1) kappa``.
In the evolving orthonormal frame its curvature operator block is ``2 kappa/alpha``.
"""

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .curvature import CurvatureOperator, q_of
from .model_spaces import product_operator, space_form_operator

__all__ = [
    "Factor",
    "FlowState",
    "FlowTrace",
    "flow_factors",
    "flow_einstein",
    "flow_product_spheres",
    "operator_at",
    "curvature_evolution_residual",
    "residual_series",
]


@dataclass(frozen=True)
class Factor:
    dim: int
    kappa: float = 1.0

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("factor dimension must be positive")
        if not math.isfinite(self.kappa):
            raise ValueError("kappa must be finite")

    @property
    def rate(self):
        """``d alpha / dt``."""
        return -2.0 * (self.dim - 1) * self.kappa


@dataclass(frozen=True)
class FlowState:
    t: float
    alphas: tuple

    def __post_init__(self):
        if any(a <= 0 for a in self.alphas):
            raise ValueError("all squared radii must stay positive")


@dataclass
class FlowTrace:
    factors: tuple
    times: np.ndarray
    alphas: np.ndarray
    blowup: bool
    blowup_time: object
    dt: float
    meta: dict = field(default_factory=dict)

    def states(self):
        return [FlowState(float(t), tuple(map(float, a))) for t, a in zip(self.times, self.alphas)]

    def operators(self):
        return [operator_at(self.factors, a) for a in self.alphas]

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf)
        w.writerow(["t", *(f"alpha_{i}" for i in range(len(self.factors))), "blowup"])
        for t, a in zip(self.times, self.alphas):
            w.writerow([repr(float(t)), *(repr(float(x)) for x in a), int(self.blowup)])
        return buf.getvalue()

    def to_json(self):
        return {
            "factors": [[f.dim, f.kappa] for f in self.factors],
            "t": [float(x) for x in self.times],
            "alphas": [[float(x) for x in row] for row in self.alphas],
            "blowup": self.blowup,
            "blowup_time": self.blowup_time,
            "dt": self.dt,
        }


def _rk4_step(rates, y, dt):
    def F(_y):
        return rates

    k1 = F(y)
    k2 = F(y + dt / 2 * k1)
    k3 = F(y + dt / 2 * k2)
    k4 = F(y + dt * k3)
    return y + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)


def flow_factors(factors, alpha0, T, dt):
    """Integrate the radii ODE with classical RK4 until ``T`` or until a factor collapses."""
    factors = tuple(factors)
    if dt <= 0:
        raise ValueError("dt must be positive")
    if T < 0:
        raise ValueError("T must be nonnegative")
    y = np.array(alpha0, dtype=float)
    if y.shape != (len(factors),) or np.any(y <= 0):
        raise ValueError("need one positive initial squared radius per factor")
    rates = np.array([f.rate for f in factors])
    nsteps = int(math.ceil(T / dt - 1e-12))
    times = [0.0]
    hist = [y.copy()]
    blowup, t_blow = False, None
    for k in range(nsteps):
        step = min(dt, T - times[-1])
        nxt = _rk4_step(rates, y, step)
        if np.any(nxt <= 0):
            blowup = True
            # collapse time of the first factor, from the current slope
            with np.errstate(divide="ignore"):
                tc = np.where(rates < 0, -y / rates, np.inf)
            t_blow = times[-1] + float(np.min(tc))
            break
        y = nxt
        times.append(times[-1] + step if k < nsteps - 1 else float(T))
        hist.append(y.copy())
    if not blowup:
        with np.errstate(divide="ignore"):
            tc = np.where(rates < 0, -y / rates, np.inf)
        if np.isfinite(np.min(tc)) and np.min(tc) == 0:
            blowup, t_blow = True, times[-1]
    return FlowTrace(factors, np.array(times), np.array(hist), blowup, t_blow, dt)


def flow_einstein(lam, T, dt=1e-3, n=3):
    """Einstein space form of dimension ``n`` with ``Ric = lam g``; exact flow ``(1 - 2 lam t) g``."""
    if n < 2:
        raise ValueError("n must be >= 2")
    trace = flow_factors((Factor(n, lam / (n - 1)),), (1.0,), T, dt)
    trace.meta.update(lam=lam, n=n)
    return trace


def flow_product_spheres(p, alpha0, q, beta0, T, dt=1e-3):
    if p < 2 or q < 2:
        raise ValueError("sphere factors need dimension >= 2")
    if alpha0 <= 0 or beta0 <= 0:
        raise ValueError("initial squared radii must be positive")
    return flow_factors((Factor(p, 1), Factor(q, 1)), (alpha0, beta0), T, dt)


def operator_at(factors, alphas):
    """Evolving-frame curvature operator of the product with squared radii ``alphas``."""
    out = None
    for fac, a in zip(factors, alphas):
        op = space_form_operator(fac.dim, fac.kappa / a) if fac.dim >= 2 else None
        if out is None:
            out = op if op is not None else "line"
        else:
            out = product_operator(None if out == "line" else out, op)
    if out == "line" or out is None:
        raise ValueError("flow must have total dimension >= 2")
    return out


def residual_series(trace):
    """``|dR/dt - Q(R)| / max(|R|^2, tiny)`` at interior times via centered differences."""
    if len(trace.times) < 3:
        raise ValueError("trace too short for centered differences")
    ops = [op.matrix for op in trace.operators()]
    t = trace.times
    out_t, out_r = [], []
    for k in range(1, len(t) - 1):
        dRdt = (ops[k + 1] - ops[k - 1]) / (t[k + 1] - t[k - 1])
        Q = q_of(CurvatureOperator(_dim(trace.factors), ops[k])).matrix
        scale = np.linalg.norm(ops[k]) ** 2
        err = np.linalg.norm(dRdt - Q)
        out_t.append(float(t[k]))
        out_r.append(float(err / scale) if scale > 0 else float(err))
    return np.array(out_t), np.array(out_r)


def _dim(factors):
    return sum(f.dim for f in factors)


def curvature_evolution_residual(trace):
    return float(np.max(residual_series(trace)[1]))
