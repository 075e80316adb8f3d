"""Observed convergence orders from residuals on a sequence of grids or steps."""

from dataclasses import dataclass

import numpy as np

__all__ = ["ConvergenceStudy", "pairwise_orders", "fitted_order", "study"]


def pairwise_orders(h, err):
    """``log(e_i/e_{i+1}) / log(h_i/h_{i+1})`` for consecutive levels; NaN where undefined."""
    h = np.asarray(h, dtype=float)
    e = np.abs(np.asarray(err, dtype=float))
    out = np.full(max(len(h) - 1, 0), np.nan)
    for i in range(len(out)):
        if e[i] > 0 and e[i + 1] > 0 and h[i] != h[i + 1]:
            out[i] = np.log(e[i] / e[i + 1]) / np.log(h[i] / h[i + 1])
    return out


def fitted_order(h, err):
    """Least-squares slope of ``log e`` against ``log h`` over levels with nonzero error."""
    h = np.asarray(h, dtype=float)
    e = np.abs(np.asarray(err, dtype=float))
    ok = e > 0
    if ok.sum() < 2:
        return float("nan")
    return float(np.polyfit(np.log(h[ok]), np.log(e[ok]), 1)[0])


@dataclass
class ConvergenceStudy:
    levels: list
    h: list
    errors: list
    orders: list
    fitted: float

    def to_json(self):
        return {
            "levels": list(self.levels),
            "h": [float(x) for x in self.h],
            "errors": [float(x) for x in self.errors],
            "orders": [None if np.isnan(x) else float(x) for x in self.orders],
            "fitted_order": None if np.isnan(self.fitted) else self.fitted,
        }


def study(error_at, levels, spacing):
    """Evaluate ``error_at(level)`` for each level; ``spacing(level)`` gives its step size."""
    levels = list(levels)
    if len(levels) < 2:
        raise ValueError("need at least two levels")
    h = [float(spacing(lv)) for lv in levels]
    err = [float(error_at(lv)) for lv in levels]
    return ConvergenceStudy(levels, h, err, list(pairwise_orders(h, err)), fitted_order(h, err))
