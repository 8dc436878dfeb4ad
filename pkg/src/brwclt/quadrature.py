"""Adaptive trapezoid quadrature for smooth, vectorised integrands.

The integrands handled here (return probabilities and their iterated
integrals) are smooth on [0, inf) but vary on a scale that grows with t,
so the interval is cut into geometric panels and each panel is refined by
trapezoid halving until successive (Richardson-extrapolated) estimates agree.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from .errors import ToleranceNotReached

Integrand = Callable[[np.ndarray], np.ndarray]


def trapezoid_adaptive(f: Integrand, a: float, b: float, tol: float,
                       min_level: int = 3, max_level: int = 18):
    """Integrate ``f`` over ``[a, b]`` by repeated trapezoid halving.

    ``f`` maps a 1-D array of nodes to an array whose leading axis matches
    the nodes; trailing axes are integrated elementwise. Returns
    ``(value, error)`` where ``error`` is the last change between successive
    extrapolated estimates (max over trailing entries).
    """
    if b == a:
        shape = np.shape(f(np.array([a])))[1:]
        return np.zeros(shape) if shape else 0.0, 0.0
    h = b - a
    ends = f(np.array([a, b], dtype=float))
    trap = 0.5 * h * (ends[0] + ends[1])
    rows = [[trap]]
    n = 1
    for level in range(1, max_level + 1):
        h *= 0.5
        mids = a + h * (2 * np.arange(n) + 1)
        vals = f(mids)
        trap = 0.5 * trap + h * vals.sum(axis=0)
        n *= 2
        row = [trap]
        for j in range(1, level + 1):
            factor = 4.0 ** j
            row.append(row[j - 1] + (row[j - 1] - rows[-1][j - 1]) / (factor - 1.0))
        err = float(np.max(np.abs(row[-1] - rows[-1][-1])))
        rows.append(row)
        if level >= min_level and err < tol:
            out = row[-1]
            return (float(out) if np.ndim(out) == 0 else out), err
    raise ToleranceNotReached(
        f"trapezoid refinement on [{a}, {b}] stalled at error {err:.3e} > {tol:.3e}")


def panel_breaks(a: float, b: float, first: float = 1.0) -> list:
    """Geometric panel boundaries ``a, a+first, a+2first, a+4first, ...``."""
    breaks = [a]
    width = first
    while breaks[-1] + width < b:
        breaks.append(breaks[-1] + width)
        if len(breaks) > 2:
            width *= 2.0
    breaks.append(b)
    return breaks


def integrate(f: Integrand, a: float, b: float, tol: float, first: float = 1.0):
    """Panelled adaptive trapezoid; returns ``(value, error_bound)``."""
    if b < a:
        raise ValueError("integrate requires a <= b")
    breaks = panel_breaks(a, b, first)
    per_panel = tol / max(len(breaks) - 1, 1)
    total = 0.0
    err = 0.0
    for lo, hi in zip(breaks[:-1], breaks[1:]):
        val, e = trapezoid_adaptive(f, lo, hi, per_panel)
        total = total + val
        err += e
    return total, err
