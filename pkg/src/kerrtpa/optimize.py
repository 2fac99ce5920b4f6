"""Bracketed golden-section minimisation."""

from __future__ import annotations

import math
from dataclasses import dataclass

INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class GoldenResult:
    x: float
    fun: float
    n_evals: int
    converged: bool
    lo: float
    hi: float


def golden_section(f, lo, hi, xtol=1e-8, maxiter=200):
    """
    Minimise a unimodal scalar function on [lo, hi].

    Stops when the bracket is narrower than ``xtol``. The end points are
    evaluated too, so a minimum sitting on a bound is returned exactly.
    """
    if hi < lo:
        lo, hi = hi, lo
    a, b = lo, hi
    x1 = b - INV_PHI * (b - a)
    x2 = a + INV_PHI * (b - a)
    f1, f2 = f(x1), f(x2)
    n = 2
    it = 0
    while b - a > xtol and it < maxiter:
        if f1 <= f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - INV_PHI * (b - a)
            f1 = f(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + INV_PHI * (b - a)
            f2 = f(x2)
        n += 1
        it += 1
    x, fx = (x1, f1) if f1 <= f2 else (x2, f2)
    for edge in (lo, hi):
        if abs(edge - x) <= (b - a) + xtol:
            fe = f(edge)
            n += 1
            if fe < fx:
                x, fx = edge, fe
    converged = b - a <= xtol and math.isfinite(fx)
    return GoldenResult(x=x, fun=fx, n_evals=n, converged=converged, lo=a, hi=b)
