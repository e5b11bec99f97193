"""Log-log exponent fitting shared by the measurement modules."""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

__all__ = ["ExponentFit", "fit_loglog"]


@dataclass(frozen=True)
class ExponentFit:
    slope: float
    intercept: float
    ci_halfwidth: float
    n_points: int
    excluded: int = 0


def fit_loglog(xs, ys, min_points: int = 4) -> ExponentFit:
    """OLS slope of log(y) vs log(x).

    Nonpositive y values are excluded (and counted).  The normal equations
    are solved in exact rational arithmetic on the log values, so two runs on
    the same data give bit-identical slopes regardless of summation order.
    """
    pairs = [(x, y) for x, y in zip(xs, ys) if y > 0 and x > 0]
    excluded = len(list(xs)) - len(pairs)
    n = len(pairs)
    if n < min_points:
        raise ValueError(f"need at least {min_points} positive points, got {n}")
    lx = [Fraction(math.log(x)) for x, _ in pairs]
    ly = [Fraction(math.log(y)) for _, y in pairs]
    sx, sy = sum(lx), sum(ly)
    sxx = sum(v * v for v in lx)
    sxy = sum(u * v for u, v in zip(lx, ly))
    det = n * sxx - sx * sx
    if det == 0:
        raise ValueError("degenerate fit: all abscissae coincide")
    slope = (n * sxy - sx * sy) / det
    intercept = (sy - slope * sx) / n
    slope_f, intercept_f = float(slope), float(intercept)

    # 95% confidence half-width for the slope (floating point is fine here)
    lxf = np.array([float(v) for v in lx])
    lyf = np.array([float(v) for v in ly])
    resid = lyf - (slope_f * lxf + intercept_f)
    if n > 2:
        s2 = float(resid @ resid) / (n - 2)
        sxx_c = float(((lxf - lxf.mean()) ** 2).sum())
        from scipy.stats import t as student_t

        half = float(student_t.ppf(0.975, n - 2)) * math.sqrt(s2 / sxx_c)
    else:
        half = math.inf
    return ExponentFit(
        slope=slope_f,
        intercept=intercept_f,
        ci_halfwidth=half,
        n_points=n,
        excluded=excluded,
    )
