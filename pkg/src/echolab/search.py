"""Grid-then-refine 1-D optimizers used by every parameter search."""

from __future__ import annotations

import math

import numpy as np
from scipy.optimize import minimize_scalar

ANGLE_STEP = 1e-3


def parabolic_vertex(x0, x1, x2, y0, y1, y2):
    """Abscissa of the parabola through three points (None if degenerate)."""
    d = (x1 - x0) * (y1 - y2) - (x1 - x2) * (y1 - y0)
    if d == 0:
        return None
    n = (x1 - x0) ** 2 * (y1 - y2) - (x1 - x2) ** 2 * (y1 - y0)
    return x1 - 0.5 * n / d


def maximize_angle(f, lo=0.0, hi=math.pi, step=ANGLE_STEP, periodic=True):
    """Maximize a vectorized ``f`` over [lo, hi) by grid plus parabolic refinement.

    ``f`` must accept a 1-D array of angles.  With ``periodic`` the grid wraps,
    which is right for axis angles on [0, pi).  Returns ``(x, f(x))``.
    """
    n = max(3, int(math.ceil((hi - lo) / step)))
    xs = lo + (hi - lo) * np.arange(n) / n if periodic else np.linspace(lo, hi, n + 1)
    ys = np.asarray(f(xs), dtype=float)
    i = int(np.argmax(ys))
    h = xs[1] - xs[0]
    if periodic:
        y_l, y_r = ys[(i - 1) % len(xs)], ys[(i + 1) % len(xs)]
    elif 0 < i < len(xs) - 1:
        y_l, y_r = ys[i - 1], ys[i + 1]
    else:
        return float(xs[i]), float(ys[i])
    x = parabolic_vertex(xs[i] - h, xs[i], xs[i] + h, y_l, ys[i], y_r)
    best_x, best_y = float(xs[i]), float(ys[i])
    if x is not None and abs(x - xs[i]) <= h:
        y = float(np.asarray(f(np.array([x])))[0])
        if y >= best_y:
            best_x, best_y = x, y
    if periodic:
        best_x = lo + (best_x - lo) % (hi - lo)
    return best_x, best_y


def minimize_angle(f, lo=0.0, hi=math.pi, step=ANGLE_STEP, periodic=True):
    x, y = maximize_angle(lambda a: -np.asarray(f(a)), lo, hi, step, periodic)
    return x, -y


def refine_max(f, xs, ys, xatol):
    """Polish the best grid point of a scalar function with bounded Brent search.

    The bracket is the two neighbouring grid cells.  Returns ``(x, f(x), i)``
    where ``i`` is the grid index that seeded the search.
    """
    ys = np.asarray(ys, dtype=float)
    i = int(np.nanargmax(ys))
    a = xs[max(i - 1, 0)]
    b = xs[min(i + 1, len(xs) - 1)]
    best_x, best_y = float(xs[i]), float(ys[i])
    if b > a:
        res = minimize_scalar(lambda x: -f(x), bounds=(a, b), method="bounded",
                              options={"xatol": xatol})
        if -res.fun >= best_y:
            best_x, best_y = float(res.x), float(-res.fun)
    return best_x, best_y, i
