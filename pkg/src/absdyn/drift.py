"""Markov kernel and Foster-Lyapunov drift for the folding chain.

With ``V`` the identity, the one-step expected value from ``y`` is
``U(y) = E|y - theta| = y (2 m(y) - 1) + E - 2 Y(y)``, where ``m`` is the
half-open CDF and ``Y`` the partial mean of the reference measure. ``U`` is
convex, equals ``E`` at zero, is minimal at the median, and approaches
``y - E`` from above.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .measures import EmpiricalMeasure, Measure1D, require_nontrivial

BISECT_TOL = 1e-10


@dataclass(frozen=True)
class DriftProfile:
    grid: np.ndarray
    u_values: np.ndarray
    mean: float
    median: float
    y0: float
    alpha_star: float
    y_star: float


@dataclass(frozen=True)
class DriftReport:
    passed: bool
    eps: float
    c_hi: float
    b: float
    violation_y: float | None
    checked_up_to: float


def transition_prob(mu: Measure1D, x: float, lo: float, hi: float) -> float:
    """``P(x, (lo, hi)) = mu{theta : |x - theta| in (lo, hi)}``."""
    if not 0 <= lo < hi:
        raise ValueError("need 0 <= lo < hi")
    return mu.interval_mass(x - hi, x - lo) + mu.interval_mass(x + lo, x + hi)


def drift_u(mu: Measure1D, y):
    """Expected next position ``E_mu |y - theta|`` (vectorized in ``y``)."""
    ya = np.asarray(y, dtype=float)
    if np.any(ya < 0):
        raise ValueError("y must be nonnegative")
    e = mu.mean
    if not math.isfinite(e):
        raise ArithmeticError("reference measure has no finite mean")
    m = np.asarray(mu.cdf(ya), dtype=float)
    big_y = np.asarray(mu.partial_mean(ya), dtype=float)
    u = ya * (2.0 * m - 1.0) + e - 2.0 * big_y
    return float(u) if np.ndim(y) == 0 else u


def _bisect(pred, lo: float, hi: float, tol: float = BISECT_TOL) -> float:
    """Boundary of a predicate true on ``[lo, c]`` and false on ``(c, hi]``."""
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if pred(mid):
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _upper_bracket(mu: Measure1D, alpha: float, start: float) -> float:
    e = mu.mean
    y = max(start, 1.0, 2.0 * e)
    for _ in range(200):
        if drift_u(mu, y) - y + alpha * e < 0:
            return y
        y *= 2.0
    raise ArithmeticError("no sign change found for the level point")


def level_point(mu: Measure1D, alpha: float, y_max: float | None = None) -> float:
    """``y_alpha`` solving ``U(y) = y - alpha E`` for ``-1 <= alpha < 1``.

    ``U(y) - y`` is nonincreasing, so the crossing is unique.
    """
    if not -1.0 <= alpha < 1.0:
        raise ValueError("alpha must lie in [-1, 1)")
    if alpha == -1.0:
        return 0.0
    e = mu.mean
    hi = _upper_bracket(mu, alpha, 0.0) if y_max is None else y_max
    if drift_u(mu, hi) - hi + alpha * e >= 0:
        raise ArithmeticError(f"y_max={hi:g} too small for the level alpha={alpha:g}")
    return _bisect(lambda y: drift_u(mu, y) - y + alpha * e >= 0, 0.0, hi)


def y_star(mu: Measure1D) -> float:
    """Largest ``y`` with ``U(y) <= E``.

    ``U(y) >= y - E`` by Jensen, so the point lies in ``[median, 2E]``. ``U``
    can be flat at ``E`` when ``mu`` has an atom of weight >= 1/2 at 0; the
    bisection returns the right end of the flat piece.
    """
    e = mu.mean
    return _bisect(lambda y: drift_u(mu, y) <= e, float(mu.quantile(0.5)), 2.0 * e + 1e-9)


def drift_profile(mu: Measure1D, y_max: float, n: int = 512) -> DriftProfile:
    require_nontrivial(mu)
    if n < 64:
        raise ValueError("n must be >= 64")
    e = mu.mean
    med = float(mu.quantile(0.5))
    grid = np.linspace(0.0, y_max, n)
    u = drift_u(mu, grid)
    if not drift_u(mu, y_max) - y_max < 0:
        raise ArithmeticError(f"y_max={y_max:g} too small: U(y) - y has no sign change")
    if not drift_u(mu, y_max) > e:
        raise ArithmeticError(f"y_max={y_max:g} too small: U does not climb back above E")
    y0 = level_point(mu, 0.0, y_max)
    ys = y_star(mu)
    return DriftProfile(
        grid=grid,
        u_values=u,
        mean=e,
        median=med,
        y0=y0,
        alpha_star=ys / e - 1.0,
        y_star=ys,
    )


def chord_bound(mu: Measure1D, alpha: float, beta: float, y: float) -> tuple[float, bool]:
    """Secant majorant of ``U`` between the level points ``y_alpha`` and ``y_beta``.

    ``beta = 1`` means ``y_beta = inf`` and the chord degenerates to
    ``y - alpha E``. Returns ``(ell, U(y) <= ell + 1e-9)``.
    """
    if not -1.0 <= alpha < beta <= 1.0:
        raise ValueError("need -1 <= alpha < beta <= 1")
    require_nontrivial(mu)
    e = mu.mean
    ya = level_point(mu, alpha)
    slack = 4 * BISECT_TOL
    if beta == 1.0:
        if y < ya - slack:
            raise ValueError(f"y={y:g} lies left of y_alpha={ya:g}")
        ell = y - alpha * e
    else:
        yb = level_point(mu, beta)
        if not ya - slack <= y <= yb + slack:
            raise ValueError(f"y={y:g} outside [{ya:g}, {yb:g}]")
        ell = y - (alpha * (yb - y) + beta * (y - ya)) / (yb - ya) * e
    return ell, bool(drift_u(mu, y) <= ell + 1e-9)


def verify_drift_condition(mu: Measure1D, eps: float, c_hi: float | None = None, n: int = 4096) -> DriftReport:
    """Check ``U(y) <= y - eps + b 1_C(y)`` with ``C = [0, c_hi]``.

    ``U(y) - y`` is nonincreasing, so a violation anywhere right of ``c_hi``
    shows up at the first grid point; the dense grid out to ``c_hi + 50 E``
    is a guard, not a necessity. ``c_hi`` defaults to ``y_star``.
    """
    require_nontrivial(mu)
    if eps <= 0:
        raise ValueError("eps must be positive")
    e = mu.mean
    if c_hi is None:
        c_hi = y_star(mu)
    far = c_hi + 50.0 * max(e, 1e-12)
    outside = np.linspace(c_hi, far, n)[1:]
    gap = drift_u(mu, outside) - outside + eps
    bad = np.flatnonzero(gap > 1e-12)
    inside = np.linspace(0.0, c_hi, n)
    b = float(max(np.max(drift_u(mu, inside) - inside + eps), 0.0))
    return DriftReport(
        passed=bad.size == 0 and math.isfinite(b),
        eps=eps,
        c_hi=float(c_hi),
        b=b,
        violation_y=float(outside[bad[0]]) if bad.size else None,
        checked_up_to=float(far),
    )


def invariant_estimate(mu: Measure1D, x0: float, burn_in: int, n: int, seed: int) -> EmpiricalMeasure:
    """Empirical law of one long run of the chain after discarding ``burn_in`` steps."""
    require_nontrivial(mu)
    if n < 1000:
        raise ValueError("n must be >= 1000")
    thetas = mu.draw(seed, burn_in + n).tolist()
    x = float(x0)
    for t in thetas[:burn_in]:
        x = abs(x - t)
    out = np.empty(n)
    for k, t in enumerate(thetas[burn_in:]):
        x = abs(x - t)
        out[k] = x
    return EmpiricalMeasure(out)
