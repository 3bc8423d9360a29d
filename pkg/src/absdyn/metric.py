"""Wasserstein distances on the half-line and contraction diagnostics.

On the line with cost ``|x - y|^p`` (``p >= 1``) the monotone coupling
``u -> (Q_rho(u), Q_pi(u))`` is optimal, so ``W_p`` is an integral over
``u`` in (0, 1). Every supported representation has a quantile function
that is piecewise affine in ``u`` (constant for atoms, linear across a cell
of constant density), so the integral is evaluated exactly piece by piece.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .measures import GridMeasure, Measure1D, require_nontrivial
from .transfer import Coupling2D, iterate_push

MARGIN_RTOL = 1e-12


# --------------------------------------------------------------------------
# distances


def _mean_abs_power(da: np.ndarray, db: np.ndarray, p: float) -> np.ndarray:
    """Average of ``|d|^p`` over ``t in [0, 1]`` for ``d`` affine from ``da`` to ``db``."""
    out = np.empty_like(da)
    cross = da * db < 0
    # sign change: split at the root, each side integrates to |end|^p / (p + 1)
    a, b = np.abs(da[cross]), np.abs(db[cross])
    out[cross] = (a ** (p + 1) + b ** (p + 1)) / ((p + 1) * (a + b))
    same = ~cross
    lo = np.minimum(np.abs(da[same]), np.abs(db[same]))
    hi = np.maximum(np.abs(da[same]), np.abs(db[same]))
    with np.errstate(divide="ignore", invalid="ignore"):
        r = (hi - lo) / lo
        # (hi^(p+1) - lo^(p+1)) / ((p+1)(hi - lo)), written to survive hi ~ lo
        ratio = np.where(r > 0, np.expm1((p + 1) * np.log1p(r)) / ((p + 1) * r), 1.0)
        val = lo**p * ratio
    val = np.where(lo == 0.0, hi**p / (p + 1), val)
    out[same] = val
    return out


def wasserstein_pp(rho: Measure1D, pi: Measure1D, p: float = 1.0) -> float:
    """``W_p(rho, pi) ** p``."""
    if p < 1:
        raise ValueError("p must be >= 1")
    for m in (rho, pi):
        if isinstance(m, GridMeasure):
            m.check_tail()
    pr, pp = rho.quantile_pieces(), pi.quantile_pieces()
    bps = np.unique(np.concatenate(([0.0, 1.0], pr[0], pr[1], pp[0], pp[1])))
    bps = bps[(bps >= 0.0) & (bps <= 1.0)]
    a, b = bps[:-1], bps[1:]
    keep = b > a
    a, b = a[keep], b[keep]
    mid = 0.5 * (a + b)
    # locate each sub-interval by its midpoint, then evaluate the affine piece at both ends
    ia = _piece_values(pr, mid, a, b)
    ib = _piece_values(pp, mid, a, b)
    da = ia[0] - ib[0]
    db = ia[1] - ib[1]
    total = float(np.sum((b - a) * _mean_abs_power(da, db, p)))
    if not math.isfinite(total):
        raise ArithmeticError("p-th moment diverges")
    return total


def _piece_values(pieces, mid, a, b):
    u0, u1, q0, q1 = pieces
    i = np.clip(np.searchsorted(u1, mid, side="left"), 0, u0.size - 1)
    span = u1[i] - u0[i]
    slope = np.where(span > 0, (q1[i] - q0[i]) / np.where(span > 0, span, 1.0), 0.0)
    return q0[i] + slope * (a - u0[i]), q0[i] + slope * (b - u0[i])


def wasserstein_p(rho: Measure1D, pi: Measure1D, p: float = 1.0) -> float:
    """p-Wasserstein distance via the quantile coupling, integrated exactly."""
    return wasserstein_pp(rho, pi, p) ** (1.0 / p)


def wp_of_coupling(gamma: Coupling2D, p: float = 1.0) -> float:
    """Transport cost of a given coupling, ``(sum w |x - y|^p)^(1/p)``."""
    if p < 1:
        raise ValueError("p must be >= 1")
    return float(np.dot(gamma.w, np.abs(gamma.x - gamma.y) ** p)) ** (1.0 / p)


def decrease_experiment(
    rho: Measure1D,
    pi: Measure1D,
    mu: Measure1D,
    p: float,
    n: int,
    *,
    strict: bool = False,
    renormalize: bool = False,
) -> list[float]:
    """``W_p(T*^k rho, T*^k pi)`` for ``k = 0..n``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rs = iterate_push(rho, mu, n, strict=strict, renormalize=renormalize)
    ps = iterate_push(pi, mu, n, strict=strict, renormalize=renormalize)
    return [wasserstein_p(a, b, p) for a, b in zip(rs, ps)]


# --------------------------------------------------------------------------
# (A, B, C) condition


@dataclass(frozen=True)
class IntervalProbe:
    x: float
    y: float
    L: float
    U: float
    margin_geom: float
    margin_mass: float


@dataclass(frozen=True)
class ABCWitness:
    A: float
    B: float
    C: float
    interval_probe: list


class ABCViolation(ArithmeticError):
    """No admissible sub-interval for some probe; ``probe`` holds the best candidate tried."""

    def __init__(self, probe: IntervalProbe, message: str):
        super().__init__(message)
        self.probe = probe


def _unbounded(mu: Measure1D) -> bool:
    return isinstance(mu, GridMeasure) and (mu.tail_mass > 0 or mu.values[-1] > 0)


def _score(mu, A, B, C, x, y, lo, hi) -> IntervalProbe:
    w = y - x
    reach = max(abs(2 * lo - x - y), abs(2 * hi - x - y))
    geom = A * w - reach
    mass = mu.interval_mass(lo, hi) - C * mu.interval_mass(x, y) ** B
    return IntervalProbe(x, y, lo, hi, geom, mass)


def _admissible(pr: IntervalProbe, scale_geom: float, scale_mass: float) -> bool:
    return (
        pr.L < pr.U
        and pr.margin_geom >= -MARGIN_RTOL * max(1.0, scale_geom)
        and pr.margin_mass >= -MARGIN_RTOL * max(1.0, scale_mass)
    )


def abc_check(
    mu: Measure1D,
    A: float,
    B: float,
    C: float,
    probes: int = 1000,
    seed: int = 0,
    *,
    intervals=None,
    c: float | None = None,
) -> ABCWitness:
    """Probe the (A, B, C) condition on random intervals.

    Intervals ``(x, y)`` have endpoints drawn i.i.d. from ``mu`` (or are
    given via ``intervals``); those with zero mass are redrawn. Each is tried
    with the symmetric sub-interval ``[x + k w, y - k w]``, ``k = (1 - A)/2``,
    and, when ``c`` is set (default 1 for measures with unbounded support),
    with ``[x + c, y - k w]``. Raises ``ABCViolation`` on the first probe for
    which neither works.
    """
    if not A < 1 or B <= 0 or C <= 0:
        raise ValueError("need A < 1 and B, C > 0")
    require_nontrivial(mu)
    kappa = (1.0 - A) / 2.0
    if c is None and _unbounded(mu):
        c = 1.0
    if intervals is None:
        intervals = _draw_intervals(mu, probes, seed)
    found = []
    for x, y in intervals:
        x, y = float(x), float(y)
        if not 0 <= x < y:
            raise ValueError(f"bad interval ({x}, {y})")
        w = y - x
        tries = [_score(mu, A, B, C, x, y, x + kappa * w, y - kappa * w)]
        if c is not None and x + c < y - kappa * w:
            tries.append(_score(mu, A, B, C, x, y, x + c, y - kappa * w))
        ok = [t for t in tries if _admissible(t, A * w, C * mu.interval_mass(x, y) ** B)]
        if not ok:
            best = max(tries, key=lambda t: min(t.margin_geom, t.margin_mass))
            raise ABCViolation(
                best,
                f"interval ({x:.17g}, {y:.17g}): geometric margin {best.margin_geom:.3g}, "
                f"mass margin {best.margin_mass:.3g}",
            )
        found.append(ok[0])
    return ABCWitness(A, B, C, found)


def _draw_intervals(mu: Measure1D, probes: int, seed: int):
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(1000):
        need = probes - len(out)
        if need <= 0:
            break
        xy = np.sort(mu._quantile(rng.random((2 * need, 2))), axis=1)
        for x, y in xy:
            if x < y and mu.interval_mass(x, y) > 0:
                out.append((float(x), float(y)))
                if len(out) == probes:
                    break
    if len(out) < probes:
        raise ArithmeticError("could not draw intervals of positive mass")
    return out


# --------------------------------------------------------------------------
# rates


@dataclass(frozen=True)
class RateBound:
    values: np.ndarray
    closed_bound: np.ndarray
    c: float
    exponent: float


def rate_bound(w0: float, A: float, B: float, C: float, p: float, n: int) -> RateBound:
    """Iterate ``v <- v - c v^(1 + B/p)`` from ``v_0 = w0^p`` with ``c = C (1 - A^p)``.

    With ``s = B/p``, Bernoulli's inequality gives
    ``v_{k+1}^-s >= v_k^-s + s c``, hence ``v_n <= (v_0^-s + s c n)^(-1/s)``,
    which is returned alongside. The implied decay exponent is ``-p/B``.
    """
    if w0 <= 0 or n < 0:
        raise ValueError("need w0 > 0 and n >= 0")
    if p < 1 or B <= 0:
        raise ValueError("need p >= 1 and B > 0")
    s = B / p
    c = C * (1.0 - abs(A) ** p)
    v = np.empty(n + 1)
    v[0] = w0**p
    for k in range(n):
        v[k + 1] = max(v[k] - c * v[k] ** (1.0 + s), 0.0)
    k = np.arange(n + 1)
    closed = (v[0] ** (-s) + s * max(c, 0.0) * k) ** (-1.0 / s)
    return RateBound(values=v, closed_bound=closed, c=c, exponent=-1.0 / s)


def fit_poly_rate(sequence, offset: int = 0) -> float:
    """Least-squares slope of ``log w_k`` on ``log k`` over the second half.

    Entry ``i`` is taken as term ``k = i + offset``.
    """
    w = np.asarray(sequence, dtype=float)
    if w.size < 16:
        raise ValueError("need at least 16 terms")
    if np.any(~(w > 0)):
        raise ValueError("entries must be strictly positive")
    k = np.arange(w.size) + offset
    half = slice(w.size // 2, None)
    if k[half][0] < 1:
        raise ValueError("second half must start at k >= 1")
    slope, _ = np.polyfit(np.log(k[half]), np.log(w[half]), 1)
    return float(slope)


def loglog_slopes(sequence) -> np.ndarray:
    """Running slope-so-far between term 1 and term k (NaN where undefined)."""
    w = np.asarray(sequence, dtype=float)
    out = np.full(w.size, np.nan)
    if w.size > 2 and w[1] > 0:
        k = np.arange(2, w.size)
        with np.errstate(divide="ignore", invalid="ignore"):
            out[2:] = (np.log(w[2:]) - np.log(w[1])) / np.log(k)
    return out
