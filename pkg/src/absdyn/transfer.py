"""Operators on measures induced by the folding map.

``push_theta`` is the image of a measure under ``x -> |x - theta|``;
``push_avg`` averages it over ``theta ~ mu``; ``coupling_push`` moves a
finite coupling by the same ``theta`` in both coordinates.

Precision hierarchy: atomic inputs are pushed exactly. Grid inputs are read
as piecewise-constant densities and the output cell averages are computed
exactly for that reading, so mass is preserved to rounding. A grid pushed
against atoms is a finite mixture of exact single-``theta`` pushes, so no
mixed combination needs a lossy conversion; ``strict=True`` still rejects
them for callers that want like-for-like inputs only.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy import signal

from .measures import (
    MAX_TAIL,
    WEIGHT_TOL,
    AtomicMeasure,
    EmpiricalMeasure,
    GridMeasure,
    Measure1D,
    as_atomic,
)

log = logging.getLogger(__name__)

ATOM_CAP = 10**5
COARSEN_RESOLUTION = 1e-6


class RepresentationError(TypeError):
    """Incompatible measure representations under strict mode."""


@dataclass(frozen=True)
class Coupling2D:
    """Finite joint measure on the positive quadrant."""

    x: np.ndarray
    y: np.ndarray
    w: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float).ravel()
        y = np.asarray(self.y, dtype=float).ravel()
        w = np.asarray(self.w, dtype=float).ravel()
        if not (x.size == y.size == w.size) or x.size == 0:
            raise ValueError("coupling arrays must be nonempty and equally long")
        if np.any(x < 0) or np.any(y < 0):
            raise ValueError("coupling atoms must lie in the positive quadrant")
        if np.any(w <= 0):
            raise ValueError("coupling weights must be positive")
        if abs(w.sum() - 1.0) > WEIGHT_TOL:
            raise ValueError(f"coupling weights sum to {w.sum()!r}")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "w", w)

    @classmethod
    def from_atoms(cls, atoms) -> "Coupling2D":
        a = np.asarray(atoms, dtype=float).reshape(-1, 3)
        return cls(a[:, 0], a[:, 1], a[:, 2])

    @classmethod
    def product(cls, rho: AtomicMeasure, pi: AtomicMeasure) -> "Coupling2D":
        xx, yy = np.meshgrid(rho.locs, pi.locs, indexing="ij")
        ww = np.outer(rho.weights, pi.weights)
        return cls(xx.ravel(), yy.ravel(), ww.ravel() / ww.sum())

    def __len__(self):
        return self.x.size

    def marginals(self) -> tuple[AtomicMeasure, AtomicMeasure]:
        return AtomicMeasure(self.x, self.w, normalize=True), AtomicMeasure(self.y, self.w, normalize=True)


# --------------------------------------------------------------------------
# single translation


def _grid_cdf(g: GridMeasure, y):
    """Grid-only CDF (the tail beyond ``x_max`` is left out), clipped to [0, x_max]."""
    m, _ = g._below_grid_end(np.asarray(y, dtype=float))
    return np.where(np.asarray(y) <= 0.0, 0.0, m)


def _push_grid(g: GridMeasure, theta: float, x_max_out: float, n_out: int) -> np.ndarray:
    """Cell masses of the image of the grid part of ``g`` under ``|. - theta|``."""
    e = np.arange(n_out + 1) * (x_max_out / n_out)
    right = _grid_cdf(g, theta + e)
    left = _grid_cdf(g, theta - e)
    return np.maximum(np.diff(right) - np.diff(left), 0.0)


def push_theta(pi: Measure1D, theta: float, *, x_max_out: float | None = None, n_out: int | None = None) -> Measure1D:
    """Image of ``pi`` under ``x -> |x - theta|``."""
    if theta < 0:
        raise ValueError("theta must be nonnegative")
    if isinstance(pi, (AtomicMeasure, EmpiricalMeasure)):
        a = as_atomic(pi)
        return AtomicMeasure(np.abs(a.locs - theta), a.weights, normalize=True)
    if isinstance(pi, GridMeasure):
        x_max_out = pi.x_max if x_max_out is None else x_max_out
        n_out = pi.n if n_out is None else n_out
        needed = max(pi.x_max - theta, theta)
        if x_max_out < needed:
            raise ValueError(f"output grid [0, {x_max_out:g}] cannot hold the image; need x_max >= {needed:g}")
        masses = _push_grid(pi, theta, x_max_out, n_out)
        h = x_max_out / n_out
        tail = max(1.0 - masses.sum(), 0.0)
        return GridMeasure(x_max_out, n_out, masses / h, tail, normalize=True)
    raise TypeError(f"unsupported measure {type(pi).__name__}")


# --------------------------------------------------------------------------
# averaged operator


def _checked(g: GridMeasure, renormalize: bool) -> GridMeasure:
    if renormalize:
        return g.renormalized()
    g.check_tail()
    return g


def _avg_atomic(pi: AtomicMeasure, mu: AtomicMeasure) -> AtomicMeasure:
    locs = np.abs(pi.locs[:, None] - mu.locs[None, :]).ravel()
    w = np.outer(pi.weights, mu.weights).ravel()
    return AtomicMeasure(locs, w, normalize=True)


def _avg_grid_direct(pi: GridMeasure, mu: GridMeasure) -> np.ndarray:
    """Reference O(n^2) evaluation of the cell-average formula."""
    n, h = pi.n, pi.h
    p = np.concatenate((pi.values, [0.0]))
    up = 0.5 * (p[:-1] + p[1:])
    down = 0.5 * (np.concatenate(([0.0], p[:-2])) + p[:-1])
    out = np.zeros(n)
    for k in range(n):
        out[k] = h * (np.dot(mu.values[: n - k], up[k:]) + np.dot(mu.values[k:], down[: n - k]))
    return out


def _avg_grid_fft(pi: GridMeasure, mu: GridMeasure) -> np.ndarray:
    n, h = pi.n, pi.h
    p = np.concatenate((pi.values, [0.0]))
    # x + theta with both uniform on cells k and j splits evenly over cells k+j, k+j+1
    up = 0.5 * (p[:-1] + p[1:])
    # theta - x over cells j, k splits evenly over cells j-k-1, j-k
    down = 0.5 * (np.concatenate(([0.0], p[:-2])) + p[:-1])
    t1 = signal.correlate(up, mu.values, mode="full", method="fft")[n - 1 : 2 * n - 1]
    t2 = signal.correlate(mu.values, down, mode="full", method="fft")[n - 1 : 2 * n - 1]
    return np.maximum(h * (t1 + t2), 0.0)


def _avg_grid(pi: GridMeasure, mu: GridMeasure, method: str) -> GridMeasure:
    if method == "direct":
        dens = _avg_grid_direct(pi, mu)
    else:
        dens = _avg_grid_fft(pi, mu)
    tail = max(1.0 - pi.h * dens.sum(), 0.0)
    return GridMeasure(pi.x_max, pi.n, dens, tail, normalize=True)


def _mixture_of_pushes(g: GridMeasure, atoms: AtomicMeasure) -> GridMeasure:
    masses = np.zeros(g.n)
    for t, w in zip(atoms.locs, atoms.weights):
        if max(g.x_max - t, t) > g.x_max:
            raise ValueError(f"atom at {t:g} pushes mass beyond the grid end {g.x_max:g}")
        masses += w * _push_grid(g, t, g.x_max, g.n)
    tail = max(1.0 - masses.sum(), 0.0)
    return GridMeasure(g.x_max, g.n, masses / g.h, tail, normalize=True)


def push_avg(
    pi: Measure1D,
    mu: Measure1D,
    *,
    strict: bool = False,
    renormalize: bool = False,
    method: str = "fft",
) -> Measure1D:
    """``T*_mu pi``: the ``mu``-average of the single-translation pushes of ``pi``.

    Atomic/empirical against atomic/empirical gives an exact atomic measure.
    Grid against grid gives a grid on ``pi``'s discretization (``mu`` is
    resampled onto it when the grids differ). Mixed inputs go through exact
    single-translation pushes of the grid side.
    """
    pi_atomic = isinstance(pi, (AtomicMeasure, EmpiricalMeasure))
    mu_atomic = isinstance(mu, (AtomicMeasure, EmpiricalMeasure))
    if pi_atomic and mu_atomic:
        return _avg_atomic(as_atomic(pi), as_atomic(mu))
    if pi_atomic != mu_atomic and strict:
        raise RepresentationError("strict mode: atomic and grid measures cannot be mixed")
    if not pi_atomic and not mu_atomic:
        pi = _checked(pi, renormalize)
        mu = _checked(mu, renormalize)
        if (mu.x_max, mu.n) != (pi.x_max, pi.n):
            if strict:
                raise RepresentationError("strict mode: grids differ")
            mu = mu.regrid(pi.x_max, pi.n)
        if mu.support_max > pi.x_max:
            raise ValueError("reference measure extends beyond the grid")
        return _avg_grid(pi, mu, method)
    if pi_atomic:
        # T*_mu delta_x is the image of mu under theta -> |x - theta|
        return _mixture_of_pushes(_checked(mu, renormalize), as_atomic(pi))
    return _mixture_of_pushes(_checked(pi, renormalize), as_atomic(mu))


def coarsen(m: AtomicMeasure, resolution: float = COARSEN_RESOLUTION) -> AtomicMeasure:
    """Weight-preserving binning at ``resolution`` times the support width.

    Each bin collapses to its barycenter, which moves mass by at most one bin
    width, so the W1 perturbation is bounded by that width.
    """
    lo, hi = m.locs[0], m.locs[-1]
    width = max(hi - lo, 1e-300) * resolution
    ids = np.floor((m.locs - lo) / width).astype(np.int64)
    _, inv = np.unique(ids, return_inverse=True)
    w = np.bincount(inv, weights=m.weights)
    xw = np.bincount(inv, weights=m.weights * m.locs)
    return AtomicMeasure(xw / w, w, normalize=True, merge_tol=0.0)


def iterate_push(
    pi: Measure1D,
    mu: Measure1D,
    n: int,
    *,
    strict: bool = False,
    renormalize: bool = False,
    max_atoms: int = ATOM_CAP,
) -> list[Measure1D]:
    """``[pi, T* pi, ..., T*^n pi]``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    seq = [pi]
    cur = pi
    for k in range(n):
        cur = push_avg(cur, mu, strict=strict, renormalize=renormalize)
        if isinstance(cur, AtomicMeasure) and len(cur) > max_atoms:
            before = len(cur)
            cur = coarsen(cur)
            if len(cur) > max_atoms:
                # the default bins can still outnumber the cap; widen them to fit
                cur = coarsen(cur, 1.0 / max(max_atoms - 1, 1))
            log.warning("step %d: %d atoms exceed the cap %d, coarsened to %d", k + 1, before, max_atoms, len(cur))
        if isinstance(cur, GridMeasure) and renormalize and cur.tail_mass > MAX_TAIL:
            cur = cur.renormalized()
        seq.append(cur)
    return seq


# --------------------------------------------------------------------------
# couplings


def coupling_push(gamma: Coupling2D, mu: Measure1D) -> Coupling2D:
    """Average over ``theta ~ mu`` of the image of ``gamma`` under ``(|x-theta|, |y-theta|)``."""
    a = as_atomic(mu)
    x = np.abs(gamma.x[:, None] - a.locs[None, :]).ravel()
    y = np.abs(gamma.y[:, None] - a.locs[None, :]).ravel()
    w = np.outer(gamma.w, a.weights).ravel()
    return Coupling2D(x, y, w / w.sum())


def straddles(x, y, theta):
    """Membership in ``Z(theta)``: ``theta`` strictly between ``x`` and ``y``."""
    return (np.minimum(x, y) < theta) & (theta < np.maximum(x, y))


def contraction_weight(x, y, theta):
    """``w`` with ``|x + y - 2 theta| = |y - x| (1 - w)``; lies in (0, 1] on ``Z(theta)``."""
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    lo, hi = np.minimum(x, y), np.maximum(x, y)
    # same value as 1 - |x + y - 2 theta| / |y - x| without the cancellation near the ends
    return 2.0 * np.minimum(theta - lo, hi - theta) / (hi - lo)


def subtraction_term(gamma: Coupling2D, mu: Measure1D, p: float = 1.0, f=None) -> float:
    """Exact loss of transport cost in one averaged step.

    ``sum over theta, (x, y) in Z(theta) of [f(|y - x|) - f(|x + y - 2 theta|)]``
    weighted by ``gamma`` and ``mu``; ``f(z) = z**p`` unless given.
    """
    if f is None:
        if p < 1:
            raise ValueError("p must be >= 1")
        f = lambda z: z**p  # noqa: E731
    a = as_atomic(mu)
    x, y, t = gamma.x[:, None], gamma.y[:, None], a.locs[None, :]
    inside = straddles(x, y, t)
    diff = f(np.abs(y - x)) - f(np.abs(x + y - 2.0 * t))
    ww = gamma.w[:, None] * a.weights[None, :]
    return float(np.sum(np.where(inside, diff, 0.0) * ww))


def transport_cost(gamma: Coupling2D, f) -> float:
    return float(np.dot(gamma.w, f(np.abs(gamma.x - gamma.y))))


def bernoulli_limit(pi: Measure1D) -> AtomicMeasure:
    """Limit of ``T*^n pi`` for a reference measure on ``{0, 1}`` charging both points.

    Steps by 1 bring every atom into ``[0, 1]`` keeping its fractional part
    ``r``; from there the orbit alternates between ``r`` and ``1 - r`` with
    asymptotically equal weight, so each atom of ``pi`` ends up split evenly
    between ``r`` and ``1 - r``.
    """
    a = as_atomic(pi)
    r = np.mod(a.locs, 1.0)
    locs = np.concatenate((r, 1.0 - r))
    return AtomicMeasure(locs, np.concatenate((a.weights, a.weights)), normalize=True)
