"""Pointwise dynamics of the folding map ``x -> |x - theta|``.

Random orbits, breadth-first reach sets for finite translation sets, circle
rotations, epsilon-covering, and the lattice/dense dichotomy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import reduce

import numpy as np

from .measures import Measure1D

REACH_CAP = 10**6
MAX_DENOMINATOR = 10**6


class ReachSetExplosion(RuntimeError):
    pass


@dataclass(frozen=True)
class OrbitRecord:
    start: float
    points: np.ndarray
    seed: int
    theta_draws: np.ndarray = field(repr=False)

    def __len__(self):
        return self.points.size


@dataclass(frozen=True)
class LatticeResult:
    is_lattice: bool
    step: float | None = None


def apply_map(x, theta):
    return np.abs(np.asarray(x, dtype=float) - theta) if np.ndim(x) or np.ndim(theta) else abs(x - theta)


def random_orbit(x0: float, mu: Measure1D, n: int, seed: int) -> OrbitRecord:
    """Orbit of length ``n + 1`` driven by ``n`` i.i.d. draws from ``mu``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if x0 < 0:
        raise ValueError("x0 must be nonnegative")
    thetas = mu.draw(seed, n)
    pts = np.empty(n + 1)
    pts[0] = x = float(x0)
    for k, t in enumerate(thetas.tolist(), start=1):
        x = abs(x - t)
        pts[k] = x
    pts.setflags(write=False)
    thetas.setflags(write=False)
    return OrbitRecord(start=float(x0), points=pts, seed=seed, theta_draws=thetas)


def _absorb(known: np.ndarray, cand: np.ndarray, tol: float) -> tuple[np.ndarray, np.ndarray]:
    """Merge candidates into the sorted known set; return (new points, merged set)."""
    cand = np.sort(cand)
    if cand.size == 0:
        return cand, known
    keep = np.empty(cand.size, dtype=bool)
    keep[0] = True
    keep[1:] = np.diff(cand) > tol
    cand = cand[keep]
    if known.size:
        pos = np.searchsorted(known, cand)
        left = known[np.clip(pos - 1, 0, known.size - 1)]
        right = known[np.clip(pos, 0, known.size - 1)]
        near = (np.abs(cand - left) <= tol) | (np.abs(cand - right) <= tol)
        cand = cand[~near]
    merged = np.union1d(known, cand) if cand.size else known
    return cand, merged


def reach_set(x0: float, thetas, depth: int, tol: float = 1e-9, cap: int = REACH_CAP) -> np.ndarray:
    """Sorted union of all points reachable from ``x0`` in at most ``depth`` steps.

    Points closer than ``tol`` (absolute) are identified. Only the frontier
    is expanded at each level, since images of earlier points are already in
    the set.
    """
    t = np.unique(np.asarray(list(thetas), dtype=float))
    if t.size == 0:
        raise ValueError("need at least one translation")
    if depth < 0 or tol <= 0:
        raise ValueError("depth must be >= 0 and tol > 0")
    known = np.array([float(x0)])
    frontier = known
    for _ in range(depth):
        images = np.abs(frontier[:, None] - t[None, :]).ravel()
        frontier, known = _absorb(known, images, tol)
        if known.size > cap:
            raise ReachSetExplosion(f"reach set exceeded {cap} points")
        if frontier.size == 0:
            break
    return known


def rotation_orbit(x0: float, r: float, n: int) -> np.ndarray:
    """First ``n`` points of ``x -> x + r mod 1`` started at ``x0``."""
    if not 0.0 <= x0 < 1.0:
        raise ValueError("x0 must lie in [0, 1)")
    if not 0.0 < r < 1.0:
        raise ValueError("rotation number must lie in (0, 1)")
    k = np.arange(n)
    return np.mod(x0 + k * r, 1.0)


def epsilon_cover(points, lo: float, hi: float, eps: float) -> bool:
    """Whether every probe of a pitch-``eps/2`` grid on ``[lo, hi)`` has a point within ``eps``."""
    if eps <= 0 or not lo < hi:
        raise ValueError("need eps > 0 and lo < hi")
    pts = np.sort(np.asarray(list(points), dtype=float))
    if pts.size == 0:
        return False
    probes = lo + np.arange(math.ceil((hi - lo) / (eps / 2))) * (eps / 2)
    probes = probes[probes < hi]
    pos = np.searchsorted(pts, probes)
    left = pts[np.clip(pos - 1, 0, pts.size - 1)]
    right = pts[np.clip(pos, 0, pts.size - 1)]
    dist = np.minimum(np.abs(probes - left), np.abs(probes - right))
    return bool(np.all(dist < eps))


def _lcm(a: int, b: int) -> int:
    return a * b // math.gcd(a, b)


def lattice_test(thetas, tol: float = 1e-9, max_denominator: int = MAX_DENOMINATOR) -> LatticeResult:
    """Approximate real gcd of a finite translation set.

    Each ratio ``theta_i / theta_0`` is reconstructed as a fraction with
    denominator at most ``Q = min(ceil(1/tol), max_denominator)`` by
    continued fractions. A reconstruction is accepted only if it matches to
    ``tol / Q`` (floored at a few ulps): any real has approximants within
    ``1/Q**2``, so a looser match would declare every ratio rational.
    """
    t = np.asarray(list(thetas), dtype=float)
    if t.size == 0:
        raise ValueError("need at least one translation")
    if np.any(t < 0):
        raise ValueError("translations must be nonnegative")
    t = np.unique(t[t > 0])
    if t.size == 0:
        raise ValueError("need a positive translation")
    base = float(t[0])
    q_cap = int(min(math.ceil(1.0 / tol), max_denominator))
    fracs = []
    for ti in t:
        r = float(ti) / base
        fr = Fraction(r).limit_denominator(q_cap)
        match = max(tol / q_cap, 16 * np.finfo(float).eps * r)
        if abs(r - fr.numerator / fr.denominator) > match:
            return LatticeResult(False)
        fracs.append(fr)
    common = reduce(_lcm, (f.denominator for f in fracs), 1)
    nums = [f.numerator * (common // f.denominator) for f in fracs]
    g = reduce(math.gcd, nums)
    step = base * g / common
    on_lattice = np.abs(t / step - np.round(t / step)) * step <= tol * max(1.0, float(t[-1]))
    if not on_lattice.all():
        return LatticeResult(False)
    return LatticeResult(True, step)


def reach_probability(
    x0: float,
    mu: Measure1D,
    lo: float,
    hi: float,
    n_max: int,
    trials: int,
    seed: int,
    block: int = 8192,
) -> float:
    """Monte Carlo estimate of P(orbit enters ``(lo, hi)`` within ``n_max`` steps).

    Trials run in fixed-size blocks, each with its own spawned stream, so the
    estimate does not depend on how blocks are scheduled.
    """
    if not lo < hi or trials < 1:
        raise ValueError("need lo < hi and trials >= 1")
    if lo < x0 < hi:
        return 1.0
    n_blocks = -(-trials // block)
    streams = np.random.SeedSequence(seed).spawn(n_blocks)
    hits = 0
    for b, ss in enumerate(streams):
        size = min(block, trials - b * block)
        rng = np.random.default_rng(ss)
        x = np.full(size, float(x0))
        visited = np.zeros(size, dtype=bool)
        for _ in range(n_max):
            theta = mu._quantile(rng.random(size))
            x = np.abs(x - theta)
            visited |= (x > lo) & (x < hi)
        hits += int(visited.sum())
    return hits / trials
