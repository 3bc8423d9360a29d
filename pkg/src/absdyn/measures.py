"""Probability measures on the half-line.

Three interchangeable representations share one query surface:

* :class:`AtomicMeasure` -- finitely many weighted atoms.
* :class:`GridMeasure` -- a piecewise-constant density on a uniform grid of
  ``n`` cells covering ``[0, x_max)``, plus an explicit ``tail_mass`` that
  lives beyond ``x_max``.
* :class:`EmpiricalMeasure` -- a sorted sample, each point carrying ``1/N``.

Two distribution functions are exposed. ``cdf(y)`` is the half-open
``mu[0, y)`` consumed by the drift function; ``cdf_right(y)`` is the usual
right-closed ``mu[0, y]`` consumed by :meth:`quantile`.

For a grid, the tail mass is accounted as an atom sitting at ``x_max``. It is
required to stay below ``MAX_TAIL`` unless the caller opts into
:meth:`GridMeasure.renormalized`.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

WEIGHT_TOL = 1e-12
GRID_MASS_TOL = 1e-9
MERGE_TOL = 1e-9
MAX_TAIL = 1e-6


class TailMassError(ValueError):
    """Grid tail mass exceeds the configured bound."""


class TrivialMeasureError(ValueError):
    """Reference measure is supported on a single point."""


@dataclass(frozen=True)
class MomentProfile:
    mean: float
    second_moment: float
    variance: float
    median: float


def _check_u(u):
    arr = np.asarray(u, dtype=float)
    if np.any((arr <= 0.0) | (arr >= 1.0)) or np.any(np.isnan(arr)):
        raise ValueError("quantile level must lie in the open interval (0, 1)")
    return arr


def _scalar_or_array(values, like):
    if np.ndim(like) == 0:
        return float(values)
    return values


class Measure1D:
    """Shared behaviour; subclasses provide the primitive queries."""

    def cdf(self, y):
        raise NotImplementedError

    def cdf_right(self, y):
        raise NotImplementedError

    def partial_mean(self, y):
        raise NotImplementedError

    def _quantile(self, u):
        raise NotImplementedError

    def quantile(self, u):
        """Generalized inverse ``inf{y : F(y) >= u}`` with right-closed F."""
        arr = _check_u(u)
        return _scalar_or_array(self._quantile(arr), u)

    def interval_mass(self, a, b):
        """Mass of the open interval ``(a, b)``."""
        if b <= a:
            return 0.0
        lo = self.cdf_right(a) if a >= 0 else 0.0
        return max(float(self.cdf(b)) - float(lo), 0.0)

    @property
    def mean(self) -> float:
        return float(self.partial_mean(math.inf))

    @property
    def second_moment(self) -> float:
        raise NotImplementedError

    @property
    def support_max(self) -> float:
        raise NotImplementedError

    def moments(self) -> MomentProfile:
        e = self.mean
        k = self.second_moment
        d = k - e * e
        if d < 0.0:
            if d < -1e-9 * max(1.0, k):
                raise ArithmeticError(f"negative variance {d!r}")
            d = 0.0
        return MomentProfile(mean=e, second_moment=k, variance=d, median=float(self._quantile(np.array(0.5))))

    def draw(self, seed: int, count: int) -> np.ndarray:
        """i.i.d. draws in generation order (inverse CDF on a seeded stream)."""
        if count < 1:
            raise ValueError("count must be >= 1")
        u = np.random.default_rng(seed).random(count)
        return np.asarray(self._quantile(u), dtype=float)

    def sample(self, seed: int, count: int) -> "EmpiricalMeasure":
        return EmpiricalMeasure(self.draw(seed, count))

    def is_trivial(self) -> bool:
        """True when the support is a single point."""
        raise NotImplementedError

    def quantile_pieces(self):
        """Quantile function as affine pieces on ``[u0, u1]``.

        Returns arrays ``(u0, u1, q0, q1)``; on each piece the quantile
        function is the affine interpolation between ``q0`` and ``q1``.
        """
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError


# --------------------------------------------------------------------------
# atomic


class AtomicMeasure(Measure1D):
    """Finitely many atoms with strictly increasing locations.

    Locations closer than ``merge_tol`` collapse into one atom placed at the
    weighted mean of the cluster. Zero weights are dropped.
    """

    __slots__ = ("locs", "weights", "_cum", "_cumx")

    def __init__(self, locs, weights=None, *, normalize: bool = False, merge_tol: float = MERGE_TOL):
        x = np.atleast_1d(np.asarray(locs, dtype=float)).ravel()
        if weights is None:
            w = np.full(x.size, 1.0 / max(x.size, 1))
        else:
            w = np.atleast_1d(np.asarray(weights, dtype=float)).ravel()
        if x.size == 0 or x.size != w.size:
            raise ValueError("atoms need matching, nonempty location and weight lists")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(w))):
            raise ValueError("atom locations and weights must be finite")
        if np.any(x < 0.0):
            raise ValueError("atom locations must be nonnegative")
        if np.any(w < 0.0):
            raise ValueError("atom weights must be nonnegative")
        keep = w > 0.0
        x, w = x[keep], w[keep]
        if x.size == 0:
            raise ValueError("all atom weights are zero")
        total = w.sum()
        if normalize:
            w = w / total
        elif abs(total - 1.0) > WEIGHT_TOL:
            raise ValueError(f"atom weights sum to {total!r}, not 1")
        order = np.argsort(x, kind="stable")
        x, w = x[order], w[order]
        if x.size > 1:
            new_cluster = np.empty(x.size, dtype=bool)
            new_cluster[0] = True
            new_cluster[1:] = np.diff(x) > merge_tol
            if not new_cluster.all():
                ids = np.cumsum(new_cluster) - 1
                wsum = np.bincount(ids, weights=w)
                xw = np.bincount(ids, weights=w * x)
                x = xw / wsum
                w = wsum
        x.setflags(write=False)
        w.setflags(write=False)
        self.locs = x
        self.weights = w
        self._cum = np.concatenate(([0.0], np.cumsum(w)))
        self._cumx = np.concatenate(([0.0], np.cumsum(w * x)))

    def __len__(self):
        return self.locs.size

    def __repr__(self):
        if len(self) <= 6:
            body = ", ".join(f"({x:.6g}, {w:.6g})" for x, w in zip(self.locs, self.weights))
        else:
            body = f"{len(self)} atoms on [{self.locs[0]:.6g}, {self.locs[-1]:.6g}]"
        return f"AtomicMeasure({body})"

    def cdf(self, y):
        idx = np.searchsorted(self.locs, y, side="left")
        return _scalar_or_array(self._cum[idx], y)

    def cdf_right(self, y):
        idx = np.searchsorted(self.locs, y, side="right")
        return _scalar_or_array(self._cum[idx], y)

    def partial_mean(self, y):
        idx = np.searchsorted(self.locs, y, side="left")
        return _scalar_or_array(self._cumx[idx], y)

    def _quantile(self, u):
        idx = np.searchsorted(self._cum[1:], u, side="left")
        return self.locs[np.minimum(idx, self.locs.size - 1)]

    @property
    def second_moment(self) -> float:
        return float(np.dot(self.weights, self.locs * self.locs))

    @property
    def support_max(self) -> float:
        return float(self.locs[-1])

    def is_trivial(self) -> bool:
        return self.locs.size == 1

    def quantile_pieces(self):
        u0 = self._cum[:-1].copy()
        u1 = self._cum[1:].copy()
        u1[-1] = 1.0
        return u0, u1, self.locs, self.locs

    def to_dict(self) -> dict:
        return {"type": "atomic", "atoms": [[float(x), float(w)] for x, w in zip(self.locs, self.weights)]}

    def as_atomic(self) -> "AtomicMeasure":
        return self


def dirac(x: float) -> AtomicMeasure:
    return AtomicMeasure([x], [1.0])


# --------------------------------------------------------------------------
# grid


class GridMeasure(Measure1D):
    """Piecewise-constant density on ``n`` cells of width ``h = x_max / n``.

    ``values[i]`` is the density on ``[i h, (i + 1) h)``. The invariant
    ``h * sum(values) + tail_mass == 1`` holds to ``GRID_MASS_TOL``.
    """

    __slots__ = ("x_max", "n", "values", "tail_mass", "h", "_cm", "_cy")

    def __init__(self, x_max: float, n: int, values, tail_mass: float = 0.0, *, normalize: bool = False):
        if not x_max > 0:
            raise ValueError("x_max must be positive")
        n = int(n)
        if n < 1:
            raise ValueError("n must be a positive integer")
        v = np.asarray(values, dtype=float).ravel().copy()
        if v.size != n:
            raise ValueError(f"expected {n} density values, got {v.size}")
        if not np.all(np.isfinite(v)) or np.any(v < 0.0):
            raise ValueError("density values must be finite and nonnegative")
        if not (tail_mass >= 0.0):
            raise ValueError("tail_mass must be nonnegative")
        h = x_max / n
        total = h * v.sum() + tail_mass
        if normalize:
            v /= total
            tail_mass /= total
        elif abs(total - 1.0) > GRID_MASS_TOL:
            raise ValueError(f"grid mass is {total!r}, not 1")
        v.setflags(write=False)
        self.x_max = float(x_max)
        self.n = n
        self.values = v
        self.tail_mass = float(tail_mass)
        self.h = h
        masses = v * h
        self._cm = np.concatenate(([0.0], np.cumsum(masses)))
        mids = (np.arange(n) + 0.5) * h
        self._cy = np.concatenate(([0.0], np.cumsum(masses * mids)))

    def __repr__(self):
        return f"GridMeasure(x_max={self.x_max:g}, n={self.n}, tail_mass={self.tail_mass:.3g})"

    @property
    def edges(self) -> np.ndarray:
        return np.arange(self.n + 1) * self.h

    @property
    def midpoints(self) -> np.ndarray:
        return (np.arange(self.n) + 0.5) * self.h

    @property
    def cell_masses(self) -> np.ndarray:
        return self.values * self.h

    def check_tail(self, max_tail: float = MAX_TAIL) -> None:
        if self.tail_mass > max_tail:
            raise TailMassError(
                f"tail mass {self.tail_mass:.3g} beyond x_max={self.x_max:g} exceeds {max_tail:g}; "
                "enlarge the grid or use renormalized()"
            )

    def renormalized(self) -> "GridMeasure":
        """Fold the tail mass back into the cells proportionally."""
        if self.tail_mass == 0.0:
            return self
        return GridMeasure(self.x_max, self.n, self.values, 0.0, normalize=True)

    def _locate(self, y):
        y = np.asarray(y, dtype=float)
        i = np.clip(np.floor(y / self.h).astype(np.int64), 0, self.n - 1)
        return y, i

    def _below_grid_end(self, y):
        y, i = self._locate(np.minimum(np.maximum(y, 0.0), self.x_max))
        left = i * self.h
        m = self._cm[i] + self.values[i] * (y - left)
        ym = self._cy[i] + self.values[i] * 0.5 * (y * y - left * left)
        return m, ym

    def cdf(self, y):
        ya = np.asarray(y, dtype=float)
        m, _ = self._below_grid_end(ya)
        m = np.where(ya > self.x_max, m + self.tail_mass, m)
        m = np.where(ya <= 0.0, 0.0, m)
        return _scalar_or_array(m, y)

    def cdf_right(self, y):
        ya = np.asarray(y, dtype=float)
        m, _ = self._below_grid_end(ya)
        m = np.where(ya >= self.x_max, m + self.tail_mass, m)
        m = np.where(ya < 0.0, 0.0, m)
        return _scalar_or_array(m, y)

    def partial_mean(self, y):
        ya = np.asarray(y, dtype=float)
        if self.tail_mass > MAX_TAIL and np.any(ya > self.x_max):
            self.check_tail()
        _, ym = self._below_grid_end(ya)
        ym = np.where(ya > self.x_max, ym + self.tail_mass * self.x_max, ym)
        ym = np.where(ya <= 0.0, 0.0, ym)
        return _scalar_or_array(ym, y)

    @property
    def second_moment(self) -> float:
        self.check_tail()
        e = self.edges
        return float(np.dot(self.values, (e[1:] ** 3 - e[:-1] ** 3) / 3.0) + self.tail_mass * self.x_max**2)

    @property
    def support_max(self) -> float:
        if self.tail_mass > 0.0:
            return self.x_max
        nz = np.flatnonzero(self.values)
        return float((nz[-1] + 1) * self.h)

    def is_trivial(self) -> bool:
        return False

    def _quantile(self, u):
        u = np.asarray(u, dtype=float)
        grid_mass = self._cm[-1]
        i = np.searchsorted(self._cm[1:], u, side="left")
        i = np.minimum(i, self.n - 1)
        v = self.values[i]
        with np.errstate(divide="ignore", invalid="ignore"):
            y = i * self.h + np.where(v > 0, (u - self._cm[i]) / v, 0.0)
        y = np.clip(y, i * self.h, (i + 1) * self.h)
        return np.where(u > grid_mass, self.x_max, y)

    def quantile_pieces(self):
        keep = self.values > 0.0
        idx = np.flatnonzero(keep)
        u0 = self._cm[idx]
        u1 = self._cm[idx + 1]
        q0 = idx * self.h
        q1 = (idx + 1) * self.h
        if self.tail_mass > 0.0:
            u0 = np.append(u0, self._cm[-1])
            u1 = np.append(u1, 1.0)
            q0 = np.append(q0, self.x_max)
            q1 = np.append(q1, self.x_max)
        else:
            u1 = u1.copy()
            u1[-1] = 1.0
        return u0, u1, q0.astype(float), q1.astype(float)

    def regrid(self, x_max: float, n: int) -> "GridMeasure":
        """Resample onto another uniform grid by exact CDF differencing."""
        edges = np.arange(n + 1) * (x_max / n)
        # half-open cdf: the lumped tail atom lands in a cell only when x_max grows
        masses = np.maximum(np.diff(np.asarray(self.cdf(edges), dtype=float)), 0.0)
        tail = max(1.0 - masses.sum(), 0.0)
        return GridMeasure(x_max, n, masses / (x_max / n), tail, normalize=True)

    def to_dict(self) -> dict:
        return {
            "type": "grid",
            "x_max": self.x_max,
            "n": self.n,
            "values": [float(v) for v in self.values],
            "tail_mass": self.tail_mass,
        }


def grid_from_cdf(cdf: Callable, x_max: float, n: int) -> GridMeasure:
    """Grid whose cell masses are exact CDF increments."""
    edges = np.arange(n + 1) * (x_max / n)
    cm = np.asarray(cdf(edges), dtype=float)
    masses = np.maximum(np.diff(cm), 0.0)
    tail = max(1.0 - cm[-1], 0.0)
    return GridMeasure(x_max, n, masses / (x_max / n), tail, normalize=True)


def exponential_grid(rate: float = 1.0, x_max: float = 30.0, n: int = 2**14) -> GridMeasure:
    if rate <= 0:
        raise ValueError("rate must be positive")
    return grid_from_cdf(lambda t: -np.expm1(-rate * t), x_max, n)


def exponential_atoms(rate: float = 1.0, x_max: float = 40.0, n: int = 2**16) -> AtomicMeasure:
    """Exp(rate) collapsed cell by cell onto conditional means.

    Cell masses and the first moment are both exact, so the mean is
    ``1/rate`` up to rounding; the tail beyond ``x_max`` sits at its own
    conditional mean ``x_max + 1/rate``.
    """
    if rate <= 0:
        raise ValueError("rate must be positive")
    h = x_max / n
    left = np.arange(n) * h
    masses = np.exp(-rate * left) * -np.expm1(-rate * h)
    cond = left + 1.0 / rate - h / np.expm1(rate * h)
    locs = np.append(cond, x_max + 1.0 / rate)
    w = np.append(masses, np.exp(-rate * x_max))
    return AtomicMeasure(locs, w, normalize=True)


def uniform_grid(a: float = 0.0, b: float = 1.0, x_max: float | None = None, n: int = 2**12) -> GridMeasure:
    if not 0.0 <= a < b:
        raise ValueError("need 0 <= a < b")
    x_max = b if x_max is None else x_max
    if x_max < b:
        raise ValueError("x_max must cover the support")
    return grid_from_cdf(lambda t: np.clip((t - a) / (b - a), 0.0, 1.0), x_max, n)


def grid_mixture(grids, weights) -> GridMeasure:
    """Convex combination of grids sharing one discretization."""
    grids = list(grids)
    w = np.asarray(weights, dtype=float)
    g0 = grids[0]
    for g in grids[1:]:
        if g.n != g0.n or g.x_max != g0.x_max:
            raise ValueError("mixture components must share x_max and n")
    values = sum(wi * g.values for wi, g in zip(w, grids))
    tail = float(sum(wi * g.tail_mass for wi, g in zip(w, grids)))
    return GridMeasure(g0.x_max, g0.n, values, tail, normalize=True)


# --------------------------------------------------------------------------
# empirical


class EmpiricalMeasure(Measure1D):
    """Sorted sample with equal weights."""

    __slots__ = ("samples", "_atomic")

    def __init__(self, samples):
        s = np.sort(np.asarray(samples, dtype=float).ravel())
        if s.size == 0:
            raise ValueError("empirical measure needs at least one sample")
        if not np.all(np.isfinite(s)) or s[0] < 0.0:
            raise ValueError("samples must be finite and nonnegative")
        s.setflags(write=False)
        self.samples = s
        self._atomic = None

    def __len__(self):
        return self.samples.size

    def __repr__(self):
        return f"EmpiricalMeasure({self.samples.size} samples on [{self.samples[0]:.6g}, {self.samples[-1]:.6g}])"

    def as_atomic(self) -> AtomicMeasure:
        if self._atomic is None:
            locs, counts = np.unique(self.samples, return_counts=True)
            self._atomic = AtomicMeasure(locs, counts / self.samples.size, normalize=True, merge_tol=0.0)
        return self._atomic

    def cdf(self, y):
        return _scalar_or_array(np.searchsorted(self.samples, y, side="left") / self.samples.size, y)

    def cdf_right(self, y):
        return _scalar_or_array(np.searchsorted(self.samples, y, side="right") / self.samples.size, y)

    def partial_mean(self, y):
        return self.as_atomic().partial_mean(y)

    def _quantile(self, u):
        k = np.ceil(np.asarray(u) * self.samples.size).astype(np.int64) - 1
        return self.samples[np.clip(k, 0, self.samples.size - 1)]

    @property
    def mean(self) -> float:
        return float(self.samples.mean())

    @property
    def second_moment(self) -> float:
        return float(np.mean(self.samples**2))

    @property
    def support_max(self) -> float:
        return float(self.samples[-1])

    def is_trivial(self) -> bool:
        return self.samples[0] == self.samples[-1]

    def quantile_pieces(self):
        return self.as_atomic().quantile_pieces()

    def to_dict(self) -> dict:
        return {"type": "empirical", "samples": [float(s) for s in self.samples]}


# --------------------------------------------------------------------------
# functional surface


def cdf(m: Measure1D, y: float) -> float:
    """Half-open ``mu[0, y)``; an atom located at ``y`` is not counted."""
    if y < 0:
        return 0.0
    return float(m.cdf(y))


def partial_mean(m: Measure1D, y: float) -> float:
    """``int_[0,y) theta mu(d theta)``."""
    if y < 0:
        return 0.0
    return float(m.partial_mean(y))


def quantile(m: Measure1D, u):
    return m.quantile(u)


def moments(m: Measure1D) -> MomentProfile:
    return m.moments()


def sample(m: Measure1D, seed: int, count: int) -> EmpiricalMeasure:
    return m.sample(seed, count)


def require_nontrivial(m: Measure1D) -> None:
    if m.is_trivial():
        raise TrivialMeasureError("reference measure is a single atom; the dynamics are deterministic")


def as_atomic(m: Measure1D) -> AtomicMeasure:
    if isinstance(m, AtomicMeasure):
        return m
    if isinstance(m, EmpiricalMeasure):
        return m.as_atomic()
    raise TypeError(f"{type(m).__name__} has no exact atomic form")


# --------------------------------------------------------------------------
# serialization


def measure_from_dict(d: dict) -> Measure1D:
    kind = d.get("type")
    if kind == "atomic":
        atoms = np.asarray(d["atoms"], dtype=float).reshape(-1, 2)
        return AtomicMeasure(atoms[:, 0], atoms[:, 1])
    if kind == "grid":
        return GridMeasure(float(d["x_max"]), int(d["n"]), d["values"], float(d.get("tail_mass", 0.0)))
    if kind == "empirical":
        return EmpiricalMeasure(d["samples"])
    raise ValueError(f"unknown measure type {kind!r}")


def measure_to_dict(m: Measure1D) -> dict:
    return m.to_dict()


def load_measure(path) -> Measure1D:
    with open(path, encoding="utf-8") as fh:
        return measure_from_dict(json.load(fh))


def dump_measure(m: Measure1D, path) -> None:
    Path(path).write_text(json.dumps(m.to_dict()), encoding="utf-8")
