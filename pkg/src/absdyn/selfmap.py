"""The self-referential map ``mu -> T*_mu mu`` and its fixed points.

Discrete side: measures on the unit lattice ``{0, 1, ..., N}`` as plain
probability vectors, the exact self-map ``p -> p_hat``, the geometric fixed
point family, and generating-function diagnostics (``g = 2f - 1`` must be
unimodular on the circle at a fixed point). Continuous side: the grid
self-correlation and the same diagnostic on the imaginary axis, pulled back
to the circle by the Cayley map.
"""

from __future__ import annotations

import math
import warnings
from itertools import combinations_with_replacement
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, signal

from .measures import AtomicMeasure, GridMeasure, Measure1D, exponential_grid
from .metric import wasserstein_p
from .orbits import lattice_test
from .transfer import ATOM_CAP, coarsen, push_avg

TRUNCATION_TOL = 1e-10
PMF_TOL = 1e-12


class TruncationWarning(UserWarning):
    """A truncated computation dropped more mass than ``TRUNCATION_TOL``."""


@dataclass(frozen=True)
class LatticePMF:
    """Probabilities on ``{0, step, 2 step, ...}``; ``truncation_mass`` is the mass left out."""

    probs: np.ndarray
    truncation_mass: float = 0.0
    step: float = 1.0

    def __post_init__(self):
        p = np.array(self.probs, dtype=float).ravel()
        if p.size == 0 or np.any(p < 0) or not np.all(np.isfinite(p)):
            raise ValueError("probabilities must be finite, nonnegative and nonempty")
        if self.truncation_mass < 0:
            raise ValueError("truncation mass must be nonnegative")
        if abs(p.sum() + self.truncation_mass - 1.0) > PMF_TOL:
            raise ValueError(f"probabilities sum to {p.sum()!r} with truncation {self.truncation_mass!r}")
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)

    def __len__(self):
        return self.probs.size

    @property
    def p0(self) -> float:
        return float(self.probs[0])

    def support(self) -> np.ndarray:
        return np.flatnonzero(self.probs > 0)

    def padded(self, length: int) -> np.ndarray:
        out = np.zeros(max(length, self.probs.size))
        out[: self.probs.size] = self.probs
        return out

    def trimmed(self) -> "LatticePMF":
        last = self.support()[-1] if self.support().size else 0
        return LatticePMF(self.probs[: last + 1], self.truncation_mass, self.step)

    def to_atomic(self) -> AtomicMeasure:
        """Atomic form with the truncated mass lumped one step past the end."""
        locs = np.arange(self.probs.size + 1) * self.step
        w = np.append(self.probs, self.truncation_mass)
        return AtomicMeasure(locs, w, normalize=True)

    def to_dict(self) -> dict:
        return {"probs": [float(x) for x in self.probs], "truncation_mass": self.truncation_mass, "step": self.step}


def pmf_from_atomic(m: AtomicMeasure, tol: float = 1e-9) -> LatticePMF:
    """Rescale an atomic measure onto the unit lattice; fail if the atoms are not co-rational."""
    pos = m.locs[m.locs > 0]
    if pos.size == 0:
        return LatticePMF([1.0])
    lat = lattice_test(pos, tol=tol)
    if not lat.is_lattice:
        raise ValueError("atoms do not lie on a common lattice")
    idx = np.rint(m.locs / lat.step).astype(np.int64)
    probs = np.zeros(idx[-1] + 1)
    np.add.at(probs, idx, m.weights)
    return LatticePMF(probs / probs.sum(), 0.0, lat.step)


# --------------------------------------------------------------------------
# discrete self-map


def hat_discrete(p: LatticePMF, cutoff: int | None = None) -> LatticePMF:
    """``p_hat_0 = sum p_n^2``, ``p_hat_k = 2 sum_n p_n p_{n+k}``, by direct double sums.

    The output's missing mass (from mass already missing in ``p``) is
    reported as its truncation mass; above ``TRUNCATION_TOL`` a
    ``TruncationWarning`` is issued.
    """
    if not isinstance(p, LatticePMF):
        p = LatticePMF(p)
    pr = p.probs
    n = pr.size - 1
    cutoff = n if cutoff is None else cutoff
    if cutoff < n:
        raise ValueError(f"cutoff {cutoff} below the support length {n}")
    out = np.zeros(cutoff + 1)
    out[0] = np.dot(pr, pr)
    for k in range(1, n + 1):
        out[k] = 2.0 * np.dot(pr[:-k], pr[k:])
    missing = max(1.0 - math.fsum(out), 0.0)
    if missing > TRUNCATION_TOL:
        warnings.warn(f"truncation mass {missing:.3g} exceeds {TRUNCATION_TOL:g}", TruncationWarning, stacklevel=2)
    return LatticePMF(out, missing, p.step)


def geometric_family(q: float, cutoff: int) -> LatticePMF:
    """``p_0 = (1-q)/2``, ``p_k = (1-q^2)/2 q^(k-1)``, cut after index ``cutoff``, not renormalized."""
    if not 0.0 <= q < 1.0:
        raise ValueError("q must lie in [0, 1)")
    if cutoff < 1:
        raise ValueError("cutoff must be >= 1")
    k = np.arange(1, cutoff + 1)
    p = np.empty(cutoff + 1)
    p[0] = (1.0 - q) / 2.0
    p[1:] = (1.0 - q * q) / 2.0 * q ** (k - 1.0)
    tail = (1.0 + q) / 2.0 * q**cutoff
    return LatticePMF(p, tail)


def l1_residual(p: LatticePMF) -> float:
    """``||hat(p) - p||_1`` over the common support."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", TruncationWarning)
        h = hat_discrete(p)
    return float(np.abs(h.probs - p.padded(h.probs.size)[: h.probs.size]).sum())


# --------------------------------------------------------------------------
# generating functions


@dataclass(frozen=True)
class GenFun:
    coeffs: np.ndarray

    @classmethod
    def of(cls, p: LatticePMF) -> "GenFun":
        return cls(p.probs)

    def f(self, z):
        z = np.asarray(z, dtype=complex)
        if np.any(np.abs(z) > 1.0 + 1e-12):
            raise ValueError("generating function is evaluated on the closed unit disk only")
        return np.polyval(self.coeffs[::-1], z)

    def g(self, z):
        return 2.0 * self.f(z) - 1.0


def genfun_eval(p: LatticePMF, z: complex) -> tuple[complex, complex]:
    """``(f(z), g(z))`` with ``f(z) = sum p_n z^n`` and ``g = 2 f - 1``."""
    f = complex(GenFun.of(p).f(z))
    return f, 2.0 * f - 1.0


def circle_points(m: int, offset: float = 0.0) -> np.ndarray:
    phi = 2.0 * np.pi * (np.arange(m) + offset) / m
    return phi


def boundary_modulus_check(p: LatticePMF, m: int = 256) -> float:
    """Largest ``| |g(e^{i phi})| - 1 |`` over ``m`` equispaced angles."""
    if m < 8:
        raise ValueError("m must be >= 8")
    z = np.exp(1j * circle_points(m))
    return float(np.max(np.abs(np.abs(GenFun.of(p).g(z)) - 1.0)))


def mobius(z, q: float):
    return (z - q) / (1.0 - q * z)


def mobius_compare(p: LatticePMF, q: float, m: int = 256) -> float:
    """Largest ``|g(z) - (z - q)/(1 - q z)|`` over ``m`` circle samples."""
    if m < 1:
        raise ValueError("m must be >= 1")
    z = np.exp(1j * circle_points(m))
    return float(np.max(np.abs(GenFun.of(p).g(z) - mobius(z, q))))


# --------------------------------------------------------------------------
# continuous self-map


def continuous_selfhat(mu: GridMeasure) -> GridMeasure:
    """Grid version of ``x -> 2 int mu(t + x) mu(t) dt``.

    For a density constant on cells, the integral at a cell midpoint is
    ``2 h sum_j mu_j (mu_{j+k} + mu_{j+k+1}) / 2`` exactly; this coincides
    with the midpoint rule at the cell midpoints and with the cell average
    of the exact output, so mass is preserved to rounding.
    """
    mu.check_tail()
    v = np.concatenate((mu.values, [0.0]))
    half = 0.5 * (v[:-1] + v[1:])
    n = mu.n
    dens = 2.0 * mu.h * signal.correlate(half, mu.values, mode="full", method="fft")[n - 1 : 2 * n - 1]
    dens = np.maximum(dens, 0.0)
    tail = max(1.0 - mu.h * dens.sum(), 0.0)
    return GridMeasure(mu.x_max, mu.n, dens, tail, normalize=True)


def grid_laplace_imag(mu: GridMeasure, tau) -> np.ndarray:
    """``f(i tau) = int e^{i tau t} mu(t) dt`` exactly for the cellwise-constant density.

    The tail mass contributes as an atom at ``x_max``.
    """
    tau = np.atleast_1d(np.asarray(tau, dtype=float))
    mids = mu.midpoints
    out = np.empty(tau.size, dtype=complex)
    block = max(1, 2**22 // mu.n)
    for s in range(0, tau.size, block):
        t = tau[s : s + block, None]
        cell = mu.h * np.sinc(t * mu.h / (2.0 * np.pi))
        out[s : s + block] = (np.exp(1j * t * mids) @ mu.values) * cell[:, 0]
    return out + mu.tail_mass * np.exp(1j * tau * mu.x_max)


@dataclass(frozen=True)
class LaplaceReport:
    product_deviation: float
    cayley_deviation: float
    tau_max: float
    taus: np.ndarray = field(repr=False)


def laplace_boundary_check(mu: GridMeasure, m: int = 256, tau_max: float | None = None) -> LaplaceReport:
    """``max |g(i tau) g(-i tau) - 1|`` on ``m`` points of ``[-tau_max, tau_max]``.

    Also pulls ``g`` back to the circle through ``z -> (z - 1)/(z + 1)``,
    which sends ``e^{i phi}`` to ``i tan(phi/2)``; angles are offset by half
    a step so ``phi = pi`` is never sampled. Reports ``max ||h| - 1|`` there.
    """
    if m < 8:
        raise ValueError("m must be >= 8")
    if tau_max is None:
        tau_max = 20.0 / max(mu.mean, 1e-12)
    taus = np.linspace(-tau_max, tau_max, m)
    g_plus = 2.0 * grid_laplace_imag(mu, taus) - 1.0
    g_minus = 2.0 * grid_laplace_imag(mu, -taus) - 1.0
    prod = float(np.max(np.abs(g_plus * g_minus - 1.0)))
    phi = circle_points(m, 0.5)
    h = 2.0 * grid_laplace_imag(mu, np.tan(phi / 2.0)) - 1.0
    cay = float(np.max(np.abs(np.abs(h) - 1.0)))
    return LaplaceReport(prod, cay, float(tau_max), taus)


# --------------------------------------------------------------------------
# iteration and searches


@dataclass(frozen=True)
class SelfIteration:
    measures: list
    fit_distances: list
    fit_params: list


def _nearest_geometric(m: AtomicMeasure, step: float, cutoff: int = 200) -> tuple[float, float]:
    unit = AtomicMeasure(m.locs / step, m.weights, merge_tol=0.0)

    def dist(q):
        return wasserstein_p(unit, geometric_family(q, cutoff).to_atomic(), 1)

    res = optimize.minimize_scalar(dist, bounds=(0.0, 0.99), method="bounded", options={"xatol": 1e-10})
    cands = [(float(res.fun), float(res.x)), (dist(0.0), 0.0)]
    d, q = min(cands)
    return d * step, q


def self_iterate(mu0: Measure1D, n: int, *, max_atoms: int = ATOM_CAP) -> SelfIteration:
    """``mu_{k+1} = T*_{mu_k} mu_k`` with a per-step fit.

    Atomic runs report the W1 distance to the nearest geometric fixed point
    (on the lattice of the starting atoms); grid runs report the W1 distance
    to the exponential with the same mean.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    seq = [mu0]
    for _ in range(n):
        cur = push_avg(seq[-1], seq[-1])
        if isinstance(cur, AtomicMeasure) and len(cur) > max_atoms:
            cur = coarsen(cur)
        seq.append(cur)
    dists, params = [], []
    step = None
    for m in seq:
        if isinstance(m, GridMeasure):
            rate = 1.0 / m.mean
            dists.append(wasserstein_p(m, exponential_grid(rate, m.x_max, m.n), 1))
            params.append(rate)
        else:
            a = m if isinstance(m, AtomicMeasure) else m.as_atomic()
            if step is None:
                pos = a.locs[a.locs > 0]
                lat = lattice_test(pos) if pos.size else None
                step = lat.step if lat is not None and lat.is_lattice else 1.0
            d, q = _nearest_geometric(a, step)
            dists.append(d)
            params.append(q)
    return SelfIteration(seq, dists, params)


@dataclass(frozen=True)
class FixedPointSearch:
    fixed_points: list
    residuals: list
    starts: int


def lattice_normalize(p: LatticePMF, tol: float = 1e-14) -> LatticePMF:
    """Collapse a PMF onto the sublattice generated by its support and trim it."""
    probs = np.where(p.probs > tol, p.probs, 0.0)
    supp = np.flatnonzero(probs)
    g = int(np.gcd.reduce(supp[supp > 0])) if np.any(supp > 0) else 1
    out = probs[::g][: supp[-1] // g + 1]
    s = out.sum()
    return LatticePMF(out / s, 0.0, p.step * g)


def _hat_raw(p: np.ndarray) -> np.ndarray:
    out = np.empty_like(p)
    out[0] = np.dot(p, p)
    for k in range(1, p.size):
        out[k] = 2.0 * np.dot(p[:-k], p[k:])
    return out


def _polish(x0: np.ndarray, max_nfev: int, mask=None) -> np.ndarray:
    mask = np.ones(x0.size, dtype=bool) if mask is None else mask

    def resid(v):
        p = np.zeros(x0.size)
        p[mask] = v
        return np.append(_hat_raw(p) - p, p.sum() - 1.0)

    sol = optimize.least_squares(resid, x0[mask], bounds=(0.0, 1.0), xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=max_nfev)
    out = np.zeros(x0.size)
    out[mask] = sol.x
    return out


def find_fixed_points(starts: int = 50, support: int = 8, seed: int = 0, tol: float = 1e-12) -> FixedPointSearch:
    """Solve ``hat(p) = p`` on ``{0..support}`` from random starting PMFs.

    Each start is a Dirichlet draw polished by bounded least squares on
    ``(hat(p) - p, sum(p) - 1)``. Solutions with residual below ``tol``
    are lattice-normalized and kept; the others are discarded.
    """
    rng = np.random.default_rng(seed)
    found, res = [], []
    for _ in range(starts):
        p = _polish(rng.dirichlet(np.ones(support + 1)), 300)
        p = np.where(p > 1e-7, p, 0.0)
        if p.sum() <= 0:
            continue
        fp = lattice_normalize(LatticePMF(p / p.sum()))
        # second pass on the reduced lattice, keeping the support fixed
        supp = fp.probs > 0
        q = np.zeros(fp.probs.size)
        q[supp] = _polish(fp.probs, 100, supp)[supp]
        fp = LatticePMF(q / q.sum(), 0.0, fp.step)
        r = l1_residual(fp)
        if r < tol:
            found.append(fp)
            res.append(r)
    return FixedPointSearch(found, res, starts)


@dataclass(frozen=True)
class BlaschkeCandidate:
    zeros: tuple
    min_coeff: float
    nonnegative: bool
    hat_residual: float


def _blaschke_series(zeros, terms: int) -> np.ndarray:
    # polynomials stored low-to-high degree; lfilter reads them the same way
    num = np.array([1.0 + 0j])
    den = np.array([1.0 + 0j])
    for a in zeros:
        num = np.convolve(num, [-a, 1.0])
        den = np.convolve(den, [1.0, -np.conj(a)])
    imp = np.zeros(terms)
    imp[0] = 1.0
    return signal.lfilter(num.real, den.real, imp)


def blaschke_scan(factors: int = 2, grid: int = 32, terms: int = 400) -> list[BlaschkeCandidate]:
    """Search products of ``factors`` disk automorphisms for nonnegative coefficients.

    Zeros range over a ``grid``-point mesh of ``(-1, 1)`` (real zeros) and,
    for pairs, over conjugate pairs ``r e^{+-i phi}`` on a ``grid x grid``
    polar mesh, so the series has real coefficients and ``g(1) = 1``. For
    each candidate ``f = (g + 1)/2`` is expanded to ``terms`` coefficients
    and tested for nonnegativity; nonnegative ones are also run through the
    discrete self-map. Nothing is asserted; the list is the record.
    """
    if factors < 1 or grid < 2:
        raise ValueError("need factors >= 1 and grid >= 2")
    reals = np.linspace(-1.0, 1.0, grid + 2)[1:-1]
    configs = []
    for combo in combinations_with_replacement(range(len(reals)), factors):
        configs.append(tuple(float(reals[i]) for i in combo))
    if factors >= 2:
        rs = np.linspace(0.0, 1.0, grid + 1)[1:-1]
        phis = np.linspace(0.0, np.pi, grid + 1)[1:-1]
        for combo in combinations_with_replacement(range(len(reals)), factors - 2):
            rest = tuple(float(reals[i]) for i in combo)
            for r in rs:
                for ph in phis:
                    a = r * np.exp(1j * ph)
                    configs.append((complex(a), complex(np.conj(a))) + rest)
    out = []
    for zeros in configs:
        g = _blaschke_series(zeros, terms)
        f = 0.5 * g
        f[0] += 0.5
        mn = float(f.min())
        ok = mn >= -1e-12
        resid = float("nan")
        if ok:
            probs = np.maximum(f, 0.0)
            trunc = max(1.0 - probs.sum(), 0.0)
            if trunc < 1e-6:
                pmf = LatticePMF(probs / (probs.sum() + trunc), trunc)
                resid = l1_residual(pmf)
        out.append(BlaschkeCandidate(zeros, mn, ok, resid))
    return out

