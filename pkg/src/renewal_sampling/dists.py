"""Distribution value types: integer pmfs, grid CDFs, and model specs.

Pmf carries an explicit truncation with tail-mass bookkeeping so that
downstream adaptive sums can tell "exactly zero beyond w_max" apart from
"truncated here".  GridCdf is a right-continuous nondecreasing function
sampled on a uniform grid over [0, t_max]; estimator outputs may violate
monotonicity and are flagged rather than coerced.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import zeta

PMF_NORM_TOL = 1e-9


@dataclass(frozen=True)
class Pmf:
    """Probability mass function on consecutive integers from min_support."""

    probs: tuple[float, ...]
    min_support: int = 0
    tail_mass: float = 0.0

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        if p.ndim != 1 or len(p) == 0:
            raise ValueError("probs must be a nonempty 1-d sequence")
        if not np.all(np.isfinite(p)) or np.any(p < 0):
            raise ValueError("probs must be finite and nonnegative")
        if self.tail_mass < 0:
            raise ValueError("tail_mass must be >= 0")
        total = float(p.sum()) + self.tail_mass
        if abs(total - 1.0) > PMF_NORM_TOL:
            raise ValueError(f"pmf mass {total} is not 1 within {PMF_NORM_TOL}")
        if self.min_support not in (0, 1):
            raise ValueError("min_support must be 0 or 1")
        object.__setattr__(self, "probs", tuple(float(v) for v in p))

    @property
    def w_max(self) -> int:
        return self.min_support + len(self.probs) - 1

    def __getitem__(self, w: int) -> float:
        if w < self.min_support or w > self.w_max:
            return 0.0
        return self.probs[w - self.min_support]

    def support(self) -> np.ndarray:
        return np.arange(self.min_support, self.w_max + 1)

    def array(self) -> np.ndarray:
        return np.asarray(self.probs, dtype=float)

    def from_zero(self) -> np.ndarray:
        """Values re-indexed from 0 (prepends a zero when min_support is 1)."""
        if self.min_support == 0:
            return self.array()
        return np.concatenate([[0.0], self.array()])

    def cdf(self) -> np.ndarray:
        return np.cumsum(self.array())


@dataclass(frozen=True)
class GridCdf:
    """CDF values on the grid 0, step, ..., t_max."""

    t_max: float
    step: float
    values: tuple[float, ...]

    def __post_init__(self):
        if self.t_max <= 0 or self.step <= 0:
            raise ValueError("t_max and step must be positive")
        n_cells = self.t_max / self.step
        if abs(n_cells - round(n_cells)) > 1e-6:
            raise ValueError(f"step {self.step} does not divide t_max {self.t_max}")
        v = np.asarray(self.values, dtype=float)
        if len(v) != int(round(n_cells)) + 1:
            raise ValueError("values length does not match the grid")
        if not np.all(np.isfinite(v)):
            raise ValueError("values must be finite")
        object.__setattr__(self, "values", tuple(float(x) for x in v))

    @property
    def n_points(self) -> int:
        return len(self.values)

    def grid(self) -> np.ndarray:
        return np.arange(self.n_points) * self.step

    def array(self) -> np.ndarray:
        return np.asarray(self.values, dtype=float)

    def at(self, t) -> np.ndarray:
        """Linear interpolation on the grid; 0 below 0, flat beyond t_max."""
        t = np.asarray(t, dtype=float)
        return np.interp(t, self.grid(), self.array(), left=0.0, right=self.values[-1])

    def monotonicity_violations(self, tol: float = 1e-12) -> int:
        d = np.diff(self.array())
        return int(np.sum(d < -tol))

    def deficiency(self) -> float:
        return 1.0 - self.values[-1]

    def with_values(self, values: np.ndarray) -> "GridCdf":
        return GridCdf(self.t_max, self.step, tuple(float(x) for x in values))


# --- size distributions -------------------------------------------------


@dataclass(frozen=True)
class Geometric:
    """P(W = w) = c^(w-1) (1-c), w >= 1."""

    c: float

    def __post_init__(self):
        if not 0 < self.c < 1:
            raise ValueError("c must be in (0,1)")


@dataclass(frozen=True)
class DiscretePareto:
    """P(W = w) = w^(-alpha-1) / zeta(alpha+1), w >= 1."""

    alpha: float

    def __post_init__(self):
        if self.alpha <= 0:
            raise ValueError("alpha must be > 0")


@dataclass(frozen=True)
class ExplicitSize:
    pmf: Pmf

    def __post_init__(self):
        if self.pmf.min_support != 1:
            raise ValueError("size pmf must have min_support 1 (W >= 1)")


@dataclass(frozen=True)
class Exponential:
    rate: float

    def __post_init__(self):
        if self.rate <= 0:
            raise ValueError("rate must be > 0")


@dataclass(frozen=True)
class ExplicitGaps:
    cdf: GridCdf


SizeDist = Geometric | DiscretePareto | ExplicitSize
GapDist = Exponential | ExplicitGaps


@dataclass(frozen=True)
class ModelSpec:
    size_dist: SizeDist
    gap_dist: GapDist
    q: float

    def __post_init__(self):
        if not 0 < self.q < 1:
            raise ValueError("q must be in (0,1)")


@lru_cache(maxsize=8)
def _pareto_norm(alpha: float) -> float:
    return float(zeta(alpha + 1.0))


def pareto_survival(alpha: float, w: float) -> float:
    """P(W > w) for the discrete Pareto, via the Hurwitz zeta tail."""
    return float(zeta(alpha + 1.0, w + 1.0)) / _pareto_norm(alpha)


def size_pmf(dist: SizeDist | Pmf, w_max: int) -> Pmf:
    """Materialize a size distribution up to w_max with exact tail mass."""
    if isinstance(dist, Pmf):
        return dist
    if isinstance(dist, ExplicitSize):
        return dist.pmf
    w = np.arange(1, w_max + 1, dtype=float)
    if isinstance(dist, Geometric):
        probs = dist.c ** (w - 1) * (1 - dist.c)
        tail = dist.c**w_max
    elif isinstance(dist, DiscretePareto):
        probs = w ** (-dist.alpha - 1.0) / _pareto_norm(dist.alpha)
        tail = pareto_survival(dist.alpha, w_max)
    else:
        raise TypeError(f"unknown size distribution {dist!r}")
    return Pmf(tuple(probs), min_support=1, tail_mass=max(float(tail), 0.0))


def point_mass(w: int) -> Pmf:
    """Size pmf concentrated at a single w >= 1."""
    if w < 1:
        raise ValueError("w must be >= 1")
    probs = [0.0] * w
    probs[w - 1] = 1.0
    return Pmf(tuple(probs), min_support=1)


def gap_cdf(dist: GapDist, t_max: float, step: float) -> GridCdf:
    """Materialize a gap distribution's CDF on the requested grid."""
    if isinstance(dist, ExplicitGaps):
        return dist.cdf
    if isinstance(dist, Exponential):
        n = int(round(t_max / step))
        t = np.arange(n + 1) * step
        return GridCdf(t_max, step, tuple(-np.expm1(-dist.rate * t)))
    raise TypeError(f"unknown gap distribution {dist!r}")


def gap_mean(dist: GapDist) -> float:
    if isinstance(dist, Exponential):
        return 1.0 / dist.rate
    cdf = dist.cdf
    # mean = integral of the survival function over the grid range
    return float(np.trapezoid(1.0 - cdf.array(), dx=cdf.step))
