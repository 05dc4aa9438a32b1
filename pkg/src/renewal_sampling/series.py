"""Truncated formal power series over real coefficient sequences.

A series is a finite coefficient vector (c_0, ..., c_M) standing for
sum_n c_n z^n truncated at order M.  All operations are pure: they never
read past the stated order and truncate their result to the minimum of
the operand orders, so a coefficient of the result is always exact for
the (infinite) series whose head the operands represent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

DEFAULT_ORDER = 64
EPS_REVERT = 1e-12


class NonzeroConstantTerm(ValueError):
    """Composition/reversion needs a zero constant term."""


class OrderTooSmall(ValueError):
    """The requested operation needs more coefficients than available."""


class NotRevertible(ValueError):
    """Reversion needs a zero constant term and a nonzero linear term."""


@dataclass(frozen=True)
class CoeffSeries:
    """Coefficients (index n holds the z^n coefficient) up to order M."""

    coeffs: tuple[float, ...]

    def __post_init__(self):
        if len(self.coeffs) < 1:
            raise ValueError("series needs at least the constant term")
        if not all(math.isfinite(c) for c in self.coeffs):
            raise ValueError("series coefficients must be finite")
        object.__setattr__(self, "coeffs", tuple(float(c) for c in self.coeffs))

    @property
    def order(self) -> int:
        return len(self.coeffs) - 1

    def __getitem__(self, n: int) -> float:
        return self.coeffs[n]

    def array(self) -> np.ndarray:
        return np.asarray(self.coeffs, dtype=float)

    def truncated(self, order: int) -> "CoeffSeries":
        if order >= self.order:
            return self
        return CoeffSeries(self.coeffs[: order + 1])

    @staticmethod
    def from_values(values: Iterable[float]) -> "CoeffSeries":
        return CoeffSeries(tuple(float(v) for v in values))

    @staticmethod
    def zeros(order: int) -> "CoeffSeries":
        return CoeffSeries((0.0,) * (order + 1))

    @staticmethod
    def identity(order: int) -> "CoeffSeries":
        c = [0.0] * (order + 1)
        if order >= 1:
            c[1] = 1.0
        return CoeffSeries(tuple(c))


def _pad(a: np.ndarray, order: int) -> np.ndarray:
    if len(a) >= order + 1:
        return a[: order + 1]
    return np.pad(a, (0, order + 1 - len(a)))


def convolve(a: CoeffSeries, b: CoeffSeries) -> CoeffSeries:
    """Cauchy product, truncated to the smaller operand order."""
    order = min(a.order, b.order)
    full = np.convolve(a.array(), b.array())
    return CoeffSeries.from_values(full[: order + 1])


def compose(outer: CoeffSeries, inner: CoeffSeries) -> CoeffSeries:
    """Coefficients of G_outer(G_inner(z)); inner must have zero constant term."""
    if inner[0] != 0.0:
        raise NonzeroConstantTerm(f"inner constant term is {inner[0]!r}, not 0")
    order = min(outer.order, inner.order)
    oc = _pad(outer.array(), order)
    ic = _pad(inner.array(), order)
    # Horner accumulation of truncated powers of inner.
    acc = np.zeros(order + 1)
    acc[0] = oc[order]
    for k in range(order - 1, -1, -1):
        acc = np.convolve(acc, ic)[: order + 1]
        acc[0] += oc[k]
    return CoeffSeries.from_values(acc)


def derivative(a: CoeffSeries, k: int = 1) -> CoeffSeries:
    """k-th formal derivative; the result has order M - k."""
    if k < 1:
        raise ValueError("derivative order k must be >= 1")
    if k > a.order:
        raise OrderTooSmall(f"cannot take {k} derivatives of an order-{a.order} series")
    arr = a.array()
    n = np.arange(len(arr), dtype=float)
    coeff = arr.copy()
    for j in range(k):
        coeff = coeff * (n - j)
    return CoeffSeries.from_values(coeff[k:])


def abs_series(a: CoeffSeries) -> CoeffSeries:
    """Entrywise absolute value (the majorant series)."""
    return CoeffSeries.from_values(np.abs(a.array()))


def revert(a: CoeffSeries, eps_revert: float = EPS_REVERT) -> CoeffSeries:
    """Compositional inverse b with compose(a, b) = z, solved order by order.

    Requires a_0 = 0 and |a_1| >= eps_revert.
    """
    if a[0] != 0.0:
        raise NotRevertible(f"constant term is {a[0]!r}, not 0")
    if a.order < 1 or abs(a[1]) < eps_revert:
        a1 = a[1] if a.order >= 1 else 0.0
        raise NotRevertible(f"linear coefficient {a1!r} below threshold {eps_revert}")
    order = a.order
    ac = a.array()
    b = np.zeros(order + 1)
    b[1] = 1.0 / ac[1]
    # At step n the z^n coefficient of compose(a, b) depends on b_n only
    # through the linear term a_1 * b_n, so each order is solved directly.
    for n in range(2, order + 1):
        resid = compose(a, CoeffSeries.from_values(b))[n]
        b[n] = -resid / ac[1]
    return CoeffSeries.from_values(b)


def taylor_remainder_check(
    x: CoeffSeries, y: CoeffSeries, eps: CoeffSeries, n: int
) -> tuple[float, float, float, float]:
    """Both sides of the first- and second-order composition remainder bounds.

    Returns (lhs1, rhs1, lhs2, rhs2) with
        lhs1 = |(x o (y+e) - x o y)_n|
        rhs1 = ((|x|' o (|y|+|e|)) * |e|)_n
        lhs2 = |(x o (y+e) - x o y - (x' o y) * e)_n|
        rhs2 = ((|x|'' o (|y|+|e|)) * |e| * |e|)_n / 2
    The inputs are treated as polynomials; coefficient n of each side only
    involves indices <= n, so the values are exact.
    """
    for name, s in (("x", x), ("y", y), ("eps", eps)):
        if s[0] != 0.0:
            raise NonzeroConstantTerm(f"{name} has nonzero constant term {s[0]!r}")
    order = min(x.order, y.order, eps.order)
    if n > order:
        raise OrderTooSmall(f"index {n} exceeds common order {order}")
    # Work at order n + 2 so derivative order loss cannot clip index n.
    m = n + 2
    xp = CoeffSeries.from_values(_pad(x.array(), m))
    yp = CoeffSeries.from_values(_pad(y.array(), m))
    ep = CoeffSeries.from_values(_pad(eps.array(), m))
    y_plus_e = CoeffSeries.from_values(yp.array() + ep.array())
    xa, ya, ea = abs_series(xp), abs_series(yp), abs_series(ep)
    ya_plus_ea = CoeffSeries.from_values(ya.array() + ea.array())

    delta = compose(xp, y_plus_e).array() - compose(xp, yp).array()
    lhs1 = abs(delta[n])
    rhs1 = convolve(compose(derivative(xa, 1), ya_plus_ea), ea)[n]

    linear = convolve(compose(derivative(xp, 1), yp), ep).array()
    lhs2 = abs(_pad(delta, m)[n] - _pad(linear, m)[n])
    rhs2 = 0.5 * convolve(convolve(compose(derivative(xa, 2), ya_plus_ea), ea), ea)[n]
    return lhs1, float(rhs1), lhs2, float(rhs2)
