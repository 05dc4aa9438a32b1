"""Forward direction: from the original model to the sampled process.

Given the size pmf f_W, the gap CDF F_D and the sampling probability q,
this module computes the sampled-size pmf, the gap mixing coefficients
(conditioning on an exact or at-least sampled count), the joint and
duration variants, the induced sampled-gap CDF, and the heavy-tail
asymptote diagnostics.

Conventions: the conditional law of a sampled gap is the mixture
F_{gap|s} = sum_m A_{s,m} F_D^{*m}, where A_{s,m} is the probability that
m-1 original renewals sit between two consecutive sampled ones.  The
coefficients never take the gap index as an input: given the sampled
count, all gaps share one law.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln
from scipy.stats import binom

from .dists import DiscretePareto, GridCdf, Pmf, size_pmf
from .grids import mix_cdf_series
from .series import CoeffSeries

GAP_MIX_TAIL_TOL = 1e-6


class ZeroConditioningMass(ValueError):
    """The conditioning event has zero probability under the given pmf."""


class TailTooHeavy(ValueError):
    """A truncated series kept too much mass past the truncation point."""


def _log_comb(n, k):
    n = np.asarray(n, dtype=float)
    k = np.asarray(k, dtype=float)
    return gammaln(n + 1.0) - gammaln(k + 1.0) - gammaln(n - k + 1.0)


def sampled_size_pmf(f_w: Pmf, q: float, s_max: int) -> Pmf:
    """Pmf of the sampled count: f_{W_q}(s) = sum_w C(w,s) q^s (1-q)^(w-s) f_W(w).

    Exact for finitely supported f_W with s_max >= w_max; otherwise the
    missing mass is recorded in tail_mass.
    """
    if not 0 < q < 1:
        raise ValueError("q must be in (0,1)")
    if s_max < 1:
        raise ValueError("s_max must be >= 1")
    w = f_w.support().astype(float)
    fw = f_w.array()
    probs = np.zeros(s_max + 1)
    for s in range(0, s_max + 1):
        mask = w >= s
        if not mask.any():
            continue
        lt = _log_comb(w[mask], s) + s * np.log(q) + (w[mask] - s) * np.log1p(-q)
        probs[s] = float(np.sum(np.exp(lt) * fw[mask]))
    if f_w.tail_mass == 0.0 and s_max >= f_w.w_max:
        tail = 0.0  # the sampled count cannot exceed the original support
    else:
        tail = max(0.0, 1.0 - probs.sum())
    return Pmf(tuple(probs), min_support=0, tail_mass=tail)


def size_pgf(f_w: Pmf, z: np.ndarray) -> np.ndarray:
    """G_W(z) = sum_w f_W(w) z^w over the materialized support."""
    z = np.atleast_1d(np.asarray(z, dtype=float))
    w = f_w.support()
    return np.array([float(np.sum(f_w.array() * zz**w)) for zz in z])


def gap_mix_coeffs(
    f_w: Pmf,
    f_wq: Pmf,
    q: float,
    s: int,
    m_max: int,
    tail_tol: float = GAP_MIX_TAIL_TOL,
) -> CoeffSeries:
    """Mixing coefficients A_{s,m}, m = 1..m_max, conditioning on count == s.

    A_{s,m} = q^s / f_{W_q}(s) * sum_{w >= s+m-1} f_W(w) C(w-m, s-1) (1-q)^(w-s).
    Entry 0 of the returned series is 0.  Raises TailTooHeavy when the
    truncation shortfall 1 - sum_m A_{s,m} is not below tail_tol.
    """
    if s < 2:
        raise ValueError("s must be >= 2 (at least one sampled gap)")
    denom = f_wq[s]
    if denom <= 0.0:
        raise ZeroConditioningMass(f"f_Wq({s}) = 0")
    w = f_w.support().astype(float)
    fw = f_w.array()
    out = np.zeros(m_max + 1)
    for m in range(1, m_max + 1):
        mask = w >= s + m - 1
        if not mask.any():
            continue
        lt = _log_comb(w[mask] - m, s - 1) + (w[mask] - s) * np.log1p(-q)
        out[m] = (q**s) * float(np.sum(np.exp(lt) * fw[mask])) / denom
    shortfall = 1.0 - out.sum()
    if shortfall >= tail_tol:
        raise TailTooHeavy(
            f"mixing tail {shortfall:.3g} >= {tail_tol:.3g} at m_max={m_max}"
        )
    return CoeffSeries.from_values(out)


def prob_count_at_least(f_w: Pmf, q: float, s: int) -> float:
    """P(W_q >= s); the unmaterialized f_W tail is counted as certain."""
    w = f_w.support()
    p = float(np.sum(f_w.array() * binom.sf(s - 1, w, q)))
    return p + f_w.tail_mass


def gap_mix_coeffs_geq(
    f_w: Pmf,
    q: float,
    s: int,
    m_max: int,
    tail_tol: float = GAP_MIX_TAIL_TOL,
) -> CoeffSeries:
    """Mixing coefficients when conditioning on count >= s.

    A_{s+,m} = q (1-q)^(m-1) / P(W_q >= s)
               * sum_{w >= m+s-1} f_W(w) P(Bin(w-m, q) >= s-1).
    """
    if s < 2:
        raise ValueError("s must be >= 2")
    p_geq = prob_count_at_least(f_w, q, s)
    if p_geq <= 0.0:
        raise ZeroConditioningMass(f"P(W_q >= {s}) = 0")
    w = f_w.support()
    fw = f_w.array()
    out = np.zeros(m_max + 1)
    for m in range(1, m_max + 1):
        mask = w >= s + m - 1
        if not mask.any():
            continue
        inner = binom.sf(s - 2, w[mask] - m, q)
        out[m] = q * (1 - q) ** (m - 1) * float(np.sum(fw[mask] * inner)) / p_geq
    shortfall = 1.0 - out.sum()
    if shortfall >= tail_tol:
        raise TailTooHeavy(
            f"mixing tail {shortfall:.3g} >= {tail_tol:.3g} at m_max={m_max}"
        )
    return CoeffSeries.from_values(out)


@dataclass(frozen=True)
class JointGapCoeffs:
    """Joint mixing coefficients for n gaps given count == s.

    The value depends on the index vector (m_1, ..., m_n) only through
    m = m_1 + ... + m_n, so only the by-total vector is stored.
    """

    s: int
    n: int
    by_total: tuple[float, ...]  # index = total m, entries 0 for m < n

    def __getitem__(self, m_vec) -> float:
        if len(m_vec) != self.n:
            raise ValueError(f"expected {self.n} indices, got {len(m_vec)}")
        if any(m < 1 for m in m_vec):
            raise ValueError("each m_j must be >= 1")
        total = int(sum(m_vec))
        if total >= len(self.by_total):
            raise KeyError(f"total m={total} beyond computed range")
        return self.by_total[total]

    def total_mass(self) -> float:
        """Sum over all index vectors: sum_m C(m-1, n-1) * B_m."""
        m = np.arange(self.n, len(self.by_total))
        mult = np.exp(_log_comb(m - 1, self.n - 1))
        return float(np.sum(mult * np.asarray(self.by_total)[self.n :]))

    def marginal(self, m1: int, m_total_max: int | None = None) -> float:
        """sum over m_2..m_n of B_{s,(m1, m2, ..., mn)} (compositions count)."""
        upper = len(self.by_total) - 1 if m_total_max is None else m_total_max
        total = 0.0
        for m in range(m1 + self.n - 1, upper + 1):
            rest = m - m1
            mult = np.exp(_log_comb(rest - 1, self.n - 2)) if self.n > 1 else 1.0
            total += mult * self.by_total[m]
        return total


def joint_gap_coeffs(
    f_w: Pmf,
    f_wq: Pmf,
    q: float,
    s: int,
    n: int,
    m_total_max: int,
) -> JointGapCoeffs:
    """B_{s,m} = q^s / f_{W_q}(s) * sum_{w >= s+m-n} f_W(w) C(w-m, s-n) (1-q)^(w-s)
    for every total m = m_1 + ... + m_n up to m_total_max."""
    if not 2 <= n + 1 <= s:
        raise ValueError("need 2 <= n+1 <= s")
    denom = f_wq[s]
    if denom <= 0.0:
        raise ZeroConditioningMass(f"f_Wq({s}) = 0")
    w = f_w.support().astype(float)
    fw = f_w.array()
    by_total = np.zeros(m_total_max + 1)
    for m in range(n, m_total_max + 1):
        mask = w >= s + m - n
        if not mask.any():
            continue
        lt = _log_comb(w[mask] - m, s - n) + (w[mask] - s) * np.log1p(-q)
        by_total[m] = (q**s) * float(np.sum(np.exp(lt) * fw[mask])) / denom
    return JointGapCoeffs(s=s, n=n, by_total=tuple(by_total))


def duration_coeffs(f_w: Pmf, q: float, m_max: int) -> CoeffSeries:
    """Duration mixing coefficients given count >= 2:

    C_m = q^2 / P(W_q >= 2) * sum_{w >= m+1} f_W(w) (w-m) (1-q)^(w-m-1).
    """
    p2 = prob_count_at_least(f_w, q, 2)
    if p2 <= 0.0:
        raise ZeroConditioningMass("P(W_q >= 2) = 0")
    w = f_w.support().astype(float)
    fw = f_w.array()
    out = np.zeros(m_max + 1)
    for m in range(1, m_max + 1):
        mask = w >= m + 1
        if not mask.any():
            continue
        ww = w[mask]
        lt = np.log(ww - m) + (ww - m - 1) * np.log1p(-q)
        out[m] = (q**2) * float(np.sum(np.exp(lt) * fw[mask])) / p2
    return CoeffSeries.from_values(out)


def conditional_gap_cdf(
    f_d: GridCdf, a_s: CoeffSeries, trunc_tol: float = 1e-8
) -> GridCdf:
    """Sampled-gap CDF sum_m A_{s,m} F_D^{*m}, truncated when the remaining
    coefficient mass drops below trunc_tol."""
    a = a_s.array()
    if np.any(a < 0):
        raise ValueError("mixing coefficients must be nonnegative")
    remaining = 1.0 - np.cumsum(a)
    stop = len(a) - 1
    hit = np.nonzero(remaining < trunc_tol)[0]
    if hit.size:
        stop = int(hit[0])
    weights = a[1 : stop + 1]
    if weights.size == 0:
        raise ValueError("no usable mixing coefficients")
    return mix_cdf_series(weights, f_d)


@dataclass(frozen=True)
class HeavyTailReport:
    """Normalized asymptote sequences for convergence inspection.

    survival_scaled[j]  = P(W_q > w_probe[j]) * w^alpha      -> q^alpha * c
    duration_scaled[j]  = C_m * m^(alpha+1) at m_probe[j]    -> c*alpha / P(W_q>=2)
    gap_scaled[j]       = A_{2,m} * m^(alpha+1) / (1-q)^m    -> constant
    """

    alpha: float
    c: float
    q: float
    w_probe: tuple[int, ...]
    survival_scaled: tuple[float, ...]
    m_probe: tuple[int, ...]
    duration_scaled: tuple[float, ...]
    gap_scaled: tuple[float, ...]
    survival_limit: float
    duration_limit: float


def heavy_tail_diagnostics(
    alpha: float,
    c: float,
    q: float,
    w_max: int,
    f_w: Pmf | None = None,
) -> HeavyTailReport:
    """Asymptote ratio sequences for a (claimed) heavy tail f_W(w) ~ c*alpha*w^(-alpha-1).

    With f_w omitted the discrete Pareto with the given alpha is used (for
    which c = 1/(alpha*zeta(alpha+1))).  Passing an explicit pmf supports
    negative controls with light tails.
    """
    if alpha <= 0 or c <= 0:
        raise ValueError("alpha and c must be positive")
    pareto = f_w is None
    m_top = max(8, w_max)
    if pareto:
        reach = int(m_top + max(400, 80.0 / max(q, 1e-3)))
        f_w = size_pmf(DiscretePareto(alpha), max(reach, 20 * w_max, 100_000))

    w_probe = _log_spaced(w_max)
    surv = []
    for wv in w_probe:
        sup = f_w.support()
        p = float(np.sum(f_w.array() * binom.sf(wv, sup, q))) + f_w.tail_mass
        surv.append(p * wv**alpha)

    m_probe = _log_spaced(m_top)
    dur = duration_coeffs(f_w, q, m_probe[-1])
    p2 = prob_count_at_least(f_w, q, 2)
    dur_scaled = [dur[m] * m ** (alpha + 1) for m in m_probe]

    f_wq = sampled_size_pmf(f_w, q, s_max=4)
    a2 = gap_mix_coeffs(f_w, f_wq, q, s=2, m_max=m_probe[-1], tail_tol=1.0)
    gap_scaled = [a2[m] * m ** (alpha + 1) / (1 - q) ** m for m in m_probe]

    return HeavyTailReport(
        alpha=alpha,
        c=c,
        q=q,
        w_probe=tuple(w_probe),
        survival_scaled=tuple(surv),
        m_probe=tuple(m_probe),
        duration_scaled=tuple(dur_scaled),
        gap_scaled=tuple(gap_scaled),
        survival_limit=q**alpha * c,
        duration_limit=c * alpha / p2,
    )


def _log_spaced(top: int) -> list[int]:
    vals = {1, 2}
    v = 2
    while v < top:
        v = min(2 * v, top)
        vals.add(v)
    return sorted(vals)
