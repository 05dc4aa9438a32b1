"""Decompounding: recover the original gap CDF from sampled flows.

Pipeline: plug-in mixing coefficients A_hat from (f_hat_W, f_hat_Wq),
reversion to a_hat, empirical conditional gap CDF, then the truncated
series sum_n a_hat_n F_hat^{*n} with discretized Stieltjes convolutions.
Conditioning is either on an exact sampled count s or on counts >= s
(which pools more gaps and changes the mixing coefficients).

The estimator is reported raw: local non-monotonicity and excursions
outside [0,1] are counted in the diagnostics, not coerced away.  The
bootstrap band is heuristic (its justification is an open problem); the
diagnostics say so.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular, toeplitz
from scipy.signal import fftconvolve
from scipy.special import gammaln
from scipy.stats import binom

from .dists import GridCdf, Pmf
from .forward import TailTooHeavy, ZeroConditioningMass
from .series import CoeffSeries, NotRevertible, compose
from .simulate import SampledDataset, record_rng
from .size_inversion import SignedSeq, _s_matrix

LOW_COUNT_WARN = 30


@dataclass(frozen=True)
class Exact:
    """Condition on sampled count == s."""

    s: int

    def __post_init__(self):
        if self.s < 2:
            raise ValueError("s must be >= 2")


@dataclass(frozen=True)
class AtLeast:
    """Condition on sampled count >= s."""

    s: int

    def __post_init__(self):
        if self.s < 2:
            raise ValueError("s must be >= 2")


Conditioning = Exact | AtLeast


@dataclass(frozen=True)
class DecompoundConfig:
    conditioning: Conditioning = Exact(2)
    i: int = 1
    n_max: int = 40
    trunc_tol: float = 1e-6
    t_max: float = 5.0
    step: float = 0.005
    bootstrap_b: int = 199

    def __post_init__(self):
        if isinstance(self.conditioning, Exact) and not self.i < self.conditioning.s:
            raise ValueError("need gap index i < s for exact conditioning")
        if self.i < 1:
            raise ValueError("gap index i must be >= 1")
        if self.n_max < 1:
            raise ValueError("n_max must be >= 1")
        n_cells = self.t_max / self.step
        if abs(n_cells - round(n_cells)) > 1e-6:
            raise ValueError("step must divide t_max")


@dataclass
class DecompoundDiagnostics:
    n_star: int
    tail_bound: float
    reversion_residual: float
    monotonicity_violations: int
    conditioning_count: int
    low_count_warning: bool
    band_note: str = "bootstrap bands are heuristic (no proven justification)"

    def as_text(self) -> str:
        lines = [
            f"n_star = {self.n_star}",
            f"tail_bound = {self.tail_bound:.6g}",
            f"reversion_residual = {self.reversion_residual:.6g}",
            f"monotonicity_violations = {self.monotonicity_violations}",
            f"conditioning_count = {self.conditioning_count}",
            f"low_count_warning = {self.low_count_warning}",
            f"band_note = {self.band_note}",
        ]
        return "\n".join(lines)


@dataclass
class BandResult:
    radius: float
    dropped_replicates: int
    n_replicates: int


def empirical_A_hat(
    f_hat_w: SignedSeq, f_hat_wq: Pmf, q: float, s: int, n_max: int
) -> CoeffSeries:
    """Plug-in mixing coefficients for exact conditioning; entries may be negative."""
    if f_hat_wq[s] <= 0.0:
        raise ZeroConditioningMass(f"empirical f_Wq({s}) = 0")
    mat = _a_hat_matrix_exact(q, s, n_max, f_hat_w.w_max)
    vals = mat @ f_hat_w.array() / f_hat_wq[s]
    return CoeffSeries.from_values(np.concatenate([[0.0], vals]))


def empirical_A_hat_geq(
    f_hat_w: SignedSeq, p_geq: float, q: float, s: int, n_max: int
) -> CoeffSeries:
    """Plug-in mixing coefficients when conditioning on counts >= s."""
    if p_geq <= 0.0:
        raise ZeroConditioningMass(f"empirical P(W_q >= {s}) = 0")
    mat = _a_hat_matrix_geq(q, s, n_max, f_hat_w.w_max)
    vals = mat @ f_hat_w.array() / p_geq
    return CoeffSeries.from_values(np.concatenate([[0.0], vals]))


def _a_hat_matrix_exact(q: float, s: int, n_max: int, w_top: int) -> np.ndarray:
    """K[n-1, w-1] = q^s C(w-n, s-1) (1-q)^(w-s) over n=1..n_max, w=1..w_top."""
    n = np.arange(1, n_max + 1)[:, None].astype(float)
    w = np.arange(1, w_top + 1)[None, :].astype(float)
    diff = w - n
    valid = diff >= s - 1
    dpos = np.maximum(diff, s - 1.0)
    log_c = gammaln(dpos + 1.0) - gammaln(s) - gammaln(dpos - (s - 1) + 1.0)
    mat = np.where(valid, np.exp(log_c + (w - s) * np.log1p(-q) + s * np.log(q)), 0.0)
    return mat


def _a_hat_matrix_geq(q: float, s: int, n_max: int, w_top: int) -> np.ndarray:
    """K[n-1, w-1] = q (1-q)^(n-1) P(Bin(w-n, q) >= s-1) for w >= n+s-1."""
    n = np.arange(1, n_max + 1)[:, None].astype(float)
    w = np.arange(1, w_top + 1)[None, :].astype(float)
    diff = w - n
    valid = diff >= s - 1
    sf = binom.sf(s - 2, np.maximum(diff, 0.0), q)
    mat = np.where(valid, q * (1 - q) ** (n - 1) * sf, 0.0)
    return mat


def _select_gaps(ds: SampledDataset, cond: Conditioning, i: int) -> np.ndarray:
    if isinstance(cond, Exact):
        mask = ds.counts == cond.s
    else:
        mask = ds.counts >= cond.s
    return ds.gap_at_index(i, mask)


def empirical_conditional_cdf(
    ds: SampledDataset, cond: Conditioning | int, i: int, t_max: float, step: float
) -> GridCdf:
    """ECDF of gap i among the conditioning records, sampled on the grid."""
    if isinstance(cond, int):
        cond = Exact(cond)
    if not i < cond.s:
        raise ValueError("need gap index i < s")
    gaps = _select_gaps(ds, cond, i)
    if gaps.size == 0:
        raise ZeroConditioningMass(f"no records with count {cond}")
    return GridCdf(t_max, step, tuple(_ecdf_on_grid(gaps, t_max, step)))


def _ecdf_on_grid(values: np.ndarray, t_max: float, step: float) -> np.ndarray:
    n_pts = int(round(t_max / step)) + 1
    grid = np.arange(n_pts) * step
    sorted_vals = np.sort(values)
    return np.searchsorted(sorted_vals, grid, side="right") / len(values)


def _revert_arr(a: np.ndarray, order: int) -> np.ndarray:
    """Reversion coefficients b_1..b_order of sum_{n>=1} a_n z^n (a indexed from 0).

    Power-iteration form of the inversion b_n = [z^(n-1)] (z/a(z))^n / n;
    agrees with the order-by-order solver to rounding (tested) and costs
    O(order) vector ops, which the bootstrap path needs.
    """
    u = np.zeros(order)
    u[: min(len(a) - 1, order)] = a[1 : order + 1]  # a(z)/z
    e1 = np.zeros(order)
    e1[0] = 1.0
    h = solve_triangular(toeplitz(u, e1), e1, lower=True)  # z/a(z)
    b = np.zeros(order + 1)
    power = h
    b[1] = h[0]
    for n in range(2, order + 1):
        power = np.convolve(power, h)[:order]
        b[n] = power[n - 1] / n
    return b


# When no truncation point meets trunc_tol, the series is still usable as
# long as the dropped-term bound stays below this (the explosive-regime
# mixing estimate lives here: its reversion coefficients grow, but the
# convolution powers on the window shrink factorially faster).
FALLBACK_TAIL_TOL = 0.05


def _truncated_mixture(
    b: np.ndarray, cdf_values: np.ndarray, n_max: int, trunc_tol: float
):
    """sum_{n<=n_star} b_n F^{*n} with a data-driven truncation point.

    Term n of the series has sup-norm exactly u_n = |b_n| F^{*n}(t_max) on
    the window (powers of a genuine ECDF are nondecreasing in t), so the
    dropped mass after n is bounded by the computed remainder of u plus a
    geometric extrapolation of its terminal ratio.  n_star is the first n
    bringing that below trunc_tol; when no n does, the full n_max series is
    kept if the extrapolated remainder is below FALLBACK_TAIL_TOL, else the
    series cannot be truncated meaningfully and TailTooHeavy signals that
    the (unverifiable) inversion conditions are suspect.
    """
    n_pts = len(cdf_values)
    dg = np.diff(cdf_values)
    mag = np.abs(b[1 : n_max + 1])
    # suffix_max[k] = max |b_j| over j > k (1-based term index)
    suffix_max = np.concatenate([np.maximum.accumulate(mag[::-1])[::-1][1:], [0.0]])
    noise_floor = trunc_tol / (10.0 * n_max)
    powers = [cdf_values]
    u_list = [mag[0] * cdf_values[-1]]
    skipped_bound = 0.0
    for k in range(2, n_max + 1):
        top = powers[-1][-1]
        if suffix_max[k - 2] * top < noise_floor:
            # every remaining term j >= k is bounded by |b_j| P_{k-1}(t_max)
            skipped_bound = (n_max - k + 1) * suffix_max[k - 2] * top
            break
        prev = powers[-1]
        h = 0.5 * (prev[:-1] + prev[1:])
        full = fftconvolve(h, dg)
        nxt = np.zeros(n_pts)
        nxt[1:] = full[: n_pts - 1]
        powers.append(nxt)
        u_list.append(mag[k - 1] * nxt[-1])
    u = np.asarray(u_list)
    kept = len(u)
    tail_from = np.concatenate([np.cumsum(u[::-1])[::-1][1:], [0.0]])
    if kept < n_max or u[-1] <= noise_floor:
        extrap = skipped_bound + (float(u[-1]) if kept == n_max else 0.0)
    else:
        ratios = u[1:] / np.where(u[:-1] > 0, u[:-1], np.inf)
        r = float(np.max(ratios[-3:])) if kept >= 2 else 0.0
        if not np.isfinite(r) or r < 0:
            r = 0.0
        if r >= 1.0:
            raise TailTooHeavy(
                f"series terms are not decaying at n_max={n_max} "
                f"(terminal sup-norm ratio {r:.3g})"
            )
        extrap = float(u[-1] * r / (1.0 - r))
    bounds = tail_from + extrap
    ok = np.nonzero(bounds < trunc_tol)[0]
    if ok.size:
        n_star = int(ok[0]) + 1
    elif bounds[-1] < FALLBACK_TAIL_TOL:
        n_star = kept
    else:
        raise TailTooHeavy(
            f"dropped-term bound {bounds[-1]:.3g} never below "
            f"{FALLBACK_TAIL_TOL:.3g} by n_max={n_max}"
        )
    acc = np.zeros(n_pts)
    for k in range(n_star):
        if b[k + 1] != 0.0:
            acc += b[k + 1] * powers[k]
    return acc, n_star, float(bounds[n_star - 1])


def _pipeline(
    counts: np.ndarray,
    cond_gaps: np.ndarray,
    q: float,
    cfg: DecompoundConfig,
    s_mat: np.ndarray,
    a_mat: np.ndarray,
    with_residual: bool,
):
    """Full decompound on columnar data; shared by the estimator and bootstrap."""
    n = len(counts)
    cond = cfg.conditioning
    p_hat = np.bincount(counts, minlength=s_mat.shape[1]) / n
    if len(p_hat) > s_mat.shape[1]:
        raise ValueError("counts exceed the precomputed support")
    f_hat_w = s_mat @ p_hat
    if isinstance(cond, Exact):
        denom = p_hat[cond.s] if cond.s < len(p_hat) else 0.0
    else:
        denom = float(p_hat[cond.s :].sum()) if cond.s < len(p_hat) else 0.0
    if denom <= 0.0 or cond_gaps.size == 0:
        raise ZeroConditioningMass(f"no mass at conditioning {cond}")
    a_hat = a_mat @ f_hat_w / denom
    a_full = np.concatenate([[0.0], a_hat])
    if abs(a_full[1]) < 1e-12:
        raise NotRevertible(f"A_hat linear coefficient {a_full[1]:.3g} is below 1e-12")
    b = _revert_arr(a_full, cfg.n_max)
    ecdf = _ecdf_on_grid(cond_gaps, cfg.t_max, cfg.step)
    values, n_star, tail_bound = _truncated_mixture(b, ecdf, cfg.n_max, cfg.trunc_tol)
    residual = float("nan")
    if with_residual:
        ident = CoeffSeries.identity(cfg.n_max)
        comp = compose(
            CoeffSeries.from_values(b), CoeffSeries.from_values(a_full[: cfg.n_max + 1])
        )
        residual = float(np.max(np.abs(comp.array() - ident.array())))
    return values, n_star, tail_bound, residual


def _prepared_matrices(ds: SampledDataset, q: float, cfg: DecompoundConfig):
    s_top = int(ds.counts.max())
    w_top = max(s_top, 1)
    s_mat = _s_matrix(w_top, s_top, q)
    cond = cfg.conditioning
    if isinstance(cond, Exact):
        a_mat = _a_hat_matrix_exact(q, cond.s, cfg.n_max, w_top)
    else:
        a_mat = _a_hat_matrix_geq(q, cond.s, cfg.n_max, w_top)
    return s_mat, a_mat


def decompound(
    ds: SampledDataset, q: float, cfg: DecompoundConfig
) -> tuple[GridCdf, DecompoundDiagnostics]:
    """Estimate the original gap CDF from a sampled dataset."""
    s_mat, a_mat = _prepared_matrices(ds, q, cfg)
    gaps = _select_gaps(ds, cfg.conditioning, cfg.i)
    if gaps.size == 0:
        raise ZeroConditioningMass(f"no records match {cfg.conditioning}")
    low = gaps.size < LOW_COUNT_WARN
    if low:
        warnings.warn(
            f"only {gaps.size} records match {cfg.conditioning}; "
            "expect wide bands",
            stacklevel=2,
        )
    values, n_star, tail_bound, residual = _pipeline(
        ds.counts, gaps, q, cfg, s_mat, a_mat, with_residual=True
    )
    cdf = GridCdf(cfg.t_max, cfg.step, tuple(values))
    diag = DecompoundDiagnostics(
        n_star=n_star,
        tail_bound=tail_bound,
        reversion_residual=residual,
        monotonicity_violations=cdf.monotonicity_violations(),
        conditioning_count=int(gaps.size),
        low_count_warning=low,
    )
    return cdf, diag


def decompound_geq(
    ds: SampledDataset, q: float, cfg: DecompoundConfig
) -> tuple[GridCdf, DecompoundDiagnostics]:
    """decompound with at-least-s conditioning enforced."""
    if not isinstance(cfg.conditioning, AtLeast):
        raise ValueError("decompound_geq needs an AtLeast conditioning")
    return decompound(ds, q, cfg)


def bootstrap_band_FD(
    ds: SampledDataset, q: float, cfg: DecompoundConfig, alpha: float, seed: int
) -> BandResult:
    """Sup-norm bootstrap radius for the decompound estimate on [0, t_max].

    Resamples records with replacement, reruns the full pipeline per
    replicate, and returns the alpha percentile of sup_t |F*(t) - F_hat(t)|.
    Replicates whose resample kills the conditioning event are dropped and
    counted.
    """
    if cfg.bootstrap_b < 100:
        raise ValueError("need at least 100 bootstrap replicates")
    s_mat, a_mat = _prepared_matrices(ds, q, cfg)
    gaps = _select_gaps(ds, cfg.conditioning, cfg.i)
    base, *_ = _pipeline(ds.counts, gaps, q, cfg, s_mat, a_mat, with_residual=False)
    n = ds.n
    if isinstance(cfg.conditioning, Exact):
        base_mask = ds.counts == cfg.conditioning.s
    else:
        base_mask = ds.counts >= cfg.conditioning.s
    gap_by_record = np.full(n, np.nan)
    gap_by_record[base_mask] = ds.gap_at_index(cfg.i, base_mask)
    # Resample against a content-sorted view so the radius depends only on
    # the multiset of records, never on their file order.
    canon = np.lexsort((np.nan_to_num(gap_by_record, nan=-1.0), ds.counts))
    counts_canon = ds.counts[canon]
    gap_canon = gap_by_record[canon]
    sups = []
    dropped = 0
    for rep in range(cfg.bootstrap_b):
        rng = record_rng(seed, rep)
        idx = rng.integers(0, n, n)
        counts_star = counts_canon[idx]
        gsel = gap_canon[idx]
        gsel = gsel[~np.isnan(gsel)]
        try:
            values, *_ = _pipeline(
                counts_star, gsel, q, cfg, s_mat, a_mat, with_residual=False
            )
        except (ZeroConditioningMass, NotRevertible, TailTooHeavy):
            dropped += 1
            continue
        sups.append(float(np.max(np.abs(values - base))))
    if not sups:
        raise ZeroConditioningMass("every bootstrap replicate was dropped")
    radius = float(np.quantile(np.asarray(sups), alpha, method="higher"))
    return BandResult(radius=radius, dropped_replicates=dropped, n_replicates=len(sups))
