"""Inversion of binomial thinning: estimate the original size pmf.

The empirical sampled-size pmf is pushed through the alternating-sign
inversion map

    S(x)_w = sum_{s>=w} C(s,w) (-1)^(s-w) q^(-s) (1-q)^(s-w) x_s,

either directly (compensated summation in descending magnitude: the
terms grow like q^(-s), so cancellation is the dominant hazard) or via
the staged maps T^(k) along a path 1-q = z_0 > ... > z_l = 0, which agree
with S on finitely supported inputs.  The finite-sample estimator is
signed; it is reported raw, not clipped to [0,1], because the variance
law and the confidence intervals are stated for the raw estimator.  A
separate simplex projection is available for consumers that need a
genuine pmf.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln
from scipy.stats import norm

from .dists import Pmf
from .simulate import SampledDataset, record_rng

PATH_FLOOR = 0.05
DIVERGENCE_RUN = 50


class InfiniteSupport(ValueError):
    """The inversion sum needs a finitely supported input."""


class InvalidPath(ValueError):
    """A continuation path violated monotonicity or the disk condition."""


@dataclass(frozen=True)
class SignedSeq:
    """Real-valued sequence indexed w = 1..w_max (entries may be negative)."""

    values: tuple[float, ...]

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if len(v) < 1:
            raise ValueError("need w_max >= 1")
        if not np.all(np.isfinite(v)):
            raise ValueError("entries must be finite")
        object.__setattr__(self, "values", tuple(float(x) for x in v))

    @property
    def w_max(self) -> int:
        return len(self.values)

    def __getitem__(self, w: int) -> float:
        if w < 1:
            raise IndexError("indexed from w = 1")
        if w > self.w_max:
            return 0.0
        return self.values[w - 1]

    def array(self) -> np.ndarray:
        return np.asarray(self.values, dtype=float)


@dataclass(frozen=True)
class ContinuationPath:
    """Nodes 1 > z_0 > z_1 > ... > z_l = 0 with each step inside the disk
    |z_k - z_{k-1}| < 1 - z_{k-1}."""

    nodes: tuple[float, ...]

    def __post_init__(self):
        z = [float(v) for v in self.nodes]
        if len(z) < 2:
            raise InvalidPath("path needs at least z_0 and the terminal 0")
        if not 0 < z[0] < 1:
            raise InvalidPath(f"z_0 = {z[0]} outside (0,1)")
        if z[-1] != 0.0:
            raise InvalidPath(f"path must end at 0, got {z[-1]}")
        for prev, cur in zip(z, z[1:]):
            if not cur < prev:
                raise InvalidPath(f"nodes not strictly decreasing at {prev} -> {cur}")
            if abs(cur - prev) >= 1.0 - prev:
                raise InvalidPath(
                    f"step {prev} -> {cur} leaves the disk of radius {1.0 - prev}"
                )
        object.__setattr__(self, "nodes", tuple(z))


@dataclass(frozen=True)
class RegimeThresholds:
    """Diagnostic cutoffs for the regime call (engineering choices, not theorems)."""

    explosive_slope_factor: float = 0.5  # explosive when slope > factor * log(1/q)
    stable_max_ratio: float = 10.0


@dataclass(frozen=True)
class RegimeReport:
    r_values: tuple[tuple[int, float], ...]
    variance: tuple[tuple[int, float], ...]
    classification: str  # "Stable" | "Explosive" | "Inconclusive"
    growth_rate: float


def empirical_sampled_pmf(ds: SampledDataset) -> Pmf:
    """Empirical pmf of the sampled counts, support 0..max observed."""
    counts = np.bincount(ds.counts)
    return Pmf(tuple(counts / ds.n), min_support=0, tail_mass=0.0)


def _as_zero_indexed(x) -> np.ndarray:
    """Coerce an input sequence to values indexed from s = 0."""
    if isinstance(x, Pmf):
        if x.tail_mass > 0.0:
            raise InfiniteSupport(
                f"input declares tail mass {x.tail_mass:.3g}; the inversion sum "
                "needs finite support"
            )
        return x.from_zero()
    if isinstance(x, SignedSeq):
        return np.concatenate([[0.0], x.array()])
    arr = np.asarray(x, dtype=float)
    if arr.ndim != 1:
        raise ValueError("expected a 1-d sequence")
    return arr


def _kahan_sum_desc(terms: np.ndarray) -> float:
    order = np.argsort(-np.abs(terms))
    total = 0.0
    comp = 0.0
    for t in terms[order]:
        y = t - comp
        s = total + y
        comp = (s - total) - y
        total = s
    return total


def invert_S(x, q: float, w_max: int) -> SignedSeq:
    """Apply the alternating inversion map to a finitely supported sequence."""
    if not 0 < q < 1:
        raise ValueError("q must be in (0,1)")
    xs = _as_zero_indexed(x)
    s_top = len(xs) - 1
    out = np.zeros(w_max)
    log_q = np.log(q)
    log_1q = np.log1p(-q)
    for w in range(1, w_max + 1):
        if w > s_top:
            break
        s = np.arange(w, s_top + 1)
        lt = (
            gammaln(s + 1.0)
            - gammaln(w + 1.0)
            - gammaln(s - w + 1.0)
            - s * log_q
            + (s - w) * log_1q
        )
        terms = np.exp(lt) * xs[w:] * np.where((s - w) % 2 == 0, 1.0, -1.0)
        out[w - 1] = _kahan_sum_desc(terms)
    return SignedSeq(tuple(out))


def build_path(q: float, step_rule=None) -> ContinuationPath:
    """Continuation path from z_0 = 1-q down to 0.

    The default rule halves while the halved node stays valid and above
    0.05, then finishes at 0; near z = 1 (small q) halving would leave the
    disk, so the step shortens to the midpoint of the admissible range.
    """
    if not 0 < q < 1:
        raise ValueError("q must be in (0,1)")
    z = 1.0 - q
    nodes = [z]
    if step_rule is not None:
        while nodes[-1] > 0.0:
            nxt = float(step_rule(nodes[-1]))
            nodes.append(nxt)
            if len(nodes) > 10_000:
                raise InvalidPath("step_rule did not reach 0")
        return ContinuationPath(tuple(nodes))
    while z >= PATH_FLOOR:
        half = z / 2.0
        lower = max(2.0 * z - 1.0, 0.0)  # exclusive lower edge of the disk
        nxt = half if half > lower else (z + lower) / 2.0
        if nxt < PATH_FLOOR:
            break
        nodes.append(nxt)
        z = nxt
    if nodes[-1] != 0.0:
        nodes.append(0.0)
    return ContinuationPath(tuple(nodes))


def continuation_invert(
    x,
    q: float,
    path: ContinuationPath,
    w_max: int,
    per_stage_trunc: int | None = None,
) -> SignedSeq:
    """Staged inversion T^(l) along the path; equals invert_S on finite support."""
    if not 0 < q < 1:
        raise ValueError("q must be in (0,1)")
    if abs(path.nodes[0] - (1.0 - q)) > 1e-12:
        raise InvalidPath(f"path starts at {path.nodes[0]}, expected 1-q = {1 - q}")
    xs = _as_zero_indexed(x)
    s_top = len(xs) - 1
    size = s_top if per_stage_trunc is None else min(per_stage_trunc, s_top)
    size = max(size, 1)
    # T^(0)(x)_i = x_i / q^i on i = 1..size
    cur = xs[1 : size + 1] / q ** np.arange(1, size + 1)
    idx = np.arange(1, size + 1, dtype=float)
    diff = idx[None, :] - idx[:, None]  # i - n, rows n, cols i
    valid = diff >= 0
    dpos = np.maximum(diff, 0.0)
    log_comb = gammaln(idx[None, :] + 1.0) - gammaln(idx[:, None] + 1.0) - gammaln(dpos + 1.0)
    for z_prev, z_cur in zip(path.nodes, path.nodes[1:]):
        delta = z_cur - z_prev  # strictly negative on a valid path
        log_pow = dpos * np.log(abs(delta)) if abs(delta) > 0 else np.zeros_like(dpos)
        signs = np.where(dpos % 2 == 0, 1.0, -1.0) if delta < 0 else 1.0
        stage = np.where(valid, np.exp(log_comb + log_pow) * signs, 0.0)
        cur = stage @ cur
    out = np.zeros(w_max)
    take = min(w_max, size)
    out[:take] = cur[:take]
    return SignedSeq(tuple(out))


def risk_R(f_wq, q: float, w: int) -> float:
    """Variance-driving series R_{q,w} = sum_s C(s,w)^2 (1-q)^(2(s-w)) q^(-2s) f_Wq(s).

    Exact for finitely supported inputs.  For a truncated theoretical pmf
    (declared tail mass) the sum is reported as +inf when the terms are
    still growing at the truncation point.
    """
    if w < 1:
        raise ValueError("w must be >= 1")
    tail = f_wq.tail_mass if isinstance(f_wq, Pmf) else 0.0
    xs = f_wq.from_zero() if isinstance(f_wq, Pmf) else np.asarray(f_wq, dtype=float)
    s_top = len(xs) - 1
    if w > s_top:
        return 0.0
    s = np.arange(w, s_top + 1)
    lt = (
        2.0 * (gammaln(s + 1.0) - gammaln(w + 1.0) - gammaln(s - w + 1.0))
        + 2.0 * (s - w) * np.log1p(-q)
        - 2.0 * s * np.log(q)
    )
    with np.errstate(over="ignore", invalid="ignore"):
        terms = np.exp(lt) * xs[w:]
    terms = np.where(np.isnan(terms), 0.0, terms)  # inf weight on an empty bin
    if np.any(np.isinf(terms)):
        return float("inf")
    if tail > 0.0 and len(terms) > DIVERGENCE_RUN:
        recent = terms[-DIVERGENCE_RUN:]
        if np.all(recent[1:] >= recent[:-1]) and recent[-1] > 0.0:
            return float("inf")
    return float(np.sum(terms))


def variance_estimate(f_hat_w: SignedSeq, f_hat_wq: Pmf, q: float, w: int) -> float:
    """Plug-in limit variance R_hat - f_hat_W(w)^2, floored at 0."""
    r = risk_R(f_hat_wq, q, w)
    if np.isinf(r):
        return r
    return max(r - f_hat_w[w] ** 2, 0.0)


def normal_ci(
    f_hat_w: SignedSeq,
    f_hat_wq: Pmf,
    q: float,
    w: int,
    alpha: float,
    n: int,
) -> tuple[float, float]:
    """Normal-approximation interval f_hat +- z_alpha sqrt(var_hat / N)."""
    if not 0 < alpha < 1:
        raise ValueError("alpha must be in (0,1)")
    z = norm.ppf((1.0 + alpha) / 2.0)  # percentile of |N(0,1)|
    half = z * np.sqrt(variance_estimate(f_hat_w, f_hat_wq, q, w) / n)
    center = f_hat_w[w]
    return center - half, center + half


def _s_matrix(w_max: int, s_top: int, q: float) -> np.ndarray:
    """Rows w=1..w_max of the linear map S over columns s=0..s_top."""
    mat = np.zeros((w_max, s_top + 1))
    for w in range(1, w_max + 1):
        if w > s_top:
            break
        s = np.arange(w, s_top + 1)
        lt = (
            gammaln(s + 1.0)
            - gammaln(w + 1.0)
            - gammaln(s - w + 1.0)
            - s * np.log(q)
            + (s - w) * np.log1p(-q)
        )
        mat[w - 1, w:] = np.exp(lt) * np.where((s - w) % 2 == 0, 1.0, -1.0)
    return mat


def bootstrap_sup_ci(
    ds: SampledDataset, l: int, b: int, alpha: float, seed: int
) -> float:
    """Bootstrap radius for the simultaneous band over w = 1..l.

    Resamples the N records with replacement B times (as a multinomial on
    the count histogram, which is equivalent and order-invariant), and
    returns the 100*alpha percentile of sqrt(N) * max_{w<=l} |S(f*)_w - S(f_hat)_w|.
    The band is then {f : ||f_hat - f||_l <= radius / sqrt(N)}.
    """
    if l < 1:
        raise ValueError("l must be >= 1")
    if b < 100:
        raise ValueError("need at least 100 bootstrap replicates")
    n = ds.n
    p_hat = np.bincount(ds.counts) / n
    mat = _s_matrix(l, len(p_hat) - 1, ds.q)
    base = mat @ p_hat
    stats = np.empty(b)
    for rep in range(b):
        rng = record_rng(seed, rep)
        p_star = rng.multinomial(n, p_hat) / n
        stats[rep] = np.max(np.abs(mat @ p_star - base))
    stats *= np.sqrt(n)
    return float(np.quantile(stats, alpha, method="higher"))


def classify_regime(
    f_wq,
    q: float,
    w_probe,
    thresholds: RegimeThresholds = RegimeThresholds(),
) -> RegimeReport:
    """Fit log R_hat against w and call the regime.

    Explosive when some R_hat is infinite or the fitted slope exceeds
    factor * log(1/q); Stable when the slope is nonpositive and the values
    stay within the bounded-ratio cutoff; otherwise Inconclusive.
    """
    w_probe = list(w_probe)
    if not w_probe or any(b <= a for a, b in zip(w_probe, w_probe[1:])):
        raise ValueError("w_probe must be nonempty and increasing")
    r_values = [(w, risk_R(f_wq, q, w)) for w in w_probe]
    w_top = max(w_probe)
    # The variance column inverts the materialized head even for tailed
    # theoretical inputs; the dropped tail is (1-q)^s-damped and immaterial
    # at the probe range.
    xs = f_wq.from_zero() if isinstance(f_wq, Pmf) else np.asarray(f_wq, dtype=float)
    f_hat_w = invert_S(xs, q, w_top)
    variance = [
        (w, r - f_hat_w[w] ** 2 if np.isfinite(r) else float("inf"))
        for w, r in r_values
    ]
    finite = [(w, r) for w, r in r_values if np.isfinite(r) and r > 0.0]
    if any(np.isinf(r) for _, r in r_values):
        cls, slope = "Explosive", float("inf")
    elif len(finite) < 2:
        cls, slope = "Inconclusive", float("nan")
    else:
        ws = np.array([w for w, _ in finite], dtype=float)
        logs = np.log([r for _, r in finite])
        slope = float(np.polyfit(ws, logs, 1)[0])
        ratio = max(r for _, r in finite) / finite[0][1]
        if slope > thresholds.explosive_slope_factor * np.log(1.0 / q):
            cls = "Explosive"
        elif slope <= 0.0 and ratio < thresholds.stable_max_ratio:
            cls = "Stable"
        else:
            cls = "Inconclusive"
    return RegimeReport(
        r_values=tuple(r_values),
        variance=tuple(variance),
        classification=cls,
        growth_rate=slope,
    )


def project_to_simplex(f_hat_w: SignedSeq) -> Pmf:
    """Euclidean projection of the raw signed estimate onto the simplex.

    A deliberate departure from the raw estimator: use only for consumers
    that need a genuine pmf, never for variance or coverage work.
    """
    v = f_hat_w.array()
    u = np.sort(v)[::-1]
    css = np.cumsum(u)
    rho = np.nonzero(u * np.arange(1, len(u) + 1) > (css - 1.0))[0][-1]
    theta = (css[rho] - 1.0) / (rho + 1.0)
    proj = np.maximum(v - theta, 0.0)
    return Pmf(tuple(proj), min_support=1, tail_mass=0.0)
