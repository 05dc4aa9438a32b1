"""Simulation of thinned finite renewal processes and dataset files.

Reproducibility: record k of a dataset is generated from its own RNG
stream, the Philox4x64 counter-based generator keyed by the 128-bit pair
(seed, k).  Any record can therefore be regenerated independently, and
record-parallel generation yields the same dataset as the sequential
loop.  The sequential loop reuses one bit generator and reassigns its
state per record, which is bit-identical to constructing Philox(key=(seed, k)).

Dataset file format (newline-delimited):
    header line   {"q": <float>, "n": <int>, "seed": <int>}
    record lines  {"s": <int>, "gaps": [<float>, ...]}   (len(gaps) == max(s-1, 0))
Floats carry 17 significant digits so the round trip is lossless.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .dists import (
    DiscretePareto,
    ExplicitGaps,
    ExplicitSize,
    Exponential,
    Geometric,
    ModelSpec,
    pareto_survival,
)

PARETO_TABLE_SIZE = 1_000_000


class FormatError(ValueError):
    """Malformed dataset file; carries the offending line number."""

    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


@dataclass(frozen=True)
class FlowRecord:
    """One thinned flow: the sampled count and the sampled gaps, in order."""

    sampled_count: int
    gaps: tuple[float, ...]

    def __post_init__(self):
        if self.sampled_count < 0:
            raise ValueError("sampled_count must be >= 0")
        if len(self.gaps) != max(self.sampled_count - 1, 0):
            raise ValueError(
                f"{len(self.gaps)} gaps inconsistent with count {self.sampled_count}"
            )
        if any(g <= 0 for g in self.gaps):
            raise ValueError("gaps must be positive")
        object.__setattr__(self, "gaps", tuple(float(g) for g in self.gaps))


class _RecordView:
    """Sequence adapter exposing columnar storage as FlowRecord objects."""

    def __init__(self, ds: "SampledDataset"):
        self._ds = ds

    def __len__(self) -> int:
        return len(self._ds.counts)

    def __getitem__(self, k: int) -> FlowRecord:
        ds = self._ds
        if k < 0:
            k += len(self)
        lo, hi = ds.offsets[k], ds.offsets[k + 1]
        return FlowRecord(int(ds.counts[k]), tuple(ds.gap_values[lo:hi]))

    def __iter__(self):
        for k in range(len(self)):
            yield self[k]


@dataclass(frozen=True)
class SampledDataset:
    """N i.i.d. thinned flows; stored columnar (counts + flat gap array)."""

    q: float
    seed: int
    counts: np.ndarray  # int array, shape (N,)
    gap_values: np.ndarray  # float array, concatenated gaps
    offsets: np.ndarray  # int array, shape (N+1,), record k owns [offsets[k], offsets[k+1])

    def __post_init__(self):
        if not 0 < self.q < 1:
            raise ValueError("q must be in (0,1)")
        counts = np.asarray(self.counts, dtype=np.int64)
        gaps = np.asarray(self.gap_values, dtype=float)
        offs = np.asarray(self.offsets, dtype=np.int64)
        if len(counts) < 1:
            raise ValueError("need at least one record")
        if len(offs) != len(counts) + 1 or offs[0] != 0 or offs[-1] != len(gaps):
            raise ValueError("offsets inconsistent with gap storage")
        expected = np.maximum(counts - 1, 0)
        if not np.array_equal(np.diff(offs), expected):
            raise ValueError("gap lengths inconsistent with counts")
        if np.any(gaps <= 0):
            raise ValueError("gaps must be positive")
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "gap_values", gaps)
        object.__setattr__(self, "offsets", offs)

    @property
    def n(self) -> int:
        return len(self.counts)

    @property
    def records(self) -> _RecordView:
        return _RecordView(self)

    @staticmethod
    def from_records(q: float, records, seed: int = 0) -> "SampledDataset":
        counts = np.array([r.sampled_count for r in records], dtype=np.int64)
        gaps = (
            np.concatenate([np.asarray(r.gaps, dtype=float) for r in records])
            if len(records)
            else np.zeros(0)
        )
        offsets = np.concatenate([[0], np.cumsum(np.maximum(counts - 1, 0))])
        return SampledDataset(q, seed, counts, gaps, offsets)

    def gaps_of(self, k: int) -> np.ndarray:
        return self.gap_values[self.offsets[k] : self.offsets[k + 1]]

    def head(self, n: int) -> "SampledDataset":
        """First n records.  Because record k has its own (seed, k) stream,
        this equals the dataset simulated directly with the same seed and n."""
        if not 1 <= n <= self.n:
            raise ValueError(f"n must be in 1..{self.n}")
        cut = int(self.offsets[n])
        return SampledDataset(
            self.q, self.seed, self.counts[:n], self.gap_values[:cut], self.offsets[: n + 1]
        )

    def gap_at_index(self, i: int, mask: np.ndarray) -> np.ndarray:
        """Gap number i (1-based) of every record selected by mask."""
        idx = self.offsets[:-1][mask] + (i - 1)
        return self.gap_values[idx]


@lru_cache(maxsize=4)
def _pareto_cdf_table(alpha: float) -> np.ndarray:
    w = np.arange(1, PARETO_TABLE_SIZE + 1, dtype=float)
    pmf = w ** (-alpha - 1.0)
    pmf /= pmf.sum() / (1.0 - pareto_survival(alpha, PARETO_TABLE_SIZE))
    return np.cumsum(pmf)


def _pareto_tail_draw(alpha: float, u: float) -> int:
    # Invert P(W <= w) >= u beyond the table using the exact zeta tail.
    target = 1.0 - u
    lo = PARETO_TABLE_SIZE
    hi = 2 * lo
    while pareto_survival(alpha, hi) > target:
        lo, hi = hi, 2 * hi
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if pareto_survival(alpha, mid) > target:
            lo = mid
        else:
            hi = mid
    return hi


def _draw_size(model: ModelSpec, rng: np.random.Generator) -> int:
    dist = model.size_dist
    if isinstance(dist, Geometric):
        return int(rng.geometric(1.0 - dist.c))
    if isinstance(dist, DiscretePareto):
        u = rng.random()
        table = _pareto_cdf_table(dist.alpha)
        if u <= table[-1]:
            return int(np.searchsorted(table, u, side="left")) + 1
        return _pareto_tail_draw(dist.alpha, u)
    if isinstance(dist, ExplicitSize):
        pmf = dist.pmf
        if pmf.tail_mass > 1e-9:
            raise ValueError("cannot sample an explicit pmf with tail mass")
        cdf = pmf.cdf()
        u = rng.random() * cdf[-1]
        return int(np.searchsorted(cdf, u, side="left")) + pmf.min_support
    raise TypeError(f"unknown size distribution {dist!r}")


def _draw_gaps(model: ModelSpec, w: int, rng: np.random.Generator) -> np.ndarray:
    if w <= 1:
        return np.zeros(0)
    dist = model.gap_dist
    if isinstance(dist, Exponential):
        return rng.exponential(1.0 / dist.rate, size=w - 1)
    if isinstance(dist, ExplicitGaps):
        cdf = dist.cdf
        u = rng.random(w - 1) * cdf.values[-1]
        idx = np.searchsorted(cdf.array(), u, side="left")
        return np.maximum(idx, 1) * cdf.step
    raise TypeError(f"unknown gap distribution {dist!r}")


def simulate_flow(model: ModelSpec, rng: np.random.Generator):
    """Draw one original flow: (w, gaps) with w >= 1 and w-1 i.i.d. gaps."""
    w = _draw_size(model, rng)
    return w, _draw_gaps(model, w, rng)


def thin_flow(w: int, original_gaps, q: float, rng: np.random.Generator) -> FlowRecord:
    """Keep each of the w renewals independently with probability q.

    A sampled gap is the distance between consecutive kept renewals, i.e.
    the sum of the original gaps lying strictly between them.
    """
    gaps = np.asarray(original_gaps, dtype=float)
    if len(gaps) != w - 1:
        raise ValueError(f"expected {w - 1} gaps, got {len(gaps)}")
    keep = rng.random(w) < q
    s = int(keep.sum())
    if s <= 1:
        return FlowRecord(s, ())
    positions = np.concatenate([[0.0], np.cumsum(gaps)])
    kept = positions[keep]
    return FlowRecord(s, tuple(np.diff(kept)))


def record_stream_state(seed: int, index: int) -> dict:
    """Philox state for record `index` of a dataset with the given seed."""
    return {
        "bit_generator": "Philox",
        "state": {
            "counter": np.zeros(4, dtype=np.uint64),
            "key": np.array([seed & 0xFFFFFFFFFFFFFFFF, index], dtype=np.uint64),
        },
        "buffer": np.zeros(4, dtype=np.uint64),
        "buffer_pos": 4,
        "has_uint32": 0,
        "uinteger": 0,
    }


def record_rng(seed: int, index: int) -> np.random.Generator:
    """Independent generator for one record (Philox keyed by (seed, index))."""
    bg = np.random.Philox(key=np.array([seed & 0xFFFFFFFFFFFFFFFF, index], dtype=np.uint64))
    return np.random.Generator(bg)


def simulate_dataset(model: ModelSpec, n: int, seed: int) -> SampledDataset:
    """N independent thinned flows; deterministic given (model, n, seed)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    bg = np.random.Philox(key=0)
    rng = np.random.Generator(bg)
    state = record_stream_state(seed, 0)
    key = state["state"]["key"]
    counts = np.empty(n, dtype=np.int64)
    gap_chunks = []
    for k in range(n):
        key[1] = k
        bg.state = state
        w, gaps = simulate_flow(model, rng)
        rec = thin_flow(w, gaps, model.q, rng)
        counts[k] = rec.sampled_count
        if rec.gaps:
            gap_chunks.append(np.asarray(rec.gaps))
    gap_values = np.concatenate(gap_chunks) if gap_chunks else np.zeros(0)
    offsets = np.concatenate([[0], np.cumsum(np.maximum(counts - 1, 0))])
    return SampledDataset(model.q, seed, counts, gap_values, offsets)


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def write_dataset(ds: SampledDataset, path) -> None:
    with open(path, "w", encoding="ascii") as fh:
        fh.write('{"q": %s, "n": %d, "seed": %d}\n' % (_fmt(ds.q), ds.n, ds.seed))
        for k in range(ds.n):
            gaps = ", ".join(_fmt(g) for g in ds.gaps_of(k))
            fh.write('{"s": %d, "gaps": [%s]}\n' % (int(ds.counts[k]), gaps))


def read_dataset(path) -> SampledDataset:
    with open(path, "r", encoding="ascii") as fh:
        header_line = fh.readline()
        if not header_line:
            raise FormatError(1, "empty file, missing header")
        try:
            header = json.loads(header_line)
            q = float(header["q"])
            n = int(header["n"])
            seed = int(header["seed"])
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise FormatError(1, f"bad header: {exc}") from exc
        if not 0 < q < 1:
            raise FormatError(1, f"q={q} outside (0,1)")
        counts = np.empty(n, dtype=np.int64)
        gap_chunks = []
        for k in range(n):
            line_no = k + 2
            line = fh.readline()
            if not line:
                raise FormatError(line_no, f"expected {n} records, file ended at {k}")
            try:
                rec = json.loads(line)
                s = int(rec["s"])
                gaps = [float(g) for g in rec["gaps"]]
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise FormatError(line_no, f"bad record: {exc}") from exc
            if s < 0:
                raise FormatError(line_no, f"negative count {s}")
            if len(gaps) != max(s - 1, 0):
                raise FormatError(
                    line_no, f"{len(gaps)} gaps inconsistent with s={s}"
                )
            if any(g <= 0 for g in gaps):
                raise FormatError(line_no, "gaps must be positive")
            counts[k] = s
            if gaps:
                gap_chunks.append(np.asarray(gaps))
        extra = fh.readline()
        if extra.strip():
            raise FormatError(n + 2, "trailing content after final record")
    gap_values = np.concatenate(gap_chunks) if gap_chunks else np.zeros(0)
    offsets = np.concatenate([[0], np.cumsum(np.maximum(counts - 1, 0))])
    return SampledDataset(q, seed, counts, gap_values, offsets)
