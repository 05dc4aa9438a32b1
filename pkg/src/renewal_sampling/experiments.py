"""Preset Monte Carlo experiments and their CSV artifacts.

Each preset fixes a model, a sample size and an estimator configuration;
running it simulates `reps` independent datasets, applies the estimators,
and writes percentile summaries (5/50/95) plus the true curves.  Replicate
r of a run seeded with S uses the derived seed SeedSequence([S, r, tag]),
so results are bit-for-bit reproducible and independent of worker
scheduling; aggregation is always by replicate index.
"""

from __future__ import annotations

import csv
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from functools import partial

import numpy as np

from .dists import (
    DiscretePareto,
    Exponential,
    Geometric,
    ModelSpec,
    Pmf,
    gap_cdf,
    size_pmf,
)
from .forward import ZeroConditioningMass, sampled_size_pmf
from .gap_inversion import (
    AtLeast,
    DecompoundConfig,
    Exact,
    NotRevertible,
    TailTooHeavy,
    bootstrap_band_FD,
    decompound,
)
from .simulate import simulate_dataset
from .size_inversion import (
    bootstrap_sup_ci,
    empirical_sampled_pmf,
    invert_S,
    normal_ci,
    variance_estimate,
)

FMT = ".17g"


@dataclass(frozen=True)
class ExperimentPreset:
    name: str
    kind: str  # "fw" | "ci" | "fd"
    model: ModelSpec
    n: int
    mc_reps: int
    w_max: int = 8
    alpha: float = 0.9
    l: int = 5
    bootstrap_b: int = 999
    coverage_w: tuple[int, ...] = (1, 2, 3)
    conditionings: tuple = (Exact(2),)
    t_max: float = 5.0
    step: float = 0.005
    n_max: int = 40
    trunc_tol: float = 1e-6
    theory_s_max: int = 120
    theory_w_max: int = 4000


_FIG2_MODEL = ModelSpec(Geometric(0.25), Exponential(1.0), q=0.6)
_FIG5_CASE2_MODEL = ModelSpec(Geometric(0.7), Exponential(1.0), q=0.6)
_FIG3_MODEL = ModelSpec(DiscretePareto(1.5), Exponential(1.0), q=0.7)

PRESETS: dict[str, ExperimentPreset] = {
    "fig2": ExperimentPreset("fig2", "fw", _FIG2_MODEL, n=500, mc_reps=1000, w_max=8),
    "fig3": ExperimentPreset(
        "fig3", "fw", _FIG3_MODEL, n=1000, mc_reps=1000, w_max=12, theory_w_max=300_000
    ),
    "fig4": ExperimentPreset("fig4", "ci", _FIG2_MODEL, n=500, mc_reps=1000, w_max=8),
    "fig5_case1": ExperimentPreset(
        "fig5_case1", "fd", _FIG2_MODEL, n=500, mc_reps=1000, n_max=24
    ),
    "fig5_case2": ExperimentPreset(
        "fig5_case2", "fd", _FIG5_CASE2_MODEL, n=500, mc_reps=1000, t_max=5.0, n_max=40
    ),
    "fig6": ExperimentPreset(
        "fig6",
        "fd",
        _FIG2_MODEL,
        n=500,
        mc_reps=1000,
        conditionings=(Exact(2), AtLeast(2), Exact(3)),
        n_max=24,
    ),
}


def rep_seed(master: int, rep: int, tag: int = 0) -> int:
    """Well-mixed 64-bit seed for one replicate (and purpose tag)."""
    ss = np.random.SeedSequence([int(master), int(rep), int(tag)])
    return int(ss.generate_state(1, np.uint64)[0])


def true_size_pmf(preset: ExperimentPreset) -> Pmf:
    return size_pmf(preset.model.size_dist, preset.theory_w_max)


def true_sd(preset: ExperimentPreset) -> np.ndarray:
    """Asymptotic sd of the size estimator, index w-1, at sample size n."""
    from .size_inversion import risk_R

    f_w = true_size_pmf(preset)
    f_wq = sampled_size_pmf(f_w, preset.model.q, preset.theory_s_max)
    out = np.zeros(preset.w_max)
    for w in range(1, preset.w_max + 1):
        r = risk_R(f_wq, preset.model.q, w)
        out[w - 1] = np.sqrt(max(r - f_w[w] ** 2, 0.0) / preset.n)
    return out


def _fw_rep(preset: ExperimentPreset, master_seed: int, rep: int):
    ds = simulate_dataset(preset.model, preset.n, rep_seed(master_seed, rep))
    f_wq = empirical_sampled_pmf(ds)
    f_hat = invert_S(f_wq, preset.model.q, preset.w_max)
    sd_hat = np.array(
        [
            np.sqrt(variance_estimate(f_hat, f_wq, preset.model.q, w) / preset.n)
            for w in range(1, preset.w_max + 1)
        ]
    )
    return f_hat.array(), sd_hat


def _ci_rep(preset: ExperimentPreset, truth: np.ndarray, master_seed: int, rep: int):
    ds = simulate_dataset(preset.model, preset.n, rep_seed(master_seed, rep))
    f_wq = empirical_sampled_pmf(ds)
    q = preset.model.q
    f_hat = invert_S(f_wq, q, preset.w_max)
    covered = []
    uppers = []
    for w in range(1, preset.w_max + 1):
        lo, hi = normal_ci(f_hat, f_wq, q, w, preset.alpha, preset.n)
        covered.append(lo <= truth[w - 1] <= hi)
        uppers.append(hi - f_hat[w])
    radius = bootstrap_sup_ci(
        ds, preset.l, preset.bootstrap_b, preset.alpha, rep_seed(master_seed, rep, tag=1)
    )
    max_dev = float(
        np.max(np.abs(f_hat.array()[: preset.l] - truth[: preset.l]))
    )
    bt_cover = max_dev <= radius / np.sqrt(preset.n)
    return (
        np.array(covered, dtype=bool),
        np.array(uppers),
        f_hat.array() - truth,
        radius / np.sqrt(preset.n),
        bt_cover,
    )


def _fd_rep(
    preset: ExperimentPreset,
    bootstrap_b: int,
    alpha: float,
    master_seed: int,
    rep: int,
):
    ds = simulate_dataset(preset.model, preset.n, rep_seed(master_seed, rep))
    n_pts = int(round(preset.t_max / preset.step)) + 1
    out = {}
    for cond in preset.conditionings:
        cfg = DecompoundConfig(
            conditioning=cond,
            n_max=preset.n_max,
            trunc_tol=preset.trunc_tol,
            t_max=preset.t_max,
            step=preset.step,
            bootstrap_b=max(bootstrap_b, 100),
        )
        key = _cond_tag(cond)
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                cdf, _diag = decompound(ds, preset.model.q, cfg)
            values = cdf.array()
            radius = np.nan
            if bootstrap_b > 0:
                band = bootstrap_band_FD(
                    ds, preset.model.q, cfg, alpha, rep_seed(master_seed, rep, tag=2)
                )
                radius = band.radius
            out[key] = (values, radius)
        except (ZeroConditioningMass, NotRevertible, TailTooHeavy):
            out[key] = (np.full(n_pts, np.nan), np.nan)
    return out


def _cond_tag(cond) -> str:
    return f"s{cond.s}" if isinstance(cond, Exact) else f"sge{cond.s}"


def _run_indexed(worker, reps: int, jobs: int):
    if jobs <= 1:
        return [worker(rep) for rep in range(reps)]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(worker, range(reps), chunksize=max(1, reps // (8 * jobs))))


def _write_csv(path, header: list[str], rows, comments: list[str] = ()):
    with open(path, "w", newline="") as fh:
        for c in comments:
            fh.write(f"# {c}\n")
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow(
                [format(v, FMT) if isinstance(v, float) else v for v in row]
            )


def _percentile_rows(first_col, matrix: np.ndarray):
    p5, p50, p95 = np.nanpercentile(matrix, [5, 50, 95], axis=0)
    return [
        (c, float(a), float(b), float(d))
        for c, a, b, d in zip(first_col, p5, p50, p95)
    ]


def run_preset(
    preset_name: str,
    reps: int | None,
    seed: int,
    out_dir,
    jobs: int = 1,
    bootstrap_b: int = 0,
    alpha: float = 0.9,
) -> list[str]:
    """Run a named preset and write its CSV artifacts; returns the file names."""
    if preset_name not in PRESETS:
        raise KeyError(f"unknown preset {preset_name!r}")
    preset = PRESETS[preset_name]
    if reps:
        preset = replace(preset, mc_reps=reps)
    os.makedirs(out_dir, exist_ok=True)
    if preset.kind == "fw":
        return _run_fw(preset, seed, out_dir, jobs)
    if preset.kind == "ci":
        return _run_ci(preset, seed, out_dir, jobs)
    return _run_fd(preset, seed, out_dir, jobs, bootstrap_b, alpha)


def _run_fw(preset, seed, out_dir, jobs):
    worker = partial(_fw_rep, preset, seed)
    results = _run_indexed(worker, preset.mc_reps, jobs)
    f_hats = np.stack([r[0] for r in results])
    sd_hats = np.stack([r[1] for r in results])
    ws = list(range(1, preset.w_max + 1))
    f_w = true_size_pmf(preset)
    sd = true_sd(preset)
    files = ["fw_percentiles.csv", "sd_percentiles.csv", "truth.csv"]
    _write_csv(
        os.path.join(out_dir, files[0]),
        ["w", "p5", "p50", "p95"],
        _percentile_rows(ws, f_hats),
    )
    _write_csv(
        os.path.join(out_dir, files[1]),
        ["w", "p5", "p50", "p95"],
        _percentile_rows(ws, sd_hats),
    )
    _write_csv(
        os.path.join(out_dir, files[2]),
        ["w", "f_w", "sd_true"],
        [(w, float(f_w[w]), float(sd[w - 1])) for w in ws],
    )
    return files


def _run_ci(preset, seed, out_dir, jobs):
    truth = np.array([true_size_pmf(preset)[w] for w in range(1, preset.w_max + 1)])
    worker = partial(_ci_rep, preset, truth, seed)
    results = _run_indexed(worker, preset.mc_reps, jobs)
    covered = np.stack([r[0] for r in results])
    uppers = np.stack([r[1] for r in results])
    devs = np.stack([r[2] for r in results])
    radii = np.array([r[3] for r in results])
    bt_cover = np.array([r[4] for r in results])
    ws = list(range(1, preset.w_max + 1))
    sd = true_sd(preset)
    from scipy.stats import norm

    z = norm.ppf((1 + preset.alpha) / 2)
    files = ["coverage_normal.csv", "coverage_bootstrap.csv", "ci_bounds.csv"]
    _write_csv(
        os.path.join(out_dir, files[0]),
        ["w", "coverage"],
        [(w, float(covered[:, w - 1].mean())) for w in ws],
    )
    _write_csv(
        os.path.join(out_dir, files[1]),
        ["l", "coverage"],
        [(preset.l, float(bt_cover.mean()))],
    )
    _write_csv(
        os.path.join(out_dir, files[2]),
        ["w", "mc_p95", "an_true", "an_est_median", "bt_median"],
        [
            (
                w,
                float(np.percentile(devs[:, w - 1], 95)),
                float(z * sd[w - 1]),
                float(np.median(uppers[:, w - 1])),
                float(np.median(radii)),
            )
            for w in ws
        ],
    )
    return files


def _run_fd(preset, seed, out_dir, jobs, bootstrap_b, alpha):
    worker = partial(_fd_rep, preset, bootstrap_b, alpha, seed)
    results = _run_indexed(worker, preset.mc_reps, jobs)
    t = np.arange(int(round(preset.t_max / preset.step)) + 1) * preset.step
    truth = gap_cdf(preset.model.gap_dist, preset.t_max, preset.step).array()
    single = len(preset.conditionings) == 1
    files = []
    for cond in preset.conditionings:
        key = _cond_tag(cond)
        mat = np.stack([r[key][0] for r in results])
        name = "fd_percentiles.csv" if single else f"fd_percentiles_{key}.csv"
        files.append(name)
        dropped = int(np.sum(np.isnan(mat[:, 0])))
        _write_csv(
            os.path.join(out_dir, name),
            ["t", "p5", "p50", "p95"],
            _percentile_rows([float(x) for x in t], mat),
            comments=[f"conditioning={key} dropped_reps={dropped}"],
        )
        if bootstrap_b > 0:
            radii = np.array([r[key][1] for r in results])
            sup_dev = np.nanmax(np.abs(mat - truth[None, :]), axis=1)
            cover = float(np.nanmean(sup_dev <= radii))
            cov_name = (
                "fd_band_coverage.csv" if single else f"fd_band_coverage_{key}.csv"
            )
            files.append(cov_name)
            _write_csv(
                os.path.join(out_dir, cov_name),
                ["alpha", "b", "coverage"],
                [(alpha, bootstrap_b, cover)],
            )
    files.append("truth.csv")
    _write_csv(
        os.path.join(out_dir, "truth.csv"),
        ["t", "F_D"],
        [(float(a), float(b)) for a, b in zip(t, truth)],
    )
    return files
