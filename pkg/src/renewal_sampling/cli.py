"""Command-line front end.

Subcommands: simulate, estimate-fw, estimate-fd, regime, experiment.
Precedence for every option: explicit flag > --config file (plain
"key = value" lines) > built-in default.  The environment variable
RENEWAL_SEED, when set, overrides the seed from any source.

Exit codes: 0 success, 2 usage error, 3 data/format error, 4 estimator
failure.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys

import numpy as np

from .dists import (
    DiscretePareto,
    Exponential,
    Geometric,
    ExplicitSize,
    ModelSpec,
    point_mass,
)
from .forward import TailTooHeavy, ZeroConditioningMass
from .gap_inversion import (
    AtLeast,
    DecompoundConfig,
    Exact,
    bootstrap_band_FD,
    decompound,
)
from .series import NotRevertible
from .simulate import FormatError, read_dataset, simulate_dataset, write_dataset
from .size_inversion import (
    InfiniteSupport,
    InvalidPath,
    bootstrap_sup_ci,
    classify_regime,
    empirical_sampled_pmf,
    invert_S,
    normal_ci,
    risk_R,
    variance_estimate,
)
from . import experiments

FMT = ".17g"

DEFAULTS = {
    "q": 0.6,
    "n": 500,
    "seed": 0,
    "alpha": 0.9,
    "l": 5,
    "bootstrap": 0,
    "wmax": 0,  # 0 = max observed sampled count
    "cond": "s=2",
    "i": 1,
    "grid": "5:0.005",
    "nmax": 24,
    "trunc_tol": 1e-6,
    "reps": 0,  # 0 = preset default
    "jobs": 1,
    "out": ".",
}


def _parse_size(text: str):
    kind, _, arg = text.partition(":")
    try:
        if kind == "geometric":
            return Geometric(float(arg))
        if kind == "pareto":
            return DiscretePareto(float(arg))
        if kind == "point":
            return ExplicitSize(point_mass(int(arg)))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc
    raise argparse.ArgumentTypeError(f"unknown size distribution {text!r}")


def _parse_gap(text: str):
    kind, _, arg = text.partition(":")
    try:
        if kind == "exp":
            return Exponential(float(arg))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc
    raise argparse.ArgumentTypeError(f"unknown gap distribution {text!r}")


def _parse_cond(text: str):
    text = text.replace(" ", "")
    if text.startswith("s>="):
        return AtLeast(int(text[3:]))
    if text.startswith("s="):
        return Exact(int(text[2:]))
    raise argparse.ArgumentTypeError(f"conditioning must look like s=2 or s>=2, got {text!r}")


def _parse_grid(text: str) -> tuple[float, float]:
    try:
        t_max, step = text.split(":")
        return float(t_max), float(step)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"grid must be T:STEP, got {text!r}") from exc


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="renewal-sampling")
    parser.add_argument("--config", default=None, help="key = value defaults file")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a thinned dataset file")
    p.add_argument("--size", type=_parse_size, required=True)
    p.add_argument("--gap", type=_parse_gap, required=True)
    p.add_argument("--q", type=float, default=None)
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)

    p = sub.add_parser("estimate-fw", help="estimate the original size pmf")
    p.add_argument("dataset")
    p.add_argument("--wmax", type=int, default=None)
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--bootstrap", type=int, default=None, metavar="B")
    p.add_argument("--l", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None, help="output directory")

    p = sub.add_parser("estimate-fd", help="estimate the original gap CDF")
    p.add_argument("dataset")
    p.add_argument("--cond", type=_parse_cond, default=None)
    p.add_argument("--i", type=int, default=None)
    p.add_argument("--grid", type=_parse_grid, default=None)
    p.add_argument("--nmax", type=int, default=None)
    p.add_argument("--trunc-tol", dest="trunc_tol", type=float, default=None)
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--bootstrap", type=int, default=None, metavar="B")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None)

    p = sub.add_parser("regime", help="variance-regime report")
    p.add_argument("dataset")
    p.add_argument("--wmax", type=int, default=None)
    p.add_argument("--out", default=None)

    p = sub.add_parser("experiment", help="run a preset Monte Carlo study")
    p.add_argument("preset", choices=sorted(experiments.PRESETS))
    p.add_argument("--reps", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--jobs", type=int, default=None)
    p.add_argument("--bootstrap", type=int, default=None, metavar="B")
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--out", default=None)
    return parser


def _load_config(path) -> dict:
    values = {}
    with open(path) as fh:
        for raw in fh:
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise FormatError(0, f"config line {raw!r} is not key = value")
            key, _, val = line.partition("=")
            values[key.strip().replace("-", "_")] = val.strip()
    return values


def _resolve(args, config: dict, key: str, cast=None):
    flag = getattr(args, key, None)
    if flag is not None:
        return flag
    if key in config:
        raw = config[key]
        return cast(raw) if cast else raw
    return DEFAULTS.get(key)


def _fmt(x: float) -> str:
    return format(float(x), FMT)


def _cmd_simulate(args, config) -> int:
    q = float(_resolve(args, config, "q", float))
    n = int(_resolve(args, config, "n", int))
    seed = _seed(args, config)
    if not 0 < q < 1:
        raise UsageError(f"--q must be in (0,1), got {q}")
    if n < 1:
        raise UsageError(f"--n must be >= 1, got {n}")
    model = ModelSpec(args.size, args.gap, q)
    ds = simulate_dataset(model, n, seed)
    write_dataset(ds, args.out)
    empty = float(np.mean(ds.counts == 0))
    print(
        f"wrote {args.out}: n={ds.n} q={_fmt(q)} max_s={int(ds.counts.max())} "
        f"empty_fraction={_fmt(empty)}"
    )
    return 0


def _cmd_estimate_fw(args, config) -> int:
    ds = read_dataset(args.dataset)
    out_dir = _resolve(args, config, "out")
    os.makedirs(out_dir, exist_ok=True)
    alpha = float(_resolve(args, config, "alpha", float))
    wmax = int(_resolve(args, config, "wmax", int)) or int(ds.counts.max())
    wmax = max(wmax, 1)
    f_wq = empirical_sampled_pmf(ds)
    f_hat = invert_S(f_wq, ds.q, wmax)
    rows = []
    for w in range(1, wmax + 1):
        var = variance_estimate(f_hat, f_wq, ds.q, w)
        lo, hi = normal_ci(f_hat, f_wq, ds.q, w, alpha, ds.n)
        rows.append((w, _fmt(f_hat[w]), _fmt(var), _fmt(lo), _fmt(hi)))
    with open(os.path.join(out_dir, "fw.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["w", "f_hat", "var_hat", "ci_lo", "ci_hi"])
        writer.writerows(rows)
    with open(os.path.join(out_dir, "regime.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["w", "R_hat"])
        for w in range(1, wmax + 1):
            writer.writerow([w, _fmt(risk_R(f_wq, ds.q, w))])
    b = int(_resolve(args, config, "bootstrap", int))
    if b > 0:
        l = int(_resolve(args, config, "l", int))
        seed = _seed(args, config)
        radius = bootstrap_sup_ci(ds, l, b, alpha, seed)
        print(f"bootstrap_sup_radius l={l} alpha={_fmt(alpha)}: {_fmt(radius)}")
    print(f"wrote fw.csv and regime.csv to {out_dir}")
    return 0


def _cmd_estimate_fd(args, config) -> int:
    ds = read_dataset(args.dataset)
    out_dir = _resolve(args, config, "out")
    os.makedirs(out_dir, exist_ok=True)
    cond = args.cond if args.cond is not None else _parse_cond(
        str(config.get("cond", DEFAULTS["cond"]))
    )
    i = int(_resolve(args, config, "i", int))
    t_max, step = (
        args.grid if args.grid is not None else _parse_grid(str(config.get("grid", DEFAULTS["grid"])))
    )
    cfg = DecompoundConfig(
        conditioning=cond,
        i=i,
        n_max=int(_resolve(args, config, "nmax", int)),
        trunc_tol=float(_resolve(args, config, "trunc_tol", float)),
        t_max=t_max,
        step=step,
        bootstrap_b=max(int(_resolve(args, config, "bootstrap", int)), 100),
    )
    alpha = float(_resolve(args, config, "alpha", float))
    cdf, diag = decompound(ds, ds.q, cfg)
    b = int(_resolve(args, config, "bootstrap", int))
    radius = None
    dropped = 0
    if b > 0:
        band = bootstrap_band_FD(ds, ds.q, cfg, alpha, _seed(args, config))
        radius, dropped = band.radius, band.dropped_replicates
    cond_text = f"s={cond.s}" if isinstance(cond, Exact) else f"s>={cond.s}"
    with open(os.path.join(out_dir, "fd.csv"), "w", newline="") as fh:
        fh.write(f"# grid={_fmt(t_max)}:{_fmt(step)} cond={cond_text} i={i}\n")
        writer = csv.writer(fh)
        writer.writerow(["t", "F_hat", "band_lo", "band_hi"])
        grid = cdf.grid()
        vals = cdf.array()
        for t, v in zip(grid, vals):
            if radius is None:
                writer.writerow([_fmt(t), _fmt(v), "", ""])
            else:
                writer.writerow([_fmt(t), _fmt(v), _fmt(v - radius), _fmt(v + radius)])
    diag_text = diag.as_text() + f"\ndropped_replicates = {dropped}"
    with open(os.path.join(out_dir, "diagnostics.txt"), "w") as fh:
        fh.write(diag_text + "\n")
    print(diag_text)
    print(f"wrote fd.csv and diagnostics.txt to {out_dir}")
    return 0


def _cmd_regime(args, config) -> int:
    ds = read_dataset(args.dataset)
    out_dir = _resolve(args, config, "out")
    os.makedirs(out_dir, exist_ok=True)
    wmax = int(_resolve(args, config, "wmax", int)) or int(ds.counts.max())
    wmax = max(wmax, 1)
    f_wq = empirical_sampled_pmf(ds)
    report = classify_regime(f_wq, ds.q, list(range(1, wmax + 1)))
    with open(os.path.join(out_dir, "regime.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["w", "R_hat"])
        for w, r in report.r_values:
            writer.writerow([w, _fmt(r)])
    print(f"classification={report.classification} growth_rate={_fmt(report.growth_rate)}")
    return 0


def _cmd_experiment(args, config) -> int:
    reps = int(_resolve(args, config, "reps", int))
    seed = _seed(args, config)
    jobs = int(_resolve(args, config, "jobs", int))
    b = int(_resolve(args, config, "bootstrap", int))
    alpha = float(_resolve(args, config, "alpha", float))
    out_dir = _resolve(args, config, "out")
    files = experiments.run_preset(
        args.preset, reps, seed, out_dir, jobs=jobs, bootstrap_b=b, alpha=alpha
    )
    print(f"wrote {', '.join(files)} to {out_dir}")
    return 0


class UsageError(ValueError):
    pass


def _seed(args, config) -> int:
    env = os.environ.get("RENEWAL_SEED")
    if env is not None:
        return int(env)
    return int(_resolve(args, config, "seed", int))


_COMMANDS = {
    "simulate": _cmd_simulate,
    "estimate-fw": _cmd_estimate_fw,
    "estimate-fd": _cmd_estimate_fd,
    "regime": _cmd_regime,
    "experiment": _cmd_experiment,
}


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        config = _load_config(args.config) if args.config else {}
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return 3
    try:
        return _COMMANDS[args.command](args, config)
    except UsageError as exc:
        parser.error(str(exc))  # exits 2
        return 2
    except FormatError as exc:
        print(f"error: {args.dataset if hasattr(args, 'dataset') else ''}: {exc}", file=sys.stderr)
        return 3
    except FileNotFoundError as exc:
        print(f"error: no such file: {exc.filename}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (
        ZeroConditioningMass,
        TailTooHeavy,
        NotRevertible,
        InfiniteSupport,
        InvalidPath,
    ) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
