"""Discretized Stieltjes convolution of grid CDFs.

(F*G)(t) = sum_j F(t - u_j) dG_j with u_j the cell midpoints and dG_j the
increments of G over the cells, so convolving step CDFs needs no density
estimate.  Mass pushed past t_max is dropped (the result saturates below
its full limit), which is the documented truncation behavior.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np
from scipy.signal import fftconvolve

from .dists import GridCdf


def _midpoint_samples(values: np.ndarray) -> np.ndarray:
    # F evaluated (by linear interpolation) at the cell midpoints.
    return 0.5 * (values[:-1] + values[1:])


def cdf_convolve(f: GridCdf, g: GridCdf) -> GridCdf:
    """One discretized Stieltjes convolution on the common grid."""
    if (f.t_max, f.step) != (g.t_max, g.step):
        raise ValueError("operands must share a grid")
    h = _midpoint_samples(f.array())
    dg = np.diff(g.array())
    full = fftconvolve(h, dg)
    out = np.zeros(f.n_points)
    out[1:] = full[: f.n_points - 1]
    return f.with_values(out)


def cdf_convolve_power(f: GridCdf, n: int) -> GridCdf:
    """n-fold convolution power, computed recursively from F."""
    if n < 1:
        raise ValueError("n must be >= 1")
    out = f
    for _ in range(n - 1):
        out = cdf_convolve(out, f)
    return out


def mix_cdf_series(weights: Sequence[float], f: GridCdf) -> GridCdf:
    """sum_n weights[n-1] * F^{*n}; weights may be signed."""
    acc = np.zeros(f.n_points)
    power = f
    for k, w in enumerate(weights):
        if k > 0:
            power = cdf_convolve(power, f)
        if w != 0.0:
            acc += w * power.array()
    return f.with_values(acc)
