"""Probabilistic sampling of finite renewal processes and its inversion."""

from .dists import (
    DiscretePareto,
    ExplicitGaps,
    ExplicitSize,
    Exponential,
    Geometric,
    GridCdf,
    ModelSpec,
    Pmf,
    gap_cdf,
    point_mass,
    size_pmf,
)
from .series import CoeffSeries
from .simulate import (
    FlowRecord,
    SampledDataset,
    read_dataset,
    simulate_dataset,
    write_dataset,
)

__all__ = [
    "CoeffSeries",
    "DiscretePareto",
    "ExplicitGaps",
    "ExplicitSize",
    "Exponential",
    "FlowRecord",
    "Geometric",
    "GridCdf",
    "ModelSpec",
    "Pmf",
    "SampledDataset",
    "gap_cdf",
    "point_mass",
    "read_dataset",
    "simulate_dataset",
    "size_pmf",
    "write_dataset",
]

__version__ = "0.1.0"
