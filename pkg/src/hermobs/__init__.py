"""Hermite and special Hermite Schroedinger flows, fractional Fourier transforms
and certified observability constants on uniform grids."""

from .numgrid import (
    Ball,
    Box,
    GridError,
    GridFunction,
    IndicatorSet,
    UniformGrid,
    inner_product,
    make_uniform_grid,
    norm,
    rasterize_set,
)
from .params import PropagatorParams, ResonanceError

__version__ = "0.1.0"

__all__ = [
    "Ball",
    "Box",
    "GridError",
    "GridFunction",
    "IndicatorSet",
    "PropagatorParams",
    "ResonanceError",
    "UniformGrid",
    "inner_product",
    "make_uniform_grid",
    "norm",
    "rasterize_set",
]
