"""Transmitter/receiver density grids weighted by access probability."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..model import Layout


@dataclass(frozen=True)
class GridSpec:
    resolution: int
    side_length: float

    def __post_init__(self):
        if self.resolution < 1:
            raise ValueError("resolution must be >= 1")
        if not self.side_length > 0:
            raise ValueError("side_length must be > 0")

    @property
    def cell_size(self) -> float:
        return self.side_length / self.resolution


@dataclass(frozen=True)
class DensityGrid:
    tx_grid: np.ndarray
    rx_grid: np.ndarray

    def stacked(self) -> np.ndarray:
        return np.stack([self.tx_grid, self.rx_grid])


def cell_indices(points: np.ndarray, gs: GridSpec) -> np.ndarray:
    """Zero-based (row, col) cell of each point: clamp(ceil(v R / L), 1, R) - 1 per axis."""
    idx = np.ceil(np.asarray(points, dtype=np.float64) * gs.resolution / gs.side_length)
    return (np.clip(idx, 1, gs.resolution) - 1).astype(np.int64)


def accumulate(cells: np.ndarray, weights: np.ndarray, resolution: int) -> np.ndarray:
    grid = np.zeros((resolution, resolution))
    np.add.at(grid, (cells[:, 0], cells[:, 1]), weights)
    return grid


def build_density_grids(layout: Layout, p, gs: GridSpec) -> DensityGrid:
    p = np.asarray(p, dtype=np.float64)
    tx = accumulate(cell_indices(layout.tx_pos, gs), p, gs.resolution)
    rx = accumulate(cell_indices(layout.rx_pos, gs), p, gs.resolution)
    return DensityGrid(tx, rx)
