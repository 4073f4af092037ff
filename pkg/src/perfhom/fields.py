"""Nodal carriers for discrete fields."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import Mesh


@dataclass(frozen=True, eq=False)
class FeFunction:
    """One value per active node of ``mesh``; ``t`` is an optional time stamp."""

    mesh: Mesh
    values: np.ndarray
    t: float | None = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != (self.mesh.n_nodes,):
            raise ValueError(
                f"FeFunction needs {self.mesh.n_nodes} nodal values, got shape {values.shape}")
        object.__setattr__(self, "values", values)


@dataclass(frozen=True, eq=False)
class SurfaceFunction:
    """One value per pore-surface node (``mesh.surface_nodes`` order)."""

    mesh: Mesh
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        n = self.mesh.surface_nodes.size
        if values.shape != (n,):
            raise ValueError(f"SurfaceFunction needs {n} values, got shape {values.shape}")
        object.__setattr__(self, "values", values)

    def to_volume(self) -> np.ndarray:
        """Scatter into a full nodal vector (zero away from the pore surface)."""
        out = np.zeros(self.mesh.n_nodes)
        out[self.mesh.surface_nodes] = self.values
        return out
