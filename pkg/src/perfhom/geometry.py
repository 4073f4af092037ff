"""Unit cell with a rectangular hole, perforated domains and structured Q1 meshes.

All meshes live on the unit square and are uniform grids of square elements of
side ``h``. Holes are unions of whole elements, so no cut cells appear.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property

import numpy as np

from .errors import (
    EmptyNeumannPart,
    EmptyRobinPart,
    EpsilonNotUnitFraction,
    HoleNotGridAligned,
    HoleTouchesCellBoundary,
)

FACES = ("left", "right", "bottom", "top")

OUTER = "Outer"
GAMMA_N = "GammaN"
GAMMA_R = "GammaR"
PERIODIC = "PeriodicPair"
LABELS = (OUTER, GAMMA_N, GAMMA_R, PERIODIC)

_ALIGN_TOL = 1e-9


@dataclass(frozen=True)
class CellGeometry:
    hole_lo: tuple[float, float] | None
    hole_hi: tuple[float, float] | None
    robin_faces: frozenset[str] = frozenset()
    dimension: int = 2

    @property
    def has_hole(self) -> bool:
        return self.hole_lo is not None

    @property
    def hole_area(self) -> float:
        if not self.has_hole:
            return 0.0
        return (self.hole_hi[0] - self.hole_lo[0]) * (self.hole_hi[1] - self.hole_lo[1])

    def face_length(self, face: str) -> float:
        if not self.has_hole:
            return 0.0
        if face in ("left", "right"):
            return self.hole_hi[1] - self.hole_lo[1]
        return self.hole_hi[0] - self.hole_lo[0]

    @property
    def measure_Y(self) -> float:
        return 1.0

    @property
    def measure_Y1(self) -> float:
        return 1.0 - self.hole_area

    @property
    def measure_gamma(self) -> float:
        return sum(self.face_length(f) for f in FACES)

    @property
    def measure_gamma_R(self) -> float:
        return sum(self.face_length(f) for f in self.robin_faces)

    @property
    def measure_gamma_N(self) -> float:
        return self.measure_gamma - self.measure_gamma_R

    def contains_hole_point(self, y) -> np.ndarray:
        """True for points strictly inside the hole (y already wrapped to [0,1)^2)."""
        y = np.asarray(y, dtype=float)
        if not self.has_hole:
            return np.zeros(y.shape[:-1], dtype=bool)
        lo, hi = np.asarray(self.hole_lo), np.asarray(self.hole_hi)
        return np.all((y > lo + 1e-12) & (y < hi - 1e-12), axis=-1)


def build_cell_geometry(hole_lo=(0.25, 0.25), hole_hi=(0.75, 0.75), robin_faces=("top", "right")):
    """Unit cell Y with the axis-aligned hole [hole_lo, hole_hi].

    ``robin_faces`` picks which faces of the hole form the Robin part of the
    pore surface; the remaining faces are Neumann.
    """
    lo = tuple(float(v) for v in np.broadcast_to(hole_lo, (2,)))
    hi = tuple(float(v) for v in np.broadcast_to(hole_hi, (2,)))
    for a, b in zip(lo, hi):
        if not (0.0 < a < b < 1.0):
            raise HoleTouchesCellBoundary(
                f"hole [{lo}, {hi}] must satisfy 0 < lo < hi < 1 componentwise")
    faces = frozenset(robin_faces)
    unknown = faces - set(FACES)
    if unknown:
        raise ValueError(f"unknown hole faces {sorted(unknown)}; expected a subset of {FACES}")
    if not faces:
        raise EmptyRobinPart("robin_faces is empty, Gamma_R would have zero measure")
    if faces == set(FACES):
        raise EmptyNeumannPart("all faces are Robin, Gamma_N would have zero measure")
    return CellGeometry(lo, hi, faces)


def no_hole_cell() -> CellGeometry:
    """Degenerate cell with empty Y0 (used for consistency checks)."""
    return CellGeometry(None, None, frozenset())


def default_cell() -> CellGeometry:
    return build_cell_geometry()


def _unit_fraction(epsilon: float) -> int:
    if epsilon <= 0:
        raise EpsilonNotUnitFraction(f"epsilon={epsilon} must be positive")
    inv = 1.0 / epsilon
    m = int(round(inv))
    if m < 1 or abs(inv - m) > _ALIGN_TOL * max(1.0, inv):
        raise EpsilonNotUnitFraction(f"1/epsilon = {inv!r} is not a positive integer")
    return m


@dataclass(frozen=True)
class PerforatedDomain:
    epsilon: float
    cell: CellGeometry

    def __post_init__(self):
        _unit_fraction(self.epsilon)

    @property
    def cells_per_axis(self) -> int:
        return _unit_fraction(self.epsilon)

    @property
    def hole_count(self) -> int:
        return self.cells_per_axis ** 2 if self.cell.has_hole else 0

    @property
    def measure(self) -> float:
        m = self.cells_per_axis
        return 1.0 - m * m * self.epsilon ** 2 * self.cell.hole_area

    @property
    def measure_gamma(self) -> float:
        m = self.cells_per_axis
        return m * m * self.epsilon * self.cell.measure_gamma


@dataclass(frozen=True, eq=False)
class Mesh:
    """Structured Q1 mesh of (a perforated subset of) the unit square.

    Node arrays are indexed by *active* node number. ``elements`` lists the
    four corners of each active element counter-clockwise from the lower-left
    corner. ``facets`` maps a label to an ``(n, 2)`` array of node pairs.
    """

    nx: int
    h: float
    epsilon: float
    kind: str
    cell: CellGeometry
    element_active: np.ndarray
    node_index: np.ndarray
    grid_ids: np.ndarray
    coords: np.ndarray
    elements: np.ndarray
    element_ij: np.ndarray
    facets: dict = field(default_factory=dict)
    facet_faces: dict = field(default_factory=dict)
    periodic_master: np.ndarray | None = None

    @property
    def n_nodes(self) -> int:
        return self.coords.shape[0]

    @property
    def n_elements(self) -> int:
        return self.elements.shape[0]

    @property
    def is_cell_mesh(self) -> bool:
        return self.periodic_master is not None

    @property
    def area(self) -> float:
        return self.n_elements * self.h * self.h

    def facet_length(self, label: str) -> float:
        return self.facets[label].shape[0] * self.h

    @property
    def pore_facets(self) -> np.ndarray:
        return np.concatenate([self.facets[GAMMA_N], self.facets[GAMMA_R]])

    @cached_property
    def surface_nodes(self) -> np.ndarray:
        """Sorted active indices of nodes touching a pore-surface facet."""
        pore = self.pore_facets
        return np.unique(pore.ravel()) if pore.size else np.zeros(0, dtype=np.int64)

    def node_grid(self) -> np.ndarray:
        """Integer (i, j) grid position of every active node."""
        g = self.grid_ids
        return np.stack([g % (self.nx + 1), g // (self.nx + 1)], axis=1)


def _hole_mask(n: int, cell: CellGeometry, reps: int) -> np.ndarray:
    """Element mask (True = hole) for ``reps`` x ``reps`` copies of an n-cell."""
    nx = n * reps
    mask = np.zeros((nx, nx), dtype=bool)
    if not cell.has_hole:
        return mask
    lo = [int(round(n * v)) for v in cell.hole_lo]
    hi = [int(round(n * v)) for v in cell.hole_hi]
    local = np.arange(nx) % n
    in_x = (local >= lo[0]) & (local < hi[0])
    in_y = (local >= lo[1]) & (local < hi[1])
    mask[np.ix_(in_x, in_y)] = True
    return mask


def _check_aligned(cell: CellGeometry, n: int) -> None:
    if not cell.has_hole:
        return
    for v in (*cell.hole_lo, *cell.hole_hi):
        s = n * v
        if abs(s - round(s)) > _ALIGN_TOL:
            raise HoleNotGridAligned(f"{n} * {v} = {s!r} is not an integer")


def _assemble_grid_mesh(nx, hole, kind, epsilon, cell, periodic):
    h = 1.0 / nx
    active = ~hole
    npx = nx + 1

    ex, ey = np.nonzero(active)
    order = np.lexsort((ex, ey))
    ex, ey = ex[order], ey[order]
    corners = np.stack([
        ex + npx * ey,
        ex + 1 + npx * ey,
        ex + 1 + npx * (ey + 1),
        ex + npx * (ey + 1),
    ], axis=1)

    used = np.zeros(npx * npx, dtype=bool)
    used[corners.ravel()] = True
    grid_ids = np.nonzero(used)[0]
    node_index = -np.ones(npx * npx, dtype=np.int64)
    node_index[grid_ids] = np.arange(grid_ids.size)
    coords = np.stack([(grid_ids % npx) * h, (grid_ids // npx) * h], axis=1)
    elements = node_index[corners]

    def gid(i, j):
        return i + npx * j

    pore = {GAMMA_N: [], GAMMA_R: []}
    faces_of = {GAMMA_N: [], GAMMA_R: []}

    def add(face, a, b):
        label = GAMMA_R if face in cell.robin_faces else GAMMA_N
        pore[label].append(np.stack([node_index[a], node_index[b]], axis=1))
        faces_of[label].append(np.full(a.size, FACES.index(face)))

    # vertical edges at x = (i+1) h between elements i and i+1
    left_is_active = active[:-1, :] & hole[1:, :]
    i, j = np.nonzero(left_is_active)
    add("left", gid(i + 1, j), gid(i + 1, j + 1))
    right_is_active = hole[:-1, :] & active[1:, :]
    i, j = np.nonzero(right_is_active)
    add("right", gid(i + 1, j), gid(i + 1, j + 1))
    below_is_active = active[:, :-1] & hole[:, 1:]
    i, j = np.nonzero(below_is_active)
    add("bottom", gid(i, j + 1), gid(i + 1, j + 1))
    above_is_active = hole[:, :-1] & active[:, 1:]
    i, j = np.nonzero(above_is_active)
    add("top", gid(i, j + 1), gid(i + 1, j + 1))

    k = np.arange(nx)
    outer = []
    for (ii, jj, a, b) in (
        (k, np.zeros_like(k), gid(k, 0), gid(k + 1, 0)),
        (k, np.full_like(k, nx - 1), gid(k, nx), gid(k + 1, nx)),
        (np.zeros_like(k), k, gid(0, k), gid(0, k + 1)),
        (np.full_like(k, nx - 1), k, gid(nx, k), gid(nx, k + 1)),
    ):
        keep = active[ii, jj]
        outer.append(np.stack([node_index[a[keep]], node_index[b[keep]]], axis=1))

    facets = {}
    facet_faces = {}
    for label in (GAMMA_N, GAMMA_R):
        facets[label] = (np.concatenate(pore[label]) if pore[label] else np.zeros((0, 2), np.int64))
        facet_faces[label] = (np.concatenate(faces_of[label]) if faces_of[label] else np.zeros(0, int))
    outer = np.concatenate(outer)
    if periodic:
        facets[OUTER] = np.zeros((0, 2), np.int64)
        facets[PERIODIC] = outer
    else:
        facets[OUTER] = outer
        facets[PERIODIC] = np.zeros((0, 2), np.int64)

    master = None
    if periodic:
        gi, gj = grid_ids % npx, grid_ids // npx
        mi = np.where(gi == nx, 0, gi)
        mj = np.where(gj == nx, 0, gj)
        master = node_index[gid(mi, mj)]

    for arr in (active, node_index, grid_ids, coords, elements):
        arr.setflags(write=False)
    return Mesh(
        nx=nx, h=h, epsilon=epsilon, kind=kind, cell=cell,
        element_active=active, node_index=node_index, grid_ids=grid_ids,
        coords=coords, elements=elements, element_ij=np.stack([ex, ey], axis=1),
        facets=facets, facet_faces=facet_faces, periodic_master=master,
    )


def build_cell_mesh(cell: CellGeometry, n: int) -> Mesh:
    """Mesh of Y1 with ``n`` elements per axis and periodic node pairing."""
    _check_aligned(cell, n)
    return _assemble_grid_mesh(n, _hole_mask(n, cell, 1), "cell", 1.0, cell, periodic=True)


def build_perforated_mesh(domain: PerforatedDomain, n_per_cell: int) -> Mesh:
    """Mesh of the perforated unit square with ``h = epsilon / n_per_cell``."""
    reps = _unit_fraction(domain.epsilon)
    _check_aligned(domain.cell, n_per_cell)
    hole = _hole_mask(n_per_cell, domain.cell, reps)
    return _assemble_grid_mesh(n_per_cell * reps, hole, "perforated", domain.epsilon,
                               domain.cell, periodic=False)


def build_unit_square_mesh(nx: int, epsilon: float = 1.0) -> Mesh:
    """Unperforated mesh of the unit square (macroscopic problems)."""
    return _assemble_grid_mesh(nx, np.zeros((nx, nx), dtype=bool), "square", epsilon,
                               no_hole_cell(), periodic=False)


def as_fraction(epsilon: float) -> Fraction:
    return Fraction(1, _unit_fraction(epsilon))
