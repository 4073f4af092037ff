"""Periodic cell problems on Y1 and the effective coefficients built from them."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import fem
from .coefficients import PhysicalParams, ScalarFieldSpec, TensorFieldSpec
from .errors import PointInsideHole
from .geometry import GAMMA_R, CellGeometry, Mesh
from .linalg import DEFAULT_TOL, solve_cg

INDEX_CONVENTIONS = ("symmetric", "paper")
V_RATE_CONVENTIONS = ("surface", "volume")


@dataclass(frozen=True, eq=False)
class CellSolution:
    """Zero-mean periodic correctors, one nodal field per direction."""

    mesh: Mesh
    values: np.ndarray            # (n_nodes, 2): column j is the corrector for e_j
    qp_gradients: np.ndarray      # (n_el, 4 qp, 2 derivative, 2 direction)

    @classmethod
    def zero(cls, mesh: Mesh) -> "CellSolution":
        return cls(mesh, np.zeros((mesh.n_nodes, 2)), np.zeros((mesh.n_elements, 4, 2, 2)))

    @property
    def is_trivial(self) -> bool:
        return not np.any(self.values)


def solve_cell_problem(cell_mesh: Mesh, tensor: TensorFieldSpec, tol: float = DEFAULT_TOL) -> CellSolution:
    """Find periodic, zero-mean w_j with int_Y1 K (grad w_j + e_j) . grad phi = 0."""
    tensor.check_elliptic()
    pm = fem.periodic_map(cell_mesh)
    A = fem.assemble_stiffness(cell_mesh, tensor, scale_mode="cell")
    Ar = pm.fold_matrix(A)
    K = fem._tensor_at_qp(cell_mesh, tensor, "cell")
    mass = fem.norm_operators(cell_mesh).mass
    ones = np.ones(cell_mesh.n_nodes)
    area = ones @ (mass @ ones)

    cols, grads = [], []
    for j in range(2):
        # b_a = int K e_j . grad phi_a
        local = np.einsum("q,qai,eqi->ea", fem.QUAD_W, fem.DN_Q, K[..., :, j]) * cell_mesh.h
        b = np.zeros(cell_mesh.n_nodes)
        np.add.at(b, cell_mesh.elements.ravel(), local.ravel())
        br = -pm.fold_vector(b)
        if np.abs(br).max() <= 1e-14 * max(1.0, np.abs(b).max()):
            w = np.zeros(cell_mesh.n_nodes)
        else:
            w = pm.expand(solve_cg(Ar, br, tol=tol, constraint="zero_mean"))
            w -= (ones @ (mass @ w)) / area
        cols.append(w)
        grads.append(fem.gradients_at_qp(cell_mesh, w))
    values = np.stack(cols, axis=1)
    qp_gradients = np.stack(grads, axis=-1)
    values.setflags(write=False)
    return CellSolution(cell_mesh, values, qp_gradients)


@dataclass(frozen=True)
class EffectiveCoefficients:
    K: np.ndarray
    T: tuple[np.ndarray, ...]
    D: tuple[np.ndarray, ...]
    F: tuple[np.ndarray, ...]
    A: tuple[float, ...]
    B: tuple[float, ...]
    heat_loss_factor: float
    a_surface: tuple[float, ...] = ()
    b_surface: tuple[float, ...] = ()
    measure_Y1: float = 1.0
    measure_gamma: float = 0.0
    index_convention: str = "symmetric"
    extra: dict = field(default_factory=dict)

    @property
    def N(self) -> int:
        return len(self.D)

    def deposition_rates(self, convention: str = "surface") -> tuple[np.ndarray, np.ndarray]:
        """Rates (a, b) for the bulk ODE dv/dt = a u - b v.

        ``surface`` uses the pore-surface averages of a_i, b_i so that the
        homogenized v tracks the micro surface concentration; ``volume`` uses
        the volume-scaled A_i, B_i.
        """
        if convention == "surface":
            return np.array(self.a_surface), np.array(self.b_surface)
        if convention == "volume":
            return np.array(self.A), np.array(self.B)
        raise ValueError(f"unknown deposition-rate convention {convention!r}")

    def to_dict(self) -> dict:
        return {
            "K": self.K.tolist(),
            "T": [t.tolist() for t in self.T],
            "D": [d.tolist() for d in self.D],
            "F": [f.tolist() for f in self.F],
            "A": list(self.A),
            "B": list(self.B),
            "heat_loss_factor": self.heat_loss_factor,
            "a_surface": list(self.a_surface),
            "b_surface": list(self.b_surface),
            "measure_Y1": self.measure_Y1,
            "measure_gamma": self.measure_gamma,
            "index_convention": self.index_convention,
        }


def _average(mesh: Mesh, qp_values: np.ndarray, measure_Y1: float) -> np.ndarray:
    """(1/|Y1|) int_Y1 f for f given at the Gauss points, shape (n_el, 4, ...)."""
    return mesh.h ** 2 * np.einsum("q,eq...->...", fem.QUAD_W, qp_values) / measure_Y1


def homogenized_tensor(mesh: Mesh, coef: TensorFieldSpec, cs: CellSolution, measure_Y1: float) -> np.ndarray:
    """(1/|Y1|) int c_i (delta_ij + d w_j / d y_i): row i carries c_ii."""
    c = coef.diagonal(fem.quadrature_points(mesh))             # (e, q, 2)
    G = cs.qp_gradients                                         # (e, q, i, j)
    integrand = c[..., :, None] * (np.eye(2) + G)
    return _average(mesh, integrand, measure_Y1)


def surface_integral(mesh: Mesh, spec: ScalarFieldSpec, label: str = fem.GAMMA) -> float:
    return float(fem.boundary_weights(mesh, label, spec, scale_mode="cell").sum())


def effective_tensors(theta_cell: CellSolution, u_cells, params: PhysicalParams,
                      cell: CellGeometry, cell_mesh: Mesh,
                      index_convention: str = "symmetric") -> EffectiveCoefficients:
    """Assemble K, T^i, D^i, F^i, A_i, B_i and the heat-loss factor.

    With ``index_convention="symmetric"`` the Soret tensor is the transpose of
    the kappa-weighted average, T^i_jk = avg(tau_k (delta_kj + d theta^j / d y_k)),
    which is what the homogenized product tau grad^delta u . grad theta
    produces. ``"paper"`` evaluates the literal pattern avg(tau d theta^j / d y_i)
    with the species index i as derivative index (so needs N <= 2), and
    transposes the corrector part of D and F.
    """
    if index_convention not in INDEX_CONVENTIONS:
        raise ValueError(f"index_convention must be one of {INDEX_CONVENTIONS}")
    mY1 = cell.measure_Y1
    N = params.N
    if len(u_cells) != N:
        raise ValueError("need one species cell solution per species")
    K = homogenized_tensor(cell_mesh, params.kappa, theta_cell, mY1)

    T, D, F = [], [], []
    for i in range(N):
        Di = homogenized_tensor(cell_mesh, params.d[i], u_cells[i], mY1)
        Fi = homogenized_tensor(cell_mesh, params.rho[i], u_cells[i], mY1)
        Ti = homogenized_tensor(cell_mesh, params.tau, theta_cell, mY1).T
        if index_convention == "paper":
            Ti = _literal_soret(cell_mesh, params.tau, theta_cell, mY1, i)
            Di = _transpose_corrector(cell_mesh, params.d[i], Di, mY1)
            Fi = _transpose_corrector(cell_mesh, params.rho[i], Fi, mY1)
        T.append(Ti)
        D.append(Di)
        F.append(Fi)

    A = tuple(surface_integral(cell_mesh, s) / mY1 for s in params.a)
    B = tuple(surface_integral(cell_mesh, s) / mY1 for s in params.b)
    gamma = cell.measure_gamma
    if gamma > 0:
        a_s = tuple(surface_integral(cell_mesh, s) / gamma for s in params.a)
        b_s = tuple(surface_integral(cell_mesh, s) / gamma for s in params.b)
    else:
        a_s = b_s = (0.0,) * N
    heat = surface_integral(cell_mesh, params.g0, GAMMA_R) / mY1 if cell.has_hole else 0.0
    return EffectiveCoefficients(
        K=K, T=tuple(T), D=tuple(D), F=tuple(F), A=A, B=B, heat_loss_factor=heat,
        a_surface=a_s, b_surface=b_s, measure_Y1=mY1, measure_gamma=gamma,
        index_convention=index_convention)


def _transpose_corrector(mesh, coef, full, mY1):
    base = _average(mesh, coef.diagonal(fem.quadrature_points(mesh))[..., :, None] * np.eye(2), mY1)
    return base + (full - base).T


def _literal_soret(mesh, tau, cs, mY1, species):
    if species >= 2:
        raise ValueError(
            "index_convention='paper' uses the species index as a derivative index "
            f"and is undefined for species {species + 1} > d = 2")
    c = tau.diagonal(fem.quadrature_points(mesh))
    T0 = _average(mesh, c[..., :, None] * np.eye(2), mY1)
    # T_jk = avg(tau d theta^j / d y_i), independent of k
    col = _average(mesh, c[..., species] [..., None] * cs.qp_gradients[..., species, :], mY1)
    return T0 + np.repeat(col[:, None], 2, axis=1)


def eval_corrector(cs: CellSolution, x, epsilon: float):
    """Corrector values and y-gradients at x/epsilon (wrapped into Y).

    Returns ``(values, grads)`` with shapes (p, 2) and (p, 2 derivative, 2 direction).
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.mod(x / epsilon, 1.0)
    # points that wrap to 1 - tiny should be treated as 0 by periodicity
    y[np.isclose(y, 1.0, atol=1e-12)] = 0.0
    if np.any(cs.mesh.cell.contains_hole_point(y)):
        raise PointInsideHole("point maps into the hole Y0")
    vals = fem.evaluate(cs.mesh, cs.values, y, missing=PointInsideHole)
    g0 = fem.evaluate_gradient(cs.mesh, cs.values[:, 0], y, missing=PointInsideHole)
    g1 = fem.evaluate_gradient(cs.mesh, cs.values[:, 1], y, missing=PointInsideHole)
    return vals, np.stack([g0, g1], axis=-1)


@dataclass(frozen=True, eq=False)
class CellProblems:
    """All cell solutions and effective coefficients for one parameter set."""

    cell: CellGeometry
    mesh: Mesh
    theta: CellSolution
    u: tuple[CellSolution, ...]
    effective: EffectiveCoefficients


def solve_all(params: PhysicalParams, cell: CellGeometry, n: int,
              index_convention: str = "symmetric", tol: float = DEFAULT_TOL) -> CellProblems:
    from .geometry import build_cell_mesh

    mesh = build_cell_mesh(cell, n)
    theta = solve_cell_problem(mesh, params.kappa, tol)
    cache: dict = {}
    u = []
    for di in params.d:
        if di not in cache:
            cache[di] = solve_cell_problem(mesh, di, tol)
        u.append(cache[di])
    eff = effective_tensors(theta, u, params, cell, mesh, index_convention)
    return CellProblems(cell, mesh, theta, tuple(u), eff)
