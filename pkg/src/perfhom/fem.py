"""Q1 finite elements on structured meshes: assembly, norms, periodic folding,
point evaluation and gradient recovery."""
from __future__ import annotations

import weakref
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .coefficients import ScalarFieldSpec, TensorFieldSpec
from .errors import NodeOutsideSource, NonFiniteCoefficient, NotACellMesh, UnknownLabel
from .fields import FeFunction, SurfaceFunction
from .geometry import LABELS, Mesh
from .linalg import DEFAULT_TOL, solve_cg

GAMMA = "Gamma"  # both pore-surface labels together

_g = 0.5 / np.sqrt(3.0)
QUAD_REF = np.array([[0.5 - _g, 0.5 - _g], [0.5 + _g, 0.5 - _g],
                     [0.5 + _g, 0.5 + _g], [0.5 - _g, 0.5 + _g]])
QUAD_W = np.full(4, 0.25)


def shape_values(xi: np.ndarray) -> np.ndarray:
    """Bilinear shape functions at reference points ``xi`` (..., 2) -> (..., 4)."""
    s, t = xi[..., 0], xi[..., 1]
    return np.stack([(1 - s) * (1 - t), s * (1 - t), s * t, (1 - s) * t], axis=-1)


def shape_gradients(xi: np.ndarray) -> np.ndarray:
    """Reference gradients (..., 4, 2)."""
    s, t = xi[..., 0], xi[..., 1]
    ds = np.stack([-(1 - t), (1 - t), t, -t], axis=-1)
    dt = np.stack([-(1 - s), -s, s, (1 - s)], axis=-1)
    return np.stack([ds, dt], axis=-1)


N_Q = shape_values(QUAD_REF)          # (4 qp, 4 basis)
DN_Q = shape_gradients(QUAD_REF)      # (4 qp, 4 basis, 2)


def quadrature_points(mesh: Mesh) -> np.ndarray:
    """Physical Gauss points, shape (n_el, 4, 2)."""
    origin = mesh.coords[mesh.elements[:, 0]]
    return origin[:, None, :] + mesh.h * QUAD_REF[None, :, :]


def cell_coordinates(mesh: Mesh, x: np.ndarray, scale_mode: str = "micro") -> np.ndarray:
    if scale_mode == "micro":
        return x / mesh.epsilon
    if scale_mode == "cell":
        return x
    raise ValueError(f"unknown scale_mode {scale_mode!r}")


def _scatter(mesh: Mesh, local: np.ndarray) -> sp.csr_matrix:
    el = mesh.elements
    rows = np.repeat(el, 4, axis=1).ravel()
    cols = np.tile(el, (1, 4)).ravel()
    A = sp.coo_matrix((local.ravel(), (rows, cols)), shape=(mesh.n_nodes, mesh.n_nodes))
    return A.tocsr()


def assemble_mass(mesh: Mesh) -> sp.csr_matrix:
    """Consistent Q1 mass matrix with 2x2 Gauss quadrature."""
    local = mesh.h ** 2 * np.einsum("q,qa,qb->ab", QUAD_W, N_Q, N_Q)
    return _scatter(mesh, np.broadcast_to(local, (mesh.n_elements, 4, 4)))


def _tensor_at_qp(mesh: Mesh, tensor, scale_mode: str) -> np.ndarray:
    if isinstance(tensor, TensorFieldSpec) or callable(tensor):
        y = cell_coordinates(mesh, quadrature_points(mesh), scale_mode)
        K = np.asarray(tensor(y), dtype=float)
        if K.shape[-1] == 2 and K.ndim == 3:
            K = np.einsum("...i,ij->...ij", K, np.eye(2))
    else:
        K = np.broadcast_to(np.asarray(tensor, dtype=float), (mesh.n_elements, 4, 2, 2))
    if not np.all(np.isfinite(K)):
        raise NonFiniteCoefficient("coefficient tensor has non-finite entries")
    return K


def assemble_stiffness(mesh: Mesh, tensor, scale_mode: str = "micro") -> sp.csr_matrix:
    """Matrix of the form (u, v) -> int K grad u . grad v.

    ``tensor`` is a :class:`TensorFieldSpec`, a callable mapping cell
    coordinates to (..., 2, 2) tensors, or a constant 2x2 array. Cell
    coordinates are ``x / mesh.epsilon`` for ``scale_mode="micro"`` and ``x``
    for ``"cell"``.
    """
    K = _tensor_at_qp(mesh, tensor, scale_mode)
    # |J| = h^2 and grad = ref_grad / h, so the h factors cancel in 2D
    local = np.einsum("q,qai,eqij,qbj->eab", QUAD_W, DN_Q, K, DN_Q)
    return _scatter(mesh, local)


def _scalar_at(mesh, weight, x, scale_mode="micro"):
    if isinstance(weight, ScalarFieldSpec) or callable(weight):
        vals = np.asarray(weight(cell_coordinates(mesh, x, scale_mode)), dtype=float)
    else:
        vals = np.full(x.shape[:-1], float(weight))
    if not np.all(np.isfinite(vals)):
        raise NonFiniteCoefficient("weight has non-finite values")
    return vals


def facets_for(mesh: Mesh, label: str) -> np.ndarray:
    if label == GAMMA:
        return mesh.pore_facets
    if label not in LABELS:
        raise UnknownLabel(label)
    return mesh.facets[label]


def boundary_weights(mesh: Mesh, label: str, weight=1.0, scale_mode="micro") -> np.ndarray:
    """Trapezoidal facet quadrature weights per node: sum over labeled facets of
    h/2 * weight(node)."""
    f = facets_for(mesh, label)
    w = np.zeros(mesh.n_nodes)
    if f.size:
        vals = _scalar_at(mesh, weight, mesh.coords[f], scale_mode)
        np.add.at(w, f.ravel(), 0.5 * mesh.h * vals.ravel())
    return w


def assemble_boundary_mass(mesh: Mesh, label: str, weight=1.0, scale_mode="micro") -> sp.csr_matrix:
    """Lumped (trapezoidal) facet mass on ``label``; diagonal."""
    return sp.diags(boundary_weights(mesh, label, weight, scale_mode)).tocsr()


def load_vector(mesh: Mesh, qp_values: np.ndarray) -> np.ndarray:
    """int f phi_a for f given at the Gauss points, shape (n_el, 4)."""
    local = (mesh.h ** 2) * (qp_values @ (QUAD_W[:, None] * N_Q))
    return np.bincount(mesh.elements.ravel(), weights=local.ravel(), minlength=mesh.n_nodes)


def values_at_qp(mesh: Mesh, u: np.ndarray) -> np.ndarray:
    """Nodal field (n,) or (n, k) interpolated at Gauss points -> (n_el, 4[, k])."""
    loc = u[mesh.elements]  # (n_el, 4[, k])
    if loc.ndim == 2:
        return loc @ N_Q.T
    return np.einsum("qa,ea...->eq...", N_Q, loc, optimize=True)


_DN_FLAT = DN_Q.transpose(1, 0, 2).reshape(4, 8)   # basis x (qp, component)


def gradients_at_qp(mesh: Mesh, u: np.ndarray) -> np.ndarray:
    """FE gradient at Gauss points, shape (n_el, 4, 2)."""
    return (u[mesh.elements] @ _DN_FLAT).reshape(-1, 4, 2) / mesh.h


def element_center_gradients(mesh: Mesh, u: np.ndarray) -> np.ndarray:
    dn = shape_gradients(np.array([0.5, 0.5]))
    return np.einsum("ai,ea->ei", dn, u[mesh.elements]) / mesh.h


def recover_gradient(mesh: Mesh, u: np.ndarray) -> np.ndarray:
    """Nodal gradient by averaging element-centre gradients over each node patch."""
    g = element_center_gradients(mesh, u)
    acc = np.zeros((mesh.n_nodes, 2))
    cnt = np.zeros(mesh.n_nodes)
    for a in range(4):
        np.add.at(acc, mesh.elements[:, a], g)
        np.add.at(cnt, mesh.elements[:, a], 1.0)
    return acc / cnt[:, None]


# -- norms -------------------------------------------------------------------

@dataclass(eq=False)
class Operators:
    """Cached mass / identity-stiffness matrices used by the norms."""

    mass: sp.csr_matrix
    laplace: sp.csr_matrix


_OPS: "weakref.WeakKeyDictionary[Mesh, Operators]" = weakref.WeakKeyDictionary()


def norm_operators(mesh: Mesh) -> Operators:
    ops = _OPS.get(mesh)
    if ops is None:
        ops = Operators(assemble_mass(mesh), assemble_stiffness(mesh, np.eye(2)))
        _OPS[mesh] = ops
    return ops


def _values(f, mesh=None):
    if isinstance(f, FeFunction):
        return f.mesh, f.values
    return mesh, np.asarray(f, dtype=float)


def l2_norm_sq(f, mesh=None) -> float:
    mesh, v = _values(f, mesh)
    return float(max(v @ (norm_operators(mesh).mass @ v), 0.0))


def h1_seminorm_sq(f, mesh=None) -> float:
    mesh, v = _values(f, mesh)
    return float(max(v @ (norm_operators(mesh).laplace @ v), 0.0))


def l2_norm(f, mesh=None) -> float:
    return float(np.sqrt(l2_norm_sq(f, mesh)))


def h1_seminorm(f, mesh=None) -> float:
    return float(np.sqrt(h1_seminorm_sq(f, mesh)))


def h1_norm(f, mesh=None) -> float:
    return float(np.sqrt(l2_norm_sq(f, mesh) + h1_seminorm_sq(f, mesh)))


def boundary_l2_sq(f, label: str = GAMMA, mesh=None) -> float:
    if isinstance(f, SurfaceFunction):
        mesh, v = f.mesh, f.to_volume()
    else:
        mesh, v = _values(f, mesh)
    return float(boundary_weights(mesh, label) @ (v * v))


def boundary_l2(f, label: str = GAMMA, mesh=None) -> float:
    return float(np.sqrt(boundary_l2_sq(f, label, mesh)))


def integrate(f, mesh=None) -> float:
    mesh, v = _values(f, mesh)
    return float(np.ones(mesh.n_nodes) @ (norm_operators(mesh).mass @ v))


# -- periodic constraints ---------------------------------------------------

@dataclass(frozen=True, eq=False)
class PeriodicMap:
    """Fold of slave nodes onto their masters for a cell mesh."""

    mesh: Mesh
    P: sp.csr_matrix          # (n_nodes, n_masters)
    masters: np.ndarray       # active index of every master, ascending

    @property
    def n_pairs(self) -> int:
        return int(np.count_nonzero(self.mesh.periodic_master != np.arange(self.mesh.n_nodes)))

    def fold_matrix(self, A) -> sp.csr_matrix:
        return (self.P.T @ A @ self.P).tocsr()

    def fold_vector(self, b) -> np.ndarray:
        return self.P.T @ b

    def expand(self, x) -> np.ndarray:
        return self.P @ x


def periodic_map(mesh: Mesh) -> PeriodicMap:
    if not mesh.is_cell_mesh:
        raise NotACellMesh("periodic folding needs a cell mesh")
    master = mesh.periodic_master
    masters, col = np.unique(master, return_inverse=True)
    P = sp.csr_matrix((np.ones(mesh.n_nodes), (np.arange(mesh.n_nodes), col)),
                      shape=(mesh.n_nodes, masters.size))
    return PeriodicMap(mesh, P, masters)


def apply_periodic(obj, mesh: Mesh):
    """Fold a matrix (P^T A P) or vector (P^T b) onto the periodic masters."""
    pm = periodic_map(mesh)
    if sp.issparse(obj):
        return pm.fold_matrix(obj)
    return pm.fold_vector(np.asarray(obj, dtype=float))


# -- point evaluation ------------------------------------------------------

def locate(mesh: Mesh, points: np.ndarray, atol: float = 1e-10):
    """Containing active element and local coordinates for each point.

    Points on element edges prefer the lower-left element, falling back to a
    neighbour when that one is inside a hole.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    if np.any(pts < -atol) or np.any(pts > 1 + atol):
        raise NodeOutsideSource("point outside the unit square")
    s = np.clip(pts / mesh.h, 0.0, mesh.nx)
    base = np.clip(np.floor(s + 1e-9).astype(np.int64), 0, mesh.nx - 1)
    on_low = np.abs(s - base) < 1e-9  # on the left / bottom edge of the base element
    elem_id = -np.ones((mesh.nx, mesh.nx), dtype=np.int64)
    elem_id[mesh.element_ij[:, 0], mesh.element_ij[:, 1]] = np.arange(mesh.n_elements)

    found = -np.ones(pts.shape[0], dtype=np.int64)
    ij_found = np.zeros_like(base)
    for dx, dy in ((0, 0), (-1, 0), (0, -1), (-1, -1)):
        cand = base + np.array([dx, dy])
        ok = (found < 0) & np.all(cand >= 0, axis=1)
        if dx:
            ok &= on_low[:, 0]
        if dy:
            ok &= on_low[:, 1]
        idx = np.where(ok)[0]
        eid = elem_id[cand[idx, 0], cand[idx, 1]]
        hit = eid >= 0
        found[idx[hit]] = eid[hit]
        ij_found[idx[hit]] = cand[idx[hit]]
    local = s - ij_found
    return found, local


def evaluate(mesh: Mesh, values: np.ndarray, points: np.ndarray, missing=NodeOutsideSource):
    """Bilinear evaluation of nodal ``values`` (n[, k]) at ``points``."""
    elem, local = locate(mesh, points)
    if np.any(elem < 0):
        raise missing(f"{int(np.sum(elem < 0))} point(s) fall outside the active mesh")
    N = shape_values(local)
    return np.einsum("pa,pa...->p...", N, values[mesh.elements[elem]])


def evaluate_gradient(mesh: Mesh, values: np.ndarray, points: np.ndarray, missing=NodeOutsideSource):
    elem, local = locate(mesh, points)
    if np.any(elem < 0):
        raise missing(f"{int(np.sum(elem < 0))} point(s) fall outside the active mesh")
    dN = shape_gradients(local) / mesh.h
    return np.einsum("pai,pa->pi", dN, values[mesh.elements[elem]])


def interpolate(f: FeFunction, target: Mesh) -> FeFunction:
    """Evaluate ``f`` bilinearly at every node of ``target``."""
    return FeFunction(target, evaluate(f.mesh, f.values, target.coords), f.t)


def nodal_interpolant(mesh: Mesh, func) -> FeFunction:
    x = mesh.coords
    return FeFunction(mesh, np.asarray(func(x[:, 0], x[:, 1]), dtype=float) * np.ones(mesh.n_nodes))


def solve_spd(A, b, tol=DEFAULT_TOL, constraint="none"):
    return solve_cg(A, b, tol=tol, constraint=constraint)
