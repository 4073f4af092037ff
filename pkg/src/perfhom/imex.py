"""IMEX-Euler machinery shared by the micro and macro solvers.

Both systems have the same shape: a heat equation and N species equations
with implicit diffusion, an implicit zero-order loss/exchange term that is
diagonal in the nodes, explicit Soret/Dufour/coagulation sources evaluated at
the Gauss points, and a nodewise linear ODE for the deposited species.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import fem
from .coefficients import MollifierConfig, SmoluchowskiParams, mollified_gradient, smoluchowski_rate
from .errors import BlowUp
from .fields import FeFunction
from .geometry import Mesh
from .linalg import DEFAULT_TOL, solve_cg

BLOWUP_LIMIT = 1e8
POSITIVITY_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class Exchange:
    """Deposition exchange between u_i (volume nodes) and v_i (exchange sites).

    The species equation carries ``sum_s (A[i,s] u_i - B[i,s] v_i) phi_s`` at
    the volume nodes ``nodes[s]``, and each site obeys
    ``dv_i/dt = a[i,s] u_i - b[i,s] v_i``.
    """

    nodes: np.ndarray
    A: np.ndarray
    B: np.ndarray
    a: np.ndarray
    b: np.ndarray
    weights: np.ndarray   # quadrature weight of each site, for diagnostics

    @property
    def size(self) -> int:
        return self.nodes.size


@dataclass(frozen=True, eq=False)
class ExplicitTerms:
    """Soret, Dufour and coagulation sources at the Gauss points.

    ``soret[i]`` and ``dufour[i]`` are (n_el, 4, 2, 2) tensors; the heat source
    is sum_i (T_i grad^delta u_i) . grad theta and the species source is
    R_i(u) + (F_i grad u_i) . grad^delta theta.
    """

    mesh: Mesh
    soret: tuple
    dufour: tuple
    smoluchowski: SmoluchowskiParams
    mollifier: MollifierConfig
    soret_on: bool = True
    dufour_on: bool = True
    coag_on: bool = True

    def loads(self, theta: np.ndarray, u: np.ndarray):
        mesh = self.mesh
        N = u.shape[0]
        f_theta = np.zeros(mesh.n_nodes)
        f_u = np.zeros((N, mesh.n_nodes))
        if self.soret_on:
            g_theta = fem.gradients_at_qp(mesh, theta)
            q = np.zeros((mesh.n_elements, 4))
            for i in range(N):
                gd = fem.values_at_qp(mesh, mollified_gradient(FeFunction(mesh, u[i]), self.mollifier))
                q += _contract(g_theta, self.soret[i], gd)
            f_theta = fem.load_vector(mesh, q)
        if self.dufour_on:
            gd_theta = fem.values_at_qp(mesh, mollified_gradient(FeFunction(mesh, theta), self.mollifier))
            for i in range(N):
                gu = fem.gradients_at_qp(mesh, u[i])
                f_u[i] += fem.load_vector(mesh, _contract(gd_theta, self.dufour[i], gu))
        if self.coag_on:
            R = smoluchowski_rate(fem.values_at_qp(mesh, u.T), self.smoluchowski)
            for i in range(N):
                f_u[i] += fem.load_vector(mesh, R[..., i])
        return f_theta, f_u

    def max_drift(self, theta: np.ndarray, u: np.ndarray) -> float:
        """Largest transport speed of the explicit cross terms, for the time-step guard."""
        mesh = self.mesh
        speed = 0.0
        if self.soret_on:
            tmax = max(float(np.abs(t).max()) for t in self.soret)
            tot = np.zeros(mesh.n_nodes)
            for i in range(u.shape[0]):
                tot += np.linalg.norm(mollified_gradient(FeFunction(mesh, u[i]), self.mollifier), axis=1)
            speed = max(speed, tmax * float(np.nanmax(tot)))
        if self.dufour_on:
            fmax = max(float(np.abs(f).max()) for f in self.dufour)
            g = np.linalg.norm(mollified_gradient(FeFunction(mesh, theta), self.mollifier), axis=1)
            speed = max(speed, fmax * float(np.nanmax(g)))
        return speed


def _contract(g, T, f):
    """g . T f pointwise for (..., 2) vectors and (..., 2, 2) tensors."""
    return (g[..., 0] * (T[..., 0, 0] * f[..., 0] + T[..., 0, 1] * f[..., 1])
            + g[..., 1] * (T[..., 1, 0] * f[..., 0] + T[..., 1, 1] * f[..., 1]))


def tensor_field_at_qp(mesh: Mesh, tensor, scale_mode: str = "micro") -> np.ndarray:
    return np.array(fem._tensor_at_qp(mesh, tensor, scale_mode))


@dataclass(eq=False)
class ImexSystem:
    """Assembled operators of one run; LHS matrices are built per time step size."""

    mesh: Mesh
    mass: sp.csr_matrix
    stiff_theta: sp.csr_matrix
    stiff_u: tuple
    loss_theta: np.ndarray          # diagonal implicit heat-loss term
    exchange: Exchange
    explicit: ExplicitTerms
    tol: float = DEFAULT_TOL
    _lhs: dict = field(default_factory=dict)

    @property
    def N(self) -> int:
        return len(self.stiff_u)

    def lhs(self, dt: float):
        key = float(dt)
        if key not in self._lhs:
            ex = self.exchange
            Mdt = self.mass / dt
            L_theta = (Mdt + self.stiff_theta + sp.diags(self.loss_theta)).tocsr()
            L_u = []
            for i in range(self.N):
                diag = np.zeros(self.mesh.n_nodes)
                if ex.size:
                    np.add.at(diag, ex.nodes, ex.A[i] - ex.B[i] * dt * ex.a[i] / (1.0 + dt * ex.b[i]))
                L_u.append((Mdt + self.stiff_u[i] + sp.diags(diag)).tocsr())
            self._lhs = {key: (L_theta, tuple(L_u))}
        return self._lhs[key]

    def step(self, theta, u, v, dt: float):
        """One IMEX-Euler step; returns (theta, u, v) at the new time level.

        The deposited species is eliminated from the exchange term, i.e.
        v^{n+1} = (v^n + dt a u^{n+1}) / (1 + dt b) is substituted into the
        species equation, so bulk plus deposited mass is exchanged exactly.
        """
        L_theta, L_u = self.lhs(dt)
        f_theta, f_u = self.explicit.loads(theta, u)
        M = self.mass
        ex = self.exchange
        theta_new = solve_cg(L_theta, M @ theta / dt + f_theta, tol=self.tol, x0=theta)
        u_new = np.empty_like(u)
        v_new = np.empty_like(v)
        for i in range(self.N):
            rhs = M @ u[i] / dt + f_u[i]
            if ex.size:
                np.add.at(rhs, ex.nodes, ex.B[i] * v[i] / (1.0 + dt * ex.b[i]))
            u_new[i] = solve_cg(L_u[i], rhs, tol=self.tol, x0=u[i])
            if ex.size:
                v_new[i] = (v[i] + dt * ex.a[i] * u_new[i][ex.nodes]) / (1.0 + dt * ex.b[i])
        for arr in (theta_new, u_new, v_new):
            if not np.all(np.isfinite(arr)) or (arr.size and np.abs(arr).max() > BLOWUP_LIMIT):
                raise BlowUp("solution left the admissible range (|value| > 1e8 or non-finite)")
        return theta_new, u_new, v_new


@dataclass(frozen=True)
class TimeGrid:
    t_end: float
    n_steps: int

    @property
    def dt(self) -> float:
        return self.t_end / self.n_steps

    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.t_end, self.n_steps + 1)


def make_time_grid(t_end: float, h: float, dt: float | None = None, factor: float = 0.25) -> TimeGrid:
    """Uniform grid with step at most ``dt`` (default ``factor * h``) that hits t_end exactly."""
    if not t_end > 0:
        raise ValueError("t_end must be positive")
    target = factor * h if dt is None else float(dt)
    if not target > 0:
        raise ValueError("dt must be positive")
    return TimeGrid(float(t_end), max(1, math.ceil(t_end / target - 1e-12)))


def guarded_time_grid(system: ImexSystem, theta, u, grid: TimeGrid, c: float = 0.5,
                      max_halvings: int = 20) -> TimeGrid:
    """Halve the step until dt <= c h / (cross-term drift speed) at the initial state."""
    speed = system.explicit.max_drift(theta, u)
    g = grid
    for _ in range(max_halvings):
        if speed == 0.0 or g.dt <= c * system.mesh.h / speed:
            break
        g = TimeGrid(g.t_end, 2 * g.n_steps)
    return g


def snapshot_steps(grid: TimeGrid, n_snapshots: int) -> list[int]:
    """Step indices of ``n_snapshots`` (>= 2) evenly spread times, always including 0 and the end."""
    if n_snapshots < 2:
        return [grid.n_steps]
    return sorted({int(round(k * grid.n_steps / (n_snapshots - 1))) for k in range(n_snapshots)})


@dataclass
class EnergyDiagnostics:
    """Discrete versions of the energy quantities of the a-priori estimate."""

    times: list = field(default_factory=list)
    grad_theta_sq: list = field(default_factory=list)
    grad_u_sq: list = field(default_factory=list)
    dtheta_int: list = field(default_factory=list)
    du_int: list = field(default_factory=list)
    dv_int: list = field(default_factory=list)
    min_value: float = math.inf
    max_value: float = -math.inf

    @property
    def positive(self) -> bool:
        return self.min_value >= -POSITIVITY_TOL

    def to_dict(self) -> dict:
        return {
            "times": list(self.times),
            "grad_theta_sq": list(self.grad_theta_sq),
            "grad_u_sq": list(self.grad_u_sq),
            "dtheta_dt_sq_int": list(self.dtheta_int),
            "du_dt_sq_int": list(self.du_int),
            "dv_dt_sq_int": list(self.dv_int),
            "min_value": self.min_value,
            "max_value": self.max_value,
            "positive": self.positive,
        }


class EnergyTracker:
    def __init__(self, system: ImexSystem, v_norm):
        self.system = system
        self.ops = fem.norm_operators(system.mesh)
        self.v_norm = v_norm   # callable(v_values) -> squared norm of one species
        self.diag = EnergyDiagnostics()
        self._acc = [0.0, 0.0, 0.0]

    def _extremes(self, *arrays):
        for a in arrays:
            if a.size:
                self.diag.min_value = min(self.diag.min_value, float(a.min()))
                self.diag.max_value = max(self.diag.max_value, float(a.max()))

    def start(self, t, theta, u, v):
        self._extremes(theta, u, v)
        self._record(t, theta, u)

    def _record(self, t, theta, u):
        L = self.ops.laplace
        d = self.diag
        d.times.append(float(t))
        d.grad_theta_sq.append(float(theta @ (L @ theta)))
        d.grad_u_sq.append(float(sum(ui @ (L @ ui) for ui in u)))
        d.dtheta_int.append(self._acc[0])
        d.du_int.append(self._acc[1])
        d.dv_int.append(self._acc[2])

    def advance(self, t, dt, old, new, record: bool):
        M = self.ops.mass
        dth = new[0] - old[0]
        du = new[1] - old[1]
        dv = new[2] - old[2]
        self._acc[0] += float(dth @ (M @ dth)) / dt
        self._acc[1] += float(sum(x @ (M @ x) for x in du)) / dt
        self._acc[2] += float(sum(self.v_norm(x) for x in dv)) / dt
        self._extremes(*new)
        if record:
            self._record(t, new[0], new[1])


def check_nonnegative(name: str, values: np.ndarray) -> None:
    from .errors import NegativeInitialData

    if values.size and float(np.min(values)) < 0.0:
        raise NegativeInitialData(f"initial {name} has negative values (min {float(np.min(values)):.3e})")
