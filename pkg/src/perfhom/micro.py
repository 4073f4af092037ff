"""Microscopic thermo-diffusion system on the perforated domain."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import fem
from .coefficients import PhysicalParams
from .expressions import as_function
from .geometry import GAMMA_R, Mesh
from .imex import (EnergyDiagnostics, EnergyTracker, Exchange, ExplicitTerms, ImexSystem, TimeGrid,
                   check_nonnegative, guarded_time_grid, make_time_grid, snapshot_steps,
                   tensor_field_at_qp)
from .linalg import DEFAULT_TOL

DEFAULT_THETA = "1 + 0.5*cos(pi*x)*cos(pi*y)"
DEFAULT_U = ("1 + 0.3*cos(pi*x)", "0.8 + 0.3*cos(pi*y)", "0.6 + 0.2*cos(pi*x)*cos(pi*y)")


@dataclass(frozen=True)
class InitialData:
    """Initial fields as numbers, expression strings in x and y, or callables f(x, y)."""

    theta: object = DEFAULT_THETA
    u: tuple = DEFAULT_U
    v: tuple = (0.0, 0.0, 0.0)

    @classmethod
    def default(cls, N: int = 3) -> "InitialData":
        u = tuple(DEFAULT_U[i] if i < len(DEFAULT_U) else "0.5" for i in range(N))
        return cls(DEFAULT_THETA, u, (0.0,) * N)

    @classmethod
    def constant(cls, theta: float = 1.0, u: float = 1.0, v: float = 0.0, N: int = 3) -> "InitialData":
        return cls(theta, (u,) * N, (v,) * N)

    @property
    def N(self) -> int:
        return len(self.u)

    def evaluate(self, x: np.ndarray):
        """Nodal values at points x (p, 2): theta (p,), u (N, p), v (N, p)."""
        if len(self.v) != self.N:
            raise ValueError("initial data needs as many v entries as u entries")

        def ev(spec):
            return np.asarray(as_function(spec)(x[:, 0], x[:, 1]), dtype=float) * np.ones(len(x))

        theta = ev(self.theta)
        u = np.array([ev(s) for s in self.u]).reshape(self.N, len(x))
        v = np.array([ev(s) for s in self.v]).reshape(self.N, len(x))
        return theta, u, v

    def to_dict(self) -> dict:
        def show(s):
            return s if isinstance(s, (int, float, str)) else getattr(s, "source", repr(s))
        return {"theta": show(self.theta), "u": [show(s) for s in self.u], "v": [show(s) for s in self.v]}


@dataclass(frozen=True, eq=False)
class MicroState:
    """theta and u_i at the active nodes of Omega^eps, v_i at the pore-surface nodes."""

    mesh: Mesh
    t: float
    theta: np.ndarray
    u: np.ndarray      # (N, n_nodes)
    v: np.ndarray      # (N, n_surface_nodes)

    @property
    def N(self) -> int:
        return self.u.shape[0]

    def min_value(self) -> float:
        return float(min(a.min() for a in (self.theta, self.u, self.v) if a.size))


def init_micro(mesh: Mesh, initial: InitialData) -> MicroState:
    theta, u, _ = initial.evaluate(mesh.coords)
    _, _, v = initial.evaluate(mesh.coords[mesh.surface_nodes]) if mesh.surface_nodes.size else \
        (None, None, np.zeros((initial.N, 0)))
    check_nonnegative("theta", theta)
    check_nonnegative("u", u)
    check_nonnegative("v", v)
    return MicroState(mesh, 0.0, theta, u, v)


def build_micro_system(mesh: Mesh, params: PhysicalParams, tol: float = DEFAULT_TOL) -> ImexSystem:
    """Assemble every time-independent operator of the micro problem."""
    eps = mesh.epsilon
    N = params.N
    M = fem.assemble_mass(mesh)
    A_theta = fem.assemble_stiffness(mesh, params.kappa, "micro")
    cache = {}
    A_u = []
    for di in params.d:
        if di not in cache:
            cache[di] = fem.assemble_stiffness(mesh, di, "micro")
        A_u.append(cache[di])
    loss = eps * fem.boundary_weights(mesh, GAMMA_R, params.g0, "micro")

    nodes = mesh.surface_nodes
    ell = fem.boundary_weights(mesh, fem.GAMMA)[nodes]
    y = mesh.coords[nodes] / eps
    a = np.array([s(y) for s in params.a]).reshape(N, nodes.size)
    b = np.array([s(y) for s in params.b]).reshape(N, nodes.size)
    exchange = Exchange(nodes=nodes, A=eps * ell * a, B=eps * ell * b, a=a, b=b, weights=ell)

    explicit = ExplicitTerms(
        mesh=mesh,
        soret=tuple(tensor_field_at_qp(mesh, params.tau) for _ in range(N)),
        dufour=tuple(tensor_field_at_qp(mesh, r) for r in params.rho),
        smoluchowski=params.smoluchowski,
        mollifier=params.mollifier,
        soret_on=not params.tau.is_zero,
        dufour_on=not all(r.is_zero for r in params.rho),
        coag_on=bool(np.any(params.smoluchowski.beta)),
    )
    return ImexSystem(mesh, M, A_theta, tuple(A_u), loss, exchange, explicit, tol)


def step_micro(state: MicroState, system: ImexSystem, dt: float) -> MicroState:
    theta, u, v = system.step(state.theta, state.u, state.v, dt)
    return MicroState(state.mesh, state.t + dt, theta, u, v)


def surface_mass(state: MicroState, system: ImexSystem) -> float:
    """Bulk plus deposited species mass sum_i [int u_i + eps int_Gamma v_i]."""
    M = system.mass
    bulk = sum(float(np.ones(M.shape[0]) @ (M @ ui)) for ui in state.u)
    surf = state.mesh.epsilon * float(np.sum(system.exchange.weights * state.v))
    return bulk + surf


@dataclass
class RunResult:
    """Snapshots (state list), the time grid actually used and the energy diagnostics."""

    snapshots: list
    grid: TimeGrid
    diagnostics: EnergyDiagnostics
    extra: dict = field(default_factory=dict)

    @property
    def final(self):
        return self.snapshots[-1]

    @property
    def positive(self) -> bool:
        return self.diagnostics.positive


def iterate(system: ImexSystem, state, grid: TimeGrid, make_state):
    """Yield (step index, state) for every time level, starting with step 0."""
    yield 0, state
    dt = grid.dt
    for n in range(1, grid.n_steps + 1):
        theta, u, v = system.step(state.theta, state.u, state.v, dt)
        state = make_state(state, n * dt, theta, u, v)
        yield n, state


def run_system(system: ImexSystem, state0, t_end: float, dt: float | None, n_snapshots: int,
               make_state, v_norm, guard: bool = True) -> RunResult:
    grid = make_time_grid(t_end, system.mesh.h, dt)
    if guard:
        grid = guarded_time_grid(system, state0.theta, state0.u, grid)
    keep = set(snapshot_steps(grid, n_snapshots))
    tracker = EnergyTracker(system, v_norm)
    tracker.start(0.0, state0.theta, state0.u, state0.v)
    snaps = []
    prev = None
    for n, st in iterate(system, state0, grid, make_state):
        if prev is not None:
            tracker.advance(st.t, grid.dt, (prev.theta, prev.u, prev.v), (st.theta, st.u, st.v),
                            record=n in keep)
        if n in keep:
            snaps.append(st)
        prev = st
    return RunResult(snaps, grid, tracker.diag)


def _micro_state(prev: MicroState, t, theta, u, v) -> MicroState:
    return MicroState(prev.mesh, t, theta, u, v)


def run_micro(mesh: Mesh, params: PhysicalParams, initial: InitialData, t_end: float = 0.1,
              dt: float | None = None, n_snapshots: int = 11, tol: float = DEFAULT_TOL,
              guard: bool = True) -> RunResult:
    """Integrate the micro system, keeping ``n_snapshots`` evenly spaced states.

    ``dt`` defaults to h/4 and is halved while it violates the cross-term
    guard at the initial state.
    """
    system = build_micro_system(mesh, params, tol)
    state0 = init_micro(mesh, initial)
    ell = system.exchange.weights

    def v_norm(x):
        return float(ell @ (x * x))

    res = run_system(system, state0, t_end, dt, n_snapshots, _micro_state, v_norm, guard)
    res.extra["system"] = system
    return res
