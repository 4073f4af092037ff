"""Homogenized system on the unperforated unit square."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import fem
from .cell import EffectiveCoefficients
from .coefficients import MollifierConfig, PhysicalParams, SmoluchowskiParams, nodal_mass_weights
from .geometry import Mesh
from .imex import Exchange, ExplicitTerms, ImexSystem, check_nonnegative
from .linalg import DEFAULT_TOL
from .micro import InitialData, RunResult, run_system


@dataclass(frozen=True, eq=False)
class MacroState:
    """theta0, u0_i and the bulk deposited field v0_i at every node of the unit square."""

    mesh: Mesh
    t: float
    theta: np.ndarray
    u: np.ndarray     # (N, n_nodes)
    v: np.ndarray     # (N, n_nodes)

    @property
    def N(self) -> int:
        return self.u.shape[0]

    def min_value(self) -> float:
        return float(min(self.theta.min(), self.u.min(), self.v.min()))


def init_macro(mesh: Mesh, initial: InitialData) -> MacroState:
    theta, u, v = initial.evaluate(mesh.coords)
    check_nonnegative("theta", theta)
    check_nonnegative("u", u)
    check_nonnegative("v", v)
    return MacroState(mesh, 0.0, theta, u, v)


def _sym(K) -> np.ndarray:
    K = np.asarray(K, dtype=float)
    return 0.5 * (K + K.T)


def build_macro_system(mesh: Mesh, eff: EffectiveCoefficients, smoluchowski: SmoluchowskiParams,
                       mollifier: MollifierConfig = MollifierConfig(), v_rates: str = "surface",
                       tol: float = DEFAULT_TOL) -> ImexSystem:
    """Assemble the homogenized operators.

    Only the symmetric part of K and D_i enters the stiffness (the skew part of a
    constant tensor contributes nothing to the weak form). The zero-order terms
    (heat loss, exchange) use the lumped mass so the bulk ODE stays nodewise.
    """
    N = eff.N
    n = mesh.n_nodes
    M = fem.assemble_mass(mesh)
    A_theta = fem.assemble_stiffness(mesh, _sym(eff.K))
    A_u = tuple(fem.assemble_stiffness(mesh, _sym(D)) for D in eff.D)
    m = nodal_mass_weights(mesh)
    loss = eff.heat_loss_factor * m
    a_v, b_v = eff.deposition_rates(v_rates)
    nodes = np.arange(n)
    exchange = Exchange(
        nodes=nodes,
        A=np.array([Ai * m for Ai in eff.A]).reshape(N, n),
        B=np.array([Bi * m for Bi in eff.B]).reshape(N, n),
        a=np.repeat(np.asarray(a_v, dtype=float).reshape(N, 1), n, axis=1),
        b=np.repeat(np.asarray(b_v, dtype=float).reshape(N, 1), n, axis=1),
        weights=m,
    )
    shape = (mesh.n_elements, 4, 2, 2)
    explicit = ExplicitTerms(
        mesh=mesh,
        soret=tuple(np.broadcast_to(np.asarray(T, dtype=float), shape) for T in eff.T),
        dufour=tuple(np.broadcast_to(np.asarray(F, dtype=float), shape) for F in eff.F),
        smoluchowski=smoluchowski,
        mollifier=mollifier,
        soret_on=any(np.any(T) for T in eff.T),
        dufour_on=any(np.any(F) for F in eff.F),
        coag_on=bool(np.any(smoluchowski.beta)),
    )
    return ImexSystem(mesh, M, A_theta, A_u, loss, exchange, explicit, tol)


def step_macro(state: MacroState, system: ImexSystem, dt: float) -> MacroState:
    theta, u, v = system.step(state.theta, state.u, state.v, dt)
    return MacroState(state.mesh, state.t + dt, theta, u, v)


def _macro_state(prev: MacroState, t, theta, u, v) -> MacroState:
    return MacroState(prev.mesh, t, theta, u, v)


def species_mass(state: MacroState, system: ImexSystem, surface_ratio: float = 1.0) -> float:
    """sum_i int (u_i + surface_ratio * v_i), with v integrated by the lumped mass."""
    M = system.mass
    one = np.ones(M.shape[0])
    m = nodal_mass_weights(state.mesh)
    return float(sum(one @ (M @ ui) for ui in state.u) + surface_ratio * np.sum(m * state.v))


def run_macro(mesh: Mesh, eff: EffectiveCoefficients, params: PhysicalParams, initial: InitialData,
              t_end: float = 0.1, dt: float | None = None, n_snapshots: int = 11,
              v_rates: str = "surface", tol: float = DEFAULT_TOL, guard: bool = True) -> RunResult:
    system = build_macro_system(mesh, eff, params.smoluchowski, params.mollifier, v_rates, tol)
    state0 = init_macro(mesh, initial)
    M = system.mass

    def v_norm(x):
        return float(x @ (M @ x))

    res = run_system(system, state0, t_end, dt, n_snapshots, _macro_state, v_norm, guard)
    res.extra["system"] = system
    return res
