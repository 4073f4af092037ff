"""Reconstructions, corrector norms, epsilon sweeps and rate fitting."""
from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import fem
from .cell import CellProblems, eval_corrector, solve_all
from .coefficients import PhysicalParams, ScalarFieldSpec, cutoff_function
from .errors import MeshMismatch, NonPositiveValue, TooFewPoints
from .expressions import as_function
from .geometry import (CellGeometry, Mesh, PerforatedDomain, build_perforated_mesh,
                       build_unit_square_mesh, default_cell)
from .imex import TimeGrid, guarded_time_grid, make_time_grid
from .linalg import DEFAULT_TOL
from .macro import MacroState, build_macro_system, init_macro
from .micro import InitialData, MicroState, build_micro_system, init_micro


# -- reconstruction ----------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Reconstruction:
    """Macro fields carried onto Omega^eps, with and without first-order correctors.

    ``theta1_cut`` and ``u1_cut`` multiply the corrector by the cut-off m^eps.
    """

    mesh: Mesh
    theta0: np.ndarray
    theta1: np.ndarray
    u0: np.ndarray
    u1: np.ndarray
    v0: np.ndarray           # at the pore-surface nodes
    theta1_cut: np.ndarray
    u1_cut: np.ndarray


class Reconstructor:
    """Maps macro states onto one micro mesh.

    Cell functions at x/eps and the macro-to-micro transfer are set up once,
    so each call costs a gradient recovery and a few vector operations.
    """

    def __init__(self, cells: CellProblems, micro_mesh: Mesh, macro_mesh: Mesh, epsilon: float | None = None):
        self.cells = cells
        self.mesh = micro_mesh
        self.macro_mesh = macro_mesh
        self.eps = micro_mesh.epsilon if epsilon is None else float(epsilon)
        x = micro_mesh.coords
        self.theta_cell, _ = eval_corrector(cells.theta, x, self.eps)
        self.u_cell = [eval_corrector(c, x, self.eps)[0] for c in cells.u]
        self.cutoff = cutoff_function(micro_mesh, self.eps).values
        self._index = None
        if macro_mesh.nx == micro_mesh.nx and macro_mesh.n_nodes == (macro_mesh.nx + 1) ** 2:
            self._index = macro_mesh.node_index[micro_mesh.grid_ids]
        self._surface = micro_mesh.surface_nodes

    def transfer(self, values: np.ndarray) -> np.ndarray:
        """Macro nodal values (n[, k]) evaluated at the micro nodes."""
        if self._index is not None:
            return values[self._index]
        return fem.evaluate(self.macro_mesh, values, self.mesh.coords)

    def __call__(self, state: MacroState) -> Reconstruction:
        if state.mesh is not self.macro_mesh:
            raise MeshMismatch("macro state lives on a different mesh")
        eps = self.eps
        mesh = self.macro_mesh
        theta0 = self.transfer(state.theta)
        grad = self.transfer(fem.recover_gradient(mesh, state.theta))
        corr = eps * np.sum(self.theta_cell * grad, axis=1)
        N = state.N
        u0 = np.empty((N, self.mesh.n_nodes))
        u_corr = np.empty_like(u0)
        for i in range(N):
            u0[i] = self.transfer(state.u[i])
            g = self.transfer(fem.recover_gradient(mesh, state.u[i]))
            u_corr[i] = eps * np.sum(self.u_cell[i] * g, axis=1)
        v0 = np.array([self.transfer(vi)[self._surface] for vi in state.v]).reshape(N, self._surface.size)
        m = self.cutoff
        return Reconstruction(self.mesh, theta0, theta0 + corr, u0, u0 + u_corr, v0,
                              theta0 + m * corr, u0 + m * u_corr)


def reconstruct(macro: MacroState, cells: CellProblems, micro_mesh: Mesh, epsilon: float | None = None) -> Reconstruction:
    return Reconstructor(cells, micro_mesh, macro.mesh, epsilon)(macro)


# -- norms -------------------------------------------------------------------

def instant_norms(micro: MicroState, rec: Reconstruction) -> dict:
    """Squared corrector norms at one time level."""
    if micro.mesh is not rec.mesh:
        raise MeshMismatch("micro state and reconstruction live on different meshes")
    mesh = micro.mesh
    ops = fem.norm_operators(mesh)
    M, L = ops.mass, ops.laplace

    def q(A, x):
        return float(max(x @ (A @ x), 0.0))

    e0 = [micro.theta - rec.theta0] + [micro.u[i] - rec.u0[i] for i in range(micro.N)]
    e1 = [micro.theta - rec.theta1] + [micro.u[i] - rec.u1[i] for i in range(micro.N)]
    e1c = [micro.theta - rec.theta1_cut] + [micro.u[i] - rec.u1_cut[i] for i in range(micro.N)]
    w_surf = fem.boundary_weights(mesh, fem.GAMMA)[mesh.surface_nodes]
    dv = micro.v - rec.v0
    return {
        "w1_sq": sum(q(M, e) for e in e0),
        "w2": sum(q(L, e) for e in e1),
        "w2_cut": sum(q(L, e) for e in e1c),
        "surf_sq": mesh.epsilon * float(np.sum(w_surf * dv * dv)),
        "surf_raw_sq": float(np.sum(w_surf * dv * dv)),
    }


def trapezoid(times, values) -> float:
    t = np.asarray(times, dtype=float)
    y = np.asarray(values, dtype=float)
    if t.size < 2:
        return 0.0
    return float(np.sum(0.5 * (y[1:] + y[:-1]) * np.diff(t)))


def corrector_norms(micro_states, reconstructions, w0: float = 0.0) -> "ErrorRecord":
    """Error record from matched lists of micro states and reconstructions.

    Time integrals use the trapezoid rule over the given time levels.
    """
    if len(micro_states) != len(reconstructions) or not micro_states:
        raise MeshMismatch("need matching, nonempty lists of states and reconstructions")
    series = [instant_norms(m, r) for m, r in zip(micro_states, reconstructions)]
    times = [m.t for m in micro_states]
    return ErrorRecord.from_series(micro_states[0].mesh.epsilon, times, series, w0)


@dataclass
class ErrorRecord:
    """Measured corrector quantities for one epsilon.

    ``w1_sq`` and ``surf_sq`` are the final-time values; ``*_int`` are the
    time integrals over [0, T]. ``w2_int`` is the time-integrated gradient
    error against the first-order reconstruction, ``w2_int_cutoff`` the
    variant with the cut-off inside the corrector.
    """

    epsilon: float
    w1_sq: float
    w1_sq_int: float
    w2_int: float
    w2_int_cutoff: float
    surf_sq: float
    surf_sq_int: float
    w0: float
    w1_sq_initial: float = 0.0
    n_steps: int = 0
    dt: float = 0.0
    h: float = 0.0
    seconds: float = 0.0

    @classmethod
    def from_series(cls, epsilon, times, series, w0=0.0, **extra) -> "ErrorRecord":
        def col(k):
            return [s[k] for s in series]
        return cls(
            epsilon=float(epsilon),
            w1_sq=series[-1]["w1_sq"],
            w1_sq_int=trapezoid(times, col("w1_sq")),
            w2_int=trapezoid(times, col("w2")),
            w2_int_cutoff=trapezoid(times, col("w2_cut")),
            surf_sq=series[-1]["surf_sq"],
            surf_sq_int=trapezoid(times, col("surf_sq")),
            w0=float(w0),
            w1_sq_initial=series[0]["w1_sq"],
            **extra)

    def to_dict(self) -> dict:
        return asdict(self)


def initial_mismatch(micro: MicroState, macro: MacroState, rec: Reconstruction) -> float:
    """||theta^eps,0 - theta^0,0||^2 + sum ||u - u0||^2 + sum ||v - v0||^2_Gamma^eps."""
    n = instant_norms(micro, rec)
    return n["w1_sq"] + n["surf_raw_sq"]


# -- rate fitting --------------------------------------------------------------

def fit_rate(pairs) -> tuple[float, float]:
    """Least-squares slope of log(value) against log(eps); constant = max value / eps^slope."""
    pairs = list(pairs)
    if len(pairs) < 3:
        raise TooFewPoints(f"need at least 3 (eps, value) pairs, got {len(pairs)}")
    eps = np.array([p[0] for p in pairs], dtype=float)
    val = np.array([p[1] for p in pairs], dtype=float)
    if np.any(eps <= 0) or np.any(val <= 0):
        raise NonPositiveValue("rate fitting needs positive epsilons and values")
    x, y = np.log(eps), np.log(val)
    slope = float(np.polyfit(x, y, 1)[0])
    const = float(np.max(val / eps ** slope))
    return slope, const


RATE_QUANTITIES = ("w1_sq", "w1_sq_int", "w2_int", "w2_int_cutoff", "surf_sq", "surf_sq_int")


@dataclass
class ConvergenceReport:
    records: list
    slopes: dict
    constants: dict
    well_prepared: bool = True
    effective: dict = field(default_factory=dict)
    settings: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "well_prepared": self.well_prepared,
            "records": [r.to_dict() for r in self.records],
            "slopes": self.slopes,
            "constants": self.constants,
            "effective": self.effective,
            "settings": self.settings,
        }

    def record(self, epsilon: float) -> ErrorRecord:
        for r in self.records:
            if math.isclose(r.epsilon, epsilon):
                return r
        raise KeyError(epsilon)


def build_report(records, well_prepared=True, effective=None, settings=None) -> ConvergenceReport:
    records = sorted(records, key=lambda r: -r.epsilon)
    slopes, consts = {}, {}
    for q in RATE_QUANTITIES + ("w0",):
        vals = [(r.epsilon, getattr(r, q)) for r in records]
        if all(v > 0 for _, v in vals):
            slopes[q], consts[q] = fit_rate(vals)
        else:
            slopes[q], consts[q] = None, None
    return ConvergenceReport(records, slopes, consts, well_prepared, effective or {}, settings or {})


# -- sweeps ----------------------------------------------------------------------

ILL_PREPARED_PERTURBATION = "0.5"


@dataclass(frozen=True)
class StudyConfig:
    """Everything a convergence sweep needs besides the epsilon list."""

    params: PhysicalParams = field(default_factory=PhysicalParams)
    cell: CellGeometry = field(default_factory=default_cell)
    n_per_cell: int = 16
    t_end: float = 0.1
    dt: float | None = None
    dt_factor: float = 0.25
    initial: InitialData | None = None
    index_convention: str = "symmetric"
    v_rates: str = "surface"
    tol: float = DEFAULT_TOL
    ill_exponent: float = 0.25
    perturbation: object = ILL_PREPARED_PERTURBATION

    def initial_data(self) -> InitialData:
        return self.initial if self.initial is not None else InitialData.default(self.params.N)


def ill_prepared_initial(base: InitialData, epsilon: float, exponent: float = 0.25,
                         perturbation=ILL_PREPARED_PERTURBATION) -> InitialData:
    """Micro initial data whose temperature differs from the macro one by eps^exponent * p(x)."""
    f0 = as_function(base.theta)
    p = as_function(perturbation)
    amp = epsilon ** exponent

    def theta(x, y):
        return f0(x, y) + amp * p(x, y)

    return replace(base, theta=theta)


def run_pipeline(cfg: StudyConfig, cells: CellProblems, epsilon: float, well_prepared: bool = True) -> ErrorRecord:
    """Micro run, macro run and corrector norms for one epsilon, stepped in lockstep."""
    t_start = time.perf_counter()
    params = cfg.params
    micro_mesh = build_perforated_mesh(PerforatedDomain(epsilon, cfg.cell), cfg.n_per_cell)
    macro_mesh = build_unit_square_mesh(micro_mesh.nx, epsilon)
    base = cfg.initial_data()
    micro_init = base if well_prepared else ill_prepared_initial(base, epsilon, cfg.ill_exponent, cfg.perturbation)

    micro_sys = build_micro_system(micro_mesh, params, cfg.tol)
    macro_sys = build_macro_system(macro_mesh, cells.effective, params.smoluchowski, params.mollifier,
                                   cfg.v_rates, cfg.tol)
    ms = init_micro(micro_mesh, micro_init)
    Ms = init_macro(macro_mesh, base)

    grid = make_time_grid(cfg.t_end, micro_mesh.h, cfg.dt, cfg.dt_factor)
    g1 = guarded_time_grid(micro_sys, ms.theta, ms.u, grid)
    g2 = guarded_time_grid(macro_sys, Ms.theta, Ms.u, grid)
    grid = TimeGrid(grid.t_end, max(g1.n_steps, g2.n_steps))
    dt = grid.dt

    recon = Reconstructor(cells, micro_mesh, macro_mesh, epsilon)
    r0 = recon(Ms)
    w0 = initial_mismatch(ms, Ms, r0)
    times = [0.0]
    series = [instant_norms(ms, r0)]
    for n in range(1, grid.n_steps + 1):
        th, u, v = micro_sys.step(ms.theta, ms.u, ms.v, dt)
        ms = MicroState(micro_mesh, n * dt, th, u, v)
        th, u, v = macro_sys.step(Ms.theta, Ms.u, Ms.v, dt)
        Ms = MacroState(macro_mesh, n * dt, th, u, v)
        times.append(n * dt)
        series.append(instant_norms(ms, recon(Ms)))
    return ErrorRecord.from_series(epsilon, times, series, w0, n_steps=grid.n_steps, dt=dt,
                                   h=micro_mesh.h, seconds=time.perf_counter() - t_start)


def _pipeline_job(args):
    cfg, cells, eps, wp = args
    return run_pipeline(cfg, cells, eps, wp)


def convergence_study(base: StudyConfig, eps_list, well_prepared: bool = True,
                      threads: int = 1, progress=None) -> ConvergenceReport:
    """Solve the cell problems once, then run every epsilon and fit the rates."""
    eps_list = [float(e) for e in eps_list]
    if len(eps_list) < 3:
        raise TooFewPoints(f"a convergence study needs at least 3 epsilons, got {len(eps_list)}")
    eps_list = sorted(set(eps_list), reverse=True)
    if len(eps_list) < 3:
        raise TooFewPoints("epsilons must be distinct")
    cells = solve_all(base.params, base.cell, base.n_per_cell, base.index_convention, base.tol)
    jobs = [(base, cells, e, well_prepared) for e in eps_list]
    if threads > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=threads) as pool:
            records = list(pool.map(_pipeline_job, jobs))
    else:
        records = []
        for job in jobs:
            records.append(_pipeline_job(job))
            if progress is not None:
                progress(records[-1])
    settings = {
        "eps_list": eps_list, "n_per_cell": base.n_per_cell, "t_end": base.t_end,
        "dt_factor": base.dt_factor, "index_convention": base.index_convention,
        "v_rates": base.v_rates,
    }
    return build_report(records, well_prepared, cells.effective.to_dict(), settings)


# -- diagnostics -------------------------------------------------------------------

@dataclass
class PepRow:
    epsilon: float
    mean: float
    distance: float
    h1_norm: float
    ratio: float


def pep_diagnostic(spec: ScalarFieldSpec, eps_list, n_per_cell: int = 16,
                   cell: CellGeometry | None = None) -> dict:
    """Distance of p^eps = p(x/eps) from its cell average, scaled by sqrt(eps) ||p^eps||_H1."""
    cell = default_cell() if cell is None else cell
    from .geometry import build_cell_mesh

    cm = build_cell_mesh(cell, n_per_cell)
    pc = spec(cm.coords)
    lo, hi = spec.bounds
    # a constant is its own average; quadrature would leave round-off behind
    mean = lo if lo == hi else fem.integrate(pc, cm) / cell.measure_Y1
    rows = []
    for eps in eps_list:
        mesh = build_perforated_mesh(PerforatedDomain(eps, cell), n_per_cell)
        p = spec(mesh.coords / eps)
        dist = fem.l2_norm(p - mean, mesh)
        h1 = fem.h1_norm(p, mesh)
        ratio = 0.0 if dist == 0.0 else dist / (math.sqrt(eps) * h1)
        rows.append(PepRow(float(eps), float(mean), dist, h1, ratio))
    ratios = [r.ratio for r in rows]
    top = max(ratios)
    spread = 0.0 if top == 0 else (top - min(ratios)) / top
    return {"rows": rows, "sup_ratio": top, "spread": spread}


def trace_diagnostic(eps_list=(0.5, 0.25, 0.125), n_per_cell: int = 16,
                     cell: CellGeometry | None = None) -> dict:
    """eps ||f||^2_Gamma / (||f||^2 + eps^2 ||grad f||^2) for a few test functions."""
    cell = default_cell() if cell is None else cell
    out = {}
    for eps in eps_list:
        mesh = build_perforated_mesh(PerforatedDomain(eps, cell), n_per_cell)
        x = mesh.coords
        tests = {
            "one": np.ones(mesh.n_nodes),
            "x1": x[:, 0].copy(),
            "sin": np.sin(2 * np.pi * x[:, 0] / eps),
        }
        for name, f in tests.items():
            num = eps * fem.boundary_l2_sq(f, mesh=mesh)
            den = fem.l2_norm_sq(f, mesh) + eps ** 2 * fem.h1_seminorm_sq(f, mesh)
            out.setdefault(name, []).append((float(eps), num / den))
    return out


def cutoff_norms(eps_list, n_per_cell: int = 16, cell: CellGeometry | None = None) -> dict:
    """||1 - m^eps||_L2 and eps ||grad m^eps||_L2 on Omega^eps, with a shared constant C."""
    cell = default_cell() if cell is None else cell
    rows = []
    for eps in eps_list:
        mesh = build_perforated_mesh(PerforatedDomain(eps, cell), n_per_cell)
        m = cutoff_function(mesh, eps).values
        rows.append((float(eps), fem.l2_norm(1.0 - m, mesh), eps * fem.h1_seminorm(m, mesh)))
    C = max(max(a, b) / math.sqrt(e) for e, a, b in rows)
    slope, _ = fit_rate([(e, a) for e, a, _ in rows])
    return {"rows": rows, "C": C, "slope_l2": slope}
