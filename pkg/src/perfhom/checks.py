"""Quick property suite behind ``perfhom check``.

Each check returns a dict with ``name``, ``passed`` and the measured numbers.
The full epsilon sweep is left to ``perfhom correct``; everything here runs
in well under a minute.
"""
from __future__ import annotations

import numpy as np

from . import fem
from .cell import solve_all, solve_cell_problem
from .coefficients import PhysicalParams, SmoluchowskiParams, constant, iso, laminate, smoluchowski_rate, trig
from .corrector import cutoff_norms, fit_rate, pep_diagnostic, trace_diagnostic
from .geometry import (PerforatedDomain, build_cell_mesh, build_perforated_mesh, build_unit_square_mesh,
                       default_cell, no_hole_cell)
from .linalg import solve_cg
from .micro import InitialData, run_micro


def laminate_oracle(n: int = 64) -> dict:
    cells = solve_all(PhysicalParams(kappa=iso(laminate(1.0, 4.0))), no_hole_cell(), n)
    K = cells.effective.K
    err = float(np.abs(K - np.diag([1.6, 2.5])).max())
    return {"name": "laminate_oracle", "passed": err <= 1e-3, "K": K.tolist(), "max_error": err}


def trivial_cell(c: float = 2.0, n: int = 16) -> dict:
    mesh = build_cell_mesh(no_hole_cell(), n)
    cs = solve_cell_problem(mesh, iso(constant(c)))
    h1 = max(fem.h1_norm(cs.values[:, j], mesh) for j in range(2))
    K = solve_all(PhysicalParams(kappa=iso(constant(c))), no_hole_cell(), n).effective.K
    err = float(np.abs(K - c * np.eye(2)).max())
    return {"name": "trivial_cell", "passed": h1 <= 1e-9 and err <= 1e-10, "corrector_h1": h1, "K_error": err}


def smoluchowski_mass(samples: int = 1000, seed: int = 0) -> dict:
    rng = np.random.default_rng(seed)
    s = rng.uniform(0.0, 2.0, size=(samples, 3))
    p = SmoluchowskiParams.constant_kernel(3)
    worst = float((smoluchowski_rate(s, p) @ np.arange(1, 4)).max())
    beta = np.zeros((3, 3))
    beta[0, 0] = beta[0, 1] = beta[1, 0] = 1.0   # only k + j <= 3 pairs
    eq = float(np.abs(smoluchowski_rate(s, SmoluchowskiParams(beta)) @ np.arange(1, 4)).max())
    return {"name": "smoluchowski_truncated_mass", "passed": worst <= 1e-12 and eq <= 1e-12,
            "max_weighted_sum": worst, "max_equality_defect": eq}


def cutoff_rate() -> dict:
    res = cutoff_norms([0.25, 0.125, 0.0625], n_per_cell=8)
    return {"name": "cutoff_rate", "passed": abs(res["slope_l2"] - 0.5) <= 0.15,
            "slope": res["slope_l2"], "C": res["C"]}


def manufactured_solution() -> dict:
    errs = []
    for nx in (8, 16, 32):
        mesh = build_unit_square_mesh(nx)
        x, y = mesh.coords[:, 0], mesh.coords[:, 1]
        exact = np.cos(np.pi * x) * np.cos(np.pi * y)
        qp = fem.quadrature_points(mesh)
        f = 2 * np.pi ** 2 * np.cos(np.pi * qp[..., 0]) * np.cos(np.pi * qp[..., 1])
        A = fem.assemble_stiffness(mesh, np.eye(2))
        u = solve_cg(A, fem.load_vector(mesh, f), tol=1e-12, constraint="zero_mean")
        u -= fem.integrate(u, mesh) / mesh.area
        errs.append((1.0 / nx, fem.l2_norm(u - exact, mesh)))
    slope, _ = fit_rate(errs)
    return {"name": "fem_manufactured", "passed": 1.8 <= slope <= 2.2, "slope": slope, "errors": errs}


def pep_ratio() -> dict:
    res = pep_diagnostic(trig(2.0, 1.0), [0.25, 0.125, 0.0625], n_per_cell=16)
    return {"name": "pep_ratio_spread", "passed": res["spread"] <= 0.2,
            "ratios": [r.ratio for r in res["rows"]], "spread": res["spread"]}


def trace_inequality() -> dict:
    res = trace_diagnostic()
    worst = max(v for rows in res.values() for _, v in rows)
    return {"name": "trace_ratio_bounded", "passed": bool(np.isfinite(worst)), "max_ratio": worst,
            "ratios": res}


def micro_positivity(epsilon: float = 0.25, n_per_cell: int = 8) -> dict:
    mesh = build_perforated_mesh(PerforatedDomain(epsilon, default_cell()), n_per_cell)
    res = run_micro(mesh, PhysicalParams(), InitialData.default())
    return {"name": "micro_positivity", "passed": res.positive, "min_value": res.diagnostics.min_value}


ALL = (laminate_oracle, trivial_cell, smoluchowski_mass, cutoff_rate, manufactured_solution,
       pep_ratio, trace_inequality, micro_positivity)


def run_all() -> list[dict]:
    return [check() for check in ALL]
