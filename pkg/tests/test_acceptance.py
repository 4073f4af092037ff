"""Acceptance criteria, one test each, at the stated tolerances.

Every test prints a single ``[criterion k] PASS|FAIL ...`` line. The full
epsilon sweep behind criteria 1 and 2 runs once per session (about two
minutes single-threaded).
"""
import math

import numpy as np
import pytest

from perfhom import fem
from perfhom.cell import solve_all, solve_cell_problem
from perfhom.cli import main
from perfhom.coefficients import (PhysicalParams, SmoluchowskiParams, constant, iso, laminate,
                                  smoluchowski_rate, trig)
from perfhom.corrector import StudyConfig, convergence_study, cutoff_norms, fit_rate, pep_diagnostic
from perfhom.geometry import (PerforatedDomain, build_cell_mesh, build_perforated_mesh, build_unit_square_mesh,
                              default_cell, no_hole_cell)
from perfhom.linalg import solve_cg
from perfhom.macro import run_macro
from perfhom.micro import InitialData, run_micro

EPS_LIST = [0.25, 0.125, 0.0625]


@pytest.fixture
def report_line(capsys):
    def emit(k, ok, detail):
        with capsys.disabled():
            print(f"\n[criterion {k}] {'PASS' if ok else 'FAIL'} {detail}")
        return ok
    return emit


@pytest.fixture(scope="module")
def sweep():
    return convergence_study(StudyConfig(n_per_cell=16, t_end=0.1), EPS_LIST, well_prepared=True)


def test_criterion_1_corrector_rate(sweep, report_line):
    s1, s2 = sweep.slopes["w1_sq"], sweep.slopes["w2_int"]
    ok = s1 >= 0.8 and s2 >= 0.8
    assert report_line(1, ok, f"slope(w1_sq)={s1:.3f} slope(w2_int)={s2:.3f} (need >= 0.8)")


def test_criterion_2_surface_rate(sweep, report_line):
    s = sweep.slopes["surf_sq"]
    assert report_line(2, s >= 0.8, f"slope(surf_sq)={s:.3f} (need >= 0.8)")


def test_criterion_3_laminate(report_line):
    K = solve_all(PhysicalParams(kappa=iso(laminate(1.0, 4.0))), no_hole_cell(), 64).effective.K
    err = float(np.abs(K - np.diag([1.6, 2.5])).max())
    assert report_line(3, err <= 1e-3, f"max|K - diag(1.6, 2.5)|={err:.2e} (need <= 1e-3)")


def test_criterion_4_trivial_cell(report_line):
    c = 2.0
    mesh = build_cell_mesh(no_hole_cell(), 16)
    cs = solve_cell_problem(mesh, iso(constant(c)))
    h1 = max(fem.h1_norm(cs.values[:, j], mesh) for j in range(2))
    params = PhysicalParams(kappa=iso(constant(c)), d=(iso(constant(1.5)),) * 3,
                            a=(constant(0.0),) * 3, b=(constant(0.0),) * 3)
    eff = solve_all(params, no_hole_cell(), 16).effective
    k_err = float(np.abs(eff.K - c * np.eye(2)).max())
    eps = 0.25
    micro_mesh = build_perforated_mesh(PerforatedDomain(eps, no_hole_cell()), 8)
    macro_mesh = build_unit_square_mesh(micro_mesh.nx, eps)
    mi = run_micro(micro_mesh, params, InitialData.default(), t_end=0.1)
    ma = run_macro(macro_mesh, eff, params, InitialData.default(), t_end=0.1)
    idx = macro_mesh.node_index[micro_mesh.grid_ids]
    diff = max(float(np.abs(a.theta - b.theta[idx]).max()) for a, b in zip(mi.snapshots, ma.snapshots))
    diff = max(diff, max(float(np.abs(a.u - b.u[:, idx]).max()) for a, b in zip(mi.snapshots, ma.snapshots)))
    ok = h1 <= 1e-9 and k_err <= 1e-10 and diff <= 1e-8
    assert report_line(4, ok, f"|corrector|_H1={h1:.1e} |K-cI|={k_err:.1e} micro/macro gap={diff:.1e}")


def test_criterion_5_positivity(report_line):
    mesh = build_perforated_mesh(PerforatedDomain(0.25, default_cell()), 16)
    res = run_micro(mesh, PhysicalParams(), InitialData.default())
    m = res.diagnostics.min_value
    assert report_line(5, m >= -1e-10, f"min nodal value={m:.4e} over {res.grid.n_steps} steps (need >= -1e-10)")


def test_criterion_6_truncated_mass(report_line):
    rng = np.random.default_rng(2024)
    s = rng.uniform(0.0, 5.0, size=(1000, 3))
    worst = float((smoluchowski_rate(s, SmoluchowskiParams.constant_kernel(3)) @ np.arange(1, 4)).max())
    beta = np.array([[1.0, 1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 0.0]])
    eq = float(np.abs(smoluchowski_rate(s, SmoluchowskiParams(beta)) @ np.arange(1, 4)).max())
    ok = worst <= 1e-12 and eq <= 1e-12
    assert report_line(6, ok, f"max sum i R_i={worst:.2e}, equality defect={eq:.1e}")


def test_criterion_7_ratio_spread(report_line):
    res = pep_diagnostic(trig(2.0, 1.0), EPS_LIST, n_per_cell=16)
    ratios = [r.ratio for r in res["rows"]]
    ok = res["spread"] <= 0.2
    assert report_line(7, ok, "ratios=" + ", ".join(f"{r:.4f}" for r in ratios)
                       + f" spread={res['spread']:.3f} (need <= 0.2)")


def test_criterion_8_cutoff(report_line):
    res = cutoff_norms(EPS_LIST, n_per_cell=16)
    s = res["slope_l2"]
    assert report_line(8, abs(s - 0.5) <= 0.15, f"slope ||1-m||={s:.3f} (need 0.5 +- 0.15), C={res['C']:.3f}")


def test_criterion_9_manufactured(report_line):
    errs = []
    for nx in (8, 16, 32):
        mesh = build_unit_square_mesh(nx)
        x, y = mesh.coords[:, 0], mesh.coords[:, 1]
        exact = np.cos(np.pi * x) * np.cos(np.pi * y)
        qp = fem.quadrature_points(mesh)
        f = 2 * np.pi ** 2 * np.cos(np.pi * qp[..., 0]) * np.cos(np.pi * qp[..., 1])
        u = solve_cg(fem.assemble_stiffness(mesh, np.eye(2)), fem.load_vector(mesh, f), tol=1e-12,
                     constraint="zero_mean")
        u -= fem.integrate(u, mesh) / mesh.area
        errs.append((1.0 / nx, fem.l2_norm(u - exact, mesh)))
    s, _ = fit_rate(errs)
    assert report_line(9, 1.8 <= s <= 2.2, f"L2 slope={s:.3f} (need in [1.8, 2.2])")


def test_criterion_10_determinism(tmp_path, report_line):
    cfg = tmp_path / "sweep.toml"
    cfg.write_text("eps_list = [0.25, 0.125, 0.0625]\nn_per_cell = 8\nt_end = 0.1\n")
    codes, files = [], []
    for k in range(2):
        out = tmp_path / f"run{k}"
        codes.append(main(["correct", "-c", str(cfg), "-o", str(out), "--deterministic"]))
        files.append((out / "rates.csv").read_bytes())
    ok = codes == [0, 0] and files[0] == files[1]
    assert report_line(10, ok, f"exit codes={codes}, rates.csv identical={files[0] == files[1]}")
