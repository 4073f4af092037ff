import numpy as np
import pytest

from perfhom import fem
from perfhom.cell import solve_all
from perfhom.coefficients import PhysicalParams, SmoluchowskiParams, constant, iso
from perfhom.geometry import PerforatedDomain, build_perforated_mesh, build_unit_square_mesh, default_cell, no_hole_cell
from perfhom.macro import build_macro_system, init_macro, run_macro, species_mass, step_macro
from perfhom.micro import InitialData, run_micro

UNIT = iso(constant(1.0))


def _eff(params, cell=None, n=16):
    return solve_all(params, cell or default_cell(), n).effective


def test_exchange_equilibrium_is_stationary():
    params = PhysicalParams().decoupled(kappa=UNIT, a=(constant(1.0),) * 3, b=(constant(1.0),) * 3)
    eff = _eff(params)
    for rates in ("surface", "volume"):
        a, b = eff.deposition_rates(rates)
        mesh = build_unit_square_mesh(8)
        system = build_macro_system(mesh, eff, params.smoluchowski, v_rates=rates)
        v_eq = eff.A[0] / eff.B[0]
        assert a[0] / b[0] == pytest.approx(v_eq)
        s = init_macro(mesh, InitialData.constant(1.0, 1.0, v_eq))
        for _ in range(100):
            s = step_macro(s, system, 0.01)
        assert np.abs(s.u - 1.0).max() <= 1e-12
        assert np.abs(s.v - v_eq).max() <= 1e-12
        assert np.abs(s.theta - 1.0).max() <= 1e-12


def test_constant_equilibrium_has_zero_energy():
    params = PhysicalParams().decoupled(kappa=UNIT)
    res = run_macro(build_unit_square_mesh(8), _eff(params), params, InitialData.constant(1.0, 1.0, 0.0))
    d = res.diagnostics
    assert max(map(abs, d.grad_theta_sq + d.grad_u_sq + d.dtheta_int + d.du_int + d.dv_int)) <= 1e-12


def test_heat_loss_decay():
    params = PhysicalParams().decoupled(g0=constant(1.0))
    eff = _eff(params)
    assert eff.heat_loss_factor == pytest.approx(1.0 / 0.75)
    res = run_macro(build_unit_square_mesh(8), eff, params, InitialData.constant(1.0, 1.0, 0.0),
                    t_end=0.1, dt=1e-3)
    assert np.abs(res.final.theta - np.exp(-0.1 / 0.75)).max() <= 1e-3


def test_no_hole_macro_equals_micro():
    params = PhysicalParams(kappa=iso(constant(2.0)), d=(iso(constant(1.5)),) * 3,
                            a=(constant(0.0),) * 3, b=(constant(0.0),) * 3)
    eps = 0.25
    micro_mesh = build_perforated_mesh(PerforatedDomain(eps, no_hole_cell()), 8)
    macro_mesh = build_unit_square_mesh(32, eps)
    init = InitialData.default()
    mi = run_micro(micro_mesh, params, init, t_end=0.02, n_snapshots=2)
    ma = run_macro(macro_mesh, _eff(params, no_hole_cell(), 8), params, init, t_end=0.02, n_snapshots=2)
    assert mi.grid == ma.grid
    idx = macro_mesh.node_index[micro_mesh.grid_ids]
    assert np.abs(mi.final.theta - ma.final.theta[idx]).max() <= 1e-8
    assert np.abs(mi.final.u - ma.final.u[:, idx]).max() <= 1e-8


@pytest.fixture(scope="module")
def default_eff():
    return _eff(PhysicalParams())


def test_default_run_positive_and_dt_halving(default_eff):
    mesh = build_unit_square_mesh(32)
    params = PhysicalParams()
    r1 = run_macro(mesh, default_eff, params, InitialData.default())
    r2 = run_macro(mesh, default_eff, params, InitialData.default(), dt=r1.grid.dt / 2)
    assert r1.positive and r2.positive
    assert r2.grid.n_steps == 2 * r1.grid.n_steps
    n1, n2 = fem.l2_norm(r1.final.theta, mesh), fem.l2_norm(r2.final.theta, mesh)
    assert abs(n1 - n2) <= 0.05 * n2


def test_continuous_dependence(default_eff):
    mesh = build_unit_square_mesh(32)
    params = PhysicalParams()
    base = InitialData.default()
    bump = "1e-6*cos(pi*x)"
    pert = InitialData(theta=f"{base.theta} + {bump}", u=tuple(f"{u} + {bump}" for u in base.u), v=base.v)
    r1 = run_macro(mesh, default_eff, params, base)
    r2 = run_macro(mesh, default_eff, params, pert)
    s1, s2 = r1.snapshots[0], r2.snapshots[0]
    d0 = np.sqrt(fem.l2_norm_sq(s1.theta - s2.theta, mesh) + sum(fem.l2_norm_sq(a - b, mesh) for a, b in zip(s1.u, s2.u)))
    f1, f2 = r1.final, r2.final
    dT = np.sqrt(fem.l2_norm_sq(f1.theta - f2.theta, mesh) + sum(fem.l2_norm_sq(a - b, mesh) for a, b in zip(f1.u, f2.u))
                 + sum(fem.l2_norm_sq(a - b, mesh) for a, b in zip(f1.v, f2.v)))
    assert d0 > 0
    assert dT <= 10 * d0


@pytest.mark.parametrize("rates", ["volume", "surface"])
def test_bulk_plus_deposit_conserved(rates):
    params = PhysicalParams().decoupled(a=(constant(1.0),) * 3, b=(constant(0.5),) * 3)
    eff = _eff(params)
    ratio = 1.0 if rates == "volume" else eff.measure_gamma / eff.measure_Y1
    mesh = build_unit_square_mesh(8)
    system = build_macro_system(mesh, eff, SmoluchowskiParams(np.zeros((3, 3))), v_rates=rates)
    s = init_macro(mesh, InitialData(theta=1.0, u=("1 + 0.5*cos(pi*x)", "0.4", "x*y"), v=(0.2, 0.0, 0.1)))
    before = species_mass(s, system, ratio)
    for _ in range(20):
        s = step_macro(s, system, 0.01)
    assert abs(species_mass(s, system, ratio) - before) <= 1e-9 * before
