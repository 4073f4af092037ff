import dataclasses

import numpy as np
import pytest

from perfhom import fem
from perfhom.coefficients import PhysicalParams, SmoluchowskiParams, constant, iso, smoluchowski_rate
from perfhom.errors import BlowUp, NegativeInitialData
from perfhom.geometry import PerforatedDomain, build_perforated_mesh, default_cell
from perfhom.imex import Exchange
from perfhom.micro import (InitialData, build_micro_system, init_micro, run_micro, step_micro,
                           surface_mass)


def _mesh(eps=0.25, n=8):
    return build_perforated_mesh(PerforatedDomain(eps, default_cell()), n)


def _quiet(**over):
    """Every coupling switched off, unit diffusion."""
    p = PhysicalParams().decoupled()
    return dataclasses.replace(p, **over) if over else p


def test_init_examples():
    mesh = _mesh()
    s = init_micro(mesh, InitialData.constant(1.0, 1.0, 0.0))
    assert np.all(s.theta == 1) and np.all(s.u == 1) and np.all(s.v == 0)
    s = init_micro(mesh, InitialData(theta="1 + x", u=(1, 1, 1), v=(0, 0, 0)))
    np.testing.assert_allclose(s.theta, 1 + mesh.coords[:, 0])
    assert s.v.shape == (3, mesh.surface_nodes.size)


def test_negative_initial_data_rejected():
    with pytest.raises(NegativeInitialData):
        init_micro(_mesh(), InitialData.constant(theta=-1.0))


def test_decoupled_constant_state_is_stationary():
    mesh = _mesh()
    system = build_micro_system(mesh, _quiet())
    s0 = init_micro(mesh, InitialData.constant(1.0, 0.7, 0.3))
    s = s0
    for _ in range(100):
        s = step_micro(s, system, 0.01)
    assert np.abs(s.theta - 1.0).max() <= 1e-12
    assert np.abs(s.u - 0.7).max() <= 1e-12
    assert np.abs(s.v - 0.3).max() <= 1e-12


def test_decoupled_constant_run_has_zero_energy():
    res = run_micro(_mesh(), _quiet(), InitialData.constant(1.0, 0.7, 0.0))
    d = res.diagnostics
    for series in (d.grad_theta_sq, d.grad_u_sq, d.dtheta_int, d.du_int, d.dv_int):
        assert max(abs(x) for x in series) <= 1e-12


def _rk4(f, y, dt, n):
    for _ in range(n):
        k1 = f(y)
        k2 = f(y + 0.5 * dt * k1)
        k3 = f(y + 0.5 * dt * k2)
        k4 = f(y + dt * k3)
        y = y + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    return y


def test_uniform_coagulation_tracks_ode():
    beta = SmoluchowskiParams.constant_kernel(3)
    params = _quiet(smoluchowski=beta)
    res = run_micro(_mesh(), params, InitialData.constant(1.0, 1.0, 0.0), t_end=0.1, dt=1e-3, guard=False)
    ref = _rk4(lambda y: smoluchowski_rate(y, beta), np.ones(3), 1e-3, 100)
    assert np.abs(res.final.u - ref[:, None]).max() <= 5e-3


def test_deposition_update_closed_form():
    mesh = _mesh()
    system = build_micro_system(mesh, _quiet())
    k = mesh.surface_nodes.size
    zero, one = np.zeros((3, k)), np.ones((3, k))
    frozen = dataclasses.replace(system, exchange=Exchange(mesh.surface_nodes, zero, zero, one, one,
                                                          system.exchange.weights), _lhs={})
    s = init_micro(mesh, InitialData.constant(1.0, 1.0, 0.0))
    s1 = step_micro(s, frozen, 0.1)
    np.testing.assert_allclose(s1.u, 1.0, atol=1e-12)
    np.testing.assert_allclose(s1.v, 0.1 / 1.1, atol=1e-14)


def test_exchange_conserves_bulk_plus_surface():
    mesh = _mesh()
    unit = (constant(1.0),) * 3
    params = _quiet(a=unit, b=(constant(0.5),) * 3)
    system = build_micro_system(mesh, params)
    s = init_micro(mesh, InitialData(theta=1.0, u=("1 + 0.5*cos(pi*x)", "0.4", "x*y"), v=(0.2, 0.0, 0.1)))
    before = surface_mass(s, system)
    for _ in range(20):
        s = step_micro(s, system, 0.01)
        after = surface_mass(s, system)
        assert abs(after - before) <= 1e-8 * max(1.0, abs(before))
        before = after
    assert s.v.max() > 0.1


def test_blowup_detected():
    mesh = _mesh()
    system = build_micro_system(mesh, _quiet())
    s = init_micro(mesh, InitialData.constant(2e8, 1.0, 0.0))
    with pytest.raises(BlowUp):
        step_micro(s, system, 0.01)


@pytest.fixture(scope="module")
def default_runs():
    out = {}
    for eps in (0.25, 0.125):
        out[eps] = run_micro(_mesh(eps, 16), PhysicalParams(), InitialData.default())
    return out


def test_default_run_is_positive(default_runs):
    res = default_runs[0.25]
    assert res.positive
    assert res.diagnostics.min_value >= -1e-10
    assert len(res.snapshots) == 11


def test_gradient_energy_bounded_in_epsilon(default_runs):
    g4 = max(default_runs[0.25].diagnostics.grad_theta_sq)
    g8 = max(default_runs[0.125].diagnostics.grad_theta_sq)
    assert g8 <= 2.0 * g4
    assert default_runs[0.125].positive


def test_two_mesh_consistency(default_runs):
    fine = default_runs[0.25]
    coarse = run_micro(_mesh(0.25, 8), PhysicalParams(), InitialData.default(), dt=2 * fine.grid.dt)
    n_c = fem.l2_norm(coarse.final.theta, coarse.final.mesh)
    n_f = fem.l2_norm(fine.final.theta, fine.final.mesh)
    assert abs(n_c - n_f) <= 0.05 * n_f
