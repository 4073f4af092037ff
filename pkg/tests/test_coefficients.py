import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from perfhom import fem
from perfhom.coefficients import (MollifierConfig, PhysicalParams, SmoluchowskiParams, constant, cutoff_function,
                                  eval_periodic, iso, laminate, mollified_gradient, smoluchowski_rate, trig)
from perfhom.errors import KernelUnresolved, NonElliptic
from perfhom.fields import FeFunction
from perfhom.geometry import PerforatedDomain, build_perforated_mesh, build_unit_square_mesh, default_cell


def test_eval_periodic_examples():
    assert eval_periodic(constant(3), np.array([0.3, 0.7])) == 3
    assert eval_periodic(trig(2, 1), np.array([0.0, 0.0])) == pytest.approx(3.0)
    assert eval_periodic(trig(2, 1), np.array([0.25, 0.0])) == pytest.approx(2.0)
    assert eval_periodic(laminate(1, 4), np.array([0.6, 0.3])) == 4


def test_eval_periodic_wraps():
    spec = trig(2, 1)
    y = np.array([0.13, 0.71])
    assert spec(y + np.array([3.0, -2.0])) == pytest.approx(spec(y))


def test_spec_bounds_and_validation():
    assert trig(2, 1).bounds == (1.0, 3.0)
    assert laminate(4, 1).bounds == (1.0, 4.0)
    assert trig(0, 1).bounds == (-1.0, 1.0)
    with pytest.raises(NonElliptic):
        PhysicalParams(kappa=iso(trig(1, 2)))
    with pytest.raises(ValueError):
        PhysicalParams(g0=trig(0, 1))
    with pytest.raises(NonElliptic):
        PhysicalParams(kappa=iso(0.0))


@settings(max_examples=50, deadline=None)
@given(a=st.floats(0.1, 5), frac=st.floats(-1, 1), y=arrays(float, (20, 2), elements=st.floats(-3, 3)))
def test_trig_values_within_bounds(a, frac, y):
    spec = trig(a, frac * a)
    v = spec(y)
    lo, hi = spec.bounds
    assert np.all(v >= lo - 1e-12) and np.all(v <= hi + 1e-12)


def test_smoluchowski_examples():
    p = SmoluchowskiParams.constant_kernel(3)
    np.testing.assert_allclose(smoluchowski_rate([1, 1, 1], p), [-3, -2.5, -2])
    np.testing.assert_allclose(smoluchowski_rate([0, 0, 0], p), 0)
    np.testing.assert_allclose(smoluchowski_rate([2, 0, 0], p), [-4, 2, 0])


def test_smoluchowski_quasi_positivity():
    rng = np.random.default_rng(7)
    p = SmoluchowskiParams.constant_kernel(3)
    s = rng.uniform(0, 3, size=(1000, 3))
    zero = rng.integers(0, 3, size=1000)
    s[np.arange(1000), zero] = 0.0
    R = smoluchowski_rate(s, p)
    assert np.all(R[np.arange(1000), zero] >= 0.0)


@settings(max_examples=100, deadline=None)
@given(s=arrays(float, 4, elements=st.floats(0, 10)),
       beta=arrays(float, (4, 4), elements=st.floats(0, 5)))
def test_truncated_mass_never_increases(s, beta):
    p = SmoluchowskiParams(0.5 * (beta + beta.T))
    assert smoluchowski_rate(s, p) @ np.arange(1, 5) <= 1e-9 * (1 + s.max() ** 2 * beta.max())


def test_truncated_mass_equality_without_overflow_pairs():
    beta = np.zeros((3, 3))
    beta[0, 0] = 2.0
    beta[0, 1] = beta[1, 0] = 0.7
    rng = np.random.default_rng(3)
    s = rng.uniform(0, 2, size=(500, 3))
    np.testing.assert_allclose(smoluchowski_rate(s, SmoluchowskiParams(beta)) @ np.arange(1, 4), 0, atol=1e-12)


def test_beta_must_be_symmetric():
    with pytest.raises(ValueError):
        SmoluchowskiParams(np.array([[1.0, 2.0], [0.0, 1.0]]))


def _interior(mesh, dist):
    x = mesh.coords
    return np.min(np.concatenate([x, 1 - x], axis=1), axis=1) >= dist - 1e-12


def test_mollified_gradient_of_constant_and_linear():
    cfg = MollifierConfig(0.1)
    mesh = build_unit_square_mesh(80)          # h = delta / 8
    inner = _interior(mesh, cfg.delta)
    g1 = mollified_gradient(FeFunction(mesh, np.ones(mesh.n_nodes)), cfg)
    assert np.abs(g1[inner]).max() <= 1e-12
    gx = mollified_gradient(FeFunction(mesh, mesh.coords[:, 0].copy()), cfg)
    np.testing.assert_allclose(gx[inner], np.tile([1.0, 0.0], (inner.sum(), 1)), atol=1e-3)


def test_mollified_gradient_constant_with_holes():
    mesh = build_perforated_mesh(PerforatedDomain(0.25, default_cell()), 8)
    g = mollified_gradient(FeFunction(mesh, np.full(mesh.n_nodes, 2.5)), MollifierConfig(0.1))
    assert np.abs(g).max() <= 1e-10


def test_mollified_gradient_bound_is_stable():
    cfg = MollifierConfig(0.1)
    C = []
    for nx in (80, 160):
        mesh = build_unit_square_mesh(nx)
        f = np.sin(8 * np.pi * mesh.coords[:, 0])
        g = mollified_gradient(FeFunction(mesh, f), cfg)
        num = np.sqrt(fem.l2_norm_sq(g[:, 0], mesh) + fem.l2_norm_sq(g[:, 1], mesh))
        C.append(num / fem.l2_norm(f, mesh))
    assert abs(C[1] - C[0]) <= 0.1 * C[0]


def test_mollified_product_inequality_constant():
    cfg = MollifierConfig(0.1)
    mesh = build_unit_square_mesh(40)
    x, y = mesh.coords[:, 0], mesh.coords[:, 1]
    pairs = [(np.sin(3 * x), np.cos(2 * y)), (x * y, 1 + x), (np.cos(5 * x * y), np.exp(-x))]
    C = []
    for f, g in pairs:
        gd = mollified_gradient(FeFunction(mesh, f), cfg)
        lhs = np.sqrt(fem.l2_norm_sq(gd[:, 0] * g, mesh) + fem.l2_norm_sq(gd[:, 1] * g, mesh))
        C.append(lhs / (np.abs(f).max() * fem.l2_norm(g, mesh)))
    # one constant serves all pairs, well below the crude bound from the kernel gradient
    assert max(C) < 4.0 / cfg.delta


def test_mollifier_needs_resolution():
    with pytest.raises(KernelUnresolved):
        mollified_gradient(FeFunction(build_unit_square_mesh(10), np.zeros(121)), MollifierConfig(0.1))


def test_cutoff_examples():
    mesh = build_unit_square_mesh(16)
    m = cutoff_function(mesh, 0.25).values
    centre = np.argmin(np.linalg.norm(mesh.coords - 0.5, axis=1))
    assert m[centre] == 1.0
    node = np.argmin(np.linalg.norm(mesh.coords - np.array([0.125, 0.5]), axis=1))
    assert m[node] == pytest.approx(0.5)
    assert m.min() >= 0 and m.max() <= 1


def test_cutoff_gradient_bound():
    for eps in (0.25, 0.125):
        mesh = build_perforated_mesh(PerforatedDomain(eps, default_cell()), 8)
        m = cutoff_function(mesh, eps).values
        g = fem.element_center_gradients(mesh, m)
        assert eps * np.linalg.norm(g, axis=1).max() <= 1 + 1e-12


def test_cutoff_rate():
    from perfhom.corrector import cutoff_norms
    res = cutoff_norms([0.25, 0.125, 0.0625], n_per_cell=8)
    assert abs(res["slope_l2"] - 0.5) <= 0.15
    for eps, a, b in res["rows"]:
        assert a <= res["C"] * np.sqrt(eps) + 1e-15 and b <= res["C"] * np.sqrt(eps) + 1e-15


def test_decoupled_switches_everything_off():
    p = PhysicalParams().decoupled()
    assert p.tau.is_zero and all(r.is_zero for r in p.rho) and p.g0.is_zero
    assert not np.any(p.smoluchowski.beta)
