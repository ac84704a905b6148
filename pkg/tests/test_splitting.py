import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from symspace.errors import BadExponent
from symspace.fields import GaussianSum
from symspace.quadrature import QuadratureGrid
from symspace.splitting import (Mollifier, bump_mass, epsilon0, mollify_split_rd,
                                split_on_sprime)
from symspace.suite import _split_setup, lambda_sweep


@pytest.mark.parametrize("d", [1, 2, 3, 4])
def test_mollifier_unit_mass_and_support(d):
    m = Mollifier(d)
    assert abs(m.weights.sum() - 1.0) <= 1e-12
    assert np.all(np.sum(m.nodes ** 2, axis=1) < 1.0)
    assert np.all(m.weights >= 0)
    # the gradient rule integrates to zero by symmetry
    assert np.abs(m.grad_weights.sum(axis=0)).max() <= 1e-10


def test_bump_mass_1d_matches_scipy():
    from scipy.integrate import quad
    val, _ = quad(lambda x: np.exp(-1.0 / (1.0 - x * x)), -1, 1)
    assert bump_mass(1) == pytest.approx(val, rel=1e-10)


def _line_phi(scale):
    return GaussianSum([[0.3 * scale], [-0.2 * scale]], [[scale], [0.7 * scale]], [1.0, -0.6])


def _rd_split(phi, lam, p=2.0):
    box = phi.support_box(8.0) + np.array([-2 * lam, 2 * lam])
    grid = QuadratureGrid(box, order=48, panels=4)
    ev = np.linspace(*phi.support_box(3.0)[0], 301)[:, None]
    return mollify_split_rd(phi, lam, p, grid, eval_points=ev)


@settings(max_examples=10, deadline=None)
@given(st.floats(0.05, 2.0))
def test_rd_split_scale_covariance(lam):
    # co-scaling phi with lambda leaves the normalised ratios unchanged
    ref = _rd_split(_line_phi(1.0), 0.5).measured
    got = _rd_split(_line_phi(2 * lam), lam).measured
    for key in ("ratio_phi1", "ratio_phi2", "ratio_grad_phi2"):
        assert got[key] == pytest.approx(ref[key], rel=1e-6)
    assert got["exactness"] <= 1e-12


def test_rd_split_requires_p_above_dimension():
    phi = _line_phi(1.0)
    grid = QuadratureGrid(phi.support_box(8.0), order=20)
    with pytest.raises(BadExponent):
        mollify_split_rd(phi, 0.1, 1.0, grid)
    with pytest.raises(ValueError):
        mollify_split_rd(phi, -0.1, 2.0, grid)


def test_case1_returns_phi(sl2):
    ch = sl2.sprime
    phi = GaussianSum([[0.0]], [[0.5]], [1.0])
    grid, ev = _split_setup(ch, phi, 1.0, 1.0)
    eps0 = epsilon0(ch)
    res = split_on_sprime(phi, eps0, 2.0, ch, grid, eps0=eps0, eval_points=ev)
    assert res.case == "case1"
    np.testing.assert_array_equal(res.phi1(ev), phi(ev))
    np.testing.assert_array_equal(res.phi2(ev), 0.0)
    with pytest.raises(BadExponent):
        split_on_sprime(phi, 0.1, 1.0, ch, grid, eps0=eps0)


@pytest.mark.parametrize("name", ["sl2", "so31"])
def test_case2_exact_sum(name, request):
    ch = request.getfixturevalue(name).sprime
    d = ch.m
    phi = GaussianSum(np.zeros((1, d)), np.full((1, d), 0.1), [1.0])
    grid, ev = _split_setup(ch, phi, 0.05, 0.05)
    res = split_on_sprime(phi, 0.05, d + 1.0, ch, grid, eval_points=ev)
    assert res.case == "case2"
    assert res.measured["exactness"] <= 1e-10
    np.testing.assert_allclose(res.phi1(ev) + res.phi2(ev), phi(ev), atol=1e-10)


@pytest.mark.parametrize("name", ["sl2", "so31"])
def test_lambda_sweep_exponents(name, request):
    ch = request.getfixturevalue(name).sprime
    d = ch.m
    eps0 = epsilon0(ch)
    lams = min(0.1, 0.95 * eps0 / 4) * np.logspace(-2, 0, 7)
    sw = lambda_sweep(ch, d + 1.0, lams, np.random.default_rng(3), eps0=eps0)
    np.testing.assert_allclose(sw["exponents"], [1 - d / (d + 1), -d / (d + 1), -d / (d + 1)])
    assert np.abs(sw["slopes"] - sw["exponents"]).max() <= 0.1
    assert np.all(sw["fixed_normalised"].max(axis=1) <= 1.05 * sw["envelope"])
    assert sw["max_exactness"] <= 1e-10
    assert set(sw["cases"]) == {"case2"}
