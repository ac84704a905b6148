import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from symspace.errors import BoundaryMass
from symspace.fields import GaussianSum
from symspace.quadrature import (QuadratureGrid, axis_rule, conjugation_change_of_vars,
                                 ibp_residual_A, ibp_residual_N, integrate, jacobian_check,
                                 left_translation_check)
from symspace.suite import an_box_for


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 8), st.integers(0, 15), st.floats(-2, 0), st.floats(0.1, 3))
def test_gauss_legendre_exact_for_polynomials(order, deg, lo, length):
    hi = lo + length
    x, w = axis_rule(lo, hi, order, panels=2)
    if deg <= 2 * order - 1:
        exact = (hi ** (deg + 1) - lo ** (deg + 1)) / (deg + 1)
        assert np.dot(w, x ** deg) == pytest.approx(exact, rel=1e-11, abs=1e-11)


def test_box_volume():
    g = QuadratureGrid([[-1.0, 2.0], [0.0, 0.5], [-3.0, -1.0]], order=4, panels=2)
    assert g.weights.sum() == pytest.approx(g.volume(), rel=1e-14)
    assert g.volume() == pytest.approx(3.0)
    assert g.size == 8 ** 3


def test_bad_grid_arguments(sl2):
    with pytest.raises(ValueError):
        QuadratureGrid([[1.0, 0.0]])
    with pytest.raises(ValueError):
        QuadratureGrid([[0.0, 1.0]], density_mode="dV_via_NA")
    with pytest.raises(ValueError):
        QuadratureGrid([[0.0, 1.0]], density_mode="haar", chart=sl2.chart)


def test_gaussian_leak_raises():
    bump = GaussianSum([[0.0]], [[1.0]], [1.0])
    with pytest.raises(BoundaryMass):
        integrate(bump, QuadratureGrid([[-2.0, 2.0]], order=20))
    val, _ = integrate(bump, QuadratureGrid(bump.support_box(9.0), order=30, panels=2))
    assert val == pytest.approx(math.sqrt(2 * math.pi), rel=1e-12)


@pytest.mark.parametrize("name", ["sl2", "sl3", "so31"])
def test_jacobian_identity(name, request, rng):
    iw = request.getfixturevalue(name).iw
    for _ in range(5):
        lhs, rhs = jacobian_check(rng.normal(size=iw.rank) @ iw.a_basis, iw)
        assert rhs == pytest.approx(lhs, rel=1e-8)


def test_sl2_na_integral_closed_form(sl2):
    # independent value: Gaussian integrals against exp(-t / sqrt 2)
    c, w, cy, wy, amp = 0.3, 0.4, -0.2, 0.6, 1.7
    bump = GaussianSum([[c, cy]], [[w, wy]], [amp])
    g = QuadratureGrid(bump.support_box(9.0), order=30, panels=2, density_mode="dV_via_NA",
                       chart=sl2.chart, error_order=22)
    val, err = integrate(bump, g)
    k = math.sqrt(2) / 2
    exact = amp * 2 * math.pi * w * wy * math.exp(-k * c + 0.5 * (k * w) ** 2)
    assert val == pytest.approx(exact, rel=1e-12)
    assert err < 1e-10


def test_na_vs_an_sl2(sl2):
    bump = GaussianSum([[0.05, 0.1]], [[0.05, 0.5]], [1.3])
    na_box = bump.support_box(9.0)
    v_na, e_na = integrate(bump, QuadratureGrid(na_box, 24, 2, "dV_via_NA", sl2.chart, 20))
    v_an, e_an = integrate(bump, QuadratureGrid(an_box_for(sl2.chart, na_box), 24, 3,
                                                "dV_via_AN", sl2.chart, 20), truncation_ok=True)
    assert abs(v_na - v_an) <= 2 * (e_na + e_an) + 1e-12


@pytest.mark.parametrize("name", ["sl2", "sl3", "so31"])
def test_ibp_on_n(name, request):
    ch = request.getfixturevalue(name).chart
    n = ch.n
    yb = GaussianSum(np.full((1, n), 0.1), np.full((1, n), 0.35), [1.0])
    g = QuadratureGrid(yb.support_box(8.0), order=20 if n <= 3 else 14, panels=2, error_order=14)
    for j in range(n):
        res, _ = ibp_residual_N(yb, j, ch, g)
        assert res <= 1e-8


def test_ibp_on_a(sl3):
    tb = GaussianSum([[0.2]], [[0.3]], [2.0])
    res, _ = ibp_residual_A(tb, 0, QuadratureGrid(tb.support_box(8.0), order=24, panels=2))
    assert res <= 1e-8


def test_conjugation_sl3(sl3, rng):
    ch, iw = sl3.chart, sl3.iw
    yb = GaussianSum([[0.1, -0.1, 0.0]], [[0.3, 0.3, 0.3]], [1.0])
    log_a = 0.5 * iw.a_basis[0] / np.linalg.norm(iw.a_basis[0])
    g = QuadratureGrid(yb.support_box(8.0) * 2.0, order=24, panels=3, error_order=20)
    lhs, rhs, e = conjugation_change_of_vars(yb, log_a, ch, g)
    assert abs(lhs - rhs) <= 1e-7 * abs(lhs) + 2 * e


def test_left_invariance_sl2(sl2):
    bump = GaussianSum([[0.0, 0.0]], [[0.5, 0.5]], [1.0])
    s0 = np.array([0.2, -0.3])
    box = bump.support_box(9.0) + np.array([-1.0, 1.0])
    g = QuadratureGrid(box, 24, 3, "dV_via_NA", sl2.chart, 20)
    a, b, e = left_translation_check(bump, s0, g)
    assert abs(a - b) <= 2 * e + 1e-10 * abs(a)


def test_grid_json_roundtrip():
    from symspace.quadrature import grid_from_spec
    g = QuadratureGrid([[0.0, 1.0], [-1.0, 1.0]], order=[5, 7], panels=2)
    h = grid_from_spec(g.to_json())
    np.testing.assert_array_equal(g.nodes, h.nodes)
    np.testing.assert_array_equal(g.weights, h.weights)
