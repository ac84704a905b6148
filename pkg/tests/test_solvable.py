import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from symspace.errors import NotInS
from symspace.fields import polynomial_gaussian_field, random_field
from symspace.solvable import (ConstantField, TranslatedField, connection_coefficients,
                               covariant_derivative, divergence, divergence_oracle, flow,
                               gradient_norm, killing_metric)

pts5 = arrays(np.float64, (3, 5), elements=st.floats(-1.5, 1.5))


@pytest.mark.parametrize("name", ["sl2", "sl3", "so31"])
def test_bch_invariants(name, request):
    ch = request.getfixturevalue(name).chart
    assert ch.poly_center_residual() == 0.0
    assert ch.poly_self_variable_violations() == 0
    assert ch.poly_homogeneity_violations() == 0
    assert ch.n_product_matrix_residual() <= 1e-8


@settings(max_examples=30, deadline=None)
@given(pts5)
def test_group_law_associative_with_inverse(sl3, x):
    ch = sl3.chart
    a, b, c = x
    left = ch.multiply(ch.multiply(a, b), c)
    right = ch.multiply(a, ch.multiply(b, c))
    assert np.abs(left - right).max() <= 1e-9 * (1 + np.abs(left).max())
    np.testing.assert_allclose(ch.multiply(a, ch.inverse(a)), np.zeros(5), atol=1e-10)


def test_multiply_matches_matrices(sl3, rng):
    ch = sl3.chart
    a, b = rng.normal(scale=0.6, size=(2, 5))
    prod = ch.group_matrix(a) @ ch.group_matrix(b)
    np.testing.assert_allclose(ch.group_matrix(ch.multiply(a, b)), prod, atol=1e-10)


def test_frame_flow_is_right_multiplication(sl3, rng):
    ch = sl3.chart
    x0 = rng.normal(scale=0.5, size=(4, 5))
    for j in range(ch.r, ch.m):
        e = np.eye(5)[j]
        np.testing.assert_allclose(flow(ConstantField(e), ch, x0, 0.1, step=1e-3),
                                   ch.multiply(x0, 0.1 * e), atol=1e-8)


@pytest.mark.parametrize("name", ["sl2", "sl3", "so31"])
def test_constant_field_divergence(name, request):
    ch = request.getfixturevalue(name).chart
    x = np.random.default_rng(0).normal(size=(5, ch.m))
    for i in range(ch.m):
        d = divergence(ConstantField(np.eye(ch.m)[i]), ch, x)
        expect = -2 * ch.rho[i] if i < ch.r else 0.0
        np.testing.assert_allclose(d, expect, atol=1e-14)


def test_sl2_divergence_of_h(sl2):
    d = divergence(ConstantField([1.0, 0.0]), sl2.chart, np.zeros((1, 2)))
    assert d[0] == pytest.approx(-np.sqrt(2) / 2, abs=1e-12)


@pytest.mark.parametrize("name", ["sl2", "sl3", "so31"])
def test_divergence_against_flow_oracle(name, request, rng):
    ch = request.getfixturevalue(name).chart
    for k in range(4):
        f = (random_field(rng, ch.m, center_scale=0.3, width_range=(0.5, 1.0)) if k % 2 == 0
             else polynomial_gaussian_field(rng, ch.m))
        x = rng.normal(scale=0.4, size=(3, ch.m))
        np.testing.assert_allclose(divergence(f, ch, x), divergence_oracle(f, ch, x), atol=1e-6)


@pytest.mark.parametrize("name", ["sl2", "sl3", "so31"])
def test_connection(name, request, rng):
    fr = request.getfixturevalue(name).frame
    g = connection_coefficients(fr)
    h = rng.normal(size=fr.r)
    for l in range(fr.m):
        assert np.abs(covariant_derivative(fr, np.r_[h, np.zeros(fr.m - fr.r)], l)).max() <= 1e-12
    assert np.abs(g + g.transpose(0, 2, 1)).max() <= 1e-12
    for c in (0.5, 2.0, 10.0):
        np.testing.assert_allclose(connection_coefficients(fr, c * np.eye(fr.m)), g, atol=1e-12)


def test_torsion_free(sl3):
    from symspace.solvable import frame_structure_constants
    fr = sl3.frame
    g = connection_coefficients(fr)
    c = frame_structure_constants(fr)
    np.testing.assert_allclose(g - g.transpose(1, 0, 2), c, atol=1e-12)


def test_killing_metric_sl2(sl2):
    h, e = np.eye(3)[0], np.eye(3)[1]
    assert killing_metric(sl2.iw, h, h) == pytest.approx(8.0, abs=1e-12)
    assert killing_metric(sl2.iw, e, e) == pytest.approx(2.0, abs=1e-12)
    assert killing_metric(sl2.iw, h, e) == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(NotInS):
        killing_metric(sl2.iw, np.eye(3)[2], h)


def test_gradient_norm_left_invariant(sl3, rng):
    ch = sl3.chart
    phi = random_field(rng, ch.m, center_scale=0.3, width_range=(0.5, 1.0))
    s0 = rng.normal(scale=0.5, size=ch.m)
    x = rng.normal(scale=0.4, size=(5, ch.m))
    moved = TranslatedField(phi, s0, ch)
    np.testing.assert_allclose(gradient_norm(moved, ch, ch.multiply(s0, x)),
                               gradient_norm(phi, ch, x), rtol=1e-8)


def test_density_is_exp_minus_two_rho(sl3, rng):
    ch = sl3.chart
    x = rng.normal(size=(4, ch.m))
    np.testing.assert_allclose(ch.density(x), np.exp(-2 * x[:, :ch.r] @ ch.rho), rtol=1e-14)
