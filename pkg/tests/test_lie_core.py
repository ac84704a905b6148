import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from symspace.lie_core import algebra_label, bracket, build_algebra, killing_form

# ad matrices of H, E, F in the basis (H, E, F), written out by hand
AD_H = np.diag([0.0, 2.0, -2.0])
AD_E = np.array([[0.0, 0.0, 1.0], [-2.0, 0.0, 0.0], [0.0, 0.0, 0.0]])
AD_F = np.array([[0.0, -1.0, 0.0], [0.0, 0.0, 0.0], [2.0, 0.0, 0.0]])

vec3 = arrays(np.float64, 3, elements=st.floats(-3, 3))


def test_sl2_ad_matrices_match_hand_written():
    alg = build_algebra({"family": "sl", "n": 2})
    for i, ref in enumerate((AD_H, AD_E, AD_F)):
        np.testing.assert_allclose(alg.ad(np.eye(3)[i]), ref, atol=1e-14)


@pytest.mark.parametrize("i,j,value", [(0, 0, 8.0), (1, 2, 4.0), (1, 1, 0.0), (0, 1, 0.0)])
def test_sl2_killing_values(i, j, value):
    alg = build_algebra({"family": "sl", "n": 2})
    ads = (AD_H, AD_E, AD_F)
    assert killing_form(alg.basis_element(i), alg.basis_element(j)) == pytest.approx(
        np.trace(ads[i] @ ads[j]), abs=1e-10)
    assert killing_form(alg.basis_element(i), alg.basis_element(j)) == pytest.approx(value,
                                                                                    abs=1e-10)


def test_bracket_of_elements():
    alg = build_algebra({"family": "sl", "n": 2})
    h, e, f = (alg.basis_element(i) for i in range(3))
    np.testing.assert_allclose(bracket(h, e).coords, 2 * e.coords)
    np.testing.assert_allclose(bracket(e, f).coords, h.coords)


@pytest.mark.parametrize("spec,dim", [({"family": "sl", "n": 2}, 3), ({"family": "sl", "n": 3}, 8),
                                      ({"family": "so", "n": 3}, 6), ({"family": "so", "n": 4}, 10)])
def test_dimensions_and_identities(spec, dim):
    alg = build_algebra(spec)
    assert alg.dim == dim
    assert alg.jacobi_residual() <= 1e-10
    assert alg.commutator_residual() <= 1e-12
    assert algebra_label(alg).startswith(spec["family"])


@pytest.mark.parametrize("n", [2, 3, 4])
def test_killing_trace_formula_sl(n, rng):
    alg = build_algebra({"family": "sl", "n": n})
    x, y = rng.normal(size=(2, alg.dim))
    mx, my = alg.matrix(x), alg.matrix(y)
    assert alg.killing_coords(x, y) == pytest.approx(2 * n * np.trace(mx @ my), rel=1e-12)


@settings(max_examples=60, deadline=None)
@given(vec3, vec3, vec3)
def test_killing_ad_invariant_and_symmetric(x, y, z):
    alg = build_algebra({"family": "sl", "n": 2})
    scale = 1 + np.abs(x).max() * np.abs(y).max() * (1 + np.abs(z).max())
    assert abs(alg.killing_coords(x, y) - alg.killing_coords(y, x)) <= 1e-12 * scale
    lhs = alg.killing_coords(alg.bracket_coords(z, x), y) + alg.killing_coords(
        x, alg.bracket_coords(z, y))
    assert abs(lhs) <= 1e-10 * scale


@settings(max_examples=40, deadline=None)
@given(vec3, vec3, vec3)
def test_jacobi_on_random_elements(x, y, z):
    alg = build_algebra({"family": "sl", "n": 2})
    b = alg.bracket_coords
    total = b(x, b(y, z)) + b(y, b(z, x)) + b(z, b(x, y))
    assert np.abs(total).max() <= 1e-10 * (1 + np.abs([x, y, z]).max() ** 3)


def test_bad_family_rejected():
    with pytest.raises(ValueError):
        build_algebra({"family": "gl", "n": 2})
    with pytest.raises(ValueError):
        build_algebra({"family": "sl", "n": 1})


def test_mixing_algebras_rejected():
    a = build_algebra({"family": "sl", "n": 2})
    b = build_algebra({"family": "sl", "n": 3})
    with pytest.raises(Exception):
        killing_form(a.basis_element(0), b.basis_element(0))
