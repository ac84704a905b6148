import numpy as np
import pytest

from symspace.cartan import (abelian_residual, adapted_structure, cartan_split,
                             completeness_defect, frame_orthogonality_residual,
                             frame_root_residual, good_frame, grading_residual, iwasawa,
                             max_rho_direction, root_bracket_residual, weyl_symmetric)
from symspace.errors import H1NotInA, H1NotUnit
from symspace.lie_core import build_algebra
from symspace.verify import p_orthonormal_basis


@pytest.mark.parametrize("n", [2, 3, 4])
def test_sl_dimensions(n):
    iw = iwasawa(build_algebra({"family": "sl", "n": n}), rng=np.random.default_rng(1))
    cd = iw.cartan
    assert len(cd.k_basis) == n * (n - 1) // 2
    assert len(cd.p_basis) == n * (n + 1) // 2 - 1
    assert iw.rank == n - 1
    assert len(iw.positive) == n * (n - 1) // 2
    assert iw.m == n * (n + 1) // 2 - 1
    assert completeness_defect(iw) == 0


@pytest.mark.parametrize("n", [2, 3, 4])
def test_so_dimensions(n):
    iw = iwasawa(build_algebra({"family": "so", "n": n}), rng=np.random.default_rng(1))
    assert len(iw.cartan.p_basis) == n
    assert iw.rank == 1
    assert len(iw.positive) == 1
    assert iw.positive[0].multiplicity == n - 1


def test_sl2_root(sl2):
    h = np.eye(3)[0]
    (root,) = sl2.iw.positive
    assert abs(abs(float(sl2.iw.evaluate(root.values, h))) - 2.0) <= 1e-10


def test_sl3_gradings_and_residuals(sl3):
    iw = sl3.iw
    assert sorted(iw.grading) == [1, 1, 2]
    assert iw.n_basis.shape[0] == 3
    assert root_bracket_residual(iw) <= 1e-9
    assert grading_residual(iw) <= 1e-9
    assert abelian_residual(iw) <= 1e-12
    assert weyl_symmetric(iw)


@pytest.mark.parametrize("name", ["sl2", "sl3", "so31"])
def test_good_frame(name, request):
    sp = request.getfixturevalue(name)
    fr = sp.frame
    np.testing.assert_allclose(fr.gram(), np.eye(fr.m), atol=1e-10)
    assert frame_orthogonality_residual(fr) <= 1e-10
    assert frame_root_residual(fr) <= 1e-10
    assert sp.iw.cartan.automorphism_residual() <= 1e-12
    assert np.all(np.linalg.eigvalsh(sp.iw.cartan.b_theta) > 0)


def test_rho_is_half_sum_with_multiplicity(so31):
    iw = so31.iw
    total = sum(r.multiplicity * r.values for r in iw.positive)
    np.testing.assert_allclose(iw.rho, 0.5 * total, atol=1e-12)


def test_adapted_structure_puts_v0_first(sl3, rng):
    pb = p_orthonormal_basis(sl3.iw.cartan)
    v0 = rng.normal(size=len(pb)) @ pb
    v0 /= np.sqrt(v0 @ sl3.iw.cartan.g0_gram @ v0)
    iw, fr = adapted_structure(sl3.alg, v0, rng)
    np.testing.assert_allclose(fr.H[0], v0, atol=1e-10)
    np.testing.assert_allclose(fr.gram(), np.eye(fr.m), atol=1e-10)
    assert root_bracket_residual(iw) <= 1e-9


def test_adapted_structure_rejects_non_unit(sl3):
    v0 = p_orthonormal_basis(sl3.iw.cartan)[0] * 2.0
    with pytest.raises(H1NotUnit):
        adapted_structure(sl3.alg, v0)


def test_good_frame_rejects_h1_outside_a(sl3):
    y = sl3.iw.n_basis[0]
    with pytest.raises(H1NotInA):
        good_frame(sl3.iw, H1=y)


def test_max_rho_direction_sl2(sl2, rng):
    h, val = max_rho_direction(sl2.iw, 200, rng)
    assert val == pytest.approx(np.sqrt(2) / 4, abs=1e-12)
    assert h @ sl2.iw.cartan.g0_gram @ h == pytest.approx(1.0)


def test_cartan_split_projections(sl3, rng):
    cd = cartan_split(sl3.alg)
    x = rng.normal(size=sl3.alg.dim)
    np.testing.assert_allclose(cd.k_part(x) + cd.p_part(x), x, atol=1e-12)
    np.testing.assert_allclose(cd.theta @ cd.p_part(x), -cd.p_part(x), atol=1e-12)
