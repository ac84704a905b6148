import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from symspace import verify
from symspace.errors import NoDecay, SupportLeak, ZeroDenominator
from symspace.fields import GaussianField, GaussianSum, random_field
from symspace.quadrature import QuadratureGrid
from symspace.solvable import ScaledField, TranslatedField, divergence
from symspace.suite import _image_box, _lab_grid, _lab_pair


def _zero_sum(m):
    return GaussianSum(np.zeros((1, m)), np.ones((1, m)), [0.0])


# -- divergence-free fields ---------------------------------------------------

def test_ode_matches_stream_on_sl2(sl2, rng):
    ch = sl2.chart
    stream = verify.make_divfree_field({"n_pairs": 1, "solver": "analytic"}, ch, rng)
    ode = verify.DivFreeField(ch, stream, stream.support_box()[0])
    x = QuadratureGrid(stream.support_box(5.0), order=10).nodes
    f_ode, f_st = ode.values(x), stream.values(x)
    assert np.abs(f_ode[:, 0] - f_st[:, 0]).max() <= 1e-8 * np.abs(f_st).max()
    np.testing.assert_array_equal(f_ode[:, 1], f_st[:, 1])


@pytest.mark.parametrize("name", ["sl2", "sl3", "so31"])
def test_stream_fields_are_divergence_free(name, request, rng):
    ch = request.getfixturevalue(name).chart
    f = verify.make_divfree_field({"solver": "analytic", "n_pairs": 2 if ch.m > 2 else 1},
                                  ch, rng)
    x = rng.normal(scale=0.5, size=(40, ch.m))
    scale = np.linalg.norm(f.frame_jac(x, ch), axis=(-2, -1)).max()
    assert np.abs(divergence(f, ch, x)).max() <= 1e-8 * (1 + scale)


def test_zero_free_data_gives_zero_field(sl3, rng):
    f = verify.make_divfree_field({"n_pairs": 1, "amp_scale": 0.0, "solver": "analytic"},
                                  sl3.chart, rng)
    x = rng.normal(size=(20, 5))
    assert np.all(f.values(x) == 0.0)


def test_free_data_without_decay_raises(sl2):
    # a single positive bump has nonzero weighted mass, so f^1 cannot vanish
    comp = {"centers": [[0.0, 0.0]], "widths": [[0.5, 0.5]], "amps": [1.0]}
    with pytest.raises(NoDecay):
        verify.make_divfree_field({"mode": "free", "components": [comp]}, sl2.chart)


def test_unknown_modes(sl2):
    with pytest.raises(ValueError):
        verify.make_divfree_field({"mode": "curl"}, sl2.chart)
    with pytest.raises(ValueError):
        verify.make_divfree_field({"mode": "free", "solver": "analytic"}, sl2.chart)


# -- pairing ratio ------------------------------------------------------------

@pytest.fixture(scope="module")
def sl2_pair(sl2):
    rng = np.random.default_rng(11)
    f, phi, _ = _lab_pair(sl2.chart, rng, {}, "analytic")
    return f, phi, _lab_grid(sl2.chart, f, phi, 24, 2)


def test_pairing_bilinear_and_homogeneous(sl2, sl2_pair):
    f, phi, g = sl2_pair
    ch = sl2.chart
    p0, l0, g0 = verify.pairing_terms(f, phi, ch, g)
    p1, l1, g1 = verify.pairing_terms(ScaledField(f, 2.0), ScaledField(phi, -3.0), ch, g)
    assert p1 == pytest.approx(-6.0 * p0, rel=1e-12)
    assert l1 == pytest.approx(2.0 * l0, rel=1e-12)
    assert g1 == pytest.approx(3.0 * g0, rel=1e-12)
    assert verify.bb_ratio(ScaledField(f, 7.0), ScaledField(phi, 0.1), ch, g) == \
        pytest.approx(verify.bb_ratio(f, phi, ch, g), rel=1e-12)


def test_pairing_zero_phi_raises(sl2, sl2_pair):
    f, _, g = sl2_pair
    with pytest.raises(ZeroDenominator):
        verify.bb_ratio(f, GaussianField([_zero_sum(2)] * 2), sl2.chart, g)


def test_pairing_translation_invariance_sl2(sl2, sl2_pair):
    f, phi, g = sl2_pair
    ch = sl2.chart
    r0 = verify.bb_ratio(f, phi, ch, g)
    for s0 in ([0.8, -1.1], [-0.4, 2.0]):
        tg = QuadratureGrid(_image_box(ch, s0, g.box), g.order, g.panels, "dV_via_NA", ch)
        r1 = verify.bb_ratio(TranslatedField(f, s0, ch), TranslatedField(phi, s0, ch), ch, tg)
        assert r1 == pytest.approx(r0, rel=1e-6)


def test_pairing_error_estimate(sl2, sl2_pair):
    f, phi, g = sl2_pair
    t = verify.bb_ratio_terms(f, phi, sl2.chart, g, with_error=True)
    assert 0 <= t["ratio_error"] < 1e-3 * t["ratio"]
    assert t["divergence_residual"] <= verify.DIV_TOL


# -- codimension-one pairing ------------------------------------------------------

def _codim_setup(chart, rng):
    kw = {"center_scale": 0.2, "width_range": (0.8, 1.0)}
    f = verify.make_divfree_field({"pairs": [(0, 1)], "solver": "analytic", **kw}, chart, rng)
    phi = random_field(rng, chart.m, **kw)
    return f, phi


def test_codim1_zero_and_homogeneous(sl3):
    rng = np.random.default_rng(5)
    ch = sl3.chart
    f, phi = _codim_setup(ch, rng)
    fbox = f.support_box()
    box = np.stack([np.minimum(fbox[:, 0], phi.support_box()[:, 0]),
                    np.maximum(fbox[:, 1], phi.support_box()[:, 1])], axis=1)
    sl, full = QuadratureGrid(box[1:], order=14), QuadratureGrid(fbox, order=10)
    sob = QuadratureGrid(phi.support_box(7.0)[1:], order=14)
    base = verify.codim1_terms(f, phi, ch, sl, full, sob)
    assert np.isfinite(base["ratio"]) and base["ratio"] > 0
    scaled = verify.codim1_terms(ScaledField(f, 2.5), phi, ch, sl, full, sob)
    assert scaled["ratio"] == pytest.approx(base["ratio"], rel=1e-10)
    zero = verify.make_divfree_field({"n_pairs": 1, "amp_scale": 0.0, "solver": "analytic"},
                                     ch, rng)
    z = verify.codim1_terms(zero, phi, ch, sl, full, sob)
    assert z["lhs"] == 0.0 and z["rhs"] == 0.0


def test_sobolev_norm_two_routes(sl3):
    # narrow in t' so that the a'n box stays compact
    ch = sl3.chart
    phi = GaussianField([GaussianSum([[0.0, 0.05, 0.1, -0.1, 0.0]],
                                     [[0.5, 0.08, 0.4, 0.4, 0.4]], [1.0 + k]) for k in range(5)])
    na_box = phi.support_box(9.0)[1:]
    na = verify.sobolev_norm_aprime_n(phi, ch, QuadratureGrid(na_box, order=24, panels=2))
    a_scale = np.exp(np.abs(ch.alpha).max() * np.abs(na_box[0]).max())
    an_box = na_box.copy()
    an_box[1:] *= a_scale
    an = verify.sobolev_norm_aprime_n(phi, ch, QuadratureGrid(an_box, order=24, panels=2),
                                      an_coordinates=True)
    assert an == pytest.approx(na, rel=2e-6)


def test_sobolev_norm_leak(sl3):
    phi = random_field(np.random.default_rng(2), 5)
    with pytest.raises(SupportLeak):
        verify.sobolev_norm_aprime_n(phi, sl3.chart, QuadratureGrid(np.tile([-0.5, 0.5], (4, 1)),
                                                                    order=4))


# -- Hardy ---------------------------------------------------------------------------

hardy_sums = st.builds(
    lambda c, w, a: GaussianSum(np.array(c)[:, None], np.array(w)[:, None], a),
    st.lists(st.floats(-1.5, 1.5), min_size=2, max_size=2),
    st.lists(st.floats(0.15, 1.2), min_size=2, max_size=2),
    st.lists(st.floats(-5, 5), min_size=2, max_size=2),
)


@settings(max_examples=60, deadline=None)
@given(hardy_sums, st.sampled_from([1.0, 2.0, 3.0, 5.0]), st.sampled_from([0.5, 1.0, 2.0]))
def test_line_hardy_inequality(h, p, lam):
    lhs, rhs = verify.hardy_check(h, lam, p, QuadratureGrid(h.support_box(8.5), 48, 6))
    assert lhs <= rhs * (1 + 1e-8)


def test_line_hardy_zero_and_errors():
    z = GaussianSum([[0.0]], [[1.0]], [0.0])
    g = QuadratureGrid(z.support_box(8.5), 24)
    assert verify.hardy_check(z, 1.0, 2.0, g) == (0.0, 0.0)
    with pytest.raises(ValueError):
        verify.hardy_check(z, 0.0, 2.0, g)
    with pytest.raises(ValueError):
        verify.hardy_check(z, 1.0, 0.5, g)
    h = GaussianSum([[0.0]], [[1.0]], [1.0])
    with pytest.raises(SupportLeak):
        verify.hardy_check(h, 1.0, 2.0, QuadratureGrid([[-1.0, 1.0]], 24))


def test_line_hardy_against_adaptive_quadrature():
    # h = t e^{-t^2/2} against e^{-t}, checked with adaptive quadrature
    from scipy.integrate import quad

    class H:
        def __call__(self, t):
            t = np.asarray(t)[..., 0]
            return t * np.exp(-t * t / 2)

    g = QuadratureGrid([[-12.0, 12.0]], 60, 4)
    lhs, rhs = verify.hardy_check(H(), 1.0, 2.0, g)
    opts = {"epsabs": 0, "epsrel": 1e-12, "limit": 200}
    ref_l = quad(lambda t: (t * np.exp(-t * t / 2)) ** 2 * np.exp(-t), -12, 12, **opts)[0]
    ref_r = 4 * quad(lambda t: ((1 - t * t) * np.exp(-t * t / 2)) ** 2 * np.exp(-t),
                     -12, 12, **opts)[0]
    assert lhs == pytest.approx(ref_l, rel=1e-10)
    assert rhs == pytest.approx(ref_r, rel=1e-6)


def test_manifold_hardy_sl2(sl2, rng):
    ch = sl2.chart
    for _ in range(3):
        phi = random_field(rng, 2, center_scale=0.4, width_range=(0.4, 0.8))
        g = QuadratureGrid(phi.support_box(6.0), 24, 2, "dV_via_NA", ch)
        t = verify.manifold_hardy_terms(phi, 2.0, ch, g)
        assert t["rho_h"] == pytest.approx(math.sqrt(2) / 4, abs=1e-12)
        assert t["c_p"] == pytest.approx(2 * math.sqrt(2), abs=1e-12)
        assert t["ratio"] <= 1.0 + 1e-6


# -- sphere average and directions ------------------------------------------------

@pytest.mark.parametrize("m", [2, 5])
def test_sphere_average(m):
    rng = np.random.default_rng(m)
    u = rng.normal(size=m)
    u /= np.linalg.norm(u)
    mc, cf, se = verify.sphere_average_check(u, u, 100_000, rng)
    assert cf == pytest.approx(1.0 / m, abs=1e-15)
    assert abs(mc - cf) <= 4 * se
    w = rng.normal(size=m)
    w -= (w @ u) * u
    mc, cf, se = verify.sphere_average_check(u, w, 100_000, rng)
    assert cf == pytest.approx(0.0, abs=1e-15)
    assert abs(mc) <= 4 * se
    with pytest.raises(ValueError):
        verify.sphere_average_check(u, u, 100)


def test_sample_directions_sl3(sl3):
    iw = sl3.iw
    cd = iw.cartan
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        dirs = verify.sample_directions(iw, 12, 4, np.random.default_rng(0))
    assert len(dirs) == 16
    assert [t for _, t in dirs].count("sobol") == 12
    for v, _ in dirs:
        assert v @ cd.g0_gram @ v == pytest.approx(1.0, abs=1e-10)
        np.testing.assert_allclose(cd.p_part(v), v, atol=1e-12)
    pb = verify.p_orthonormal_basis(cd)
    np.testing.assert_allclose(pb @ cd.g0_gram @ pb.T, np.eye(5), atol=1e-10)
