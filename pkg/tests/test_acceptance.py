"""Acceptance criteria 1-10.

Each test records one ``PASS``/``FAIL`` line, printed in the pytest terminal
summary.  Run ``python tests/test_acceptance.py`` to print the lines without
pytest.
"""

import time

import numpy as np
import pytest

from symspace.solvable import connection_coefficients
from symspace.suite import ExperimentSpec, run_section

try:
    from conftest import ACCEPTANCE_LINES
except ImportError:  # pragma: no cover - imported outside the tests directory
    ACCEPTANCE_LINES = {}

SL2 = {"family": "sl", "n": 2}
SL3 = {"family": "sl", "n": 3}
SO31 = {"family": "so", "n": 3}
ALL = (SL2, SL3, SO31)

_cache = {}


def section(alg, name):
    """Rows and runtime of one suite section (default seed, cached)."""
    key = (alg["family"], alg["n"], name)
    if key not in _cache:
        spec = ExperimentSpec(algebras=[alg], sections=[name])
        t0 = time.perf_counter()
        rows, _ = run_section(spec.to_json(), 0, name)
        _cache[key] = ({r.check: r for r in rows}, time.perf_counter() - t0)
    return _cache[key]


class Criterion:
    """Collects sub-checks; a criterion passes when every one holds."""

    def __init__(self, number, title):
        self.number, self.title = number, title
        self.failures, self.notes = [], []

    def require(self, ok, what):
        if not ok:
            self.failures.append(what)

    def rows(self, rows, *names):
        for n in names:
            r = rows.get(n)
            self.require(r is not None and r.passed is True,
                         f"{n}: {'missing' if r is None else r.measured}")

    def runtime(self, seconds, limit):
        self.notes.append(f"{seconds:.1f}s < {limit:g}s")
        self.require(seconds < limit, f"runtime {seconds:.1f}s >= {limit}s")

    def finish(self):
        ok = not self.failures
        note = "; ".join(self.notes)
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {self.number:2d}: {self.title}" + \
            (f" ({note})" if note else "")
        if not ok:
            line += " -- " + "; ".join(self.failures)
        ACCEPTANCE_LINES[self.number] = line
        print(line)
        return ok, line


def criterion_1():
    c = Criterion(1, "sl(2) structure: Killing values, Cartan dims, single root")
    lie, t1 = section(SL2, "lie")
    car, t2 = section(SL2, "cartan")
    c.rows(lie, "lie.killing_HH", "lie.killing_EF", "lie.killing_EE",
           "lie.killing_HH_value", "lie.killing_EF_value", "lie.killing_EE_value")
    for n, v in (("HH", 8.0), ("EF", 4.0), ("EE", 0.0)):
        r = lie.get(f"lie.killing_{n}_value")
        c.require(r is not None and r.measured["expected"] == v
                  and r.measured["error"] <= 1e-10, f"B({n}) != {v}")
    c.rows(car, "cartan.dim_k", "cartan.dim_p", "cartan.positive_roots", "cartan.sl2_root")
    c.require(car["cartan.dim_k"].measured["value"] == 1, "dim k != 1")
    c.require(car["cartan.dim_p"].measured["value"] == 2, "dim p != 2")
    c.runtime(t1 + t2, 1.0)
    return c.finish()


def criterion_2():
    c = Criterion(2, "sl(3) structure: rank, roots, gradings, frame")
    lie, t1 = section(SL3, "lie")
    car, t2 = section(SL3, "cartan")
    c.rows(car, "cartan.rank", "cartan.positive_roots", "cartan.gradings_sl3", "cartan.dim_n",
           "cartan.m", "cartan.root_bracket", "cartan.frame_gram", "cartan.frame_orthogonality",
           "cartan.frame_root_spaces")
    for name, v in (("rank", 2), ("positive_roots", 3), ("dim_n", 3), ("m", 5)):
        c.require(car[f"cartan.{name}"].measured["value"] == v, f"{name} != {v}")
    c.require(sorted(car["cartan.gradings"].measured["gradings"]) == [1, 1, 2], "gradings")
    c.require(car["cartan.root_bracket"].measured["value"] <= 1e-9, "bracket law residual")
    for n in ("frame_gram", "frame_orthogonality"):
        c.require(car[f"cartan.{n}"].measured["value"] <= 1e-10, n)
    c.runtime(t1 + t2, 5.0)
    return c.finish()


def criterion_3():
    c = Criterion(3, "divergence formula vs flow oracle on 50 fields, constant fields")
    total = 0.0
    for alg in ALL:
        geo, t = section(alg, "geometry")
        total += t
        c.rows(geo, "geometry.divergence_oracle", "geometry.div_H", "geometry.div_Y")
        r = geo["geometry.divergence_oracle"]
        c.require(r.inputs["fields"] == 50 and r.measured["max_abs_difference"] <= 1e-6,
                  f"{r.algebra} oracle")
    c.rows(section(SL2, "geometry")[0], "geometry.div_H_sl2")
    c.runtime(total, 60.0)
    return c.finish()


def criterion_4():
    c = Criterion(4, "a-directions parallelise the frame (Koszul)")
    for alg in ALL:
        geo, _ = section(alg, "geometry")
        c.rows(geo, "geometry.parallel_frame")
        c.require(geo["geometry.parallel_frame"].inputs["samples"] == 10, "sample size")
    # runtime of the check itself, on every algebra
    from conftest import Space
    frames = [Space(a).frame for a in ALL]
    t0 = time.perf_counter()
    rng = np.random.default_rng(4)
    for fr in frames:
        gam = connection_coefficients(fr)
        hs = rng.normal(size=(10, fr.r))
        c.require(np.abs(np.einsum("si,ibc->sbc", hs, gam[:fr.r])).max() <= 1e-12, "Koszul")
    c.runtime(time.perf_counter() - t0, 1.0)
    return c.finish()


def criterion_5():
    c = Criterion(5, "integration formulas: Jacobian, NA vs AN volume, integration by parts")
    total = 0.0
    for alg in ALL:
        q, t = section(alg, "quadrature")
        total += t
        c.rows(q, "quadrature.jacobian", "quadrature.na_vs_an", "quadrature.ibp_N")
        c.require(q["quadrature.jacobian"].inputs["samples"] == 20, "jacobian samples")
    c.rows(section(SL3, "quadrature")[0], "quadrature.ibp_A")
    c.runtime(total, 120.0)
    return c.finish()


def criterion_6():
    c = Criterion(6, "BCH polynomials and flow vs group multiplication")
    for alg in ALL:
        geo, _ = section(alg, "geometry")
        c.rows(geo, "geometry.bch_center", "geometry.bch_self_variable",
               "geometry.bch_homogeneity", "geometry.frame_flow", "geometry.group_law")
        c.require(geo["geometry.bch_center"].measured["value"] == 0, "p(0) not exact")
        c.require(geo["geometry.frame_flow"].measured["value"] <= 1e-8, "flow")
    return c.finish()


def criterion_7():
    c = Criterion(7, "splitting exponents as one-sided bounds, d = 1 and d = 4")
    total = 0.0
    names = ("sup_phi1", "sup_phi2", "sup_grad_phi2")
    for alg, d in ((SL2, 1), (SL3, 4)):
        sp, t = section(alg, "splitting")
        total += t
        c.rows(sp, "splitting.exactness", "splitting.cases",
               *[f"splitting.slope_{n}" for n in names],
               *[f"splitting.one_sided_{n}" for n in names])
        lam = np.asarray(sp["splitting.exactness"].inputs["lambdas"], dtype=float)
        c.require(sp["splitting.exactness"].inputs["d"] == d, f"d != {d}")
        c.require(np.log10(lam.max() / lam.min()) >= 2 - 1e-9, "sweep spans < 2 decades")
        p = sp["splitting.exactness"].inputs["p"]
        expect = (1 - d / p, -d / p, -d / p)
        for n, e in zip(names, expect):
            m = sp[f"splitting.slope_{n}"].measured
            c.require(abs(m["exponent"] - e) < 1e-12 and abs(m["slope"] - e) <= 0.1,
                      f"d={d} {n} slope {m['slope']:.3f}")
        c.notes.append(f"d={d} slopes " + "/".join(
            f"{sp[f'splitting.slope_{n}'].measured['slope']:.3f}" for n in names))
    c.runtime(total, 120.0)
    return c.finish()


def criterion_8():
    c = Criterion(8, "Hardy inequality on the line and on S")
    for alg, m in zip(ALL, (2, 5, 3)):
        h, _ = section(alg, "hardy")
        c.rows(h, "hardy.line", "hardy.zero", "hardy.manifold")
        line = h["hardy.line"]
        c.require(line.inputs["functions"] == 100, "100 functions")
        c.require(set(line.inputs["p"]) == {1.0, 2.0, float(m)}, "p in {1, 2, m}")
        c.require(list(line.inputs["lambda"]) == [0.5, 1.0, 2.0], "lambdas")
        c.require(h["hardy.manifold"].inputs["fields"] == 20, "20 fields")
    c.rows(section(SL2, "hardy")[0], "hardy.rho_sl2", "hardy.constant_sl2")
    return c.finish()


def criterion_9():
    c = Criterion(9, "sphere average 1/m by Monte Carlo, m = 2 and 5")
    for alg, m in ((SL2, 2), (SL3, 5)):
        s, _ = section(alg, "sphere")
        c.rows(s, "sphere.closed_form", "sphere.unit", "sphere.orthogonal", "sphere.random_pairs")
        u = s["sphere.unit"]
        c.require(u.inputs["samples"] == 100_000 and u.inputs["m"] == m, "sample size")
        c.notes.append(f"m={m} z={u.measured['z']:+.2f}")
    return c.finish()


def criterion_10():
    c = Criterion(10, "pairing lab: sl(2) stabilisation and invariance, sl(3) codim-1 spread")
    p2, t2 = section(SL2, "pairing")
    p3, t3 = section(SL3, "pairing")
    c.rows(p2, "pairing.bb_ratio_family", "pairing.bb_ratio_stabilizes", "pairing.bb_translation")
    fam = p2["pairing.bb_ratio_family"]
    c.require(len(fam.measured["ratios"]) == 200 and not fam.measured["failures"], "200 pairs")
    c.require(p2["pairing.bb_translation"].tolerance == 1e-6, "translation tolerance")
    cf = p3.get("pairing.codim1_family")
    c.rows(p3, "pairing.codim1_family")
    if cf is not None:
        tags = cf.measured["tags"]
        c.require(len(cf.measured["ratios"]) == 16 and "wall" in tags, "16 directions with walls")
        sp = cf.measured["spread"]
        c.notes.append(f"sl2 max {fam.measured['max']:.3g}, growth "
                       f"{p2['pairing.bb_ratio_stabilizes'].measured['final_half_growth']:.3f}; "
                       f"sl3 codim-1 spread {sp.get('min', float('nan')):.2g}.."
                       f"{sp.get('max', float('nan')):.2g}")
    c.runtime(t2 + t3, 600.0)
    return c.finish()


CRITERIA = [criterion_1, criterion_2, criterion_3, criterion_4, criterion_5, criterion_6,
            criterion_7, criterion_8, criterion_9, criterion_10]


@pytest.mark.parametrize("crit", CRITERIA, ids=[f"criterion_{k}" for k in range(1, 11)])
def test_acceptance(crit):
    ok, line = crit()
    assert ok, line


if __name__ == "__main__":
    import sys
    results = [crit()[0] for crit in CRITERIA]
    sys.exit(0 if all(results) else 1)
