"""Left-invariant geometry of S = NA in exponential coordinates.

A point of S is stored as a vector ``x = (t, y)`` of length m with
``s = exp(sum y^j Y_j) exp(sum t^i H_i)``.  In these coordinates

* ``H_i = d/dt^i``,
* ``Y_j = exp(alpha_j(t)) sum_l p_jl(y) d/dy^l``,
* the Riemannian volume is ``exp(-2 rho(t)) dt dy``,

where the polynomials ``p_jl`` come from the nilpotent exponential
``log(exp(y.Y) exp(s Y_j))`` and are built here from the series
``z / (1 - exp(-z))`` applied to ``ad(y.Y)``.

Vector fields are stored by their coefficients in the frame X_1..X_m.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .cartan import GoodFrame
from .errors import FlowEscape, NilpotencyOverflow, NonDifferentiable, NotInS

GRADING_CAP = 10
FD_STEP = 1e-4


def dexp_series(order: int) -> list[Fraction]:
    """Taylor coefficients of ``z / (1 - exp(-z))`` up to ``z**order``."""
    # (1 - e^{-z}) / z = sum_n (-1)^n z^n / (n+1)!
    a = []
    fact = 1
    for n in range(order + 1):
        fact *= n + 1
        a.append(Fraction((-1) ** n, fact))
    b = [Fraction(0)] * (order + 1)
    for n in range(order + 1):
        acc = Fraction(int(n == 0))
        for k in range(1, n + 1):
            acc -= a[k] * b[n - k]
        b[n] = acc / a[0]
    return b


@dataclass
class PolyTable:
    """Matrix of polynomials ``P[j, l](y) = sum_t coef[t, j, l] * y**exps[t]``."""

    exps: np.ndarray   # (T, n) int
    coef: np.ndarray   # (T, n, n)

    def monomials(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        out = np.ones(y.shape[:-1] + (len(self.exps),))
        for k in range(self.exps.shape[1]):
            e = self.exps[:, k]
            if e.any():
                out = out * y[..., k:k + 1] ** e
        return out

    def __call__(self, y) -> np.ndarray:
        return np.einsum("...t,tjl->...jl", self.monomials(y), self.coef)

    def derivative(self, k: int) -> "PolyTable":
        mask = self.exps[:, k] > 0
        exps = self.exps[mask].copy()
        coef = self.coef[mask] * self.exps[mask, k][:, None, None]
        exps[:, k] -= 1
        if not mask.any():
            n = self.exps.shape[1]
            return PolyTable(np.zeros((1, n), dtype=int), np.zeros((1, n, n)))
        return PolyTable(exps, coef)

    def at_zero(self) -> np.ndarray:
        zero = np.all(self.exps == 0, axis=1)
        return self.coef[zero].sum(axis=0)

    def to_json(self) -> list:
        terms = []
        for e, c in zip(self.exps, self.coef):
            for j, l in zip(*np.nonzero(c)):
                terms.append({"j": int(j), "l": int(l), "exponent": e.tolist(),
                              "coefficient": float(c[j, l])})
        return terms


def _nilpotent_exp(n_mats, q):
    out = np.broadcast_to(np.eye(q), n_mats.shape).copy()
    term = out.copy()
    for k in range(1, q):
        term = term @ n_mats / k
        out = out + term
    return out


def _unipotent_log(u_mats, q):
    d = u_mats - np.eye(q)
    out = np.zeros_like(d)
    term = np.broadcast_to(np.eye(q), d.shape).copy()
    for k in range(1, q):
        term = term @ d
        out = out + ((-1) ** (k + 1) / k) * term
    return out


class SChart:
    """Global exponential coordinates on S (or on a subgroup A'N).

    Parameters
    ----------
    frame : GoodFrame
    h_index : sequence of int, optional
        Which H_i of the frame are kept.  ``range(1, r)`` gives the
        codimension-one subgroup S' = A'N used by the splitting.
    """

    def __init__(self, frame: GoodFrame, h_index=None):
        self.frame = frame
        alg = frame.iw.algebra
        self.h_index = list(range(frame.r)) if h_index is None else list(h_index)
        self.H = frame.H[self.h_index]
        self.Y = frame.Y
        self.r = len(self.h_index)
        self.n = frame.Y.shape[0]
        self.m = self.r + self.n
        self.alpha = frame.alpha[:, self.h_index] if self.n else np.zeros((0, self.r))
        self.rho = frame.rho[self.h_index]
        self.grading = frame.grading
        if self.n and self.grading.max() > GRADING_CAP:
            raise NilpotencyOverflow(f"grading depth {self.grading.max()} exceeds {GRADING_CAP}")
        self.q = alg.size
        self.H_mats = alg.matrix(self.H)
        self.Y_mats = alg.matrix(self.Y)
        self._y_pinv = np.linalg.pinv(self.Y_mats.reshape(self.n, -1)) if self.n else None
        self.n_struct = self._nilpotent_structure()
        self.poly = self._bch_polynomials()
        self.dpoly = [self.poly.derivative(k) for k in range(self.n)]
        self.product_poly = self._product_polynomials()
        # H_i are commuting symmetric matrices: diagonalise them together once
        if self.r:
            weights = np.sqrt(np.arange(2, self.r + 2, dtype=float))
            _, q_mat = np.linalg.eigh(np.tensordot(weights, self.H_mats, axes=1))
            rot = np.einsum("ba,ibc,cd->iad", q_mat, self.H_mats, q_mat)
            self._h_eig = np.einsum("iaa->ia", rot)
            off = rot - np.einsum("ia,ab->iab", self._h_eig, np.eye(self.q))
            if np.abs(off).max() > 1e-10 * max(1.0, np.abs(rot).max()):
                raise NotInS("a is not simultaneously diagonalisable")
            self._h_vec = q_mat

    # -- algebraic data -----------------------------------------------------
    def _nilpotent_structure(self) -> np.ndarray:
        """``N[k]`` is ad(Y_k) on n in Y coordinates (column l = [Y_k, Y_l])."""
        alg = self.frame.iw.algebra
        n = self.n
        if n == 0:
            return np.zeros((0, 0, 0))
        br = alg.bracket_coords(self.Y[:, None, :], self.Y[None, :, :])  # (k, l, dim)
        g0 = self.frame.iw.cartan.g0_gram
        coords = br @ g0 @ self.Y.T  # Y is g0-orthonormal
        resid = np.abs(coords @ self.Y - br).max()
        if resid > 1e-9 * max(1.0, np.abs(br).max()):
            raise NotInS("n is not closed under the bracket")
        d = self.grading
        allowed = (d[:, None, None] + d[None, :, None]) == d[None, None, :]
        coords = np.where(allowed, coords, 0.0)
        return coords.transpose(0, 2, 1)

    def _bch_polynomials(self) -> PolyTable:
        n = self.n
        if n == 0:
            return PolyTable(np.zeros((1, 0), dtype=int), np.zeros((1, 0, 0)))
        depth = int(self.grading.max())
        coeffs = dexp_series(depth)
        table = {}
        # term[j] maps exponent tuple -> vector; start with Y_j itself
        current = {(0,) * n: np.eye(n)}  # value[:, j] is the vector for Y_j
        for power in range(depth):
            c = float(coeffs[power])
            for mono, vec in current.items():
                table[mono] = table.get(mono, 0.0) + c * vec
            nxt = {}
            for mono, vec in current.items():
                for k in range(n):
                    new = self.n_struct[k] @ vec
                    if not np.any(new):
                        continue
                    key = tuple(e + (i == k) for i, e in enumerate(mono))
                    nxt[key] = nxt.get(key, 0.0) + new
            current = nxt
            if not current:
                break
        else:
            if any(np.any(v) for v in current.values()):
                raise NilpotencyOverflow("ad(y.Y) not nilpotent within the grading depth")
        exps = np.array(list(table.keys()), dtype=int)
        # table value has columns indexed by j and rows by l; store P[j, l]
        coef = np.array([v.T for v in table.values()])
        scale = max(1.0, np.abs(coef).max())
        coef[np.abs(coef) < 1e-15 * scale] = 0.0
        return PolyTable(exps, coef)

    def _product_polynomials(self, max_terms=2000, seed=12345):
        """Polynomial form of ``(a, b) -> log(exp(a.Y) exp(b.Y))``.

        Each output coordinate k is weighted-homogeneous of degree
        ``grading[k]`` in the concatenated variables ``(a, b)``.  The
        coefficients are fitted to the matrix product at random points and
        certified on fresh points; ``None`` means the matrix route is used.
        """
        n = self.n
        if n == 0:
            return None
        w = np.concatenate([self.grading, self.grading])
        depth = int(self.grading.max())
        monos = []

        def walk(prefix, left):
            i = len(prefix)
            if i == 2 * n:
                monos.append(tuple(prefix))
                return
            for e in range(left // w[i] + 1):
                walk(prefix + [e], left - e * w[i])

        walk([], depth)
        exps = np.array(monos, dtype=int)
        wdeg = exps @ w
        if len(exps) > max_terms:
            return None
        table = PolyTable(exps, np.zeros((len(exps), 1, 1)))
        rng = np.random.default_rng(seed)

        def exact(ab):
            a, b = ab[:, :n], ab[:, n:]
            u = _nilpotent_exp(self.n_matrix(a), self.q) @ _nilpotent_exp(self.n_matrix(b), self.q)
            return self.n_log(u)

        train = rng.uniform(-1, 1, size=(4 * len(exps) + 20, 2 * n))
        design = table.monomials(train)
        target = exact(train)
        coef = np.zeros((len(exps), n))
        for k in range(n):
            cols = np.nonzero(wdeg == self.grading[k])[0]
            sol = np.linalg.lstsq(design[:, cols], target[:, k], rcond=None)[0]
            coef[cols, k] = sol
        coef[np.abs(coef) < 1e-13 * max(1.0, np.abs(coef).max())] = 0.0
        keep = np.any(coef != 0, axis=1)
        exps, coef = exps[keep], coef[keep]
        test = rng.uniform(-2, 2, size=(64, 2 * n))
        got = PolyTable(exps, np.zeros((len(exps), 1, 1))).monomials(test) @ coef
        want = exact(test)
        if np.abs(got - want).max() > 1e-10 * max(1.0, np.abs(want).max()):
            return None
        return exps, coef

    def n_product(self, y1, y2) -> np.ndarray:
        """Y-coordinates of ``log(exp(y1.Y) exp(y2.Y))``."""
        y1, y2 = np.broadcast_arrays(np.asarray(y1, dtype=float), np.asarray(y2, dtype=float))
        if self.product_poly is None:
            u = _nilpotent_exp(self.n_matrix(y1), self.q) @ _nilpotent_exp(self.n_matrix(y2), self.q)
            return self.n_log(u)
        exps, coef = self.product_poly
        ab = np.concatenate([y1, y2], axis=-1)
        out = np.zeros(y1.shape)
        for e, c in zip(exps, coef):
            term = np.ones(y1.shape[:-1])
            for i in np.nonzero(e)[0]:
                term = term * ab[..., i] ** e[i] if e[i] > 1 else term * ab[..., i]
            nz = np.nonzero(c)[0]
            out[..., nz] += term[..., None] * c[nz]
        return out

    def n_product_matrix_residual(self, samples=32, seed=0) -> float:
        """Max gap between ``n_product`` and the matrix exponential route."""
        if self.n == 0:
            return 0.0
        rng = np.random.default_rng(seed)
        a, b = rng.uniform(-2, 2, size=(2, samples, self.n))
        u = _nilpotent_exp(self.n_matrix(a), self.q) @ _nilpotent_exp(self.n_matrix(b), self.q)
        return float(np.abs(self.n_product(a, b) - self.n_log(u)).max())

    # -- coordinate expressions ---------------------------------------------
    def split(self, x):
        x = np.asarray(x, dtype=float)
        return x[..., :self.r], x[..., self.r:]

    def log_density(self, x) -> np.ndarray:
        """log of the volume density exp(-2 rho(t)) relative to dt dy."""
        t, _ = self.split(x)
        return -2.0 * t @ self.rho

    def density(self, x) -> np.ndarray:
        return np.exp(self.log_density(x))

    def frame_matrix(self, x) -> np.ndarray:
        """Rows are the coordinate components of X_1..X_m at ``x``."""
        t, y = self.split(x)
        lead = np.shape(x)[:-1]
        e = np.zeros(lead + (self.m, self.m))
        e[..., np.arange(self.r), np.arange(self.r)] = 1.0
        if self.n:
            scale = np.exp(t @ self.alpha.T)  # (..., n)
            e[..., self.r:, self.r:] = scale[..., :, None] * self.poly(y)
        return e

    def frame_matrix_derivatives(self, x) -> np.ndarray:
        """``D[..., c, k, a] = d/dx^c`` of ``frame_matrix(x)[..., k, a]``."""
        t, y = self.split(x)
        lead = np.shape(x)[:-1]
        d = np.zeros(lead + (self.m, self.m, self.m))
        if self.n:
            scale = np.exp(t @ self.alpha.T)
            p = self.poly(y)
            for i in range(self.r):
                d[..., i, self.r:, self.r:] = (self.alpha[:, i] * scale)[..., :, None] * p
            for k in range(self.n):
                d[..., self.r + k, self.r:, self.r:] = scale[..., :, None] * self.dpoly[k](y)
        return d

    def to_coordinates(self, f, x) -> np.ndarray:
        """Coordinate components of the field with frame coefficients ``f``."""
        return np.einsum("...k,...ka->...a", f, self.frame_matrix(x))

    def to_frame(self, v, x) -> np.ndarray:
        """Frame coefficients of a coordinate vector ``v`` at ``x``."""
        e = self.frame_matrix(x)
        return np.linalg.solve(np.swapaxes(e, -1, -2), v[..., None])[..., 0]

    def frame_derivative(self, coord_grad, x) -> np.ndarray:
        """Apply all frame fields to a function with coordinate gradient."""
        return np.einsum("...ka,...a->...k", self.frame_matrix(x), coord_grad)

    # -- group structure ----------------------------------------------------
    def n_matrix(self, y) -> np.ndarray:
        return np.tensordot(np.asarray(y, dtype=float), self.Y_mats, axes=(-1, 0))

    def a_matrix(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        if self.r == 0:
            return np.broadcast_to(np.eye(self.q), t.shape[:-1] + (self.q, self.q)).copy()
        diag = np.exp(t @ self._h_eig)
        return np.einsum("ab,...b,cb->...ac", self._h_vec, diag, self._h_vec)

    def group_matrix(self, x) -> np.ndarray:
        """Matrix ``exp(y.Y) exp(t.H)`` of the point with coordinates ``x``."""
        t, y = self.split(x)
        return _nilpotent_exp(self.n_matrix(y), self.q) @ self.a_matrix(t)

    def n_log(self, u_mats) -> np.ndarray:
        """Y-coordinates of ``log`` of unipotent matrices in N."""
        lg = _unipotent_log(u_mats, self.q)
        flat = lg.reshape(lg.shape[:-2] + (-1,))
        return flat @ self._y_pinv

    def ad_scale(self, t) -> np.ndarray:
        """Factors exp(alpha_j(t)) so that Ad(exp t.H) Y_j = factor_j Y_j."""
        return np.exp(np.asarray(t) @ self.alpha.T)

    def multiply(self, x1, x2) -> np.ndarray:
        """Coordinates of the product of two points."""
        t1, y1 = self.split(x1)
        t2, y2 = self.split(x2)
        t1, t2 = np.broadcast_arrays(t1, t2)
        y1, y2 = np.broadcast_arrays(y1, y2)
        if self.n:
            y = self.n_product(y1, self.ad_scale(t1) * y2)
        else:
            y = y1 + y2
        return np.concatenate([t1 + t2, y], axis=-1)

    def inverse(self, x) -> np.ndarray:
        t, y = self.split(x)
        return np.concatenate([-t, -y / self.ad_scale(t)], axis=-1)

    def left_translate(self, s0, x) -> np.ndarray:
        return self.multiply(np.asarray(s0, dtype=float), x)

    def to_json(self) -> dict:
        return {"r": self.r, "n": self.n, "rho": self.rho.tolist(), "alpha": self.alpha.tolist(),
                "grading": self.grading.tolist(), "polynomials": self.poly.to_json()}

    # -- coefficient-level invariants ---------------------------------------
    def poly_center_residual(self) -> float:
        return float(np.abs(self.poly.at_zero() - np.eye(self.n)).max()) if self.n else 0.0

    def poly_self_variable_violations(self) -> int:
        """Number of nonzero coefficients of p_jl that involve y^l."""
        bad = 0
        for e, c in zip(self.poly.exps, self.poly.coef):
            for l in range(self.n):
                if e[l] > 0 and np.any(c[:, l] != 0):
                    bad += int(np.count_nonzero(c[:, l]))
        return bad

    def poly_homogeneity_violations(self) -> int:
        bad = 0
        d = self.grading
        for e, c in zip(self.poly.exps, self.poly.coef):
            deg = int(e @ d)
            for j, l in zip(*np.nonzero(c)):
                if deg != d[l] - d[j]:
                    bad += 1
        return bad


def bch_vector_fields(frame: GoodFrame, h_index=None) -> SChart:
    return SChart(frame, h_index)


# ---------------------------------------------------------------------------
# metric and connection

def killing_metric(frame_or_iw, x, y, tol=1e-10) -> float:
    """``B((X - theta X)/2, (Y - theta Y)/2)`` for X, Y in s = a + n."""
    iw = frame_or_iw.iw if isinstance(frame_or_iw, GoodFrame) else frame_or_iw
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    s_basis = np.vstack([iw.a_basis, iw.n_basis])
    for v in (x, y):
        c, *_ = np.linalg.lstsq(s_basis.T, v, rcond=None)
        if np.linalg.norm(s_basis.T @ c - v) > tol * max(1.0, np.linalg.norm(v)):
            raise NotInS("element has a component outside a + n")
    return float(x @ iw.cartan.g0_gram @ y)


def frame_structure_constants(frame: GoodFrame) -> np.ndarray:
    """``C[a, b, c]`` with ``[X_a, X_b] = sum_c C[a, b, c] X_c``."""
    alg = frame.iw.algebra
    x = frame.vectors
    br = alg.bracket_coords(x[:, None, :], x[None, :, :])
    c, *_ = np.linalg.lstsq(x.T, br.reshape(-1, alg.dim).T, rcond=None)
    resid = np.abs(x.T @ c - br.reshape(-1, alg.dim).T).max()
    if resid > 1e-9 * max(1.0, np.abs(br).max()):
        raise NotInS("s is not closed under the bracket")
    return c.T.reshape(frame.m, frame.m, frame.m)


def connection_coefficients(frame: GoodFrame, gram=None) -> np.ndarray:
    """``G[a, b, c]``: the X_c coefficient of nabla_{X_a} X_b.

    Uses the Koszul formula for left-invariant fields (the three derivative
    terms vanish because the metric coefficients are constant).
    """
    c = frame_structure_constants(frame)
    g = np.eye(frame.m) if gram is None else np.asarray(gram, dtype=float)
    cg = np.einsum("abe,ec->abc", c, g)  # g([X_a, X_b], X_c)
    koszul = 0.5 * (cg - cg.transpose(0, 2, 1) - cg.transpose(2, 0, 1))
    return np.einsum("abd,dc->abc", koszul, np.linalg.inv(g))


def covariant_derivative(frame: GoodFrame, x, y_index: int, gram=None) -> np.ndarray:
    """Frame coefficients of nabla_X X_y for a frame index or coefficient vector X."""
    gam = connection_coefficients(frame, gram)
    if np.ndim(x) == 0:
        return gam[int(x), y_index].copy()
    return np.einsum("a,ac->c", np.asarray(x, dtype=float), gam[:, y_index])


# ---------------------------------------------------------------------------
# fields

class FieldOnS:
    """Vector field given by frame coefficients ``f(x)`` of shape (..., m).

    Parameters
    ----------
    coeffs : callable
        Vectorised map from points (..., m) to coefficients (..., m).
    coord_jac : callable, optional
        Analytic ``J[..., c, l] = d f^l / d x^c``.  Without it central
        differences with step ``h`` are used.
    box : array (m, 2), optional
        Admissible region for finite-difference stencils.
    """

    def __init__(self, coeffs, coord_jac=None, h=FD_STEP, box=None):
        self._coeffs = coeffs
        self._coord_jac = coord_jac
        self.h = h
        self.box = None if box is None else np.asarray(box, dtype=float)

    @property
    def derivative_mode(self) -> str:
        return "analytic" if self._coord_jac is not None else "finite-difference"

    def values(self, x) -> np.ndarray:
        return self._coeffs(np.asarray(x, dtype=float))

    __call__ = values

    def coord_jac(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self._coord_jac is not None:
            return self._coord_jac(x)
        return fd_jacobian(self.values, x, self.h, self.box)

    def frame_jac(self, x, chart: SChart) -> np.ndarray:
        """``D[..., k, l] = X_k f^l``."""
        return np.einsum("...ka,...al->...kl", chart.frame_matrix(x), self.coord_jac(x))


def fd_jacobian(fun, x, h=FD_STEP, box=None) -> np.ndarray:
    """Central-difference Jacobian ``J[..., c, l] = d fun^l / d x^c``."""
    x = np.asarray(x, dtype=float)
    m = x.shape[-1]
    if box is not None:
        lo, hi = box[:, 0], box[:, 1]
        if np.any(x - h < lo) or np.any(x + h > hi):
            raise NonDifferentiable("finite-difference stencil leaves the box")
    cols = []
    for c in range(m):
        e = np.zeros(m)
        e[c] = h
        cols.append((fun(x + e) - fun(x - e)) / (2 * h))
    return np.stack(cols, axis=-2)


class ConstantField(FieldOnS):
    def __init__(self, c):
        self.c = np.asarray(c, dtype=float)
        super().__init__(lambda x: np.broadcast_to(self.c, np.shape(x)[:-1] + self.c.shape).copy(),
                         lambda x: np.zeros(np.shape(x)[:-1] + (len(self.c), len(self.c))))


class TranslatedField(FieldOnS):
    """Left translate ``x -> f(s0^{-1} x)`` of a field by ``s0``.

    Frame derivatives commute with left translation, so they are obtained by
    composition as well.
    """

    def __init__(self, base: FieldOnS, s0, chart: SChart):
        self.base = base
        self.chart = chart
        self.s0_inv = chart.inverse(np.asarray(s0, dtype=float))
        super().__init__(self._values)

    def pullback(self, x):
        return self.chart.multiply(self.s0_inv, x)

    def _values(self, x):
        return self.base.values(self.pullback(x))

    def frame_jac(self, x, chart: SChart) -> np.ndarray:
        return self.base.frame_jac(self.pullback(x), chart)

    def coord_jac(self, x) -> np.ndarray:
        fj = self.frame_jac(x, self.chart)
        e = self.chart.frame_matrix(x)
        return np.linalg.solve(e, fj)


class ScaledField(FieldOnS):
    def __init__(self, base: FieldOnS, c: float):
        self.base, self.c = base, float(c)
        super().__init__(lambda x: self.c * base.values(x))

    def frame_jac(self, x, chart):
        return self.c * self.base.frame_jac(x, chart)

    def coord_jac(self, x):
        return self.c * self.base.coord_jac(x)


# ---------------------------------------------------------------------------
# divergence and gradients

def divergence(field: FieldOnS, chart: SChart, x) -> np.ndarray:
    """``-sum_i 2 rho(H_i) f^i + sum_l X_l f^l`` at the points ``x``."""
    f = field.values(x)
    d = field.frame_jac(x, chart)
    return -2.0 * f[..., :chart.r] @ chart.rho + np.einsum("...ll->...", d)


def _rk4_flow(vel, x, tau, steps):
    h = tau / steps
    for _ in range(steps):
        k1 = vel(x)
        k2 = vel(x + 0.5 * h * k1)
        k3 = vel(x + 0.5 * h * k2)
        k4 = vel(x + h * k3)
        x = x + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    return x


def flow(field: FieldOnS, chart: SChart, x, tau, step=1e-3, box=None):
    """Integrate the coordinate ODE of ``field`` for time ``tau`` with RK4."""
    def vel(z):
        return chart.to_coordinates(field.values(z), z)
    steps = max(1, int(np.ceil(abs(tau) / step - 1e-12)))
    out = _rk4_flow(vel, np.asarray(x, dtype=float), tau, steps)
    if box is not None:
        box = np.asarray(box, dtype=float)
        if np.any(out < box[:, 0]) or np.any(out > box[:, 1]):
            raise FlowEscape("flow left the chart box")
    return out


def divergence_oracle(field: FieldOnS, chart: SChart, x, eps=1e-3, delta=1e-4, box=None):
    """Divergence as the rate of change of the transported volume.

    For ``tau`` in ``(-2e, -e, e, 2e)`` the flow map is integrated with RK4
    (step ``eps``), its Jacobian is taken by central differences, and
    ``log(density(flow) * det(Jacobian))`` is differentiated at ``tau = 0``
    with the five-point stencil.
    """
    x = np.asarray(x, dtype=float)
    m = x.shape[-1]
    offsets = np.concatenate([np.zeros((1, m)), delta * np.eye(m), -delta * np.eye(m)])
    pts = x[..., None, :] + offsets  # (..., 2m+1, m)
    logs = {}
    for k in (-2, -1, 1, 2):
        moved = flow(field, chart, pts, k * eps, step=eps, box=box)
        jac = (moved[..., 1:m + 1, :] - moved[..., m + 1:, :]) / (2 * delta)  # (..., c, a)
        sign, logdet = np.linalg.slogdet(jac)
        logs[k] = chart.log_density(moved[..., 0, :]) + logdet
    return (8 * (logs[1] - logs[-1]) - (logs[2] - logs[-2])) / (12 * eps)


def gradient_tensor(phi: FieldOnS, chart: SChart, x, gamma=None) -> np.ndarray:
    """``T[..., k, c] = g(nabla_{X_k} phi, X_c)`` in the orthonormal frame."""
    if gamma is None:
        gamma = connection_coefficients(chart.frame)
        gamma = gamma[np.ix_(_chart_index(chart), _chart_index(chart), _chart_index(chart))]
    v = phi.values(x)
    d = phi.frame_jac(x, chart)
    return d + np.einsum("...l,klc->...kc", v, gamma)


def _chart_index(chart: SChart):
    return list(chart.h_index) + list(range(chart.frame.r, chart.frame.m))


def gradient_norm(phi: FieldOnS, chart: SChart, x, gamma=None) -> np.ndarray:
    """Pointwise |nabla phi| for the Levi-Civita connection of g0."""
    t = gradient_tensor(phi, chart, x, gamma)
    return np.sqrt(np.einsum("...kc,...kc->...", t, t))
