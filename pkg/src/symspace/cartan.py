"""Cartan and Iwasawa data: theta split, maximal abelian a, restricted roots,
positive systems, gradings and g0-orthonormal frames of s = a + n.

Algebra elements are handled as coordinate vectors in the algebra basis;
sets of elements are stored as the rows of 2-D arrays.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (BThetaNotPositive, GenericityFailure, H1NotInA, H1NotUnit,
                     NotDecomposable, SeedNotExtendable, SeedNotInP,
                     ThetaNotAutomorphism)
from .lie_core import MatrixLieAlgebra

ROOT_CLUSTER_TOL = 1e-8
MAX_GENERICITY_RETRIES = 8


def _gram_schmidt(vectors, gram, tol=1e-9):
    """Orthonormalise rows of ``vectors`` for the inner product ``gram``.

    Rows whose remainder after projection is below ``tol`` times the largest
    input norm are dropped.
    """
    out = []
    rows = np.atleast_2d(vectors)
    scale = max((np.sqrt(max(v @ gram @ v, 0.0)) for v in rows), default=0.0)
    for v in rows:
        w = np.array(v, dtype=float)
        for _ in range(2):  # re-orthogonalise once for stability
            for u in out:
                w = w - (u @ gram @ w) * u
        nrm = np.sqrt(max(w @ gram @ w, 0.0))
        if nrm > tol * scale:
            out.append(w / nrm)
    return np.array(out).reshape(len(out), np.atleast_2d(vectors).shape[1])


@dataclass(eq=False)
class CartanData:
    """Split g = k + p for theta X = -X^T.

    ``k_basis`` and ``p_basis`` are orthonormal for ``b_theta``.
    """

    algebra: MatrixLieAlgebra
    theta: np.ndarray
    k_basis: np.ndarray
    p_basis: np.ndarray
    b_theta: np.ndarray

    @property
    def g0_gram(self) -> np.ndarray:
        """Gram matrix of ``B((X - theta X)/2, (Y - theta Y)/2)`` on g."""
        proj = 0.5 * (np.eye(self.algebra.dim) - self.theta)
        return proj.T @ self.algebra.killing_gram @ proj

    def p_part(self, x):
        return 0.5 * (np.asarray(x) - np.asarray(x) @ self.theta.T)

    def k_part(self, x):
        return 0.5 * (np.asarray(x) + np.asarray(x) @ self.theta.T)

    def automorphism_residual(self) -> float:
        alg = self.algebra
        c = alg.structure_constants
        lhs = np.einsum("ijk,lk->ijl", c, self.theta)
        rhs = np.einsum("ai,bj,abk->ijk", self.theta, self.theta, c)
        return float(np.abs(lhs - rhs).max())


def cartan_split(alg: MatrixLieAlgebra) -> CartanData:
    """Eigenspace split of theta X = -X^T with a positivity check on B_theta."""
    neg_t = -alg.basis.transpose(0, 2, 1)
    theta = alg.coords_of(neg_t).T  # column i = theta(B_i)
    recon = np.einsum("ki,kab->iab", theta, alg.basis)
    scale = max(1.0, np.abs(alg.basis).max())
    if np.abs(recon - neg_t).max() > 1e-10 * scale:
        raise ThetaNotAutomorphism("X -> -X^T leaves the span of the basis")
    snapped = np.round(theta)
    theta = np.where(np.abs(theta - snapped) < 1e-13, snapped, theta)
    if np.abs(theta @ theta - np.eye(alg.dim)).max() > 1e-12:
        raise ThetaNotAutomorphism("theta is not an involution")
    b_theta = -alg.killing_gram @ theta
    b_theta = 0.5 * (b_theta + b_theta.T)
    ev = np.linalg.eigvalsh(b_theta)
    if ev.min() <= 1e-12 * abs(ev).max():
        raise BThetaNotPositive(f"smallest eigenvalue {ev.min():.3e}")
    cd = CartanData(alg, theta, np.zeros((0, alg.dim)), np.zeros((0, alg.dim)), b_theta)
    if cd.automorphism_residual() > 1e-10 * max(1.0, np.abs(alg.structure_constants).max()):
        raise ThetaNotAutomorphism("theta does not preserve the bracket")
    eye = np.eye(alg.dim)
    cd.k_basis = _gram_schmidt(cd.k_part(eye), b_theta)
    cd.p_basis = _gram_schmidt(cd.p_part(eye), b_theta)
    return cd


def _commutant_in_p(cartan: CartanData, elems) -> np.ndarray:
    """Orthonormal (B_theta) basis of {X in p : [X, e] = 0 for all e}."""
    alg = cartan.algebra
    pb = cartan.p_basis
    if len(elems) == 0:
        return pb.copy()
    # rows: components of [p_i, e_k]; solve sum_i c_i [p_i, e_k] = 0
    blocks = [alg.bracket_coords(pb, e[None, :]).T for e in elems]
    mat = np.vstack(blocks)
    _, s, vt = np.linalg.svd(mat)
    tol = 1e-9 * max(1.0, s.max() if s.size else 1.0)
    rank = int((s > tol).sum())
    null = vt[rank:]
    return _gram_schmidt(null @ pb, cartan.b_theta)


def maximal_abelian(cartan: CartanData, seed=None) -> np.ndarray:
    """Maximal abelian subspace a of p, returned as g0-orthonormal rows.

    With a seed, the seed direction is the first row.  Without one, basis
    elements whose p-parts commute are taken greedily in basis order, which
    picks the diagonal subalgebra for sl(n).  Maximality is certified by
    comparing with the dimension of the commutant in p.
    """
    alg = cartan.algebra
    g0 = cartan.g0_gram
    current = []
    if seed is not None:
        seed = np.asarray(seed, dtype=float)
        if np.linalg.norm(cartan.k_part(seed)) > 1e-10 * max(1.0, np.linalg.norm(seed)):
            raise SeedNotInP("seed has a component in k")
        current.append(cartan.p_part(seed))
    else:
        for v in cartan.p_part(np.eye(alg.dim)):
            if np.linalg.norm(v) < 1e-12:
                continue
            if all(np.abs(alg.bracket_coords(v, u)).max() < 1e-12 for u in current):
                trial = _gram_schmidt(np.array(current + [v]), g0)
                if len(trial) == len(current) + 1:
                    current.append(v)
    for _ in range(alg.dim + 1):
        comm = _commutant_in_p(cartan, current)
        if len(comm) < len(current):
            raise SeedNotExtendable("commutant smaller than the abelian set")
        if len(comm) == len(current):
            return _gram_schmidt(np.array(current), g0)
        basis = _gram_schmidt(np.array(current), g0)
        extra = None
        for w in comm:
            w = w - sum((u @ g0 @ w) * u for u in basis)
            if np.sqrt(max(w @ g0 @ w, 0)) > 1e-8:
                extra = w
                break
        if extra is None:
            raise SeedNotExtendable("no commuting direction outside the current span")
        current.append(extra)
    raise SeedNotExtendable("greedy extension did not terminate")


def commutant_dimension(cartan: CartanData, a_basis) -> int:
    return len(_commutant_in_p(cartan, list(a_basis)))


@dataclass(eq=False)
class Root:
    """Restricted root: values on the a basis and a B_theta-orthonormal space."""

    values: np.ndarray
    space: np.ndarray

    @property
    def multiplicity(self) -> int:
        return int(self.space.shape[0])


def restricted_roots(cartan: CartanData, a_basis, rng=None):
    """Simultaneous eigendecomposition of ``ad H`` for H in a.

    Returns ``(roots, g0_space)`` where ``g0_space`` spans the zero weight
    space.  A random generic element is diagonalised and eigenvalues are
    clustered; if a cluster is not a joint eigenspace the draw is retried.
    """
    alg = cartan.algebra
    a_basis = np.atleast_2d(np.asarray(a_basis, dtype=float))
    rng = np.random.default_rng(0) if rng is None else rng
    chol = np.linalg.cholesky(cartan.b_theta)
    w = chol.T  # u = w x gives B_theta-orthonormal coordinates
    w_inv = np.linalg.inv(w)
    ads = [w @ alg.ad(h) @ w_inv for h in a_basis]
    ads = [0.5 * (a + a.T) for a in ads]
    scale = max(1.0, max(np.abs(a).max() for a in ads))
    tol = ROOT_CLUSTER_TOL * scale
    for _ in range(MAX_GENERICITY_RETRIES + 1):
        gamma = rng.normal(size=len(a_basis))
        gamma /= np.linalg.norm(gamma)
        lam, vec = np.linalg.eigh(sum(g * a for g, a in zip(gamma, ads)))
        clusters, start = [], 0
        for i in range(1, len(lam) + 1):
            if i == len(lam) or lam[i] - lam[i - 1] > tol:
                clusters.append(vec[:, start:i])
                start = i
        ok, found = True, []
        for v in clusters:
            vals = []
            for a in ads:
                ray = v.T @ a @ v
                val = np.trace(ray) / ray.shape[0]
                if np.abs(ray - val * np.eye(ray.shape[0])).max() > 1e3 * tol:
                    ok = False
                vals.append(val)
            found.append((np.array(vals), v))
        if ok:
            break
    else:
        raise GenericityFailure("distinct roots kept colliding on random elements")
    roots, zero_space = [], np.zeros((0, alg.dim))
    for vals, v in found:
        space = (w_inv @ v).T
        if np.abs(vals).max() <= 1e3 * tol:
            zero_space = np.vstack([zero_space, space])
        else:
            roots.append(Root(vals, space))
    roots.sort(key=lambda r: tuple(-np.round(r.values, 9)))
    return roots, zero_space


def _lex_positive(vec, tol=1e-9):
    for x in vec:
        if x > tol:
            return True
        if x < -tol:
            return False
    return False


@dataclass(eq=False)
class IwasawaStructure:
    """Iwasawa data for one choice of a and positive system.

    ``positive`` lists roots in grading order; ``grading[i]`` and
    ``simple_coeffs[i]`` refer to ``positive[i]``.  Functionals on a are
    stored by their values on the rows of ``a_basis``.
    """

    cartan: CartanData
    a_basis: np.ndarray
    roots: list
    zero_space: np.ndarray
    positive: list = field(default_factory=list)
    simple: list = field(default_factory=list)
    grading: list = field(default_factory=list)
    simple_coeffs: list = field(default_factory=list)
    rho: np.ndarray = None
    direction: np.ndarray = None

    @property
    def algebra(self):
        return self.cartan.algebra

    @property
    def rank(self) -> int:
        return self.a_basis.shape[0]

    @property
    def n_basis(self) -> np.ndarray:
        return np.vstack([r.space for r in self.positive])

    @property
    def m(self) -> int:
        """Dimension of s = a + n, i.e. of the symmetric space."""
        return self.rank + sum(r.multiplicity for r in self.positive)

    def a_coords(self, h) -> np.ndarray:
        """Coordinates of elements of a in ``a_basis`` (g0-orthonormal rows)."""
        return np.asarray(h) @ self.cartan.g0_gram @ self.a_basis.T

    def evaluate(self, functional, h) -> np.ndarray:
        return self.a_coords(h) @ np.asarray(functional)

    def to_json(self) -> dict:
        return {
            "rank": self.rank,
            "a_basis": self.a_basis.tolist(),
            "roots": [{"values": r.values.tolist(), "multiplicity": r.multiplicity}
                      for r in self.roots],
            "positive_roots": [{"values": r.values.tolist(), "multiplicity": r.multiplicity,
                                "grading": d, "simple_coefficients": list(map(int, c))}
                               for r, d, c in zip(self.positive, self.grading, self.simple_coeffs)],
            "simple_roots": [r.values.tolist() for r in self.simple],
            "rho": self.rho.tolist(),
            "dim_n": int(self.n_basis.shape[0]),
            "m": self.m,
        }


def choose_positive(iw: IwasawaStructure, direction=None) -> IwasawaStructure:
    """Fill in positive roots, simple roots, grading and rho.

    ``direction`` is an element of a given by its ``a_basis`` coordinates.
    Roots are ordered by the key ``(alpha(direction), alpha(a_1), ...)`` so a
    direction lying on a wall is resolved lexicographically.
    """
    r = iw.rank
    direction = np.eye(r)[0] if direction is None else np.asarray(direction, dtype=float)
    pos = [rt for rt in iw.roots
           if _lex_positive(np.concatenate([[rt.values @ direction], rt.values]))]
    vals = np.array([rt.values for rt in pos])
    tol = 1e-7 * max(1.0, np.abs(vals).max())
    simple = []
    for i, rt in enumerate(pos):
        is_sum = False
        for j in range(len(pos)):
            diff = rt.values - vals[j]
            if np.any(np.abs(vals - diff).max(axis=1) < tol):
                is_sum = True
                break
        if not is_sum:
            simple.append(rt)
    smat = np.array([s.values for s in simple]).T
    coeffs = []
    for rt in pos:
        c, *_ = np.linalg.lstsq(smat, rt.values, rcond=None)
        ci = np.round(c)
        if np.abs(smat @ ci - rt.values).max() > tol or np.any(ci < 0):
            raise NotDecomposable(f"root {rt.values} has no non-negative integer expansion")
        coeffs.append(ci.astype(int))
    grading = [int(c.sum()) for c in coeffs]
    order = sorted(range(len(pos)), key=lambda i: (grading[i], tuple(-np.round(pos[i].values, 9))))
    iw.positive = [pos[i] for i in order]
    iw.grading = [grading[i] for i in order]
    iw.simple_coeffs = [coeffs[i] for i in order]
    iw.simple = simple
    iw.rho = 0.5 * sum(rt.multiplicity * rt.values for rt in pos)
    iw.direction = direction
    return iw


def iwasawa(alg: MatrixLieAlgebra, seed=None, direction=None, rng=None) -> IwasawaStructure:
    """Cartan split, maximal abelian a, roots and a positive system in one go."""
    cd = cartan_split(alg)
    a_basis = maximal_abelian(cd, seed)
    roots, zero = restricted_roots(cd, a_basis, rng)
    iw = IwasawaStructure(cd, a_basis, roots, zero)
    return choose_positive(iw, direction)


@dataclass(eq=False)
class GoodFrame:
    """g0-orthonormal basis H_1..H_r, Y_1..Y_{m-r} of s.

    Attributes
    ----------
    H, Y : ndarray
        Rows are algebra coordinates.
    root_index : list of int
        ``root_index[j]`` is the index into ``iw.positive`` of the root of Y_j.
    alpha : ndarray, shape (m - r, r)
        ``alpha[j, i] = alpha_j(H_i)``.
    rho : ndarray, shape (r,)
        ``rho(H_i)``.
    grading : ndarray of int
        ``d(alpha_j)`` for each Y_j.
    """

    iw: IwasawaStructure
    H: np.ndarray
    Y: np.ndarray
    root_index: list
    alpha: np.ndarray
    rho: np.ndarray
    grading: np.ndarray

    @property
    def r(self) -> int:
        return self.H.shape[0]

    @property
    def m(self) -> int:
        return self.H.shape[0] + self.Y.shape[0]

    @property
    def vectors(self) -> np.ndarray:
        return np.vstack([self.H, self.Y])

    def gram(self) -> np.ndarray:
        x = self.vectors
        return x @ self.iw.cartan.g0_gram @ x.T

    def to_json(self) -> dict:
        return {"H": self.H.tolist(), "Y": self.Y.tolist(),
                "alpha": self.alpha.tolist(), "rho": self.rho.tolist(),
                "grading": self.grading.tolist(), "root_index": list(self.root_index)}


def good_frame(iw: IwasawaStructure, H1=None) -> GoodFrame:
    """Good frame of s with optional prescribed unit first vector H1 in a."""
    g0 = iw.cartan.g0_gram
    if H1 is not None:
        H1 = np.asarray(H1, dtype=float)
        proj = iw.a_coords(H1) @ iw.a_basis
        if np.linalg.norm(H1 - proj) > 1e-10 * max(1.0, np.linalg.norm(H1)):
            raise H1NotInA("H1 is not in a")
        if abs(H1 @ g0 @ H1 - 1.0) > 1e-10:
            raise H1NotUnit(f"g0(H1, H1) = {H1 @ g0 @ H1!r}")
        hs = _gram_schmidt(np.vstack([H1, iw.a_basis]), g0)
    else:
        hs = _gram_schmidt(iw.a_basis, g0)
    ys, idx, grades = [], [], []
    for k, (rt, d) in enumerate(zip(iw.positive, iw.grading)):
        for v in _gram_schmidt(rt.space, g0):
            ys.append(v)
            idx.append(k)
            grades.append(d)
    Y = np.array(ys)
    hcoord = iw.a_coords(hs)
    alpha = np.array([hcoord @ iw.positive[k].values for k in idx])
    rho = hcoord @ iw.rho
    return GoodFrame(iw, hs, Y, idx, alpha, rho, np.array(grades, dtype=int))


def adapted_structure(alg: MatrixLieAlgebra, v0, rng=None):
    """Iwasawa data and good frame with H_1 = v0 for a unit v0 in p."""
    cd = cartan_split(alg)
    v0 = np.asarray(v0, dtype=float)
    nrm = v0 @ cd.g0_gram @ v0
    if abs(nrm - 1.0) > 1e-10:
        raise H1NotUnit(f"g0(v0, v0) = {nrm!r}")
    a_basis = maximal_abelian(cd, seed=v0)
    roots, zero = restricted_roots(cd, a_basis, rng)
    iw = IwasawaStructure(cd, a_basis, roots, zero)
    choose_positive(iw, direction=np.eye(len(a_basis))[0])
    return iw, good_frame(iw, H1=v0)


# ---------------------------------------------------------------------------
# residual checks used by tests and the report suite

def root_bracket_residual(iw: IwasawaStructure) -> float:
    """Max norm of the part of [g_a, g_b] outside g_{a+b} over all pairs."""
    alg = iw.algebra
    bt = iw.cartan.b_theta
    spaces = [(np.zeros(iw.rank), iw.zero_space)] + [(r.values, r.space) for r in iw.roots]
    tol = 1e-7 * max(1.0, max(np.abs(v).max() for v, _ in spaces))
    worst = 0.0
    for va, sa in spaces:
        for vb, sb in spaces:
            target = None
            for vc, sc in spaces:
                if np.abs(vc - va - vb).max() < tol:
                    target = sc
            br = alg.bracket_coords(sa[:, None, :], sb[None, :, :]).reshape(-1, alg.dim)
            if target is not None and target.shape[0] > 0:
                br = br - (br @ bt @ target.T) @ target
            worst = max(worst, float(np.abs(br).max()) if br.size else 0.0)
    return worst


def grading_residual(iw: IwasawaStructure) -> float:
    """Check [V_j, V_k] is inside V_{j+k}."""
    alg = iw.algebra
    bt = iw.cartan.b_theta
    levels = {}
    for rt, d in zip(iw.positive, iw.grading):
        levels.setdefault(d, []).append(rt.space)
    levels = {d: np.vstack(v) for d, v in levels.items()}
    worst = 0.0
    for dj, vj in levels.items():
        for dk, vk in levels.items():
            br = alg.bracket_coords(vj[:, None, :], vk[None, :, :]).reshape(-1, alg.dim)
            tgt = levels.get(dj + dk)
            if tgt is not None:
                br = br - (br @ bt @ tgt.T) @ tgt
            worst = max(worst, float(np.abs(br).max()))
    return worst


def abelian_residual(iw: IwasawaStructure) -> float:
    a = iw.a_basis
    br = iw.algebra.bracket_coords(a[:, None, :], a[None, :, :])
    return float(np.abs(br).max())


def weyl_symmetric(iw: IwasawaStructure, tol=1e-8) -> bool:
    for r in iw.roots:
        match = [s for s in iw.roots if np.abs(s.values + r.values).max() < tol]
        if len(match) != 1 or match[0].multiplicity != r.multiplicity:
            return False
    return True


def completeness_defect(iw: IwasawaStructure) -> int:
    total = iw.zero_space.shape[0] + sum(r.multiplicity for r in iw.roots)
    return iw.algebra.dim - total


def frame_orthogonality_residual(frame: GoodFrame) -> float:
    """Largest g0 pairing between a and n or between different root spaces."""
    g0 = frame.iw.cartan.g0_gram
    iw = frame.iw
    worst = float(np.abs(iw.a_basis @ g0 @ iw.n_basis.T).max())
    for i, ri in enumerate(iw.positive):
        for j, rj in enumerate(iw.positive):
            if i != j:
                worst = max(worst, float(np.abs(ri.space @ g0 @ rj.space.T).max()))
    return worst


def frame_root_residual(frame: GoodFrame) -> float:
    """Distance of each Y_j from its own root space (B_theta projection)."""
    bt = frame.iw.cartan.b_theta
    worst = 0.0
    for y, k in zip(frame.Y, frame.root_index):
        sp = frame.iw.positive[k].space
        worst = max(worst, float(np.abs(y - (y @ bt @ sp.T) @ sp).max()))
    return worst


def max_rho_direction(iw: IwasawaStructure, samples: int = 2000, rng=None):
    """Unit H in a maximising rho, by sampling plus the exact dual direction.

    Returns ``(H, rho(H))`` with H in algebra coordinates.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    r = iw.rank
    dirs = rng.normal(size=(samples, r))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    if np.linalg.norm(iw.rho) > 0:
        dirs = np.vstack([iw.rho / np.linalg.norm(iw.rho), dirs])
    vals = dirs @ iw.rho
    best = int(np.argmax(vals))
    return dirs[best] @ iw.a_basis, float(vals[best])
