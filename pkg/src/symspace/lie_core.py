"""Real matrix Lie algebras: brackets, adjoint maps and the Killing form."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .errors import CompactType, Degenerate, MixedAlgebras, NotClosed

CLOSURE_TOL = 1e-10
DEGENERACY_GATE = 1e-8


def _sl_basis(n: int) -> list[np.ndarray]:
    basis = []
    for i in range(n - 1):
        h = np.zeros((n, n))
        h[i, i], h[i + 1, i + 1] = 1.0, -1.0
        basis.append(h)
    upper = [(i, j) for i in range(n) for j in range(n) if i < j]
    lower = [(j, i) for i, j in upper]
    for i, j in upper + lower:
        e = np.zeros((n, n))
        e[i, j] = 1.0
        basis.append(e)
    return basis


def _so_basis(n: int) -> list[np.ndarray]:
    # so(n,1) on R^{n+1} preserving diag(1,..,1,-1); boosts first, then rotations
    q = n + 1
    basis = []
    for i in range(n):
        b = np.zeros((q, q))
        b[i, n] = b[n, i] = 1.0
        basis.append(b)
    for i, j in itertools.combinations(range(n), 2):
        r = np.zeros((q, q))
        r[i, j], r[j, i] = 1.0, -1.0
        basis.append(r)
    return basis


@dataclass(eq=False)
class MatrixLieAlgebra:
    """Finite-dimensional real Lie algebra given by a basis of square matrices.

    Attributes
    ----------
    basis : ndarray, shape (dim, q, q)
    structure_constants : ndarray, shape (dim, dim, dim)
        ``[B_i, B_j] = sum_k c[i, j, k] B_k``.
    killing_gram : ndarray, shape (dim, dim)
    family_tag : str
        One of ``"sl"``, ``"so"`` or ``"custom"``.
    """

    basis: np.ndarray
    family_tag: str = "custom"
    n: int | None = None
    structure_constants: np.ndarray = field(init=False, repr=False)
    killing_gram: np.ndarray = field(init=False, repr=False)
    _coord_map: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.basis = np.asarray(self.basis, dtype=float)
        if self.basis.ndim != 3 or self.basis.shape[1] != self.basis.shape[2]:
            raise ValueError("basis must be a list of square matrices")
        flat = self.basis.reshape(self.dim, -1).T
        if np.linalg.matrix_rank(flat) < self.dim:
            raise ValueError("basis matrices are linearly dependent")
        self._coord_map = np.linalg.pinv(flat)
        comm = np.einsum("iab,jbc->ijac", self.basis, self.basis)
        comm = comm - comm.transpose(1, 0, 2, 3)
        c = self.coords_of(comm)
        resid = np.abs(np.einsum("ijk,kab->ijab", c, self.basis) - comm).max()
        scale = max(1.0, np.abs(self.basis).max() ** 2)
        if resid > CLOSURE_TOL * scale:
            raise NotClosed(f"bracket leaves the span (residual {resid:.2e})")
        c[np.abs(c) < 1e-14 * max(1.0, np.abs(c).max())] = 0.0
        self.structure_constants = c
        ad = self.ad_matrices
        self.killing_gram = np.einsum("iab,jba->ij", ad, ad)
        s = np.linalg.svd(self.killing_gram, compute_uv=False)
        if s[-1] < DEGENERACY_GATE * s[0]:
            raise Degenerate(f"Killing form singular (sigma_min/sigma_max = {s[-1] / s[0]:.2e})")
        if np.linalg.eigvalsh(self.killing_gram).max() <= 0:
            raise CompactType("Killing form is negative definite")

    @property
    def dim(self) -> int:
        return self.basis.shape[0]

    @property
    def size(self) -> int:
        """Matrix size q of the realization."""
        return self.basis.shape[1]

    @property
    def ad_matrices(self) -> np.ndarray:
        """``ad[i]`` is the matrix of ``ad B_i``; column j holds ``[B_i, B_j]``."""
        return self.structure_constants.transpose(0, 2, 1)

    @property
    def scale(self) -> float:
        return float(np.abs(self.killing_gram).max())

    def coords_of(self, mats) -> np.ndarray:
        """Basis coordinates of matrices in the span (least squares)."""
        mats = np.asarray(mats, dtype=float)
        lead = mats.shape[:-2]
        flat = mats.reshape(lead + (-1,))
        return flat @ self._coord_map.T

    def matrix(self, coords) -> np.ndarray:
        return np.tensordot(np.asarray(coords, dtype=float), self.basis, axes=(-1, 0))

    def element(self, coords) -> "AlgebraElement":
        return AlgebraElement(self, np.asarray(coords, dtype=float))

    def basis_element(self, i: int) -> "AlgebraElement":
        return self.element(np.eye(self.dim)[i])

    def bracket_coords(self, x, y) -> np.ndarray:
        """Bracket on coordinate vectors (broadcasts over leading axes)."""
        return np.einsum("...i,...j,ijk->...k", x, y, self.structure_constants)

    def ad(self, x) -> np.ndarray:
        return np.tensordot(np.asarray(x, dtype=float), self.ad_matrices, axes=(-1, 0))

    def killing_coords(self, x, y) -> np.ndarray:
        return np.einsum("...i,ij,...j->...", x, self.killing_gram, y)

    def jacobi_residual(self) -> float:
        c = self.structure_constants
        # [[B_i,B_j],B_k] coordinates: sum_l c[i,j,l] c[l,k,:]
        t = np.einsum("ijl,lkm->ijkm", c, c)
        cyc = t + t.transpose(1, 2, 0, 3) + t.transpose(2, 0, 1, 3)
        return float(np.abs(cyc).max())

    def commutator_residual(self) -> float:
        comm = np.einsum("iab,jbc->ijac", self.basis, self.basis)
        comm = comm - comm.transpose(1, 0, 2, 3)
        recon = np.einsum("ijk,kab->ijab", self.structure_constants, self.basis)
        return float(np.abs(recon - comm).max())

    def to_json(self) -> dict:
        return {"family": self.family_tag, "n": self.n, "dim": self.dim,
                "basis": self.basis.tolist()}


@dataclass(frozen=True, eq=False)
class AlgebraElement:
    algebra: MatrixLieAlgebra
    coords: np.ndarray

    def __post_init__(self):
        if self.coords.shape != (self.algebra.dim,):
            raise ValueError("coordinate length does not match the algebra dimension")

    def _check(self, other: "AlgebraElement"):
        if other.algebra is not self.algebra:
            raise MixedAlgebras("elements belong to different algebras")

    def matrix(self) -> np.ndarray:
        return self.algebra.matrix(self.coords)

    def __add__(self, other):
        self._check(other)
        return AlgebraElement(self.algebra, self.coords + other.coords)

    def __sub__(self, other):
        self._check(other)
        return AlgebraElement(self.algebra, self.coords - other.coords)

    def __mul__(self, c):
        return AlgebraElement(self.algebra, float(c) * self.coords)

    __rmul__ = __mul__

    def __truediv__(self, c):
        return AlgebraElement(self.algebra, self.coords / float(c))

    def __neg__(self):
        return AlgebraElement(self.algebra, -self.coords)


def build_algebra(spec) -> MatrixLieAlgebra:
    """Build an algebra from a config mapping.

    Parameters
    ----------
    spec : dict
        ``{"family": "sl", "n": 2}``, ``{"family": "so", "n": 3}`` for
        so(n,1), or ``{"family": "custom", "basis": [[...], ...]}``.
    """
    family = spec.get("family")
    if family == "sl":
        n = int(spec["n"])
        if n < 2 or n * n - 1 > 64:
            raise ValueError("sl(n) needs 2 <= n <= 8")
        return MatrixLieAlgebra(np.array(_sl_basis(n)), "sl", n)
    if family == "so":
        n = int(spec["n"])
        if n < 2 or n * (n + 1) // 2 > 64:
            raise ValueError("so(n,1) needs 2 <= n <= 10")
        return MatrixLieAlgebra(np.array(_so_basis(n)), "so", n)
    if family == "custom":
        basis = np.asarray(spec["basis"], dtype=float)
        if basis.shape[0] > 64:
            raise ValueError("custom algebras are limited to dim <= 64")
        return MatrixLieAlgebra(basis, "custom", None)
    raise ValueError(f"unknown algebra family {family!r}")


def bracket(x: AlgebraElement, y: AlgebraElement) -> AlgebraElement:
    x._check(y)
    return AlgebraElement(x.algebra, x.algebra.bracket_coords(x.coords, y.coords))


def killing_form(x: AlgebraElement, y: AlgebraElement) -> float:
    """``B(X, Y) = tr(ad X ad Y)``."""
    x._check(y)
    return float(x.algebra.killing_coords(x.coords, y.coords))


def algebra_label(alg: MatrixLieAlgebra) -> str:
    if alg.family_tag == "sl":
        return f"sl({alg.n},R)"
    if alg.family_tag == "so":
        return f"so({alg.n},1)"
    return f"custom(dim={alg.dim})"
