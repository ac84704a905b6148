"""Tensor Gauss-Legendre quadrature on coordinate boxes of S and the Haar
measure bookkeeping that goes with NA / AN exponential coordinates."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.linalg import expm

from .cartan import IwasawaStructure
from .errors import BoundaryMass
from .solvable import SChart

DEFAULT_ORDER = 24
ERROR_ORDER = 16
BOUNDARY_TOL = 1e-12
CHUNK = 1 << 16
DENSITY_MODES = ("dn_da", "dV_via_NA", "dV_via_AN")


@lru_cache(maxsize=64)
def _leggauss(order: int):
    return leggauss(order)


def axis_rule(lo, hi, order, panels=1):
    """Composite Gauss-Legendre nodes and weights on [lo, hi]."""
    x, w = _leggauss(int(order))
    edges = np.linspace(lo, hi, int(panels) + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    nodes = (mid[:, None] + half[:, None] * x).ravel()
    weights = (half[:, None] * w).ravel()
    return nodes, weights


def _per_axis(v, d):
    v = np.atleast_1d(v)
    return np.broadcast_to(v, (d,)).astype(int)


@dataclass(eq=False)
class QuadratureGrid:
    """Tensor-product rule on a box in (t, y) coordinates.

    Parameters
    ----------
    box : array (d, 2)
    order, panels : int or sequence of int
        Gauss-Legendre order and number of equal panels per axis.
    density_mode : {"dn_da", "dV_via_NA", "dV_via_AN"}
        ``dn_da`` integrates against Lebesgue measure in the coordinates.
        ``dV_via_NA`` weights NA coordinates by ``exp(-2 rho(t))``.
        ``dV_via_AN`` reads the box as AN coordinates ``exp(t.H) exp(y.Y)``,
        where the Riemannian volume is ``dt dy``, and evaluates integrands
        at the corresponding NA point.
    chart : SChart, optional
        Needed for the two ``dV`` modes.
    """

    box: np.ndarray
    order: object = DEFAULT_ORDER
    panels: object = 1
    density_mode: str = "dn_da"
    chart: SChart | None = None
    error_order: object = ERROR_ORDER
    axes: list = field(init=False, repr=False)

    def __post_init__(self):
        self.box = np.atleast_2d(np.asarray(self.box, dtype=float))
        if self.density_mode not in DENSITY_MODES:
            raise ValueError(f"density_mode must be one of {DENSITY_MODES}")
        if self.density_mode != "dn_da" and self.chart is None:
            raise ValueError("a chart is required for volume densities")
        if np.any(self.box[:, 1] <= self.box[:, 0]):
            raise ValueError("box intervals must have positive length")
        d = self.dim
        self.order = _per_axis(self.order, d)
        self.panels = _per_axis(self.panels, d)
        self.error_order = _per_axis(self.error_order, d)
        self.axes = [axis_rule(lo, hi, o, p)
                     for (lo, hi), o, p in zip(self.box, self.order, self.panels)]

    @property
    def dim(self) -> int:
        return self.box.shape[0]

    @property
    def shape(self):
        return tuple(len(a[0]) for a in self.axes)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @property
    def nodes(self) -> np.ndarray:
        mesh = np.meshgrid(*[a[0] for a in self.axes], indexing="ij")
        return np.stack([g.ravel() for g in mesh], axis=-1)

    @property
    def weights(self) -> np.ndarray:
        w = self.axes[0][1]
        for a in self.axes[1:]:
            w = np.multiply.outer(w, a[1])
        return np.asarray(w).ravel()

    def volume(self) -> float:
        return float(np.prod(self.box[:, 1] - self.box[:, 0]))

    def coarse(self) -> "QuadratureGrid":
        return QuadratureGrid(self.box, self.error_order, self.panels, self.density_mode,
                              self.chart, self.error_order)

    def with_order(self, order) -> "QuadratureGrid":
        return QuadratureGrid(self.box, order, self.panels, self.density_mode,
                              self.chart, self.error_order)

    def evaluation_points(self, nodes=None) -> np.ndarray:
        """Points at which integrands are evaluated (NA coordinates)."""
        nodes = self.nodes if nodes is None else nodes
        if self.density_mode == "dV_via_AN":
            t, y = self.chart.split(nodes)
            return np.concatenate([t, self.chart.ad_scale(t) * y], axis=-1)
        return nodes

    def density(self, nodes=None) -> np.ndarray:
        nodes = self.nodes if nodes is None else nodes
        if self.density_mode == "dV_via_NA":
            return self.chart.density(nodes)
        return np.ones(len(nodes))

    def boundary_nodes(self, order=8) -> np.ndarray:
        """Nodes on all 2d faces of the box (Gauss nodes along the face)."""
        pts = []
        for k in range(self.dim):
            axes = [axis_rule(lo, hi, order)[0] for lo, hi in self.box]
            for side in (0, 1):
                axes_k = list(axes)
                axes_k[k] = np.array([self.box[k, side]])
                mesh = np.meshgrid(*axes_k, indexing="ij")
                pts.append(np.stack([g.ravel() for g in mesh], axis=-1))
        return np.concatenate(pts)

    def to_json(self) -> dict:
        return {"box": self.box.tolist(), "order": self.order.tolist(),
                "panels": self.panels.tolist(), "density_mode": self.density_mode}


def grid_from_spec(spec: dict, chart: SChart | None = None) -> QuadratureGrid:
    return QuadratureGrid(np.asarray(spec["box"], dtype=float), spec.get("order", DEFAULT_ORDER),
                          spec.get("panels", 1), spec.get("density_mode", "dn_da"), chart,
                          spec.get("error_order", ERROR_ORDER))


def evaluate_chunked(fun, pts, chunk=CHUNK) -> np.ndarray:
    if len(pts) <= chunk:
        return np.asarray(fun(pts), dtype=float)
    return np.concatenate([np.asarray(fun(pts[i:i + chunk]), dtype=float)
                           for i in range(0, len(pts), chunk)])


def _raw_integral(fun, grid: QuadratureGrid) -> float:
    nodes = grid.nodes
    vals = evaluate_chunked(fun, grid.evaluation_points(nodes))
    return float(np.sum(vals * grid.density(nodes) * grid.weights))


def boundary_mass(fun, grid: QuadratureGrid, interior_max=None) -> float:
    """Largest weighted |F| on the box faces relative to the interior maximum."""
    bn = grid.boundary_nodes()
    edge = np.abs(evaluate_chunked(fun, grid.evaluation_points(bn)) * grid.density(bn))
    if interior_max is None:
        nodes = grid.coarse().nodes
        interior_max = np.abs(evaluate_chunked(fun, grid.evaluation_points(nodes))
                              * grid.density(nodes)).max()
    return float(edge.max() / max(1.0, interior_max))


def integrate(fun, grid: QuadratureGrid, truncation_ok=False):
    """Integrate ``fun`` over the grid box.

    Returns
    -------
    value, error_estimate : float
        The error estimate is the difference to the lower-order rule.
    """
    if not truncation_ok:
        leak = boundary_mass(fun, grid)
        if leak > BOUNDARY_TOL:
            raise BoundaryMass(f"integrand reaches the box boundary (relative {leak:.2e})")
    value = _raw_integral(fun, grid)
    coarse = _raw_integral(fun, grid.coarse())
    return value, abs(value - coarse)


# ---------------------------------------------------------------------------
# integration formulas

def ad_exp(iw: IwasawaStructure, log_a) -> np.ndarray:
    """Matrix of Ad(exp(log_a)) = exp(ad(log_a)) on algebra coordinates."""
    return expm(iw.algebra.ad(np.asarray(log_a, dtype=float)))


def jacobian_check(log_a, iw: IwasawaStructure):
    """``(exp(2 rho(log a)), det(Ad(a) restricted to n))``."""
    log_a = np.asarray(log_a, dtype=float)
    lhs = float(np.exp(2.0 * iw.evaluate(iw.rho, log_a)))
    nb = iw.n_basis  # B_theta-orthonormal rows
    img = (ad_exp(iw, log_a) @ nb.T).T
    mat = img @ iw.cartan.b_theta @ nb.T
    return lhs, float(np.linalg.det(mat))


def _grad_or_fd(phi, pts, h=1e-5):
    if hasattr(phi, "grad"):
        return phi.grad(pts)
    cols = []
    for k in range(pts.shape[-1]):
        e = np.zeros(pts.shape[-1])
        e[k] = h
        cols.append((phi(pts + e) - phi(pts - e)) / (2 * h))
    return np.stack(cols, axis=-1)


def ibp_residual_N(phi, j: int, chart: SChart, grid: QuadratureGrid):
    """``|int_N (Y_j phi) dn|`` for a scalar ``phi`` of the y coordinates.

    Returns ``(residual, error_estimate)``.
    """
    def integrand(y):
        p = chart.poly(y)[..., j, :]
        return np.einsum("...l,...l->...", p, _grad_or_fd(phi, y))
    if boundary_mass(phi, grid) > BOUNDARY_TOL:
        raise BoundaryMass("phi is not supported inside the y-box")
    val, err = integrate(integrand, grid, truncation_ok=True)
    return abs(val), err


def ibp_residual_A(phi, i: int, grid: QuadratureGrid):
    """``|int d phi / d t^i dt|`` over a box in A' coordinates."""
    if boundary_mass(phi, grid) > BOUNDARY_TOL:
        raise BoundaryMass("phi is not supported inside the t-box")
    val, err = integrate(lambda t: _grad_or_fd(phi, t)[..., i], grid, truncation_ok=True)
    return abs(val), err


def conjugation_change_of_vars(fun, log_a, chart: SChart, grid: QuadratureGrid):
    """Compare ``int_N F dn`` with ``det(Ad a|n) int_N F(a n a^-1) dn``.

    ``F`` is a function of the y coordinates.  The conjugation is computed
    from ``exp(ad log a)`` on the algebra, not from the root values.

    Returns ``(lhs, rhs, error_estimate)``.
    """
    iw = chart.frame.iw
    g0 = iw.cartan.g0_gram
    adm = ad_exp(iw, log_a)
    conj = (chart.Y @ adm.T) @ g0 @ chart.Y.T  # row j: Y-coords of Ad(a) Y_j

    def conjugated(y):
        return fun(np.asarray(y) @ conj)

    lhs, e1 = integrate(fun, grid)
    val, e2 = integrate(conjugated, grid)
    _, det = jacobian_check(log_a, iw)
    return lhs, det * val, e1 + abs(det) * e2


def left_translation_check(fun, s0, grid: QuadratureGrid, truncation_ok=False):
    """``(int F dV, int F(s0^-1 s) dV)`` on an NA-coordinate grid."""
    chart = grid.chart
    inv = chart.inverse(np.asarray(s0, dtype=float))
    a, ea = integrate(fun, grid, truncation_ok)
    b, eb = integrate(lambda x: fun(chart.multiply(inv, x)), grid, truncation_ok)
    return a, b, ea + eb
