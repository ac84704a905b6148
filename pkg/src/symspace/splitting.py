"""High/low splitting of compactly supported functions by mollification,
on R^d and on the codimension-one subgroup S' = A'N.

Phi_2 is the mollified part and Phi_1 = Phi - Phi_2 the remainder.  On S'
the split is assembled from Euclidean splits in local exponential
coordinates around the points of a lattice, glued with a squared-cosine
partition of unity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import integrate as sp_integrate
from scipy.special import gamma as gamma_fn

from .errors import BadExponent, SupportLeak
from .quadrature import QuadratureGrid, axis_rule, evaluate_chunked
from .solvable import SChart

CASE_CONSTANT = 4.0       # Case 1 whenever lambda >= eps0 / CASE_CONSTANT
GRAM_DISTORTION = 2.0
LEAK_TOL = 1e-10


def _bump_profile(r2):
    out = np.zeros_like(r2)
    inside = r2 < 1.0
    out[inside] = np.exp(-1.0 / (1.0 - r2[inside]))
    return out


@lru_cache(maxsize=16)
def bump_mass(d: int) -> float:
    """Integral of exp(-1/(1-|z|^2)) over the unit ball of R^d."""
    sphere = 2.0 * math.pi ** (d / 2) / gamma_fn(d / 2)
    val, _ = sp_integrate.quad(lambda r: r ** (d - 1) * math.exp(-1.0 / (1.0 - r * r)),
                               0.0, 1.0, epsabs=1e-15, epsrel=1e-13, limit=200)
    return sphere * val


class Mollifier:
    """Discrete rule for convolution with the normalised Friedrichs bump.

    Tensor Gauss-Legendre nodes of the cube are restricted to the open unit
    ball; ``weights`` sum to one exactly and ``grad_weights`` discretise
    convolution with the gradient of the bump.

    Parameters
    ----------
    d : int
    order : int
        Nodes per axis.
    """

    def __init__(self, d: int, order: int | None = None):
        self.d = d
        order = order or {1: 96, 2: 32, 3: 12}.get(d, 6)
        x, w = axis_rule(-1.0, 1.0, order)
        mesh = np.meshgrid(*([x] * d), indexing="ij")
        z = np.stack([g.ravel() for g in mesh], axis=-1)
        wt = np.ones(len(z))
        for g in np.meshgrid(*([w] * d), indexing="ij"):
            wt = wt * g.ravel()
        r2 = np.sum(z * z, axis=-1)
        keep = r2 < 1.0
        z, wt, r2 = z[keep], wt[keep], r2[keep]
        mass = bump_mass(d)
        eta = _bump_profile(r2) / mass
        self.nodes = z
        self.raw_mass = float(np.sum(wt * eta))
        self.weights = wt * eta / self.raw_mass
        deta = eta[:, None] * (-2.0 * z / (1.0 - r2)[:, None] ** 2)
        self.grad_weights = wt[:, None] * deta / self.raw_mass

    def __len__(self):
        return len(self.nodes)

    def mass_error(self) -> float:
        return abs(self.raw_mass - 1.0)

    def density(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        return _bump_profile(np.sum(z * z, axis=-1)) / bump_mass(self.d)


@dataclass
class SplitResult:
    """Split ``Phi = phi1 + phi2`` with measured bound ratios.

    ``measured`` holds ``sup_phi1``, ``sup_phi2``, ``sup_grad_phi2``,
    ``lp_norm``, ``grad_lp_norm``, ``w1p_norm``, the three normalised
    ratios and ``exactness`` (max |phi1 + phi2 - Phi| on the evaluation set).
    """

    phi1: object
    phi2: object
    lam: float
    p: float
    case: str
    measured: dict = field(default_factory=dict)


def _grad(phi, x, h=1e-5):
    if hasattr(phi, "grad"):
        return phi.grad(x)
    cols = []
    for k in range(x.shape[-1]):
        e = np.zeros(x.shape[-1])
        e[k] = h
        cols.append((phi(x + e) - phi(x - e)) / (2 * h))
    return np.stack(cols, axis=-1)


def lp_norm(values, weights, p) -> float:
    return float(np.sum(np.abs(values) ** p * weights) ** (1.0 / p))


def _conv_rd(phi, x, lam, moll: Mollifier, chunk=4096):
    """``(phi * eta_lam)(x)`` and its gradient on R^d."""
    vals, grads = [], []
    for i in range(0, len(x), chunk):
        xs = x[i:i + chunk]
        q = xs[:, None, :] - lam * moll.nodes[None, :, :]
        f = phi(q)
        vals.append(f @ moll.weights)
        grads.append(np.einsum("pk,kd->pd", f, moll.grad_weights) / lam)
    return np.concatenate(vals), np.concatenate(grads)


def _ratios(meas, lam, p, d, grad_norm_key):
    meas["ratio_phi1"] = meas["sup_phi1"] / (lam ** (1 - d / p) * meas[grad_norm_key]) \
        if meas[grad_norm_key] > 0 else 0.0
    meas["ratio_phi2"] = meas["sup_phi2"] / (lam ** (-d / p) * meas["lp_norm"]) \
        if meas["lp_norm"] > 0 else 0.0
    meas["ratio_grad_phi2"] = meas["sup_grad_phi2"] / (lam ** (-d / p) * meas[grad_norm_key]) \
        if meas[grad_norm_key] > 0 else 0.0
    return meas


def mollify_split_rd(phi, lam: float, p: float, grid: QuadratureGrid, eval_points=None,
                     mollifier: Mollifier | None = None) -> SplitResult:
    """Euclidean split ``Phi_2 = Phi * eta_lam``, ``Phi_1 = Phi - Phi_2``.

    Norms are computed by quadrature on ``grid``; suprema are taken over
    ``eval_points`` (default: the grid nodes).
    """
    d = grid.dim
    if p <= d:
        raise BadExponent(f"need p > d (p={p}, d={d})")
    if lam <= 0:
        raise ValueError("lambda must be positive")
    moll = mollifier or Mollifier(d)

    def phi2(x):
        return _conv_rd(phi, np.atleast_2d(x), lam, moll)[0]

    def phi1(x):
        x = np.atleast_2d(x)
        return phi(x) - phi2(x)

    nodes, w = grid.nodes, grid.weights
    vals = evaluate_chunked(phi, nodes)
    grad_abs = np.linalg.norm(_grad(phi, nodes), axis=-1)
    pts = nodes if eval_points is None else np.atleast_2d(eval_points)
    base = phi(pts)
    v2, g2 = _conv_rd(phi, pts, lam, moll)
    v1 = base - v2
    edge = grid.boundary_nodes(order=6)
    e2, _ = _conv_rd(phi, edge, lam, moll)
    scale = max(np.abs(vals).max(), 1e-300)
    if max(np.abs(e2).max(), np.abs(phi(edge)).max()) > LEAK_TOL * scale:
        raise SupportLeak("split pieces reach the grid boundary")
    meas = {
        "sup_phi1": float(np.abs(v1).max()),
        "sup_phi2": float(np.abs(v2).max()),
        "sup_grad_phi2": float(np.linalg.norm(g2, axis=-1).max()),
        "lp_norm": lp_norm(vals, w, p),
        "grad_lp_norm": lp_norm(grad_abs, w, p),
        "exactness": float(np.abs(v1 + v2 - base).max()),
        "mollifier_nodes": len(moll),
    }
    meas["w1p_norm"] = meas["lp_norm"] + meas["grad_lp_norm"]
    _ratios(meas, lam, p, d, "grad_lp_norm")
    return SplitResult(phi1, phi2, lam, p, "euclidean", meas)


# ---------------------------------------------------------------------------
# the subgroup S'

def gram_distortion(chart: SChart, x) -> np.ndarray:
    """``max(lmax, 1/lmin)`` of the frame Gram matrix E E^T at coordinates x."""
    e = chart.frame_matrix(x)
    ev = np.linalg.eigvalsh(e @ np.swapaxes(e, -1, -2))
    return np.maximum(ev[..., -1], 1.0 / ev[..., 0])


def epsilon0(chart: SChart, max_radius=4.0, samples=256, seed=0, tol=1e-3) -> float:
    """Largest cube radius on which the Gram distortion stays within 2.

    The distortion is sampled at the cube corners, face centres and random
    interior points; the radius is found by bisection and capped at
    ``max_radius`` (reached when the chart is Euclidean, e.g. abelian N).
    """
    d = chart.m
    rng = np.random.default_rng(seed)
    corners = np.array(np.meshgrid(*([[-1.0, 1.0]] * d), indexing="ij")).reshape(d, -1).T
    faces = np.concatenate([np.eye(d), -np.eye(d)])
    inner = rng.uniform(-1, 1, size=(samples, d))
    unit = np.concatenate([corners, faces, inner])

    def ok(r):
        return bool(np.all(gram_distortion(chart, r * unit) <= GRAM_DISTORTION))

    if ok(max_radius):
        return float(max_radius)
    lo, hi = 0.0, max_radius
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        lo, hi = (mid, hi) if ok(mid) else (lo, mid)
    return float(lo)


class LatticePartition:
    """Squared-cosine partition of unity on S' anchored at a point.

    With ``v`` the coordinates of ``anchor^{-1} s``, the weight of lattice
    point ``k`` is ``prod_i cos^2(pi (v_i - k_i h) / (2 h))`` for
    ``|v - k h|_inf < h`` and zero otherwise.  These weights sum to one
    identically.  The local chart of piece ``k`` is centred at
    ``anchor * (k h)``.
    """

    def __init__(self, chart: SChart, spacing: float, anchor=None):
        self.chart = chart
        self.h = float(spacing)
        self.anchor = np.zeros(chart.m) if anchor is None else np.asarray(anchor, dtype=float)
        self._anchor_inv = chart.inverse(self.anchor)

    def relative(self, x):
        return self.chart.multiply(self._anchor_inv, x)

    def weight(self, v, k):
        """Weight of lattice index ``k`` at anchor-relative coordinates ``v``."""
        u = (v - k * self.h) / self.h
        inside = np.all(np.abs(u) < 1.0, axis=-1)
        return np.where(inside, np.prod(np.cos(0.5 * np.pi * u) ** 2, axis=-1), 0.0)

    def center(self, k):
        return self.chart.multiply(self.anchor, k * self.h)


def split_on_sprime(phi, lam: float, p: float, chart: SChart, grid: QuadratureGrid,
                    eps0: float | None = None, anchor=None, eval_points=None,
                    mollifier: Mollifier | None = None) -> SplitResult:
    """Split a scalar ``phi`` on S' (coordinates of ``chart``).

    Case 1 (``lam >= eps0 / 4``) returns ``(phi, 0)`` and measures the
    Sobolev ratio ``sup|phi| / ||phi||_{W^{1,p}}``.  Case 2 glues Euclidean
    mollifications of the pieces ``chi_k phi`` taken in local exponential
    coordinates centred at the lattice points.

    ``grid`` must use the ``dV_via_NA`` density of ``chart`` so that norms
    are taken for the Haar measure of S'.
    """
    d = chart.m
    if p <= d:
        raise BadExponent(f"need p > dim S' (p={p}, dim={d})")
    if lam <= 0:
        raise ValueError("lambda must be positive")
    if eps0 is None:
        eps0 = epsilon0(chart)
    nodes = grid.nodes
    w = grid.weights * grid.density(nodes)
    vals = evaluate_chunked(phi, nodes)
    dphi = _grad(phi, nodes)
    grad_abs = np.linalg.norm(chart.frame_derivative(dphi, nodes), axis=-1)
    meas = {"lp_norm": lp_norm(vals, w, p), "grad_lp_norm": lp_norm(grad_abs, w, p),
            "eps0": float(eps0), "chi_radius": 0.5 * eps0}
    meas["w1p_norm"] = meas["lp_norm"] + meas["grad_lp_norm"]
    pts = nodes if eval_points is None else np.atleast_2d(eval_points)
    base = phi(pts)

    if lam >= eps0 / CASE_CONSTANT:
        meas.update(sup_phi1=float(np.abs(base).max()), sup_phi2=0.0, sup_grad_phi2=0.0,
                    exactness=0.0)
        meas["sobolev_ratio"] = meas["sup_phi1"] / meas["w1p_norm"] if meas["w1p_norm"] else 0.0
        _ratios(meas, lam, p, d, "w1p_norm")
        return SplitResult(phi, lambda x: np.zeros(len(np.atleast_2d(x))), lam, p, "case1", meas)

    moll = mollifier or Mollifier(d)
    part = LatticePartition(chart, 0.5 * eps0, anchor)
    margin = 2.0 * lam  # allowance for the mollifier shift seen in anchor coordinates
    width = int(np.floor(2.0 + 2.0 * margin / part.h)) + 1
    offsets = np.array(np.meshgrid(*([np.arange(width)] * d), indexing="ij")).reshape(d, -1).T

    def pairs(v):
        """(point index, lattice index) pairs whose piece may be nonzero near v."""
        base = np.ceil((v - part.h - margin) / part.h)
        ks = base[:, None, :] + offsets[None, :, :]
        ok = np.all(np.abs(v[:, None, :] - ks * part.h) < part.h + margin, axis=-1)
        pi, oi = np.nonzero(ok)
        return pi, ks[pi, oi]

    def pieces(x, with_grad, chunk=2048):
        """Sum over lattice pieces at global points x."""
        x = np.atleast_2d(x)
        v = part.relative(x)
        total1 = np.zeros(len(x))
        total2 = np.zeros(len(x))
        grad2 = np.zeros((len(x), d))
        pi_all, k_all = pairs(v)
        for s in range(0, len(pi_all), chunk):
            pi, k = pi_all[s:s + chunk], k_all[s:s + chunk]
            kh = k * part.h
            ul = chart.multiply(chart.inverse(kh), v[pi])  # local coordinates
            q_rel = chart.multiply(kh[:, None, :], ul[:, None, :] - lam * moll.nodes[None, :, :])
            piece = part.weight(q_rel, k[:, None, :]) * phi(chart.multiply(part.anchor, q_rel))
            conv = piece @ moll.weights
            back_rel = chart.multiply(kh, ul)
            own = part.weight(back_rel, k) * phi(chart.multiply(part.anchor, back_rel))
            total2 += np.bincount(pi, conv, minlength=len(x))
            total1 += np.bincount(pi, own - conv, minlength=len(x))
            if with_grad:
                du = np.einsum("pk,kd->pd", piece, moll.grad_weights) / lam
                fd = chart.frame_derivative(du, ul)
                for a in range(d):
                    grad2[:, a] += np.bincount(pi, fd[:, a], minlength=len(x))
        return total1, total2, grad2

    def phi1(x):
        return pieces(x, False)[0]

    def phi2(x):
        return pieces(x, False)[1]

    v1, v2, g2 = pieces(pts, True)
    edge = grid.boundary_nodes(order=4)
    e1, e2, _ = pieces(edge, False)
    scale = max(np.abs(vals).max(), 1e-300)
    if max(np.abs(e1).max(), np.abs(e2).max()) > LEAK_TOL * scale:
        raise SupportLeak("split pieces reach the grid boundary")
    meas.update(
        sup_phi1=float(np.abs(v1).max()),
        sup_phi2=float(np.abs(v2).max()),
        sup_grad_phi2=float(np.linalg.norm(g2, axis=-1).max()),
        exactness=float(np.abs(v1 + v2 - base).max()),
        mollifier_nodes=len(moll),
    )
    _ratios(meas, lam, p, d, "w1p_norm")
    return SplitResult(phi1, phi2, lam, p, "case2", meas)
