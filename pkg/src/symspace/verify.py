"""Divergence-free test fields, the duality pairing ratio and the
auxiliary inequalities (codimension-one pairing, Hardy, sphere average)."""

from __future__ import annotations

import numpy as np
from scipy.linalg import expm
from scipy.stats import norm as normal_dist
from scipy.stats import qmc

from .cartan import CartanData, IwasawaStructure, max_rho_direction
from .errors import NoDecay, NoPositiveRho, NotDivFree, SupportLeak, ZeroDenominator
from .fields import GaussianField, GaussianSum, StreamField, random_gaussian_sum
from .quadrature import QuadratureGrid, evaluate_chunked
from .solvable import FieldOnS, SChart, connection_coefficients, divergence, gradient_norm

ODE_STEP = 1e-3  # in units of the t^1-extent of the free data
DECAY_TOL = 1e-10
DIV_TOL = 1e-6
LEAK_TOL = 1e-10
BLOCK_POINTS = 1 << 18


# ---------------------------------------------------------------------------
# divergence-free fields

class DivFreeField(FieldOnS):
    """Field whose first frame coefficient is solved from the others.

    Components 2..m are taken from ``free``.  The coefficient of
    ``X_1 = d/dt^1`` solves

        d f^1 / dt^1 - 2 rho(H_1) f^1 = -g,
        g = sum_{l >= 2} X_l f^l - 2 sum_{2 <= i <= r} rho(H_i) f^i,

    integrated downwards along each t^1-line from ``t_range[1]`` where
    ``f^1 = 0``.  RK4 with a fixed step is used on a schedule and the
    nodes are joined by quintic Hermite interpolation; below ``t_range[0]``
    the source vanishes and the exact exponential tail is used.

    Parameters
    ----------
    chart : SChart
        Full chart of S (``H_1`` first).
    free : FieldOnS
        Provides components 2..m and their derivatives; component 1 ignored.
    t_range : (float, float)
        t^1-interval outside of which the free data vanish.
    rel_step : float
        ODE step as a fraction of the length of ``t_range``.
    """

    def __init__(self, chart: SChart, free: FieldOnS, t_range, rel_step=ODE_STEP, fd_step=1e-4):
        if chart.r == 0 or chart.h_index[0] != 0:
            raise ValueError("the chart must contain H_1 as its first coordinate")
        self.chart = chart
        self.free = free
        self.t_bot, self.t_top = float(t_range[0]), float(t_range[1])
        n_steps = max(2, int(np.ceil(1.0 / rel_step - 1e-9)))
        self.n_steps = n_steps + (n_steps % 2)
        self.dt = (self.t_top - self.t_bot) / self.n_steps
        self.fd_step = fd_step
        self.rate = 2.0 * float(chart.rho[0])
        self.richardson_error = 0.0
        super().__init__(self._values, self._jac)

    def source(self, x) -> np.ndarray:
        r = self.chart.r
        jac = self.free.coord_jac(x)
        diag = np.einsum("...lc,...cl->...l", self.chart.frame_matrix(x)[..., 1:, :], jac[..., 1:])
        out = diag.sum(axis=-1)
        if r > 1:
            out = out - 2.0 * self.free.values(x)[..., 1:r] @ self.chart.rho[1:r]
        return out

    def _march(self, g, stride):
        """RK4 downwards using source samples ``g[::stride]`` at half steps."""
        a = self.rate
        h = -self.dt * stride
        gs = g[::stride]
        steps = (len(gs) - 1) // 2
        f = np.zeros((steps + 1,) + g.shape[1:])
        cur = f[0]
        for j in range(steps):
            g0, g1, g2 = gs[2 * j], gs[2 * j + 1], gs[2 * j + 2]
            k1 = a * cur - g0
            k2 = a * (cur + 0.5 * h * k1) - g1
            k3 = a * (cur + 0.5 * h * k2) - g1
            k4 = a * (cur + h * k3) - g2
            cur = cur + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
            f[j + 1] = cur
        return f

    def solve_first(self, x):
        """``(f^1, d f^1 / dt^1)`` at points ``x`` of shape (P, m)."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        lines, inv = np.unique(x[:, 1:], axis=0, return_inverse=True)
        inv = inv.ravel()
        n_half = 2 * self.n_steps + 1
        tau = self.t_top - 0.5 * self.dt * np.arange(n_half)
        block = max(1, BLOCK_POINTS // n_half)
        f_nodes = np.empty((self.n_steps + 1, len(lines)))
        slopes = np.empty_like(f_nodes)
        curv = np.empty_like(f_nodes)
        rich = 0.0
        half = 0.5 * self.dt
        for s in range(0, len(lines), block):
            ln = lines[s:s + block]
            pts = np.empty((n_half, len(ln), x.shape[1]))
            pts[..., 0] = tau[:, None]
            pts[..., 1:] = ln[None, :, :]
            g = evaluate_chunked(self.source, pts.reshape(-1, x.shape[1])).reshape(n_half, len(ln))
            fine = self._march(g, 1)
            coarse = self._march(g, 2)
            rich = max(rich, float(np.abs(fine[::2] - coarse).max()) / 15.0)
            # dg/dtau by the five-point stencil; the source vanishes past both ends
            gp = np.pad(g, ((2, 2), (0, 0)))
            dg = -(-gp[4:] + 8 * gp[3:-1] - 8 * gp[1:-3] + gp[:-4]) / (12 * half)
            slope = self.rate * fine - g[::2]
            f_nodes[:, s:s + block] = fine
            slopes[:, s:s + block] = slope
            curv[:, s:s + block] = self.rate * slope - dg[::2]
        self.richardson_error = rich
        t = x[:, 0]
        u = (self.t_top - t) / self.dt
        j = np.clip(np.floor(u).astype(int), 0, self.n_steps - 1)
        th = np.clip(u - j, 0.0, 1.0)
        # quintic Hermite in th, where tau = tau_j - th * dt
        h = self.dt
        p0, p1 = f_nodes[j, inv], f_nodes[j + 1, inv]
        d0, d1 = -h * slopes[j, inv], -h * slopes[j + 1, inv]
        s0, s1 = h * h * curv[j, inv], h * h * curv[j + 1, inv]
        t2, t3, t4, t5 = th ** 2, th ** 3, th ** 4, th ** 5
        val = ((1 - 10 * t3 + 15 * t4 - 6 * t5) * p0 + (th - 6 * t3 + 8 * t4 - 3 * t5) * d0
               + (0.5 * t2 - 1.5 * t3 + 1.5 * t4 - 0.5 * t5) * s0
               + (0.5 * t3 - t4 + 0.5 * t5) * s1
               + (-4 * t3 + 7 * t4 - 3 * t5) * d1 + (10 * t3 - 15 * t4 + 6 * t5) * p1)
        dval = ((-30 * t2 + 60 * t3 - 30 * t4) * p0 + (1 - 18 * t2 + 32 * t3 - 15 * t4) * d0
                + (th - 4.5 * t2 + 6 * t3 - 2.5 * t4) * s0 + (1.5 * t2 - 4 * t3 + 2.5 * t4) * s1
                + (-12 * t2 + 28 * t3 - 15 * t4) * d1 + (30 * t2 - 60 * t3 + 30 * t4) * p1) / (-h)
        above = t >= self.t_top
        below = t < self.t_bot
        val[above] = 0.0
        dval[above] = 0.0
        tail = f_nodes[-1, inv[below]] * np.exp(self.rate * (t[below] - self.t_bot))
        val[below] = tail
        dval[below] = self.rate * tail
        return val, dval

    def _values(self, x):
        x = np.asarray(x, dtype=float)
        shape = x.shape
        flat = x.reshape(-1, shape[-1])
        out = np.array(self.free.values(flat), dtype=float)
        out[:, 0] = self.solve_first(flat)[0]
        return out.reshape(shape)

    def _jac(self, x):
        x = np.asarray(x, dtype=float)
        shape = x.shape
        flat = x.reshape(-1, shape[-1])
        m = shape[-1]
        jac = np.array(self.free.coord_jac(flat), dtype=float)
        shifted = [flat]
        for c in range(1, m):
            e = np.zeros(m)
            e[c] = self.fd_step
            shifted += [flat + e, flat - e]
        val, dval = self.solve_first(np.concatenate(shifted))
        p = len(flat)
        jac[:, 0, 0] = dval[:p]
        for c in range(1, m):
            plus = val[(2 * c - 1) * p:2 * c * p]
            minus = val[2 * c * p:(2 * c + 1) * p]
            jac[:, c, 0] = (plus - minus) / (2 * self.fd_step)
        return jac.reshape(shape[:-1] + (m, m))

    def support_box(self, nsig=8.0):
        box = np.array(self.free.support_box(nsig), dtype=float)
        box[0] = [self.t_bot, self.t_top]
        return box


def _zero_sum(m):
    return GaussianSum(np.zeros((1, m)), np.ones((1, m)), [0.0])


def make_divfree_field(spec: dict, chart: SChart, rng=None) -> DivFreeField:
    """Divergence-free field built from free data.

    ``spec["mode"]`` is ``"stream"`` (default) or ``"free"``.

    * ``stream``: components 2..m come from an antisymmetric Gaussian
      potential (random unless ``spec["potentials"]`` lists
      ``{"pair": [a, b], "centers", "widths", "amps"}``).  Such data have
      vanishing weighted line integrals, so the solved f^1 is compactly
      supported as well.
    * ``free``: components 2..m are Gaussian sums given in
      ``spec["components"]`` (one entry per component, ``None`` for zero).

    Other keys: ``rel_step`` (ODE step relative to the t^1-extent), ``box``
    (working box, default the support box), and for random data ``pairs``
    (index pairs of the potentials) or ``n_pairs``, ``n_bumps``,
    ``center_scale``, ``width_range``, ``amp_scale``.
    ``solver="analytic"`` (stream mode only) skips the ODE and returns the
    stream field itself, whose first component is known in closed form.

    Raises
    ------
    NoDecay
        If f^1 is larger than ``1e-10`` (relative) on the lower t^1 face of
        the working box.
    """
    rng = np.random.default_rng(rng)
    m = chart.m
    mode = spec.get("mode", "stream")
    kw = {k: spec[k] for k in ("n_bumps", "center_scale", "width_range", "amp_scale") if k in spec}
    if mode == "stream":
        if "potentials" in spec:
            pots = {tuple(p["pair"]): GaussianSum(p["centers"], p["widths"], p["amps"])
                    for p in spec["potentials"]}
        else:
            pairs = [(a, b) for a in range(m) for b in range(a + 1, m)]
            n_pairs = spec.get("n_pairs")
            if "pairs" in spec:
                pairs = [tuple(sorted(map(int, p))) for p in spec["pairs"]]
            elif n_pairs is not None and n_pairs < len(pairs):
                pick = rng.choice(len(pairs), size=n_pairs, replace=False)
                pairs = [pairs[i] for i in sorted(pick)]
            pots = {p: random_gaussian_sum(rng, m, **kw) for p in pairs}
        free = StreamField(chart, pots)
    elif mode == "free":
        comps = spec.get("components")
        if comps is None:
            sums = [_zero_sum(m)] + [random_gaussian_sum(rng, m, **kw) for _ in range(m - 1)]
        else:
            sums = [_zero_sum(m)]
            for c in comps[:m - 1]:
                sums.append(_zero_sum(m) if c is None else
                            GaussianSum(c["centers"], c["widths"], c["amps"]))
            sums += [_zero_sum(m)] * (m - len(sums))
        free = GaussianField(sums)
    else:
        raise ValueError(f"unknown field mode {mode!r}")
    solver = spec.get("solver", "ode")
    if solver == "analytic":
        if mode != "stream":
            raise ValueError("the analytic solver needs stream-mode data")
        free.box = np.asarray(spec.get("box", free.support_box()), dtype=float)
        return free
    if solver != "ode":
        raise ValueError(f"unknown solver {solver!r}")
    sbox = free.support_box()
    if sbox is None:
        sbox = np.tile([-1.0, 1.0], (m, 1))
    box = np.asarray(spec.get("box", sbox), dtype=float)
    field = DivFreeField(chart, free, (sbox[0, 0], sbox[0, 1]), spec.get("rel_step", ODE_STEP))
    field.box = box
    # the solved component must have died out at the lower face of the box
    probe = QuadratureGrid(box[1:], order=4).nodes if m > 1 else np.zeros((1, 0))
    low = np.concatenate([np.full((len(probe), 1), box[0, 0]), probe], axis=1)
    mid = np.concatenate([np.full((len(probe), 1), 0.5 * (sbox[0, 0] + sbox[0, 1])), probe], axis=1)
    edge = np.abs(field.solve_first(low)[0]).max()
    scale = max(np.abs(free.values(mid)).max(), 1e-300)
    if edge > DECAY_TOL * max(1.0, scale):
        raise NoDecay(f"f^1 is {edge:.2e} on the lower face; enlarge the box")
    return field


# ---------------------------------------------------------------------------
# pairing ratio

def _weighted(grid: QuadratureGrid):
    nodes = grid.nodes
    pts = grid.evaluation_points(nodes)
    return pts, grid.weights * grid.density(nodes)


def pairing_terms(f: FieldOnS, phi: FieldOnS, chart: SChart, grid: QuadratureGrid):
    """``(int <f, phi> dV, ||f||_{L^1(dV)}, ||grad phi||_{L^m(dV)})`` on a grid."""
    m = chart.m
    pts, w = _weighted(grid)
    fv = f.values(pts)
    pv = phi.values(pts)
    gamma = _gamma(chart)
    gn = np.concatenate([gradient_norm(phi, chart, pts[i:i + 8192], gamma)
                         for i in range(0, len(pts), 8192)])
    pair = float(np.sum(w * np.einsum("...l,...l->...", fv, pv)))
    l1 = float(np.sum(w * np.linalg.norm(fv, axis=-1)))
    gm = float(np.sum(w * gn ** m) ** (1.0 / m))
    return pair, l1, gm


def _gamma(chart: SChart):
    idx = list(chart.h_index) + list(range(chart.frame.r, chart.frame.m))
    g = connection_coefficients(chart.frame)
    return g[np.ix_(idx, idx, idx)]


def check_divergence(f: FieldOnS, chart: SChart, pts, tol=DIV_TOL, samples=48) -> float:
    """Max |div f| over a deterministic subsample of ``pts``; raises NotDivFree."""
    pts = np.atleast_2d(pts)
    vals = np.linalg.norm(f.values(pts), axis=-1)
    order = np.argsort(-vals, kind="stable")
    pick = pts[np.sort(order[:samples])]
    res = float(np.abs(divergence(f, chart, pick)).max())
    if res > tol:
        raise NotDivFree(f"divergence residual {res:.2e} exceeds {tol:.1e}")
    return res


def bb_ratio_terms(f: FieldOnS, phi: FieldOnS, chart: SChart, grid: QuadratureGrid,
                   div_tol=DIV_TOL, with_error=False) -> dict:
    """Pieces of the pairing ratio with optional coarse-rule error estimates."""
    div = check_divergence(f, chart, grid.evaluation_points(grid.coarse().nodes), div_tol)
    pair, l1, gm = pairing_terms(f, phi, chart, grid)
    if l1 == 0.0 or gm == 0.0:
        raise ZeroDenominator("||f||_1 or ||grad phi||_m vanishes")
    out = {"pairing": pair, "l1": l1, "grad_lm": gm, "ratio": abs(pair) / (l1 * gm),
           "divergence_residual": div}
    if with_error:
        cp, cl, cg = pairing_terms(f, phi, chart, grid.coarse())
        coarse = abs(cp) / (cl * cg) if cl and cg else 0.0
        out["ratio_error"] = abs(out["ratio"] - coarse)
    return out


def bb_ratio(f: FieldOnS, phi: FieldOnS, chart: SChart, grid: QuadratureGrid,
             div_tol=DIV_TOL) -> float:
    """``|int <f, phi> dV| / (||f||_{L^1(dV)} ||grad phi||_{L^m(dV)})``."""
    return bb_ratio_terms(f, phi, chart, grid, div_tol)["ratio"]


# ---------------------------------------------------------------------------
# codimension-one pairing

def _embed(chart: SChart, u, t1=0.0):
    u = np.atleast_2d(u)
    return np.concatenate([np.full((len(u), 1), t1), u], axis=1)


def _na_from_an(chart: SChart, u):
    r = chart.r
    tp, y = u[:, :r - 1], u[:, r - 1:]
    t = np.concatenate([np.zeros((len(u), 1)), tp], axis=1)
    return np.concatenate([tp, y * np.exp(t @ chart.alpha.T)], axis=1)


def sobolev_norm_aprime_n(phi: FieldOnS, chart: SChart, grid: QuadratureGrid,
                          an_coordinates=False) -> float:
    """``||phi(a' n)||_{W^{1,m}(dn da')}`` on the slice ``t^1 = 0``.

    By default ``grid`` holds NA coordinates ``(t', y)`` of the slice.  Writing
    ``a' n = (a' n a'^-1) a'`` turns ``dn da'`` into ``exp(-2 rho(t')) dt' dy``.
    With ``an_coordinates=True`` the grid is read as ``a' n`` directly, where
    the measure is plain Lebesgue; the two routes must agree.

    Raises
    ------
    SupportLeak
        If ``phi`` does not vanish on the grid faces.
    """
    m = chart.m
    u = grid.nodes
    if an_coordinates:
        pts = _embed(chart, _na_from_an(chart, u))
        w = grid.weights
        edge = _embed(chart, _na_from_an(chart, grid.boundary_nodes(order=4)))
    else:
        pts = _embed(chart, u)
        w = grid.weights * chart.density(pts)
        edge = _embed(chart, grid.boundary_nodes(order=4))
    pa = np.linalg.norm(phi.values(pts), axis=-1)
    ga = gradient_norm(phi, chart, pts, _gamma(chart))
    if np.abs(phi.values(edge)).max() > LEAK_TOL * max(pa.max(), 1e-300):
        raise SupportLeak("phi is not supported inside the A'N grid")
    return float(np.sum(w * (pa ** m + ga ** m)) ** (1.0 / m))


def codim1_terms(f: FieldOnS, phi: FieldOnS, chart: SChart, slice_grid: QuadratureGrid,
                 full_grid: QuadratureGrid, sobolev_grid: QuadratureGrid | None = None,
                 sobolev_an=False, div_tol=DIV_TOL) -> dict:
    """Terms of the codimension-one estimate for a frame with ``X_1 = H_1``.

    All three grids carry Lebesgue weights in NA coordinates, which is the
    measure ``dn da'`` (or ``dn da``).

    Parameters
    ----------
    slice_grid : QuadratureGrid
        Grid in ``(t^2..t^r, y)`` on the slice ``t^1 = 0``; used for the
        pairing and for the L^1 norm on ``N A'``.
    full_grid : QuadratureGrid
        Grid in all coordinates for the L^1 norm on ``N A``.
    sobolev_grid : QuadratureGrid, optional
        Grid for the Sobolev norm of ``phi`` (default ``slice_grid``), usually
        a rule on the support box of ``phi``.
    sobolev_an : bool
        Read ``sobolev_grid`` as ``a' n`` coordinates instead of NA ones.

    Returns
    -------
    dict
        ``lhs``, ``rhs``, ``ratio`` (0 when ``rhs`` vanishes), the three
        norms and the divergence residual found on the slice.

    Raises
    ------
    NotDivFree, SupportLeak
    """
    m = chart.m
    slice_pts = _embed(chart, slice_grid.nodes)
    wu = slice_grid.weights
    f_slice = f.values(slice_pts)
    f_full = f.values(full_grid.nodes)
    if not np.any(f_slice) and not np.any(f_full):
        return {"lhs": 0.0, "rhs": 0.0, "ratio": 0.0, "l1_slice": 0.0, "l1_full": 0.0,
                "w1m": 0.0, "divergence_residual": 0.0}
    scale = max(np.abs(f_full).max(), np.abs(f_slice).max())
    if np.abs(f.values(full_grid.boundary_nodes(order=4))).max() > LEAK_TOL * scale:
        raise SupportLeak("f is not supported inside the full grid")
    div = check_divergence(f, chart, slice_pts, div_tol)
    lhs = abs(float(np.sum(wu * f_slice[:, 0] * phi.values(slice_pts)[:, 0])))
    l1_slice = float(np.sum(wu * np.linalg.norm(f_slice, axis=-1)))
    l1_full = float(np.sum(full_grid.weights * np.linalg.norm(f_full, axis=-1)))
    w1m = sobolev_norm_aprime_n(phi, chart, slice_grid if sobolev_grid is None else sobolev_grid,
                                an_coordinates=sobolev_an)
    rhs = l1_slice ** (1.0 - 1.0 / m) * l1_full ** (1.0 / m) * w1m
    return {"lhs": lhs, "rhs": rhs, "ratio": lhs / rhs if rhs > 0 else 0.0,
            "l1_slice": l1_slice, "l1_full": l1_full, "w1m": w1m, "divergence_residual": div}


def codim1_pairing(f, phi, chart, slice_grid, full_grid, sobolev_grid=None):
    """``(lhs, rhs_bound)`` of the codimension-one estimate."""
    t = codim1_terms(f, phi, chart, slice_grid, full_grid, sobolev_grid)
    return t["lhs"], t["rhs"]


# ---------------------------------------------------------------------------
# Hardy inequalities

def hardy_check(h, lam: float, p: float, grid: QuadratureGrid):
    """``(int |h|^p e^{-lam t}, (p/lam)^p int |h'|^p e^{-lam t})`` on a 1-D grid."""
    if lam <= 0 or p < 1:
        raise ValueError("need lam > 0 and p >= 1")
    t = grid.nodes
    w = grid.weights * np.exp(-lam * t[:, 0])
    hv = h(t)
    edge = np.abs(h(grid.box.T.reshape(2, 1)))
    if hv.any() and edge.max() > LEAK_TOL * np.abs(hv).max():
        raise SupportLeak("h does not vanish at the interval ends")
    if hasattr(h, "grad"):
        dh = h.grad(t)[..., 0]
    else:
        eps = 1e-6
        dh = (h(t + eps) - h(t - eps)) / (2 * eps)
    lhs = float(np.sum(w * np.abs(hv) ** p))
    rhs = float((p / lam) ** p * np.sum(w * np.abs(dh) ** p))
    return lhs, rhs


def manifold_hardy_terms(phi: FieldOnS, p: float, chart: SChart, grid: QuadratureGrid,
                         direction=None, samples=2000, rng=0) -> dict:
    """``||phi||_{L^p(dV)}`` against ``p / (2 rho(H)) ||grad phi||_{L^p(dV)}``.

    ``direction`` is a unit vector of a (algebra coordinates); by default the
    sampled maximiser of rho is used.
    """
    iw = chart.frame.iw
    if direction is None:
        direction, rho_h = max_rho_direction(iw, samples, np.random.default_rng(rng))
    else:
        rho_h = float(iw.evaluate(iw.rho, np.asarray(direction, dtype=float)))
    if rho_h <= 0:
        raise NoPositiveRho(f"rho(H) = {rho_h!r}")
    c_p = p / (2.0 * rho_h)
    pts, w = _weighted(grid)
    gamma = _gamma(chart)
    pv = np.linalg.norm(phi.values(pts), axis=-1)
    gn = gradient_norm(phi, chart, pts, gamma)
    lhs = float(np.sum(w * pv ** p) ** (1.0 / p))
    grad = float(np.sum(w * gn ** p) ** (1.0 / p))
    bound = c_p * grad
    return {"lhs": lhs, "bound": bound, "c_p": c_p, "rho_h": rho_h,
            "ratio": lhs / bound if bound > 0 else 0.0}


def manifold_hardy_check(phi, p, chart, grid, direction=None):
    """``(lhs, ratio)`` with ``ratio = lhs / (C_p ||grad phi||_p)``."""
    t = manifold_hardy_terms(phi, p, chart, grid, direction)
    return t["lhs"], t["ratio"]


# ---------------------------------------------------------------------------
# sphere average and directions

def sphere_average_check(u, u_prime, samples: int, rng=None):
    """Monte Carlo ``E <u, v><u', v>`` over uniform unit ``v``.

    Returns
    -------
    monte_carlo, closed_form, standard_error : float
        ``closed_form = <u, u'> / m``.
    """
    if samples < 10_000:
        raise ValueError("use at least 1e4 samples")
    rng = np.random.default_rng(rng)
    u = np.asarray(u, dtype=float)
    up = np.asarray(u_prime, dtype=float)
    v = rng.normal(size=(samples, len(u)))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    prod = (v @ u) * (v @ up)
    return float(prod.mean()), float(u @ up) / len(u), float(prod.std(ddof=1) / np.sqrt(samples))


def p_orthonormal_basis(cartan: CartanData) -> np.ndarray:
    """Rows: a g0-orthonormal basis of p in algebra coordinates."""
    g0 = cartan.g0_gram
    basis = cartan.p_basis
    gram = basis @ g0 @ basis.T
    w, v = np.linalg.eigh(gram)
    return (v / np.sqrt(w)).T @ basis


def sample_directions(iw: IwasawaStructure, n_sobol: int, n_wall: int, rng=None,
                      wall_distance=1e-3):
    """Unit directions in p: scrambled Sobol points and near-wall directions.

    Sobol points of the unit cube are pushed to the sphere of p through the
    normal quantile.  Near-wall directions are ``Ad(k) H`` for a random
    ``k = exp(Z)``, ``Z`` in k, and a unit ``H`` in a whose angular distance
    to a root hyperplane is ``wall_distance``.

    Returns
    -------
    list of (vector, tag)
    """
    rng = np.random.default_rng(rng)
    cd = iw.cartan
    pb = p_orthonormal_basis(cd)
    out = []
    if n_sobol:
        sob = qmc.Sobol(d=len(pb), scramble=True, seed=rng)
        pts = sob.random(n_sobol)
        z = normal_dist.ppf(np.clip(pts, 1e-12, 1 - 1e-12))
        z /= np.linalg.norm(z, axis=1, keepdims=True)
        out += [(v @ pb, "sobol") for v in z]
    if n_wall and iw.rank >= 2:
        g0 = cd.g0_gram
        alg = cd.algebra
        a_gram = iw.a_basis @ g0 @ iw.a_basis.T
        for i in range(n_wall):
            alpha = iw.positive[rng.integers(len(iw.positive))].values
            # dual vector of alpha in a (coefficients in a_basis)
            normal = np.linalg.solve(a_gram, alpha)
            normal /= np.sqrt(normal @ a_gram @ normal)
            wall = rng.normal(size=iw.rank)
            wall -= (wall @ a_gram @ normal) * normal
            wall /= np.sqrt(wall @ a_gram @ wall)
            h = np.cos(wall_distance) * wall + np.sin(wall_distance) * normal
            z = rng.normal(size=len(cd.k_basis)) @ cd.k_basis
            vec = expm(alg.ad(z)) @ (h @ iw.a_basis)
            vec /= np.sqrt(vec @ g0 @ vec)
            out.append((vec, "wall"))
    return out
