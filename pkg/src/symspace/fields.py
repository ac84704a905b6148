"""Smooth test functions and vector fields with analytic derivatives.

Gaussian bumps are used throughout; they are treated as compactly supported
once they fall below the boundary-mass threshold of the quadrature box.
"""

from __future__ import annotations

import numpy as np

from .solvable import FieldOnS, SChart


class GaussianSum:
    """Scalar ``sum_b a_b exp(-|(x - c_b) / w_b|^2 / 2)`` on R^d.

    Parameters
    ----------
    centers, widths : array (B, d)
    amps : array (B,)
    """

    def __init__(self, centers, widths, amps):
        self.centers = np.atleast_2d(np.asarray(centers, dtype=float))
        self.widths = np.atleast_2d(np.asarray(widths, dtype=float))
        self.amps = np.atleast_1d(np.asarray(amps, dtype=float))
        if np.any(self.widths <= 0):
            raise ValueError("bump widths must be positive")

    @property
    def dim(self) -> int:
        return self.centers.shape[1]

    def _parts(self, x):
        z = (np.asarray(x, dtype=float)[..., None, :] - self.centers) / self.widths
        g = self.amps * np.exp(-0.5 * np.sum(z * z, axis=-1))
        return z, g

    def __call__(self, x):
        return self._parts(x)[1].sum(axis=-1)

    def grad(self, x):
        z, g = self._parts(x)
        return -np.einsum("...b,...bd->...d", g, z / self.widths)

    def hessian(self, x):
        z, g = self._parts(x)
        u = z / self.widths
        outer = np.einsum("...bd,...be->...bde", u, u)
        diag = np.einsum("bd,de->bde", 1.0 / self.widths ** 2, np.eye(self.dim))
        return np.einsum("...b,...bde->...de", g, outer - diag)

    def translated(self, shift):
        return GaussianSum(self.centers + shift, self.widths, self.amps)

    def support_box(self, nsig=8.0):
        lo = (self.centers - nsig * self.widths).min(axis=0)
        hi = (self.centers + nsig * self.widths).max(axis=0)
        return np.stack([lo, hi], axis=1)


class GaussianField(FieldOnS):
    """Vector field whose frame coefficients are independent Gaussian sums."""

    def __init__(self, components):
        self.components = list(components)
        super().__init__(self._values, self._jac)

    def _values(self, x):
        return np.stack([c(x) for c in self.components], axis=-1)

    def _jac(self, x):
        return np.stack([c.grad(x) for c in self.components], axis=-1)

    def support_box(self, nsig=8.0):
        boxes = [c.support_box(nsig) for c in self.components if c.amps.any()]
        if not boxes:
            return None
        return np.stack([np.min([b[:, 0] for b in boxes], axis=0),
                         np.max([b[:, 1] for b in boxes], axis=0)], axis=1)


class StreamField(FieldOnS):
    """Divergence-free field from an antisymmetric coordinate potential.

    With volume density ``mu = exp(-2 rho(t))`` the coordinate components
    ``F^k = mu^{-1} sum_j d_j Psi^{jk}`` have zero divergence for any smooth
    antisymmetric ``Psi``.  Frame coefficients are ``F E^{-1}``.

    Parameters
    ----------
    chart : SChart
    potentials : dict mapping (a, b) with a < b to GaussianSum
    """

    def __init__(self, chart: SChart, potentials):
        self.chart = chart
        self.potentials = dict(potentials)
        super().__init__(self._values, self._jac)

    def coordinate_field(self, x):
        x = np.asarray(x, dtype=float)
        m = self.chart.m
        flux = np.zeros(x.shape[:-1] + (m,))
        for (a, b), psi in self.potentials.items():
            g = psi.grad(x)
            flux[..., b] += g[..., a]
            flux[..., a] -= g[..., b]
        return np.exp(-self.chart.log_density(x))[..., None] * flux

    def _coordinate_jac(self, x):
        x = np.asarray(x, dtype=float)
        m, r = self.chart.m, self.chart.r
        flux = np.zeros(x.shape[:-1] + (m,))
        dflux = np.zeros(x.shape[:-1] + (m, m))  # [c, k]
        for (a, b), psi in self.potentials.items():
            g = psi.grad(x)
            hs = psi.hessian(x)
            flux[..., b] += g[..., a]
            flux[..., a] -= g[..., b]
            dflux[..., :, b] += hs[..., :, a]
            dflux[..., :, a] -= hs[..., :, b]
        w = np.exp(-self.chart.log_density(x))
        grad_w = np.zeros(x.shape[:-1] + (m,))
        grad_w[..., :r] = 2.0 * self.chart.rho * w[..., None]
        big_f = w[..., None] * flux
        d_big_f = w[..., None, None] * dflux + grad_w[..., :, None] * flux[..., None, :]
        return big_f, d_big_f

    def _values(self, x):
        return self.chart.to_frame(self.coordinate_field(x), x)

    def _jac(self, x):
        big_f, d_big_f = self._coordinate_jac(x)
        e = self.chart.frame_matrix(x)
        e_inv = np.linalg.inv(e)
        f = np.einsum("...a,...al->...l", big_f, e_inv)
        de = self.chart.frame_matrix_derivatives(x)  # [c, k, a]
        inner = d_big_f - np.einsum("...k,...cka->...ca", f, de)
        return np.einsum("...ca,...al->...cl", inner, e_inv)

    def support_box(self, nsig=8.0):
        boxes = [p.support_box(nsig) for p in self.potentials.values()]
        return np.stack([np.min([b[:, 0] for b in boxes], axis=0),
                         np.max([b[:, 1] for b in boxes], axis=0)], axis=1)


def random_gaussian_sum(rng, dim, n_bumps=2, center_scale=0.5, width_range=(0.4, 0.9),
                        amp_scale=1.0):
    centers = rng.uniform(-center_scale, center_scale, size=(n_bumps, dim))
    widths = rng.uniform(*width_range, size=(n_bumps, dim))
    amps = amp_scale * rng.normal(size=n_bumps)
    return GaussianSum(centers, widths, amps)


def random_field(rng, m, **kw) -> GaussianField:
    return GaussianField([random_gaussian_sum(rng, m, **kw) for _ in range(m)])


def random_stream_field(rng, chart: SChart, n_pairs=None, **kw) -> StreamField:
    m = chart.m
    pairs = [(a, b) for a in range(m) for b in range(a + 1, m)]
    if n_pairs is not None and n_pairs < len(pairs):
        pick = rng.choice(len(pairs), size=n_pairs, replace=False)
        pairs = [pairs[i] for i in sorted(pick)]
    return StreamField(chart, {p: random_gaussian_sum(rng, m, **kw) for p in pairs})


def polynomial_gaussian_field(rng, m, degree=2, width=0.8):
    """Field with coefficients ``poly(x) * exp(-|x|^2 / (2 w^2))``, FD derivatives."""
    coefs = rng.normal(size=(m, degree + 1, m))

    def coeffs(x):
        x = np.asarray(x, dtype=float)
        env = np.exp(-0.5 * np.sum(x * x, axis=-1) / width ** 2)
        powers = np.stack([x ** k for k in range(degree + 1)], axis=-2)  # (..., deg+1, m)
        vals = np.einsum("...km,lkm->...l", powers, coefs)
        return vals * env[..., None]

    return FieldOnS(coeffs)
