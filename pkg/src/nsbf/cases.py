"""Manufactured exact solutions: a smooth unit-square flow and the L-shape corner singularity."""
from fractions import Fraction

import numpy as np
from scipy import integrate

__all__ = ["SmoothCase", "LShapeCase", "LSHAPE_LAMBDA", "LSHAPE_W", "psi_derivatives"]


def _poly(coeffs):
    return np.polynomial.Polynomial(coeffs)


# x^2 (1 - x)^2 and derivatives
_X = _poly([0, 0, 1, -2, 1])
_DX = [_X.deriv(k) for k in range(4)]


class SmoothCase:
    """Stream function ``xi = x^2 (1-x)^2 y^2 (1-y)^2`` on the unit square.

    ``u = (d_y xi, -d_x xi)``, ``w = sqrt(nu) rot u``, ``p = x^3 + y^3 - 1/2``.
    """

    name = "smooth2d"
    domain = "unit_square"
    coarse_n = 2

    def __init__(self, params):
        self.params = params

    def _parts(self, x):
        x = np.asarray(x, dtype=float)
        X = [d(x[..., 0]) for d in _DX]
        Y = [d(x[..., 1]) for d in _DX]
        return X, Y

    def velocity(self, x):
        X, Y = self._parts(x)
        return np.stack([X[0] * Y[1], -X[1] * Y[0]], axis=-1)

    def rot_velocity(self, x):
        X, Y = self._parts(x)
        return -X[2] * Y[0] - X[0] * Y[2]

    def vorticity(self, x):
        return np.sqrt(self.params.nu) * self.rot_velocity(x)

    def pressure(self, x):
        x = np.asarray(x, dtype=float)
        return x[..., 0] ** 3 + x[..., 1] ** 3 - 0.5

    def pressure_mean(self):
        return 0.0

    def grad_pressure(self, x):
        x = np.asarray(x, dtype=float)
        return np.stack([3 * x[..., 0] ** 2, 3 * x[..., 1] ** 2], axis=-1)

    def curl_vorticity(self, x):
        """Vector curl ``(d_y w, -d_x w)`` of the scalar vorticity."""
        X, Y = self._parts(x)
        s = np.sqrt(self.params.nu)
        return s * np.stack([-X[2] * Y[1] - X[0] * Y[3], X[3] * Y[0] + X[1] * Y[2]], axis=-1)

    def forcing(self, x):
        prm = self.params
        u = self.velocity(x)
        w = self.vorticity(x)
        speed = np.linalg.norm(u, axis=-1)
        w_cross_u = w[..., None] * np.stack([-u[..., 1], u[..., 0]], axis=-1)
        return (
            u / prm.kappa
            + np.sqrt(prm.nu) * self.curl_vorticity(x)
            + prm.forchheimer * speed[..., None] * u
            + self.grad_pressure(x)
            + w_cross_u / np.sqrt(prm.nu)
        )

    def dirichlet(self, x):
        return self.velocity(x)


LSHAPE_LAMBDA = float(Fraction(856399, 1572864))
LSHAPE_W = 1.5 * np.pi


def psi_derivatives(theta, lam=LSHAPE_LAMBDA, w=LSHAPE_W):
    """``psi, psi', psi'', psi'''`` of the corner stream-function profile."""
    a, b = 1.0 + lam, 1.0 - lam
    cw = np.cos(lam * w)
    sa, ca = np.sin(a * theta), np.cos(a * theta)
    sb, cb = np.sin(b * theta), np.cos(b * theta)
    p0 = sa * cw / a - ca - sb * cw / b + cb
    p1 = ca * cw + a * sa - cb * cw - b * sb
    p2 = -a * sa * cw + a**2 * ca + b * sb * cw - b**2 * cb
    p3 = -(a**2) * ca * cw - a**3 * sa + b**2 * cb * cw + b**3 * sb
    return p0, p1, p2, p3


class LShapeCase:
    """Corner singularity on (-1,1)^2 minus [0,1)x(-1,0].

    The velocity is the curl of ``r^(1+lambda) psi(theta)``; velocity and
    pressure satisfy ``sqrt(nu) curl w + grad p = 0`` so the forcing only
    carries the Brinkman, convective and Forchheimer terms.
    """

    name = "lshape"
    domain = "l_shape"
    coarse_n = None

    def __init__(self, params):
        self.params = params
        self._pmean = None

    @staticmethod
    def polar(x):
        x = np.asarray(x, dtype=float)
        r = np.hypot(x[..., 0], x[..., 1])
        th = np.mod(np.arctan2(x[..., 1], x[..., 0]), 2 * np.pi)
        return r, th

    def velocity(self, x):
        lam = LSHAPE_LAMBDA
        r, th = self.polar(x)
        p0, p1, _, _ = psi_derivatives(th)
        s, c = np.sin(th), np.cos(th)
        rl = r**lam
        return np.stack(
            [rl * ((1 + lam) * s * p0 + c * p1), rl * (s * p1 - (1 + lam) * c * p0)], axis=-1
        )

    def rot_velocity(self, x):
        lam = LSHAPE_LAMBDA
        r, th = self.polar(x)
        if np.any(r == 0):
            raise ValueError("vorticity is singular at the re-entrant corner")
        p0, _, p2, _ = psi_derivatives(th)
        return -(r ** (lam - 1)) * ((1 + lam) ** 2 * p0 + p2)

    def vorticity(self, x):
        return np.sqrt(self.params.nu) * self.rot_velocity(x)

    def pressure(self, x):
        lam = LSHAPE_LAMBDA
        r, th = self.polar(x)
        if np.any(r == 0):
            raise ValueError("pressure is singular at the re-entrant corner")
        _, p1, _, p3 = psi_derivatives(th)
        return -self.params.nu * r ** (lam - 1) / (1 - lam) * ((1 + lam) ** 2 * p1 + p3)

    def pressure_mean(self):
        """Mean of the exact pressure over the L-shape (1D polar integral)."""
        if self._pmean is None:
            lam = LSHAPE_LAMBDA
            nu = self.params.nu

            def integrand(th):
                _, p1, _, p3 = psi_derivatives(th)
                R = 1.0 / max(abs(np.cos(th)), abs(np.sin(th)))
                g = -nu / (1 - lam) * ((1 + lam) ** 2 * p1 + p3)
                return g * R ** (1 + lam) / (1 + lam)

            breaks = [0.0, np.pi / 4, 3 * np.pi / 4, 5 * np.pi / 4, 1.5 * np.pi]
            total = sum(
                integrate.quad(integrand, a, b, epsabs=1e-14, epsrel=1e-13)[0]
                for a, b in zip(breaks[:-1], breaks[1:])
            )
            self._pmean = total / 3.0
        return self._pmean

    def forcing(self, x):
        prm = self.params
        u = self.velocity(x)
        w = self.vorticity(x)
        speed = np.linalg.norm(u, axis=-1)
        w_cross_u = w[..., None] * np.stack([-u[..., 1], u[..., 0]], axis=-1)
        return u / prm.kappa + w_cross_u / np.sqrt(prm.nu) + prm.forchheimer * speed[..., None] * u

    def dirichlet(self, x):
        return self.velocity(x)
