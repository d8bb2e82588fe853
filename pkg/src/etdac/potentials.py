"""Double-well nonlinearities for the Allen-Cahn equation.

The equation is u_t = eps^2 Lap u + f(u) with f = -F'.  Two potentials are
provided: the quartic Ginzburg-Landau well F = (1-u^2)^2/4 and the
logarithmic Flory-Huggins well with temperatures 0 < theta < theta_c.  Each
carries its maximum bound beta, defined by f(beta) <= 0 <= f(-beta) with
beta the positive root of f, and the minimal stabilizer
kappa_min = max_{|xi| <= beta} |f'(xi)|.
"""

from __future__ import annotations

import numpy as np

__all__ = ["GinzburgLandau", "FloryHuggins", "compute_beta", "compute_kappa_min"]


class GinzburgLandau:
    """f = u - u^3, F = (1 - u^2)^2 / 4; bound beta = 1, kappa_min = 2."""

    kind = "gl"

    def __init__(self):
        self.beta = compute_beta(self)
        self.kappa_min = compute_kappa_min(self)

    def f(self, u):
        u = np.asarray(u, dtype=np.float64)
        return u - u**3

    def F(self, u):
        u = np.asarray(u, dtype=np.float64)
        w = 1.0 - u * u
        return 0.25 * w * w

    def f_prime(self, u):
        u = np.asarray(u, dtype=np.float64)
        return 1.0 - 3.0 * u * u

    def __repr__(self):
        return "GinzburgLandau()"


class FloryHuggins:
    """Logarithmic potential, defined on |u| < 1 only.

    f(u) = (theta/2) ln((1-u)/(1+u)) + theta_c u
    F(u) = (theta/2) [(1+u) ln(1+u) + (1-u) ln(1-u)] - (theta_c/2) u^2

    Arguments with |u| >= 1 raise ValueError; upstream this signals a
    maximum-bound violation.
    """

    kind = "fh"

    def __init__(self, theta: float = 0.8, theta_c: float = 1.6):
        if not (0.0 < theta < theta_c):
            raise ValueError(f"need 0 < theta < theta_c, got theta={theta}, theta_c={theta_c}")
        self.theta = float(theta)
        self.theta_c = float(theta_c)
        self.beta = compute_beta(self)
        if not (0.0 < self.beta < 1.0):
            raise ValueError("bound beta must lie strictly inside (0, 1)")
        self.kappa_min = compute_kappa_min(self)

    def _check_domain(self, u):
        if np.any(np.abs(u) >= 1.0):
            raise ValueError("Flory-Huggins potential evaluated outside (-1, 1)")

    def f(self, u):
        u = np.asarray(u, dtype=np.float64)
        self._check_domain(u)
        return 0.5 * self.theta * np.log((1.0 - u) / (1.0 + u)) + self.theta_c * u

    def F(self, u):
        u = np.asarray(u, dtype=np.float64)
        self._check_domain(u)
        return 0.5 * self.theta * ((1.0 + u) * np.log(1.0 + u) + (1.0 - u) * np.log(1.0 - u)) - 0.5 * self.theta_c * u * u

    def f_prime(self, u):
        u = np.asarray(u, dtype=np.float64)
        self._check_domain(u)
        return -self.theta / (1.0 - u * u) + self.theta_c

    def __repr__(self):
        return f"FloryHuggins(theta={self.theta}, theta_c={self.theta_c})"


def compute_beta(p) -> float:
    """Positive root of f; the invariant region is [-beta, beta].

    The quartic well has the exact root 1.  For the logarithmic well the
    root in (0, 1) is bracketed on [1e-12, 1-1e-12], bisected to width
    1e-10, then polished with 3 Newton steps; deterministic across
    platforms.
    """
    if p.kind == "gl":
        return 1.0
    lo, hi = 1e-12, 1.0 - 1e-12
    flo, fhi = _fh_f(p, lo), _fh_f(p, hi)
    if not (flo > 0.0 > fhi):
        raise ValueError("no sign change on the root bracket; invalid theta, theta_c")
    while hi - lo > 1e-10:
        mid = 0.5 * (lo + hi)
        if _fh_f(p, mid) > 0.0:
            lo = mid
        else:
            hi = mid
    x = 0.5 * (lo + hi)
    for _ in range(3):
        x -= _fh_f(p, x) / _fh_fprime(p, x)
    return float(x)


def _fh_f(p, u):
    # raw scalar forms, usable before the instance finishes construction
    return 0.5 * p.theta * np.log((1.0 - u) / (1.0 + u)) + p.theta_c * u


def _fh_fprime(p, u):
    return -p.theta / (1.0 - u * u) + p.theta_c


def compute_kappa_min(p) -> float:
    """max of |f'| over [-beta, beta], computed from the endpoint/center values.

    Both wells have f' monotone in xi^2, so the maximum is attained at
    xi = 0 or xi = +-beta.
    """
    beta = p.beta if hasattr(p, "beta") else compute_beta(p)
    if p.kind == "gl":
        return max(abs(1.0 - 3.0 * beta * beta), 1.0)
    return max(abs(p.theta_c - p.theta), abs(p.theta / (1.0 - beta * beta) - p.theta_c))
