"""Stable evaluation of the phi functions on the nonpositive real axis.

phi_0(z) = e^z and phi_j(z) = (e^z - sum_{k<j} z^k/k!) / z^j with the limit
phi_j(0) = 1/j!.  Only real z <= 0 is supported; every spectral argument of
the stabilized operator is negative, so nothing more is needed.

The defining formula cancels catastrophically for small |z| and loses
accuracy whenever the truncated exponential series has nearly converged, so
evaluation is split into three regions chosen by |z| relative to j:

* |z| <= max(small_arg_threshold, (j+1)/2): truncated Taylor series
  sum_k z^k/(k+j)!, terms alternating and decreasing, condition O(1).
* |z| >= 2(j+1): the rearranged form e^z z^-j - sum_{m=1..j} z^-m/(j-m)!,
  again alternating and decreasing.
* in between: the defining formula; there the truncated exponential series
  is still dominated by its last terms, so the subtraction is benign.

Compensated (Kahan) summation is used throughout, keeping the relative
error a few ulp, well inside the 1e-13 contract for j <= 10 and
z in [-1e6, 0].
"""

from __future__ import annotations

from dataclasses import dataclass
from math import factorial

import numpy as np

__all__ = ["PhiTable", "phi", "phi_batch"]


def _kahan_add(s, c, term):
    """One compensated-summation update; returns the new (sum, compensation)."""
    y = term - c
    t = s + y
    c = (t - s) - y
    return t, c


def _phi_taylor(j, z, nterms):
    """sum_{k=0}^{nterms} z^k / (k+j)! for |z| <= max(thr, (j+1)/2)."""
    term = np.full_like(z, 1.0 / factorial(j))
    s = term.copy()
    c = np.zeros_like(z)
    for k in range(1, nterms + 1):
        term = term * z / (k + j)
        s, c = _kahan_add(s, c, term)
    return s


def _phi_forward(j, z):
    """(e^z - sum_{k<j} z^k/k!) / z^j for the intermediate range."""
    s = np.zeros_like(z)
    c = np.zeros_like(z)
    for k in range(j):
        # z^k by pow and exact integer k! keep each term near 1 ulp
        s, c = _kahan_add(s, c, np.power(z, k) / factorial(k))
    return (np.exp(z) - s) / np.power(z, j)


def _phi_reciprocal(j, z):
    """e^z z^-j - sum_{m=1..j} z^-m/(j-m)! for |z| >= 2(j+1)."""
    w = 1.0 / z
    s = np.zeros_like(z)
    c = np.zeros_like(z)
    p = np.ones_like(z)
    for m in range(1, j + 1):
        p = p * w
        s, c = _kahan_add(s, c, p / factorial(j - m))
    return np.exp(z) * np.power(w, j) - s


def _phi_core(j, z, thr, nterms):
    """Vectorized phi_j on a float64 array of nonpositive arguments.

    Branch selection is per element, so results are bit-identical no
    matter how the input is batched.
    """
    if j == 0:
        return np.exp(z)
    out = np.empty_like(z)
    az = -z
    small = az <= max(thr, 0.5 * (j + 1))
    large = az >= 2.0 * (j + 1)
    mid = ~(small | large)
    if small.any():
        out[small] = _phi_taylor(j, z[small], nterms)
    if mid.any():
        out[mid] = _phi_forward(j, z[mid])
    if large.any():
        out[large] = _phi_reciprocal(j, z[large])
    return out


@dataclass(frozen=True)
class PhiTable:
    """Evaluation policy: highest index needed plus branch parameters."""

    max_index: int = 10
    small_arg_threshold: float = 0.5
    taylor_terms: int = 30

    def __post_init__(self):
        if self.max_index < 1:
            raise ValueError("max_index must be >= 1")
        if not (0.0 < self.small_arg_threshold <= 1.0):
            raise ValueError("small_arg_threshold must be in (0, 1]")
        if self.taylor_terms < 25:
            raise ValueError("taylor_terms must be >= 25")

    def phi(self, j: int, z: float) -> float:
        """phi_j(z) for a scalar z <= 0."""
        _check_args(j, z)
        return float(_phi_core(j, np.array([z], dtype=np.float64), self.small_arg_threshold, self.taylor_terms)[0])

    def phi_batch(self, j: int, zs) -> np.ndarray:
        """Elementwise phi_j; identical to scalar calls bit-for-bit."""
        zs = np.asarray(zs, dtype=np.float64)
        _check_args(j, zs)
        flat = _phi_core(j, zs.ravel(), self.small_arg_threshold, self.taylor_terms)
        return flat.reshape(zs.shape)


def _check_args(j, z):
    if not isinstance(j, (int, np.integer)) or j < 0:
        raise ValueError(f"phi index must be a nonnegative integer, got {j!r}")
    if np.any(np.asarray(z) > 0):
        raise ValueError("phi is only defined here for z <= 0")


_DEFAULT = PhiTable()


def phi(j: int, z: float) -> float:
    """phi_j(z) for real z <= 0 with relative accuracy <= 1e-13 (j <= 10)."""
    return _DEFAULT.phi(j, z)


def phi_batch(j: int, zs) -> np.ndarray:
    """Elementwise phi over an array of nonpositive arguments."""
    return _DEFAULT.phi_batch(j, zs)
