"""One time step of the exponential time differencing Runge-Kutta cascade.

The semilinear split is u_t = L u + N(u) with L = eps^2 Lap_h - kappa I and
N = f + kappa I.  The order-r solution is built iteratively: the level-j
stage function

    w_j(s) = phi_0(sL) u_n + s phi_1(sL)[a N(u_n)]
             + tau sum_{m=1}^{j-1} m! (s/tau)^{m+1} phi_{m+1}(sL)[a c_{j-1,m}]

integrates the frozen interpolation polynomial
P_{j-1}(s) = N(u_n) + sum_m c_{j-1,m} (s/tau)^m exactly through Duhamel's
principle.  Sampling N at the level-j nodes and solving the Vandermonde
system V_j c_j = d_j yields the next polynomial, and u_{n+1} = w_r(tau).

In rescaled mode each level's polynomial is shrunk pointwise by
a = min(kappa*beta / max_s |P|, 1) before it enters the phi applications.
Since |a P| never exceeds kappa*beta, the stage values obey the maximum
bound |w| <= beta unconditionally in tau; the interpolation data d_j always
uses the unscaled N(u_n).  In standard mode a is identically one, and both
modes produce bit-identical steps whenever the computed a is one everywhere.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.fft

from . import diagnostics
from .grid import Field, discrete_energy, max_norm
from .phi import phi_batch
from .scheme import SchemeSpec
from .spectral import SpectralPlan

__all__ = [
    "StepContext",
    "StageState",
    "BoundExceeded",
    "NumericalBlowup",
    "step",
    "evaluate_stage",
    "rescale_factor",
    "polynomial_abs_max",
]

_REAL_ROOT_TOL = 1e-10


class BoundExceeded(RuntimeError):
    """A stage value left the potential's domain (standard mode only)."""

    def __init__(self, level: int, stage: int):
        self.level = level
        self.stage = stage
        super().__init__(f"stage value outside the potential domain at level {level}, stage {stage}")


class NumericalBlowup(RuntimeError):
    """A stage value became non-finite."""

    def __init__(self, level: int, stage: int):
        self.level = level
        self.stage = stage
        super().__init__(f"non-finite stage value at level {level}, stage {stage}")


class StepContext:
    """Everything a repeated fixed-tau step needs, with cached phi grids.

    The stage times a_{j,k} tau are step-invariant, so the spectral grids
    phi_m(s lambda) are computed once per (m, s) and reused across steps.
    """

    def __init__(self, plan: SpectralPlan, potential, spec: SchemeSpec, tau: float, rescaled: bool = False):
        if tau <= 0:
            raise ValueError("tau must be positive")
        if plan.kappa < potential.kappa_min - 1e-12:
            raise ValueError(
                f"stabilizer kappa={plan.kappa} is below the potential's minimum {potential.kappa_min}"
            )
        if abs(spec.kappa - plan.kappa) > 1e-12 * max(1.0, plan.kappa):
            raise ValueError("scheme and plan disagree on kappa")
        if rescaled and spec.order > 10:
            raise ValueError("rescaled stepping supports order <= 10 (polynomial degree <= 9)")
        self.plan = plan
        self.potential = potential
        self.spec = spec
        self.tau = float(tau)
        self.rescaled = bool(rescaled)
        self.kappa_beta = plan.kappa * potential.beta
        self._phi_grids: dict[tuple[int, float], np.ndarray] = {}

    def phi_grid(self, j: int, s: float) -> np.ndarray:
        """phi_j(s * eigvals) as a (ny, nx) array, memoized on (j, s)."""
        key = (j, float(s))
        grid = self._phi_grids.get(key)
        if grid is None:
            grid = phi_batch(j, s * self.plan.eigvals)
            self._phi_grids[key] = grid
        return grid

    def nonlinearity(self, values: np.ndarray) -> np.ndarray:
        """N(u) = f(u) + kappa u on raw values."""
        return self.potential.f(values) + self.plan.kappa * values


@dataclass
class StageState:
    """Interpolation polynomial of one cascade level.

    coeffs holds c_{level,1..level}; alpha is the pointwise scaling factor
    (all ones in standard mode); n_base is the unscaled N(u_n) that forms
    the constant term.
    """

    level: int
    coeffs: list
    alpha: Field
    n_base: Field
    _hats: list = field(default=None, repr=False)

    def scaled_spectra(self) -> list:
        """Transforms of alpha*N(u_n) and alpha*c_m, cached per state."""
        if self._hats is None:
            mesh = self.n_base.mesh
            terms = [self.alpha.values * self.n_base.values]
            terms += [self.alpha.values * c.values for c in self.coeffs]
            self._hats = [
                scipy.fft.dctn(t.reshape(mesh.ny, mesh.nx), type=2, norm="ortho") for t in terms
            ]
        return self._hats


def _make_state(ctx: StepContext, level: int, coeffs: list, n_base: Field) -> StageState:
    if ctx.rescaled:
        alpha = rescale_factor(n_base, coeffs, ctx.kappa_beta)
    else:
        alpha = Field(n_base.mesh, np.ones(n_base.mesh.ncells))
    return StageState(level, coeffs, alpha, n_base)


def _stage_values(ctx: StepContext, level: int, s: float, u_hat: np.ndarray, state: StageState) -> np.ndarray:
    """w_level(s) as flat values, from the cached spectra of the state."""
    hats = state.scaled_spectra()
    acc = ctx.phi_grid(0, s) * u_hat
    acc = acc + s * ctx.phi_grid(1, s) * hats[0]
    ratio = s / ctx.tau
    fac = 1.0
    for m in range(1, level):
        fac *= m
        acc += (ctx.tau * fac * ratio ** (m + 1)) * ctx.phi_grid(m + 1, s) * hats[m]
    vals = scipy.fft.idctn(acc, type=2, norm="ortho")
    return vals.reshape(state.n_base.mesh.ncells)


def evaluate_stage(ctx: StepContext, level: int, s: float, u_n: Field, state: StageState) -> Field:
    """Evaluate w_level(s) for s in (0, tau] from the level-1 polynomial."""
    if not 0.0 < s <= ctx.tau * (1.0 + 1e-12):
        raise ValueError(f"stage time s={s} outside (0, tau]")
    if state.level != level - 1:
        raise ValueError(f"state at level {state.level} cannot evaluate stage level {level}")
    if u_n.mesh != ctx.plan.mesh:
        raise ValueError("field mesh does not match the plan's mesh")
    u_hat = scipy.fft.dctn(u_n.grid(), type=2, norm="ortho")
    return Field(u_n.mesh, _stage_values(ctx, level, s, u_hat, state))


def step(ctx: StepContext, u_n: Field, *, n: int = 1, t: float = None, prev_energy: float = None):
    """Advance one step; returns (u_next, StepDiagnostics).

    n and t label the produced state in the diagnostics (t defaults to
    n*tau); prev_energy defaults to the energy of u_n, so the dissipation
    flag is meaningful even for a standalone call.
    """
    mesh = u_n.mesh
    if mesh != ctx.plan.mesh:
        raise ValueError("field mesh does not match the plan's mesh")
    if not np.all(np.isfinite(u_n.values)):
        raise ValueError("u_n must be finite")
    beta = ctx.potential.beta
    if ctx.rescaled and max_norm(u_n) > beta + 1e-9:
        raise ValueError("rescaled stepping requires max_norm(u_n) <= beta")

    try:
        n0 = ctx.nonlinearity(u_n.values)
    except ValueError as exc:
        raise BoundExceeded(0, 0) from exc
    if prev_energy is None:
        prev_energy = _energy_or_inf(ctx, u_n)

    n_base = Field(mesh, n0)
    state = _make_state(ctx, 0, [], n_base)
    u_hat = scipy.fft.dctn(u_n.grid(), type=2, norm="ortho")

    for j in ctx.spec.levels:
        nodes = ctx.spec.node_sets[j - 1].nodes
        d = np.empty((j, mesh.ncells))
        for k in range(1, j + 1):
            w = _stage_values(ctx, j, nodes[k] * ctx.tau, u_hat, state)
            if not np.all(np.isfinite(w)):
                raise NumericalBlowup(j, k)
            try:
                d[k - 1] = ctx.nonlinearity(w)
            except ValueError as exc:
                raise BoundExceeded(j, k) from exc
            d[k - 1] -= n0
        c = ctx.spec.systems[j - 1].solve(d)
        state = _make_state(ctx, j, [Field(mesh, c[m]) for m in range(j)], n_base)

    r = ctx.spec.order
    out = _stage_values(ctx, r, ctx.tau, u_hat, state)
    if not np.all(np.isfinite(out)):
        raise NumericalBlowup(r, r)
    u_next = Field(mesh, out)
    alpha_min = float(np.min(state.alpha.values))
    diag = diagnostics.record(ctx, n, u_next, prev_energy, alpha_min=alpha_min, t=t)
    return u_next, diag


def _energy_or_inf(ctx, u: Field) -> float:
    try:
        return discrete_energy(u, ctx.plan.eps, ctx.potential)
    except ValueError:
        return float("inf")


def rescale_factor(n_base: Field, coeffs, kappa_beta: float) -> Field:
    """Pointwise a = min(kappa_beta / max_{s in [0,1]} |P(x, s)|, 1).

    P(x, s) = n_base(x) + sum_m coeffs[m-1](x) s^m on the unit interval.
    Two certificates precede the exact maximization: the coefficient l1
    bound, then the Bernstein coefficient bound (a polynomial on [0, 1]
    stays inside the convex hull of its Bernstein coefficients).  Both only
    ever certify a = 1, so the exact companion-matrix maximum still decides
    every point that might need shrinking.
    """
    if kappa_beta <= 0:
        raise ValueError("kappa_beta must be positive")
    mesh = n_base.mesh
    stack = np.stack([n_base.values] + [c.values for c in coeffs])
    alpha = np.ones(mesh.ncells)
    suspicious = np.nonzero(np.sum(np.abs(stack), axis=0) > kappa_beta)[0]
    if suspicious.size and stack.shape[0] > 1:
        bern = np.abs(_bernstein_matrix(stack.shape[0] - 1) @ stack[:, suspicious])
        suspicious = suspicious[bern.max(axis=0) > kappa_beta]
    if suspicious.size:
        m, _ = _poly_abs_max_many(stack[:, suspicious])
        alpha[suspicious] = np.minimum(kappa_beta / np.maximum(m, 1e-300), 1.0)
    return Field(mesh, alpha)


_BERNSTEIN_CACHE: dict[int, np.ndarray] = {}


def _bernstein_matrix(d: int) -> np.ndarray:
    """Monomial-to-Bernstein change of basis on [0, 1] for degree d."""
    mat = _BERNSTEIN_CACHE.get(d)
    if mat is None:
        mat = np.zeros((d + 1, d + 1))
        for i in range(d + 1):
            for k in range(i + 1):
                mat[i, k] = math.comb(i, k) / math.comb(d, k)
        _BERNSTEIN_CACHE[d] = mat
    return mat


def polynomial_abs_max(coeffs) -> tuple[float, float]:
    """(max, argmax) of |c_0 + c_1 s + ... + c_d s^d| over s in [0, 1].

    Candidates are s = 0, s = 1, and the real roots of the derivative in
    (0, 1); derivative roots come from companion-matrix eigenvalues, a root
    counting as real when |imag| <= 1e-10 (1 + |real|).  All-zero
    coefficients give (0, 0).
    """
    c = np.atleast_1d(np.asarray(coeffs, dtype=np.float64))
    if c.ndim != 1 or c.size == 0:
        raise ValueError("coeffs must be a nonempty 1D sequence")
    if c.size > 10:
        raise ValueError("polynomial degree must be <= 9")
    m, s = _poly_abs_max_many(c[:, None])
    return float(m[0]), float(s[0])


def _poly_abs_max_many(c: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Columnwise |P| maximum over [0, 1] for stacked coefficients (d+1, n)."""
    d = c.shape[0] - 1
    npts = c.shape[1]
    best = np.abs(c[0]).copy()
    arg = np.zeros(npts)
    v1 = np.abs(c.sum(axis=0))
    upd = v1 > best
    best[upd] = v1[upd]
    arg[upd] = 1.0
    if d == 0:
        return best, arg
    deriv = c[1:] * np.arange(1, d + 1)[:, None]
    nonzero = deriv != 0.0
    # highest nonzero derivative coefficient per point, -1 when P' == 0;
    # points with constant or vanishing derivative are settled by endpoints
    eff = np.where(nonzero.any(axis=0), (d - 1) - np.argmax(nonzero[::-1], axis=0), -1)
    for e in range(1, d):
        pts = np.nonzero(eff == e)[0]
        if pts.size:
            _update_from_roots(best, arg, c, _roots(deriv[: e + 1, pts]), pts)
    return best, arg


def _roots(dcoeffs: np.ndarray) -> np.ndarray:
    """Roots of columnwise polynomials with nonzero leading coefficient.

    Shape (e+1, n) in, complex (n, e) out.  Degree 1 and 2 use closed
    forms; higher degrees use batched companion-matrix eigenvalues.
    """
    e = dcoeffs.shape[0] - 1
    n = dcoeffs.shape[1]
    if e == 1:
        return (-dcoeffs[0] / dcoeffs[1]).astype(np.complex128)[:, None]
    if e == 2:
        a, b, cc = dcoeffs[2], dcoeffs[1], dcoeffs[0]
        disc = np.sqrt((b * b - 4.0 * a * cc).astype(np.complex128))
        return np.stack([(-b + disc) / (2.0 * a), (-b - disc) / (2.0 * a)], axis=1)
    monic = dcoeffs[:e] / dcoeffs[e]
    comp = np.zeros((n, e, e))
    idx = np.arange(e - 1)
    comp[:, idx + 1, idx] = 1.0
    comp[:, :, -1] = -monic.T
    return np.linalg.eigvals(comp)


def _update_from_roots(best, arg, c, roots, pts):
    d = c.shape[0] - 1
    for k in range(roots.shape[1]):
        re = roots[:, k].real
        im = roots[:, k].imag
        ok = (np.abs(im) <= _REAL_ROOT_TOL * (1.0 + np.abs(re))) & (re > 0.0) & (re < 1.0)
        if not ok.any():
            continue
        cols = pts[ok]
        x = re[ok]
        acc = c[d, cols].copy()
        for m in range(d - 1, -1, -1):
            acc = acc * x + c[m, cols]
        vals = np.abs(acc)
        upd = vals > best[cols]
        if upd.any():
            tgt = cols[upd]
            best[tgt] = vals[upd]
            arg[tgt] = x[upd]
