import math

import numpy as np
import pytest

from conftest import random_field, sinprod
from etdac.grid import Field, Mesh2D, constant_field, discrete_energy, max_norm
from etdac.scheme import make_scheme, tau_max
from etdac.spectral import SpectralPlan, apply_phi
from etdac.stepper import (
    BoundExceeded,
    NumericalBlowup,
    StageState,
    StepContext,
    evaluate_stage,
    polynomial_abs_max,
    rescale_factor,
    step,
)
from oracles import DenseOperator, brute_poly_max, dense_etdrk_step, duhamel_stage


def make_ctx(mesh, potential, order, tau, rescaled=False, eps=0.1, kappa=None):
    kappa = potential.kappa_min if kappa is None else kappa
    plan = SpectralPlan(mesh, eps, kappa)
    spec = make_scheme(order, kappa)
    return StepContext(plan, potential, spec, tau, rescaled=rescaled)


def ones_field(mesh):
    return constant_field(mesh, 1.0)


class LinearDrift:
    """Test hook f(u) = -kappa u, so the stabilized nonlinearity vanishes."""

    kind = "gl"

    def __init__(self, kappa=2.0):
        self.kappa = kappa
        self.beta = 1.0
        self.kappa_min = kappa

    def f(self, u):
        return -self.kappa * np.asarray(u, dtype=np.float64)

    def F(self, u):
        u = np.asarray(u, dtype=np.float64)
        return 0.5 * self.kappa * u * u

    def f_prime(self, u):
        return np.full_like(np.asarray(u, dtype=np.float64), -self.kappa)


class TestPolynomialAbsMax:
    def test_constant(self):
        assert polynomial_abs_max([-3.0]) == (3.0, 0.0)

    @pytest.mark.parametrize("coeffs", [[0.0], [0.0, 0.0, 0.0]])
    def test_all_zero(self, coeffs):
        assert polynomial_abs_max(coeffs) == (0.0, 0.0)

    def test_interior_maximum(self):
        m, s = polynomial_abs_max([0.0, 1.0, -1.0])
        assert m == pytest.approx(0.25, abs=1e-14)
        assert s == pytest.approx(0.5, abs=1e-12)

    def test_endpoint_maximum(self):
        m, s = polynomial_abs_max([0.5, 1.0])
        assert m == 1.5
        assert s == 1.0

    def test_negative_lobe_found(self):
        # P = (s - 0.1)(s - 0.9) has its largest magnitude at the vertex
        coeffs = [0.09, -1.0, 1.0]
        m, s = polynomial_abs_max(coeffs)
        assert m == pytest.approx(0.16, abs=1e-13)
        assert s == pytest.approx(0.5, abs=1e-12)

    def test_argmax_attains_the_maximum(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            coeffs = rng.uniform(-2, 2, rng.integers(1, 8))
            m, s = polynomial_abs_max(coeffs)
            assert abs(np.polynomial.polynomial.polyval(s, coeffs)) == pytest.approx(m, abs=1e-12)

    @pytest.mark.parametrize("degree", [1, 2, 3, 4, 5, 6, 9])
    def test_against_dense_sampling(self, degree):
        # the sampled maximum can sit below the true one by |P''| h^2 / 8
        rng = np.random.default_rng(degree)
        h = 1.0 / 100000
        for _ in range(60):
            coeffs = rng.uniform(-2, 2, degree + 1)
            m, _ = polynomial_abs_max(coeffs)
            brute = brute_poly_max(coeffs)
            gap = sum(k * (k - 1) * abs(c) for k, c in enumerate(coeffs)) * h * h / 8
            assert m >= brute - 1e-10
            assert m <= brute + gap + 1e-10

    def test_vanishing_leading_coefficients(self):
        m, s = polynomial_abs_max([0.0, 1.0, -1.0, 0.0, 0.0])
        assert m == pytest.approx(0.25, abs=1e-14)
        assert s == pytest.approx(0.5, abs=1e-12)

    def test_invalid_inputs_rejected(self):
        with pytest.raises(ValueError):
            polynomial_abs_max([])
        with pytest.raises(ValueError):
            polynomial_abs_max(np.zeros((2, 2)))
        with pytest.raises(ValueError):
            polynomial_abs_max(np.zeros(11))


class TestRescaleFactor:
    def setup_method(self):
        self.mesh = Mesh2D(1.0, 1.0, 4, 4)

    def test_in_bound_constant_gives_unit_factor(self):
        n = constant_field(self.mesh, 1.5)
        alpha = rescale_factor(n, [], 2.0)
        assert np.all(alpha.values == 1.0)

    def test_twice_the_bound_gives_half(self):
        n = constant_field(self.mesh, 4.0)
        alpha = rescale_factor(n, [], 2.0)
        assert np.all(alpha.values == 0.5)

    def test_zero_polynomial_gives_unit_factor(self):
        n = constant_field(self.mesh, 0.0)
        alpha = rescale_factor(n, [constant_field(self.mesh, 0.0)], 2.0)
        assert np.all(alpha.values == 1.0)

    def test_mixed_points(self):
        vals = np.ones(16)
        vals[3] = 10.0
        alpha = rescale_factor(Field(self.mesh, vals), [], 2.0)
        assert alpha.values[3] == pytest.approx(0.2, rel=1e-15)
        mask = np.ones(16, dtype=bool)
        mask[3] = False
        assert np.all(alpha.values[mask] == 1.0)

    @pytest.mark.parametrize("seed", [0, 1, 2])
    @pytest.mark.parametrize("degree", [1, 2, 4, 6])
    def test_scaled_polynomial_stays_within_bound(self, seed, degree):
        rng = np.random.default_rng(100 * degree + seed)
        kb = 1.3
        n = Field(self.mesh, rng.uniform(-3, 3, 16))
        coeffs = [Field(self.mesh, rng.uniform(-3, 3, 16)) for _ in range(degree)]
        alpha = rescale_factor(n, coeffs, kb)
        assert np.all(alpha.values > 0.0)
        assert np.all(alpha.values <= 1.0)
        sigma = np.linspace(0.0, 1.0, 64)[None, :]
        poly = n.values[:, None] + sum(
            c.values[:, None] * sigma ** (m + 1) for m, c in enumerate(coeffs))
        assert np.max(np.abs(alpha.values[:, None] * poly)) <= kb + 1e-12

    def test_factor_is_exactly_bound_over_max(self):
        rng = np.random.default_rng(7)
        kb = 0.9
        n = Field(self.mesh, rng.uniform(-2, 2, 16))
        coeffs = [Field(self.mesh, rng.uniform(-2, 2, 16)) for _ in range(3)]
        alpha = rescale_factor(n, coeffs, kb)
        for p in range(16):
            m, _ = polynomial_abs_max([n.values[p]] + [c.values[p] for c in coeffs])
            want = min(kb / m, 1.0) if m > 0 else 1.0
            assert alpha.values[p] == pytest.approx(want, rel=1e-14)

    def test_nonpositive_bound_rejected(self):
        with pytest.raises(ValueError):
            rescale_factor(constant_field(self.mesh, 1.0), [], 0.0)


class TestStepContext:
    def test_rejects_nonpositive_tau(self, mesh8, gl):
        plan = SpectralPlan(mesh8, 0.1, 2.0)
        spec = make_scheme(2, 2.0)
        with pytest.raises(ValueError):
            StepContext(plan, gl, spec, 0.0)

    def test_rejects_understabilized_plan(self, mesh8, gl):
        plan = SpectralPlan(mesh8, 0.1, 1.0)
        spec = make_scheme(2, 1.0)
        with pytest.raises(ValueError):
            StepContext(plan, gl, spec, 0.1)

    def test_rejects_kappa_mismatch(self, mesh8, gl):
        plan = SpectralPlan(mesh8, 0.1, 2.0)
        spec = make_scheme(2, 3.0)
        with pytest.raises(ValueError):
            StepContext(plan, gl, spec, 0.1)

    def test_nonlinearity_peaks_at_kappa_beta(self, mesh8, gl):
        ctx = make_ctx(mesh8, gl, 2, 0.1)
        n = ctx.nonlinearity(np.array([1.0, -1.0, 0.0]))
        assert n[0] == pytest.approx(ctx.kappa_beta, rel=1e-15)
        assert n[1] == pytest.approx(-ctx.kappa_beta, rel=1e-15)
        assert n[2] == 0.0

    def test_phi_grids_are_memoized(self, mesh8, gl):
        ctx = make_ctx(mesh8, gl, 2, 0.1)
        assert ctx.phi_grid(1, 0.05) is ctx.phi_grid(1, 0.05)


class TestEvaluateStage:
    def test_level_one_is_the_exponential_euler_formula(self, mesh8, gl):
        ctx = make_ctx(mesh8, gl, 2, 0.2)
        u = sinprod(mesh8, 0.4)
        n0 = Field(mesh8, ctx.nonlinearity(u.values))
        state = StageState(0, [], ones_field(mesh8), n0)
        s = 0.13
        got = evaluate_stage(ctx, 1, s, u, state)
        want = apply_phi(ctx.plan, 0, s, u).values + s * apply_phi(ctx.plan, 1, s, n0).values
        assert np.max(np.abs(got.values - want)) < 1e-13

    @pytest.mark.parametrize("rescale_const", [1.0, 0.7])
    @pytest.mark.parametrize("s_frac", [0.5, 1.0])
    def test_matches_duhamel_quadrature(self, mesh8, gl, rescale_const, s_frac):
        tau = 0.3
        ctx = make_ctx(mesh8, gl, 4, tau)
        u = sinprod(mesh8, 0.4)
        rng = np.random.default_rng(5)
        n0 = Field(mesh8, ctx.nonlinearity(u.values))
        coeffs = [Field(mesh8, rng.uniform(-0.5, 0.5, mesh8.ncells)) for _ in range(2)]
        alpha = constant_field(mesh8, rescale_const)
        state = StageState(2, coeffs, alpha, n0)
        s = s_frac * tau
        got = evaluate_stage(ctx, 3, s, u, state)
        want = duhamel_stage(
            mesh8, 0.1, ctx.plan.kappa, u.values,
            rescale_const * n0.values,
            [rescale_const * c.values for c in coeffs], tau, s)
        rel = np.linalg.norm(got.values - want) / np.linalg.norm(want)
        assert rel < 1e-10

    def test_stage_time_domain_enforced(self, mesh8, gl):
        ctx = make_ctx(mesh8, gl, 2, 0.2)
        u = sinprod(mesh8, 0.4)
        state = StageState(0, [], ones_field(mesh8), Field(mesh8, ctx.nonlinearity(u.values)))
        with pytest.raises(ValueError):
            evaluate_stage(ctx, 1, 0.0, u, state)
        with pytest.raises(ValueError):
            evaluate_stage(ctx, 1, 0.3, u, state)

    def test_state_level_must_precede_stage_level(self, mesh8, gl):
        ctx = make_ctx(mesh8, gl, 3, 0.2)
        u = sinprod(mesh8, 0.4)
        state = StageState(0, [], ones_field(mesh8), Field(mesh8, ctx.nonlinearity(u.values)))
        with pytest.raises(ValueError):
            evaluate_stage(ctx, 3, 0.1, u, state)


def replicate_cascade(ctx, u):
    """Rebuild one step from the public stage/rescale operations."""
    mesh = u.mesh
    n0 = Field(mesh, ctx.nonlinearity(u.values))

    def scaled(coeffs):
        if ctx.rescaled:
            return rescale_factor(n0, coeffs, ctx.kappa_beta)
        return ones_field(mesh)

    state = StageState(0, [], scaled([]), n0)
    stages = []
    for j in ctx.spec.levels:
        nodes = ctx.spec.node_sets[j - 1].nodes
        d = np.empty((j, mesh.ncells))
        for k in range(1, j + 1):
            w = evaluate_stage(ctx, j, nodes[k] * ctx.tau, u, state)
            stages.append(w)
            d[k - 1] = ctx.nonlinearity(w.values) - n0.values
        c = ctx.spec.systems[j - 1].solve(d)
        coeffs = [Field(mesh, c[m]) for m in range(j)]
        state = StageState(j, coeffs, scaled(coeffs), n0)
    final = evaluate_stage(ctx, ctx.spec.order, ctx.tau, u, state)
    stages.append(final)
    return final, stages


class TestStep:
    def test_constant_one_is_a_fixed_point(self, mesh8, gl):
        for rescaled in (False, True):
            ctx = make_ctx(mesh8, gl, 3, 0.5, rescaled=rescaled)
            u1, diag = step(ctx, ones_field(mesh8))
            assert np.max(np.abs(u1.values - 1.0)) < 1e-12
            assert diag.mbp_ok

    @pytest.mark.parametrize("rescaled", [False, True])
    def test_vanishing_nonlinearity_reduces_to_the_semigroup(self, mesh8, rescaled):
        pot = LinearDrift(2.0)
        ctx = make_ctx(mesh8, pot, 3, 0.4, rescaled=rescaled, kappa=2.0)
        u = sinprod(mesh8, 0.4)
        u1, _ = step(ctx, u)
        want = apply_phi(ctx.plan, 0, 0.4, u)
        assert np.array_equal(u1.values, want.values)
        dense = DenseOperator(mesh8, 0.1, 2.0).expm(0.4, u.values)
        assert np.max(np.abs(u1.values - dense)) < 1e-11

    def test_first_order_step_formula(self, mesh8, gl):
        tau = 0.2
        ctx = make_ctx(mesh8, gl, 1, tau)
        u = sinprod(mesh8, 0.4)
        u1, diag = step(ctx, u)
        n0 = Field(mesh8, ctx.nonlinearity(u.values))
        want = apply_phi(ctx.plan, 0, tau, u).values + tau * apply_phi(ctx.plan, 1, tau, n0).values
        assert np.max(np.abs(u1.values - want)) < 1e-13
        assert diag.alpha_min == 1.0

    def test_step_equals_final_stage_of_the_cascade(self, mesh32, gl):
        for rescaled in (False, True):
            ctx = make_ctx(mesh32, gl, 3, 0.05, rescaled=rescaled)
            u = sinprod(mesh32, 0.5)
            u1, _ = step(ctx, u)
            replayed, _ = replicate_cascade(ctx, u)
            assert np.array_equal(u1.values, replayed.values)

    def test_diagnostics_labeling(self, mesh8, gl):
        ctx = make_ctx(mesh8, gl, 2, 0.1)
        u = sinprod(mesh8, 0.4)
        _, diag = step(ctx, u, n=5)
        assert diag.n == 5
        assert diag.t == pytest.approx(0.5)
        _, diag = step(ctx, u, n=2, t=0.33)
        assert diag.t == 0.33

    def test_dissipation_flag_uses_previous_energy(self, mesh8, gl):
        ctx = make_ctx(mesh8, gl, 2, 0.01)
        u = sinprod(mesh8, 0.4)
        _, diag = step(ctx, u, prev_energy=discrete_energy(u, 0.1, gl))
        assert diag.dissipation_ok

    def test_rejects_non_finite_input(self, mesh8, gl):
        ctx = make_ctx(mesh8, gl, 2, 0.1)
        bad = constant_field(mesh8, 1.0)
        bad.values[0] = np.nan
        with pytest.raises(ValueError):
            step(ctx, bad)

    def test_rescaled_requires_bounded_input(self, mesh8, gl):
        ctx = make_ctx(mesh8, gl, 2, 0.1, rescaled=True)
        with pytest.raises(ValueError):
            step(ctx, constant_field(mesh8, 1.2))

    def test_out_of_domain_input_raises_bound_exceeded(self, mesh8, fh):
        ctx = make_ctx(mesh8, fh, 3, 0.1)
        with pytest.raises(BoundExceeded) as info:
            step(ctx, constant_field(mesh8, 1.5))
        assert (info.value.level, info.value.stage) == (0, 0)

    def test_overflowing_state_raises_blowup(self, mesh8, gl):
        ctx = make_ctx(mesh8, gl, 3, 0.1)
        with np.errstate(over="ignore", invalid="ignore"):
            with pytest.raises(NumericalBlowup) as info:
                step(ctx, constant_field(mesh8, 1e200))
        assert info.value.level >= 1
        assert info.value.stage >= 1

    def test_mesh_mismatch_rejected(self, mesh8, gl):
        ctx = make_ctx(mesh8, gl, 2, 0.1)
        with pytest.raises(ValueError):
            step(ctx, constant_field(Mesh2D(1.0, 1.0, 4, 4), 0.0))


class TestStepDenseOracle:
    @pytest.mark.parametrize("order", [2, 3])
    @pytest.mark.parametrize("rescaled", [False, True])
    def test_full_step_matches_dense_cascade(self, mesh8, gl, order, rescaled):
        tau = 0.25
        ctx = make_ctx(mesh8, gl, order, tau, rescaled=rescaled)
        u = sinprod(mesh8, 0.9)
        got, _ = step(ctx, u)
        want = dense_etdrk_step(
            mesh8, 0.1, ctx.plan.kappa, gl, order,
            [ns.nodes for ns in ctx.spec.node_sets], tau, u.values, rescaled)
        rel = np.linalg.norm(got.values - want) / np.linalg.norm(want)
        assert rel < 1e-10

    def test_fh_rescaled_step_matches_dense_cascade(self, mesh8, fh):
        tau = 1.0
        ctx = make_ctx(mesh8, fh, 3, tau, rescaled=True)
        u = random_field(mesh8, 3, -0.9 * fh.beta, 0.9 * fh.beta)
        got, _ = step(ctx, u)
        want = dense_etdrk_step(
            mesh8, 0.1, ctx.plan.kappa, fh, 3,
            [ns.nodes for ns in ctx.spec.node_sets], tau, u.values, True)
        rel = np.linalg.norm(got.values - want) / np.linalg.norm(want)
        assert rel < 1e-10

    def test_second_order_on_finer_grid_against_dense_operator(self, mesh32, gl):
        # same cascade formulas evaluated through a dense 1024x1024
        # eigendecomposition instead of the fast transform
        tau = 0.01
        ctx = make_ctx(mesh32, gl, 2, tau)
        u = sinprod(mesh32, 0.5)
        got, _ = step(ctx, u)
        want = dense_etdrk_step(
            mesh32, 0.1, 2.0, gl, 2,
            [ns.nodes for ns in ctx.spec.node_sets], tau, u.values, False)
        assert np.max(np.abs(got.values - want)) < 1e-10


class TestStructurePreservation:
    def test_modes_coincide_while_rescaling_is_inactive(self, mesh32, gl):
        # small data keeps |P| below kappa beta, so alpha is identically one
        std = make_ctx(mesh32, gl, 3, 0.1, rescaled=False)
        res = make_ctx(mesh32, gl, 3, 0.1, rescaled=True)
        u_s = sinprod(mesh32, 0.3)
        u_r = sinprod(mesh32, 0.3)
        for _ in range(3):
            u_s, _ = step(std, u_s)
            u_r, diag = step(res, u_r)
            assert diag.alpha_min == 1.0
            assert np.array_equal(u_s.values, u_r.values)

    @pytest.mark.parametrize("tau", [1.0, 10.0])
    def test_unconditional_maximum_bound(self, fh, tau):
        mesh = Mesh2D(2 * np.pi, 2 * np.pi, 16, 16)
        ctx = make_ctx(mesh, fh, 4, tau, rescaled=True)
        u = random_field(mesh, 11, -fh.beta + 1e-12, fh.beta - 1e-12)
        for n in range(1, 6):
            u, diag = step(ctx, u, n=n)
            assert diag.max_norm <= fh.beta + 1e-12
            assert diag.mbp_ok

    def test_every_internal_stage_respects_the_bound(self, fh):
        mesh = Mesh2D(2 * np.pi, 2 * np.pi, 16, 16)
        ctx = make_ctx(mesh, fh, 4, 10.0, rescaled=True)
        u = random_field(mesh, 13, -fh.beta + 1e-12, fh.beta - 1e-12)
        _, stages = replicate_cascade(ctx, u)
        for w in stages:
            assert max_norm(w) <= fh.beta + 1e-12

    def test_gl_rescaled_bound_with_large_steps(self, gl):
        mesh = Mesh2D(2 * np.pi, 2 * np.pi, 16, 16)
        ctx = make_ctx(mesh, gl, 5, 10.0, rescaled=True)
        u = random_field(mesh, 17, -1.0 + 1e-12, 1.0 - 1e-12)
        for n in range(1, 6):
            u, diag = step(ctx, u, n=n)
            assert diag.max_norm <= 1.0 + 1e-12

    @pytest.mark.parametrize("order", [2, 3])
    def test_energy_decays_below_the_proven_bound(self, mesh32, gl, order):
        tau = 0.9 * tau_max(order, 2.0, "uniform", rescaled=True)
        ctx = make_ctx(mesh32, gl, order, tau, rescaled=True)
        u = sinprod(mesh32, 0.5)
        prev = discrete_energy(u, 0.1, gl)
        for n in range(1, 11):
            u, diag = step(ctx, u, n=n, prev_energy=prev)
            assert diag.dissipation_ok
            assert diag.energy <= prev + 1e-10 * (1.0 + abs(prev))
            prev = diag.energy

    def test_alpha_min_reported_when_rescaling_activates(self, fh):
        mesh = Mesh2D(2 * np.pi, 2 * np.pi, 16, 16)
        ctx = make_ctx(mesh, fh, 3, 1.0, rescaled=True)
        u = random_field(mesh, 19, -fh.beta + 1e-12, fh.beta - 1e-12)
        _, diag = step(ctx, u)
        assert 0.0 < diag.alpha_min <= 1.0
