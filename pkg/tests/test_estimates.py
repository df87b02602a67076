import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from viscous_hj.estimates import (
    DecayParams,
    InsufficientDecayError,
    admissibility_threshold,
    bernstein_diagnostic,
    bernstein_theta,
    bound_power,
    bound_sqrt,
    check_gradient_bounds,
    decay_params,
    empirical_envelope,
    fit_decay_rate,
    poincare_check,
    poincare_constant,
    search_beta,
    window_decay_check,
    y_functional,
)
from viscous_hj.grid import Domain
from viscous_hj.hamiltonian import HamiltonianSpec
from viscous_hj.solver import SolverConfig, Trajectory, run

from conftest import cos_mode


def synthetic(times, osc, grad=None):
    times = np.asarray(times, dtype=float)
    osc = np.asarray(osc, dtype=float)
    grad = np.zeros_like(times) if grad is None else np.asarray(grad, dtype=float)
    return Trajectory(times, osc.copy(), np.zeros_like(osc), grad, grad, 2.0, np.zeros(3))


class TestExponents:
    def test_line_quadratic(self):
        par = decay_params(1, 2.0, 5.0)
        assert (par.gamma, par.eta, par.alpha) == (6.0, 4.0, 5.0 / 4.0)

    def test_plane_sublinear(self):
        par = decay_params(2, 0.5, 1.0)
        assert par.gamma == 4.0 and par.eta == 3.5
        assert par.alpha == pytest.approx(0.9, rel=1e-15)
        assert par.regime == "extinction"

    def test_linear_threshold(self):
        assert admissibility_threshold(1, 1.0) == 2.0
        with pytest.raises(ValueError):
            decay_params(1, 1.0, 2.0)
        par = decay_params(1, 1.0, 2.5)
        assert par.alpha == 1.0 and par.regime == "exponential"

    @pytest.mark.parametrize("N, p", [(0, 1.0), (3, 1.0), (1, 0.0), (2, -1.0)])
    def test_invalid(self, N, p):
        with pytest.raises(ValueError):
            decay_params(N, p, 10.0)

    @settings(max_examples=200, deadline=None)
    @given(st.sampled_from([1, 2]), st.floats(0.05, 5.0), st.floats(0.01, 20.0))
    def test_alpha_regime(self, N, p, extra):
        par = decay_params(N, p, admissibility_threshold(N, p) + extra)
        assert par.gamma == pytest.approx(N * (par.beta + 1))
        assert par.eta > 0
        if p < 1:
            assert par.alpha < 1
        elif p == 1:
            assert par.alpha == pytest.approx(1.0)
        else:
            assert par.alpha > 1

    @pytest.mark.parametrize("N", [1, 2])
    @pytest.mark.parametrize("p", [0.3, 1.0, 1.5, 3.0])
    def test_default_beta_admissible(self, N, p):
        assert decay_params(N, p).beta > admissibility_threshold(N, p)


class TestGradientBounds:
    def test_sqrt_example(self):
        assert bound_sqrt(2.0, 0.5) == pytest.approx(2.0, rel=1e-15)

    def test_power_example(self):
        # (2/(1*0.5*0.5))^2 * 1^2 * 1^-2 = 64
        assert bound_power(1.0, 1.0, 1.0, 0.5) == pytest.approx(64.0, rel=1e-14)

    def test_zero_oscillation(self):
        assert bound_sqrt(0.0, 3.0) == 0.0 and bound_power(0.0, 3.0, 1.0, 3.0) == 0.0

    @pytest.mark.parametrize("fn", [lambda: bound_sqrt(1.0, 0.0), lambda: bound_power(1.0, -1.0, 1.0, 2.0), lambda: bound_power(1.0, 1.0, 1.0, 1.0), lambda: bound_sqrt(-1.0, 1.0)])
    def test_invalid(self, fn):
        with pytest.raises(ValueError):
            fn()

    @settings(max_examples=100, deadline=None)
    @given(st.floats(1e-3, 1e3), st.floats(1e-3, 1e3), st.floats(1e-2, 1e2), st.floats(0.1, 5.0).filter(lambda p: abs(p - 1) > 1e-3))
    def test_homogeneity(self, osc, dt, lam, p):
        assert bound_sqrt(lam * osc, lam**2 * dt) == pytest.approx(bound_sqrt(osc, dt), rel=1e-12)
        assert bound_power(lam * osc, lam * dt, 1.0, p) == pytest.approx(bound_power(osc, dt, 1.0, p), rel=1e-12)

    def test_broadcast(self):
        out = bound_sqrt(np.array([2.0, 8.0]), np.array([0.5, 2.0]))
        assert np.allclose(out, [2.0, 4.0])

    def test_violation_located(self):
        t = np.array([0.0, 1.0, 2.0])
        traj = synthetic(t, [2.0, 1.0, 0.5], grad=[0.0, 100.0, 0.0])
        rec = check_gradient_bounds(traj, 1.0, 2.0)["gradient_bound_sqrt"]
        assert not rec.passed
        assert rec.location == (0.0, 1.0)
        assert rec.margin == pytest.approx((math.sqrt(0.5) * 2.0 + 1e-12 - 100.0) / (math.sqrt(0.5) * 2.0))

    def test_power_skipped_for_linear(self):
        traj = synthetic([0.0, 1.0], [1.0, 0.5])
        assert check_gradient_bounds(traj, 1.0, 1.0).names() == ["gradient_bound_sqrt"]
        assert check_gradient_bounds(traj, 0.0, 2.0).names() == ["gradient_bound_sqrt"]

    @pytest.mark.parametrize("a, p", [(1.0, 0.5), (-1.0, 1.5), (2.0, 3.0)])
    def test_solver_output_satisfies_bounds(self, coarse_line, a, p):
        traj = run(cos_mode(coarse_line), HamiltonianSpec(a, p), SolverConfig(t_end=0.3), coarse_line)
        assert check_gradient_bounds(traj, a, p).passed


class TestPoincare:
    def test_linear_function(self):
        d = Domain.interval(1.0, 101)
        (x,) = d.mesh()
        lhs, rhs = poincare_check(x, 2.0, d)
        # the mirror gradient vanishes at the two end nodes
        assert lhs == 1.0
        assert rhs == pytest.approx(4.0 * math.sqrt(1.0 - d.spacing[0]), rel=1e-12)

    def test_constant(self):
        assert poincare_constant(Domain.rectangle((3.0, 4.0), (5, 5)), 4.0) == pytest.approx(2 * 5 / 12**0.25 * 2)

    def test_q_below_dimension(self, square):
        with pytest.raises(ValueError):
            poincare_constant(square, 2.0)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 2**31), st.floats(2.5, 8.0))
    def test_holds_for_random_smooth_fields(self, seed, q):
        d = Domain.rectangle((1.0, 1.5), (33, 33))
        rng = np.random.default_rng(seed)
        x, y = d.mesh()
        f = sum(rng.normal() * np.cos(k * np.pi * x) * np.cos(l * np.pi * y / 1.5) for k in range(4) for l in range(4))
        lhs, rhs = poincare_check(f, q, d)
        assert lhs <= rhs


class TestBernstein:
    @pytest.mark.parametrize("p", [0.5, 1.0, 2.0])
    def test_sqrt_weight_positive_and_capped(self, p):
        xi = np.linspace(-1, 1, 101)
        th = bernstein_theta(xi, 1.0, -1.0, 0.1, 1.0, p, "sqrt")
        assert np.all(th > 0)
        assert np.max(th) == pytest.approx(0.5 * 2.1**2)
        assert np.min(th) == pytest.approx(0.5 * (2.1**2 - 4.0))

    def test_power_weight_superquadratic_at_max(self):
        assert bernstein_theta(1.0, 1.0, -1.0, 0.2, 2.0, 3.0, "power") == pytest.approx((0.2 / 4.0) ** (2 / 3))

    def test_power_weight_rejects_linear(self):
        with pytest.raises(ValueError):
            bernstein_theta(0.0, 1.0, -1.0, 0.1, 1.0, 1.0, "power")

    def test_needs_snapshots(self):
        with pytest.raises(ValueError):
            bernstein_diagnostic(synthetic([0.0, 1.0], [1.0, 0.5]), Domain.interval(1.0, 3), 1.0, 2.0)

    @pytest.mark.parametrize("a, p, case", [(1.0, 0.5, "sqrt"), (1.0, 0.5, "power"), (-1.0, 2.0, "sqrt"), (1.0, 3.0, "power")])
    def test_solver_output(self, coarse_line, a, p, case):
        cfg = SolverConfig(t_end=0.3, snapshot_every=1, max_snapshots=8)
        traj = run(cos_mode(coarse_line), HamiltonianSpec(a, p), cfg, coarse_line)
        assert bernstein_diagnostic(traj, coarse_line, a, p, case).passed


class TestYFunctional:
    def test_exponential_closed_form(self):
        t = np.linspace(0.0, 30.0, 3001)
        y = y_functional(synthetic(t, np.exp(-t)), 1.0)
        assert y.values[0] == pytest.approx(1.0, rel=1e-4)
        assert np.allclose(y.values[:1000], np.exp(-t[:1000]), rtol=1e-4)
        assert np.allclose(y.derivative[:1000], -np.exp(-t[:1000]), rtol=1e-4)
        assert y.tail_bound == pytest.approx(math.exp(-30) * (30 + 1), rel=1e-3)

    def test_shape(self):
        t = np.linspace(0, 5, 200)
        y = y_functional(synthetic(t, np.exp(-3 * t) * (1 + 0.1 * np.sin(t))), 2.0)
        assert np.all(np.diff(y.values) <= 0)
        assert np.all(np.diff(y.values, 2) >= -1e-15)
        values, tail = y
        assert values is y.values and tail == y.tail_bound

    def test_requires_decay(self):
        with pytest.raises(InsufficientDecayError):
            y_functional(synthetic([0.0, 1.0], [1.0, 0.5]), 2.0)

    def test_extinct_tail_zero(self):
        y = y_functional(synthetic([0.0, 0.5, 1.0], [1.0, 0.2, 0.0]), 2.0)
        assert y.tail_bound == 0.0

    @settings(max_examples=150, deadline=None)
    @given(
        st.lists(st.floats(0.0, 1.0), min_size=3, max_size=40),
        st.lists(st.floats(1e-3, 1.0), min_size=3, max_size=40),
        st.floats(0.5, 12.0),
    )
    def test_window_never_fails_on_monotone_history(self, drops, steps, gamma):
        n = min(len(drops), len(steps))
        t = np.concatenate([[0.0], np.cumsum(steps[: n - 1])])
        osc = np.minimum.accumulate(np.concatenate([[1.0], np.asarray(drops[: n - 1])]))
        osc[-1] = 0.0
        report = window_decay_check(synthetic(t, osc), gamma, tol=0.0)
        assert report.passed


class TestEnvelope:
    def test_exponential_constant(self):
        t = np.linspace(0.0, 40.0, 4001)
        par = decay_params(1, 1.0, 2.5)
        osc = np.exp(-t / par.gamma)
        C, f, report = empirical_envelope(synthetic(t, osc), par)
        assert C == pytest.approx(1.0, rel=1e-3)
        assert report.passed

    def test_algebraic_constant(self):
        par = decay_params(1, 2.0, 5.0)
        k = 1.0 / (par.alpha - 1.0)
        t = np.concatenate([[0.0], np.geomspace(1e-4, 1e5, 6000)])
        g = k * (k + 1) * (1 + t) ** (-k - 2)
        C, f, report = empirical_envelope(synthetic(t, g ** (1 / par.gamma)), par)
        assert C == pytest.approx(par.alpha - 1.0, rel=1e-3)
        assert report.passed
        y0 = 1.0
        assert f[0] == pytest.approx(y0, rel=1e-3)

    def test_sublinear_rejected(self):
        par = DecayParams(N=1, p=0.5, beta=1.0, gamma=2.0, eta=1.5, alpha=2.5 / 3.0)
        with pytest.raises(ValueError):
            empirical_envelope(synthetic([0.0, 1.0, 2.0], [1.0, 0.1, 0.0]), par)

    def test_solver_linear_run(self, coarse_line):
        par = decay_params(1, 1.0, 2.5)
        traj = run(cos_mode(coarse_line), HamiltonianSpec(1.0, 1.0), SolverConfig(t_end=3.0), coarse_line)
        C, _, report = empirical_envelope(traj, par)
        assert C > 0 and report.passed

    def test_search_beta(self, coarse_line):
        traj = run(cos_mode(coarse_line), HamiltonianSpec(1.0, 1.0), SolverConfig(t_end=3.0), coarse_line)
        beta, bound = search_beta(traj, 1, 1.0, 1.0)
        assert beta > 2.0 and 0 < bound < math.inf


class TestFit:
    def test_exponential(self):
        t = np.linspace(0, 5, 50)
        rate, r2 = fit_decay_rate(synthetic(t, 3 * np.exp(-2 * t)), "exponential")
        assert rate == pytest.approx(2.0, rel=1e-10) and r2 == pytest.approx(1.0)

    def test_algebraic(self):
        t = np.linspace(1, 10, 50)
        rate, r2 = fit_decay_rate(synthetic(t, 5 * t**-3.0), "algebraic")
        assert rate == pytest.approx(3.0, rel=1e-10) and r2 == pytest.approx(1.0)

    def test_extinct_window(self):
        with pytest.raises(ValueError):
            fit_decay_rate(synthetic([0.0, 1.0, 2.0, 3.0], [1.0, 0.5, 0.0, 0.0]))

    def test_flat_series(self):
        assert fit_decay_rate(synthetic([0.0, 1.0, 2.0], [1.0, 1.0, 1.0])) == (pytest.approx(0.0, abs=1e-12), 1.0)

    @pytest.mark.parametrize("kw", [dict(window=0.0), dict(model="power")])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            fit_decay_rate(synthetic([1.0, 2.0], [1.0, 0.5]), **kw)
