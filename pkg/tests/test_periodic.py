"""Periodic solves: period map, linear and quasilinear fixed points, studies."""

import math

import numpy as np
import pytest

from conftest import (
    TWO_PI,
    make_benchmark_boundary,
    make_benchmark_system,
    make_transport_boundary,
    make_transport_system,
)
from hyperstrip import expr as ex
from hyperstrip.model import (
    BoundarySpec,
    GridFunction,
    LinearSystemSpec,
    QuasilinearSystemSpec,
    sample_fields,
)
from hyperstrip.periodic import (
    RadiusError,
    boundary_residual,
    manufactured_setup,
    mms_study,
    period_map,
    perturb_study,
    solve_linear_periodic,
    solve_quasilinear,
)

BENCHMARK_USTAR = ("0.1*sin(t)*sin(pi*x)", "0.1*cos(t)*x*(1 - x)")


def quasilinear_benchmark(epsilon: float, radius: float = 0.5) -> QuasilinearSystemSpec:
    """Benchmark coefficients with state-dependent speeds and small forcing."""
    return QuasilinearSystemSpec.from_strings(
        n=2,
        m=1,
        period=TWO_PI,
        speeds=["2 - x + u1", "-(2 + sin(t)) + u2"],
        rhs=[f"-2*sin(t)*u2 + {epsilon!r}*sin(t)", "sin(t)*u1 - 2*u2"],
        radius=radius,
    )


class TestPeriodMap:
    def test_zero_maps_to_zero(self):
        system = make_benchmark_system().compile(a0=0.9)
        boundary = make_benchmark_boundary().compile(system.period)
        phi = np.zeros((17, 2))
        assert np.all(period_map(system, boundary, phi, 32) == 0.0)

    def test_flush_annihilates_everything(self):
        # decoupled transport without reflection forgets the data in
        # time 1, so over a full period the map is identically zero
        system = make_transport_system().compile(a0=0.9)
        boundary = make_transport_boundary(h=("0", "0")).compile(system.period)
        rng = np.random.default_rng(1)
        phi = rng.standard_normal((17, 2))
        assert np.all(period_map(system, boundary, phi, 32) == 0.0)

    def test_affine_combination(self):
        system = make_benchmark_system().compile(a0=0.9)
        boundary = make_benchmark_boundary(h=("sin(t)", "cos(t)")).compile(
            system.period
        )
        rng = np.random.default_rng(4)
        phi = rng.standard_normal((17, 2))
        psi = rng.standard_normal((17, 2))
        alpha = 0.3
        mixed = period_map(system, boundary, alpha * phi + (1 - alpha) * psi, 32)
        split = alpha * period_map(system, boundary, phi, 32) + (
            1 - alpha
        ) * period_map(system, boundary, psi, 32)
        np.testing.assert_allclose(mixed, split, atol=1e-10)


class TestLinearSolve:
    def test_transport_closed_form(self):
        system = make_transport_system().compile(a0=0.9)
        boundary = make_transport_boundary().compile(system.period)
        report = solve_linear_periodic(system, boundary, 32, 64)
        assert report.converged
        assert report.iterations <= 3
        exact = sample_fields(
            [ex.parse_expression("sin(t - x)"), ex.parse_expression("0")],
            32,
            64,
            system.period,
        )
        assert np.max(np.abs(report.solution.values - exact.values)) < 5e-3
        np.testing.assert_array_equal(report.solution.values[:, :, 1], 0.0)

    def test_homogeneous_certified_problem_is_zero(self):
        system = make_benchmark_system().compile(a0=0.9)
        boundary = make_benchmark_boundary().compile(system.period)
        report = solve_linear_periodic(system, boundary, 16, 32)
        assert report.converged
        assert report.iterations == 1
        assert report.solution.sup_norm() == 0.0
        assert report.residual_operator == 0.0
        assert report.residual_pde == 0.0
        assert report.residual_boundary == 0.0

    def test_forced_benchmark_report(self):
        system = make_benchmark_system(forcing=("0.01*sin(t)", "0")).compile(a0=0.9)
        boundary = make_benchmark_boundary().compile(system.period)
        report = solve_linear_periodic(system, boundary, 32, 64)
        assert report.converged
        assert report.fixed_point_defect < 2e-8
        assert report.solution.sup_norm() > 1e-4
        # period map contracts, so recorded updates shrink monotonically
        # once past the first step
        ratios = [
            report.increments[i + 1] / report.increments[i]
            for i in range(1, len(report.increments) - 1)
        ]
        assert all(r < 1.0 for r in ratios)
        assert np.isfinite(report.residual_operator)
        assert np.isfinite(report.residual_pde)
        assert report.residual_boundary < 1e-8

    def test_initial_guess_independence(self):
        system = make_benchmark_system(forcing=("0.01*sin(t)", "0")).compile(a0=0.9)
        boundary = make_benchmark_boundary().compile(system.period)
        tol = 1e-8
        from_zero = solve_linear_periodic(system, boundary, 16, 32, tol=tol)
        rng = np.random.default_rng(9)
        phi = rng.uniform(-1.0, 1.0, size=(17, 2))
        from_random = solve_linear_periodic(
            system, boundary, 16, 32, tol=tol, initial=phi
        )
        gap = np.max(np.abs(from_zero.solution.values - from_random.solution.values))
        assert gap < 4 * tol

    def test_anderson_acceleration_agrees(self):
        system = make_benchmark_system(forcing=("0.01*sin(t)", "0")).compile(a0=0.9)
        boundary = make_benchmark_boundary().compile(system.period)
        plain = solve_linear_periodic(system, boundary, 16, 32)
        fast = solve_linear_periodic(system, boundary, 16, 32, accelerate=True)
        assert fast.converged
        gap = np.max(np.abs(plain.solution.values - fast.solution.values))
        assert gap < 4e-8

    def test_expansion_warns_and_reports_failure(self):
        system = make_transport_system().compile(a0=0.9)
        boundary = BoundarySpec.from_strings(
            reflection=[["0", "1.2"], ["1.2", "0"]], h=["0.3", "0"]
        ).compile(system.period)
        with pytest.warns(RuntimeWarning, match="may not contract"):
            report = solve_linear_periodic(system, boundary, 16, 32, maxit=5)
        assert not report.converged
        assert len(report.increments) == 5


class TestManufactured:
    def test_zero_solution(self):
        spec = make_benchmark_system()
        bspec = make_benchmark_boundary()
        forcing, h = manufactured_setup(spec, bspec, ("0", "0"))
        for e in forcing + h:
            for point in [(0.1, 0.3), (0.9, 4.0)]:
                assert ex.evaluate(e, {"x": point[0], "t": point[1]}) == 0.0

    def test_transport_annihilation(self):
        spec = make_transport_system()
        bspec = BoundarySpec.from_strings(
            reflection=[["0", "0"], ["0", "0"]], h=["0", "0"]
        )
        forcing, h = manufactured_setup(spec, bspec, ustar=("sin(t - x)", "0"))
        rng = np.random.default_rng(0)
        for _ in range(20):
            x, t = rng.uniform(0, 1), rng.uniform(0, TWO_PI)
            assert abs(ex.evaluate(forcing[0], {"x": x, "t": t})) < 1e-12
            assert ex.evaluate(forcing[1], {"x": x, "t": t}) == 0.0
            assert ex.evaluate(h[0], {"t": t}) == pytest.approx(math.sin(t), abs=1e-15)
            assert ex.evaluate(h[1], {"t": t}) == 0.0

    def test_reflection_enters_boundary_data(self):
        spec = make_transport_system()
        bspec = BoundarySpec.from_strings(
            reflection=[["0", "0.5"], ["0", "0"]], h=["0", "0"]
        )
        _, h = manufactured_setup(spec, bspec, ("sin(t - x)", "cos(t + x)"))
        # h_1(t) = u*_1(0,t) - 0.5 u*_2(0,t): the outgoing trace of the
        # second component is read at x = 0
        for t in [0.0, 0.7, 3.1]:
            expected = math.sin(t) - 0.5 * math.cos(t)
            assert ex.evaluate(h[0], {"t": t}) == pytest.approx(expected, abs=1e-15)

    def test_benchmark_convergence_ladder(self):
        study = mms_study(
            make_benchmark_system(),
            make_benchmark_boundary(),
            BENCHMARK_USTAR,
            grids=[(16, 32), (32, 64), (64, 128)],
        )
        errors = [row.sup_error for row in study.rows]
        assert all(errors[i] > errors[i + 1] for i in range(len(errors) - 1))
        assert min(study.orders) > 0.9
        # C2 proxy: second time differences settle near the true d_tt u*
        curvatures = [row.time_curvature for row in study.rows]
        assert all(c < 0.5 for c in curvatures)
        assert curvatures[-1] == pytest.approx(0.1, abs=0.05)


class TestQuasilinear:
    def test_linear_rhs_is_stationary_after_first_pass(self):
        spec = QuasilinearSystemSpec.from_strings(
            n=2,
            m=1,
            period=TWO_PI,
            speeds=["2 - x", "-(2 + sin(t))"],
            rhs=["-2*sin(t)*u2 + 0.001*sin(t)", "sin(t)*u1 - 2*u2"],
            radius=0.5,
        )
        boundary = make_benchmark_boundary()
        report = solve_quasilinear(spec, boundary, 16, 32, a0=0.5)
        assert report.converged
        assert report.iterations <= 2
        # restarting the frozen solve from the converged iterate is a
        # single-iteration confirmation pass
        assert report.inner_iterations[-1] == 1
        linear = solve_linear_periodic(
            make_benchmark_system(forcing=("0.001*sin(t)", "0")).compile(a0=0.9),
            make_benchmark_boundary().compile(TWO_PI),
            16,
            32,
        )
        gap = np.max(np.abs(report.solution.values - linear.solution.values))
        assert gap < 1e-6

    def test_zero_fixed_point(self):
        spec = QuasilinearSystemSpec.from_strings(
            n=2,
            m=1,
            period=TWO_PI,
            speeds=["2 - x + u1", "-(2 + sin(t)) + u2"],
            rhs=["-2*sin(t)*u2", "sin(t)*u1 - 2*u2"],
            radius=0.5,
        )
        report = solve_quasilinear(spec, make_benchmark_boundary(), 16, 32, a0=0.5)
        assert report.converged
        assert report.iterations == 1
        assert report.solution.sup_norm() == 0.0

    def test_small_forcing_response(self):
        epsilon = 1e-3
        report = solve_quasilinear(
            quasilinear_benchmark(epsilon), make_benchmark_boundary(), 16, 64, a0=0.5
        )
        assert report.converged
        assert report.solution.sup_norm() <= 10 * epsilon
        # outer updates contract after the first pass
        if len(report.increments) > 2:
            ratios = [
                report.increments[i + 1] / report.increments[i]
                for i in range(1, len(report.increments) - 1)
            ]
            assert all(r < 1.0 for r in ratios)

    def test_radius_abort(self):
        spec = quasilinear_benchmark(1e-3, radius=5e-5)
        with pytest.raises(RadiusError, match="trust ball"):
            solve_quasilinear(spec, make_benchmark_boundary(), 16, 64, a0=0.5)


class TestPerturbations:
    def test_gamma_zero_reproduces_base(self):
        study = perturb_study(
            make_benchmark_system(forcing=("0.01*sin(t)", "0")),
            make_benchmark_boundary(),
            gamma=0.0,
            samples=2,
            nx=16,
            nt=32,
        )
        assert study.all_converged
        assert study.max_deviation <= 2e-8

    def test_small_gamma_all_converge(self):
        study = perturb_study(
            make_benchmark_system(forcing=("0.01*sin(t)", "0")),
            make_benchmark_boundary(),
            gamma=1e-2,
            samples=3,
            nx=16,
            nt=32,
        )
        assert study.all_converged
        assert study.base_sup > 1e-4
        assert 0.0 < study.max_deviation < 0.1
        for sample in study.samples:
            assert sample.error is None
            assert np.isfinite(sample.solution_sup)

    def test_matched_seeds_scale_linearly(self):
        kwargs = dict(samples=2, nx=16, nt=32)
        big = perturb_study(
            make_benchmark_system(forcing=("0.01*sin(t)", "0")),
            make_benchmark_boundary(),
            gamma=1e-2,
            **kwargs,
        )
        small = perturb_study(
            make_benchmark_system(forcing=("0.01*sin(t)", "0")),
            make_benchmark_boundary(),
            gamma=1e-3,
            **kwargs,
        )
        assert small.max_deviation <= 0.25 * big.max_deviation

    def test_sign_flip_reported_not_fatal(self):
        study = perturb_study(
            make_benchmark_system(forcing=("0.01*sin(t)", "0")),
            make_benchmark_boundary(),
            gamma=5.0,
            samples=4,
            nx=16,
            nt=32,
        )
        failed = [s for s in study.samples if not s.converged]
        assert failed
        assert any("ValidationError" in (s.error or "") for s in failed)


class TestResidualHelpers:
    def test_boundary_residual_detects_violation(self):
        system = make_benchmark_system().compile(a0=0.9)
        boundary = make_benchmark_boundary().compile(system.period)
        good = GridFunction.zeros(8, 16, 2, system.period)
        assert boundary_residual(boundary, system.m, good) == 0.0
        values = np.zeros((16, 9, 2))
        values[:, 0, 0] = 1.0  # inflow trace of the right mover off by 1
        bad = GridFunction(period=system.period, values=values)
        assert boundary_residual(boundary, system.m, bad) == pytest.approx(1.0)
