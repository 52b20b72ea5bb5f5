"""Specs, compiled fields, grid data, structural validation."""

import math

import numpy as np
import pytest

import hyperstrip.expr as ex
from hyperstrip.model import (
    BoundarySpec,
    Field,
    FrozenStateField,
    GridFunction,
    KernelTerm,
    LinearSystemSpec,
    PointSample,
    QuasilinearSystemSpec,
    RowNonlocal,
    SampledTimeField,
    ValidationError,
    sample_fields,
    validate,
)

TWO_PI = 2.0 * math.pi


def constant_state(value, nx=16, nt=16, ncomp=1, period=TWO_PI):
    values = np.full((nt, nx + 1, ncomp), 0.0)
    values[..., :] = value
    return GridFunction(period=period, values=values)


class TestLinearSpec:
    def test_from_strings_and_compile(self, benchmark_system):
        compiled = benchmark_system.compile(a0=0.9)
        assert compiled.n == 2 and compiled.m == 1
        assert compiled.a0 == 0.9
        assert compiled.speed[0](0.5, 1.3) == pytest.approx(1.5)
        assert compiled.speed[1](0.0, math.pi / 2.0) == pytest.approx(-3.0)
        assert compiled.coupling[0][1](0.2, 1.0) == pytest.approx(2.0 * math.sin(1.0))
        # symbolic time derivative of -(2 + sin t)
        assert compiled.speed[1].dt(0.7, 0.3) == pytest.approx(-math.cos(0.3), abs=1e-14)

    def test_rejects_wrong_sizes(self):
        with pytest.raises(ValueError):
            LinearSystemSpec.from_strings(
                n=2, m=1, period=1.0, speeds=["1"], coupling=[["0", "0"], ["0", "0"]],
                forcing=["0", "0"],
            )
        with pytest.raises(ValueError):
            LinearSystemSpec.from_strings(
                n=2, m=3, period=1.0, speeds=["1", "-1"],
                coupling=[["0", "0"], ["0", "0"]], forcing=["0", "0"],
            )

    def test_rejects_state_variables_in_coefficients(self):
        with pytest.raises(ValueError, match="may only use"):
            LinearSystemSpec.from_strings(
                n=1, m=1, period=1.0, speeds=["1 + u1"], coupling=[["0"]], forcing=["0"],
            )

    def test_with_forcing_replaces_only_forcing(self, benchmark_system):
        forced = benchmark_system.with_forcing(
            [ex.parse_expression("sin(t)"), ex.parse_expression("0")]
        )
        assert forced.speeds == benchmark_system.speeds
        assert str(forced.forcing[0]) == "sin(t)"


class TestQuasilinearSpec:
    def make(self):
        return QuasilinearSystemSpec.from_strings(
            n=2,
            m=1,
            period=TWO_PI,
            speeds=["2 - x + u1", "-(2 + sin(t)) + u2"],
            rhs=["-2*sin(t)*u2 + 0.001*sin(t)", "sin(t)*u1 - 2*u2"],
            radius=0.5,
        )

    def test_rhs_at_zero(self):
        spec = self.make()
        pinned = spec.rhs_at_zero()
        fn = ex.numpy_callable(pinned[0])
        assert fn(x=0.0, t=1.0) == pytest.approx(0.001 * math.sin(1.0))
        assert ex.evaluate(pinned[1], {"x": 0.0, "t": 1.0}) == 0.0

    def test_freeze_speeds_follow_state(self):
        spec = self.make()
        state = constant_state(0.3, ncomp=2)
        frozen = spec.freeze(state, a0=0.4)
        assert frozen.speed[0](0.5, 0.0) == pytest.approx(1.8, abs=1e-12)
        assert frozen.speed[1](0.0, 0.0) == pytest.approx(-1.7, abs=1e-12)

    def test_freeze_linear_rhs_gives_exact_coupling(self):
        spec = self.make()
        state = constant_state(0.3, ncomp=2)
        frozen = spec.freeze(state)
        # dF1/du2 = -2 sin t is state independent, so b12 = +2 sin t
        assert frozen.coupling[0][1](0.2, 1.0) == pytest.approx(2.0 * math.sin(1.0), abs=1e-13)
        assert frozen.coupling[0][0](0.2, 1.0) == pytest.approx(0.0, abs=1e-13)
        assert frozen.coupling[1][1](0.5, 0.7) == pytest.approx(2.0, abs=1e-13)
        assert frozen.forcing[0](0.0, 1.0) == pytest.approx(0.001 * math.sin(1.0))

    def test_freeze_mean_value_identity_for_quadratic_rhs(self):
        spec = QuasilinearSystemSpec.from_strings(
            n=1, m=1, period=1.0, speeds=["1"], rhs=["u1^2"], radius=1.0,
        )
        state = constant_state(0.3)
        frozen = spec.freeze(state)
        # b u = F(0) - F(u): b = -u/... here -integral 2 sigma u dsigma = -u
        b = frozen.coupling[0][0](0.5, 0.25)
        assert b == pytest.approx(-0.3, abs=1e-14)
        assert b * 0.3 == pytest.approx(0.0 - 0.3**2, abs=1e-14)

    def test_rejects_nonpositive_radius(self):
        with pytest.raises(ValueError):
            QuasilinearSystemSpec.from_strings(
                n=1, m=1, period=1.0, speeds=["1"], rhs=["0"], radius=0.0,
            )


class TestBoundarySpec:
    def test_from_strings_evaluates_constant_entries(self, benchmark_boundary):
        r = benchmark_boundary.reflection
        assert r[0][0] == pytest.approx(math.exp(-3.0), abs=1e-16)
        assert r[0][1] == pytest.approx(0.5 * math.exp(-3.0), abs=1e-16)

    def test_rejects_nonconstant_reflection(self):
        with pytest.raises(ex.ExprError):
            BoundarySpec.from_strings(reflection=[["t"]], h=["0"])

    def test_rejects_x_in_forcing(self):
        with pytest.raises(ValueError, match="may only use"):
            BoundarySpec.from_strings(reflection=[["0"]], h=["sin(x)"])

    def test_compile_fields(self, benchmark_boundary):
        compiled = benchmark_boundary.compile(TWO_PI)
        assert compiled.reflection.shape == (2, 2)
        assert compiled.h[0](0.0, 1.2) == pytest.approx(0.0)
        assert not compiled.has_nonlocal

    def test_absorb_point_sample(self):
        row = RowNonlocal(
            response=ex.parse_expression("0.5*q"),
            samples=(PointSample(weight=ex.parse_expression("1"), component=1, location=0.25),),
        )
        spec = BoundarySpec.from_strings(
            reflection=[["0"]], h=["sin(t)"], nonlocal_rows=[row]
        )
        compiled = spec.compile(TWO_PI)
        assert compiled.has_nonlocal
        nx, nt = 16, 8
        xs = np.linspace(0.0, 1.0, nx + 1)
        values = np.repeat(xs[None, :, None], nt, axis=0)  # u1(x, t) = x
        state = GridFunction(period=TWO_PI, values=values)
        absorbed = compiled.absorb_nonlocal(state, nt)
        assert not absorbed.has_nonlocal
        ts = np.arange(nt) * (TWO_PI / nt)
        np.testing.assert_allclose(
            absorbed.h[0](0.0, ts), np.sin(ts) + 0.5 * 0.25, atol=1e-14
        )

    def test_absorb_kernel_term(self):
        row = RowNonlocal(
            response=ex.parse_expression("q"),
            kernels=(KernelTerm(kernel=ex.parse_expression("1"), component=1),),
        )
        spec = BoundarySpec.from_strings(reflection=[["0"]], h=["0"], nonlocal_rows=[row])
        compiled = spec.compile(TWO_PI)
        nx, nt = 32, 4
        xs = np.linspace(0.0, 1.0, nx + 1)
        values = np.repeat(xs[None, :, None], nt, axis=0)
        state = GridFunction(period=TWO_PI, values=values)
        absorbed = compiled.absorb_nonlocal(state, nt)
        # trapezoid rule is exact for the linear profile: integral of x over [0,1]
        assert absorbed.h[0](0.0, 0.0) == pytest.approx(0.5, abs=1e-14)

    def test_absorb_without_nonlocal_keeps_h(self, benchmark_boundary):
        compiled = benchmark_boundary.compile(TWO_PI)
        state = GridFunction.zeros(4, 4, 2, TWO_PI)
        absorbed = compiled.absorb_nonlocal(state, 4)
        assert absorbed.h == compiled.h


class TestFields:
    def test_finite_difference_fallback(self):
        class Sine(Field):
            period = TWO_PI

            def __call__(self, x, t):
                return np.sin(np.asarray(t, dtype=float)) + 0.0 * np.asarray(x)

        f = Sine()
        assert f.dt(0.0, 0.3) == pytest.approx(math.cos(0.3), abs=1e-8)

    def test_sampled_time_field_broadcast(self):
        ts = np.arange(8) * 0.25
        f = SampledTimeField(np.sin(ts), period=2.0)
        out = f(np.zeros((3, 1)), np.linspace(0.0, 1.9, 4))
        assert out.shape == (3, 4)
        assert f(0.0, 0.25) == pytest.approx(math.sin(0.25))

    def test_frozen_state_field(self):
        state = constant_state(0.3, ncomp=2)
        f = FrozenStateField(ex.parse_expression("2 - x + u1"), state)
        assert f(0.5, 0.0) == pytest.approx(1.8, abs=1e-12)


class TestGridFunction:
    def make(self, nx=16, nt=8, ncomp=2, interp="linear", seed=0):
        rng = np.random.default_rng(seed)
        values = rng.normal(size=(nt, nx + 1, ncomp))
        return GridFunction(period=2.0, values=values, interp=interp)

    @pytest.mark.parametrize("interp", ["linear", "cubic"])
    def test_node_exactness(self, interp):
        g = self.make(interp=interp)
        for it in (0, 3, 7):
            for i in (0, 5, 16):
                got = g.at(g.xs[i], g.ts[it])
                np.testing.assert_allclose(got, g.values[it, i], atol=1e-12)

    def test_division_rounding_at_nodes(self):
        g = self.make(nx=49)
        for i in (1, 17, 33, 49):
            x = i / 49
            np.testing.assert_array_equal(g.at(x, 0.0), g.values[0, i])

    def test_linear_profile_reproduced(self):
        nx, nt = 8, 4
        xs = np.linspace(0.0, 1.0, nx + 1)
        values = np.repeat((2.0 * xs + 1.0)[None, :, None], nt, axis=0)
        g = GridFunction(period=2.0, values=values)
        for x in (0.13, 0.5, 0.777):
            assert g.at(x, 0.9)[0] == pytest.approx(2.0 * x + 1.0, abs=1e-14)

    def test_smooth_profile_error_bound(self):
        nx, nt = 64, 4
        xs = np.linspace(0.0, 1.0, nx + 1)
        values = np.repeat(np.sin(math.pi * xs)[None, :, None], nt, axis=0)
        g = GridFunction(period=2.0, values=values)
        probe = np.linspace(0.0, 1.0, 1009)
        err = np.max(np.abs(g.at(probe, 0.0)[..., 0] - np.sin(math.pi * probe)))
        assert err <= math.pi**2 / (8.0 * nx**2) + 1e-12

    def test_bitwise_time_periodicity(self):
        g = self.make()
        ts = np.array([0.125, 0.62109375, 1.99951171875])
        np.testing.assert_array_equal(g.at(0.3, ts), g.at(0.3, ts + g.period))

    def test_time_wraps_between_last_and_first_level(self):
        values = np.zeros((2, 2, 1))
        values[0] = 1.0
        values[1] = 3.0
        g = GridFunction(period=2.0, values=values)
        # halfway between t=1 (level 1) and t=2=0 (level 0)
        assert g.at(0.5, 1.5)[0] == pytest.approx(2.0)

    def test_out_of_strip_raises(self):
        g = self.make()
        with pytest.raises(ValueError):
            g.at(1.2, 0.0)
        with pytest.raises(ValueError):
            g.at(-0.1, 0.0)
        g.at(1.0 + 1e-10, 0.0)  # boundary tolerance

    def test_cubic_preserves_monotone_data(self):
        nx = 8
        xs = np.linspace(0.0, 1.0, nx + 1)
        values = np.repeat((xs**3)[None, :, None], 4, axis=0)
        g = GridFunction(period=2.0, values=values, interp="cubic")
        probe = np.linspace(0.0, 1.0, 513)
        samples = g.at(probe, 0.0)[..., 0]
        assert np.all(np.diff(samples) >= -1e-12)
        assert samples.min() >= -1e-12 and samples.max() <= 1.0 + 1e-12

    def test_values_are_read_only(self):
        g = self.make()
        with pytest.raises(ValueError):
            g.values[0, 0, 0] = 1.0

    def test_component_matches_at(self):
        g = self.make()
        x, t = 0.3, 0.7
        assert g.component(1, x, t) == pytest.approx(g.at(x, t)[1])

    def test_zeros_shape(self):
        g = GridFunction.zeros(nx=10, nt=6, ncomp=3, period=1.0)
        assert g.values.shape == (6, 11, 3)
        assert g.nx == 10 and g.nt == 6 and g.ncomp == 3
        assert g.sup_norm() == 0.0


class TestSampleFields:
    def test_matches_expressions_on_lattice(self):
        exprs = [ex.parse_expression("sin(t)*x"), ex.parse_expression("x^2")]
        g = sample_fields(exprs, nx=8, nt=4, period=TWO_PI)
        assert g.values.shape == (4, 9, 2)
        assert g.values[1, 4, 0] == pytest.approx(math.sin(TWO_PI / 4.0) * 0.5)
        assert g.values[0, 2, 1] == pytest.approx(0.0625)


class TestValidate:
    def test_benchmark_margins(self, benchmark_system, benchmark_boundary):
        report = validate(benchmark_system, benchmark_boundary, a0=0.9)
        assert report.passed
        by_name = {c.name: c for c in report.checks}
        assert by_name["positive_speeds"].margin == pytest.approx(1.0, abs=1e-12)
        assert by_name["negative_speeds"].margin == pytest.approx(1.0, abs=1e-12)
        assert by_name["speed_separation"].margin == pytest.approx(2.0, abs=1e-12)
        assert by_name["periodicity"].margin <= 1e-12

    def test_constant_speeds(self, transport_system):
        report = validate(transport_system, a0=0.5)
        by_name = {c.name: c for c in report.checks}
        assert by_name["positive_speeds"].margin == pytest.approx(1.0)
        assert by_name["negative_speeds"].margin == pytest.approx(1.0)
        assert by_name["speed_separation"].margin == pytest.approx(2.0)

    def test_margin_below_threshold_fails(self, benchmark_system):
        report = validate(benchmark_system, a0=1.1)
        assert not report.passed
        with pytest.raises(ValidationError) as info:
            report.raise_if_failed()
        assert "VIOLATED" in str(info.value)
        assert info.value.report is report

    def test_sign_change_detected(self):
        spec = LinearSystemSpec.from_strings(
            n=2, m=1, period=1.0, speeds=["x - 0.5", "-1"],
            coupling=[["0", "0"], ["0", "0"]], forcing=["0", "0"],
        )
        report = validate(spec)
        by_name = {c.name: c for c in report.checks}
        assert not by_name["positive_speeds"].passed
        assert by_name["positive_speeds"].margin == pytest.approx(-0.5)

    def test_nonperiodic_coefficient_detected(self):
        spec = LinearSystemSpec.from_strings(
            n=1, m=1, period=1.0, speeds=["1"], coupling=[["0"]], forcing=["t"],
        )
        report = validate(spec)
        by_name = {c.name: c for c in report.checks}
        assert not by_name["periodicity"].passed

    def test_nonperiodic_boundary_forcing_detected(self, transport_system):
        boundary = BoundarySpec.from_strings(
            reflection=[["0", "0"], ["0", "0"]], h=["t", "0"]
        )
        report = validate(transport_system, boundary)
        by_name = {c.name: c for c in report.checks}
        assert not by_name["periodicity"].passed

    def test_quasilinear_ball_margins(self):
        spec = QuasilinearSystemSpec.from_strings(
            n=2, m=1, period=TWO_PI,
            speeds=["2 - x + u1", "-(2 + sin(t)) + u2"],
            rhs=["0", "0"], radius=0.5,
        )
        report = validate(spec, a0=0.4)
        assert report.passed
        by_name = {c.name: c for c in report.checks}
        # worst case is the corner state u1 = -radius at x = 1
        assert by_name["positive_speeds"].margin == pytest.approx(0.5, abs=1e-12)
        assert not validate(spec, a0=0.6).passed
