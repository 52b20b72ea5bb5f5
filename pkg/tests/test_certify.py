"""Energy certificate: mixing matrices, margin conditions, norms."""

import math

import numpy as np
import pytest

import hyperstrip.expr as ex
from hyperstrip.certify import (
    CertificationReport,
    LyapunovSpec,
    boundary_mixing_matrices,
    certify,
    dissipativity_check,
    lyapunov_check,
    _check_symmetry,
    _diagonal_fields,
)
from hyperstrip.model import BoundarySpec, ValidationError

from conftest import (
    make_benchmark_boundary,
    make_benchmark_system,
    make_transport_boundary,
    make_transport_system,
)

TWO_PI = 2.0 * math.pi
E3 = math.exp(-3.0)
# max eigenvalue of [[-1, -s], [-s, -4]] at s = +-1 is (-5 + sqrt 13)/2
BENCHMARK_INTERIOR_MARGIN = (5.0 - math.sqrt(13.0)) / 2.0


def zero_boundary(n):
    return BoundarySpec.from_strings(
        reflection=[["0"] * n for _ in range(n)], h=["0"] * n
    )


class TestMixingMatrices:
    def test_zero_reflection(self):
        j0, j1 = boundary_mixing_matrices(np.zeros((2, 2)), m=1)
        np.testing.assert_array_equal(j0, [[0.0, 0.0], [0.0, 1.0]])
        np.testing.assert_array_equal(j1, [[1.0, 0.0], [0.0, 0.0]])

    def test_benchmark_blocks(self):
        r = make_benchmark_boundary().reflection
        j0, j1 = boundary_mixing_matrices(r, m=1)
        np.testing.assert_allclose(j0, [[E3, 0.5 * E3], [0.0, 1.0]], atol=1e-15)
        np.testing.assert_allclose(j1, [[1.0, 0.0], [E3, E3]], atol=1e-15)

    def test_identity_reflection(self):
        j0, j1 = boundary_mixing_matrices(np.eye(2), m=1)
        np.testing.assert_array_equal(j0, np.eye(2))
        np.testing.assert_array_equal(j1, np.eye(2))

    def test_degenerate_splits(self):
        r = np.array([[0.3, 0.1], [0.2, 0.4]])
        j0, j1 = boundary_mixing_matrices(r, m=0)
        np.testing.assert_array_equal(j0, np.eye(2))
        np.testing.assert_array_equal(j1, r)
        j0, j1 = boundary_mixing_matrices(r, m=2)
        np.testing.assert_array_equal(j0, r)
        np.testing.assert_array_equal(j1, np.eye(2))


class TestLyapunovSpec:
    def test_identity(self):
        spec = LyapunovSpec.identity(3)
        assert len(spec.entries) == 3
        assert spec.margins == (None, None, None, None)

    def test_rejects_state_variables(self):
        with pytest.raises(ValueError):
            LyapunovSpec.from_strings(["1 + u1"])

    def test_rejects_bad_margins(self):
        with pytest.raises(ValueError):
            LyapunovSpec.from_strings(["1"], margins=(1.0, 1.0, -0.5, 1.0))
        with pytest.raises(ValueError):
            LyapunovSpec.from_strings(["1"], margins=(1.0, 1.0))


@pytest.fixture(scope="module")
def report() -> CertificationReport:
    return certify(make_benchmark_system(), make_benchmark_boundary(), a0=0.9)


class TestBenchmarkCertificate:
    def test_overall_pass(self, report):
        assert report.passed
        assert report.lyapunov_passed
        assert report.dissipative

    def test_weight_bounds(self, report):
        assert report.condition("beta1").margin == pytest.approx(1.0, abs=1e-14)
        assert report.condition("beta2").margin == pytest.approx(1.0, abs=1e-14)

    def test_interior_margin_closed_form(self, report):
        # time grid hits sin t = +-1 exactly at nt = 128
        assert report.condition("beta3").margin == pytest.approx(
            BENCHMARK_INTERIOR_MARGIN, abs=1e-9
        )
        x, t = report.condition("beta3").location
        assert abs(math.sin(t)) == pytest.approx(1.0, abs=1e-12)

    def test_boundary_margin_against_dense_oracle(self, report):
        j0 = np.array([[E3, 0.5 * E3], [0.0, 1.0]])
        j1 = np.array([[1.0, 0.0], [E3, E3]])
        worst = -math.inf
        for t in np.arange(512) * (TWO_PI / 512):
            a0 = np.diag([2.0, -(2.0 + math.sin(t))])
            a1 = np.diag([1.0, -(2.0 + math.sin(t))])
            mat = j0.T @ a0 @ j0 - j1.T @ a1 @ j1
            worst = max(worst, float(np.linalg.eigvalsh(mat).max()))
        assert report.condition("beta4").margin == pytest.approx(-worst, abs=1e-10)
        assert report.condition("beta4").margin > 0.0

    def test_reflection_norm_table(self, report):
        assert len(report.norms) == 3
        for estimate in report.norms:
            assert estimate.value < 2.0 / math.e

    def test_decay_constants(self, report):
        beta2 = report.condition("beta2").margin
        beta3 = report.condition("beta3").margin
        assert report.decay_rate == pytest.approx(beta3 / (2.0 * beta2), rel=1e-12)
        assert report.decay_amplitude == pytest.approx(1.0, abs=1e-12)

    def test_as_dict_shape(self, report):
        doc = report.as_dict()
        assert doc["passed"] is True
        assert {c["name"] for c in doc["lyapunov"]["conditions"]} == {
            "beta1", "beta2", "beta3", "beta4",
        }
        assert len(doc["dissipativity"]["norms"]) == 3
        assert doc["decay"]["rate"] == report.decay_rate
        assert "note" in doc

    def test_summary_lines(self, report):
        text = "\n".join(report.summary_lines())
        assert "overall: pass" in text
        assert "beta3" in text


class TestFailureModes:
    def test_neutral_transport_fails_interior_condition(self):
        # a = (1, -1), b = 0, V = I: the interior matrix vanishes and the
        # strict inequality fails even though the system is stable
        report = certify(make_transport_system(), zero_boundary(2), a0=0.9)
        assert not report.lyapunov_passed
        beta3 = report.condition("beta3")
        assert not beta3.passed
        assert beta3.margin == pytest.approx(0.0, abs=1e-15)
        assert report.condition("beta4").passed
        assert report.decay_rate is None
        assert report.dissipative  # zero reflection: norms (0, 0, 0)

    def test_large_reflection_fails_dissipativity(self):
        boundary = BoundarySpec.from_strings(
            reflection=[["0", "1.5"], ["0", "0"]], h=["0", "0"]
        )
        norms = dissipativity_check(make_transport_system(), boundary, a0=0.9)
        assert norms[0].value == pytest.approx(1.5, abs=1e-12)
        report = certify(make_transport_system(), boundary, a0=0.9)
        assert not report.dissipative
        assert not report.passed

    def test_requested_margins_are_strict(self):
        system = make_benchmark_system()
        boundary = make_benchmark_boundary()
        passing = LyapunovSpec.from_strings(["1", "1"], margins=(0.5, 2.0, 0.5, None))
        conditions = lyapunov_check(system, boundary, passing)
        assert all(c.passed for c in conditions)
        failing = LyapunovSpec.from_strings(["1", "1"], margins=(None, None, 0.8, None))
        conditions = lyapunov_check(system, boundary, failing)
        assert not next(c for c in conditions if c.name == "beta3").passed

    def test_validation_failure_aborts(self):
        bad = make_benchmark_system()
        with pytest.raises(ValidationError):
            certify(bad, make_benchmark_boundary(), a0=1.5)

    def test_condition_lookup_raises_on_unknown(self):
        report = certify(make_benchmark_system(), make_benchmark_boundary(), a0=0.9)
        with pytest.raises(KeyError):
            report.condition("beta9")


class TestAssemblyInvariants:
    def test_symbolic_drift_matches_finite_differences(self):
        spec = make_benchmark_system()
        lyap = LyapunovSpec.from_strings(["1 + 0.1*x*sin(t)", "2 + 0.2*cos(t)"])
        v_fns, drift_fns = _diagonal_fields(spec, lyap)
        rng = np.random.default_rng(12)
        xs = rng.uniform(0.01, 0.99, size=50)
        ts = rng.uniform(0.0, TWO_PI, size=50)
        h = 1e-6
        for j in range(2):
            va = ex.numpy_callable(ex.mul(lyap.entries[j], spec.speeds[j]))
            v_t = ex.numpy_callable(ex.differentiate(lyap.entries[j], "t"))
            fd = v_t(x=xs, t=ts) + (va(x=xs + h, t=ts) - va(x=xs - h, t=ts)) / (2.0 * h)
            got = drift_fns[j](x=xs, t=ts)
            np.testing.assert_allclose(got, fd, rtol=1e-5, atol=1e-9)

    def test_symmetry_guard_trips_on_asymmetric_input(self):
        with pytest.raises(RuntimeError, match="symmetry"):
            _check_symmetry(np.array([[0.0, 1.0], [0.0, 0.0]]), "test matrix")

    def test_scaling_v_scales_margins_not_verdicts(self):
        system = make_benchmark_system()
        boundary = make_benchmark_boundary()
        base = certify(system, boundary, a0=0.9)
        scaled = certify(
            system, boundary, LyapunovSpec.from_strings(["2", "2"]), a0=0.9
        )
        for name in ("beta1", "beta2", "beta3", "beta4"):
            assert scaled.condition(name).margin == pytest.approx(
                2.0 * base.condition(name).margin, rel=1e-12
            )
            assert scaled.condition(name).passed == base.condition(name).passed
        assert scaled.passed == base.passed
        # the decay rate beta3 / (2 beta2) is scale invariant
        assert scaled.decay_rate == pytest.approx(base.decay_rate, rel=1e-12)
