import math

import pytest
from hypothesis import HealthCheck, settings

from hyperstrip.model import BoundarySpec, LinearSystemSpec

settings.register_profile(
    "suite",
    deadline=None,
    max_examples=40,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("suite")

TWO_PI = 2.0 * math.pi


def make_benchmark_system(forcing=("0", "0")) -> LinearSystemSpec:
    """Two-component demo system with one right and one left mover.

    Speeds 2 - x and -(2 + sin t), skew time-periodic coupling, period
    2 pi.  Dissipativity and the Lyapunov conditions hold with V = I.
    """
    return LinearSystemSpec.from_strings(
        n=2,
        m=1,
        period=TWO_PI,
        speeds=["2 - x", "-(2 + sin(t))"],
        coupling=[["0", "2*sin(t)"], ["-sin(t)", "2"]],
        forcing=list(forcing),
    )


def make_benchmark_boundary(h=("0", "0")) -> BoundarySpec:
    return BoundarySpec.from_strings(
        reflection=[["1/exp(3)", "1/(2*exp(3))"], ["1/exp(3)", "1/exp(3)"]],
        h=list(h),
    )


def make_transport_system(forcing=("0", "0")) -> LinearSystemSpec:
    """Decoupled unit-speed transport in both directions, period 2 pi."""
    return LinearSystemSpec.from_strings(
        n=2,
        m=1,
        period=TWO_PI,
        speeds=["1", "-1"],
        coupling=[["0", "0"], ["0", "0"]],
        forcing=list(forcing),
    )


def make_transport_boundary(h=("sin(t)", "0")) -> BoundarySpec:
    return BoundarySpec.from_strings(reflection=[["0", "0"], ["0", "0"]], h=list(h))


@pytest.fixture
def benchmark_system() -> LinearSystemSpec:
    return make_benchmark_system()


@pytest.fixture
def benchmark_boundary() -> BoundarySpec:
    return make_benchmark_boundary()


@pytest.fixture
def transport_system() -> LinearSystemSpec:
    return make_transport_system()


@pytest.fixture
def transport_boundary() -> BoundarySpec:
    return make_transport_boundary()
