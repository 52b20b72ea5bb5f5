"""Characteristic curves of the diagonal transport operators.

For component j the curve through the anchor (x, t) is the solution of

    d omega / d xi = 1 / a_j(xi, omega),    omega(x) = t,

so omega(xi) is the time at which the characteristic passes abscissa xi.
Along a curve the exponential weights

    c^i(xi, x, t) = exp( integral_x^xi [ b_jj / a_j - i * dt(a_j) / a_j^2 ] )

with i in {0, 1, 2} measure the growth of the diagonal part and of its
first two time derivatives; d^i = c^i / a_j(xi, omega(xi)) is the matching
density for integrals in xi.

Curves are integrated with classical RK4 on a fixed lattice (default four
substeps per 1/128 cell) and the weight integrals use cumulative Simpson
on the same lattice.  Anchor times may be scalars or arrays; arrays give
one curve per anchor time at the cost of a single sweep.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from .model import CompiledSystem
from .numerics import cumulative_simpson

__all__ = [
    "TraceError",
    "CharacteristicTrace",
    "entry_abscissa",
    "trace",
    "weights",
    "exit_time",
    "DEFAULT_MAX_STEP",
]

DEFAULT_MAX_STEP = 1.0 / 512.0


class TraceError(Exception):
    """Characteristic integration failed (speed too close to zero)."""


def entry_abscissa(j: int, m: int) -> float:
    """Boundary where component j (0-based) enters the strip.

    Components moving right (j < m) enter at x = 0, the rest at x = 1.
    """
    return 0.0 if j < m else 1.0


@dataclass
class CharacteristicTrace:
    """Sampled characteristic curves of one component.

    ``xi`` is the ascending sample lattice; ``omega`` holds the curve
    times with shape (len(xi),) for a scalar anchor or (len(xi), K) for K
    anchor times.  ``segments`` lists maximal uniform runs of the lattice
    as (start, stop, step) index triples, stop inclusive.
    """

    component: int
    anchor_x: float
    anchor_t: np.ndarray
    xi: np.ndarray
    omega: np.ndarray
    segments: tuple[tuple[int, int, float], ...]
    anchor_index: int

    def omega_at(self, xi_value: float) -> np.ndarray:
        """Curve time at a lattice point (exact index lookup)."""
        idx = int(np.argmin(np.abs(self.xi - xi_value)))
        if abs(self.xi[idx] - xi_value) > 1e-12:
            raise ValueError(f"{xi_value!r} is not on the trace lattice")
        return self.omega[idx]


def _build_lattice(
    knots: Sequence[float], max_step: float
) -> tuple[np.ndarray, tuple[tuple[int, int, float], ...]]:
    points = [knots[0]]
    segments = []
    for lo, hi in zip(knots[:-1], knots[1:]):
        gap = hi - lo
        count = max(2, 2 * math.ceil(gap / (2.0 * max_step)))
        start = len(points) - 1
        fill = np.linspace(lo, hi, count + 1)
        points.extend(fill[1:].tolist())
        segments.append((start, start + count, gap / count))
    return np.array(points), tuple(segments)


def _speed_guard(system: CompiledSystem, j: int, xi: float, omega: np.ndarray) -> np.ndarray:
    a = np.asarray(system.speed[j](xi, omega), dtype=float)
    floor = 0.5 * system.a0
    if np.min(np.abs(a)) < floor:
        raise TraceError(
            f"speed of component {j + 1} fell below {floor:.3g} near xi = {xi:.6g}"
        )
    return a


def _rk4_step(system: CompiledSystem, j: int, xi0: float, xi1: float, omega: np.ndarray) -> np.ndarray:
    h = xi1 - xi0
    k1 = 1.0 / _speed_guard(system, j, xi0, omega)
    k2 = 1.0 / _speed_guard(system, j, xi0 + 0.5 * h, omega + 0.5 * h * k1)
    k3 = 1.0 / _speed_guard(system, j, xi0 + 0.5 * h, omega + 0.5 * h * k2)
    k4 = 1.0 / _speed_guard(system, j, xi1, omega + h * k3)
    return omega + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def trace(
    system: CompiledSystem,
    j: int,
    x: float,
    t: Union[float, np.ndarray],
    targets: Sequence[float] = (),
    max_step: float = DEFAULT_MAX_STEP,
) -> CharacteristicTrace:
    """Integrate the characteristic of component j through (x, t).

    The sample lattice spans from the smallest to the largest of ``x``
    and ``targets`` (all in [0, 1]), refined to at most ``max_step``
    spacing with an even number of steps between consecutive requested
    points.  ``t`` may be an array of anchor times.
    """
    knots = sorted({float(x)} | {float(v) for v in targets})
    if knots[0] < -1e-12 or knots[-1] > 1.0 + 1e-12:
        raise ValueError("trace targets must lie inside [0, 1]")
    anchor_t = np.asarray(t, dtype=float)
    if len(knots) == 1:
        return CharacteristicTrace(
            component=j,
            anchor_x=float(x),
            anchor_t=anchor_t,
            xi=np.array([float(x)]),
            omega=anchor_t[None, ...].copy(),
            segments=(),
            anchor_index=0,
        )
    xi, segments = _build_lattice(knots, max_step)
    anchor_index = int(np.argmin(np.abs(xi - x)))
    omega = np.empty((len(xi),) + anchor_t.shape)
    omega[anchor_index] = anchor_t
    for idx in range(anchor_index, len(xi) - 1):
        omega[idx + 1] = _rk4_step(system, j, xi[idx], xi[idx + 1], omega[idx])
    for idx in range(anchor_index, 0, -1):
        omega[idx - 1] = _rk4_step(system, j, xi[idx], xi[idx - 1], omega[idx])
    return CharacteristicTrace(
        component=j,
        anchor_x=float(x),
        anchor_t=anchor_t,
        xi=xi,
        omega=omega,
        segments=segments,
        anchor_index=anchor_index,
    )


def weights(
    system: CompiledSystem, trc: CharacteristicTrace, order: int
) -> tuple[np.ndarray, np.ndarray]:
    """Exponential weights c^order and densities d^order on the trace lattice.

    Returns arrays shaped like ``trc.omega``.  The weight integral runs
    from the anchor abscissa, so c = 1 at the anchor.
    """
    if order not in (0, 1, 2):
        raise ValueError("weight order must be 0, 1 or 2")
    j = trc.component
    speed = system.speed[j]
    diag = system.coupling[j][j]
    xi = trc.xi.reshape((-1,) + (1,) * (trc.omega.ndim - 1))
    a = np.asarray(speed(xi, trc.omega), dtype=float)
    integrand = diag(xi, trc.omega) / a
    if order:
        integrand = integrand - order * speed.dt(xi, trc.omega) / np.square(a)
    integrand = np.broadcast_to(integrand, trc.omega.shape)
    cumulative = np.zeros_like(trc.omega)
    offset = 0.0
    for start, stop, step in trc.segments:
        block = cumulative_simpson(integrand[start : stop + 1], step)
        cumulative[start : stop + 1] = block + offset
        offset = cumulative[stop]
    c = np.exp(cumulative - cumulative[trc.anchor_index])
    d = c / a
    return c, np.broadcast_to(d, c.shape)


def exit_time(
    system: CompiledSystem,
    j: int,
    x: float,
    t: Union[float, np.ndarray],
    max_step: float = DEFAULT_MAX_STEP,
) -> np.ndarray:
    """Time at which the characteristic through (x, t) meets its entry
    boundary (x = 0 for right-movers, x = 1 for left-movers)."""
    boundary = entry_abscissa(j, system.m)
    trc = trace(system, j, x, t, targets=(boundary,), max_step=max_step)
    index = 0 if boundary <= trc.xi[0] + 1e-12 else len(trc.xi) - 1
    return trc.omega[index]
