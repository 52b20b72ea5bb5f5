"""Boundary reflection and transport integral operators.

The reflection operator takes a vector of outgoing boundary traces psi,
carries it along each characteristic from the entry boundary of component
j to its exit and applies the reflection matrix:

    [reflect(psi)]_j(t) = c_j(x_j, 1 - x_j, t) sum_k r_jk psi_k(tau),

where x_j is the entry abscissa of component j, tau is the time at which
the characteristic of j arriving at the exit boundary at time t crossed
the entry boundary, and c_j is the exponential weight of chosen order.
Its sup norm has the closed form

    max_j sup_t |c_j(x_j, 1 - x_j, t)| sum_k |r_jk|

because every psi_k enters through a single point value; the norm routine
evaluates it on an oversampled time grid.

The interior operators share one backward trace per component and grid
node: the pullback carries reflected boundary data into the strip, the
forcing propagator does the same for the boundary forcing h, and the
coupling and source integrals accumulate

    -integral d_j(xi, x, t) sum_{k != j} b_jk u_k dxi     (coupling)
    +integral d_j(xi, x, t) f_j dxi                       (source)

from the entry boundary to x along the characteristic.  A time-periodic
classical solution satisfies

    u = pullback(u) + coupling(u) + forcing(h) + source(f)

node for node, which `operator_equation_residual` checks without using
any time stepper.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .characteristics import entry_abscissa, trace, weights
from .model import CompiledBoundary, CompiledSystem, Field, GridFunction
from .numerics import periodic_linear, simpson

__all__ = [
    "BoundaryTraceFunction",
    "ContractionError",
    "ConvergenceError",
    "ReflectionTables",
    "ReflectionNormEstimate",
    "TraceSolveResult",
    "apply_reflection",
    "reflection_norm",
    "solve_boundary_traces",
    "outgoing_traces",
    "apply_boundary_pullback",
    "apply_coupling_integral",
    "apply_boundary_forcing",
    "apply_source_integral",
    "operator_equation_residual",
]


class ContractionError(RuntimeError):
    """The reflection norm is not below one; Picard iteration unusable."""


class ConvergenceError(RuntimeError):
    """An iteration failed to reach its tolerance within the budget."""


@dataclass
class BoundaryTraceFunction:
    """Vector of outgoing boundary traces on a periodic time grid.

    Component j holds u_j at its exit boundary: x = 1 for j < m and
    x = 0 otherwise (0-based).  Values have shape (nt, n) and are read
    with periodic linear interpolation.
    """

    period: float
    values: np.ndarray

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2:
            raise ValueError("values must have shape (nt, n)")

    @classmethod
    def zeros(cls, nt: int, n: int, period: float) -> "BoundaryTraceFunction":
        return cls(period=period, values=np.zeros((nt, n)))

    @classmethod
    def from_grid(cls, u: GridFunction, m: int) -> "BoundaryTraceFunction":
        columns = [
            u.values[:, -1 if j < m else 0, j] for j in range(u.ncomp)
        ]
        return cls(period=u.period, values=np.stack(columns, axis=1))

    @property
    def nt(self) -> int:
        return self.values.shape[0]

    @property
    def n(self) -> int:
        return self.values.shape[1]

    @property
    def ts(self) -> np.ndarray:
        return np.arange(self.nt) * (self.period / self.nt)

    def component(self, j: int, t) -> np.ndarray:
        return periodic_linear(self.values[:, j], self.period, t)

    def at(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        return np.stack([self.component(j, t) for j in range(self.n)], axis=-1)

    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.values)))

    def with_values(self, values: np.ndarray) -> "BoundaryTraceFunction":
        return BoundaryTraceFunction(period=self.period, values=values)


# ---------------------------------------------------------------------------
# Reflection operator.


@dataclass
class ReflectionTables:
    """Per-component entry times and weights of the reflection operator.

    Tracing is independent of the operand, so tables built once serve
    every application on the same output time grid.
    """

    period: float
    ts: np.ndarray
    reflection: np.ndarray
    entry_times: np.ndarray  # (n, len(ts))
    entry_weights: np.ndarray  # (n, len(ts))

    @classmethod
    def build(
        cls,
        system: CompiledSystem,
        boundary: CompiledBoundary,
        order: int,
        ts: np.ndarray,
    ) -> "ReflectionTables":
        ts = np.asarray(ts, dtype=float)
        n = system.n
        entry_times = np.empty((n, len(ts)))
        entry_weights = np.empty((n, len(ts)))
        for j in range(n):
            entry = entry_abscissa(j, system.m)
            trc = trace(system, j, 1.0 - entry, ts, targets=(entry,))
            c, _ = weights(system, trc, order)
            eidx = 0 if entry == 0.0 else len(trc.xi) - 1
            entry_times[j] = trc.omega[eidx]
            entry_weights[j] = c[eidx]
        return cls(
            period=system.period,
            ts=ts,
            reflection=boundary.reflection,
            entry_times=entry_times,
            entry_weights=entry_weights,
        )

    def apply(self, psi: BoundaryTraceFunction) -> BoundaryTraceFunction:
        out = np.empty((len(self.ts), psi.n))
        for j in range(psi.n):
            sampled = psi.at(self.entry_times[j])  # (len(ts), n)
            out[:, j] = self.entry_weights[j] * (sampled @ self.reflection[j])
        return BoundaryTraceFunction(period=self.period, values=out)


def apply_reflection(
    system: CompiledSystem,
    boundary: CompiledBoundary,
    order: int,
    psi: BoundaryTraceFunction,
) -> BoundaryTraceFunction:
    """Reflect and transport boundary traces once, on psi's time grid."""
    tables = ReflectionTables.build(system, boundary, order, psi.ts)
    return tables.apply(psi)


@dataclass(frozen=True)
class ReflectionNormEstimate:
    """Sup norm of the reflection operator of one weight order.

    ``per_component`` holds max_t |c_j| sum_k |r_jk| for each j; the norm
    is their maximum, attained by component ``worst_component`` at time
    ``worst_time``.
    """

    order: int
    value: float
    per_component: tuple[float, ...]
    worst_component: int
    worst_time: float

    def __float__(self) -> float:
        return self.value


def reflection_norm(
    system: CompiledSystem,
    boundary: CompiledBoundary,
    order: int,
    nt: int = 128,
) -> ReflectionNormEstimate:
    """Exact sup norm of the order-``order`` reflection operator.

    Each psi_k enters through a single point value, so the operator norm
    is sup over (j, t) of |c_j| sum_k |r_jk|; the sup is taken over an
    oversampled grid of 4 nt points.
    """
    ts = np.arange(4 * nt) * (system.period / (4 * nt))
    tables = ReflectionTables.build(system, boundary, order, ts)
    row_sums = np.sum(np.abs(tables.reflection), axis=1)
    profiles = np.abs(tables.entry_weights) * row_sums[:, None]
    per_component = tuple(float(v) for v in profiles.max(axis=1))
    worst = int(np.argmax(per_component))
    worst_t = float(ts[int(np.argmax(profiles[worst]))])
    return ReflectionNormEstimate(
        order=order,
        value=max(per_component),
        per_component=per_component,
        worst_component=worst,
        worst_time=worst_t,
    )


@dataclass
class TraceSolveResult:
    traces: BoundaryTraceFunction
    iterations: int
    increments: tuple[float, ...]
    residual: float
    contraction: float


def solve_boundary_traces(
    system: CompiledSystem,
    boundary: CompiledBoundary,
    g_tilde: BoundaryTraceFunction,
    tol: float = 1e-10,
    maxit: int = 200,
) -> TraceSolveResult:
    """Solve z = reflect(z) + g_tilde by Picard iteration from z = 0.

    Requires the order-0 reflection norm to be below one (the iteration
    is a contraction exactly then); converges when the equation residual
    on the grid drops below ``tol``.
    """
    estimate = reflection_norm(system, boundary, 0, nt=g_tilde.nt)
    if estimate.value >= 1.0:
        raise ContractionError(
            f"reflection norm {estimate.value:.6g} >= 1, trace iteration is not contractive"
        )
    tables = ReflectionTables.build(system, boundary, 0, g_tilde.ts)
    z = g_tilde.with_values(np.zeros_like(g_tilde.values))
    applied = tables.apply(z).values
    increments = []
    for iteration in range(1, maxit + 1):
        new_values = applied + g_tilde.values
        increments.append(float(np.max(np.abs(new_values - z.values))))
        z = z.with_values(new_values)
        applied = tables.apply(z).values
        residual = float(np.max(np.abs(z.values - (applied + g_tilde.values))))
        if residual < tol:
            return TraceSolveResult(
                traces=z,
                iterations=iteration,
                increments=tuple(increments),
                residual=residual,
                contraction=estimate.value,
            )
    raise ConvergenceError(
        f"boundary trace iteration did not reach {tol:.3g} in {maxit} steps"
        f" (last residual {residual:.3g})"
    )


# ---------------------------------------------------------------------------
# Interior transport operators.


def outgoing_traces(u: GridFunction, m: int) -> BoundaryTraceFunction:
    """Outgoing boundary traces of a grid function (x = 1 first m, else 0)."""
    return BoundaryTraceFunction.from_grid(u, m)


def _sweep_max_step(nx: int) -> float:
    # quadrature error (step^4) stays far below grid interpolation error
    return 1.0 / max(2 * nx, 32)


def _transport_sweep(
    system: CompiledSystem,
    nx: int,
    nt: int,
    parts: frozenset,
    boundary: Optional[CompiledBoundary] = None,
    u: Optional[GridFunction] = None,
    h: Optional[Sequence[Field]] = None,
    f: Optional[Sequence[Field]] = None,
    order: int = 0,
    interp: str = "linear",
) -> GridFunction:
    """Evaluate the sum of the selected operator parts on the grid.

    ``parts`` is a subset of {"pullback", "coupling", "forcing",
    "source"}.  One backward trace per component and x node serves all
    parts; anchors are vectorized over the full time grid.
    """
    n = system.n
    period = system.period
    xs = np.linspace(0.0, 1.0, nx + 1)
    ts = np.arange(nt) * (period / nt)
    max_step = _sweep_max_step(nx)
    if "pullback" in parts or "forcing" in parts:
        if boundary is None:
            raise ValueError("boundary data required for pullback/forcing parts")
    if u is None and parts & {"pullback", "coupling"}:
        raise ValueError("pullback and coupling parts act on a grid function")
    h_fields = tuple(h) if h is not None else (boundary.h if boundary is not None else None)
    f_fields = tuple(f) if f is not None else system.forcing
    reflection = boundary.reflection if boundary is not None else None
    out = np.zeros((nt, nx + 1, n))
    for j in range(n):
        entry = entry_abscissa(j, system.m)
        orient = 1.0 if entry == 0.0 else -1.0
        offdiag = [k for k in range(n) if k != j] if "coupling" in parts else []
        for i, x in enumerate(xs):
            trc = trace(system, j, float(x), ts, targets=(entry,), max_step=max_step)
            c, d = weights(system, trc, order)
            eidx = 0 if entry == 0.0 else len(trc.xi) - 1
            tau = trc.omega[eidx]
            acc = np.zeros(nt)
            if "pullback" in parts:
                reflected = np.zeros(nt)
                for k in range(n):
                    if reflection[j, k] == 0.0:
                        continue
                    exit_k = 1.0 - entry_abscissa(k, system.m)
                    reflected += reflection[j, k] * u.component(k, exit_k, tau)
                acc += c[eidx] * reflected
            if "forcing" in parts:
                acc += c[eidx] * np.asarray(h_fields[j](entry, tau), dtype=float)
            if ("coupling" in parts and offdiag) or "source" in parts:
                xi = trc.xi[:, None]
                integrand = np.zeros_like(trc.omega)
                for k in offdiag:
                    b_jk = np.asarray(system.coupling[j][k](xi, trc.omega), dtype=float)
                    if not b_jk.any():
                        continue
                    integrand -= b_jk * u.component(k, xi, trc.omega)
                if "source" in parts:
                    integrand += np.asarray(f_fields[j](xi, trc.omega), dtype=float)
                total = np.zeros(nt)
                for start, stop, step in trc.segments:
                    total += simpson(d[start : stop + 1] * integrand[start : stop + 1], step)
                acc += orient * total
            out[:, i, j] = acc
    return GridFunction(period=period, values=out, interp=interp)


def apply_boundary_pullback(
    system: CompiledSystem, boundary: CompiledBoundary, u: GridFunction
) -> GridFunction:
    """Reflected outgoing traces of u carried inward along characteristics."""
    return _transport_sweep(
        system, u.nx, u.nt, frozenset(("pullback",)), boundary=boundary, u=u,
        interp=u.interp,
    )


def apply_coupling_integral(system: CompiledSystem, u: GridFunction) -> GridFunction:
    """Off-diagonal coupling accumulated along characteristics (with its sign)."""
    return _transport_sweep(
        system, u.nx, u.nt, frozenset(("coupling",)), u=u, interp=u.interp
    )


def apply_boundary_forcing(
    system: CompiledSystem,
    boundary: CompiledBoundary,
    nx: int,
    nt: int,
    h: Optional[Sequence[Field]] = None,
) -> GridFunction:
    """Boundary forcing h propagated into the strip."""
    return _transport_sweep(
        system, nx, nt, frozenset(("forcing",)), boundary=boundary, h=h
    )


def apply_source_integral(
    system: CompiledSystem,
    nx: int,
    nt: int,
    f: Optional[Sequence[Field]] = None,
) -> GridFunction:
    """Interior forcing integrated along characteristics."""
    return _transport_sweep(system, nx, nt, frozenset(("source",)), f=f)


def operator_equation_residual(
    system: CompiledSystem,
    boundary: CompiledBoundary,
    u: GridFunction,
    h: Optional[Sequence[Field]] = None,
    f: Optional[Sequence[Field]] = None,
) -> float:
    """Sup-norm defect of u in the integrated equation.

    Evaluates pullback + coupling + forcing + source in a single sweep
    on u's own grid and returns the node-wise sup norm of the
    difference.  Independent of any time stepper: only characteristic
    traces and quadrature enter.
    """
    total = _transport_sweep(
        system,
        u.nx,
        u.nt,
        frozenset(("pullback", "coupling", "forcing", "source")),
        boundary=boundary,
        u=u,
        h=h,
        f=f,
        interp=u.interp,
    )
    return float(np.max(np.abs(u.values - total.values)))
