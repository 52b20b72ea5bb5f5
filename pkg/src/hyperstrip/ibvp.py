"""Semi-Lagrangian time marching of the initial-boundary value problem.

Each step backtraces the characteristic of every component from every
grid node over one time step (RK4 with a fixed number of substeps,
positions recorded along the way).  Writing B(tau) for the running
integral of the diagonal coupling along the path, the interior update is
the exact variation-of-constants formula

    u_j(x, t1) = e^{-B} u_j(foot, t0)
                 + integral_t0^t1 e^{-(B(t1) - B(tau))} g_j(tau) dtau,

with g_j = -sum_{k != j} b_jk u_k + f_j; the off-diagonal coupling reads
the old time level (explicit, first order), the diagonal weight and the
quadrature are Simpson on the substep lattice.  Backtraces that leave
the strip are closed at the inflow boundary: the crossing time is
located on the recorded path, the outgoing traces there are interpolated
in time between the old values and the freshly computed new ones (every
outgoing value is determined by interior data alone, so there is no
algebraic loop), and the boundary condition supplies the value that is
then propagated along the remaining piece of the path.

The scheme has no CFL stability limit, but a step so large that a
backtrace could cross the whole strip would break the bookkeeping, so
max |a| dt < 1 is enforced up front.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .model import CompiledBoundary, CompiledSystem
from .numerics import cumulative_simpson, simpson

__all__ = [
    "TrajectoryRecord",
    "DecayEstimate",
    "step",
    "simulate",
    "fit_decay",
    "default_time_steps",
]

_SUBSTEPS = 4
_FLUSH_FLOOR = 1e-154


def default_time_steps(system: CompiledSystem, nx: int, nt_probe: int = 64) -> int:
    """Steps per period so that max |a| dt <= 2 dx (accuracy heuristic)."""
    xs = np.linspace(0.0, 1.0, nx + 1)
    ts = np.arange(nt_probe) * (system.period / nt_probe)
    peak = 0.0
    for a in system.speed:
        peak = max(peak, float(np.max(np.abs(a(xs[None, :], ts[:, None])))))
    dx = 1.0 / nx
    return max(1, math.ceil(system.period * peak / (2.0 * dx)))


@dataclass
class _ComponentGeometry:
    """State-independent step data of one component at one time phase."""

    paths: np.ndarray  # (K+1, nx+1), clipped to the strip
    decay: np.ndarray  # (K+1, nx+1), e^{-(B(t1) - B(tau_i))}
    offdiag: dict  # k -> coefficient values along the path, (K+1, nx+1)
    forcing: np.ndarray  # (K+1, nx+1)
    cross_cols: np.ndarray  # node indices whose backtrace leaves the strip
    cross_seg: np.ndarray  # substep segment of the crossing
    cross_frac: np.ndarray  # position of the crossing inside the segment
    cross_tau: np.ndarray  # crossing time offset from t0
    cross_decay: np.ndarray  # e^{-(B(t1) - B(tau*))}
    cross_offdiag: dict  # k -> coefficient at (entry, tau*)
    cross_forcing: np.ndarray
    cross_h: np.ndarray  # boundary forcing at tau*


class _StepEngine:
    """One-step advance with per-phase geometry caching.

    Characteristic geometry, weights and coefficient samples depend on
    the absolute time only through the T-periodic coefficients, so for a
    uniform step dt = T/nt they repeat with period nt and are cached per
    phase index.
    """

    def __init__(
        self,
        system: CompiledSystem,
        boundary: CompiledBoundary,
        nx: int,
        dt: float,
    ):
        self.system = system
        self.boundary = boundary
        self.nx = nx
        self.dt = dt
        self.xs = np.linspace(0.0, 1.0, nx + 1)
        self.n = system.n
        self.entry = np.array([0.0 if j < system.m else 1.0 for j in range(self.n)])
        self.exit_node = np.array([nx if j < system.m else 0 for j in range(self.n)])
        self._cache: dict = {}
        peak = self._peak_speed()
        if peak * dt >= 1.0:
            raise ValueError(
                f"time step {dt:.4g} too large: max |a| dt = {peak * dt:.3g} >= 1"
            )

    def _peak_speed(self) -> float:
        ts = np.arange(64) * (self.system.period / 64)
        peak = 0.0
        for a in self.system.speed:
            values = np.abs(np.asarray(a(self.xs[None, :], ts[:, None]), dtype=float))
            peak = max(peak, float(np.max(values)))
        return peak

    def _trace_back(self, j: int, t1: float) -> np.ndarray:
        """Backtrace paths from all nodes at t1; returns (K+1, nx+1), index 0 at t0."""
        a = self.system.speed[j]
        dtau = self.dt / _SUBSTEPS
        paths = np.empty((_SUBSTEPS + 1, self.nx + 1))
        paths[_SUBSTEPS] = self.xs
        pos = self.xs.copy()
        tau = t1
        for i in range(_SUBSTEPS, 0, -1):
            h = -dtau
            k1 = np.asarray(a(np.clip(pos, 0.0, 1.0), tau), dtype=float)
            k2 = np.asarray(
                a(np.clip(pos + 0.5 * h * k1, 0.0, 1.0), tau + 0.5 * h), dtype=float
            )
            k3 = np.asarray(
                a(np.clip(pos + 0.5 * h * k2, 0.0, 1.0), tau + 0.5 * h), dtype=float
            )
            k4 = np.asarray(a(np.clip(pos + h * k3, 0.0, 1.0), tau + h), dtype=float)
            pos = pos + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            tau += h
            paths[i - 1] = pos
        return paths

    def _geometry(self, t0: float, phase: Optional[int]) -> list[_ComponentGeometry]:
        if phase is not None and phase in self._cache:
            return self._cache[phase]
        dtau = self.dt / _SUBSTEPS
        taus = t0 + dtau * np.arange(_SUBSTEPS + 1)
        out = []
        for j in range(self.n):
            raw = self._trace_back(j, t0 + self.dt)
            clipped = np.clip(raw, 0.0, 1.0)
            tau_col = taus[:, None]
            bdiag = np.asarray(
                self.system.coupling[j][j](clipped, tau_col), dtype=float
            )
            bdiag = np.broadcast_to(bdiag, clipped.shape)
            cumulative = cumulative_simpson(bdiag, dtau)
            decay = np.exp(cumulative - cumulative[-1])
            offdiag = {}
            for k in range(self.n):
                if k == j:
                    continue
                values = np.asarray(
                    self.system.coupling[j][k](clipped, tau_col), dtype=float
                )
                if values.any():
                    offdiag[k] = np.broadcast_to(values, clipped.shape)
            forcing = np.broadcast_to(
                np.asarray(self.system.forcing[j](clipped, tau_col), dtype=float),
                clipped.shape,
            )
            entry = self.entry[j]
            outside = (raw[0] < 0.0) if entry == 0.0 else (raw[0] > 1.0)
            cols = np.flatnonzero(outside)
            if len(cols):
                seg = np.zeros(len(cols), dtype=int)
                frac = np.zeros(len(cols))
                for c, col in enumerate(cols):
                    column = raw[:, col]
                    for i in range(_SUBSTEPS - 1, -1, -1):
                        inside_hi = column[i + 1] >= 0.0 if entry == 0.0 else column[i + 1] <= 1.0
                        inside_lo = column[i] < 0.0 if entry == 0.0 else column[i] > 1.0
                        if inside_hi and inside_lo:
                            seg[c] = i
                            frac[c] = (entry - column[i]) / (column[i + 1] - column[i])
                            break
                cross_tau = (seg + frac) * dtau
                lo = decay[seg, cols]
                hi = decay[seg + 1, cols]
                # decay varies exponentially; interpolate its logarithm
                cross_decay = lo * np.exp(frac * (np.log(hi) - np.log(lo)))
                tau_abs = t0 + cross_tau
                cross_offdiag = {
                    k: np.asarray(
                        self.system.coupling[j][k](entry, tau_abs), dtype=float
                    )
                    * np.ones(len(cols))
                    for k in offdiag
                }
                cross_forcing = np.asarray(
                    self.system.forcing[j](entry, tau_abs), dtype=float
                ) * np.ones(len(cols))
                cross_h = np.asarray(
                    self.boundary.h[j](entry, tau_abs), dtype=float
                ) * np.ones(len(cols))
            else:
                seg = np.zeros(0, dtype=int)
                frac = np.zeros(0)
                cross_tau = np.zeros(0)
                cross_decay = np.zeros(0)
                cross_offdiag = {k: np.zeros(0) for k in offdiag}
                cross_forcing = np.zeros(0)
                cross_h = np.zeros(0)
            out.append(
                _ComponentGeometry(
                    paths=clipped,
                    decay=decay,
                    offdiag=offdiag,
                    forcing=forcing,
                    cross_cols=cols,
                    cross_seg=seg,
                    cross_frac=frac,
                    cross_tau=cross_tau,
                    cross_decay=cross_decay,
                    cross_offdiag=cross_offdiag,
                    cross_forcing=cross_forcing,
                    cross_h=cross_h,
                )
            )
        if phase is not None:
            self._cache[phase] = out
        return out

    def advance(
        self, values: np.ndarray, t0: float, phase: Optional[int] = None
    ) -> np.ndarray:
        geometry = self._geometry(t0, phase)
        dtau = self.dt / _SUBSTEPS
        new = np.empty_like(values)
        sources = []
        for j in range(self.n):
            geo = geometry[j]
            foot = np.interp(geo.paths[0], self.xs, values[:, j])
            g = np.zeros_like(geo.paths)
            for k, coeff in geo.offdiag.items():
                sampled = np.interp(geo.paths.ravel(), self.xs, values[:, k])
                g -= coeff * sampled.reshape(geo.paths.shape)
            g += geo.forcing
            sources.append(g)
            new[:, j] = geo.decay[0] * foot + simpson(geo.decay * g, dtau)
        # inflow closures; every outgoing trace in `new` is already final
        t1 = t0 + self.dt
        for j in range(self.n):
            geo = geometry[j]
            if not len(geo.cross_cols):
                continue
            theta = geo.cross_tau / self.dt
            reflected = np.zeros(len(geo.cross_cols))
            for k in range(self.n):
                r_jk = self.boundary.reflection[j, k]
                if r_jk == 0.0:
                    continue
                z_old = values[self.exit_node[k], k]
                z_new = new[self.exit_node[k], k]
                reflected += r_jk * (z_old + theta * (z_new - z_old))
            boundary_value = reflected + geo.cross_h
            row = self.boundary.nonlocal_rows[j]
            if row is not None:
                mix = values.copy()
                for k in range(self.n):
                    mix[self.exit_node[k], k] = new[self.exit_node[k], k]
                q_old = float(row.functional(values, self.xs, t0))
                q_new = float(row.functional(mix, self.xs, t1))
                q = q_old + theta * (q_new - q_old)
                boundary_value = boundary_value + np.asarray(
                    row(t0 + geo.cross_tau, q), dtype=float
                )
            g = sources[j]
            entry_node = 0 if self.entry[j] == 0.0 else self.nx
            g_star = geo.cross_forcing.copy()
            for k, coeff in geo.cross_offdiag.items():
                g_star -= coeff * values[entry_node, k]
            weighted = geo.decay * g
            for c, col in enumerate(geo.cross_cols):
                seg = geo.cross_seg[c]
                tail_tau = np.concatenate(
                    ([geo.cross_tau[c]], dtau * np.arange(seg + 1, _SUBSTEPS + 1))
                )
                tail_val = np.concatenate(
                    (
                        [geo.cross_decay[c] * g_star[c]],
                        weighted[seg + 1 :, col],
                    )
                )
                tail = float(np.trapezoid(tail_val, tail_tau))
                new[col, j] = geo.cross_decay[c] * boundary_value[c] + tail
        return new


def step(
    system: CompiledSystem,
    boundary: CompiledBoundary,
    values: np.ndarray,
    t_now: float,
    dt: float,
) -> np.ndarray:
    """Advance one snapshot (nx + 1, n) from t_now to t_now + dt."""
    values = np.asarray(values, dtype=float)
    engine = _StepEngine(system, boundary, values.shape[0] - 1, dt)
    return engine.advance(values, t_now)


@dataclass
class TrajectoryRecord:
    """Snapshots and norms of one simulation at uniform time steps."""

    period: float
    start: float
    times: np.ndarray
    l2: np.ndarray
    sup: np.ndarray
    snapshots: np.ndarray  # (steps + 1, nx + 1, n)

    def __post_init__(self) -> None:
        steps = np.diff(self.times)
        if len(steps) and not np.allclose(steps, steps[0], rtol=1e-9):
            raise ValueError("time nodes must be uniformly spaced")

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])

    def snapshot_at(self, t: float) -> np.ndarray:
        idx = int(round((t - self.start) / self.dt))
        if not 0 <= idx < len(self.times) or abs(self.times[idx] - t) > 1e-9 * self.period:
            raise ValueError(f"time {t!r} is not a record node")
        return self.snapshots[idx]


def _norms(snapshot: np.ndarray, xs: np.ndarray) -> tuple[float, float]:
    l2 = math.sqrt(float(np.trapezoid(np.sum(np.square(snapshot), axis=1), xs)))
    return l2, float(np.max(np.abs(snapshot)))


def simulate(
    system: CompiledSystem,
    boundary: CompiledBoundary,
    phi: np.ndarray,
    start: float,
    t_end: float,
    nt: int,
) -> TrajectoryRecord:
    """March from the snapshot phi at ``start`` to ``t_end``.

    ``nt`` is the number of steps per coefficient period; t_end - start
    must be a whole number of steps.
    """
    phi = np.asarray(phi, dtype=float)
    if phi.ndim != 2 or phi.shape[1] != system.n:
        raise ValueError("phi must have shape (nx + 1, n)")
    dt = system.period / nt
    count = int(round((t_end - start) / dt))
    if count < 1 or abs(start + count * dt - t_end) > 1e-9 * system.period:
        raise ValueError("t_end - start must be a positive multiple of the step")
    nx = phi.shape[0] - 1
    engine = _StepEngine(system, boundary, nx, dt)
    times = start + dt * np.arange(count + 1)
    snapshots = np.empty((count + 1,) + phi.shape)
    l2 = np.empty(count + 1)
    sup = np.empty(count + 1)
    snapshots[0] = phi
    l2[0], sup[0] = _norms(phi, engine.xs)
    current = phi
    for k in range(count):
        current = engine.advance(current, float(times[k]), phase=k % nt)
        snapshots[k + 1] = current
        l2[k + 1], sup[k + 1] = _norms(current, engine.xs)
    return TrajectoryRecord(
        period=system.period,
        start=start,
        times=times,
        l2=l2,
        sup=sup,
        snapshots=snapshots,
    )


@dataclass(frozen=True)
class DecayEstimate:
    """Exponential decay read off a trajectory.

    ``rate`` is the fitted decay exponent of the L2 norm, ``overshoot``
    the multiplicative headroom above the fitted line, and
    ``period_factors`` the norm ratios across consecutive periods.  A
    trajectory that reaches exact zero is flagged ``flushed`` with an
    infinite rate.
    """

    rate: float
    overshoot: float
    period_factors: tuple[float, ...]
    fit_residual: float
    flushed: bool


def fit_decay(record: TrajectoryRecord, skip_periods: int = 2) -> DecayEstimate:
    """Least-squares decay estimate, ignoring the first transient periods."""
    stride = int(round(record.period / record.dt))
    total_periods = (len(record.times) - 1) // stride
    if total_periods < skip_periods + 3:
        raise ValueError(
            f"record spans {total_periods} periods, need at least {skip_periods + 3}"
        )
    factors = []
    for l in range(1, total_periods + 1):
        before = record.l2[(l - 1) * stride]
        after = record.l2[l * stride]
        factors.append(after / before if before > _FLUSH_FLOOR else 0.0)
    window = slice(skip_periods * stride, None)
    tail_l2 = record.l2[window]
    tail_t = record.times[window]
    if np.min(tail_l2) <= _FLUSH_FLOOR:
        return DecayEstimate(
            rate=math.inf,
            overshoot=1.0,
            period_factors=tuple(factors),
            fit_residual=0.0,
            flushed=True,
        )
    logs = np.log(tail_l2)
    slope, intercept = np.polyfit(tail_t, logs, 1)
    residuals = logs - (slope * tail_t + intercept)
    return DecayEstimate(
        rate=float(-slope),
        overshoot=float(np.exp(np.max(residuals))),
        period_factors=tuple(factors),
        fit_residual=float(np.max(np.abs(residuals))),
        flushed=False,
    )
