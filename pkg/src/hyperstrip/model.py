"""Problem descriptions and grid data.

A linear problem on the strip [0, 1] x R is

    d_t u_j + a_j(x, t) d_x u_j + sum_k b_jk(x, t) u_k = f_j(x, t),

with time-periodic coefficients of period T, the first m speeds positive
and the rest negative.  Boundary values of incoming components are set by
a reflection matrix r acting on the outgoing boundary traces plus a
periodic forcing h_j(t) and an optional nonlocal term H_j(t, Q_j u).

The quasilinear variant carries state-dependent speeds A_j(x, t, u) and a
right-hand side F_j(x, t, u); solvers freeze it to a linear problem
around an iterate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence, Union

import numpy as np

from . import expr as ex
from .numerics import monotone_cubic_slopes, periodic_linear

__all__ = [
    "Field",
    "ExpressionField",
    "FrozenStateField",
    "SampledTimeField",
    "LinearSystemSpec",
    "QuasilinearSystemSpec",
    "PointSample",
    "KernelTerm",
    "RowNonlocal",
    "BoundarySpec",
    "GridFunction",
    "CompiledSystem",
    "CompiledBoundary",
    "ConditionCheck",
    "ValidationReport",
    "ValidationError",
    "validate",
    "sample_fields",
]


class ValidationError(Exception):
    """A structural assumption on the coefficients fails."""

    def __init__(self, report: "ValidationReport"):
        super().__init__(report.summary())
        self.report = report


# ---------------------------------------------------------------------------
# Coefficient fields.  Everything the numerics touch goes through this
# interface: evaluation is vectorized with numpy broadcasting, and the
# time derivative is symbolic for expression-backed fields with a central
# finite-difference fallback otherwise.


class Field:
    period: float = math.inf

    def __call__(self, x, t) -> np.ndarray:
        raise NotImplementedError

    def dt(self, x, t) -> np.ndarray:
        h = 1e-6 * (self.period if math.isfinite(self.period) else 1.0)
        return (self(x, np.asarray(t, dtype=float) + h) - self(x, np.asarray(t, dtype=float) - h)) / (2.0 * h)


class ExpressionField(Field):
    """Field backed by an expression in x and t."""

    def __init__(self, expression: ex.Expression, period: float = math.inf):
        self.expression = expression
        self.period = period
        self._fn = ex.numpy_callable(expression)
        self._dt_fn = None

    def __call__(self, x, t) -> np.ndarray:
        return self._fn(x=x, t=t)

    def dt(self, x, t) -> np.ndarray:
        if self._dt_fn is None:
            self._dt_fn = ex.numpy_callable(ex.differentiate(self.expression, "t"))
        return self._dt_fn(x=x, t=t)

    def __repr__(self) -> str:
        return f"ExpressionField({str(self.expression)!r})"


class FrozenStateField(Field):
    """Expression in x, t, u1..un with u bound to a stored grid iterate."""

    def __init__(self, expression: ex.Expression, state: "GridFunction"):
        self.expression = expression
        self.state = state
        self.period = state.period
        self._fn = ex.numpy_callable(expression)
        self._state_vars = sorted(
            (name for name in ex.free_variables(expression) if name.startswith("u")),
            key=lambda s: int(s[1:]),
        )

    def __call__(self, x, t) -> np.ndarray:
        bindings = {"x": x, "t": t}
        for name in self._state_vars:
            bindings[name] = self.state.component(int(name[1:]) - 1, x, t)
        return self._fn(**bindings)


class SampledTimeField(Field):
    """Periodic time signal known on a uniform grid, linear in between."""

    def __init__(self, values: np.ndarray, period: float):
        self.values = np.asarray(values, dtype=float)
        self.period = period

    def __call__(self, x, t) -> np.ndarray:
        out = periodic_linear(self.values, self.period, t)
        shape = np.broadcast_shapes(np.shape(x), np.shape(t))
        return np.broadcast_to(out, shape).astype(float, copy=False)


def _parse_all(texts: Sequence[str]) -> tuple[ex.Expression, ...]:
    return tuple(ex.parse_expression(s) for s in texts)


def _check_variables(expression: ex.Expression, allowed: set[str], label: str) -> None:
    extra = ex.free_variables(expression) - allowed
    if extra:
        raise ValueError(f"{label} may only use {sorted(allowed)}, found {sorted(extra)}")


def _state_names(n: int) -> set[str]:
    return {f"u{k + 1}" for k in range(n)}


# ---------------------------------------------------------------------------
# Specifications.


@dataclass(frozen=True)
class LinearSystemSpec:
    """Linear system with diagonal speeds a, coupling matrix b, forcing f."""

    n: int
    m: int
    period: float
    speeds: tuple[ex.Expression, ...]
    coupling: tuple[tuple[ex.Expression, ...], ...]
    forcing: tuple[ex.Expression, ...]

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ValueError("need at least one component")
        if not 0 <= self.m <= self.n:
            raise ValueError("m must lie between 0 and n")
        if self.period <= 0.0:
            raise ValueError("period must be positive")
        if len(self.speeds) != self.n or len(self.forcing) != self.n:
            raise ValueError("speeds and forcing must have n entries")
        if len(self.coupling) != self.n or any(len(row) != self.n for row in self.coupling):
            raise ValueError("coupling must be an n x n matrix")
        for e in list(self.speeds) + [c for row in self.coupling for c in row] + list(self.forcing):
            _check_variables(e, {"x", "t"}, "linear coefficient")

    @classmethod
    def from_strings(
        cls,
        n: int,
        m: int,
        period: float,
        speeds: Sequence[str],
        coupling: Sequence[Sequence[str]],
        forcing: Sequence[str],
    ) -> "LinearSystemSpec":
        return cls(
            n=n,
            m=m,
            period=period,
            speeds=_parse_all(speeds),
            coupling=tuple(_parse_all(row) for row in coupling),
            forcing=_parse_all(forcing),
        )

    def with_forcing(self, forcing: Sequence[ex.Expression]) -> "LinearSystemSpec":
        return replace(self, forcing=tuple(forcing))

    def compile(self, a0: float = 1e-3) -> "CompiledSystem":
        return CompiledSystem(
            n=self.n,
            m=self.m,
            period=self.period,
            a0=a0,
            speed=tuple(ExpressionField(a, self.period) for a in self.speeds),
            coupling=tuple(
                tuple(ExpressionField(c, self.period) for c in row) for row in self.coupling
            ),
            forcing=tuple(ExpressionField(f, self.period) for f in self.forcing),
        )


@dataclass(frozen=True)
class QuasilinearSystemSpec:
    """Quasilinear system d_t u + A(x,t,u) d_x u = F(x,t,u).

    ``radius`` is the sup-norm ball in state space inside which the
    hyperbolicity pattern is required to hold and iterates must stay.
    """

    n: int
    m: int
    period: float
    speeds: tuple[ex.Expression, ...]
    rhs: tuple[ex.Expression, ...]
    radius: float

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ValueError("need at least one component")
        if not 0 <= self.m <= self.n:
            raise ValueError("m must lie between 0 and n")
        if self.period <= 0.0:
            raise ValueError("period must be positive")
        if self.radius <= 0.0:
            raise ValueError("radius must be positive")
        if len(self.speeds) != self.n or len(self.rhs) != self.n:
            raise ValueError("speeds and rhs must have n entries")
        allowed = {"x", "t"} | _state_names(self.n)
        for e in list(self.speeds) + list(self.rhs):
            _check_variables(e, allowed, "quasilinear coefficient")

    @classmethod
    def from_strings(
        cls,
        n: int,
        m: int,
        period: float,
        speeds: Sequence[str],
        rhs: Sequence[str],
        radius: float,
    ) -> "QuasilinearSystemSpec":
        return cls(
            n=n,
            m=m,
            period=period,
            speeds=_parse_all(speeds),
            rhs=_parse_all(rhs),
            radius=radius,
        )

    def rhs_at_zero(self) -> tuple[ex.Expression, ...]:
        """F(x, t, 0): the forcing of the frozen linear problems."""
        out = []
        for e in self.rhs:
            pinned = e
            for name in sorted(ex.free_variables(e)):
                if name.startswith("u"):
                    pinned = ex.substitute(pinned, name, 0.0)
            out.append(pinned)
        return tuple(out)

    def freeze(self, state: "GridFunction", a0: float = 1e-3) -> "CompiledSystem":
        """Linearize around ``state``.

        The speeds are A_j evaluated along the iterate.  The coupling is
        the exact mean-value extraction

            b_jk(x, t) = -integral_0^1 dF_j/du_k (x, t, sigma u(x, t)) dsigma,

        evaluated with a 5-point Gauss-Legendre rule in sigma, so that
        b(x, t) u(x, t) = F(x, t, 0) - F(x, t, u(x, t)) holds exactly for
        the stored iterate.  The forcing is F(x, t, 0).
        """
        from .numerics import gauss_legendre_01

        nodes, weights = gauss_legendre_01()
        speed_fields = tuple(FrozenStateField(a, state) for a in self.speeds)
        partials = tuple(
            tuple(ex.differentiate(self.rhs[j], f"u{k + 1}") for k in range(self.n))
            for j in range(self.n)
        )
        coupling_fields = tuple(
            tuple(
                _MeanValueCouplingField(partials[j][k], state, nodes, weights)
                for k in range(self.n)
            )
            for j in range(self.n)
        )
        forcing_fields = tuple(
            ExpressionField(f, self.period) for f in self.rhs_at_zero()
        )
        return CompiledSystem(
            n=self.n,
            m=self.m,
            period=self.period,
            a0=a0,
            speed=speed_fields,
            coupling=coupling_fields,
            forcing=forcing_fields,
        )


class _MeanValueCouplingField(Field):
    """-integral_0^1 dF_j/du_k at sigma-scaled state, Gauss-Legendre in sigma."""

    def __init__(self, partial: ex.Expression, state: "GridFunction", nodes, weights):
        self.partial = partial
        self.state = state
        self.period = state.period
        self._fn = ex.numpy_callable(partial)
        self._nodes = nodes
        self._weights = weights
        self._state_vars = sorted(
            (name for name in ex.free_variables(partial) if name.startswith("u")),
            key=lambda s: int(s[1:]),
        )

    def __call__(self, x, t) -> np.ndarray:
        if not self._state_vars:
            # partial is state independent; the sigma average is itself
            return -self._fn(x=x, t=t)
        components = {
            name: self.state.component(int(name[1:]) - 1, x, t) for name in self._state_vars
        }
        total = 0.0
        for sigma, weight in zip(self._nodes, self._weights):
            bindings = {"x": x, "t": t}
            for name, values in components.items():
                bindings[name] = sigma * values
            total = total + weight * self._fn(**bindings)
        return -total


# ---------------------------------------------------------------------------
# Boundary description.


@dataclass(frozen=True)
class PointSample:
    """One term w(t) * u_component(location, t) of a boundary functional."""

    weight: ex.Expression
    component: int  # 1-based
    location: float

    def __post_init__(self) -> None:
        _check_variables(self.weight, {"t"}, "sample weight")
        if not 0.0 <= self.location <= 1.0:
            raise ValueError("sample location must lie in [0, 1]")


@dataclass(frozen=True)
class KernelTerm:
    """One term integral_0^1 kernel(x, t) u_component(x, t) dx."""

    kernel: ex.Expression
    component: int  # 1-based

    def __post_init__(self) -> None:
        _check_variables(self.kernel, {"x", "t"}, "kernel")


@dataclass(frozen=True)
class RowNonlocal:
    """Nonlocal boundary term H(t, q) with q = samples + kernel integrals."""

    response: ex.Expression  # expression in t and q
    samples: tuple[PointSample, ...] = ()
    kernels: tuple[KernelTerm, ...] = ()

    def __post_init__(self) -> None:
        _check_variables(self.response, {"t", "q"}, "boundary response")


@dataclass(frozen=True)
class BoundarySpec:
    """Reflection matrix plus periodic forcing and optional nonlocal rows.

    The incoming trace of component j is

        r_j1 z_1(t) + ... + r_jn z_n(t) + h_j(t) + H_j(t, Q_j u(., t)),

    where z collects the outgoing traces: z_k = u_k(1, .) for k <= m and
    z_k = u_k(0, .) for k > m.  Entries of r are constants.
    """

    reflection: tuple[tuple[float, ...], ...]
    h: tuple[ex.Expression, ...]
    nonlocal_rows: tuple[Optional[RowNonlocal], ...] = ()

    def __post_init__(self) -> None:
        n = len(self.reflection)
        if any(len(row) != n for row in self.reflection):
            raise ValueError("reflection must be square")
        if len(self.h) != n:
            raise ValueError("h must have one entry per component")
        if self.nonlocal_rows and len(self.nonlocal_rows) != n:
            raise ValueError("nonlocal_rows must have one entry per component")
        for e in self.h:
            _check_variables(e, {"t"}, "boundary forcing")

    @property
    def n(self) -> int:
        return len(self.reflection)

    @classmethod
    def from_strings(
        cls,
        reflection: Sequence[Sequence[str]],
        h: Sequence[str],
        nonlocal_rows: Sequence[Optional[RowNonlocal]] = (),
    ) -> "BoundarySpec":
        matrix = tuple(
            tuple(float(ex.evaluate(ex.parse_expression(entry), {})) for entry in row)
            for row in reflection
        )
        return cls(reflection=matrix, h=_parse_all(h), nonlocal_rows=tuple(nonlocal_rows))

    def with_h(self, h: Sequence[ex.Expression]) -> "BoundarySpec":
        return replace(self, h=tuple(h))

    def compile(self, period: float) -> "CompiledBoundary":
        rows = self.nonlocal_rows if self.nonlocal_rows else (None,) * self.n
        return CompiledBoundary(
            n=self.n,
            period=period,
            reflection=np.array(self.reflection, dtype=float),
            h=tuple(ExpressionField(e, period) for e in self.h),
            nonlocal_rows=tuple(
                _CompiledNonlocal(row, period) if row is not None else None for row in rows
            ),
        )


class _CompiledNonlocal:
    def __init__(self, row: RowNonlocal, period: float):
        self.response = ex.numpy_callable(row.response)
        self.samples = tuple(
            (ExpressionField(s.weight, period), s.component - 1, s.location) for s in row.samples
        )
        self.kernels = tuple(
            (ExpressionField(k.kernel, period), k.component - 1) for k in row.kernels
        )

    def functional(self, profile: np.ndarray, xs: np.ndarray, t) -> np.ndarray:
        """Q applied to a spatial profile (nx+1, n) at times t (broadcast)."""
        t = np.asarray(t, dtype=float)
        total = np.zeros(t.shape)
        for weight, comp, location in self.samples:
            sampled = np.interp(location, xs, profile[:, comp])
            total = total + weight(location, t) * sampled
        for kernel, comp in self.kernels:
            kernel_values = kernel(xs, t[..., None] if t.ndim else t)
            integrand = kernel_values * profile[:, comp]
            total = total + np.trapezoid(integrand, xs, axis=-1)
        return total

    def __call__(self, t, q) -> np.ndarray:
        return self.response(t=t, q=q)


@dataclass(frozen=True)
class CompiledBoundary:
    n: int
    period: float
    reflection: np.ndarray
    h: tuple[Field, ...]
    nonlocal_rows: tuple[Optional[_CompiledNonlocal], ...]

    def with_h(self, h: Sequence[Field]) -> "CompiledBoundary":
        return replace(self, h=tuple(h))

    @property
    def has_nonlocal(self) -> bool:
        return any(row is not None for row in self.nonlocal_rows)

    def absorb_nonlocal(self, state: "GridFunction", nt: int) -> "CompiledBoundary":
        """Fold H_j(t, Q_j state) into the forcing, dropping the nonlocal rows.

        This is the boundary freeze of the outer quasilinear iteration: the
        returned boundary is linear with h_j(t) := h_j(t) + H_j(t, Q_j u(., t))
        sampled on the nt-point time grid.
        """
        if not self.has_nonlocal:
            return replace(self, nonlocal_rows=(None,) * self.n)
        ts = np.arange(nt) * (self.period / nt)
        xs = np.linspace(0.0, 1.0, state.values.shape[1])
        new_h = []
        for j in range(self.n):
            row = self.nonlocal_rows[j]
            base = self.h[j](0.0, ts)
            if row is None:
                new_h.append(SampledTimeField(base, self.period))
                continue
            q_values = np.array(
                [row.functional(state.values[k], xs, ts[k]) for k in range(nt)]
            )
            new_h.append(SampledTimeField(base + row(ts, q_values), self.period))
        return replace(self, h=tuple(new_h), nonlocal_rows=(None,) * self.n)


# ---------------------------------------------------------------------------
# Compiled system: the uniform view the numerics consume.


@dataclass(frozen=True)
class CompiledSystem:
    n: int
    m: int
    period: float
    a0: float
    speed: tuple[Field, ...]
    coupling: tuple[tuple[Field, ...], ...]
    forcing: tuple[Field, ...]


# ---------------------------------------------------------------------------
# Grid data.


@dataclass
class GridFunction:
    """Samples of a vector field on a uniform space-time lattice.

    ``values`` has shape (nt, nx + 1, ncomp): nx + 1 spatial nodes on
    [0, 1] and nt temporal nodes covering one period [0, T).  Temporal
    indexing wraps, so the data is periodic by construction.  Instances
    are treated as immutable once built.

    ``interp`` selects the in-between rule: "linear" is bilinear, "cubic"
    is monotone cubic in x and linear in t.  Either rule reproduces the
    stored values exactly at the nodes.
    """

    period: float
    values: np.ndarray
    interp: str = "linear"
    _slopes: Optional[np.ndarray] = field(default=None, repr=False, compare=False)

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 3:
            raise ValueError("values must have shape (nt, nx + 1, ncomp)")
        if self.interp not in ("linear", "cubic"):
            raise ValueError("interp must be 'linear' or 'cubic'")
        self.values.setflags(write=False)

    @classmethod
    def zeros(cls, nx: int, nt: int, ncomp: int, period: float, interp: str = "linear") -> "GridFunction":
        return cls(period=period, values=np.zeros((nt, nx + 1, ncomp)), interp=interp)

    @property
    def nx(self) -> int:
        return self.values.shape[1] - 1

    @property
    def nt(self) -> int:
        return self.values.shape[0]

    @property
    def ncomp(self) -> int:
        return self.values.shape[2]

    @property
    def xs(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.nx + 1)

    @property
    def ts(self) -> np.ndarray:
        return np.arange(self.nt) * (self.period / self.nt)

    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.values)))

    def _locate_x(self, x) -> tuple[np.ndarray, np.ndarray]:
        x = np.asarray(x, dtype=float)
        if np.any(x < -1e-9) or np.any(x > 1.0 + 1e-9):
            raise ValueError("x outside the strip [0, 1]")
        scaled = np.clip(x, 0.0, 1.0) * self.nx
        base = np.floor(scaled)
        frac = scaled - base
        snap_low = frac < 1e-9
        snap_high = frac > 1.0 - 1e-9
        base = base.astype(int) + np.where(snap_high, 1, 0)
        frac = np.where(snap_low | snap_high, 0.0, frac)
        base = np.clip(base, 0, self.nx)
        return base, frac

    def _locate_t(self, t) -> tuple[np.ndarray, np.ndarray]:
        t = np.asarray(t, dtype=float)
        scaled = np.mod(t, self.period) * (self.nt / self.period)
        base = np.floor(scaled)
        frac = scaled - base
        snap_low = frac < 1e-9
        snap_high = frac > 1.0 - 1e-9
        base = base.astype(int) + np.where(snap_high, 1, 0)
        frac = np.where(snap_low | snap_high, 0.0, frac)
        return np.mod(base, self.nt), frac

    def at(self, x, t) -> np.ndarray:
        """All components at broadcast points; trailing axis is ncomp."""
        ix, fx = self._locate_x(x)
        it, ft = self._locate_t(t)
        ix, fx, it, ft = np.broadcast_arrays(ix, fx, it, ft)
        ix1 = np.minimum(ix + 1, self.nx)
        it1 = np.mod(it + 1, self.nt)
        ft = ft[..., None]
        if self.interp == "linear":
            fx = fx[..., None]
            v00 = self.values[it, ix]
            v01 = self.values[it, ix1]
            v10 = self.values[it1, ix]
            v11 = self.values[it1, ix1]
            lower = v00 * (1.0 - fx) + v01 * fx
            upper = v10 * (1.0 - fx) + v11 * fx
        else:
            lower = self._cubic_x(it, ix, ix1, fx)
            upper = self._cubic_x(it1, ix, ix1, fx)
        return lower * (1.0 - ft) + upper * ft

    def _cubic_x(self, it, ix, ix1, fx) -> np.ndarray:
        if self._slopes is None:
            # slopes are per time level and component, in x units of the cell
            moved = np.moveaxis(self.values, 1, -1)
            slopes = monotone_cubic_slopes(moved, 1.0 / self.nx)
            self._slopes = np.moveaxis(slopes, -1, 1)
        h = 1.0 / self.nx
        s = fx[..., None]
        v0 = self.values[it, ix]
        v1 = self.values[it, ix1]
        d0 = self._slopes[it, ix] * h
        d1 = self._slopes[it, ix1] * h
        h00 = (1.0 + 2.0 * s) * (1.0 - s) ** 2
        h10 = s * (1.0 - s) ** 2
        h01 = s * s * (3.0 - 2.0 * s)
        h11 = s * s * (s - 1.0)
        return h00 * v0 + h10 * d0 + h01 * v1 + h11 * d1

    def component(self, k: int, x, t) -> np.ndarray:
        return self.at(x, t)[..., k]

    def snapshot(self, index: int) -> np.ndarray:
        return self.values[index]

    def with_values(self, values: np.ndarray) -> "GridFunction":
        return GridFunction(period=self.period, values=values, interp=self.interp)


def sample_fields(
    expressions: Sequence[ex.Expression], nx: int, nt: int, period: float, interp: str = "linear"
) -> GridFunction:
    """Sample expressions in x, t on the lattice into a GridFunction."""
    xs = np.linspace(0.0, 1.0, nx + 1)
    ts = np.arange(nt) * (period / nt)
    values = np.empty((nt, nx + 1, len(expressions)))
    for k, e in enumerate(expressions):
        fn = ex.numpy_callable(e)
        values[:, :, k] = fn(x=xs[None, :], t=ts[:, None])
    return GridFunction(period=period, values=values, interp=interp)


# ---------------------------------------------------------------------------
# Validation of the structural assumptions.


@dataclass(frozen=True)
class ConditionCheck:
    name: str
    passed: bool
    margin: float
    location: Optional[tuple[float, ...]]
    message: str


@dataclass(frozen=True)
class ValidationReport:
    passed: bool
    checks: tuple[ConditionCheck, ...]

    def summary(self) -> str:
        lines = []
        for check in self.checks:
            status = "ok" if check.passed else "VIOLATED"
            lines.append(f"{check.name}: {status} ({check.message})")
        return "; ".join(lines)

    def raise_if_failed(self) -> None:
        if not self.passed:
            raise ValidationError(self)


def _speed_samples(
    spec: Union[LinearSystemSpec, QuasilinearSystemSpec], nx: int, nt: int, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Speed values on a sampling cloud; returns (values, xs, ts).

    For quasilinear specs the cloud includes state vectors covering the
    ball of radius ``spec.radius``: zero, signed coordinate vectors and a
    batch of random corners.
    """
    xs = np.linspace(0.0, 1.0, nx + 1)
    ts = np.arange(nt) * (spec.period / nt)
    grid_x = xs[None, :]
    grid_t = ts[:, None]
    if isinstance(spec, LinearSystemSpec):
        values = np.empty((spec.n, nt, nx + 1))
        for j, a in enumerate(spec.speeds):
            values[j] = ex.numpy_callable(a)(x=grid_x, t=grid_t)
        return values.reshape(spec.n, -1), xs, ts
    states = [np.zeros(spec.n)]
    for k in range(spec.n):
        for sign in (1.0, -1.0):
            state = np.zeros(spec.n)
            state[k] = sign * spec.radius
            states.append(state)
    states.extend(rng.uniform(-spec.radius, spec.radius, size=(8, spec.n)))
    columns = []
    for state in states:
        bindings = {f"u{k + 1}": state[k] for k in range(spec.n)}
        for j, a in enumerate(spec.speeds):
            pinned = a
            for name, value in bindings.items():
                pinned = ex.substitute(pinned, name, value)
            if j == 0:
                block = np.empty((spec.n, nt, nx + 1))
            block[j] = ex.numpy_callable(pinned)(x=grid_x, t=grid_t)
        columns.append(block.reshape(spec.n, -1))
    return np.concatenate(columns, axis=1), xs, ts


def validate(
    spec: Union[LinearSystemSpec, QuasilinearSystemSpec],
    boundary: Optional[BoundarySpec] = None,
    a0: float = 1e-3,
    nx: int = 128,
    nt: int = 128,
    seed: int = 42,
) -> ValidationReport:
    """Check the structural assumptions with margin ``a0``.

    Verifies the sign pattern of the speeds (first m positive, rest
    negative, margin a0), pairwise speed separation (margin a0), and
    spot-checks time periodicity of every coefficient at 64 random
    points.  Quasilinear specs are sampled over states of sup norm up to
    ``spec.radius``.
    """
    rng = np.random.default_rng(seed)
    if isinstance(spec, QuasilinearSystemSpec):
        nx, nt = min(nx, 32), min(nt, 32)
    values, xs, ts = _speed_samples(spec, nx, nt, rng)
    checks: list[ConditionCheck] = []

    def _grid_location(flat_index: int) -> tuple[float, float]:
        per_grid = flat_index % (len(ts) * len(xs))
        return (float(xs[per_grid % len(xs)]), float(ts[per_grid // len(xs)]))

    # sign pattern
    if spec.m > 0:
        block = values[: spec.m]
        flat = int(np.argmin(block))
        margin = float(block.flat[flat])
        j = flat // block.shape[1]
        checks.append(
            ConditionCheck(
                name="positive_speeds",
                passed=margin >= a0,
                margin=margin,
                location=_grid_location(flat % block.shape[1]),
                message=f"min over leading speeds is {margin:.6g} at component {j + 1}",
            )
        )
    if spec.m < spec.n:
        block = values[spec.m :]
        flat = int(np.argmax(block))
        margin = float(-block.flat[flat])
        j = flat // block.shape[1] + spec.m
        checks.append(
            ConditionCheck(
                name="negative_speeds",
                passed=margin >= a0,
                margin=margin,
                location=_grid_location(flat % block.shape[1]),
                message=f"max over trailing speeds is {-margin:.6g} at component {j + 1}",
            )
        )
    # pairwise separation
    if spec.n > 1:
        best = math.inf
        best_pair = (0, 1)
        best_col = 0
        for j in range(spec.n):
            for k in range(j + 1, spec.n):
                gaps = np.abs(values[j] - values[k])
                col = int(np.argmin(gaps))
                if gaps[col] < best:
                    best = float(gaps[col])
                    best_pair = (j, k)
                    best_col = col
        checks.append(
            ConditionCheck(
                name="speed_separation",
                passed=best >= a0,
                margin=best,
                location=_grid_location(best_col),
                message=f"min gap {best:.6g} between components {best_pair[0] + 1} and {best_pair[1] + 1}",
            )
        )
    # periodicity spot check
    worst = 0.0
    spot_x = rng.uniform(0.0, 1.0, size=64)
    spot_t = rng.uniform(0.0, spec.period, size=64)
    fields: list[ex.Expression] = list(spec.speeds)
    if isinstance(spec, LinearSystemSpec):
        fields += [c for row in spec.coupling for c in row] + list(spec.forcing)
        extra_bindings = {}
    else:
        extra_bindings = {f"u{k + 1}": 0.0 for k in range(spec.n)}
        fields += list(spec.rhs)
    if boundary is not None:
        fields += list(boundary.h)
    for e in fields:
        pinned = e
        for name, value in extra_bindings.items():
            pinned = ex.substitute(pinned, name, value)
        fn = ex.numpy_callable(pinned)
        now = fn(x=spot_x, t=spot_t)
        later = fn(x=spot_x, t=spot_t + spec.period)
        worst = max(worst, float(np.max(np.abs(later - now))))
    checks.append(
        ConditionCheck(
            name="periodicity",
            passed=worst <= 1e-9,
            margin=worst,
            location=None,
            message=f"max |field(t + T) - field(t)| over 64 samples is {worst:.3g}",
        )
    )
    return ValidationReport(passed=all(c.passed for c in checks), checks=checks)
