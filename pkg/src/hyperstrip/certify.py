"""Energy certificates for exponential decay.

Two independent sufficient conditions are checked:

* dissipativity: the reflection operators of weight orders 0, 1, 2 all
  have sup norm below one (this is what the solver's contraction
  arguments need);
* a quadratic energy estimate with a diagonal weight V(x, t): V must be
  bounded above and below (beta_1, beta_2), the interior matrix

      M2 = dt(V) + dx(V a) - V b - b^T V

  must be negative definite with margin beta_3, and the boundary matrix

      M3(t) = J0^T V(0,t) a(0,t) J0 - J1^T V(1,t) a(1,t) J1

  must be negative definite with margin beta_4, where J0, J1 encode the
  reflection.  A passing certificate yields the decay estimate

      ||u(t)|| <= sqrt(beta_2/beta_1) exp(-beta_3 (t-s) / (2 beta_2)) ||u(s)||

  in L2.  All conditions are strict inequalities on compact sets, so
  they are stable under small coefficient perturbations; the attained
  margins quantify the slack on the sampling grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from . import expr as ex
from .model import BoundarySpec, LinearSystemSpec, ValidationReport, validate
from .numerics import symmetric_eigenvalues
from .operators import ReflectionNormEstimate, reflection_norm

__all__ = [
    "LyapunovSpec",
    "ConditionResult",
    "CertificationReport",
    "boundary_mixing_matrices",
    "lyapunov_check",
    "dissipativity_check",
    "certify",
]

ROBUSTNESS_NOTE = (
    "All certified conditions are strict inequalities on compact sets and"
    " remain valid under sufficiently small perturbations of the"
    " coefficients; the attained margins quantify the slack on the"
    " sampling grid.  No admissible perturbation radius is claimed."
)


@dataclass(frozen=True)
class LyapunovSpec:
    """Diagonal quadratic weight V and requested margins.

    ``entries`` are the diagonal V_j as expressions in x and t.  Each of
    the four margins is a positive number to test against or None to
    report the attained value only.
    """

    entries: tuple[ex.Expression, ...]
    margins: tuple[Optional[float], Optional[float], Optional[float], Optional[float]] = (
        None,
        None,
        None,
        None,
    )

    def __post_init__(self) -> None:
        for e in self.entries:
            extra = ex.free_variables(e) - {"x", "t"}
            if extra:
                raise ValueError(f"V entries may only use x and t, found {sorted(extra)}")
        if len(self.margins) != 4:
            raise ValueError("margins must have four entries (beta_1 .. beta_4)")
        for value in self.margins:
            if value is not None and value <= 0.0:
                raise ValueError("requested margins must be positive")

    @classmethod
    def identity(cls, n: int) -> "LyapunovSpec":
        one = ex.parse_expression("1")
        return cls(entries=(one,) * n)

    @classmethod
    def from_strings(
        cls, entries: Sequence[str], margins: Sequence[Optional[float]] = (None,) * 4
    ) -> "LyapunovSpec":
        return cls(
            entries=tuple(ex.parse_expression(s) for s in entries),
            margins=tuple(margins),
        )


@dataclass(frozen=True)
class ConditionResult:
    """Outcome of one certificate condition.

    ``margin`` is the attained value of the corresponding beta (for the
    upper bound beta_2 it is the attained maximum, which must stay below
    the requested value when one is given).
    """

    name: str
    passed: bool
    margin: float
    required: Optional[float]
    location: Optional[tuple[float, ...]]
    detail: str

    def as_dict(self) -> dict:
        return {
            "name": self.name,
            "passed": self.passed,
            "margin": self.margin,
            "required": self.required,
            "location": list(self.location) if self.location is not None else None,
            "detail": self.detail,
        }


@dataclass(frozen=True)
class CertificationReport:
    conditions: tuple[ConditionResult, ...]
    norms: tuple[ReflectionNormEstimate, ...]
    lyapunov_passed: bool
    dissipative: bool
    decay_rate: Optional[float]
    decay_amplitude: Optional[float]
    validation: Optional[ValidationReport] = None

    @property
    def passed(self) -> bool:
        return self.lyapunov_passed and self.dissipative

    def condition(self, name: str) -> ConditionResult:
        for result in self.conditions:
            if result.name == name:
                return result
        raise KeyError(name)

    def as_dict(self) -> dict:
        return {
            "passed": self.passed,
            "lyapunov": {
                "passed": self.lyapunov_passed,
                "conditions": [c.as_dict() for c in self.conditions],
            },
            "dissipativity": {
                "passed": self.dissipative,
                "norms": [
                    {
                        "order": e.order,
                        "value": e.value,
                        "per_component": list(e.per_component),
                        "worst_component": e.worst_component + 1,
                        "worst_time": e.worst_time,
                    }
                    for e in self.norms
                ],
            },
            "decay": (
                {"rate": self.decay_rate, "amplitude": self.decay_amplitude}
                if self.decay_rate is not None
                else None
            ),
            "note": ROBUSTNESS_NOTE,
        }

    def summary_lines(self) -> list[str]:
        lines = []
        for c in self.conditions:
            status = "pass" if c.passed else "FAIL"
            req = f" (required {c.required:g})" if c.required is not None else ""
            lines.append(f"{c.name}: {status}, margin {c.margin:.6g}{req} - {c.detail}")
        for e in self.norms:
            status = "pass" if e.value < 1.0 else "FAIL"
            lines.append(
                f"reflection norm order {e.order}: {status}, {e.value:.6g}"
                f" (component {e.worst_component + 1} at t = {e.worst_time:.6g})"
            )
        if self.decay_rate is not None:
            lines.append(
                f"decay estimate: rate {self.decay_rate:.6g},"
                f" amplitude {self.decay_amplitude:.6g}"
            )
        lines.append(f"overall: {'pass' if self.passed else 'FAIL'}")
        return lines


def boundary_mixing_matrices(
    reflection: Union[np.ndarray, Sequence[Sequence[float]]], m: int
) -> tuple[np.ndarray, np.ndarray]:
    """Boundary-value matrices mapping outgoing traces to full traces.

    With the reflection matrix r split into blocks at row/column m, the
    trace vector z (components exiting at x = 1 first, then x = 0)
    determines the boundary values u(0, t) = J0 z and u(1, t) = J1 z
    with

        J0 = [[r_11, r_12], [0, I]],    J1 = [[I, 0], [r_21, r_22]].
    """
    r = np.asarray(reflection, dtype=float)
    n = r.shape[0]
    if r.shape != (n, n):
        raise ValueError("reflection must be square")
    if not 0 <= m <= n:
        raise ValueError("m must lie between 0 and n")
    j0 = np.zeros((n, n))
    j1 = np.zeros((n, n))
    j0[:m, :] = r[:m, :]
    j0[m:, m:] = np.eye(n - m)
    j1[:m, :m] = np.eye(m)
    j1[m:, :] = r[m:, :]
    return j0, j1


def _diagonal_fields(spec: LinearSystemSpec, lyapunov: LyapunovSpec):
    """Per-component callables for V_j and dt(V_j) + dx(V_j a_j)."""
    v_fns = []
    drift_fns = []
    for v_expr, a_expr in zip(lyapunov.entries, spec.speeds):
        v_fns.append(ex.numpy_callable(v_expr))
        drift = ex.add(
            ex.differentiate(v_expr, "t"),
            ex.differentiate(ex.mul(v_expr, a_expr), "x"),
        )
        drift_fns.append(ex.numpy_callable(drift))
    return v_fns, drift_fns


def _max_eig_with_argmax(mats: np.ndarray) -> tuple[float, tuple[int, ...]]:
    eigs = symmetric_eigenvalues(mats)
    top = eigs[..., -1]
    flat = int(np.argmax(top))
    return float(top.flat[flat]), np.unravel_index(flat, top.shape)


def _check_symmetry(mats: np.ndarray, label: str) -> None:
    scale = 1.0 + float(np.max(np.abs(mats)))
    defect = float(np.max(np.abs(mats - np.swapaxes(mats, -1, -2))))
    if defect > 1e-12 * scale:
        raise RuntimeError(f"{label} assembly lost symmetry (defect {defect:.3g})")


def lyapunov_check(
    spec: LinearSystemSpec,
    boundary: BoundarySpec,
    lyapunov: Optional[LyapunovSpec] = None,
    nx: int = 128,
    nt: int = 128,
    boundary_points: int = 512,
) -> tuple[ConditionResult, ...]:
    """Evaluate the four energy-certificate conditions on sampling grids.

    The interior condition is sampled on an (nx + 1) x nt space-time
    grid, the boundary condition on ``boundary_points`` times.  For each
    requested margin the verdict is a strict comparison; under "auto"
    (margin None) the verdict only requires the sign condition and the
    attained value is reported.
    """
    if lyapunov is None:
        lyapunov = LyapunovSpec.identity(spec.n)
    if len(lyapunov.entries) != spec.n:
        raise ValueError("V must have one diagonal entry per component")
    n = spec.n
    xs = np.linspace(0.0, 1.0, nx + 1)
    ts = np.arange(nt) * (spec.period / nt)
    grid_x = xs[None, :]
    grid_t = ts[:, None]
    v_fns, drift_fns = _diagonal_fields(spec, lyapunov)

    v_values = np.empty((nt, nx + 1, n))
    drift_values = np.empty((nt, nx + 1, n))
    for j in range(n):
        v_values[..., j] = v_fns[j](x=grid_x, t=grid_t)
        drift_values[..., j] = drift_fns[j](x=grid_x, t=grid_t)
    b_values = np.empty((nt, nx + 1, n, n))
    for j in range(n):
        for k in range(n):
            b_values[..., j, k] = ex.numpy_callable(spec.coupling[j][k])(x=grid_x, t=grid_t)

    req1, req2, req3, req4 = lyapunov.margins
    results = []

    # (i) lower and upper bounds of the diagonal weight
    low = float(np.min(v_values))
    low_at = np.unravel_index(int(np.argmin(v_values)), v_values.shape)
    high = float(np.max(v_values))
    high_at = np.unravel_index(int(np.argmax(v_values)), v_values.shape)
    results.append(
        ConditionResult(
            name="beta1",
            passed=(low > 0.0) if req1 is None else (low >= req1),
            margin=low,
            required=req1,
            location=(float(xs[low_at[1]]), float(ts[low_at[0]])),
            detail=f"min of V_{low_at[2] + 1}",
        )
    )
    results.append(
        ConditionResult(
            name="beta2",
            passed=True if req2 is None else (high <= req2),
            margin=high,
            required=req2,
            location=(float(xs[high_at[1]]), float(ts[high_at[0]])),
            detail=f"max of V_{high_at[2] + 1}",
        )
    )

    # (ii) interior decay matrix
    vb = v_values[..., :, None] * b_values
    interior = -vb - np.swapaxes(vb, -1, -2)
    idx = np.arange(n)
    interior[..., idx, idx] += drift_values
    _check_symmetry(interior, "interior decay matrix")
    top, at = _max_eig_with_argmax(interior)
    results.append(
        ConditionResult(
            name="beta3",
            passed=(top < 0.0) if req3 is None else (top < -req3),
            margin=-top,
            required=req3,
            location=(float(xs[at[1]]), float(ts[at[0]])),
            detail="negated max eigenvalue of the interior decay matrix",
        )
    )

    # (iii) boundary dissipation matrix
    bts = np.arange(boundary_points) * (spec.period / boundary_points)
    j0, j1 = boundary_mixing_matrices(boundary.reflection, spec.m)
    va0 = np.empty((boundary_points, n))
    va1 = np.empty((boundary_points, n))
    for j in range(n):
        a_fn = ex.numpy_callable(spec.speeds[j])
        va0[:, j] = v_fns[j](x=0.0, t=bts) * a_fn(x=0.0, t=bts)
        va1[:, j] = v_fns[j](x=1.0, t=bts) * a_fn(x=1.0, t=bts)
    mats = np.einsum("jk,tj,jl->tkl", j0, va0, j0) - np.einsum(
        "jk,tj,jl->tkl", j1, va1, j1
    )
    _check_symmetry(mats, "boundary dissipation matrix")
    top_b, at_b = _max_eig_with_argmax(mats)
    results.append(
        ConditionResult(
            name="beta4",
            passed=(top_b < 0.0) if req4 is None else (top_b < -req4),
            margin=-top_b,
            required=req4,
            location=(float(bts[at_b[0]]),),
            detail="negated max eigenvalue of the boundary dissipation matrix",
        )
    )
    return tuple(results)


def dissipativity_check(
    spec: LinearSystemSpec,
    boundary: BoundarySpec,
    a0: float = 1e-3,
    nt: int = 128,
) -> tuple[ReflectionNormEstimate, ...]:
    """Reflection norms of weight orders 0, 1, 2 on the oversampled grid."""
    system = spec.compile(a0=a0)
    compiled_boundary = boundary.compile(spec.period)
    return tuple(
        reflection_norm(system, compiled_boundary, order, nt=nt) for order in (0, 1, 2)
    )


def certify(
    spec: LinearSystemSpec,
    boundary: BoundarySpec,
    lyapunov: Optional[LyapunovSpec] = None,
    a0: float = 1e-3,
    nx: int = 128,
    nt: int = 128,
    boundary_points: int = 512,
    run_validation: bool = True,
) -> CertificationReport:
    """Full certificate: structural validation, energy conditions, norms.

    A failing validation aborts with ValidationError; the certificate
    itself never raises on a failing condition, it reports the verdict.
    """
    validation = None
    if run_validation:
        validation = validate(spec, boundary, a0=a0, nx=nx, nt=nt)
        validation.raise_if_failed()
    conditions = lyapunov_check(
        spec, boundary, lyapunov, nx=nx, nt=nt, boundary_points=boundary_points
    )
    norms = dissipativity_check(spec, boundary, a0=a0, nt=nt)
    lyapunov_passed = all(c.passed for c in conditions)
    dissipative = all(e.value < 1.0 for e in norms)
    by_name = {c.name: c for c in conditions}
    decay_rate = None
    decay_amplitude = None
    if lyapunov_passed:
        beta1 = by_name["beta1"].margin
        beta2 = by_name["beta2"].margin
        beta3 = by_name["beta3"].margin
        decay_rate = beta3 / (2.0 * beta2)
        decay_amplitude = math.sqrt(beta2 / beta1)
    return CertificationReport(
        conditions=conditions,
        norms=norms,
        lyapunov_passed=lyapunov_passed,
        dissipative=dissipative,
        decay_rate=decay_rate,
        decay_amplitude=decay_amplitude,
        validation=validation,
    )
