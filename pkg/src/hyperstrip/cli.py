"""Command line front end: config ingestion, dispatch, stable reports.

Configs are TOML with a strict schema: unknown keys are fatal and every
error message carries the key path that caused it.  All random draws
are seeded (default 42), every float in a JSON report is rounded to 17
significant digits before serialization, and CSVs are written row-major
with t as the outer loop, so identical invocations produce byte
identical artifacts.

Exit codes: 0 success / certificate passed, 1 certificate failed or a
solve did not converge, 2 unusable input (parse, schema, or validation
error).
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Optional, Sequence, Union

try:
    import tomllib
except ModuleNotFoundError:  # 3.10: the stdlib module landed in 3.11
    import tomli as tomllib

import numpy as np

from . import expr as ex
from .certify import LyapunovSpec, certify
from .ibvp import default_time_steps, fit_decay, simulate
from .model import (
    BoundarySpec,
    KernelTerm,
    LinearSystemSpec,
    PointSample,
    QuasilinearSystemSpec,
    RowNonlocal,
    ValidationError,
    validate,
)
from .periodic import (
    RadiusError,
    mms_study,
    perturb_study,
    solve_linear_periodic,
    solve_quasilinear,
)

__all__ = ["ConfigError", "ConfigBundle", "load_config", "main"]

_MISSING = object()


class ConfigError(Exception):
    """Schema or content problem, annotated with the offending key path."""


# ---------------------------------------------------------------------------
# Strict-schema table access.


class _Table:
    """Dict wrapper that consumes keys and rejects leftovers."""

    def __init__(self, data: dict, path: str):
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: expected a table")
        self.data = dict(data)
        self.path = path

    def take(self, key: str, kind, default=_MISSING):
        if key not in self.data:
            if default is _MISSING:
                raise ConfigError(f"{self.path}.{key}: missing required key")
            return default
        value = self.data.pop(key)
        return _coerce(value, kind, f"{self.path}.{key}")

    def close(self) -> None:
        if self.data:
            stray = sorted(self.data)[0]
            raise ConfigError(f"{self.path}.{stray}: unknown key")


def _coerce(value, kind, path: str):
    if kind is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{path}: expected a number")
        return float(value)
    if kind is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{path}: expected an integer")
        return value
    if kind is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{path}: expected a boolean")
        return value
    if kind is str:
        if not isinstance(value, str):
            raise ConfigError(f"{path}: expected a string")
        return value
    if kind is list:
        if not isinstance(value, list):
            raise ConfigError(f"{path}: expected an array")
        return value
    if kind is dict:
        if not isinstance(value, dict):
            raise ConfigError(f"{path}: expected a table")
        return value
    raise AssertionError(kind)


def _string_list(value, path: str, length: Optional[int] = None) -> list[str]:
    items = _coerce(value, list, path)
    out = []
    for i, item in enumerate(items):
        out.append(_coerce(item, str, f"{path}[{i}]"))
    if length is not None and len(out) != length:
        raise ConfigError(f"{path}: expected {length} entries, found {len(out)}")
    return out


def _string_matrix(value, path: str, size: int) -> list[list[str]]:
    rows = _coerce(value, list, path)
    if len(rows) != size:
        raise ConfigError(f"{path}: expected {size} rows, found {len(rows)}")
    return [_string_list(row, f"{path}[{i}]", size) for i, row in enumerate(rows)]


def _parse_checked(text: str, path: str) -> ex.Expression:
    try:
        return ex.parse_expression(text)
    except Exception as err:
        raise ConfigError(f"{path}: {err}") from None


# ---------------------------------------------------------------------------
# Config sections.


@dataclass(frozen=True)
class SolverOptions:
    tol: float = 1e-8
    maxit: int = 200
    a0: float = 1e-3
    accelerate: bool = False
    skip_periods: int = 2


@dataclass(frozen=True)
class GridOptions:
    nx: int = 128
    nt: Optional[int] = None  # None: pick by the max|a| dt <= 2 dx rule


@dataclass(frozen=True)
class ConfigBundle:
    system: Union[LinearSystemSpec, QuasilinearSystemSpec]
    boundary: BoundarySpec
    lyapunov: Optional[LyapunovSpec]
    grid: GridOptions
    solver: SolverOptions
    mms_ustar: Optional[tuple[str, ...]]

    @property
    def is_linear(self) -> bool:
        return isinstance(self.system, LinearSystemSpec)


def _load_linear_system(table: _Table) -> LinearSystemSpec:
    n = table.take("n", int)
    m = table.take("m", int)
    period = table.take("period", float)
    a = _string_list(table.take("a", list), f"{table.path}.a", n)
    b = _string_matrix(table.take("b", list), f"{table.path}.b", n)
    f = _string_list(
        table.take("f", list, default=["0"] * max(n, 1)), f"{table.path}.f", n
    )
    table.close()
    for i, text in enumerate(a):
        _parse_checked(text, f"{table.path}.a[{i}]")
    for i, row in enumerate(b):
        for j, text in enumerate(row):
            _parse_checked(text, f"{table.path}.b[{i}][{j}]")
    for i, text in enumerate(f):
        _parse_checked(text, f"{table.path}.f[{i}]")
    try:
        return LinearSystemSpec.from_strings(
            n=n, m=m, period=period, speeds=a, coupling=b, forcing=f
        )
    except ValueError as err:
        raise ConfigError(f"{table.path}: {err}") from None


def _load_quasilinear_system(table: _Table) -> QuasilinearSystemSpec:
    n = table.take("n", int)
    m = table.take("m", int)
    period = table.take("period", float)
    speeds = _string_list(table.take("A", list), f"{table.path}.A", n)
    rhs = _string_list(table.take("F", list), f"{table.path}.F", n)
    radius = table.take("delta0", float)
    table.close()
    for i, text in enumerate(speeds):
        _parse_checked(text, f"{table.path}.A[{i}]")
    for i, text in enumerate(rhs):
        _parse_checked(text, f"{table.path}.F[{i}]")
    try:
        return QuasilinearSystemSpec.from_strings(
            n=n, m=m, period=period, speeds=speeds, rhs=rhs, radius=radius
        )
    except ValueError as err:
        raise ConfigError(f"{table.path}: {err}") from None


def _load_nonlocal_rows(entries: list, path: str, n: int):
    rows: list[Optional[RowNonlocal]] = [None] * n
    for i, raw in enumerate(entries):
        table = _Table(_coerce(raw, dict, f"{path}[{i}]"), f"{path}[{i}]")
        row_index = table.take("row", int)
        if not 1 <= row_index <= n:
            raise ConfigError(f"{path}[{i}].row: must be between 1 and {n}")
        if rows[row_index - 1] is not None:
            raise ConfigError(f"{path}[{i}].row: duplicate nonlocal row {row_index}")
        response = _parse_checked(table.take("H", str), f"{path}[{i}].H")
        samples = []
        for k, raw_sample in enumerate(table.take("samples", list, default=[])):
            sub = _Table(
                _coerce(raw_sample, dict, f"{path}[{i}].samples[{k}]"),
                f"{path}[{i}].samples[{k}]",
            )
            weight = _parse_checked(sub.take("weight", str), f"{sub.path}.weight")
            component = sub.take("component", int)
            location = sub.take("location", float)
            sub.close()
            try:
                samples.append(
                    PointSample(weight=weight, component=component, location=location)
                )
            except ValueError as err:
                raise ConfigError(f"{sub.path}: {err}") from None
        kernels = []
        for k, raw_kernel in enumerate(table.take("kernels", list, default=[])):
            sub = _Table(
                _coerce(raw_kernel, dict, f"{path}[{i}].kernels[{k}]"),
                f"{path}[{i}].kernels[{k}]",
            )
            kernel = _parse_checked(sub.take("kernel", str), f"{sub.path}.kernel")
            component = sub.take("component", int)
            sub.close()
            try:
                kernels.append(KernelTerm(kernel=kernel, component=component))
            except ValueError as err:
                raise ConfigError(f"{sub.path}: {err}") from None
        table.close()
        try:
            rows[row_index - 1] = RowNonlocal(
                response=response, samples=tuple(samples), kernels=tuple(kernels)
            )
        except ValueError as err:
            raise ConfigError(f"{path}[{i}]: {err}") from None
    return tuple(rows) if any(r is not None for r in rows) else ()


def _load_boundary(table: _Table, n: int) -> BoundarySpec:
    r = _string_matrix(table.take("r", list), f"{table.path}.r", n)
    h = _string_list(
        table.take("h", list, default=["0"] * max(n, 1)), f"{table.path}.h", n
    )
    nonlocal_entries = table.take("nonlocal", list, default=[])
    rows = _load_nonlocal_rows(nonlocal_entries, f"{table.path}.nonlocal", n)
    table.close()
    for i, text in enumerate(h):
        _parse_checked(text, f"{table.path}.h[{i}]")
    try:
        return BoundarySpec.from_strings(reflection=r, h=h, nonlocal_rows=rows)
    except ValueError as err:
        raise ConfigError(f"{table.path}: {err}") from None


def _load_lyapunov(table: _Table, n: int) -> LyapunovSpec:
    entries = _string_list(table.take("V", list), f"{table.path}.V", n)
    raw_margins = table.take("margins", list, default=None)
    table.close()
    for i, text in enumerate(entries):
        _parse_checked(text, f"{table.path}.V[{i}]")
    margins: Sequence[Optional[float]] = (None,) * 4
    if raw_margins is not None:
        if len(raw_margins) != 4:
            raise ConfigError(f"{table.path}.margins: expected 4 entries")
        parsed = []
        for i, value in enumerate(raw_margins):
            number = _coerce(value, float, f"{table.path}.margins[{i}]")
            # zero or negative means: report the attained margin only
            parsed.append(number if number > 0.0 else None)
        margins = parsed
    try:
        return LyapunovSpec.from_strings(entries, margins)
    except ValueError as err:
        raise ConfigError(f"{table.path}: {err}") from None


def load_config(path) -> ConfigBundle:
    """Parse, schema-check, and structurally validate one config file.

    Accepts a path or anything with ``read_bytes`` (bundled resources).
    """
    source = path if hasattr(path, "read_bytes") else Path(path)
    raw_text = source.read_bytes()
    try:
        document = tomllib.loads(raw_text.decode("utf-8"))
    except tomllib.TOMLDecodeError as err:
        raise ConfigError(f"{path}: {err}") from None
    root = _Table(document, "config")
    system_raw = root.take("system", dict, default=None)
    quasilinear_raw = root.take("quasilinear", dict, default=None)
    if (system_raw is None) == (quasilinear_raw is None):
        raise ConfigError("config: provide exactly one of [system] or [quasilinear]")
    if system_raw is not None:
        system = _load_linear_system(_Table(system_raw, "system"))
    else:
        system = _load_quasilinear_system(_Table(quasilinear_raw, "quasilinear"))
    boundary = _load_boundary(
        _Table(root.take("boundary", dict), "boundary"), system.n
    )
    lyapunov_raw = root.take("lyapunov", dict, default=None)
    lyapunov = (
        _load_lyapunov(_Table(lyapunov_raw, "lyapunov"), system.n)
        if lyapunov_raw is not None
        else None
    )
    grid_table = _Table(root.take("grid", dict, default={}), "grid")
    grid = GridOptions(
        nx=grid_table.take("nx", int, default=128),
        nt=grid_table.take("nt", int, default=None),
    )
    grid_table.close()
    if grid.nx < 4:
        raise ConfigError("grid.nx: must be at least 4")
    if grid.nt is not None and grid.nt < 4:
        raise ConfigError("grid.nt: must be at least 4")
    solver_table = _Table(root.take("solver", dict, default={}), "solver")
    solver = SolverOptions(
        tol=solver_table.take("tol", float, default=1e-8),
        maxit=solver_table.take("maxit", int, default=200),
        a0=solver_table.take("a0", float, default=1e-3),
        accelerate=solver_table.take("accelerate", bool, default=False),
        skip_periods=solver_table.take("skip_periods", int, default=2),
    )
    solver_table.close()
    mms_table_raw = root.take("mms", dict, default=None)
    mms_ustar = None
    if mms_table_raw is not None:
        mms_table = _Table(mms_table_raw, "mms")
        ustar = _string_list(mms_table.take("ustar", list), "mms.ustar", system.n)
        mms_table.close()
        for i, text in enumerate(ustar):
            _parse_checked(text, f"mms.ustar[{i}]")
        mms_ustar = tuple(ustar)
    root.close()
    report = validate(system, boundary, a0=solver.a0)
    report.raise_if_failed()
    return ConfigBundle(
        system=system,
        boundary=boundary,
        lyapunov=lyapunov,
        grid=grid,
        solver=solver,
        mms_ustar=mms_ustar,
    )


def resolve_config_path(name: str):
    """A real path is used as-is; bare names fall back to bundled configs."""
    direct = Path(name)
    if direct.exists():
        return direct
    if "/" not in name and not name.endswith(".toml"):
        bundled = resources.files("hyperstrip").joinpath("configs", f"{name}.toml")
        if bundled.is_file():
            return bundled
    raise ConfigError(f"config not found: {name}")


# ---------------------------------------------------------------------------
# Stable serialization.


def _round_floats(obj):
    if isinstance(obj, dict):
        return {key: _round_floats(value) for key, value in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round_floats(item) for item in obj]
    if isinstance(obj, (np.floating, float)):
        value = float(obj)
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return float(f"{value:.17g}")
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return [_round_floats(item) for item in obj.tolist()]
    return obj


def write_json(payload: dict, out_dir: Path, echo: bool) -> Path:
    out_dir.mkdir(parents=True, exist_ok=True)
    text = json.dumps(_round_floats(payload), indent=2) + "\n"
    target = out_dir / "report.json"
    target.write_text(text)
    if echo:
        sys.stdout.write(text)
    return target


def _write_csv(target: Path, header: Sequence[str], rows) -> None:
    target.parent.mkdir(parents=True, exist_ok=True)
    lines = [",".join(header)]
    for row in rows:
        lines.append(
            ",".join(f"{v:.17g}" if isinstance(v, float) else str(v) for v in row)
        )
    target.write_text("\n".join(lines) + "\n")


def write_solution_csv(solution, out_dir: Path) -> Path:
    xs = solution.xs
    ts = solution.ts
    n = solution.ncomp
    header = ["x", "t"] + [f"u{k + 1}" for k in range(n)]

    def rows():
        for k, t in enumerate(ts):
            for i, x in enumerate(xs):
                yield [float(x), float(t)] + [
                    float(solution.values[k, i, c]) for c in range(n)
                ]

    target = out_dir / "solution.csv"
    _write_csv(target, header, rows())
    return target


def write_norms_csv(record, out_dir: Path) -> Path:
    target = out_dir / "norms.csv"
    _write_csv(
        target,
        ["t", "l2_norm", "sup_norm"],
        (
            [float(record.times[k]), float(record.l2[k]), float(record.sup[k])]
            for k in range(len(record.times))
        ),
    )
    return target


def write_snapshot_csv(record, t: float, out_dir: Path, index: int) -> Path:
    snapshot = record.snapshot_at(t)
    xs = np.linspace(0.0, 1.0, snapshot.shape[0])
    header = ["x"] + [f"u{k + 1}" for k in range(snapshot.shape[1])]
    target = out_dir / f"snapshot_{index}.csv"
    _write_csv(
        target,
        header,
        (
            [float(xs[i])] + [float(v) for v in snapshot[i]]
            for i in range(len(xs))
        ),
    )
    return target


# ---------------------------------------------------------------------------
# Commands.


def _resolve_nt(bundle: ConfigBundle, nx: int, nt_flag: Optional[int]) -> int:
    if nt_flag is not None:
        return nt_flag
    if bundle.grid.nt is not None:
        return bundle.grid.nt
    if bundle.is_linear:
        system = bundle.system.compile(a0=bundle.solver.a0)
    else:
        from .model import GridFunction

        rest = GridFunction.zeros(8, 8, bundle.system.n, bundle.system.period)
        system = bundle.system.freeze(rest, bundle.solver.a0)
    return default_time_steps(system, nx)


def _cmd_certify(bundle: ConfigBundle, args) -> int:
    if not bundle.is_linear:
        raise ConfigError("certify needs a linear [system] section")
    nx = args.nx or bundle.grid.nx
    nt = _resolve_nt(bundle, nx, args.nt)
    report = certify(
        bundle.system,
        bundle.boundary,
        bundle.lyapunov,
        a0=bundle.solver.a0,
        nx=nx,
        nt=nt,
        run_validation=False,  # load_config already validated
    )
    for line in report.summary_lines():
        print(line)
    write_json(report.as_dict(), Path(args.out), args.json)
    return 0 if report.passed else 1


def _solve_report_payload(report, extra: Optional[dict] = None) -> dict:
    payload = report.as_dict()
    payload["solution_sup"] = report.solution.sup_norm()
    if extra:
        payload.update(extra)
    return payload


def _cmd_solve_linear(bundle: ConfigBundle, args) -> int:
    if not bundle.is_linear:
        raise ConfigError("solve-linear needs a linear [system] section")
    nx = args.nx or bundle.grid.nx
    nt = _resolve_nt(bundle, nx, args.nt)
    initial = None
    if args.seed is not None:
        # seeded random initial guess, the uniqueness witness knob
        rng = np.random.default_rng(args.seed)
        initial = rng.uniform(-1.0, 1.0, (nx + 1, bundle.system.n))
    report = solve_linear_periodic(
        bundle.system.compile(a0=bundle.solver.a0),
        bundle.boundary.compile(bundle.system.period),
        nx,
        nt,
        tol=args.tol or bundle.solver.tol,
        maxit=args.maxit or bundle.solver.maxit,
        initial=initial,
        accelerate=bundle.solver.accelerate,
    )
    out = Path(args.out)
    extra: dict = {"nx": nx, "nt": nt}
    if args.seed is not None:
        extra["seed"] = args.seed
    write_json(_solve_report_payload(report, extra), out, args.json)
    write_solution_csv(report.solution, out)
    if not report.converged:
        print("did not converge", file=sys.stderr)
        return 1
    print(
        f"converged in {report.iterations} iterations, "
        f"operator residual {report.residual_operator:.3e}"
    )
    return 0


def _cmd_solve_quasilinear(bundle: ConfigBundle, args) -> int:
    if bundle.is_linear:
        raise ConfigError("solve-quasilinear needs a [quasilinear] section")
    nx = args.nx or bundle.grid.nx
    nt = _resolve_nt(bundle, nx, args.nt)
    report = solve_quasilinear(
        bundle.system,
        bundle.boundary,
        nx,
        nt,
        tol_outer=args.tol or bundle.solver.tol,
        maxit_inner=args.maxit or bundle.solver.maxit,
        a0=bundle.solver.a0,
    )
    out = Path(args.out)
    write_json(_solve_report_payload(report, {"nx": nx, "nt": nt}), out, args.json)
    write_solution_csv(report.solution, out)
    if not report.converged:
        print("outer iteration did not converge", file=sys.stderr)
        return 1
    print(
        f"converged in {report.iterations} outer passes, "
        f"solution sup {report.solution.sup_norm():.3e}"
    )
    return 0


def _cmd_simulate(bundle: ConfigBundle, args) -> int:
    if not bundle.is_linear:
        raise ConfigError("simulate needs a linear [system] section")
    nx = args.nx or bundle.grid.nx
    nt = _resolve_nt(bundle, nx, args.nt)
    system = bundle.system.compile(a0=bundle.solver.a0)
    boundary = bundle.boundary.compile(bundle.system.period)
    period = bundle.system.period
    t_end = args.t_end if args.t_end is not None else 8.0 * period
    dt = period / nt
    steps = max(1, round(t_end / dt))
    t_end = steps * dt
    rng = np.random.default_rng(args.seed)
    phi = rng.uniform(-1.0, 1.0, size=(nx + 1, system.n))
    record = simulate(system, boundary, phi, 0.0, t_end, nt)
    out = Path(args.out)
    payload = {
        "nx": nx,
        "nt": nt,
        "t_end": t_end,
        "seed": args.seed,
        "final_l2": float(record.l2[-1]),
        "final_sup": float(record.sup[-1]),
    }
    skip = bundle.solver.skip_periods
    if (len(record.times) - 1) // round(period / dt) >= skip + 3:
        estimate = fit_decay(record, skip_periods=skip)
        payload["decay"] = {
            "rate": estimate.rate,
            "overshoot": estimate.overshoot,
            "period_factors": list(estimate.period_factors),
            "fit_residual": estimate.fit_residual,
            "flushed": estimate.flushed,
        }
        print(
            "decayed to machine zero"
            if estimate.flushed
            else f"decay rate {estimate.rate:.6g}, overshoot {estimate.overshoot:.6g}"
        )
    else:
        print("horizon too short for a decay fit; norms recorded")
    write_json(payload, out, args.json)
    write_norms_csv(record, out)
    for index, t in enumerate(args.snapshot_at or []):
        write_snapshot_csv(record, t, out, index)
    return 0


def _cmd_mms(bundle: ConfigBundle, args) -> int:
    if not bundle.is_linear:
        raise ConfigError("mms needs a linear [system] section")
    if bundle.mms_ustar is None:
        raise ConfigError("mms needs an [mms] section with ustar")
    grids = _parse_grids(args.grids) if args.grids else [(16, 32), (32, 64), (64, 128)]
    study = mms_study(
        bundle.system,
        bundle.boundary,
        bundle.mms_ustar,
        grids=grids,
        tol=args.tol or min(bundle.solver.tol, 1e-10),
        maxit=args.maxit or bundle.solver.maxit,
        a0=bundle.solver.a0,
    )
    out = Path(args.out)
    write_json(study.as_dict(), out, args.json)
    _write_csv(
        out / "convergence.csv",
        ["nx", "nt", "sup_error", "residual_operator", "iterations", "time_curvature"],
        (
            [
                row.nx,
                row.nt,
                row.sup_error,
                row.residual_operator,
                row.iterations,
                row.time_curvature,
            ]
            for row in study.rows
        ),
    )
    for row in study.rows:
        print(f"nx={row.nx} nt={row.nt}: sup error {row.sup_error:.6e}")
    if study.orders:
        print("observed orders: " + ", ".join(f"{o:.3f}" for o in study.orders))
    return 0


def _parse_grids(text: str) -> list[tuple[int, int]]:
    grids = []
    for chunk in text.split(","):
        parts = chunk.strip().split("x")
        if len(parts) != 2:
            raise ConfigError(f"--grids: malformed entry {chunk!r}, expected NXxNT")
        try:
            grids.append((int(parts[0]), int(parts[1])))
        except ValueError:
            raise ConfigError(f"--grids: malformed entry {chunk!r}") from None
    return grids


def _cmd_perturb(bundle: ConfigBundle, args) -> int:
    if not bundle.is_linear:
        raise ConfigError("perturb needs a linear [system] section")
    nx = args.nx or bundle.grid.nx
    nt = _resolve_nt(bundle, nx, args.nt)
    study = perturb_study(
        bundle.system,
        bundle.boundary,
        gamma=args.gamma,
        samples=args.samples,
        seed=args.seed,
        nx=nx,
        nt=nt,
        tol=args.tol or bundle.solver.tol,
        maxit=args.maxit or bundle.solver.maxit,
        a0=bundle.solver.a0,
    )
    write_json(study.as_dict(), Path(args.out), args.json)
    converged = sum(1 for s in study.samples if s.converged)
    print(
        f"{converged}/{len(study.samples)} samples converged, "
        f"max deviation {study.max_deviation:.6g}"
    )
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hyperstrip",
        description=(
            "Periodic solutions and stability certificates for 1D hyperbolic "
            "systems with reflection boundary conditions"
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("config", help="config path or bundled config name")
        p.add_argument("--nx", type=int, default=None, help="spatial cells override")
        p.add_argument("--nt", type=int, default=None, help="steps per period override")
        p.add_argument("--tol", type=float, default=None, help="tolerance override")
        p.add_argument("--maxit", type=int, default=None, help="iteration cap override")
        p.add_argument("--out", default=".", help="output directory (default: .)")
        p.add_argument(
            "--json", action="store_true", help="echo report.json to stdout"
        )

    common(sub.add_parser("certify", help="check dissipativity and energy conditions"))
    p_lin = sub.add_parser("solve-linear", help="periodic solution, linear system")
    common(p_lin)
    p_lin.add_argument(
        "--seed",
        type=int,
        default=None,
        help="start from a seeded random guess instead of zero",
    )
    common(
        sub.add_parser("solve-quasilinear", help="periodic solution, quasilinear system")
    )
    p_sim = sub.add_parser("simulate", help="march random initial data, fit decay")
    common(p_sim)
    p_sim.add_argument("--t-end", type=float, default=None, help="horizon (default 8T)")
    p_sim.add_argument("--seed", type=int, default=42, help="initial-data seed")
    p_sim.add_argument(
        "--snapshot-at",
        type=float,
        action="append",
        default=None,
        metavar="T",
        help="write snapshot_<k>.csv at this record time (repeatable)",
    )
    p_mms = sub.add_parser("mms", help="manufactured-solution convergence study")
    common(p_mms)
    p_mms.add_argument(
        "--grids", default=None, help="comma list of NXxNT pairs, e.g. 16x32,32x64"
    )
    p_pert = sub.add_parser("perturb", help="random coefficient perturbation study")
    common(p_pert)
    p_pert.add_argument("--gamma", type=float, required=True, help="amplitude")
    p_pert.add_argument("--samples", type=int, default=8, help="sample count")
    p_pert.add_argument("--seed", type=int, default=42, help="perturbation seed")
    return parser


_COMMANDS = {
    "certify": _cmd_certify,
    "solve-linear": _cmd_solve_linear,
    "solve-quasilinear": _cmd_solve_quasilinear,
    "simulate": _cmd_simulate,
    "mms": _cmd_mms,
    "perturb": _cmd_perturb,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        path = resolve_config_path(args.config)
        bundle = load_config(path)
    except (ConfigError, ValidationError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    try:
        return _COMMANDS[args.command](bundle, args)
    except ConfigError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except RadiusError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
