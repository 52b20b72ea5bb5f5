"""Grid convergence of the periodic solver.

Two ladders: the closed-form transport problem (error against
sin(t - x)) and a manufactured solution on the demo coefficients
(error against the prescribed field).  Prints errors, observed
orders, and operator residuals per grid.
"""

import argparse
import math

import numpy as np

from hyperstrip.cli import load_config, resolve_config_path
from hyperstrip.periodic import mms_study, solve_linear_periodic


def parse_ladder(text: str) -> list[tuple[int, int]]:
    grids = []
    for chunk in text.split(","):
        nx, nt = chunk.strip().split("x")
        grids.append((int(nx), int(nt)))
    return grids


def transport_table(grids: list[tuple[int, int]]) -> None:
    bundle = load_config(resolve_config_path("transport"))
    system = bundle.system.compile(a0=bundle.solver.a0)
    boundary = bundle.boundary.compile(bundle.system.period)
    errors = []
    print("== transport vs sin(t - x) ==")
    for nx, nt in grids:
        report = solve_linear_periodic(system, boundary, nx, nt)
        xs = np.linspace(0.0, 1.0, nx + 1)
        ts = np.arange(nt) * (bundle.system.period / nt)
        exact = np.sin(ts[:, None] - xs[None, :])
        err = float(np.max(np.abs(report.solution.values[..., 0] - exact)))
        errors.append(err)
        order = "" if len(errors) < 2 else f"  order {math.log2(errors[-2] / err):.3f}"
        print(f"  {nx:4d} x {nt:4d}: sup error {err:.3e}{order}")


def mms_table(grids: list[tuple[int, int]]) -> None:
    bundle = load_config(resolve_config_path("example1"))
    study = mms_study(
        bundle.system,
        bundle.boundary,
        bundle.mms_ustar,
        grids,
        a0=bundle.solver.a0,
    )
    print("== manufactured solution on the demo system ==")
    for row in study.rows:
        print(
            f"  {row.nx:4d} x {row.nt:4d}: sup error {row.sup_error:.3e}"
            f"  operator residual {row.residual_operator:.3e}"
            f"  ({row.iterations} iterations)"
        )
    orders = ", ".join(f"{o:.3f}" for o in study.orders)
    print(f"  observed orders: {orders}")


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument(
        "--grids",
        default="16x32,32x64,64x128",
        help="comma-separated nx x nt ladder",
    )
    args = parser.parse_args()
    grids = parse_ladder(args.grids)
    transport_table(grids)
    mms_table(grids)


if __name__ == "__main__":
    main()
