"""Moments, EOC and the mesh refinement study for the builtin test cases."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigError
from .kernels import (AtomicBreakage, BreakageDistribution, CollisionKernel,
                      ConstantKernel, PowerLawBreakage, SumKernel, precompute_tables)
from .mesh import State, cell_average_projection, make_uniform_mesh
from .solver import SolverConfig, StabilityParams, auto_dt, simulate


def moment(state: State, j: int) -> float:
    """Discrete ``j``-th moment ``sum_i x_i**j c_i dx_i``."""
    if j < 0:
        raise ValueError("moment order must be >= 0")
    m = state.mesh
    return float(np.sum(m.centers**j * state.density * m.widths))


def total_number(state: State) -> float:
    return moment(state, 0)


def l1_norm(state: State) -> float:
    return moment(state, 0)


@dataclass(frozen=True)
class MomentSeries:
    times: np.ndarray
    orders: tuple
    values: np.ndarray  # shape (len(times), len(orders))

    def __getitem__(self, order: int) -> np.ndarray:
        return self.values[:, self.orders.index(order)]


def moment_series(trajectory: Sequence[State], orders=(0, 1, 2)) -> MomentSeries:
    orders = tuple(orders)
    times = np.array([s.time for s in trajectory])
    vals = np.array([[moment(s, j) for j in orders] for s in trajectory])
    return MomentSeries(times, orders, vals.reshape(len(trajectory), len(orders)))


def eoc_from_errors(e_coarse: float, e_fine: float) -> float:
    """Experimental order of convergence ``log2(e_coarse / e_fine)``."""
    if not (e_coarse > 0 and e_fine > 0):
        raise ArithmeticError(f"EOC undefined for errors ({e_coarse!r}, {e_fine!r})")
    return math.log(e_coarse / e_fine) / math.log(2.0)


# ---------------------------------------------------------------------------
# test cases


def exponential_ic(x):
    return np.exp(-np.asarray(x, dtype=float))


@dataclass(frozen=True)
class TestCase:
    name: str
    kernel: CollisionKernel
    breakage: BreakageDistribution
    initial: Callable = field(default=exponential_ic, compare=False)
    xmin: float = 1e-3
    xmax: float = 10.0
    t_end: float = 0.2

    __test__ = False  # not a pytest class

    def stability_params(self, ic: State, theta: float = 0.5) -> StabilityParams:
        return StabilityParams(
            lam=self.kernel.stability_lambda(self.xmax),
            R=self.xmax,
            T=self.t_end,
            b_sup=self.breakage.sup(self.xmin, self.xmax),
            c_in_l1=l1_norm(ic),
            m1_in=moment(ic, 1),
            theta=theta,
        )


def builtin_case(name: str) -> TestCase:
    """The three reference configurations: exp(-x) on [1e-3, 10] up to t=0.2."""
    if name == "case1":
        return TestCase("case1", ConstantKernel(1.0), PowerLawBreakage(0.0))
    if name == "case2":
        return TestCase("case2", SumKernel(), PowerLawBreakage(0.0))
    if name == "case3":
        return TestCase("case3", SumKernel(), AtomicBreakage(((0.4, 1.0), (0.6, 1.0))))
    raise ConfigError(f"unknown builtin test case {name!r}", field="case.builtin")


BUILTIN_CASES = ("case1", "case2", "case3")


# ---------------------------------------------------------------------------
# convergence study


@dataclass(frozen=True)
class ConvergenceRow:
    cells: int
    total_number: float
    error: float | None = None
    eoc: float | None = None


@dataclass
class ConvergenceReport:
    rows: list
    metadata: dict = field(default_factory=dict)

    def eocs(self) -> list:
        return [r.eoc for r in self.rows if r.eoc is not None]

    def errors(self) -> list:
        return [r.error for r in self.rows if r.error is not None]


def check_doubling(cell_counts: Sequence[int]) -> list:
    counts = [int(c) for c in cell_counts]
    if len(counts) < 2:
        raise ConfigError("a convergence study needs at least two meshes", field="mesh.cells")
    for a, b in zip(counts, counts[1:]):
        if b != 2 * a:
            raise ConfigError(
                f"cell counts must double between meshes, got {a} -> {b}", field="mesh.cells"
            )
    if counts[0] < 1:
        raise ConfigError("cell counts must be positive", field="mesh.cells")
    return counts


def restrict_to_coarse(fine: State, coarse_cells: int) -> np.ndarray:
    """Cell averages of ``fine`` on the mesh with half as many cells."""
    w = fine.mesh.widths
    mass = (fine.density * w).reshape(coarse_cells, -1).sum(axis=1)
    return mass / w.reshape(coarse_cells, -1).sum(axis=1)


def _run_one(case: TestCase, cells: int, dt: float, check_invariants: bool,
             quad_order: int):
    mesh = make_uniform_mesh(case.xmin, case.xmax, cells)
    ic = cell_average_projection(case.initial, mesh, quad_order)
    tables = precompute_tables(mesh, case.kernel, case.breakage)
    cfg = SolverConfig(dt=dt, t_end=case.t_end, check_invariants=check_invariants,
                       record_every=10**9)
    return simulate(ic, tables, cfg)[-1]


def resolve_study_dt(case: TestCase, dt, cells: int, theta: float = 0.5) -> float:
    if dt == "auto" or dt is None:
        mesh = make_uniform_mesh(case.xmin, case.xmax, cells)
        ic = cell_average_projection(case.initial, mesh)
        return auto_dt(case.t_end, case.stability_params(ic, theta))
    return float(dt)


def convergence_study(case: TestCase, cell_counts: Sequence[int], dt="auto", *,
                      dt_policy: str = "shared", metric: str = "total_number",
                      theta: float = 0.5, check_invariants: bool = True,
                      quad_order: int = 4, max_workers: int = 1) -> ConvergenceReport:
    """Run ``case`` on doubling uniform meshes and tabulate errors and EOC.

    Parameters
    ----------
    dt : float or "auto"
        Reference step. ``"auto"`` derives it from the stability constant on
        the finest mesh (falling back to 1e-3 when that constant is infinite).
    dt_policy : {"shared", "proportional"}
        ``shared`` runs every mesh with the same step; ``proportional`` scales
        the step with the cell width, ``dt_I = dt * I_finest / I``.
    metric : {"total_number", "l1"}
        ``total_number`` compares scalar particle numbers of successive meshes.
        ``l1`` compares densities after restricting the finer one by cell
        aggregation (diagnostic only).
    """
    counts = check_doubling(cell_counts)
    if dt_policy not in ("shared", "proportional"):
        raise ConfigError(f"unknown dt policy {dt_policy!r}", field="time.dt_policy")
    if metric not in ("total_number", "l1"):
        raise ConfigError(f"unknown error metric {metric!r}", field="metric")
    base_dt = resolve_study_dt(case, dt, counts[-1], theta)
    dts = [base_dt if dt_policy == "shared" else base_dt * counts[-1] / c for c in counts]

    def job(k):
        return _run_one(case, counts[k], dts[k], check_invariants, quad_order)

    if max_workers > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            finals = list(pool.map(job, range(len(counts))))
    else:
        finals = [job(k) for k in range(len(counts))]

    numbers = [total_number(s) for s in finals]
    errors: list = [None]
    for k in range(1, len(counts)):
        if metric == "total_number":
            errors.append(abs(numbers[k - 1] - numbers[k]))
        else:
            coarse = finals[k - 1]
            fine = restrict_to_coarse(finals[k], counts[k - 1])
            errors.append(float(np.sum(np.abs(coarse.density - fine) * coarse.mesh.widths)))
    rows = []
    for k, c in enumerate(counts):
        eoc = None
        if k >= 2 and errors[k - 1] and errors[k]:
            eoc = eoc_from_errors(errors[k - 1], errors[k])
        rows.append(ConvergenceRow(c, numbers[k], errors[k], eoc))
    meta = {
        "test_case": case.name,
        "kernel": case.kernel.to_dict(),
        "breakage": case.breakage.to_dict(),
        "domain": [case.xmin, case.xmax],
        "t_end": case.t_end,
        "dt_policy": dt_policy,
        "dt": dts,
        "metric": metric,
    }
    return ConvergenceReport(rows, meta)
