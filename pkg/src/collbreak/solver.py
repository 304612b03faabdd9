"""Explicit Euler finite volume stepping and its stability restriction."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Union

import numpy as np

from .errors import InvariantViolation, StabilityError, StabilityViolation
from .kernels import KernelTables
from .mesh import State

logger = logging.getLogger(__name__)

#: step used by ``dt="auto"`` when the stability constant is infinite
FALLBACK_DT = 1e-3


@dataclass(frozen=True)
class StabilityParams:
    """Inputs of the stability constant ``C(R, T)``.

    Attributes
    ----------
    lam : float
        Kernel growth scale.
    R : float
        Right edge of the truncated domain.
    T : float
        Time horizon.
    b_sup : float
        Supremum of the breakage distribution on the domain (may be inf).
    c_in_l1 : float
        L1 norm of the initial density.
    m1_in : float
        Initial first moment.
    theta : float
        Safety factor in (0, 1).
    """

    lam: float
    R: float
    T: float
    b_sup: float
    c_in_l1: float
    m1_in: float
    theta: float = 0.5

    def __post_init__(self):
        for name in ("lam", "R", "b_sup", "c_in_l1", "m1_in"):
            v = getattr(self, name)
            if not v > 0:
                raise ValueError(f"{name} must be positive, got {v!r}")
        if not self.T >= 0:
            raise ValueError(f"T must be >= 0, got {self.T!r}")
        if not 0 < self.theta < 1:
            raise ValueError(f"theta must lie in (0, 1), got {self.theta!r}")

    def growth_rate(self) -> float:
        """Exponent rate in the L1 bound, ``2 lam R b_sup M1``."""
        return 2.0 * self.lam * self.R * self.b_sup * self.m1_in

    def l1_bound(self, t: float) -> float:
        """Upper bound on ``sum_i c_i dx_i`` at time ``t``."""
        rate = self.growth_rate()
        try:
            return self.c_in_l1 * math.exp(rate * t)
        except OverflowError:
            return math.inf


def stability_constant(p: StabilityParams) -> float:
    """``lam * (2 R |c_in|_1 exp(2 lam R |b|_inf M1 T) + M1)``."""
    if math.isinf(p.b_sup):
        raise StabilityError("b_sup is infinite (atomic breakage?); no finite stability constant")
    expo = p.growth_rate() * p.T
    try:
        growth = math.exp(expo)
    except OverflowError:
        raise StabilityError(
            f"stability constant overflows (exponent {expo:.4g}); "
            "truncate the domain (raise xmin or lower xmax) or shorten the horizon"
        ) from None
    C = p.lam * (2.0 * p.R * p.c_in_l1 * growth + p.m1_in)
    if not math.isfinite(C):
        raise StabilityError("stability constant is not finite; truncate the domain")
    return C


def max_stable_dt(C: float, theta: float) -> float:
    """Largest ``dt`` with ``C * dt <= theta``."""
    if not C > 0:
        raise ValueError("C must be positive")
    if not 0 < theta < 1:
        raise ValueError("theta must lie in (0, 1)")
    return theta / C


def auto_dt(t_end: float, p: StabilityParams | None) -> float:
    """Step length dividing ``t_end`` evenly and respecting ``C dt <= theta``.

    Falls back to :data:`FALLBACK_DT` when the stability constant is infinite
    or cannot be evaluated.
    """
    if p is None:
        raise ValueError("dt='auto' requires stability parameters")
    try:
        C = stability_constant(p)
    except StabilityError as exc:
        logger.warning("%s; using dt=%g", exc, FALLBACK_DT)
        return FALLBACK_DT
    if t_end <= 0:
        return max_stable_dt(C, p.theta)
    n = math.ceil(t_end * C / p.theta)
    return t_end / max(n, 1)


@dataclass(frozen=True)
class SolverConfig:
    dt: Union[float, str]
    t_end: float
    check_invariants: bool = True
    record_every: int = 1
    clamp_negative: bool = False
    naive: bool = False

    def __post_init__(self):
        if isinstance(self.dt, str):
            if self.dt != "auto":
                raise ValueError(f"dt must be a positive number or 'auto', got {self.dt!r}")
        elif not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt!r}")
        if not self.t_end >= 0:
            raise ValueError(f"t_end must be >= 0, got {self.t_end!r}")
        if self.record_every < 1:
            raise ValueError("record_every must be >= 1")


def rhs(density: np.ndarray, tables: KernelTables, naive: bool = False) -> np.ndarray:
    """Semi-discrete birth minus death rate for every cell."""
    w = tables.mesh.widths
    K = tables.k_table
    cw = density * w
    inner = K @ cw  # sum_l K_{j,l} c_l dx_l
    death = density * inner
    if naive:
        pair = K * np.outer(cw, cw)
        birth = np.einsum("ijl,jl->i", tables.frag3(), pair) / w
    elif tables.z_independent:
        birth = (tables.frag_table @ (inner * cw)) / w
    else:
        pair = K * np.outer(cw, cw)
        birth = np.einsum("ijl,jl->i", tables.frag_table, pair) / w
    return birth - death


def step(state: State, tables: KernelTables, dt: float, *, naive: bool = False,
         check_invariants: bool = True, clamp_negative: bool = False) -> State:
    """One explicit Euler step of the finite volume scheme.

    Raises
    ------
    StabilityViolation
        If a density becomes negative while ``check_invariants`` is on and
        ``clamp_negative`` is off.
    """
    if state.mesh != tables.mesh:
        raise ValueError("state and tables live on different meshes")
    if dt < 0:
        raise ValueError("dt must be >= 0")
    if dt == 0:
        return state
    c = state.density
    r = rhs(c, tables, naive=naive)
    new = c + dt * r
    neg = new < 0
    if neg.any():
        if clamp_negative:
            new = np.where(neg, 0.0, new)
        elif check_invariants:
            cell = int(np.argmax(neg))
            limit = float(np.min(c[neg] / -r[neg]))
            raise StabilityViolation(
                f"negative density {new[cell]:.3e} in cell {cell} at t={state.time + dt:.6g}; "
                f"reduce dt below {limit:.4g}",
                cell=cell,
                suggested_dt=limit,
            )
    return State(state.mesh, state.time + dt, new)


def _time_grid(t0: float, t_end: float, dt: float) -> np.ndarray:
    span = t_end - t0
    n = max(1, math.ceil(span / dt - 1e-9))
    times = t0 + dt * np.arange(n + 1)
    times[-1] = t_end
    return times


def simulate(ic: State, tables: KernelTables, cfg: SolverConfig,
             p: StabilityParams | None = None) -> list[State]:
    """Integrate from ``ic.time`` to ``cfg.t_end``.

    The last step is shortened to land exactly on ``t_end``. Snapshots are
    kept every ``cfg.record_every`` steps; the final state is always kept.
    """
    dt = auto_dt(cfg.t_end - ic.time, p) if cfg.dt == "auto" else float(cfg.dt)
    if cfg.t_end <= ic.time:
        return [ic]
    times = _time_grid(ic.time, cfg.t_end, dt)
    bound_check = cfg.check_invariants and p is not None and math.isfinite(p.b_sup)
    traj = [ic]
    state = ic
    for k in range(1, times.size):
        h = times[k] - times[k - 1]
        try:
            state = step(state, tables, h, naive=cfg.naive,
                         check_invariants=cfg.check_invariants,
                         clamp_negative=cfg.clamp_negative)
        except StabilityViolation as exc:
            raise StabilityViolation(f"step {k} (t={times[k - 1]:.6g}): {exc}",
                                     cell=exc.cell, suggested_dt=exc.suggested_dt,
                                     step=k, time=float(times[k - 1])) from exc
        state = State(state.mesh, float(times[k]), state.density)
        if bound_check:
            l1 = float(np.sum(state.density * state.mesh.widths))
            bound = p.l1_bound(state.time - ic.time)
            if l1 > bound * (1 + 1e-12):
                raise InvariantViolation(
                    f"step {k} (t={state.time:.6g}): L1 norm {l1:.6g} exceeds bound {bound:.6g}"
                )
        if k % cfg.record_every == 0 or k == times.size - 1:
            traj.append(state)
    return traj
