"""Slow reference implementations used to cross-check the solver.

Nothing here reads :class:`~collbreak.kernels.KernelTables` except
:func:`rk4_semidiscrete`, which exists to separate time error from spatial
error. Fragment integrals are recomputed with adaptive quadrature (or atom
counting) instead of the closed forms and fixed rules used by the tables.
"""

from __future__ import annotations

import warnings

import numpy as np
from scipy import integrate

from .kernels import (AtomicBreakage, BreakageDistribution, CollisionKernel,
                      KernelTables)
from .mesh import Mesh, State
from .solver import rhs


def _density_fn(b: BreakageDistribution):
    if isinstance(b, AtomicBreakage):
        return None
    if hasattr(b, "density"):
        return lambda x, y, z: float(b.density(x, y, z))
    raise TypeError(f"no pointwise density for {type(b).__name__}")


def oracle_frag_integral(b: BreakageDistribution, lower: float, upper: float,
                         y: float, z: float) -> float:
    """Adaptive-quadrature (or atom counting) ``int_lower^upper b(x, y, z) dx``."""
    if isinstance(b, AtomicBreakage):
        total = 0.0
        for f, w in b.atoms:
            if lower < f * y <= upper:
                total += w
        return total
    hi = min(upper, y)
    if hi <= lower:
        return 0.0
    dens = _density_fn(b)
    val, _ = integrate.quad(dens, lower, hi, args=(y, z), epsabs=1e-14,
                            epsrel=1e-13, limit=200)
    return val


def brute_force_step(state: State, mesh: Mesh, kernel: CollisionKernel,
                     b: BreakageDistribution, dt: float) -> State:
    """Explicit Euler step by direct triple loop over ``(i, j >= i, l)``."""
    if state.mesh != mesh:
        raise ValueError("state does not live on the given mesh")
    I = mesh.cells
    e = [float(v) for v in mesh.edges]
    x = [0.5 * (e[i] + e[i + 1]) for i in range(I)]
    dx = [e[i + 1] - e[i] for i in range(I)]
    c = [float(v) for v in state.density]
    out = []
    for i in range(I):
        birth = 0.0
        for l in range(I):
            for j in range(i, I):
                if c[j] == 0.0 or c[l] == 0.0:
                    continue
                p = x[i] if j == i else e[i + 1]
                frag = oracle_frag_integral(b, e[i], p, x[j], x[l])
                if frag == 0.0:
                    continue
                k = float(kernel(x[j], x[l]))
                birth += k * c[j] * c[l] * dx[j] * dx[l] * frag
        death = 0.0
        for j in range(I):
            death += float(kernel(x[i], x[j])) * c[i] * c[j] * dx[j]
        out.append(c[i] + dt * birth / dx[i] - dt * death)
    return State(mesh, state.time + dt, np.array(out))


def rk4_semidiscrete(ic: State, tables: KernelTables, t_end: float,
                     substeps: int) -> State:
    """Classical RK4 on ``dc/dt = B(c) - D(c)`` from ``ic.time`` to ``t_end``."""
    if substeps < 1:
        raise ValueError("substeps must be >= 1")
    span = t_end - ic.time
    if span <= 0:
        return ic
    h = span / substeps
    c = np.array(ic.density, dtype=float)
    warned = False
    for _ in range(substeps):
        k1 = rhs(c, tables)
        k2 = rhs(c + 0.5 * h * k1, tables)
        k3 = rhs(c + 0.5 * h * k2, tables)
        k4 = rhs(c + h * k3, tables)
        c = c + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        if not warned and np.any(c < 0):
            warnings.warn("RK4 produced negative densities", RuntimeWarning, stacklevel=2)
            warned = True
    return State(ic.mesh, t_end, c)


def telescoped_fragments(b: BreakageDistribution, lower: float, y: float,
                         z: float) -> float:
    """Independent value of ``int_lower^y b(x, y, z) dx`` (sum of a table column)."""
    return oracle_frag_integral(b, lower, y, y, z)
