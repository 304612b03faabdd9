"""Collision kernels, breakage distributions and precomputed kernel tables.

Kernels and distributions are small immutable objects evaluated on numpy
arrays. :func:`precompute_tables` turns them into the midpoint tables used
by the time stepper:

* ``k_table[j, l] = K(x_j, x_l)``
* ``frag_table[i, j(, l)]`` = number of daughters landing in
  ``]x_{i-1/2}, p_j^i]`` when the parent sits in cell ``j`` (partner in ``l``),
  with ``p_j^i = x_i`` if ``i == j`` and ``x_{i+1/2}`` otherwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import integrate

from .errors import EvaluationError
from .mesh import Mesh

FRAG_QUAD_ORDER = 8


# ---------------------------------------------------------------------------
# collision kernels


class CollisionKernel:
    """Symmetric non-negative collision rate ``K(x, y)``."""

    name = "kernel"

    def __call__(self, x, y):
        raise NotImplementedError

    def stability_lambda(self, xmax: float) -> float:
        """Scale ``lam`` with ``sum_j K(x_i, x_j) c_j dx_j <= lam (R*L1 + M1)``
        on ``]0, xmax]``; this is the factor entering the stability constant."""
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class ConstantKernel(CollisionKernel):
    k0: float = 1.0
    name = "constant"

    def __post_init__(self):
        if not (math.isfinite(self.k0) and self.k0 >= 0):
            raise ValueError(f"k0 must be finite and >= 0, got {self.k0!r}")

    def __call__(self, x, y):
        x, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
        return np.full(x.shape, float(self.k0))

    def stability_lambda(self, xmax):
        # k0 * L1 <= lam * R * L1 needs lam >= k0 / R; k0 * max(1, 1/R) covers both sides of R = 1
        return float(self.k0) * max(1.0, 1.0 / xmax)

    def to_dict(self):
        return {"type": "constant", "k0": self.k0}


@dataclass(frozen=True)
class SumKernel(CollisionKernel):
    name = "sum"

    def __call__(self, x, y):
        return np.asarray(x, float) + np.asarray(y, float)

    def stability_lambda(self, xmax):
        return 1.0

    def to_dict(self):
        return {"type": "sum"}


@dataclass(frozen=True)
class ProductKernel(CollisionKernel):
    lam: float = 1.0
    name = "product"

    def __post_init__(self):
        if not (math.isfinite(self.lam) and self.lam > 0):
            raise ValueError(f"lam must be finite and > 0, got {self.lam!r}")

    def __call__(self, x, y):
        return self.lam * (np.asarray(x, float) * np.asarray(y, float))

    def stability_lambda(self, xmax):
        return self.lam * max(1.0, xmax)

    def to_dict(self):
        return {"type": "product", "lam": self.lam}


@dataclass(frozen=True)
class PiecewiseH2Kernel(CollisionKernel):
    """Four-branch kernel, split at volume 1.

    ``lam*x*y`` on (0,1)^2, ``lam*x*y**-alpha`` for x < 1 <= y (and its mirror),
    ``lam*(x**zeta*y**eta + x**eta*y**zeta)`` when both are >= 1. A coordinate
    equal to 1 takes the ``>= 1`` branch.
    """

    lam: float = 1.0
    alpha: float = 0.0
    zeta: float = 0.5
    eta: float = 0.5
    name = "h2"

    def __post_init__(self):
        if not (self.lam > 0 and math.isfinite(self.lam)):
            raise ValueError("lam must be > 0")
        if not (0 < self.zeta <= self.eta <= 1 and self.zeta + self.eta <= 1):
            raise ValueError(
                "exponents must satisfy 0 < zeta <= eta <= 1 and zeta + eta <= 1"
            )
        if not math.isfinite(self.alpha):
            raise ValueError("alpha must be finite")

    def __call__(self, x, y):
        x, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
        lx, ly = x < 1.0, y < 1.0
        lam, a, z, e = self.lam, self.alpha, self.zeta, self.eta
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            out = np.where(
                lx & ly,
                lam * (x * y),
                np.where(
                    lx,
                    lam * (x * y ** (-a)),
                    np.where(
                        ly,
                        lam * (x ** (-a) * y),
                        lam * (x**z * y**e + x**e * y**z),
                    ),
                ),
            )
        return out

    def stability_lambda(self, xmax):
        # y**-alpha <= max(1, R**-alpha) on [1, R]
        return self.lam * max(1.0, xmax ** max(0.0, -self.alpha))

    def to_dict(self):
        return {"type": "h2", "lam": self.lam, "alpha": self.alpha,
                "zeta": self.zeta, "eta": self.eta}


@dataclass(frozen=True)
class CustomKernel(CollisionKernel):
    func: Callable = field(compare=False)
    lam: float | None = None
    name = "custom"

    def __call__(self, x, y):
        x, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
        try:
            out = np.asarray(self.func(x, y), dtype=float)
            if out.shape != x.shape:
                out = np.broadcast_to(out, x.shape).copy()
        except (TypeError, ValueError):
            out = np.vectorize(lambda a, b: float(self.func(a, b)), otypes=[float])(x, y)
        return out

    def stability_lambda(self, xmax):
        if self.lam is None:
            raise ValueError("custom kernels need an explicit lam for stability estimates")
        return float(self.lam)

    def to_dict(self):
        return {"type": "custom", "lam": self.lam}


def eval_collision(kernel: CollisionKernel, x: float, y: float) -> float:
    """Evaluate ``kernel`` at a single pair of positive volumes."""
    if not (x > 0 and y > 0):
        raise EvaluationError(f"volumes must be positive, got ({x!r}, {y!r})")
    val = float(np.asarray(kernel(x, y)))
    if not math.isfinite(val):
        raise EvaluationError(f"{kernel.name} kernel is not finite at ({x!r}, {y!r})")
    return val


# ---------------------------------------------------------------------------
# breakage distributions


class BreakageDistribution:
    """Daughter distribution ``b(x, y, z)`` supported on ``x <= y``."""

    name = "breakage"
    #: whether b ignores the collision partner volume z
    z_independent = True

    def frag_integral(self, lower, upper, y, z):
        """Daughters produced in ``]lower, upper]`` by a parent ``y`` hit by ``z``.

        Broadcasts over array arguments.
        """
        raise NotImplementedError

    def sup(self, xmin: float, xmax: float) -> float:
        """Essential supremum of ``b`` over the truncated domain (inf for atoms)."""
        raise NotImplementedError

    def mass(self, y, z=None) -> float:
        """``int_0^y x b(x, y, z) dx``."""
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError


def _gauss_integral(func, lower, upper, y, z, order=FRAG_QUAD_ORDER):
    lower, upper, y, z = np.broadcast_arrays(
        *(np.asarray(a, dtype=float) for a in (lower, upper, y, z))
    )
    hi = np.minimum(upper, y)
    lo = np.maximum(lower, 0.0)
    span = np.clip(hi - lo, 0.0, None)
    nodes, weights = np.polynomial.legendre.leggauss(order)
    pts = lo[..., None] + 0.5 * span[..., None] * (nodes + 1.0)
    vals = np.asarray(func(pts, y[..., None], z[..., None]), dtype=float)
    vals = np.broadcast_to(vals, pts.shape)
    out = 0.5 * span * (vals @ weights)
    out = np.where(span > 0, out, 0.0)
    if not np.all(np.isfinite(out)):
        k = np.unravel_index(np.argmax(~np.isfinite(out)), out.shape)
        raise EvaluationError(
            "fragment quadrature is not finite for "
            f"y={y[k]!r}, z={z[k]!r}, interval=]{lower[k]!r}, {upper[k]!r}]"
        )
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class PowerLawBreakage(BreakageDistribution):
    """``b(x, y) = (nu + 2) x**nu / y**(nu + 1)`` on ``0 < x <= y``, ``-1 < nu <= 0``."""

    nu: float = 0.0
    name = "power_law"
    z_independent = True

    def __post_init__(self):
        if not (-1.0 < self.nu <= 0.0):
            raise ValueError(f"power-law exponent must lie in (-1, 0], got {self.nu!r}")

    def density(self, x, y, z=None):
        x = np.asarray(x, float)
        y = np.asarray(y, float)
        with np.errstate(divide="ignore"):
            val = (self.nu + 2.0) * x**self.nu / y ** (self.nu + 1.0)
        return np.where((x > 0) & (x <= y), val, 0.0)

    def frag_integral(self, lower, upper, y, z=None):
        # closed form of the antiderivative, clipped to the support ]0, y]
        lower = np.asarray(lower, float)
        upper = np.asarray(upper, float)
        y = np.asarray(y, float)
        p = self.nu + 1.0
        hi = np.minimum(upper, y)
        lo = np.clip(lower, 0.0, None)
        span_ok = hi > lo
        hi = np.where(span_ok, hi, lo)
        out = (self.nu + 2.0) / p * (hi**p - lo**p) / y**p
        out = np.where(span_ok, out, 0.0)
        if not np.all(np.isfinite(out)):
            raise EvaluationError("power-law fragment integral is not finite")
        return out if out.ndim else float(out)

    def sup(self, xmin, xmax):
        if xmin <= 0:
            return math.inf
        return (self.nu + 2.0) * xmin**self.nu / xmin ** (self.nu + 1.0)

    def mass(self, y, z=None):
        val, _ = integrate.quad(lambda x: x * float(self.density(x, y)), 0.0, y,
                                epsabs=1e-13, epsrel=1e-12)
        return val

    def to_dict(self):
        return {"type": "power_law", "nu": self.nu}


@dataclass(frozen=True)
class AtomicBreakage(BreakageDistribution):
    """Sum of Dirac masses ``sum_k w_k delta(x - f_k y)``.

    Atoms are kept symbolic; ``frag_integral`` counts the weights of atoms
    falling in the half-open interval ``]lower, upper]``.
    """

    atoms: tuple = ((0.4, 1.0), (0.6, 1.0))
    name = "atomic"
    z_independent = True

    def __post_init__(self):
        atoms = tuple((float(f), float(w)) for f, w in self.atoms)
        if not atoms:
            raise ValueError("an atomic distribution needs at least one atom")
        for f, w in atoms:
            if not (0.0 < f < 1.0):
                raise ValueError(f"atom fraction must lie in (0, 1), got {f!r}")
            if not (w > 0 and math.isfinite(w)):
                raise ValueError(f"atom weight must be positive, got {w!r}")
        object.__setattr__(self, "atoms", atoms)

    def frag_integral(self, lower, upper, y, z=None):
        lower = np.asarray(lower, float)
        upper = np.asarray(upper, float)
        y = np.asarray(y, float)
        out = np.zeros(np.broadcast(lower, upper, y).shape)
        for f, w in self.atoms:
            pos = f * y
            out = out + w * ((lower < pos) & (pos <= upper))
        return out if out.ndim else float(out)

    def sup(self, xmin, xmax):
        return math.inf

    def mass(self, y, z=None):
        return sum(w * f for f, w in self.atoms) * y

    def to_dict(self):
        return {"type": "atomic", "atoms": [list(a) for a in self.atoms]}


@dataclass(frozen=True)
class ContinuousBreakage(BreakageDistribution):
    """User supplied density ``func(x, y, z)``; zero outside ``0 < x <= y``.

    ``z_independent`` is declared by the caller, never detected.
    """

    func: Callable = field(compare=False)
    z_independent: bool = False
    b_sup: float | None = None
    name = "continuous"

    def density(self, x, y, z):
        x, y, z = np.broadcast_arrays(*(np.asarray(a, float) for a in (x, y, z)))
        inside = (x > 0) & (x <= y)
        with np.errstate(all="ignore"):
            val = np.asarray(self.func(x, y, z), dtype=float)
        return np.where(inside, np.broadcast_to(val, x.shape), 0.0)

    def frag_integral(self, lower, upper, y, z):
        return _gauss_integral(self.density, lower, upper, y, z)

    def sup(self, xmin, xmax, samples=64):
        if self.b_sup is not None:
            return float(self.b_sup)
        grid = np.geomspace(max(xmin, 1e-12), xmax, samples)
        x, y, z = np.meshgrid(grid, grid, grid, indexing="ij")
        vals = self.density(x, y, z)
        return float(np.max(vals))

    def mass(self, y, z=0.0):
        val, _ = integrate.quad(lambda x: x * float(self.density(x, y, z)), 0.0, y,
                                epsabs=1e-13, epsrel=1e-12, limit=200)
        return val

    def to_dict(self):
        return {"type": "continuous", "z_independent": self.z_independent}


def frag_integral(b: BreakageDistribution, lower, upper, y, z=None):
    """Fragment count contribution of ``b`` over ``]lower, upper]``."""
    if np.any(np.asarray(lower) > np.asarray(upper)):
        raise ValueError("frag_integral needs lower <= upper")
    return b.frag_integral(lower, upper, y, 0.0 if z is None else z)


def verify_mass_condition(b: BreakageDistribution, y: float, tol: float = 1e-8,
                          z: float | None = None) -> bool:
    """True iff ``|int_0^y x b dx - y| <= tol * y``."""
    if not y > 0:
        raise ValueError("y must be positive")
    m = b.mass(y) if z is None else b.mass(y, z)
    return abs(m - y) <= tol * y


# ---------------------------------------------------------------------------
# tables


@dataclass(frozen=True, eq=False)
class KernelTables:
    """Precomputed midpoint kernel values and fragment integrals on a mesh.

    ``frag_table`` has shape ``(I, I)`` indexed ``[i, j]`` when
    ``z_independent``, otherwise ``(I, I, I)`` indexed ``[i, j, l]``.
    """

    mesh: Mesh
    k_table: np.ndarray
    frag_table: np.ndarray
    z_independent: bool

    def __post_init__(self):
        for name in ("k_table", "frag_table"):
            a = np.array(getattr(self, name), dtype=float)
            a.setflags(write=False)
            object.__setattr__(self, name, a)

    def frag3(self) -> np.ndarray:
        """``frag_table`` as a full ``(I, I, I)`` array."""
        if not self.z_independent:
            return self.frag_table
        I = self.mesh.cells
        return np.broadcast_to(self.frag_table[:, :, None], (I, I, I))


def _frag_limits(mesh: Mesh):
    I = mesh.cells
    i = np.arange(I)[:, None]
    j = np.arange(I)[None, :]
    lower = np.broadcast_to(mesh.edges[:-1][:, None], (I, I))
    upper = np.where(i == j, mesh.centers[:, None], mesh.edges[1:][:, None])
    upper = np.broadcast_to(upper, (I, I))
    valid = i <= j
    return lower, upper, valid


def precompute_tables(mesh: Mesh, kernel: CollisionKernel,
                      b: BreakageDistribution) -> KernelTables:
    """Build :class:`KernelTables` for ``kernel`` and ``b`` on ``mesh``."""
    x = mesh.centers
    K = np.asarray(kernel(x[:, None], x[None, :]), dtype=float)
    if not np.all(np.isfinite(K)):
        j, l = np.unravel_index(np.argmax(~np.isfinite(K)), K.shape)
        raise EvaluationError(f"collision kernel not finite at cells (j={j}, l={l})")
    if np.any(K < 0):
        j, l = np.unravel_index(np.argmin(K), K.shape)
        raise EvaluationError(f"collision kernel negative at cells (j={j}, l={l})")
    if not np.allclose(K, K.T, rtol=1e-12, atol=0.0):
        raise EvaluationError("collision kernel is not symmetric on the mesh centers")
    # exact symmetry: both triangles come from one evaluation
    K = np.triu(K) + np.triu(K, 1).T

    lower, upper, valid = _frag_limits(mesh)
    y = np.broadcast_to(x[None, :], lower.shape)
    if b.z_independent:
        try:
            B = b.frag_integral(lower, upper, y, np.zeros_like(y))
        except EvaluationError as exc:
            raise EvaluationError(f"fragment table entry failed: {exc}") from exc
        B = np.where(valid, B, 0.0)
    else:
        B = np.zeros((mesh.cells,) * 3)
        for l in range(mesh.cells):
            try:
                col = b.frag_integral(lower, upper, y, np.full_like(y, x[l]))
            except EvaluationError as exc:
                raise EvaluationError(f"fragment table entry failed at l={l}: {exc}") from exc
            B[:, :, l] = np.where(valid, col, 0.0)
    if np.any(B < 0):
        raise EvaluationError("breakage distribution produced negative fragment counts")
    return KernelTables(mesh=mesh, k_table=K, frag_table=B, z_independent=b.z_independent)
