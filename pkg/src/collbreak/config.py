"""YAML experiment configuration and its resolution into solver objects.

Example::

    case: case1                 # or a mapping with kernel / breakage / initial
    domain: {xmin: 1.0e-3, xmax: 10}
    mesh: {kind: uniform, cells: [30, 60, 120, 240, 480]}
    time: {t_end: 0.2, dt: 1.0e-3, theta: 0.5, dt_policy: shared}
    output: {dir: out}
    check_invariants: true
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from .analysis import BUILTIN_CASES, TestCase, builtin_case, exponential_ic
from .errors import ConfigError
from .kernels import (AtomicBreakage, ConstantKernel, PiecewiseH2Kernel,
                      PowerLawBreakage, ProductKernel, SumKernel)
from .mesh import Mesh, make_geometric_mesh, make_uniform_mesh


def _num(value, name, *, positive=False, allow_zero=True):
    try:
        v = float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{name}: expected a number, got {value!r}", field=name) from None
    if not math.isfinite(v):
        raise ConfigError(f"{name}: must be finite", field=name)
    if positive and (v < 0 or (v == 0 and not allow_zero)):
        raise ConfigError(f"{name}: must be {'>' if not allow_zero else '>='} 0", field=name)
    return v


def _int(value, name):
    try:
        v = int(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{name}: expected an integer, got {value!r}", field=name) from None
    if v != value and not (isinstance(value, str) and str(v) == value.strip()):
        raise ConfigError(f"{name}: expected an integer, got {value!r}", field=name)
    if v < 1:
        raise ConfigError(f"{name}: must be >= 1", field=name)
    return v


def _section(raw, key):
    val = raw.get(key, {})
    if val is None:
        return {}
    if not isinstance(val, dict):
        raise ConfigError(f"{key}: expected a mapping", field=key)
    return val


def parse_kernel(spec):
    if not isinstance(spec, dict) or "type" not in spec:
        raise ConfigError("case.kernel: expected a mapping with 'type'", field="case.kernel")
    kind = spec["type"]
    try:
        if kind == "constant":
            return ConstantKernel(_num(spec.get("k0", 1.0), "case.kernel.k0"))
        if kind == "sum":
            return SumKernel()
        if kind == "product":
            return ProductKernel(_num(spec.get("lam", 1.0), "case.kernel.lam"))
        if kind == "h2":
            return PiecewiseH2Kernel(
                lam=_num(spec.get("lam", 1.0), "case.kernel.lam"),
                alpha=_num(spec.get("alpha", 0.0), "case.kernel.alpha"),
                zeta=_num(spec.get("zeta", 0.5), "case.kernel.zeta"),
                eta=_num(spec.get("eta", 0.5), "case.kernel.eta"),
            )
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"case.kernel: {exc}", field="case.kernel") from None
    raise ConfigError(f"case.kernel.type: unknown kernel {kind!r}", field="case.kernel.type")


def parse_breakage(spec):
    if not isinstance(spec, dict) or "type" not in spec:
        raise ConfigError("case.breakage: expected a mapping with 'type'", field="case.breakage")
    kind = spec["type"]
    try:
        if kind == "power_law":
            return PowerLawBreakage(_num(spec.get("nu", 0.0), "case.breakage.nu"))
        if kind == "atomic":
            atoms = spec.get("atoms")
            if not isinstance(atoms, list) or not atoms:
                raise ConfigError("case.breakage.atoms: expected a list of [fraction, weight]",
                                  field="case.breakage.atoms")
            parsed = []
            for k, a in enumerate(atoms):
                if not isinstance(a, (list, tuple)) or len(a) != 2:
                    raise ConfigError(f"case.breakage.atoms[{k}]: expected [fraction, weight]",
                                      field="case.breakage.atoms")
                parsed.append((_num(a[0], f"case.breakage.atoms[{k}][0]"),
                               _num(a[1], f"case.breakage.atoms[{k}][1]")))
            return AtomicBreakage(tuple(parsed))
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"case.breakage: {exc}", field="case.breakage") from None
    raise ConfigError(f"case.breakage.type: unknown distribution {kind!r}",
                      field="case.breakage.type")


@dataclass(frozen=True)
class ExponentialIC:
    amplitude: float = 1.0
    rate: float = 1.0

    def __call__(self, x):
        return self.amplitude * np.exp(-self.rate * np.asarray(x, dtype=float))


def parse_initial(spec):
    if spec is None:
        return exponential_ic, {"type": "exponential", "amplitude": 1.0, "rate": 1.0}
    if not isinstance(spec, dict) or spec.get("type", "exponential") != "exponential":
        raise ConfigError("case.initial: only {type: exponential, amplitude, rate} is supported",
                          field="case.initial")
    amp = _num(spec.get("amplitude", 1.0), "case.initial.amplitude", positive=True)
    rate = _num(spec.get("rate", 1.0), "case.initial.rate")
    if amp == 1.0 and rate == 1.0:
        return exponential_ic, {"type": "exponential", "amplitude": 1.0, "rate": 1.0}
    return ExponentialIC(amp, rate), {"type": "exponential", "amplitude": amp, "rate": rate}


@dataclass
class ExperimentConfig:
    case: TestCase
    case_spec: dict
    mesh_kind: str
    cells: list
    ratio: float
    t_end: float
    dt: Any  # float or "auto"
    theta: float
    dt_policy: str
    out_dir: Path
    check_invariants: bool
    stability_overrides: dict = field(default_factory=dict)
    workers: int = 1

    def make_mesh(self, cells: int | None = None) -> Mesh:
        n = self.cells[0] if cells is None else cells
        if self.mesh_kind == "uniform":
            return make_uniform_mesh(self.case.xmin, self.case.xmax, n)
        return make_geometric_mesh(self.case.xmin, self.case.xmax, n, self.ratio)

    def resolved(self) -> dict:
        """Plain-data form embedded in every report."""
        return {
            "case": copy.deepcopy(self.case_spec),
            "domain": {"xmin": self.case.xmin, "xmax": self.case.xmax},
            "mesh": {"kind": self.mesh_kind, "cells": list(self.cells), "ratio": self.ratio},
            "time": {"t_end": self.t_end, "dt": self.dt, "theta": self.theta,
                     "dt_policy": self.dt_policy},
            "output": {"dir": str(self.out_dir)},
            "check_invariants": self.check_invariants,
            "stability": dict(self.stability_overrides),
        }


def load_raw(path) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}", field="--config") from None
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f" (line {mark.line + 1}, column {mark.column + 1})" if mark else ""
        raise ConfigError(f"config is not valid YAML{where}: {exc}", field="--config") from None
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a mapping", field="--config")
    return raw


def _parse_cells(value):
    if isinstance(value, (list, tuple)):
        if not value:
            raise ConfigError("mesh.cells: empty list", field="mesh.cells")
        return [_int(v, "mesh.cells") for v in value]
    if isinstance(value, str) and "," in value:
        return [_int(v.strip(), "mesh.cells") for v in value.split(",")]
    return [_int(value, "mesh.cells")]


def build_config(raw: dict, overrides: dict | None = None) -> ExperimentConfig:
    """Validate ``raw`` (parsed YAML) plus CLI ``overrides`` into a config."""
    raw = copy.deepcopy(raw)
    overrides = {k: v for k, v in (overrides or {}).items() if v is not None}
    known = {"case", "domain", "mesh", "time", "output", "check_invariants", "stability",
             "workers"}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown top-level keys: {sorted(unknown)}", field=sorted(unknown)[0])

    domain = _section(raw, "domain")
    case_raw = raw.get("case", "case1")
    if isinstance(case_raw, str):
        if case_raw not in BUILTIN_CASES:
            raise ConfigError(f"case: unknown builtin {case_raw!r} (expected one of "
                              f"{', '.join(BUILTIN_CASES)})", field="case")
        base = builtin_case(case_raw)
        kernel, breakage, initial = base.kernel, base.breakage, base.initial
        case_spec = {"builtin": case_raw}
        name = case_raw
        init_spec = {"type": "exponential", "amplitude": 1.0, "rate": 1.0}
    elif isinstance(case_raw, dict):
        if "builtin" in case_raw:
            return build_config({**raw, "case": case_raw["builtin"]}, overrides)
        for key in ("kernel", "breakage"):
            if key not in case_raw:
                raise ConfigError(f"case.{key}: missing", field=f"case.{key}")
        kernel = parse_kernel(case_raw["kernel"])
        breakage = parse_breakage(case_raw["breakage"])
        initial, init_spec = parse_initial(case_raw.get("initial"))
        name = str(case_raw.get("name", "custom"))
        case_spec = {"name": name}
    else:
        raise ConfigError("case: expected a builtin name or a mapping", field="case")
    case_spec.update({"kernel": kernel.to_dict(), "breakage": breakage.to_dict(),
                      "initial": init_spec})

    xmin = _num(domain.get("xmin", 1e-3), "domain.xmin", positive=True)
    xmax = _num(domain.get("xmax", 10.0), "domain.xmax", positive=True)
    if xmax <= xmin:
        raise ConfigError("domain.xmax must exceed domain.xmin", field="domain.xmax")

    time = _section(raw, "time")
    if "t_end" in overrides:
        time["t_end"] = overrides["t_end"]
    if "t_end" not in time:
        raise ConfigError("time.t_end: missing required field", field="time.t_end")
    t_end = _num(time["t_end"], "time.t_end", positive=True)
    dt = overrides.get("dt", time.get("dt", "auto"))
    if dt != "auto":
        dt = _num(dt, "time.dt")
        if dt <= 0:
            raise ConfigError("time.dt: must be > 0 or 'auto'", field="time.dt")
    theta = _num(overrides.get("theta", time.get("theta", 0.5)), "time.theta")
    if not 0 < theta < 1:
        raise ConfigError(f"time.theta: must lie in (0, 1), got {theta!r}", field="time.theta")
    dt_policy = time.get("dt_policy", "shared")
    if dt_policy not in ("shared", "proportional"):
        raise ConfigError(f"time.dt_policy: unknown policy {dt_policy!r}", field="time.dt_policy")

    mesh = _section(raw, "mesh")
    kind = mesh.get("kind", "uniform")
    if kind not in ("uniform", "geometric"):
        raise ConfigError(f"mesh.kind: unknown mesh kind {kind!r}", field="mesh.kind")
    cells = _parse_cells(overrides.get("cells", mesh.get("cells", 30)))
    ratio = _num(mesh.get("ratio", 1.0), "mesh.ratio")
    if ratio <= 0:
        raise ConfigError("mesh.ratio: must be > 0", field="mesh.ratio")
    if kind == "geometric" and xmin <= 0:
        raise ConfigError("domain.xmin: geometric meshes need xmin > 0", field="domain.xmin")

    output = _section(raw, "output")
    out_dir = Path(overrides.get("out", output.get("dir", "out")))
    check = overrides.get("check_invariants", raw.get("check_invariants", True))
    if not isinstance(check, bool):
        raise ConfigError("check_invariants: expected true/false", field="check_invariants")

    stab_raw = _section(raw, "stability")
    allowed = {"lambda", "R", "T", "b_sup", "c_in_l1", "m1_in"}
    bad = set(stab_raw) - allowed
    if bad:
        raise ConfigError(f"stability: unknown keys {sorted(bad)}", field="stability")
    stab = {k: _num(v, f"stability.{k}") for k, v in stab_raw.items()}
    workers = _int(overrides.get("workers", raw.get("workers", 1)), "workers")

    case = TestCase(name, kernel, breakage, initial, xmin, xmax, t_end)
    return ExperimentConfig(case=case, case_spec=case_spec, mesh_kind=kind, cells=cells,
                            ratio=ratio, t_end=t_end, dt=dt, theta=theta, dt_policy=dt_policy,
                            out_dir=out_dir, check_invariants=check,
                            stability_overrides=stab, workers=workers)


def load_config(path, overrides: dict | None = None) -> ExperimentConfig:
    return build_config(load_raw(path), overrides)
