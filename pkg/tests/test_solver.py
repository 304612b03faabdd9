import math

import numpy as np
import pytest

from collbreak import (ConstantKernel, PowerLawBreakage, SolverConfig, State,
                       StabilityParams, make_uniform_mesh, max_stable_dt,
                       precompute_tables, simulate, stability_constant, step)
from collbreak.analysis import builtin_case, total_number
from collbreak.errors import StabilityError, StabilityViolation
from collbreak.mesh import Mesh, cell_average_projection
from collbreak.solver import FALLBACK_DT, auto_dt


def unit_params(**kw):
    base = dict(lam=1.0, R=1.0, T=0.2, b_sup=1.0, c_in_l1=1.0, m1_in=1.0, theta=0.5)
    base.update(kw)
    return StabilityParams(**base)


def three_cell_setup(k0=1.0):
    mesh = Mesh(np.array([0.0, 1.0, 2.0, 3.0]))
    tables = precompute_tables(mesh, ConstantKernel(k0), PowerLawBreakage(0.0))
    return mesh, tables


# ---------------------------------------------------------------------------
# stability constant


def test_stability_constant_unit_example():
    C = stability_constant(unit_params())
    assert C == pytest.approx(3.9836493952825407, rel=1e-14)
    assert C == pytest.approx(3.98365, abs=5e-6)


@pytest.mark.parametrize("R", [0.5, 1.0, 7.0, 10.0])
def test_zero_horizon_collapses_exponential(R):
    C = stability_constant(unit_params(R=R, T=0.0, c_in_l1=0.7, m1_in=1.3))
    assert C == pytest.approx(2 * R * 0.7 + 1.3, rel=1e-15)


def test_doubling_lambda_more_than_doubles():
    p1, p2 = unit_params(lam=1.0), unit_params(lam=2.0)
    assert stability_constant(p2) > 2 * stability_constant(p1)


def test_overflow_advises_truncation():
    with pytest.raises(StabilityError, match="truncate"):
        stability_constant(unit_params(R=10.0, b_sup=2000.0, T=0.2, m1_in=1.0))


def test_infinite_sup_has_no_constant():
    with pytest.raises(StabilityError):
        stability_constant(unit_params(b_sup=math.inf))


@pytest.mark.parametrize("field,value", [("lam", 0.0), ("R", -1.0), ("theta", 1.0),
                                         ("theta", 0.0), ("T", -0.1), ("m1_in", 0.0)])
def test_params_validation(field, value):
    with pytest.raises(ValueError):
        unit_params(**{field: value})


def test_max_stable_dt_examples():
    assert max_stable_dt(4.0, 0.5) == 0.125
    assert max_stable_dt(3.98365, 0.5) == pytest.approx(0.12551, abs=5e-6)
    assert max_stable_dt(stability_constant(unit_params()), 0.5) == pytest.approx(
        0.12551305358149809, rel=1e-14)


def test_max_stable_dt_near_one():
    C = 3.0
    dt = max_stable_dt(C, 1 - 1e-12)
    assert dt < 1 / C
    assert dt == pytest.approx(1 / C, rel=1e-11)
    with pytest.raises(ValueError):
        max_stable_dt(C, 1.0)
    with pytest.raises(ValueError):
        max_stable_dt(0.0, 0.5)


def test_auto_dt_divides_horizon():
    p = unit_params()
    dt = auto_dt(0.2, p)
    n = round(0.2 / dt)
    assert n * dt == pytest.approx(0.2, rel=1e-14)
    assert stability_constant(p) * dt <= p.theta


def test_auto_dt_fallback():
    assert auto_dt(0.2, unit_params(b_sup=math.inf)) == FALLBACK_DT


# ---------------------------------------------------------------------------
# step


def test_zero_kernel_is_identity():
    mesh, tables = three_cell_setup(k0=0.0)
    s = State(mesh, 0.0, np.array([1.0, 2.0, 3.0]))
    out = step(s, tables, 0.1)
    np.testing.assert_array_equal(out.density, s.density)
    assert out.time == pytest.approx(0.1)


def test_zero_density_is_identity():
    mesh, tables = three_cell_setup()
    s = State(mesh, 0.0, np.zeros(3))
    np.testing.assert_array_equal(step(s, tables, 0.5).density, 0.0)


def test_dt_zero_is_identity():
    mesh, tables = three_cell_setup()
    s = State(mesh, 0.3, np.array([1.0, 0.5, 0.2]))
    out = step(s, tables, 0.0)
    np.testing.assert_array_equal(out.density, s.density)
    assert out.time == 0.3


def test_three_cell_hand_value():
    # B = [[2, 4/3, 4/5], [0, 2/3, 4/5], [0, 0, 2/5]], every inner sum equals 3
    mesh, tables = three_cell_setup()
    s = State(mesh, 0.0, np.ones(3))
    for naive in (False, True):
        out = step(s, tables, 0.01, naive=naive)
        np.testing.assert_allclose(out.density, [1.094, 1.014, 0.982], rtol=1e-13)
    np.testing.assert_array_equal(s.density, 1.0)  # input untouched


def test_step_linear_in_dt(rng):
    mesh = make_uniform_mesh(0.01, 2.0, 12)
    tables = precompute_tables(mesh, ConstantKernel(1.0), PowerLawBreakage(-0.5))
    s = State(mesh, 0.0, rng.uniform(0.1, 1.0, 12))
    d1 = step(s, tables, 1e-3).density - s.density
    d2 = step(s, tables, 3e-3).density - s.density
    np.testing.assert_allclose(d2, 3 * d1, rtol=1e-10, atol=1e-15)


def test_step_rejects_foreign_mesh():
    mesh, tables = three_cell_setup()
    other = State(make_uniform_mesh(1.0, 2.0, 3), 0.0, np.ones(3))
    with pytest.raises(ValueError):
        step(other, tables, 0.1)


def test_large_dt_reports_cell_and_suggestion():
    mesh, tables = three_cell_setup()
    s = State(mesh, 0.0, np.ones(3))
    with pytest.raises(StabilityViolation) as info:
        step(s, tables, 5.0)
    exc = info.value
    assert exc.cell == 2
    assert 0 < exc.suggested_dt < 5.0
    # the suggestion itself keeps densities non-negative
    assert np.all(step(s, tables, exc.suggested_dt * 0.999).density >= 0)


def test_clamp_override():
    mesh, tables = three_cell_setup()
    s = State(mesh, 0.0, np.ones(3))
    out = step(s, tables, 5.0, clamp_negative=True)
    assert np.all(out.density >= 0)
    assert out.density[2] == 0.0


# ---------------------------------------------------------------------------
# simulate


@pytest.fixture(scope="module")
def case1_30():
    case = builtin_case("case1")
    mesh = make_uniform_mesh(case.xmin, case.xmax, 30)
    ic = cell_average_projection(case.initial, mesh)
    tables = precompute_tables(mesh, case.kernel, case.breakage)
    return case, ic, tables


def test_zero_horizon_returns_ic(case1_30):
    _, ic, tables = case1_30
    traj = simulate(ic, tables, SolverConfig(dt=0.01, t_end=0.0))
    assert traj == [ic]


def test_zero_initial_density(case1_30):
    _, ic, tables = case1_30
    zero = ic.with_density(np.zeros(ic.mesh.cells))
    traj = simulate(zero, tables, SolverConfig(dt=0.01, t_end=0.2))
    np.testing.assert_array_equal(traj[-1].density, 0.0)


def test_case1_number_grows(case1_30):
    case, ic, tables = case1_30
    traj = simulate(ic, tables, SolverConfig(dt=1e-3, t_end=case.t_end))
    assert total_number(traj[-1]) > total_number(ic)
    assert traj[-1].time == case.t_end


def test_deterministic(case1_30):
    _, ic, tables = case1_30
    cfg = SolverConfig(dt=7e-3, t_end=0.2)
    a = simulate(ic, tables, cfg)
    b = simulate(ic, tables, cfg)
    for x, y in zip(a, b):
        assert x.time == y.time
        np.testing.assert_array_equal(x.density, y.density)


def test_last_step_lands_on_horizon(case1_30):
    _, ic, tables = case1_30
    traj = simulate(ic, tables, SolverConfig(dt=0.03, t_end=0.2))
    times = [s.time for s in traj]
    assert times[-1] == 0.2
    assert len(traj) == 8  # 6 full steps of 0.03 plus a shortened one
    assert times[-1] - times[-2] == pytest.approx(0.02)


def test_record_every_keeps_final(case1_30):
    _, ic, tables = case1_30
    traj = simulate(ic, tables, SolverConfig(dt=0.01, t_end=0.2, record_every=7))
    assert [round(s.time, 10) for s in traj] == [0.0, 0.07, 0.14, 0.2]


def test_auto_dt_uses_stability(case1_30):
    case, ic, tables = case1_30
    p = case.stability_params(ic)
    traj = simulate(ic, tables, SolverConfig(dt="auto", t_end=case.t_end), p)
    dt = traj[1].time - traj[0].time
    assert dt == pytest.approx(auto_dt(case.t_end, p))
    assert np.all(traj[-1].density >= 0)


def test_auto_requires_params(case1_30):
    _, ic, tables = case1_30
    with pytest.raises(ValueError):
        simulate(ic, tables, SolverConfig(dt="auto", t_end=0.2))


def test_violation_carries_step_context():
    mesh, tables = three_cell_setup()
    s = State(mesh, 0.0, np.ones(3))
    with pytest.raises(StabilityViolation) as info:
        simulate(s, tables, SolverConfig(dt=5.0, t_end=10.0))
    assert info.value.step == 1
    assert info.value.time == 0.0


@pytest.mark.parametrize("kw", [dict(dt=0.0, t_end=1.0), dict(dt=-1.0, t_end=1.0),
                                dict(dt="fast", t_end=1.0), dict(dt=0.1, t_end=-1.0),
                                dict(dt=0.1, t_end=1.0, record_every=0)])
def test_solver_config_validation(kw):
    with pytest.raises(ValueError):
        SolverConfig(**kw)
