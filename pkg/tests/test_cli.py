import csv
import json

import numpy as np
import pytest
import yaml

from collbreak.analysis import ConvergenceReport, ConvergenceRow, builtin_case
from collbreak.cli import convergence_csv, main, report_from_json, report_to_json
from collbreak.config import build_config
from collbreak.errors import ConfigError
from collbreak.kernels import AtomicBreakage, SumKernel
from collbreak.mesh import cell_average_projection, make_uniform_mesh


def write_cfg(tmp_path, data, name="cfg.yaml"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(data))
    return str(path)


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_simulate_case1(tmp_path):
    cfg = write_cfg(tmp_path, {"case": "case1", "mesh": {"cells": 30},
                               "time": {"t_end": 0.2, "dt": 1e-3}})
    out = tmp_path / "out"
    assert main(["simulate", "--config", cfg, "--out", str(out)]) == 0
    dens = read_csv(out / "density.csv")
    assert dens[0] == ["x_center", "width", "c"]
    assert len(dens) == 31
    mom = read_csv(out / "moments.csv")
    assert mom[0] == ["t", "M0", "M1", "M2"]
    m0 = [float(r[1]) for r in mom[1:]]
    assert m0[-1] > m0[0]
    report = json.loads((out / "simulate.json").read_text())
    assert report["config"]["case"]["builtin"] == "case1"
    assert report["final_time"] == 0.2
    assert report["dt"] == pytest.approx(1e-3)


def test_simulate_zero_horizon_returns_projection(tmp_path):
    cfg = write_cfg(tmp_path, {"case": "case2", "mesh": {"cells": 12}, "time": {"t_end": 0}})
    out = tmp_path / "out"
    assert main(["simulate", "--config", cfg, "--out", str(out)]) == 0
    report = json.loads((out / "simulate.json").read_text())
    mesh = make_uniform_mesh(1e-3, 10.0, 12)
    ic = cell_average_projection(builtin_case("case2").initial, mesh)
    assert report["final_density"] == ic.density.tolist()
    assert report["steps"] == 0


def test_missing_t_end_names_field(tmp_path, capsys):
    cfg = write_cfg(tmp_path, {"case": "case1", "mesh": {"cells": 10}})
    assert main(["simulate", "--config", cfg, "--out", str(tmp_path)]) == 2
    assert "time.t_end" in capsys.readouterr().err


def test_yaml_error_reports_line(tmp_path, capsys):
    path = tmp_path / "bad.yaml"
    path.write_text("case: case1\ntime: {t_end: 0.2\n")
    assert main(["simulate", "--config", str(path)]) == 2
    assert "line" in capsys.readouterr().err


def test_unknown_key_rejected(tmp_path):
    cfg = write_cfg(tmp_path, {"case": "case1", "time": {"t_end": 0.1}, "colour": "red"})
    assert main(["simulate", "--config", cfg]) == 2


def test_missing_config_file(tmp_path):
    assert main(["simulate", "--config", str(tmp_path / "nope.yaml")]) == 2


def test_bad_subcommand():
    assert main(["dance", "--config", "x"]) == 2


def test_solver_failure_exit_code(tmp_path, capsys):
    cfg = write_cfg(tmp_path, {"case": "case1", "mesh": {"cells": 10},
                               "time": {"t_end": 5.0, "dt": 4.0}})
    assert main(["simulate", "--config", cfg, "--out", str(tmp_path)]) == 3
    assert "step 1" in capsys.readouterr().err


def test_convergence_csv_layout(tmp_path):
    cfg = write_cfg(tmp_path, {"case": "case1", "mesh": {"cells": [8, 16, 32]},
                               "time": {"t_end": 0.2, "dt": 0.01}})
    out = tmp_path / "out"
    assert main(["convergence", "--config", cfg, "--out", str(out)]) == 0
    rows = read_csv(out / "convergence.csv")
    assert rows[0] == ["cells", "total_number", "error", "eoc"]
    assert [r[0] for r in rows[1:]] == ["8", "16", "32"]
    assert rows[1][2:] == ["", ""]
    assert rows[2][2] != "" and rows[2][3] == ""
    assert rows[3][2] != "" and rows[3][3] != ""
    assert len(rows[3][3].split(".")[1]) == 4
    payload = json.loads((out / "convergence.json").read_text())
    assert payload["config"]["mesh"]["cells"] == [8, 16, 32]
    assert payload["metadata"]["dt"] == [0.01] * 3


def test_convergence_cells_override(tmp_path):
    cfg = write_cfg(tmp_path, {"case": "case2", "time": {"t_end": 0.1, "dt": 0.01}})
    out = tmp_path / "out"
    assert main(["convergence", "--config", cfg, "--cells", "4,8", "--out", str(out)]) == 0
    assert len(read_csv(out / "convergence.csv")) == 3


def test_convergence_non_doubling(tmp_path, capsys):
    cfg = write_cfg(tmp_path, {"case": "case1", "mesh": {"cells": [30, 50]},
                               "time": {"t_end": 0.2, "dt": 0.01}})
    assert main(["convergence", "--config", cfg, "--out", str(tmp_path)]) == 2
    assert "double" in capsys.readouterr().err


def unit_stability_cfg(tmp_path, **time):
    return write_cfg(tmp_path, {
        "case": "case1",
        "mesh": {"cells": 10},
        "time": {"t_end": 0.2, **time},
        "stability": {"lambda": 1, "R": 1, "T": 0.2, "b_sup": 1, "c_in_l1": 1, "m1_in": 1},
    })


def test_stability_unit_example(tmp_path, capsys):
    cfg = unit_stability_cfg(tmp_path, theta=0.5)
    out = tmp_path / "out"
    assert main(["stability", "--config", cfg, "--out", str(out)]) == 0
    text = capsys.readouterr().out
    assert "C(R,T) = 3.98365" in text
    assert "max dt = 0.125513" in text
    payload = json.loads((out / "stability.json").read_text())
    assert payload["C"] == pytest.approx(3.98365, abs=5e-6)
    assert payload["max_dt"] == pytest.approx(0.12551, abs=5e-6)
    assert payload["dt"] <= payload["max_dt"]


def test_stability_atomic_unavailable(tmp_path, capsys, caplog):
    cfg = write_cfg(tmp_path, {"case": "case3", "mesh": {"cells": 10},
                               "time": {"t_end": 0.2}})
    with caplog.at_level("WARNING"):
        assert main(["stability", "--config", cfg, "--out", str(tmp_path)]) == 0
    assert "unavailable" in capsys.readouterr().out
    assert any("supremum" in r.message for r in caplog.records)
    assert json.loads((tmp_path / "stability.json").read_text())["C"] is None


def test_stability_theta_out_of_range(tmp_path, capsys):
    cfg = unit_stability_cfg(tmp_path)
    assert main(["stability", "--config", cfg, "--theta", "1.5"]) == 2
    assert "theta" in capsys.readouterr().err


def test_stability_overflow(tmp_path, capsys):
    cfg = write_cfg(tmp_path, {"case": "case2", "mesh": {"cells": 10},
                               "time": {"t_end": 0.2}})
    # power law on [1e-3, 10] has b_sup = 2000, far beyond exp range
    assert main(["stability", "--config", cfg, "--out", str(tmp_path)]) == 3
    assert "truncate" in capsys.readouterr().err


def test_report_json_round_trip():
    rows = [ConvergenceRow(30, 1.1234567890123457, None, None),
            ConvergenceRow(60, 1.1 + 1e-16, 3.3e-17 * 7, None),
            ConvergenceRow(120, 0.1 + 0.2, 1 / 3, 2 / 3 + 1e-12)]
    rep = ConvergenceReport(rows, {"test_case": "x"})
    back = report_from_json(report_to_json(rep, {}))
    assert back.rows == rep.rows
    assert back.metadata == rep.metadata


def test_csv_six_significant_digits():
    rep = ConvergenceReport([ConvergenceRow(30, 1.23456789, None, None),
                             ConvergenceRow(60, 1.0, 4.3771e-05, None),
                             ConvergenceRow(120, 1.0, 2.0471e-05, 1.09637)])
    lines = convergence_csv(rep).splitlines()
    assert lines[1] == "30,1.23457,,"
    assert lines[3] == "120,1,2.0471e-05,1.0964"


def test_builtin_expansion_frozen():
    cfg = build_config({"case": "case3", "time": {"t_end": 0.2}})
    assert cfg.case.kernel == SumKernel()
    assert cfg.case.breakage == AtomicBreakage(((0.4, 1.0), (0.6, 1.0)))
    assert cfg.resolved()["case"]["breakage"] == AtomicBreakage(((0.4, 1.0), (0.6, 1.0))).to_dict()
    nested = build_config({"case": {"builtin": "case3"}, "time": {"t_end": 0.2}})
    assert nested.case == cfg.case


def test_explicit_case_spec():
    cfg = build_config({"case": {"name": "prod", "kernel": {"type": "product", "lam": 2},
                                 "breakage": {"type": "power_law", "nu": -0.5},
                                 "initial": {"amplitude": 2.0}},
                        "domain": {"xmin": 0.1, "xmax": 2},
                        "mesh": {"kind": "geometric", "cells": 5, "ratio": 1.1},
                        "time": {"t_end": "1e-1"}})
    assert cfg.case.name == "prod"
    assert cfg.t_end == pytest.approx(0.1)
    mesh = cfg.make_mesh()
    assert mesh.cells == 5 and mesh.widths[1] / mesh.widths[0] == pytest.approx(1.1)
    assert cfg.case.initial(np.array([0.0]))[0] == 2.0


@pytest.mark.parametrize("raw,field", [
    ({"case": "case9", "time": {"t_end": 1}}, "case"),
    ({"time": {"t_end": 1, "dt": -1}}, "time.dt"),
    ({"time": {"t_end": 1}, "mesh": {"kind": "hex"}}, "mesh.kind"),
    ({"time": {"t_end": 1}, "mesh": {"cells": 2.5}}, "mesh.cells"),
    ({"time": {"t_end": 1}, "domain": {"xmin": 3, "xmax": 2}}, "domain.xmax"),
    ({"time": {"t_end": 1}, "check_invariants": "yes please"}, "check_invariants"),
    ({"time": {"t_end": 1}, "stability": {"gamma": 1}}, "stability"),
    ({"case": {"kernel": {"type": "sum"}}, "time": {"t_end": 1}}, "case.breakage"),
    ({"case": {"kernel": {"type": "magic"}, "breakage": {"type": "power_law"}},
      "time": {"t_end": 1}}, "case.kernel.type"),
])
def test_config_field_diagnostics(raw, field):
    with pytest.raises(ConfigError) as info:
        build_config(raw)
    assert info.value.field == field
