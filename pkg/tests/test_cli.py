import json

import numpy as np
import pytest

from maxplus_hjb.cli import EXIT_CONFIG, EXIT_OK, EXIT_PROPERTY, EXIT_SOLVER, main
from maxplus_hjb.config import ConfigError, ExperimentConfig
from maxplus_hjb.export import read_csv, svg_line_plot, write_csv


def write_cfg(tmp_path, text, name="run.ini"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


CONSTANT = """
[problem]
family = constant
cost = 1.5
[grid]
num = 21
nt = 40
"""


def test_solve_qvi_constant_cost(tmp_path):
    out = tmp_path / "out"
    assert main(["solve-qvi", "--config", write_cfg(tmp_path, CONSTANT), "--out", str(out)]) == EXIT_OK
    header, rows = read_csv(out / "value_field.csv")
    assert header[-1] == "V"
    assert {float(r[-1]) for r in rows} == {1.5}
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["status"] == 0 and "value_field.csv" in manifest["artifacts"]
    assert manifest["config"]["problem"]["cost"] == 1.5
    # the echoed config fully reproduces the run
    echoed = ExperimentConfig.from_file(out / "config.ini")
    assert echoed.as_dict() == manifest["config"]


def test_invalid_config_exit_code(tmp_path, capsys):
    bad = write_cfg(tmp_path, "[problem]\nu_num = 0\n[grid]\nnum = 1\n")
    out = tmp_path / "never"
    assert main(["solve-qvi", "--config", bad, "--out", str(out)]) == EXIT_CONFIG
    err = capsys.readouterr().err
    assert "[problem] u_num" in err and "[grid] num" in err
    assert not out.exists()
    assert main(["solve-qvi", "--config", write_cfg(tmp_path, "[grid]\nbogus = 3\n", "b.ini")]) == EXIT_CONFIG


def test_config_errors_collected():
    with pytest.raises(ConfigError) as err:
        ExperimentConfig.from_string("[nope]\nx = 1\n[grid]\nnum = abc\n")
    assert len(err.value.problems) == 2
    cfg = ExperimentConfig()
    cfg.sweep.thetas = "5,2"
    with pytest.raises(ConfigError, match="increasing"):
        cfg.validate()


def test_solver_failure_exit_code(tmp_path):
    text = "[solver]\nmethod = fd\n[grid]\nnum = 401\nnt = 10\n"
    out = tmp_path / "cfl"
    assert main(["solve-pde", "--config", write_cfg(tmp_path, text), "--out", str(out)]) == EXIT_SOLVER
    assert "CFL" in json.loads((out / "manifest.json").read_text())["summary"]["error"]


def test_property_failure_exit_code(tmp_path):
    text = "[run]\ninstances = 300\ninject_fault = true\n"
    out = tmp_path / "prop"
    assert main(["property-suite", "--config", write_cfg(tmp_path, text), "--out", str(out)]) == EXIT_PROPERTY
    failures = json.loads((out / "failures.json").read_text())
    assert failures and "property" in failures[0] and "F" in failures[0]


def test_property_suite_is_deterministic(tmp_path):
    text = "[run]\ninstances = 200\n"
    cfg = write_cfg(tmp_path, text)
    for name in ("a", "b"):
        assert main(["property-suite", "--config", cfg, "--out", str(tmp_path / name), "--seed", "7"]) == EXIT_OK
    a = (tmp_path / "a" / "property_report.json").read_text()
    assert a == (tmp_path / "b" / "property_report.json").read_text()


def test_hinfty_infeasible_exit_code(tmp_path, capsys):
    out = tmp_path / "h"
    assert main(["hinfty-certify", "--config", write_cfg(tmp_path, "[hinfty]\nmu = 1.0\n"),
                 "--out", str(out)]) == EXIT_PROPERTY
    assert "INFEASIBLE" in (out / "certificate.txt").read_text()


def test_merton_oracle_command(tmp_path):
    out = tmp_path / "m"
    assert main(["merton-oracle", "--out", str(out)]) == EXIT_OK
    header, rows = read_csv(out / "merton_oracle.csv")
    assert header[:3] == ["t", "B", "c_star"]
    assert float(rows[0][1]) == pytest.approx(-0.0403, abs=2e-4)


def test_threads_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("MAXPLUS_HJB_THREADS", "3")
    out = tmp_path / "env"
    assert main(["solve-qvi", "--config", write_cfg(tmp_path, CONSTANT), "--out", str(out)]) == EXIT_OK
    assert json.loads((out / "manifest.json").read_text())["config"]["run"]["threads"] == 3


def test_csv_precision_and_svg(tmp_path):
    x = 1 / 3
    write_csv(tmp_path / "a.csv", ["x"], [[x]])
    _, rows = read_csv(tmp_path / "a.csv")
    assert float(rows[0][0]) == x
    svg = svg_line_plot(tmp_path / "p.svg", {"s": ([1, 10, 100], [1.0, 0.5, np.inf])}, logx=True,
                        title="a<b").read_text()
    assert svg.startswith("<svg") and "a&lt;b" in svg and "polyline" in svg
