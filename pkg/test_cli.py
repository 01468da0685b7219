#!/usr/bin/env python3
"""
测试：命令行入口
- 默认值 < 配置文件 < 命令行 的优先级
- 配置错误退出码2并输出JSON错误记录，计算错误退出码1
- prop1 / chibar-curve / moments-surface / simulate 的输出文件
- 同seed重复运行输出逐字节一致
"""
import csv
import filecmp
import json
import logging
from pathlib import Path
import tempfile

import openpyxl
import pytest

from main import main
from src.errors import ConfigError, DomainViolation, UnknownKey
from src.parser import SitesParser, parse_config


def _data_rows(path: Path):
    lines = path.read_text(encoding="utf-8").splitlines()
    assert lines[0].startswith("# gsn-field ")
    return list(csv.DictReader(lines[1:]))


def _write(path: Path, text: str) -> Path:
    path.write_text(text, encoding="utf-8")
    return path


def test_config_precedence(tmp_path):
    cfg = _write(tmp_path / "run.cfg", "# 注释\ncommand = prop1\nrho = 0.4\ndelta2 = 1\nseed = 5\n")
    config = parse_config(["--config", str(cfg), "--rho", "0.8"])
    assert config.command == "prop1"
    assert config.get("rho") == 0.8
    assert config.get("delta2") == 1.0
    assert config.seed == 5
    assert config.get("psi") == 0.2

    positional = parse_config(["moments-surface", "--nu-grid", "0,0.5"])
    assert positional.command == "moments-surface"
    assert positional.get("nu_grid") == [0.0, 0.5]
    assert "nu_grid=0.0,0.5" in positional.describe()


def test_config_errors(tmp_path):
    with pytest.raises(DomainViolation) as info:
        parse_config(["prop1", "--rho", "1.5", "--delta2", "0"])
    assert info.value.key == "rho"
    with pytest.raises(UnknownKey):
        parse_config(["prop1", "--bogus", "1"])
    with pytest.raises(UnknownKey):
        parse_config(["--config", str(_write(tmp_path / "bad.cfg", "colour = red\n"))])
    with pytest.raises(ConfigError):
        parse_config(["--config", str(_write(tmp_path / "bad2.cfg", "command prop1\n"))])
    with pytest.raises(ConfigError):
        parse_config(["--rho", "0.5"])
    with pytest.raises(ConfigError):
        parse_config(["prop1", "--rho", "0.5"])
    with pytest.raises(DomainViolation):
        parse_config(["simulate", "--model", "mixture", "--nu", "0"])
    with pytest.raises(DomainViolation):
        parse_config(["simulate", "--n-sites", "10"])
    with pytest.raises(DomainViolation):
        parse_config(["moments-surface", "--gamma-min", "1", "--gamma-max", "0"])


def test_exit_code_and_error_record(tmp_path, capsys):
    code = main(["prop1", "--rho", "1.5", "--delta2", "0", "--out", str(tmp_path)])
    assert code == 2
    record = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert record["error"] == "DomainViolation"
    assert record["key"] == "rho"
    assert record["allowed"] == "(-1, 1)"

    assert main(["--out", str(tmp_path)]) == 2


def test_prop1_output(tmp_path, capsys):
    assert main(["prop1", "--rho", "0.8", "--delta2", "0", "--delta1", "0.3", "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "threshold = 0.3535534" in out
    assert "AsymptoticallyIndependent(b)" in out

    assert main(["prop1", "--rho", "-0.5", "--delta2", "1", "--out", str(tmp_path)]) == 0
    assert "threshold = inf" in capsys.readouterr().out


def test_chibar_curve_normal_matches_reference(tmp_path):
    args = ["chibar-curve", "--rho", "0.8", "--delta1", "0", "--delta2", "0",
            "--u-points", "12", "--combined", "--out", str(tmp_path)]
    assert main(args) == 0
    curve = _data_rows(tmp_path / "chibar_rho0.8_d10_d20.csv")
    ref = _data_rows(tmp_path / "chibar_rho0.8_reference.csv")
    assert len(curve) == 12
    assert list(curve[0]) == ["u", "rho", "delta1", "delta2", "chi_u", "chibar_u", "flag"]
    for a, b in zip(curve, ref):
        assert abs(float(a["chibar_u"]) - float(b["chibar_u"])) < 1e-6
        assert -1.0 <= float(a["chibar_u"]) <= 1.0
    assert len(_data_rows(tmp_path / "chibar_curves.csv")) == 12


def test_chibar_curve_skewed_with_plot(tmp_path):
    args = ["chibar-curve", "--rho", "0.4", "--delta1", "-0.5", "--delta2", "1",
            "--u-points", "8", "--emit-plots", "--emit-xlsx", "--out", str(tmp_path)]
    assert main(args) == 0
    rows = _data_rows(tmp_path / "chibar_rho0.4_d1m0.5_d21.csv")
    assert [float(r["delta1"]) for r in rows] == [-0.5] * 8
    assert (tmp_path / "chibar_rho0.4_reference.csv").exists()
    svg = (tmp_path / "chibar_rho0.4.svg").read_text(encoding="utf-8")
    assert svg.lstrip().startswith("<?xml")
    wb = openpyxl.load_workbook(tmp_path / "gsn_field_chibar-curve.xlsx")
    assert wb.sheetnames == ["run", "chibar", "reference"]


def test_moments_surface_output(tmp_path):
    args = ["moments-surface", "--gamma-min", "-1", "--gamma-max", "1", "--gamma-step", "0.5",
            "--nu-grid", "0,1", "--emit-xlsx", "--out", str(tmp_path)]
    assert main(args) == 0
    rows = _data_rows(tmp_path / "moments_surface.csv")
    assert len(rows) == 10
    assert list(rows[0]) == ["gamma", "nu", "tau", "sigma", "skewness", "kurtosis"]
    middle = rows[2]
    assert float(middle["gamma"]) == 0.0 and float(middle["skewness"]) == 0.0
    assert float(middle["kurtosis"]) == 3.0
    wb = openpyxl.load_workbook(tmp_path / "gsn_field_moments-surface.xlsx")
    assert wb["moments"].max_row == 11


def test_simulate_is_deterministic():
    args = ["simulate", "--model", "mixture", "--n-sites", "9", "--n-reps", "20",
            "--emit-latents", "--seed", "123"]
    with tempfile.TemporaryDirectory() as a, tempfile.TemporaryDirectory() as b, \
            tempfile.TemporaryDirectory() as c:
        assert main(args + ["--out", a]) == 0
        assert main(args + ["--out", b]) == 0
        assert main(["simulate", "--model", "mixture", "--n-sites", "9", "--n-reps", "20",
                     "--emit-latents", "--seed", "124", "--out", c]) == 0
        name = "simgrid_mixture.csv"
        assert filecmp.cmp(Path(a) / name, Path(b) / name, shallow=False)
        assert not filecmp.cmp(Path(a) / name, Path(c) / name, shallow=False)
        rows = _data_rows(Path(a) / name)
        assert len(rows) == 9 * 20
        assert list(rows[0]) == ["rep", "site_id", "x", "y", "value", "w", "delta", "lambda", "t", "epsilon"]


def test_sites_file(tmp_path):
    sites_csv = _write(tmp_path / "sites.csv",
                       "site_id,x,y,elev\nA,0.0,0.0,1.0\nB,0.5,0.0,2.0\nC,0.0,0.5,3.0\n")
    sites, design, covariates = SitesParser(str(sites_csv)).parse()
    assert sites.site_ids == ["A", "B", "C"]
    assert covariates == ["elev"]
    assert design.tolist() == [[1.0, 1.0], [1.0, 2.0], [1.0, 3.0]]

    out = tmp_path / "out"
    args = ["simulate", "--model", "mixture", "--sites", str(sites_csv), "--beta", "1,0.5",
            "--n-reps", "5", "--out", str(out)]
    assert main(args) == 0
    rows = _data_rows(out / "simgrid_mixture.csv")
    assert [r["site_id"] for r in rows[:3]] == ["A", "B", "C"]

    # beta长度与设计矩阵列数不符是计算错误，退出码1
    bad = ["simulate", "--model", "mixture", "--sites", str(sites_csv), "--beta", "1",
           "--n-reps", "5", "--out", str(out)]
    assert main(bad) == 1

    with pytest.raises(ConfigError):
        SitesParser(str(_write(tmp_path / "nox.csv", "site_id,y\nA,0\n"))).parse()
    with pytest.raises(ConfigError):
        SitesParser(str(_write(tmp_path / "dup.csv", "site_id,x,y\nA,0,0\nA,1,1\n"))).parse()
    assert main(["simulate", "--sites", str(tmp_path / "missing.csv"), "--out", str(out)]) == 2


def test_sgrf_with_covariates_warns(tmp_path, caplog):
    sites_csv = _write(tmp_path / "sites.csv",
                       "site_id,x,y,elev\nA,0.0,0.0,1.0\nB,0.5,0.0,2.0\nC,0.0,0.5,3.0\n")
    out = tmp_path / "out"
    with caplog.at_level(logging.WARNING, logger="src.runner"):
        assert main(["simulate", "--sites", str(sites_csv), "--n-reps", "5", "--out", str(out)]) == 0
    assert any("elev" in r.getMessage() for r in caplog.records)
    assert (out / "simgrid_sgrf.csv").exists()

    caplog.clear()
    plain = _write(tmp_path / "plain.csv", "site_id,x,y\nA,0.0,0.0\nB,0.5,0.0\n")
    with caplog.at_level(logging.WARNING, logger="src.runner"):
        assert main(["simulate", "--sites", str(plain), "--n-reps", "5", "--out", str(out)]) == 0
    assert not any("协变量" in r.getMessage() for r in caplog.records)


def main_all():
    with tempfile.TemporaryDirectory() as td:
        test_config_precedence(Path(td))
    print("TEST CLI: OK")


if __name__ == "__main__":
    main_all()
