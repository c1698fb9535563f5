import json
import shutil
from pathlib import Path

import numpy as np
import pytest

from ddpricing.cli import load_config, main
from ddpricing.errors import ConfigError
from ddpricing.report import Report, render, write_report

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


@pytest.fixture
def cfgdir(tmp_path):
    for f in CONFIGS.glob("*.json"):
        shutil.copy(f, tmp_path)
    return tmp_path


def write(tmp_path, doc, name="c.json"):
    p = tmp_path / name
    p.write_text(json.dumps(doc))
    return p


MINIMAL = {"market": {"N": 2, "c0": 1}, "supply": {"kind": "deterministic", "params": {"path": [1, 0]}},
           "types": [{"deadline": 1, "R": 1, "q": 1, "mass": 1}]}


class TestLoadConfig:
    def test_minimal(self, tmp_path):
        cfg = load_config(write(tmp_path, MINIMAL))
        assert cfg.market.N == 2 and len(cfg.population.entries) == 1

    def test_bad_masses(self, tmp_path):
        doc = dict(MINIMAL, types=[{"deadline": 1, "R": 1, "q": 1, "mass": 0.9}])
        with pytest.raises(ConfigError) as exc:
            load_config(write(tmp_path, doc))
        assert any("types[]" in v for v in exc.value.violations)

    def test_path_length(self, tmp_path):
        doc = dict(MINIMAL, supply={"kind": "deterministic", "params": {"path": [1, 0, 0]}})
        with pytest.raises(ConfigError):
            load_config(write(tmp_path, doc))

    def test_all_violations_collected(self, tmp_path):
        doc = {"market": {"N": 2, "c0": -1}, "supply": {"kind": "deterministic", "params": {"path": [1]}},
               "types": [{"deadline": 5, "R": 1, "q": 1, "mass": 1}]}
        with pytest.raises(ConfigError) as exc:
            load_config(write(tmp_path, doc))
        assert len(exc.value.violations) >= 2

    def test_json_syntax_error_location(self, tmp_path):
        p = tmp_path / "bad.json"
        p.write_text('{"market": {"N": 2,,}}')
        with pytest.raises(ConfigError, match="line 1, column"):
            load_config(p)

    def test_trace_file_relative(self, tmp_path):
        (tmp_path / "trace.csv").write_text("s0,s1\n1,0\n0,2\n")
        doc = dict(MINIMAL, supply={"kind": "trace-file", "params": {"file": "trace.csv"}})
        cfg = load_config(write(tmp_path, doc))
        assert cfg.supply.horizon() == 2


class TestReports:
    def test_byte_identical(self, tmp_path):
        r = Report("menu", {"p": np.array([0.5, 0.25]), "c0": 1.0}, [{"deadline": 1, "p": 1 / 3}])
        for fmt in ("json", "csv", "md"):
            write_report(r, fmt, tmp_path / f"a.{fmt}")
            write_report(r, fmt, tmp_path / f"b.{fmt}")
            assert (tmp_path / f"a.{fmt}").read_bytes() == (tmp_path / f"b.{fmt}").read_bytes()

    def test_stderr_column(self):
        r = Report("menu", {}, [{"deadline": 1, "p": 0.5, "stderr": 0.01}])
        assert "stderr" in render(r, "csv").splitlines()[0]

    def test_empty(self):
        r = Report("menu")
        doc = json.loads(render(r, "json"))
        assert doc == {"schema": "ddp.menu.v1", "rows": []}
        assert "ddp.menu.v1" in render(r, "md")
        assert render(Report("menu", columns=["deadline", "p"]), "csv") == "deadline,p\n"

    def test_float_precision(self):
        doc = json.loads(render(Report("x", {"v": 1 / 3}), "json"))
        assert doc["v"] == 0.333333333333

    def test_unwritable(self, tmp_path):
        with pytest.raises(OSError):
            write_report(Report("x"), "json", tmp_path / "missing" / "out.json")


class TestCli:
    def test_price_golden(self, cfgdir):
        out = cfgdir / "menu.json"
        assert main(["price", "--config", str(cfgdir / "golden.json"), "--out", str(out)]) == 0
        doc = json.loads(out.read_text())
        assert doc["p"] == [0.5, 0.25] and doc["expected_cost"] == 1.25
        assert doc["schema"] == "ddp.price.v1" and doc["method"] == "exact-enumeration"

    def test_schedule_zero_supply(self, cfgdir):
        out = cfgdir / "trace.csv"
        assert main(["schedule", "--config", str(cfgdir / "zero_supply.json"), "--out", str(out)]) == 0
        lines = out.read_text().splitlines()
        assert lines[0] == "scenario,period,class,u,v,z_before,z_after"
        firm = {(l.split(",")[1], l.split(",")[2]): float(l.split(",")[4]) for l in lines[1:]}
        assert firm[("0", "1")] == 2 and firm[("1", "2")] == 1

    def test_oracle(self, cfgdir):
        out = cfgdir / "oracle.json"
        assert main(["oracle-edf", "--config", str(cfgdir / "oracle.json"), "--out", str(out)]) == 0
        assert json.loads(out.read_text())["verdict"] == "EDF cost <= oracle min + 1e-9: pass"

    @pytest.mark.parametrize("cmd", ["audit-ic", "equilibrium", "gradcheck"])
    def test_other_commands_golden(self, cfgdir, cmd):
        out = cfgdir / "o.json"
        assert main([cmd, "--config", str(cfgdir / "golden.json"), "--grid", "4", "--out", str(out)]) == 0
        assert json.loads(out.read_text())["schema"].startswith("ddp.")

    def test_ic_search_reports_violation(self, cfgdir):
        out = cfgdir / "s.json"
        assert main(["ic-search", "--config", str(cfgdir / "oracle.json"), "--grid", "4", "--out", str(out)]) == 0
        assert json.loads(out.read_text())["found"] is True

    def test_violation_exit_code(self, cfgdir):
        doc = json.loads((cfgdir / "golden.json").read_text())
        doc["gradcheck"] = {"rel_tol": 1e-3}
        p = write(cfgdir, doc, "tight.json")
        # h = 1.5 straddles a kink of the cost, so the central difference misses the price
        assert main(["gradcheck", "--config", str(p), "--step", "1.5", "--out", str(cfgdir / "g.json")]) == 2

    def test_usage_errors(self, cfgdir, capsys):
        assert main(["price", "--config", str(cfgdir / "nope.json")]) == 1
        assert main(["price", "--config", str(cfgdir / "golden.json"), "--step", "-1"]) == 1
        with pytest.raises(SystemExit) as exc:
            main(["bogus", "--config", "x"])
        assert exc.value.code == 1
        err = capsys.readouterr().err
        assert "config_error" in err or "cannot read" in err

    @pytest.mark.parametrize("cmd,conf,fmt", [("price", "iid_uniform.json", "json"),
                                               ("schedule", "iid_uniform.json", "csv"),
                                               ("audit-ic", "iid_uniform.json", "md"),
                                               ("equilibrium", "golden.json", "json"),
                                               ("gradcheck", "iid_uniform.json", "csv")])
    def test_determinism_across_workers(self, cfgdir, cmd, conf, fmt):
        blobs = []
        for w in (1, 4, 1):
            out = cfgdir / f"{cmd}-{w}-{len(blobs)}.{fmt}"
            main([cmd, "--config", str(cfgdir / conf), "--workers", str(w), "--grid", "4",
                  "--format", fmt, "--out", str(out)])
            blobs.append(out.read_bytes())
        assert blobs[0] == blobs[1] == blobs[2]
