from __future__ import annotations

import json
from pathlib import Path

import pytest

from restmut import cli, fixtures, iots
from restmut.config import ConfigError, RunConfig
from restmut.executor import TestResult
from restmut.iots import FAIL, INC, PASS
from restmut.report import ReportError, build_report, failed_pct, load_results, render_table

LOG = fixtures.asset_path("accman.jsonl")
SESSION_LOG = fixtures.asset_path("accman_session.jsonl")


def quick_config(tmp_path: Path, **extra) -> str:
    doc = {"quiescence_ms": 600, "session_delay_s": 0.6, **extra}
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(doc))
    return str(path)


class TestConfig:
    def test_defaults(self):
        cfg = RunConfig()
        assert (cfg.seed, cfg.strategy, cfg.quiescence_ms, cfg.mock_port) == (0, "S0", 5000, "auto")

    def test_round_trip(self):
        cfg = RunConfig(seed=3, strategy="s2", n=4, operators=["xss"])
        assert RunConfig.from_json(json.loads(cfg.dumps())) == cfg

    @pytest.mark.parametrize("bad", [{"strategy": "S7"}, {"n": 0}, {"mock_port": "x"}, {"stages": ["fly"]},
                                     {"bogus": 1}, {"session_key": "ip"}])
    def test_rejects(self, bad):
        with pytest.raises(ConfigError):
            RunConfig.from_json(bad)

    def test_precedence(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text(json.dumps({"seed": 1, "strategy": "S1"}))
        env = {"RESTMUT_CONFIG": str(path), "RESTMUT_SEED": "5"}
        assert RunConfig.from_env(env).seed == 5
        assert RunConfig.from_env(env, seed=9).seed == 9
        assert RunConfig.from_env(env).strategy == "S1"

    def test_bad_seed(self):
        with pytest.raises(ConfigError):
            RunConfig.from_env({"RESTMUT_SEED": "x"})


def res(verdict, op="verb-change", warnings=()):
    return TestResult("m", f"{op}-{verdict}", op, verdict, warnings=list(warnings))


class TestReport:
    def test_percentage(self):
        rep = build_report([res(PASS)] * 9 + [res(FAIL)])
        assert rep["summary"]["failedPct"] == 10.0 == failed_pct(1, 10)
        assert rep["exitCode"] == 1

    def test_empty(self):
        rep = build_report([])
        assert rep["summary"] == {PASS: 0, FAIL: 0, INC: 0, "total": 0, "failedPct": 0.0}
        assert rep["perOperator"] == {} and rep["exitCode"] == 0
        assert "total" in render_table(rep)

    def test_weaknesses(self):
        results = [res(FAIL, "path-manip"), res(INC, "token-removal", ["flag"]), res(PASS, "verb-change")]
        rep = build_report(results, weaknesses=fixtures.WEAKNESSES)
        w = rep["weaknesses"]
        assert w["path traversal stalls the service"] == ["path-manip-fail"]
        assert w["missing token ignored"] == ["token-removal-inc"]
        assert w["access bypass with HTTP verbs"] == []
        table = render_table(rep)
        assert "not detected" in table and "detected by 1 mutant(s)" in table

    def test_load(self, tmp_path):
        rep = build_report([res(PASS), res(FAIL)])
        p = tmp_path / "r.json"
        p.write_text(json.dumps(rep))
        assert [r.verdict for r in load_results(p)] == [PASS, FAIL]
        p.write_text("{}")
        with pytest.raises(ReportError):
            load_results(p)
        with pytest.raises(ReportError):
            load_results(tmp_path / "missing.json")


class TestCommands:
    def test_ingest_mutate_run(self, tmp_path, capsys):
        tcs, muts = tmp_path / "tcs", tmp_path / "muts"
        assert cli.main(["ingest", "--log", LOG, "--sut", "AccMan", "--out", str(tcs)]) == 0
        assert iots.load_file(str(tcs / "accman-0.json")).sut_id == "AccMan"
        assert json.loads((tcs / "bindings.json").read_text())["token"] == "1234"
        assert cli.main(["mutate", "--in", str(tcs), "--ops", "token-removal", "--out", str(muts), "--seed", "4"]) == 0
        man = json.loads((muts / "manifest.json").read_text())
        assert man["total"] == 2 and man["seed"] == 4
        with fixtures.serve(fixtures.Scripted("403")) as url:
            code = cli.main(["run", "--plans", str(muts), "--sut", url, "--setup-url", fixtures.reset_url(url),
                             "--timeout-ms", "600", "--report", str(tmp_path / "rep.json"),
                             "--emit", "junit-xml", "--junit", str(tmp_path / "j.xml")])
        assert code == 0
        rep = json.loads((tmp_path / "rep.json").read_text())
        assert rep["summary"]["total"] == 2 and rep["schema"] == "report/1"
        assert (tmp_path / "j.xml").read_text().startswith("<testsuite")
        assert cli.main(["report", "--results", str(tmp_path / "rep.json"), "--json", str(tmp_path / "r2.json")]) == 0
        assert "token-removal" in capsys.readouterr().out

    def test_report_malformed(self, tmp_path):
        p = tmp_path / "bad.json"
        p.write_text("[1]")
        assert cli.main(["report", "--results", str(p)]) == 2

    def test_dry_run_sends_nothing(self, tmp_path):
        out = tmp_path / "out"
        code = cli.main(["pipeline", "--log", LOG, "--sut-id", "AccMan", "--sut", "http://127.0.0.1:9",
                         "--out", str(out), "--dry-run"])
        assert code == 0
        assert list((out / "mutants").glob("*.json")) and list((out / "plans").glob("*.json"))
        assert not (out / "report.json").exists()

    def test_missing_sut_url(self, tmp_path, capsys):
        code = cli.main(["pipeline", "--log", LOG, "--sut-id", "AccMan", "--out", str(tmp_path / "o")])
        assert code == 2
        assert "SUT URL" in capsys.readouterr().err

    def test_stage_error_names_stage(self, tmp_path, capsys):
        bad = tmp_path / "bad.jsonl"
        bad.write_text("{nope\n")
        assert cli.main(["pipeline", "--log", str(bad), "--sut-id", "AccMan", "--dry-run",
                         "--out", str(tmp_path / "o")]) == 2
        assert "ingest" in capsys.readouterr().err

    def test_skip_stages(self, tmp_path):
        out = tmp_path / "out"
        assert cli.main(["pipeline", "--log", LOG, "--sut-id", "AccMan", "--out", str(out),
                         "--skip", "run", "--skip", "report", "--skip", "concretize"]) == 0
        assert (out / "mutants" / "manifest.json").exists() and not (out / "plans").exists()

    def test_save_config_reproduces(self, tmp_path):
        first = tmp_path / "a"
        cli.main(["pipeline", "--log", LOG, "--sut-id", "AccMan", "--out", str(first), "--dry-run",
                  "--seed", "11", "--save-config", str(tmp_path / "saved.json")])
        cfg = json.loads((tmp_path / "saved.json").read_text())
        assert cfg["seed"] == 11
        cfg["out_dir"] = str(tmp_path / "b")
        (tmp_path / "saved.json").write_text(json.dumps(cfg))
        assert cli.main(["pipeline", "--config", str(tmp_path / "saved.json")]) == 0
        a = sorted(p.name for p in (first / "mutants").iterdir())
        assert a == sorted(p.name for p in (tmp_path / "b" / "mutants").iterdir())

    def test_seed_from_environment(self, tmp_path, monkeypatch):
        monkeypatch.setenv("RESTMUT_SEED", "21")
        cli.main(["mutate", "--in", str(Path(fixtures.asset_path("accman_check.json")).parent), "--ops", "verb-change",
                  "--out", str(tmp_path)])
        assert json.loads((tmp_path / "manifest.json").read_text())["seed"] == 21


def test_pipeline_against_the_vulnerable_service(tmp_path):
    service = fixtures.AccMan(False, session_ttl=0.3, stall=2.0)
    with fixtures.serve(service) as url:
        code = cli.main(["pipeline", "--log", LOG, "--log", SESSION_LOG, "--sut-id", "AccMan", "--sut", url,
                         "--setup-url", fixtures.reset_url(url), "--out", str(tmp_path / "o"),
                         "--config", quick_config(tmp_path), "--fixture-weaknesses", "--emit", "junit-xml"])
    rep = json.loads((tmp_path / "o" / "report.json").read_text())
    assert code == 1 and rep["summary"][FAIL] >= 1
    assert all(rep["weaknesses"].values())
    assert (tmp_path / "o" / "junit.xml").exists()
