import json

import numpy as np
import pandas as pd
import pytest

from ltu_eval import __version__
from ltu_eval.cli import CONFIG_ENV, main, sha256
from ltu_eval.panel_ingest import read_cells
from ltu_eval.synth_dgp import make_rng

PRINTED_AVERAGES = "year,avg_407,avg_190\n2010,7023,5726\n2011,5816,5479\n2012,5846,5502\n2013,5722,5378\n2014,6821,6366\n"


def run_cli(args, capsys=None):
    code = main([str(a) for a in args])
    err = capsys.readouterr().err if capsys else ""
    return code, err


def manifest(out, command):
    return json.loads((out / f"manifest_{command.replace('-', '_')}.json").read_text())


def digests(paths):
    return {p.name: sha256(p) for p in paths}


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    out = tmp_path_factory.mktemp("corpus")
    assert main(["simulate", "--seed", "11", "--n-workers", "40000", "--out-dir", str(out)]) == 0
    return out / "contracts.csv"


def series_csv(path, seed=0):
    rng = make_rng(seed)
    day = pd.date_range("2010-01-01", "2015-12-31", freq="D")
    y = 1e-3 + 2e-4 * rng.standard_normal(day.size)
    pd.DataFrame({"day": day.strftime("%Y-%m-%d"), "y": y, "group_size": 1000, "hires": 1}).to_csv(path, index=False)
    return path


class TestPipeline:
    def test_simulate_then_null_duration_estimate(self, corpus, tmp_path):
        code = main(["estimate-duration", "--contracts", str(corpus), "--out-dir", str(tmp_path)])
        assert code == 0
        row = json.loads((tmp_path / "duration_rdd.json").read_text())["rows"][0]
        assert row["n_obs"] + row["n_empty_cells"] == 45_291
        assert row["p_value"] > 0.01
        assert (tmp_path / "duration_rdd.csv").is_file()
        m = manifest(tmp_path, "estimate-duration")
        assert m["status"] == "ok" and m["version"] == __version__
        assert str(corpus) in m["inputs"]

    def test_ingest_writes_cells_and_sidecars(self, corpus, tmp_path):
        code = main(["ingest", "--contracts", str(corpus), "--out-dir", str(tmp_path), "--daily", "--histogram"])
        assert code == 0
        panel = read_cells(tmp_path / "cells.csv")
        assert len(panel) == 45_291
        side = json.loads((tmp_path / "hires_by_duration.json").read_text())
        assert side["markers"][0]["value"] == 729 and side["data"] == "hires_by_duration.csv"
        listed = set(manifest(tmp_path, "ingest")["outputs"])
        produced = {str(p) for p in tmp_path.iterdir() if not p.name.startswith("manifest")}
        assert produced == listed

    def test_exclude_december_tag(self, tmp_path, capsys):
        series = series_csv(tmp_path / "series.csv")
        code, _ = run_cli(["estimate-time", "--series", series, "--exclude-month", "2015-12", "--out-dir", tmp_path],
                          capsys)
        assert code == 0
        row = json.loads((tmp_path / "time_rdd.json").read_text())["rows"][0]
        assert row["variant_tag"] == "exclude_december" and row["n_obs"] == 2160
        side = json.loads((tmp_path / "time_rdd_curve.json").read_text())
        assert side["markers"][0]["value"] == "2015-01-01"

    def test_subsidy_compare_printed_averages(self, tmp_path):
        src = tmp_path / "averages.csv"
        src.write_text(PRINTED_AVERAGES)
        assert main(["subsidy-compare", "--input", str(src), "--out-dir", str(tmp_path)]) == 0
        rows = {r["year"]: r for r in json.loads((tmp_path / "subsidy.json").read_text())["rows"]}
        assert rows[2010]["relative_diff"] == pytest.approx(0.227, abs=1e-3)
        assert pd.read_csv(tmp_path / "subsidy.csv").shape[0] == 5

    def test_indirect_effects(self, corpus, tmp_path):
        assert main(["indirect-effects", "--contracts", str(corpus), "--out-dir", str(tmp_path)]) == 0
        rows = json.loads((tmp_path / "indirect.json").read_text())["rows"]
        assert len(rows) == 8 and all("stars" in r for r in rows)
        assert (tmp_path / "indirect_curve.csv").is_file()

    def test_report_collects_tables(self, tmp_path):
        src = tmp_path / "averages.csv"
        src.write_text(PRINTED_AVERAGES)
        main(["subsidy-compare", "--input", str(src), "--out-dir", str(tmp_path / "t")])
        assert main(["report", "--inputs", str(tmp_path / "t"), "--out-dir", str(tmp_path)]) == 0
        assert "## subsidy" in (tmp_path / "report.md").read_text()


class TestInvariants:
    def test_idempotent_digests(self, tmp_path):
        series = series_csv(tmp_path / "series.csv", seed=1)
        outs = []
        for name in ("a", "b"):
            out = tmp_path / name
            assert main(["estimate-time", "--series", str(series), "--out-dir", str(out)]) == 0
            outs.append(digests(p for p in out.iterdir() if not p.name.startswith("manifest")))
        assert outs[0] == outs[1] and len(outs[0]) == 6

    def test_inputs_not_mutated(self, corpus, tmp_path):
        before = sha256(corpus)
        main(["estimate-duration", "--contracts", str(corpus), "--out-dir", str(tmp_path), "--battery"])
        assert sha256(corpus) == before

    def test_cells_independent_of_threads(self, tmp_path):
        got = []
        for threads in (1, 4):
            out = tmp_path / f"t{threads}"
            assert main(["simulate", "--panel", "--seed", "5", "--threads", str(threads), "--out-dir", str(out)]) == 0
            got.append(sha256(out / "cells.csv"))
        assert got[0] == got[1]

    def test_monte_carlo_independent_of_threads(self, tmp_path):
        got = []
        for threads in (1, 3):
            out = tmp_path / f"t{threads}"
            assert main(["monte-carlo", "--replications", "6", "--seed", "2", "--threads", str(threads),
                         "--out-dir", str(out)]) == 0
            got.append((out / "monte_carlo.json").read_bytes())
        assert got[0] == got[1]
        assert json.loads(got[0])["replications"] == 6


class TestErrors:
    def test_missing_input(self, tmp_path, capsys):
        code, err = run_cli(["select-bandwidth", "--cells", tmp_path / "nope.csv", "--out-dir", tmp_path], capsys)
        assert code == 3
        report = json.loads(err)
        assert report["status"] == "error" and report["error"]["type"] == "InputNotFound"
        m = manifest(tmp_path, "select-bandwidth")
        assert m["status"] == "error" and m["error"]["type"] == "InputNotFound"

    def test_unknown_config_key(self, tmp_path, capsys):
        cfg = tmp_path / "cfg.yaml"
        cfg.write_text("subsidy_compare:\n  bogus: 1\n")
        code, err = run_cli(["subsidy-compare", "--config", cfg, "--out-dir", tmp_path], capsys)
        assert code == 2 and json.loads(err)["error"]["type"] == "ConfigError"

    def test_malformed_yaml(self, tmp_path, capsys):
        cfg = tmp_path / "cfg.yaml"
        cfg.write_text("a: [1, 2\n")
        code, _ = run_cli(["subsidy-compare", "--config", cfg, "--out-dir", tmp_path], capsys)
        assert code == 2

    def test_downstream_error_has_module(self, tmp_path, capsys):
        src = tmp_path / "records.csv"
        src.write_text("year,wage,firm_class\n2014,-5,regular\n")
        code, err = run_cli(["subsidy-compare", "--input", src, "--out-dir", tmp_path], capsys)
        report = json.loads(err)
        assert code == 1
        assert report["error"]["type"] == "NonPositiveWage" and report["error"]["module"] == "subsidy_calc"

    def test_bad_month_flag(self, tmp_path, capsys):
        series = series_csv(tmp_path / "s.csv")
        code, _ = run_cli(["estimate-time", "--series", series, "--exclude-month", "2015-13", "--out-dir", tmp_path],
                          capsys)
        assert code == 2


class TestConfig:
    def test_env_config_and_flag_precedence(self, tmp_path, monkeypatch):
        src = tmp_path / "averages.csv"
        src.write_text(PRINTED_AVERAGES)
        cfg = tmp_path / "cfg.yaml"
        cfg.write_text(f"subsidy_compare:\n  input: {src}\n  output: from_file\n")
        monkeypatch.setenv(CONFIG_ENV, str(cfg))
        assert main(["subsidy-compare", "--out-dir", str(tmp_path)]) == 0
        assert (tmp_path / "from_file.json").is_file()
        assert main(["subsidy-compare", "--out-dir", str(tmp_path), "--output", "from_flag"]) == 0
        assert (tmp_path / "from_flag.json").is_file()
        m = manifest(tmp_path, "subsidy-compare")
        assert m["config"]["output"] == "from_flag" and m["config_file"] == str(cfg)

    def test_dgp_section(self, tmp_path):
        cfg = tmp_path / "cfg.yaml"
        cfg.write_text("dgp:\n  seed: 9\n  n_workers: 5000\n")
        assert main(["simulate", "--config", str(cfg), "--out-dir", str(tmp_path)]) == 0
        assert manifest(tmp_path, "simulate")["details"]["dgp"]["n_workers"] == 5000
        workers = pd.read_csv(tmp_path / "truth.csv")["worker"]
        assert workers.max() < 5000 and np.unique(workers).size > 4000
