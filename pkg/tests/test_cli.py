import json

import pytest

from streamprofiler.cli import Config, main


def run(argv):
    return main([str(a) for a in argv])


class TestConfig:
    def test_round_trips_through_file(self, tmp_path):
        cfg = Config()
        path = tmp_path / "config.json"
        cfg.save(path)
        assert Config.load(path) == cfg

    def test_rejects_unknown_sections(self, tmp_path):
        path = tmp_path / "config.json"
        path.write_text(json.dumps({"rates": {}}))
        with pytest.raises(ValueError, match="unknown config sections"):
            Config.load(path)

    def test_rejects_invalid_values(self, tmp_path):
        path = tmp_path / "config.json"
        path.write_text(json.dumps({"rate": {"c": 0.4}}))
        with pytest.raises(ValueError):
            Config.load(path)


class TestGenerate:
    def test_writes_trace_and_labels(self, tmp_path):
        out = tmp_path / "mq1"
        assert run(["generate", "MQ", "--seed", 1, "--out", out]) == 0
        assert (tmp_path / "mq1.csv").exists()
        assert (tmp_path / "mq1_labels.csv").exists()

    def test_deterministic_files(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        run(["generate", "QC", "--seed", 7, "--out", a])
        run(["generate", "QC", "--seed", 7, "--out", b])
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
        assert (tmp_path / "a_labels.csv").read_bytes() == (tmp_path / "b_labels.csv").read_bytes()

    def test_unknown_scenario_exits_2_and_lists_presets(self, tmp_path, capsys):
        assert run(["generate", "ZZ", "--out", tmp_path / "x"]) == 2
        assert "MQ, HQ, QC, AQ" in capsys.readouterr().err

    def test_spec_file(self, tmp_path):
        spec = {
            "encode_rates": [[0.0, 80750.0]],
            "segment_duration": 5.0,
            "buffer_target": 2e6,
            "fill_throughput": 807500.0,
            "video_duration": 60.0,
            "packet_size": 1400,
            "rng_seed": 0,
            "name": "custom",
        }
        spec_path = tmp_path / "spec.json"
        spec_path.write_text(json.dumps(spec))
        assert run(["generate", "--spec", spec_path, "--out", tmp_path / "c"]) == 0
        assert (tmp_path / "c.csv").exists()

    def test_malformed_spec_exits_2(self, tmp_path, capsys):
        spec_path = tmp_path / "spec.json"
        spec_path.write_text(json.dumps({"encode_rates": [[0.0, 80750.0]], "bogus_field": 1}))
        assert run(["generate", "--spec", spec_path, "--out", tmp_path / "c"]) == 2
        assert "bogus_field" in capsys.readouterr().err

    def test_missing_scenario_and_spec_is_usage_error(self, tmp_path):
        with pytest.raises(SystemExit) as exc:
            run(["generate", "--out", tmp_path / "x"])
        assert exc.value.code == 2


@pytest.fixture(scope="module")
def trace_path(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("traces")
    run(["generate", "MQ", "--seed", 1, "--out", tmp / "mq"])
    return tmp / "mq.csv"


class TestAnalyze:

    def test_detects_video_stream(self, tmp_path, trace_path, capsys):
        out = tmp_path / "out"
        assert run(["analyze", trace_path, "--out", out]) == 0
        reports = list(out.glob("*.json"))
        assert len(reports) == 1
        data = json.loads(reports[0].read_text())
        assert data["verdict"]["is_video_stream"] is True
        assert "bytes per second" in data["unit_note"]
        assert "bytes per second" in capsys.readouterr().out

    def test_bulk_is_not_video(self, tmp_path):
        run(["generate", "bulk", "--out", tmp_path / "bulk"])
        out = tmp_path / "out"
        assert run(["analyze", tmp_path / "bulk.csv", "--out", out]) == 0
        data = json.loads(next(out.glob("*.json")).read_text())
        assert data["verdict"]["is_video_stream"] is False

    def test_missing_file_exits_2_naming_path(self, tmp_path, capsys):
        missing = tmp_path / "nope.csv"
        assert run(["analyze", missing, "--out", tmp_path / "out"]) == 2
        assert str(missing) in capsys.readouterr().err

    def test_debug_dumps(self, tmp_path, trace_path):
        out = tmp_path / "dbg"
        assert run(["analyze", trace_path, "--out", out, "--debug"]) == 0
        stems = {p.name.rsplit("_", 1)[-1] for p in out.glob("*.csv")}
        assert stems == {"rate.csv", "bursts.csv", "segments.csv", "buffer.csv"}

    def test_parameter_override_changes_result(self, tmp_path, trace_path):
        out = tmp_path / "strict"
        # an absurd steady-burst requirement suppresses the steady phase
        assert run(["analyze", trace_path, "--out", out, "--h-n", 10_000]) == 0
        data = json.loads(next(out.glob("*.json")).read_text())
        assert data["verdict"]["is_video_stream"] is False


class TestEvaluate:
    def test_small_run_passes_and_writes_report(self, tmp_path):
        out = tmp_path / "eval"
        assert run(["evaluate", "MQ", "--runs", 3, "--seed", 11, "--out", out]) == 0
        report = json.loads((out / "report_MQ.json").read_text())
        assert report["runs"] == 3
        assert (out / "cdf_MQ_steady1.csv").exists()

    def test_threshold_violation_exits_1(self, tmp_path, capsys):
        # impossible tolerance: no candidate can ever match, so no video stream
        code = run(["evaluate", "MQ", "--runs", 1, "--h-s", 10**12])
        assert code == 1
        assert "THRESHOLD VIOLATED" in capsys.readouterr().out

    def test_zero_runs_is_usage_error(self):
        with pytest.raises(SystemExit) as exc:
            run(["evaluate", "MQ", "--runs", 0])
        assert exc.value.code == 2


class TestReport:
    def test_pretty_prints_profile(self, tmp_path, capsys):
        run(["generate", "MQ", "--seed", 2, "--out", tmp_path / "mq"])
        out = tmp_path / "out"
        run(["analyze", tmp_path / "mq.csv", "--out", out])
        capsys.readouterr()
        report_path = next(out.glob("*.json"))
        assert run(["report", report_path]) == 0
        text = capsys.readouterr().out
        assert "video stream: True" in text
        assert "kbps" in text

    def test_pretty_prints_evaluation(self, tmp_path, capsys):
        out = tmp_path / "eval"
        run(["evaluate", "HQ", "--runs", 2, "--out", out])
        capsys.readouterr()
        assert run(["report", out / "report_HQ.json"]) == 0
        assert "confusion diagonal" in capsys.readouterr().out

    def test_missing_report_exits_2(self, tmp_path):
        assert run(["report", tmp_path / "none.json"]) == 2
