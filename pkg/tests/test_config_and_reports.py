"""Configuration overlays, report rendering, logging and progress tracking."""

import json
import math

import jsonschema
import numpy as np
import pandas as pd
import pytest

from engine.utils.config_parser import ConfigParser, deep_merge, load_schema
from engine.utils.logging_config import (
    disable_quiet_mode,
    enable_quiet_mode,
    is_quiet_mode,
    setup_logging,
)
from engine.utils.progress_tracker import ProgressTracker
from engine.utils.report_writer import ReportWriter, RunReport, format_float, mapping_table, to_jsonable


def test_base_config_is_valid():
    parser = ConfigParser()
    config = parser.parse_config()
    assert config["fuzz"]["count"] == 1000
    assert parser.validate_config(config) == []
    summary = parser.get_config_summary(config)
    assert summary["pde_grid"] == (2000, 1000)
    assert summary["mc_paths"] == 1_000_000
    assert "tolerances" in summary["sections"]


def test_yaml_overlay_merges(tmp_path):
    overlay = tmp_path / "small.yaml"
    overlay.write_text("fuzz:\n  count: 5\npde:\n  n_space: 200\n")
    config = ConfigParser().parse_config(str(overlay))
    assert config["fuzz"]["count"] == 5
    assert config["fuzz"]["max_horizon"] == 3
    assert config["pde"] == {"n_space": 200, "n_time": 1000, "richardson": True}


def test_parsed_config_is_a_copy(tmp_path):
    parser = ConfigParser()
    first = parser.parse_config()
    first["fuzz"]["count"] = -1
    assert parser.parse_config()["fuzz"]["count"] == 1000
    parser.clear_cache()
    assert parser.config_cache == {}


def test_invalid_overlay(tmp_path):
    overlay = tmp_path / "bad.json"
    overlay.write_text(json.dumps({"fuzz": {"count": -3}}))
    with pytest.raises(ValueError, match="Invalid configuration") as info:
        ConfigParser().parse_config(str(overlay))
    assert "fuzz/count" in str(info.value)


def test_overlay_errors(tmp_path):
    with pytest.raises(FileNotFoundError):
        ConfigParser().parse_config(str(tmp_path / "missing.json"))
    other = tmp_path / "config.toml"
    other.write_text("x = 1\n")
    with pytest.raises(ValueError, match="Unsupported config file format"):
        ConfigParser().parse_config(str(other))
    listed = tmp_path / "list.yaml"
    listed.write_text("- 1\n- 2\n")
    with pytest.raises(ValueError, match="must be a mapping"):
        ConfigParser().parse_config(str(listed))


def test_deep_merge_leaves_inputs_alone():
    base = {"a": {"b": 1, "c": 2}, "d": [1]}
    merged = deep_merge(base, {"a": {"c": 3}, "d": [2, 3]})
    assert merged == {"a": {"b": 1, "c": 3}, "d": [2, 3]}
    assert base == {"a": {"b": 1, "c": 2}, "d": [1]}


def test_format_float():
    assert format_float(0.1) == "0.10000000000000001"
    assert format_float(1 / 3, 10) == "0.3333333333"
    assert format_float(math.nan) == "nan"
    assert format_float(-math.inf) == "-inf"


def test_to_jsonable():
    value = to_jsonable({"a": np.array([0.5, 1.0]), "b": np.int64(3), "c": np.bool_(True),
                         "d": pd.DataFrame({"x": [1.5]}), "e": None})
    assert value == {"a": ["0.5", "1"], "b": 3, "c": True, "d": [{"x": "1.5"}], "e": None}


def _report():
    return RunReport("price", "priced", {"tree": "t.json"},
                     {"price": 4 / 3, "measure": {"u": 0.25, "d": 0.75}},
                     {"residual": 1e-17},
                     tables={"measure": mapping_table({"u": 0.25, "d": 0.75}, "leaf", "probability")})


def test_json_report_is_sorted_and_valid():
    text = ReportWriter("json").render(_report())
    document = json.loads(text)
    assert list(document) == sorted(document)
    assert document["artifacts"]["price"] == "1.3333333333333333"
    assert document["seed"] is None
    jsonschema.validate(document, load_schema("report_schema.json"))
    assert ReportWriter("json").render(_report()) == text


def test_text_report():
    text = ReportWriter("text").render(_report())
    lines = text.splitlines()
    assert lines[:2] == ["verb: price", "verdict: priced"]
    assert "price: 1.333333333" in lines
    assert "[measure]" in lines
    assert "measure:" not in text.replace("[measure]", "")


def test_report_written_to_file(tmp_path, capsys):
    target = tmp_path / "report.json"
    ReportWriter("json").write(_report(), str(target))
    assert capsys.readouterr().out == ""
    assert json.loads(target.read_text())["verb"] == "price"


def test_unknown_format():
    with pytest.raises(ValueError, match="Unknown format"):
        ReportWriter("xml")


def test_schema_rejects_negative_seed():
    report = _report()
    report.seed = -1
    with pytest.raises(jsonschema.ValidationError):
        ReportWriter("json").render(report)


def test_setup_logging_levels():
    assert setup_logging("ftap.test", level="DEBUG").getEffectiveLevel() == 10
    with pytest.raises(ValueError, match="Unknown log level"):
        setup_logging(level="LOUD")
    setup_logging(quiet_mode=True)


def test_quiet_mode_toggle():
    was_quiet = is_quiet_mode()
    try:
        disable_quiet_mode()
        assert not is_quiet_mode()
        enable_quiet_mode()
        assert is_quiet_mode()
    finally:
        (enable_quiet_mode if was_quiet else disable_quiet_mode)()


def test_progress_tracker_status():
    tracker = ProgressTracker()
    tracker.start_operation("fuzz", total_phases=2)
    tracker.start_phase("trees")
    tracker.update_progress(1, 4)
    status = tracker.get_status()
    assert status["current_phase"] == "trees"
    assert status["overall_progress"] == pytest.approx(0.125)
    tracker.complete_phase()
    tracker.report_failure("task 3 failed")
    status = tracker.get_status()
    assert status["completed_phases"] == 1
    assert status["failures"] == 1
    assert tracker.complete_operation() >= 0.0


def test_text_report_prints_each_key_once():
    report = RunReport("check-arbitrage", "emm", {}, {"max_residual": 1e-16, "kind": "emm"},
                       {"max_residual": 1e-16})
    text = ReportWriter("text").render(report)
    assert text.count("max_residual:") == 1
    assert "kind: emm" in text
