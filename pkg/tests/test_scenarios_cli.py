import csv
import json

import jsonschema
import numpy as np
import pytest

from rootflow import cli
from rootflow.scenarios import (
    BUILTINS,
    DEFAULT_TOLERANCES,
    ConfigError,
    ScenarioConfig,
    builtin_config,
    list_scenarios,
    load_config,
    parse_quaternion,
    parse_real,
    run_scenario,
)

CIRCLE_TOML = """
name = "my-circle"
description = "quarter turn"
manifold = "circle"
checks = ["1", "2", "3", "4", "5", "flow-axioms", "extract"]

[target]
kind = "rotation"
alpha = "pi/2"

[source]
kind = "analytic"
depth = 12

[grid]
resolution = 64
seed = 1

[tolerances]
conditions = 1e-12

[extract]
depth = 8
richardson = 2
resolution = 32
"""


def _strip_timing(text):
    data = json.loads(text)
    data.pop("timing")
    return json.dumps(data, sort_keys=True)


def _run_cli(argv, capsys):
    code = cli.main(argv)
    return code, capsys.readouterr()


class TestParsing:
    @pytest.mark.parametrize("text, value", [
        ("pi", np.pi), ("-pi", -np.pi), ("2*pi", 2 * np.pi), ("pi/4", np.pi / 4), ("0.5", 0.5), (3, 3.0),
    ])
    def test_real(self, text, value):
        assert parse_real(text) == pytest.approx(value, rel=1e-15)

    def test_bad_real(self):
        with pytest.raises(ConfigError):
            parse_real("tau")

    def test_quaternion(self):
        assert np.array_equal(parse_quaternion("-j"), [0.0, 0.0, -1.0, 0.0])
        assert np.array_equal(parse_quaternion([1, 0, 0, 0]), [1.0, 0.0, 0.0, 0.0])
        with pytest.raises(ConfigError):
            parse_quaternion("m")


class TestConfig:
    def test_load_toml(self, tmp_path):
        path = tmp_path / "c.toml"
        path.write_text(CIRCLE_TOML)
        config = load_config(path)
        assert config.name == "my-circle" and config.resolution == 64 and config.seed == 1
        assert config.tolerances["flow"] == DEFAULT_TOLERANCES["flow"]

    def test_overrides(self):
        config = builtin_config("circle-antipodal").with_overrides(grid=32, seed=4, depth=10, tol=1e-9)
        assert (config.resolution, config.seed, config.source["depth"]) == (32, 4, 10)
        assert set(config.tolerances.values()) == {1e-9}

    @pytest.mark.parametrize("patch, message", [
        ({"checks": ["6"]}, "unknown checks"),
        ({"tolerances": {"flow": 0.0}}, "positive"),
        ({"tolerances": {"speed": 1.0}}, "unknown tolerance"),
        ({"source": {"kind": "analytic", "depth": 0}}, "depth"),
        ({"source": {"kind": "guess"}}, "root-system source"),
        ({"manifold": "klein-bottle"}, "unknown manifold"),
    ])
    def test_invalid(self, patch, message):
        data = {"name": "x", **BUILTINS["circle-antipodal"], **patch}
        with pytest.raises(ConfigError, match=message):
            ScenarioConfig.from_dict(data)

    def test_missing_key(self):
        with pytest.raises(ConfigError, match="source"):
            ScenarioConfig.from_dict({"name": "x", "manifold": "circle"})

    def test_unknown_builtin(self):
        with pytest.raises(ConfigError):
            builtin_config("no-such-scenario")


class TestRegistry:
    def test_contents(self):
        names = dict(list_scenarios())
        assert len(names) >= 8
        for n in ("circle-antipodal", "s3-antipodal-i", "s3-antipodal-j", "circle-perturbed-rotation",
                  "solved-sqrt-chain", "negative-reflection", "broken-coherency", "group-probe-circle",
                  "group-probe-s3"):
            assert n in names
        assert "expected failure" in names["broken-coherency"]

    def test_every_builtin_parses(self):
        for name, _ in list_scenarios():
            assert builtin_config(name).name == name


class TestRunScenario:
    def test_circle_antipodal(self):
        report = run_scenario(builtin_config("circle-antipodal"))
        assert report.overall_pass
        assert report.entry("extract").residual <= 1e-12
        assert report.environment["seed"] == 0 and report.environment["grid_points"] == 256

    def test_negative_reflection(self):
        report = run_scenario(builtin_config("negative-reflection"))
        assert not report.overall_pass
        assert report.failed_stage == "isotopy"
        assert report.entry("condition-1-isotopy").witness["reason"] == "degree -1"

    def test_stage_subset(self):
        report = run_scenario(builtin_config("circle-antipodal"), ("verify",))
        assert {e.check for e in report.entries} <= {
            "condition-1-isotopy", "condition-2-root", "condition-3-commutativity",
            "condition-4-coherency", "condition-5-convergence", "lemma-commute-power"}

    def test_overall_pass_tracks_entries(self):
        report = run_scenario(builtin_config("broken-coherency"))
        assert report.overall_pass == all(e.passed for e in report.entries) is False

    def test_tight_override_fails(self):
        config = builtin_config("circle-perturbed-rotation").with_overrides(depth=6, tol=1e-14)
        report = run_scenario(config, ("verify",))
        assert not report.overall_pass

    def test_reports_resolved_tolerances(self):
        report = run_scenario(builtin_config("zero-field"))
        for e in report.entries:
            assert e.tolerance >= 0.0


class TestCli:
    def test_list(self, capsys):
        code, out = _run_cli(["list"], capsys)
        assert code == 0
        assert "broken-coherency" in out.out and "expected failure" in out.out

    def test_run_pass(self, tmp_path, capsys):
        code, out = _run_cli(["run", "circle-antipodal", "--out", str(tmp_path)], capsys)
        assert code == 0
        data = json.loads((tmp_path / "circle-antipodal.json").read_text())
        cli.validate_report(data)
        assert data["overall_pass"] is True and data["failed_stage"] is None

    def test_run_fail_exit_code(self, tmp_path, capsys):
        code, _ = _run_cli(["run", "negative-reflection", "--out", str(tmp_path)], capsys)
        assert code == 1
        data = json.loads((tmp_path / "negative-reflection.json").read_text())
        cli.validate_report(data)
        assert data["failed_stage"] == "isotopy"

    def test_verify_writes_suffixed_report(self, tmp_path, capsys):
        code, _ = _run_cli(["verify", "zero-field", "--out", str(tmp_path)], capsys)
        assert code == 0 and (tmp_path / "zero-field-verify.json").exists()

    def test_json_path_flag(self, tmp_path, capsys):
        target = tmp_path / "r.json"
        assert _run_cli(["symmetry", "group-probe-circle", "--json", str(target)], capsys)[0] == 0
        assert json.loads(target.read_text())["overall_pass"]

    def test_out_env(self, tmp_path, capsys, monkeypatch):
        monkeypatch.setenv(cli.OUT_ENV, str(tmp_path))
        _run_cli(["verify", "zero-field"], capsys)
        assert (tmp_path / "zero-field-verify.json").exists()

    def test_toml_config(self, tmp_path, capsys):
        path = tmp_path / "c.toml"
        path.write_text(CIRCLE_TOML)
        code, _ = _run_cli(["run", str(path), "--out", str(tmp_path)], capsys)
        assert code == 0
        assert json.loads((tmp_path / "my-circle.json").read_text())["config"]["grid"]["resolution"] == 64

    def test_config_errors_exit_2(self, tmp_path, capsys):
        assert _run_cli(["run", str(tmp_path / "missing.toml")], capsys)[0] == 2
        bad = tmp_path / "bad.toml"
        bad.write_text('name = "x"\nmanifold = "circle"\n')
        assert _run_cli(["run", str(bad)], capsys)[0] == 2

    def test_extract_requires_extract_check(self, tmp_path, capsys):
        assert _run_cli(["extract", "broken-coherency", "--out", str(tmp_path)], capsys)[0] == 2

    def test_determinism_modulo_timing(self, tmp_path, capsys):
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        _run_cli(["run", "s3-antipodal-i", "--json", str(a)], capsys)
        _run_cli(["run", "s3-antipodal-i", "--json", str(b)], capsys)
        assert _strip_timing(a.read_text()) == _strip_timing(b.read_text())

    def test_report_text_is_canonical(self, tmp_path, capsys):
        target = tmp_path / "r.json"
        _run_cli(["verify", "circle-antipodal", "--json", str(target)], capsys)
        text = target.read_text()
        assert text.endswith("\n")
        assert text == json.dumps(json.loads(text), sort_keys=True, indent=2) + "\n"

    def test_schema_rejects_malformed(self):
        report = run_scenario(builtin_config("zero-field"), ("verify",)).to_dict()
        del report["overall_pass"]
        with pytest.raises(jsonschema.ValidationError):
            cli.validate_report(report)


class TestExports:
    def _rows(self, path):
        rows = list(csv.reader(open(path)))
        return rows[0], np.array(rows[1:], dtype=float)

    def test_circle_field(self, tmp_path, capsys):
        assert _run_cli(["extract", "circle-antipodal", "--out", str(tmp_path)], capsys)[0] == 0
        header, data = self._rows(tmp_path / "circle-antipodal-field.csv")
        assert header == ["theta", "xi"] and data.shape == (256, 2)
        assert np.max(np.abs(data[:, 1] - np.pi)) <= 1e-10

    def test_zero_field(self, tmp_path, capsys):
        _run_cli(["extract", "zero-field", "--out", str(tmp_path)], capsys)
        _, data = self._rows(tmp_path / "zero-field-field.csv")
        assert np.all(data[:, 1] == 0.0)

    def test_sphere_tangency(self, tmp_path, capsys):
        _run_cli(["extract", "s3-antipodal-i", "--out", str(tmp_path)], capsys)
        header, data = self._rows(tmp_path / "s3-antipodal-i-field.csv")
        assert header == ["w", "x", "y", "z", "vw", "vx", "vy", "vz"]
        assert np.max(np.abs(np.sum(data[:, :4] * data[:, 4:], axis=1))) <= 1e-10

    def test_field_export_is_deterministic(self, tmp_path, capsys):
        _run_cli(["extract", "circle-perturbed-rotation", "--out", str(tmp_path / "a"), "--depth", "8"], capsys)
        _run_cli(["extract", "circle-perturbed-rotation", "--out", str(tmp_path / "b"), "--depth", "8"], capsys)
        name = "circle-perturbed-rotation-field.csv"
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_trajectories(self, tmp_path, capsys):
        assert _run_cli(["integrate", "circle-antipodal", "--grid", "4", "--out", str(tmp_path)], capsys)[0] == 0
        header, data = self._rows(tmp_path / "circle-antipodal-trajectories.csv")
        assert header == ["t", "index", "theta"]
        start, end = data[data[:, 0] == 0.0], data[data[:, 0] == 1.0]
        assert np.allclose(np.cos(end[:, 2]), -np.cos(start[:, 2]), atol=1e-12)

    def test_construction_failure_exit_1(self, tmp_path, capsys):
        code, out = _run_cli(["integrate", "negative-reflection", "--out", str(tmp_path)], capsys)
        assert code == 1 and "isotopy" in out.err


def test_shipped_configs_parse():
    from pathlib import Path

    paths = sorted((Path(__file__).parent.parent / "configs").glob("*.toml"))
    assert paths
    for path in paths:
        assert load_config(path).name == path.stem
