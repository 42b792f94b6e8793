import json

import numpy as np
import pytest
import yaml

from covmag import cli
from covmag import io as cio
from covmag.config import PROTOCOLS, ConfigError, dump_config, load_config, parse_config

SMALL = {"shots": 4000, "n_resamples": 50}


def _write(tmp_path, data, name="run.yaml"):
    p = tmp_path / name
    p.write_text(yaml.safe_dump(data))
    return p


# ------------------------------------------------------------ config


@pytest.mark.parametrize("protocol", PROTOCOLS)
def test_config_round_trip(protocol):
    cfg = parse_config({"protocol": protocol, "master_seed": 7})
    assert parse_config(dump_config(cfg)) == cfg
    assert parse_config(json.loads(json.dumps(dump_config(cfg)))) == cfg


def test_unknown_key_names_its_path():
    with pytest.raises(ConfigError, match=r"readout\.alpha2"):
        parse_config({"protocol": "phase-cycle", "readout": {"alpha2": 1.0}})


def test_bad_value_names_its_path():
    with pytest.raises(ConfigError, match="shots"):
        parse_config({"protocol": "phase-cycle", "shots": 1})


def test_sweep_target_must_exist():
    with pytest.raises(ConfigError, match="sweep.parameter"):
        parse_config({"protocol": "bell-covar", "sweep": {"parameter": "signal.nope", "grid": [1]}})


def test_with_value_replaces_one_field():
    cfg = parse_config({"protocol": "bell-covar", "signal": {"kind": "tone", "amp_a": 1.0}})
    new = cfg.with_value("signal.amp_a", 2.0)
    assert new.signal.amp_a == 2.0 and cfg.signal.amp_a == 1.0
    assert new.signal.kind == "tone"


def test_load_json_and_reject_non_mapping(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"protocol": "xy-spectrum"}))
    assert load_config(p).protocol == "xy-spectrum"
    q = tmp_path / "bad.yaml"
    q.write_text("- 1\n- 2\n")
    with pytest.raises(ConfigError, match="mapping"):
        load_config(q)


# ------------------------------------------------------------ io


def test_csv_round_trip(tmp_path):
    text = cio.csv_text(("x", "y", "name"), [(1, 0.1, "a"), (2, 1e-300, "b")])
    cio.write_outputs(tmp_path, {"t.csv": text})
    cols = cio.read_csv(tmp_path / "t.csv")
    assert cols["x"].tolist() == [1, 2]
    assert cols["y"].tolist() == [0.1, 1e-300]
    assert cols["name"].tolist() == ["a", "b"]


def test_atomic_write_leaves_no_partial_file(tmp_path, monkeypatch):
    target = tmp_path / "out.csv"
    target.write_text("old\n")

    def boom(src, dst):
        raise OSError("disk full")

    monkeypatch.setattr(cio.os, "replace", boom)
    with pytest.raises(OSError):
        cio.write_outputs(tmp_path, {"out.csv": "new\n"})
    assert target.read_text() == "old\n"
    assert [p.name for p in tmp_path.iterdir()] == ["out.csv"]


def test_json_handles_numpy():
    text = cio.json_text({"a": np.arange(3), "b": np.float64(0.5)})
    assert json.loads(text) == {"a": [0, 1, 2], "b": 0.5}


# ------------------------------------------------------------ command line


def test_run_writes_summary_and_shots(tmp_path):
    cfg = _write(tmp_path, {"protocol": "phase-cycle", "readout": {"preset": "scc"},
                            "signal": {"kind": "correlated", "chi_C": 1.0}, **SMALL})
    out = tmp_path / "out"
    assert cli.main(["phase-cycle", "--config", str(cfg), "--out-dir", str(out)]) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["config"]["signal"]["chi_C"] == 1.0
    assert parse_config(summary["config"]) == load_config(cfg)
    shots = cio.read_csv(out / "shots.csv")
    assert list(shots) == list(cio.SHOT_COLUMNS)
    assert len(shots["shot"]) == 4 * 4000
    assert set(shots["tag"]) == set("ABCD")


def test_rerun_is_byte_identical_across_threads(tmp_path):
    cfg = _write(tmp_path, {"protocol": "bell-covar", "readout": {"sigma_R": 5.0},
                            "signal": {"kind": "correlated", "chi_C": 0.3}, **SMALL})
    a, b = tmp_path / "a", tmp_path / "b"
    assert cli.main(["bell-covar", "--config", str(cfg), "--out-dir", str(a)]) == 0
    assert cli.main(["bell-covar", "--config", str(cfg), "--out-dir", str(b), "--threads", "2"]) == 0
    for name in ("summary.json", "shots.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_seed_override_changes_output(tmp_path):
    cfg = _write(tmp_path, {"protocol": "bell-covar", "signal": {"kind": "correlated", "chi_C": 0.3},
                            **SMALL})
    a, b = tmp_path / "a", tmp_path / "b"
    cli.main(["bell-covar", "--config", str(cfg), "--out-dir", str(a)])
    cli.main(["bell-covar", "--config", str(cfg), "--out-dir", str(b), "--seed", "5"])
    assert json.loads((b / "summary.json").read_text())["config"]["master_seed"] == 5
    assert (a / "shots.csv").read_bytes() != (b / "shots.csv").read_bytes()


def test_out_dir_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.OUT_DIR_ENV, str(tmp_path / "env"))
    assert cli.main(["xy-spectrum"]) == 0
    cols = cio.read_csv(tmp_path / "env" / "sweep.csv")
    assert list(cols) == ["tau", "n_pulses", "signal", "signal_propagator"]


def test_json_format_embeds_table(tmp_path):
    out = tmp_path / "o"
    assert cli.main(["sensitivity-curve", "--out-dir", str(out), "--format", "json"]) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["table"]["columns"][0] == "T"
    assert not (out / "sweep.csv").exists()
    assert all(c["passed"] for c in summary["checks"])


def test_sweep_writes_one_row_per_point(tmp_path):
    cfg = _write(tmp_path, {"protocol": "bell-covar", "signal": {"kind": "correlated"},
                            "sweep": {"parameter": "signal.chi_C", "grid": [0.0, 0.2, 0.5]}, **SMALL})
    out = tmp_path / "o"
    assert cli.main(["bell-covar", "--config", str(cfg), "--out-dir", str(out)]) == 0
    cols = cio.read_csv(out / "sweep.csv")
    assert cols["signal.chi_C"].tolist() == [0.0, 0.2, 0.5]
    assert set(cio.read_csv(out / "shots.csv")["point"]) == {0, 1, 2}


def test_config_error_exit_code(tmp_path, capsys):
    cfg = _write(tmp_path, {"protocol": "phase-cycle", "bogus": 1})
    assert cli.main(["phase-cycle", "--config", str(cfg), "--out-dir", str(tmp_path / "o")]) == 2
    assert "bogus" in capsys.readouterr().err
    assert not (tmp_path / "o").exists()


def test_protocol_mismatch_exit_code(tmp_path):
    cfg = _write(tmp_path, {"protocol": "phase-cycle"})
    assert cli.main(["bell-covar", "--config", str(cfg), "--out-dir", str(tmp_path / "o")]) == 2


def test_infeasible_budget_exit_code(tmp_path):
    cfg = _write(tmp_path, {"protocol": "sensitivity-curve",
                            "sensitivity": {"T_min": 1e-3, "T_max": 1e-2, "n_points": 3}})
    out = tmp_path / "o"
    # infeasible points become NaN in the curves rather than aborting the run
    assert cli.main(["sensitivity-curve", "--config", str(cfg), "--out-dir", str(out)]) == 0
    cols = cio.read_csv(out / "sweep.csv")
    assert np.all(np.isnan(cols["entangled_conventional"]))


def test_selftest_passes(capsys):
    assert cli.main(["selftest"]) == 0
    assert "FAIL" not in capsys.readouterr().out


@pytest.mark.parametrize("fault", ["gate", "sigma_r"])
def test_selftest_detects_injected_fault(fault, capsys):
    assert cli.main(["selftest", "--fault", fault]) == 1
    assert "FAIL" in capsys.readouterr().out
