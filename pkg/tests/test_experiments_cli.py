import csv
import json

import pytest

from hiphome.cli import EXIT_CONFIG, EXIT_NUMERICAL, EXIT_OK, main
from hiphome.errors import ConfigError
from hiphome.experiments import (
    CSV_HEADER,
    PRESETS,
    ExperimentConfig,
    load_config,
    preset_document,
    run,
)


def small_doc(**changes):
    doc = {
        "preset": "custom",
        "domain": {"length": 2.0, "width": 0.2, "epsilon": 0.2},
        "profile": {"kind": "loglaw", "kappa": 0.41, "d": 0.001},
        "problem": {"diffusion": 1.0, "reaction": 1.0, "forcing": 0.0, "inlet": 1.0, "initial": 0.0},
        "discretisation": {"h": [0.05, 0.025], "m": [1, 2, 3], "n_y": 256, "panels": 32},
        "time": None,
        "families": ["hiphome", "educated"],
        "reference": {"nx": 161, "nz": 17},
        "lattice": {"nx": 81, "nz": 17},
        "output": {"dir": "out", "fields": False},
    }
    doc.update(changes)
    return doc


def write_doc(tmp_path, doc, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return path


def read_csv(path):
    with open(path) as fh:
        return list(csv.reader(fh))


@pytest.mark.parametrize("name", PRESETS)
def test_presets_load_and_round_trip(name):
    cfg = load_config(preset=name)
    assert cfg.preset == name
    assert ExperimentConfig.from_dict(cfg.to_dict()) == cfg
    assert preset_document(name)["preset"] == name


@pytest.mark.parametrize(
    "patch",
    [
        {"bogus": 1},
        {"discretisation": {"h": [], "m": [1]}},
        {"discretisation": {"h": [0.025], "m": []}},
        {"discretisation": {"h": [0.3], "m": [1]}},
        {"discretisation": {"h": [0.025], "m": [0]}},
        {"discretisation": {"h": [0.025, 0.025], "m": [1]}},
        {"discretisation": {"h": [0.025], "m": [1], "n_y": 100}},
        {"families": ["fourier"]},
        {"profile": {"kind": "plug"}},
        {"profile": {"kind": "constant"}},
        {"time": {"theta": 2.0, "dt": 0.1, "t_end": 1.0, "snapshots": []}},
        {"time": {"theta": 1.0, "dt": 0.1, "t_end": 1.0, "snapshots": [2.0]}},
        {"domain": {"length": 2.0, "width": 0.2, "epsilon": 1.5}},
        {"lattice": {"nx": 80, "nz": 17}},
    ],
)
def test_bad_configs_are_rejected(patch):
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict(small_doc(**patch))


def test_cli_config_errors_exit_2(tmp_path, capsys):
    bad = write_doc(tmp_path, small_doc(families=["fourier"]))
    assert main(["run", "--config", str(bad)]) == EXIT_CONFIG
    (tmp_path / "broken.json").write_text("{not json")
    assert main(["run", "--config", str(tmp_path / "broken.json")]) == EXIT_CONFIG
    assert main(["run", "--config", str(tmp_path / "missing.json")]) == EXIT_CONFIG
    with pytest.raises(SystemExit) as info:
        main(["run"])
    assert info.value.code == 2
    with pytest.raises(SystemExit) as info:
        main(["run", "--preset", "nope"])
    assert info.value.code == 2


def test_cli_overrides(tmp_path):
    cfg = load_config(write_doc(tmp_path, small_doc()))
    cfg = cfg.with_overrides(m=[1, 2], h=[0.025], families=["educated"], out=tmp_path / "o", fields=True)
    assert cfg.m == (1, 2) and cfg.h == (0.025,) and cfg.families == ("educated",)
    assert cfg.dump_fields
    patched = load_config(write_doc(tmp_path, {"families": ["hiphome"]}), preset="loglaw-steady")
    assert patched.families == ("hiphome",) and patched.preset == "loglaw-steady"


def test_run_writes_reports(tmp_path, capsys):
    cfg_path = write_doc(tmp_path, small_doc())
    out = tmp_path / "run"
    assert main(["run", "--config", str(cfg_path), "--out", str(out), "--jobs", "1"]) == EXIT_OK
    rows = read_csv(out / "errors.csv")
    assert tuple(rows[0]) == CSV_HEADER
    assert len(rows) == 1 + 2 * 2 * 3
    assert all(r[7] == "" for r in rows[1:])  # wall_ms blank without --timing
    summary = json.loads((out / "summary.json").read_text())
    assert summary["config"]["discretisation"]["m"] == [1, 2, 3]
    assert summary["failures"] == []
    assert {c["check"] for c in summary["invariants"]} >= {"qoi_below_l2"}
    assert summary["modal_rates"] and summary["mesh_rates"]


def test_runs_are_deterministic_across_workers(tmp_path):
    cfg_path = write_doc(tmp_path, small_doc())
    texts = []
    for i, jobs in enumerate(("1", "1", "2")):
        out = tmp_path / f"r{i}"
        assert main(["run", "--config", str(cfg_path), "--out", str(out), "--jobs", jobs]) == EXIT_OK
        texts.append((out / "errors.csv").read_bytes())
    assert texts[0] == texts[1] == texts[2]


def test_timing_and_fields(tmp_path):
    cfg_path = write_doc(tmp_path, small_doc())
    out = tmp_path / "t"
    code = main(["run", "--config", str(cfg_path), "--out", str(out), "--m", "1", "--h", "0.025",
                 "--family", "hiphome", "--timing", "--fields", "--jobs", "1"])
    assert code == EXIT_OK
    rows = read_csv(out / "errors.csv")
    assert len(rows) == 2 and float(rows[1][7]) > 0
    assert (out / "ref.csv").exists()
    assert (out / "field_hiphome_m1_h0.025.csv").exists()


def test_peclet_failure_keeps_partial_results(tmp_path, capsys):
    doc = small_doc(profile={"kind": "poiseuille", "vbar": 10.0})
    doc["discretisation"]["h"] = [0.05, 0.0125]
    out = tmp_path / "p"
    assert main(["run", "--config", str(write_doc(tmp_path, doc)), "--out", str(out), "--jobs", "1"]) == EXIT_NUMERICAL
    rows = read_csv(out / "errors.csv")
    assert len(rows) == 1 + 2 * 3
    assert {r[2] for r in rows[1:]} == {"0.0125"}
    assert "Peclet" in capsys.readouterr().err


def test_reference_peclet_failure_exits_3(tmp_path):
    doc = small_doc(profile={"kind": "poiseuille", "vbar": 10.0}, reference={"nx": 41, "nz": 9})
    assert main(["run", "--config", str(write_doc(tmp_path, doc)), "--out", str(tmp_path / "x")]) == EXIT_NUMERICAL


def test_unsteady_run(tmp_path):
    doc = small_doc(time={"theta": 1.0, "dt": 0.01, "t_end": 0.05, "snapshots": [0.02]})
    doc["discretisation"]["h"] = [0.025]
    report = run(ExperimentConfig.from_dict(doc), jobs=1)
    assert not report.failures
    assert sorted({r.t for r in report.records}) == [0.02, 0.05]
    assert all(r.dt == 0.01 for r in report.records)


def test_dump_basis_on_constant_profile_exits_3(tmp_path, capsys):
    doc = small_doc(profile={"kind": "constant", "vbar": 3.0}, families=["hiphome"])
    out = tmp_path / "b"
    assert main(["dump-basis", "--config", str(write_doc(tmp_path, doc)), "--out", str(out)]) == EXIT_NUMERICAL
    rows = read_csv(out / "basis_hiphome.csv")
    assert rows[0] == ["zhat", "mode_0"]
    assert "degenerate" in capsys.readouterr().err


def test_dump_basis_and_correctors(tmp_path):
    cfg_path = write_doc(tmp_path, small_doc())
    out = tmp_path / "d"
    assert main(["dump-basis", "--config", str(cfg_path), "--out", str(out)]) == EXIT_OK
    assert read_csv(out / "basis_educated.csv")[0] == ["zhat", "mode_0", "mode_1", "mode_2"]
    assert main(["dump-correctors", "--config", str(cfg_path), "--out", str(out)]) == EXIT_OK
    eff = json.loads((out / "effective.json").read_text())
    assert eff["dispersion"] > 0.2 and eff["order"] == 2
    assert (out / "correctors.csv").exists()


def test_selftest_passes(tmp_path, capsys):
    assert main(["selftest", "--out", str(tmp_path)]) == EXIT_OK
    rows = read_csv(tmp_path / "selftest.csv")
    assert rows[0] == ["check", "value", "tolerance", "passed"]
    assert all(r[3] == "1" for r in rows[1:])
