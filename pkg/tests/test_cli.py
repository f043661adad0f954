import json

import pytest

from app.cli import main


def test_scenario_list(capsys):
    assert main(["scenario", "list"]) == 0
    listed = json.loads(capsys.readouterr().out)
    assert len(listed) == 6


def test_scenario_show_unknown(capsys):
    assert main(["scenario", "show", "spiral"]) == 1
    assert "not found" in capsys.readouterr().err


def test_run_from_flags(tmp_path, capsys):
    out = tmp_path / "leaf"
    code = main(["run", "--scenario", "atom-leaf", "--samples", "256", "--order", "8", "--out", str(out)])
    assert code == 0
    printed = capsys.readouterr().out
    assert "ok     stokes" in printed
    assert (tmp_path / "leaf.csv").exists() and (tmp_path / "leaf.json").exists()


def test_run_flags_override_the_config_file(tmp_path, capsys):
    config = tmp_path / "run.json"
    config.write_text(json.dumps({"scenario": "two-atoms", "samples": 256, "quad_order": 8, "format": "csv"}))
    out = tmp_path / "override"
    code = main(["run", "--config", str(config), "--format", "json", "--lambda", "1,2", "--out", str(out)])
    assert code == 0
    assert not (tmp_path / "override.csv").exists()
    report = json.loads((tmp_path / "override.json").read_text())
    assert report["config"]["lambda_grid"] == [1.0, 2.0]


def test_run_config_errors(tmp_path, capsys):
    assert main(["run"]) == 1
    assert "scenario is required" in capsys.readouterr().err
    config = tmp_path / "bad.json"
    config.write_text(json.dumps({"scenario": "atom-leaf", "samples": 10}))
    assert main(["run", "--config", str(config)]) == 1
    assert "sample count below minimum" in capsys.readouterr().err
    assert main(["run", "--config", str(tmp_path / "missing.json")]) == 1
    assert "I/O error" in capsys.readouterr().err


def test_hirzebruch_probe(capsys):
    assert main(["cohomology", "hirzebruch", "--n", "2", "--probe", "1,1"]) == 0
    assert json.loads(capsys.readouterr().out)["status"] == "rejected"
    assert main(["cohomology", "hirzebruch", "--n", "2", "--probe", "1"]) == 1


def test_bad_number_list_is_a_usage_error():
    with pytest.raises(SystemExit):
        main(["cohomology", "hirzebruch", "--n", "2", "--probe", "one,two"])


@pytest.mark.parametrize("matrix", [
    [[1.0, 0.0], [0.0, 0.0]],
    [[[1.0, 0.0], [0.0, 0.0]], [[0.0, 0.0], [0.0, 0.0]]],
    {"matrix": [[[1.0, 0.0], [0.0, 0.0]], [[0.0, 0.0], [0.0, 0.0]]]},
])
def test_torus_matrix_file(matrix, tmp_path, capsys):
    path = tmp_path / "h.json"
    path.write_text(json.dumps(matrix))
    assert main(["cohomology", "torus", "--matrix", str(path)]) == 0
    certificate = json.loads(capsys.readouterr().out)
    assert certificate["positive"] and certificate["rank1"]["success"]


def test_projective_and_kahler(capsys):
    assert main(["cohomology", "pn", "--n", "3", "--q", "1"]) == 0
    assert json.loads(capsys.readouterr().out)["verdict"] == "no-obstruction"
    assert main(["cohomology", "kahler", "--n", "4", "--q", "2", "--h-pp", "1"]) == 0
    assert json.loads(capsys.readouterr().out)["verdict"] == "contradiction"
    assert main(["cohomology", "pn", "--n", "3", "--q", "3"]) == 1
    assert main(["cohomology", "kahler", "--n", "2", "--q", "1", "--h-pp", "1", "--mass", "-1"]) == 1
    assert "positive mass" in capsys.readouterr().err


def test_ahlfors_command(capsys):
    assert main(["ahlfors", "--v", "1,0", "--radii", "1,10"]) == 0
    rows = json.loads(capsys.readouterr().out)
    assert rows[1]["ratio"] == pytest.approx(0.2, abs=1e-6)


def test_lelong_command(capsys):
    assert main(["lelong", "--scenario", "atom-leaf", "--order", "8"]) == 0
    assert json.loads(capsys.readouterr().out)["estimate"] == pytest.approx(1.0)


def test_decay_command(capsys):
    assert main(["decay", "--scenario", "atom-leaf", "--lambda", "1,4", "--order", "8"]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["method"] == "exact"
    assert [row["mass_total"] for row in report["rows"]] == pytest.approx([4.934802200544679] * 2, rel=1e-9)


def test_recorded_cli_run(tmp_path, monkeypatch, capsys):
    from app.database import ledger_session
    from app.services import get_runs

    monkeypatch.setenv("LAB_RECORD_RUNS", "true")
    out = tmp_path / "recorded"
    code = main(["run", "--scenario", "two-atoms", "--samples", "256", "--order", "8", "--out", str(out)])
    assert code == 0
    with ledger_session() as db:
        assert str(out) + ".json" in [r.json_path for r in get_runs(db, scenario="two-atoms", limit=1000)]
