import csv
import json
import os

import pytest

from app.database.connection import SessionLocal, engine
from app.exceptions import ConfigError, NotFoundError
from app.models import Base
from app.schemas.density import DecayReport, DecayRow
from app.services.runs import (
    CSV_COLUMNS,
    RESULTS_DIR,
    create_run_record,
    diffuse_decay_assertion,
    get_run_by_id,
    get_runs,
    parse_config,
    parse_config_text,
    resolve_config,
    run,
    validate_config,
)
from app.services.scenarios import DYADIC_GRID, get_scenario


@pytest.fixture
def db():
    Base.metadata.create_all(bind=engine)
    session = SessionLocal()
    try:
        yield session
    finally:
        session.close()


def test_config_defaults():
    config = validate_config({"scenario": "atom-leaf"})
    assert (config.seed, config.samples, config.quad_order, config.format) == (42, 65536, 16, "csv")
    assert config.lambda_grid is None and config.workers == 1
    resolved = resolve_config(config, get_scenario("atom-leaf"))
    assert resolved.lambda_grid == DYADIC_GRID
    assert resolved.out == os.path.join(RESULTS_DIR, "atom-leaf-seed42")


@pytest.mark.parametrize("data, message", [
    ({"scenario": "atom-leaf", "samples": 10}, "sample count below minimum"),
    ({"scenario": "atom-leaf", "lamda_grid": [1.0]}, "lamda_grid"),
    ({"scenario": "atom-leaf", "lambda_grid": [1, "2"]}, "lambda_grid.1"),
    ({"scenario": "atom-leaf", "lambda_grid": [0.5]}, "lambda >= 1"),
    ({"scenario": "atom-leaf", "quad_order": 2}, "quadrature order"),
    ({"seed": 1}, "scenario"),
])
def test_config_errors(data, message):
    with pytest.raises(ConfigError) as info:
        validate_config(data)
    assert message in info.value.detail


def test_config_text_errors():
    with pytest.raises(ConfigError) as info:
        parse_config_text('{"scenario": ')
    assert "malformed JSON" in info.value.detail
    with pytest.raises(ConfigError):
        parse_config_text("[1, 2]")


def test_config_file(tmp_path):
    path = tmp_path / "run.json"
    path.write_text(json.dumps({"scenario": "two-atoms", "seed": 7, "lambda_grid": [1.0, 2.0]}))
    config = parse_config(str(path))
    assert config.seed == 7 and config.lambda_grid == [1.0, 2.0]


ALL_SCENARIOS = ["flat-pencil", "atom-leaf", "cantor-pencil", "shear", "nonsmooth-lipschitz", "two-atoms"]
DIFFUSE_SCENARIOS = ["flat-pencil", "cantor-pencil", "shear", "nonsmooth-lipschitz"]


@pytest.mark.parametrize("scenario", ALL_SCENARIOS)
def test_scenario_runs_pass(scenario, small_config):
    outcome = run(validate_config(small_config(scenario)))
    assert outcome.status == 0, outcome.failed
    spec = get_scenario(scenario)
    assert f"expected:{spec.expected}" in [a.name for a in outcome.report.assertions if a.passed]
    assert outcome.report.inequality_fit is not None
    assert outcome.report.far_stratum.max_mass == 0.0
    with open(outcome.csv_path, newline="") as handle:
        rows = list(csv.reader(handle))
    assert rows[0] == CSV_COLUMNS
    assert len(rows) == 9
    assert os.path.exists(outcome.json_path)


def test_json_format_skips_the_csv(small_config):
    outcome = run(validate_config(small_config("atom-leaf", format="json")))
    assert outcome.csv_path is None
    with open(outcome.json_path) as handle:
        report = json.load(handle)
    assert report["exit_status"] == 0
    assert [row["lam"] for row in report["decay"]] == DYADIC_GRID


def test_runs_are_reproducible(small_config):
    config = validate_config(small_config("two-atoms"))
    first = run(config)
    with open(first.json_path, "rb") as handle:
        before = handle.read()
    second = run(config)
    with open(second.json_path, "rb") as handle:
        after = handle.read()
    assert before == after


def test_unknown_scenario_run(small_config):
    with pytest.raises(NotFoundError):
        run(validate_config(small_config("spiral")))


def test_run_ledger(db, small_config):
    outcome = run(validate_config(small_config("atom-leaf", lambda_grid=[1.0, 2.0])), write=False)
    record = create_run_record(db, outcome)
    assert record.id is not None and record.status == 0
    assert [row.lam for row in record.rows] == [1.0, 2.0]
    assert get_run_by_id(db, record.id).scenario == "atom-leaf"
    assert record.id in [r.id for r in get_runs(db, scenario="atom-leaf")]
    with pytest.raises(NotFoundError):
        get_run_by_id(db, 10 ** 9)


@pytest.mark.parametrize("scenario", DIFFUSE_SCENARIOS)
def test_diffuse_mass_decays(scenario, small_config):
    outcome = run(validate_config(small_config(scenario)), write=False)
    rows = outcome.report.decay
    for a, b in zip(rows, rows[1:]):
        assert b.mass_total <= a.mass_total + 3.0 * (a.stderr + b.stderr)
    assert rows[-1].mass_total <= 0.05 * rows[0].mass_total
    assert "diffuse-decay" in [a.name for a in outcome.report.assertions if a.passed]


def _report(masses, lams=DYADIC_GRID):
    rows = [
        DecayRow(lam=lam, mass_total=m, mass_near=m, mass_far=0.0, stderr=0.0, samples=1)
        for lam, m in zip(lams, masses)
    ]
    return DecayReport(lambda_grid=list(lams), rows=rows, compact_radii=[1.0, 1.0], method="rqmc", rho=0.5, seed=0)


def test_diffuse_decay_assertion(flat_pencil, atom_leaf):
    falling = [4.0 ** -k for k in range(8)]
    assert diffuse_decay_assertion(flat_pencil, _report(falling)).passed
    assert not diffuse_decay_assertion(flat_pencil, _report([1.0, 2.0] + falling[2:])).passed
    assert not diffuse_decay_assertion(flat_pencil, _report([1.0, 0.9, 0.8, 0.7, 0.6, 0.5, 0.4, 0.3])).passed
    assert diffuse_decay_assertion(flat_pencil, _report([1.0, 0.5], [1.0, 2.0])).passed
    assert diffuse_decay_assertion(atom_leaf, _report(falling)) is None
