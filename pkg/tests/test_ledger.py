import json

import pytest

from mixlab import cli
from mixlab.core.config import get_settings
from mixlab.core.exceptions import InvalidConfig
from mixlab.services import ledger


@pytest.fixture
def database_url(tmp_path, monkeypatch):
  url = f"sqlite:///{tmp_path / 'runs.db'}"
  monkeypatch.setenv("MIXLAB_DATABASE_URL", url)
  get_settings.cache_clear()
  return url


def test_record_and_list_runs(database_url):
  first = ledger.record_run("verify", 0, config_path="a.json", config_json="{}", output_dir="out")
  second = ledger.record_run("sweep", 2, message="InvalidConfig: bad grid")
  assert first.id < second.id
  assert first.created_date is not None

  runs = ledger.list_runs()
  assert [r.command for r in runs] == ["sweep", "verify"]
  assert runs[0].exit_code == 2 and runs[0].message == "InvalidConfig: bad grid"
  assert runs[1].config_json == "{}"


def test_list_runs_filters_and_limits(database_url):
  for code in range(3):
    ledger.record_run("verify", code)
  ledger.record_run("oracle", 0)
  assert [r.exit_code for r in ledger.list_runs(command="verify")] == [2, 1, 0]
  assert len(ledger.list_runs(limit=2)) == 2


def test_explicit_url_wins(tmp_path):
  url = f"sqlite:///{tmp_path / 'other.db'}"
  assert ledger.record_run("oracle", 0, database_url=url) is not None
  assert len(ledger.list_runs(database_url=url)) == 1


def test_disabled_ledger():
  assert ledger.record_run("verify", 0) is None
  with pytest.raises(InvalidConfig):
    ledger.list_runs()


def test_unwritable_database_is_only_logged(tmp_path, caplog):
  url = f"sqlite:///{tmp_path / 'missing' / 'runs.db'}"
  assert ledger.record_run("verify", 0, database_url=url) is None
  assert "could not record run" in caplog.text


def test_cli_records_each_run(database_url, tmp_path, capsys):
  config = tmp_path / "oracle.json"
  config.write_text(json.dumps({"kind": "fig1a", "params": {"b1": 0.4, "b2": 0.2, "rho": 0.5}}))
  assert cli.main(["oracle", "--config", str(config)]) == 0
  assert cli.main(["oracle", "--config", str(tmp_path / "absent.json")]) == 2
  capsys.readouterr()

  assert cli.main(["history", "--format", "json"]) == 0
  runs = json.loads(capsys.readouterr().out)
  assert [r["exit_code"] for r in runs] == [2, 0]
  assert "config file not found" in runs[0]["message"]
  assert json.loads(runs[1]["config_json"])["kind"] == "fig1a"
  assert runs[1]["output_dir"] is None
