import csv
import json

import pytest

from urban_sim.errors import OutputError
from urban_sim.runner import SUMMARY_FILENAME, TRACE_FILENAME, ensure_output_dir, run_scenario
from urban_sim.trace import TRACE_COLUMNS


def test_run_writes_trace_and_summary(tmp_path, load_scenario):
    cfg = load_scenario("line5", duration_s=4.0)
    result = run_scenario(cfg, tmp_path / "out")

    assert result.success
    assert result.summary_path == tmp_path / "out" / SUMMARY_FILENAME
    document = json.loads(result.summary_path.read_text())
    assert set(document) == {"metrics", "config"}
    assert document["config"]["seed"] == 7
    assert document["metrics"]["generated"] == result.summary.generated

    with open(result.trace_path, newline="") as f:
        rows = list(csv.reader(f))
    assert rows[0] == TRACE_COLUMNS
    assert len(rows) > 1
    assert not list((tmp_path / "out").glob("*.tmp"))


def test_trace_off_skips_the_trace_file(tmp_path, load_scenario):
    result = run_scenario(load_scenario("line5", duration_s=3.0), tmp_path, trace=False)
    assert result.success
    assert result.trace_path is None
    assert not (tmp_path / TRACE_FILENAME).exists()
    assert (tmp_path / SUMMARY_FILENAME).exists()


def test_unwritable_output_gives_exit_3_and_no_summary(tmp_path, load_scenario):
    blocker = tmp_path / "blocker"
    blocker.write_text("a file, not a directory")
    result = run_scenario(load_scenario("line5"), blocker / "out")

    assert result.exit_code == 3
    assert result.summary is None
    assert not (blocker.parent / SUMMARY_FILENAME).exists()


def test_write_failure_aborts_the_trace(tmp_path, load_scenario, mocker):
    mocker.patch("urban_sim.runner._atomic_write_text", side_effect=OSError("disk full"))
    result = run_scenario(load_scenario("line5", duration_s=3.0), tmp_path)

    assert result.exit_code == 3
    assert "disk full" in result.message
    assert not (tmp_path / SUMMARY_FILENAME).exists()


def test_ensure_output_dir_raises_output_error(tmp_path):
    blocker = tmp_path / "blocker"
    blocker.write_text("x")
    with pytest.raises(OutputError) as excinfo:
        ensure_output_dir(blocker / "out")
    assert excinfo.value.exit_code == 3
    assert "not writable" in str(excinfo.value)
