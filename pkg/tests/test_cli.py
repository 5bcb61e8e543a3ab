import json

import pytest
from click.testing import CliRunner

from tube_synopsis.cli import EXIT_OK, EXIT_RUNTIME, EXIT_VALIDATION, cli, run
from tube_synopsis.core.config_manager import ENV_MAPPINGS
from tube_synopsis.core.tube_io import load_curve_csv, load_tube_db
from tube_synopsis.utils.logger import reset_logging
from tube_synopsis.utils.netpbm import frame_name, list_frames

SCENE = """\
width: 120
height: 90
duration: 40
objects:
  - {entry_frame: 3, x: 4, y: 10, vx: 2}
  - {entry_frame: 6, x: 100, y: 60, vx: -2}
  - {entry_frame: 20, x: 50, y: 35, vy: 1}
"""


@pytest.fixture(autouse=True)
def isolated(tmp_path, monkeypatch):
    for name in ENV_MAPPINGS:
        monkeypatch.delenv(name, raising=False)
    monkeypatch.chdir(tmp_path)
    yield
    reset_logging()


@pytest.fixture
def invoke(capsys):
    def _invoke(*argv):
        code = run([str(a) for a in argv])
        lines = capsys.readouterr().out.strip().splitlines()
        return code, json.loads(lines[-1])

    return _invoke


@pytest.fixture
def scene(tmp_path, invoke):
    spec = tmp_path / "scene.yaml"
    spec.write_text(SCENE, encoding="utf-8")
    code, payload = invoke("synth", spec, "-o", tmp_path / "tubes.json", "--frames-dir", tmp_path / "frames")
    assert code == EXIT_OK
    return tmp_path / "tubes.json", tmp_path / "frames"


def test_synth(scene, invoke):
    tubes, frames = scene
    db = load_tube_db(tubes)
    assert len(db) == 3
    assert len(list_frames(frames)) == 40


def test_track_recovers_synthetic_objects(scene, invoke, tmp_path):
    _, frames = scene
    code, payload = invoke("track", frames, "-o", tmp_path / "tracked.json")
    assert code == EXIT_OK
    assert payload["tubes"] == 3
    assert load_tube_db(tmp_path / "tracked.json").original_span() == 37


def test_group_with_override(scene, invoke):
    tubes, _ = scene
    code, payload = invoke("group", tubes)
    assert payload["count"] == 3
    code, payload = invoke("--set", "synopsis.beta=100", "group", tubes)
    assert code == EXIT_OK
    assert payload["groups"] == [[0, 1, 2]]


def test_schedule_then_energy(scene, invoke, tmp_path):
    tubes, _ = scene
    schedule_path = tmp_path / "schedule.json"
    code, scheduled = invoke("schedule", tubes, "--beta", 4, "-o", schedule_path)
    assert code == EXIT_OK
    assert scheduled["length"] <= scheduled["original_span"]
    assert scheduled["max_cross_group_overlap"] == 0.0
    assert set(scheduled["quality"]) == {"continuity", "chronology", "compression"}

    code, energy = invoke("energy", tubes, schedule_path)
    assert code == EXIT_OK
    assert energy["energy"]["total"] == pytest.approx(scheduled["energy"]["total"])
    assert energy["energy"] == pytest.approx(energy["stored_energy"])
    assert energy["length"] == scheduled["length"]


def test_beta_sweep_reaches_the_original(scene, invoke, tmp_path):
    tubes, _ = scene
    curve = tmp_path / "curve.csv"
    code, payload = invoke("sweep", tubes, "--axis", "beta", "--values", "0,5,100", "-o", curve)
    assert code == EXIT_OK
    last = payload["points"][-1]
    assert last["energy"] == 0.0
    assert last["length"] == payload["original_span"]
    assert [row[0] for row in load_curve_csv(curve)] == [0.0, 5.0, 100.0]


def test_sweep_auto(scene, invoke):
    tubes, _ = scene
    code, payload = invoke("sweep", tubes, "--axis", "alpha", "--auto", 4)
    assert code == EXIT_OK
    assert len(payload["points"]) == 4


def test_sweep_needs_exactly_one_value_source(scene, invoke):
    tubes, _ = scene
    code, payload = invoke("sweep", tubes, "--axis", "beta", "--values", "1", "--auto", 3)
    assert code == EXIT_VALIDATION
    assert payload["status"] == "error"
    assert payload["kind"] == "usage"


def test_unsorted_sweep_values(scene, invoke):
    tubes, _ = scene
    code, payload = invoke("sweep", tubes, "--axis", "beta", "--values", "5 1")
    assert code == EXIT_VALIDATION
    assert payload["kind"] == "ValidationError"


def test_render_boxes(scene, invoke, tmp_path):
    tubes, frames = scene
    schedule_path = tmp_path / "schedule.json"
    _, scheduled = invoke("schedule", tubes, "-o", schedule_path)
    code, payload = invoke("render", tubes, schedule_path, "--frames-dir", frames, "-o", tmp_path / "out")
    assert code == EXIT_OK
    assert payload["frames"] == scheduled["length"]
    assert len(list((tmp_path / "out").glob("frame_*.ppm"))) == scheduled["length"]


def test_render_stitch_with_missing_source_frame(scene, invoke, tmp_path):
    tubes, frames = scene
    schedule_path = tmp_path / "schedule.json"
    invoke("schedule", tubes, "-o", schedule_path)
    (frames / frame_name(25)).unlink()
    code, payload = invoke("render", tubes, schedule_path, "--mode", "stitch", "--frames-dir", frames, "-o", tmp_path / "out")
    assert code == EXIT_RUNTIME
    assert payload["kind"] == "SourceFrameMissingError"


def test_render_stitch_with_solver_flags(scene, invoke, tmp_path):
    tubes, frames = scene
    schedule_path = tmp_path / "schedule.json"
    _, scheduled = invoke("schedule", tubes, "-o", schedule_path)
    code, payload = invoke(
        "render", tubes, schedule_path,
        "--mode", "stitch", "--frames-dir", frames,
        "--solver-method", "direct", "--max-iters", 50, "--tolerance", 1e-4,
        "-o", tmp_path / "out",
    )
    assert code == EXIT_OK
    assert payload["frames"] == scheduled["length"]


@pytest.mark.parametrize("flag, value", [("--tolerance", -1), ("--max-iters", 0)])
def test_render_rejects_invalid_solver_settings(scene, invoke, tmp_path, flag, value):
    tubes, _ = scene
    schedule_path = tmp_path / "schedule.json"
    invoke("schedule", tubes, "-o", schedule_path)
    code, payload = invoke("render", tubes, schedule_path, flag, value, "-o", tmp_path / "out")
    assert code == EXIT_VALIDATION
    assert payload["kind"] == "ValidationError"
    assert "solver" in payload["error"]
    assert not (tmp_path / "out").exists()


def test_track_with_noise_flags(scene, invoke, tmp_path):
    _, frames = scene
    code, payload = invoke(
        "track", frames, "-o", tmp_path / "tracked.json",
        "--process-noise", 0.05, "--measurement-noise", 2, "--stddev-floor", 3,
    )
    assert code == EXIT_OK
    assert payload["tubes"] == 3


def test_track_rejects_invalid_noise(scene, invoke, tmp_path):
    _, frames = scene
    code, payload = invoke("track", frames, "-o", tmp_path / "tracked.json", "--measurement-noise", 0)
    assert code == EXIT_VALIDATION
    assert "tracker" in payload["error"]


def test_help_documents_settings():
    render_help = " ".join(CliRunner().invoke(cli, ["render", "--help"]).output.split())
    assert "--solver-method" in render_help
    assert "default 10000" in render_help
    schedule_help = " ".join(CliRunner().invoke(cli, ["schedule", "--help"]).output.split())
    assert "exact for two groups" in schedule_help
    track_help = " ".join(CliRunner().invoke(cli, ["track", "--help"]).output.split())
    assert "--process-noise" in track_help
    assert "default 0.01" in track_help


def test_override_of_unknown_section(scene, invoke):
    tubes, _ = scene
    code, payload = invoke("--set", "network.timeout=3", "group", tubes)
    assert code == EXIT_VALIDATION
    assert "unknown configuration section" in payload["error"]


def test_stale_schedule(scene, invoke, tmp_path):
    tubes, _ = scene
    schedule_path = tmp_path / "schedule.json"
    invoke("schedule", tubes, "-o", schedule_path)
    other = tmp_path / "other.yaml"
    other.write_text(SCENE.replace("vx: 2}", "vx: 3}"), encoding="utf-8")
    invoke("synth", other, "-o", tmp_path / "other.json")
    code, payload = invoke("energy", tmp_path / "other.json", schedule_path)
    assert code == EXIT_VALIDATION
    assert payload["kind"] == "StaleReferenceError"


def test_missing_input_file(invoke, tmp_path):
    code, payload = invoke("group", tmp_path / "absent.json")
    assert code == EXIT_VALIDATION
    assert payload["kind"] == "usage"


def test_invalid_tube_database(invoke, tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{"scene": {"width": 10, "height": 10}, "tubes": [{"id": 1, "boxes": []}]}', encoding="utf-8")
    code, payload = invoke("group", path)
    assert code == EXIT_VALIDATION
    assert "tube 1" in payload["error"]


def test_init(invoke, tmp_path):
    code, payload = invoke("init", "--template", "minimal", "--directory", tmp_path / "project")
    assert code == EXIT_OK
    assert (tmp_path / "project" / "tube_synopsis_config.yaml").exists()


def test_help_exits_cleanly():
    assert run(["--help"]) == EXIT_OK


def test_plugins_command():
    result = CliRunner().invoke(cli, ["plugins"])
    assert result.exit_code == 0
    assert '"command": "plugins"' in result.output
    assert "continuity" in result.output
