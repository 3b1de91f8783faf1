import json
import math
from pathlib import Path

import numpy as np
import pytest
import yaml

from sinksim.cli import main as cli
from sinksim.cli.config import load_config, parse_config, resolve_gravity
from sinksim.cli.records import TRUNCATION_MARKER, read_csv, write_csv
from sinksim.cli.snapshot import HEADER, load_bed, save_bed
from sinksim.errors import ConfigError, StabilityError
from sinksim.scenario import CSV_COLUMNS, RunRecord, palm_area

ROOT = Path(__file__).resolve().parents[1]
TINY = {
    "schema_version": 1,
    "preset": "desk",
    "sandbox": {"box": [0.05, 0.05, 0.06], "fill_depth": 0.04},
    "load": {"t4": 0.5},
    "repose": {"cylinder_radius": 5.0, "fill_height": 8.0, "lift_speed": 0.05,
               "floor_half_width": 20.0, "post_lift_time": 0.5},
    "seeds": [3],
}


def _write(path, doc):
    path.write_text(yaml.safe_dump(doc))
    return str(path)


@pytest.fixture(scope="module")
def tiny(tmp_path_factory):
    d = tmp_path_factory.mktemp("tiny")
    cfg = _write(d / "tiny.yaml", TINY)
    assert cli.main(["fill", cfg, "--out", str(d / "bed.txt")]) == 0
    return d, cfg


# --- config -------------------------------------------------------------------

@pytest.mark.parametrize("name", ["desk.yaml", "full.yaml"])
def test_shipped_configs_round_trip(name):
    cfg = load_config(ROOT / "configs" / name)
    again = parse_config(yaml.safe_load(cfg.to_yaml()))
    assert again == cfg
    assert again.sandbox_spec() == cfg.sandbox_spec()


def test_desk_config_builds_desk_objects():
    cfg = load_config(ROOT / "configs" / "desk.yaml")
    assert cfg.sandbox_spec().particle_diameter == 4e-3
    assert cfg.gripper_geometry().footprint_diameter == pytest.approx(0.1)
    prof = cfg.load_profile()
    assert prof.peak == pytest.approx(66.0)
    assert prof.mg == pytest.approx(1.5 * 9.81)


def test_moon_config_scales_loads():
    cfg = parse_config({**TINY, "gravity": "moon"})
    prof = cfg.load_profile()
    assert cfg.gravity_value() == 1.62
    assert prof.peak == pytest.approx(66.0 * 1.62 / 9.81)


def test_unknown_key_rejected():
    with pytest.raises(ConfigError, match="colour"):
        parse_config({**TINY, "colour": "red"})
    with pytest.raises(ConfigError, match="load.tfour"):
        parse_config({**TINY, "load": {"tfour": 3}})


def test_schema_version_required():
    doc = dict(TINY)
    del doc["schema_version"]
    with pytest.raises(ConfigError, match="schema_version"):
        parse_config(doc)
    with pytest.raises(ConfigError, match="schema_version"):
        parse_config({**TINY, "schema_version": 2})


def test_gravity_presets():
    assert resolve_gravity("earth") == 9.81
    assert resolve_gravity("moon") == 1.62
    assert resolve_gravity("3.71") == 3.71
    with pytest.raises(ConfigError, match="gravity"):
        resolve_gravity("mars")
    with pytest.raises(ConfigError, match="gravity"):
        resolve_gravity(-1.0)


def test_bad_poisson_ratio_exits_2(tmp_path, capsys):
    bad = {**TINY, "materials": {"toyoura": {
        "density": 2650.0, "poisson_ratio": 0.6, "young_modulus": 5e7, "restitution": 0.3,
        "static_friction": 0.65, "rolling_friction": 0.15}}}
    code = cli.main(["fill", _write(tmp_path / "bad.yaml", bad)])
    assert code == 2
    assert "poisson_ratio" in capsys.readouterr().err


def test_missing_files_exit_2(tmp_path):
    assert cli.main(["fill", str(tmp_path / "nope.yaml")]) == 2
    assert cli.main(["fit", str(tmp_path / "nope.csv"), "--area", "1"]) == 2
    cfg = _write(tmp_path / "c.yaml", TINY)
    assert cli.main(["sink", cfg, "--bed", str(tmp_path / "nope.txt")]) == 2


# --- snapshots ----------------------------------------------------------------

def test_fill_writes_snapshot(tiny):
    d, _ = tiny
    text = (d / "bed.txt").read_text().splitlines()
    meta = json.loads((d / "bed.txt.meta.json").read_text())
    assert text[0] == HEADER
    assert len([ln for ln in text if not ln.startswith("#")]) == meta["summary"]["particles"]
    assert meta["seed"] == 3
    assert "box" in meta["summary"] and "materials" in meta["summary"]


def test_same_seed_gives_identical_snapshot(tiny, tmp_path):
    d, cfg = tiny
    assert cli.main(["fill", cfg, "--out", str(tmp_path / "again.txt")]) == 0
    assert (tmp_path / "again.txt").read_bytes() == (d / "bed.txt").read_bytes()
    assert (tmp_path / "again.txt.meta.json").read_bytes() == \
        (d / "bed.txt.meta.json").read_bytes()


def test_snapshot_round_trip_is_bit_exact(tiny, tmp_path):
    d, _ = tiny
    bed = load_bed(d / "bed.txt")
    save_bed(bed, tmp_path / "copy.txt")
    again = load_bed(tmp_path / "copy.txt")
    for name in ("positions", "velocities", "angular_velocities", "radii", "material_ids",
                 "masses"):
        assert getattr(again.particles, name).tobytes() == getattr(bed.particles, name).tobytes()
    assert again.spec == bed.spec
    assert (tmp_path / "copy.txt").read_bytes() == (d / "bed.txt").read_bytes()


# --- sink ---------------------------------------------------------------------

def test_zero_length_ramp_writes_header_only(tiny, tmp_path):
    d, cfg = tiny
    out = tmp_path / "run.csv"
    assert cli.main(["sink", cfg, "--bed", str(d / "bed.txt"), "--gravity", "moon",
                     "--out", str(out)]) == 0
    assert out.read_text() == ",".join(CSV_COLUMNS) + "\n"
    summary = json.loads((tmp_path / "run.summary.json").read_text())
    assert summary["metadata"]["gravity_m_s2"] == 1.62
    for key in ("final_sinkage_m", "max_abs_sigma_N", "bekker_fit", "clipping_warnings",
                "wall_clock_s"):
        assert key in summary


def test_stability_error_keeps_partial_csv(tiny, tmp_path, monkeypatch):
    d, cfg = tiny

    def fails(*args, **kwargs):
        rec = RunRecord()
        rec.append(0.5, -5.0, (0.0, 0.0, -5.0), 0.1, 0.0, 1e-6, 10, 0)
        rec.append(0.6, -7.0, (0.0, 0.0, -7.0), 0.099, 1e-3, 1e-6, 12, 0)
        exc = StabilityError("non-finite state", step=7, time=0.6, phase="dem")
        exc.record = rec
        raise exc

    monkeypatch.setattr(cli, "pressure_sinkage_run", fails)
    out = tmp_path / "run.csv"
    assert cli.main(["sink", cfg, "--bed", str(d / "bed.txt"), "--out", str(out)]) == 4
    lines = out.read_text().splitlines()
    assert lines[0] == ",".join(CSV_COLUMNS)
    assert len(lines) == 4
    assert lines[-1].startswith(TRUNCATION_MARKER) and "phase=dem" in lines[-1]
    cols = read_csv(out)
    np.testing.assert_array_equal(cols["sinkage_m"], [0.0, 1e-3])
    assert json.loads((tmp_path / "run.summary.json").read_text())["truncated"]


def test_bed_material_mismatch_exits_2(tiny, tmp_path):
    d, _ = tiny
    cfg = _write(tmp_path / "reg.yaml", {**TINY, "material": "regolith"})
    assert cli.main(["sink", cfg, "--bed", str(d / "bed.txt")]) == 2


def test_sweep_writes_run_directories(tiny, tmp_path):
    d, cfg = tiny
    out = tmp_path / "sweep"
    assert cli.main(["sweep", cfg, "--slopes", "0,15,25,35", "--bed", str(d / "bed.txt"),
                     "--out", str(out)]) == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert [r["theta_deg"] for r in manifest["runs"]] == [0, 15, 25, 35]
    dirs = sorted(p for p in out.iterdir() if p.is_dir())
    assert len(dirs) == 4
    for p in dirs:
        assert (p / "run.csv").read_text().startswith("t_s,")
        assert (p / "run.summary.json").is_file()


# --- fit and plot -------------------------------------------------------------

def _synthetic_csv(path, k=1000.0, n=1.1, area=palm_area(0.018), scale=1.0):
    rec = RunRecord()
    for j, z in enumerate(np.linspace(1e-4, 0.02, 60)):
        f = scale * k * z ** n * area
        rec.append(0.5 + 0.01 * j, -f, (0.0, 0.0, -f), 0.1 - z, z, 0.0, 5, 0)
    write_csv(rec, path)
    return str(path)


def test_fit_prints_six_significant_figures(tmp_path, capsys):
    area = palm_area(0.018)
    csv = _synthetic_csv(tmp_path / "syn.csv", area=area)
    assert cli.main(["fit", csv, "--area", repr(area)]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out[0] == "k = 1000"
    assert out[1] == "n = 1.1"
    assert out[2].startswith("residual = ")


def test_fit_error_exits_5(tmp_path):
    rec = RunRecord()
    rec.append(0.5, -5.0, (0.0, 0.0, -5.0), 0.1, 0.0, 0.0, 0, 0)
    write_csv(rec, tmp_path / "short.csv")
    assert cli.main(["fit", str(tmp_path / "short.csv"), "--area", "0.001"]) == 5


def test_fit_without_area_needs_summary(tmp_path):
    csv = _synthetic_csv(tmp_path / "syn.csv")
    assert cli.main(["fit", csv]) == 2
    (tmp_path / "syn.summary.json").write_text(json.dumps({"contact_area_m2": 0.002}))
    assert cli.main(["fit", csv]) == 0


def test_plot_two_series(tmp_path):
    a = _synthetic_csv(tmp_path / "a.csv")
    b = _synthetic_csv(tmp_path / "b.csv", scale=0.8)
    out = tmp_path / "fig.svg"
    assert cli.main(["plot", a, b, "--labels", "earth,moon", "--out", str(out)]) == 0
    svg = out.read_text()
    assert svg.count("<polyline") == 2
    assert 'class="legend"' in svg and ">earth<" in svg and ">moon<" in svg
    assert "Load (N)" in svg and "Sinkage (mm)" in svg


def test_plot_label_count_mismatch(tmp_path):
    a = _synthetic_csv(tmp_path / "a.csv")
    assert cli.main(["plot", a, "--labels", "x,y", "--out", str(tmp_path / "f.svg")]) == 2


@pytest.mark.slow
def test_repose_command(tiny, tmp_path, capsys):
    _, cfg = tiny
    out = tmp_path / "heap.csv"
    assert cli.main(["repose", cfg, "--out", str(out)]) == 0
    assert "angle of repose" in capsys.readouterr().out
    h = np.loadtxt(out, delimiter=",")
    assert h.ndim == 2 and np.all(np.isfinite(h))
    summary = json.loads((tmp_path / "heap.summary.json").read_text())
    assert not math.isnan(summary["angle_deg"])
