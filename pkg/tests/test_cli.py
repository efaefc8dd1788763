import hashlib
import json
import subprocess
import sys

import numpy as np
import pytest
import yaml

from lunarforge.cli import EXIT_CONFIG, EXIT_IO, EXIT_OK, EXIT_PIPELINE, main
from lunarforge.dem import load_dem

SMALL = {
    "master_seed": 5,
    "resolution": 0.2,
    "base": {"kind": "flat", "width": 8.0, "height": 6.0, "elevation": 1.25},
    "tiers": [{"density": 0.02, "radius_range": [0.5, 1.5]}],
    "assets": [{"asset_id": "rock", "process": {"kind": "poisson", "intensity": 0.5}, "footprint": 0.2}],
    "mesh": {"collision_factor": 2},
}
COMMANDS = ["generate", "scatter", "mesh", "annotate", "preview"]


@pytest.fixture
def cfg_path(tmp_path):
    path = tmp_path / "small.yaml"
    path.write_text(yaml.safe_dump(SMALL))
    return path


def digest(directory):
    return {p.name: hashlib.sha256(p.read_bytes()).hexdigest() for p in sorted(directory.iterdir())}


def run_all(cfg, out, *extra):
    for cmd in COMMANDS:
        assert main([cmd, "-c", str(cfg), "-o", str(out), *extra]) == EXIT_OK
    assert main(["mesh", "-c", str(cfg), "-o", str(out), "--format", "ply", *extra]) == EXIT_OK


def test_all_subcommands_write_seeded_artifacts(cfg_path, tmp_path, capsys):
    run_all(cfg_path, tmp_path / "out")
    names = set(digest(tmp_path / "out"))
    assert names == {"terrain_5.f32", "terrain_5.f32.hdr", "craters_5.json", "manifest_5.json",
                     "terrain_5.obj", "collision_5.obj", "terrain_5.ply", "collision_5.ply",
                     "instances_5.u32", "instances_5.u32.hdr", "annotations_5.json", "hillshade_5.png"}


def test_byte_identical_reruns(cfg_path, tmp_path):
    run_all(cfg_path, tmp_path / "a")
    run_all(cfg_path, tmp_path / "b")
    assert digest(tmp_path / "a") == digest(tmp_path / "b")


def test_seed_override(cfg_path, tmp_path):
    assert main(["generate", "-c", str(cfg_path), "-o", str(tmp_path / "a")]) == 0
    assert main(["generate", "-c", str(cfg_path), "-o", str(tmp_path / "b"), "--seed", "5"]) == 0
    assert main(["generate", "-c", str(cfg_path), "-o", str(tmp_path / "c"), "--seed", "6"]) == 0
    a = (tmp_path / "a" / "terrain_5.f32").read_bytes()
    assert (tmp_path / "b" / "terrain_5.f32").read_bytes() == a
    assert (tmp_path / "c" / "terrain_6.f32").read_bytes() != a


def test_generate_zero_density_is_base(tmp_path):
    cfg = {**SMALL, "tiers": [{"density": 0.0, "radius_range": [0.5, 1.0]}]}
    path = tmp_path / "z.yaml"
    path.write_text(yaml.safe_dump(cfg))
    assert main(["generate", "-c", str(path), "-o", str(tmp_path)]) == 0
    dem = load_dem(tmp_path / "terrain_5.f32")
    assert dem.shape == (30, 40) and np.all(dem.elevations == np.float32(1.25))
    craters = json.loads((tmp_path / "craters_5.json").read_text())
    assert craters["craters"] == []


def test_png16_heightmap(cfg_path, tmp_path):
    assert main(["generate", "-c", str(cfg_path), "-o", str(tmp_path), "--format", "png16"]) == 0
    assert load_dem(tmp_path / "terrain_5.png").shape == (30, 40)


def test_bench_reports_every_stage(cfg_path, tmp_path, capsys):
    assert main(["bench", "-c", str(cfg_path), "--cycles", "10", "-o", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    for stage in ("dem", "visual_mesh", "collision_mesh", "scatter", "total"):
        assert stage in out
    report = json.loads((tmp_path / "bench_5.json").read_text())["reports"][0]
    assert report["cycles"] == 10
    assert set(report["stages"]["collision_mesh"]) >= {"mean", "p95"}


def test_bench_craters_only(capsys):
    assert main(["bench", "--craters", "20"]) == 0
    assert "20 stamps" in capsys.readouterr().out


def test_exit_codes(cfg_path, tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text("resolution: -1\nbase: {kind: flat, width: 1, height: 1}\n")
    assert main(["generate", "-c", str(bad), "-o", str(tmp_path)]) == EXIT_CONFIG
    broken = tmp_path / "broken.yaml"
    broken.write_text("resolution: [1,\n")
    assert main(["generate", "-c", str(broken), "-o", str(tmp_path)]) == EXIT_CONFIG
    assert main(["generate", "-c", str(tmp_path / "missing.yaml")]) == EXIT_IO
    budget = tmp_path / "budget.yaml"
    budget.write_text(yaml.safe_dump({**SMALL, "pixel_budget": 10}))
    assert main(["generate", "-c", str(budget), "-o", str(tmp_path)]) == EXIT_PIPELINE
    gone = tmp_path / "gone.yaml"
    gone.write_text(yaml.safe_dump({**SMALL, "base": {"kind": "dem", "path": "nope.f32"}}))
    assert main(["generate", "-c", str(gone), "-o", str(tmp_path)]) == EXIT_IO
    (tmp_path / "file").write_text("x")
    assert main(["generate", "-c", str(cfg_path), "-o", str(tmp_path / "file" / "sub")]) == EXIT_IO
    assert main(["bench"]) == EXIT_CONFIG
    with pytest.raises(SystemExit) as info:
        main(["generate", "-c", str(cfg_path), "--seed", str(2**64)])
    assert info.value.code == EXIT_CONFIG
    err = capsys.readouterr().err
    assert "error" in err


def test_schema_command(capsys):
    assert main(["schema"]) == 0
    schema = json.loads(capsys.readouterr().out)
    assert "master_seed" in schema["properties"]


def test_console_entry_point(cfg_path, tmp_path):
    proc = subprocess.run([sys.executable, "-m", "lunarforge.cli", "preview", "-c", str(cfg_path),
                           "-o", str(tmp_path), "--sun-elevation", "45"], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert (tmp_path / "hillshade_5.png").exists()


def test_shipped_configs_parse(configs_dir):
    from lunarforge.config import load_config

    for path in sorted(configs_dir.glob("*.yaml")):
        load_config(path)
