import hashlib
import json
import subprocess
import sys

import numpy as np
import pytest

from roomverb.audio import read_wav, write_wav
from roomverb.cli import main
from roomverb.config import Settings
from roomverb.context import AcousticParameterVector, ParameterGrid, SceneType, load_param_table
from roomverb.pipeline import DecayModelSynthesizer
from roomverb.scenes import load_scene

FS = 48000


def digest(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


def run_cli(*args):
    return main([str(a) for a in args])


def test_synth_rir_and_modes(tmp_path, scene_file):
    for mode in ("full", "non_adaptive", "geo_only", "mat_only", "ae_only"):
        out = tmp_path / f"{mode}.wav"
        assert run_cli("synth-rir", scene_file, "--mode", mode, "--out", out) == 0
        x, rate = read_wav(out)
        assert rate == FS and x.shape == (1, 2 * FS)


def test_errors_are_one_line(tmp_path, scene_file, capsys):
    assert run_cli("synth-rir", tmp_path / "nope.json", "--out", tmp_path / "a.wav") == 1
    err = capsys.readouterr().err.strip()
    assert err.startswith("ParseError: ") and "\n" not in err
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"format_version": 1, "room": {"dimensions": [3, 3, 3]},
                               "listener": {"position": [1, 1, 1]}, "sources": []}))
    assert run_cli("synth-rir", bad, "--out", tmp_path / "a.wav") == 1
    assert capsys.readouterr().err.startswith("InvalidScene: ")
    write_wav(tmp_path / "x44.wav", np.zeros(100), 44100)
    assert run_cli("render", "--scene", scene_file, tmp_path / "x44.wav", "--out", tmp_path / "o.wav") == 1
    assert capsys.readouterr().err.startswith("RateMismatch: ")


def test_render_impulse_gives_rir(tmp_path, scene_file):
    rir = tmp_path / "rir.wav"
    run_cli("synth-rir", scene_file, "--out", rir)
    imp = np.zeros(FS // 10)
    imp[0] = 1.0
    write_wav(tmp_path / "imp.wav", imp, FS)
    assert run_cli("render", "--rir", rir, tmp_path / "imp.wav", "--out", tmp_path / "o.wav") == 0
    y, _ = read_wav(tmp_path / "o.wav")
    h, _ = read_wav(rir)
    np.testing.assert_allclose(y[0, : h.shape[1]], h[0], atol=1e-6)
    assert run_cli("render", "--scene", scene_file, tmp_path / "imp.wav", "--out", tmp_path / "o2.wav") == 0
    y2, _ = read_wav(tmp_path / "o2.wav")
    np.testing.assert_allclose(y2[0, : h.shape[1]], h[0], atol=1e-6)


def test_render_zero_length(tmp_path, scene_file):
    write_wav(tmp_path / "empty.wav", np.zeros(0), FS)
    assert run_cli("render", "--scene", scene_file, tmp_path / "empty.wav", "--out", tmp_path / "o.wav") == 0
    y, _ = read_wav(tmp_path / "o.wav")
    assert y.shape[1] == 0


def test_render_superposition(tmp_path, scene_dict):
    scene_dict["sources"].append({"id": "radio", "position": [1.0, 4.0, 0.8]})
    both = tmp_path / "both.json"
    both.write_text(json.dumps(scene_dict))
    rng = np.random.default_rng(0)
    x1, x2 = 0.3 * rng.standard_normal(FS // 4), 0.3 * rng.standard_normal(FS // 4)
    zero = np.zeros_like(x1)
    for name, sig in (("x1", x1), ("x2", x2), ("z", zero)):
        write_wav(tmp_path / f"{name}.wav", sig, FS)
    run_cli("render", "--scene", both, tmp_path / "x1.wav", tmp_path / "x2.wav", "--out", tmp_path / "y.wav")
    run_cli("render", "--scene", both, tmp_path / "x1.wav", tmp_path / "z.wav", "--out", tmp_path / "y1.wav")
    run_cli("render", "--scene", both, tmp_path / "z.wav", tmp_path / "x2.wav", "--out", tmp_path / "y2.wav")
    y, y1, y2 = (read_wav(tmp_path / f"{n}.wav")[0] for n in ("y", "y1", "y2"))
    np.testing.assert_allclose(y, y1 + y2, atol=1e-6)


def test_eval_identical_and_missing(tmp_path, scene_file, capsys):
    d1, d2 = tmp_path / "est", tmp_path / "gt"
    d1.mkdir()
    d2.mkdir()
    run_cli("synth-rir", scene_file, "--out", d1 / "lounge.wav")
    run_cli("synth-rir", scene_file, "--out", d2 / "lounge.wav")
    assert run_cli("eval", d1, d2, "--out", tmp_path / "r.tsv") == 0
    text = (tmp_path / "r.tsv").read_text()
    assert "RT60\tall\t0.000000\t0.000000" in text
    run_cli("synth-rir", scene_file, "--out", d2 / "other.wav")
    assert run_cli("eval", d1, d2) == 1
    assert capsys.readouterr().err.startswith("MissingPair: ")


def write_dataset(tmp_path, scene_dict, point, types):
    scene = load_scene(json.dumps(scene_dict))
    rt = DecayModelSynthesizer(Settings())(scene, point)
    entries = [{"scene": dict(scene_dict, scene_type=t.value), "rt60": rt.tolist()} for t in types]
    path = tmp_path / "cal.json"
    path.write_text(json.dumps({"format_version": 1, "entries": entries}))
    return path


def test_calibrate_single_point_grid(tmp_path, scene_dict):
    data = write_dataset(tmp_path, scene_dict, AcousticParameterVector(0.1, 1.0, 0.0, 0.6), list(SceneType))
    grid = tmp_path / "grid.json"
    grid.write_text(json.dumps({"format_version": 1, "reverb_gain": [0.05], "rt_modulator": [0.7],
                                "reverb_brightness": [0.2], "reflection_gain": [0.4]}))
    assert run_cli("calibrate", data, "--grid", grid, "--out", tmp_path / "t.csv") == 0
    table = load_param_table(tmp_path / "t.csv")
    assert set(table.values()) == {AcousticParameterVector(0.05, 0.7, 0.2, 0.4)}


def test_calibrate_planted_subset(tmp_path, scene_dict, capsys):
    point = AcousticParameterVector(0.2, 0.8, -0.2, 0.6)
    data = write_dataset(tmp_path, scene_dict, point, [SceneType.BEDROOM])
    grid = tmp_path / "grid.json"
    grid.write_text(json.dumps({"format_version": 1, "reverb_gain": [0.1, 0.2, 0.3], "rt_modulator": [0.8, 1.0],
                                "reverb_brightness": [-0.2, 0.0, 0.2], "reflection_gain": [0.4, 0.6]}))
    assert run_cli("calibrate", data, "--grid", grid, "--scene-types", "bedroom", "--out", tmp_path / "t.csv") == 0
    assert load_param_table(tmp_path / "t.csv")[SceneType.BEDROOM] == point
    assert "bedroom\tMAE\t0.000000" in capsys.readouterr().err
    assert run_cli("calibrate", data, "--grid", grid, "--scene-types", "bedroom,outdoor",
                   "--out", tmp_path / "t2.csv") == 1
    assert "EmptyDataset" in capsys.readouterr().err


def test_every_command_is_byte_reproducible(tmp_path, scene_file, scene_dict):
    write_wav(tmp_path / "in.wav", 0.2 * np.random.default_rng(1).standard_normal(FS // 4), FS)
    stream = tmp_path / "stream.json"
    stream.write_text(json.dumps({"format_version": 1, "scene_type": "bedroom",
                                  "listener": {"position": [2, 2, 1.6]},
                                  "sources": [{"id": "a", "position": [4, 3, 1.5]}],
                                  "records": [{"t": 0.0, "kind": "materials", "observations": [
                                      {"face_id": "z_min", "material": "carpet", "pixel_fraction": 1.0}]}]}))
    data = write_dataset(tmp_path, scene_dict, AcousticParameterVector(0.1, 1.0, 0.0, 0.6), [SceneType.OTHER])
    grid = tmp_path / "grid.json"
    grid.write_text(json.dumps({"format_version": 1, "reverb_gain": [0.1], "rt_modulator": [1.0, 1.1],
                                "reverb_brightness": [0.0], "reflection_gain": [0.6]}))
    (tmp_path / "est").mkdir()
    run_cli("synth-rir", scene_file, "--seed", 3, "--out", tmp_path / "est" / "lounge.wav")
    digests = []
    for k in range(2):
        o = tmp_path / f"run{k}"
        o.mkdir()
        assert run_cli("synth-rir", scene_file, "--seed", 3, "--out", o / "rir.wav") == 0
        assert run_cli("render", "--scene", scene_file, tmp_path / "in.wav", "--out", o / "r.wav") == 0
        assert run_cli("replay", stream, tmp_path / "in.wav", "--out", o / "p.wav", "--log", o / "p.tsv") == 0
        assert run_cli("eval", tmp_path / "est", tmp_path / "est", "--out", o / "e.tsv") == 0
        assert run_cli("calibrate", data, "--grid", grid, "--scene-types", "other", "--out", o / "c.csv") == 0
        digests.append([digest(o / n) for n in ("rir.wav", "r.wav", "p.wav", "p.tsv", "e.tsv", "c.csv")])
    assert digests[0] == digests[1]


def test_console_script_help():
    res = subprocess.run([sys.executable, "-m", "roomverb.cli", "--help"], capture_output=True, text=True)
    assert res.returncode == 0
    for verb in ("synth-rir", "render", "replay", "eval", "calibrate"):
        assert verb in res.stdout
